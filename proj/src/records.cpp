#include "e2p/records.hpp"

#include <fstream>

#include <json.hpp>

#include "e2p/errors.hpp"

namespace e2p {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxPersonaChars = 1000;

json parse_line(const std::string& line, const std::string& path, std::size_t lineno) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": malformed JSON line (" +
                        e.what() + ")");
    }
}

std::vector<double> read_uservector(const json& obj, const std::string& path, std::size_t lineno) {
    if (!obj.contains("uservector"))
        throw DataError(path + ":" + std::to_string(lineno) + ": missing field \"uservector\"");
    const auto& uv = obj.at("uservector");
    if (!uv.is_array())
        throw DataError(path + ":" + std::to_string(lineno) + ": \"uservector\" must be an array");
    std::vector<double> out;
    out.reserve(uv.size());
    for (const auto& v : uv) {
        if (!v.is_number())
            throw DataError(path + ":" + std::to_string(lineno) +
                            ": \"uservector\" entries must be numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

void check_dim(std::size_t got, std::size_t want, const std::string& path, std::size_t lineno) {
    if (want != 0 && got != want)
        throw DataError(path + ":" + std::to_string(lineno) + ": uservector length " +
                        std::to_string(got) + " differs from earlier length " +
                        std::to_string(want));
}

std::string require_string(const json& obj, const char* field, const std::string& path,
                           std::size_t lineno) {
    if (!obj.contains(field))
        throw DataError(path + ":" + std::to_string(lineno) + ": missing field \"" +
                        std::string(field) + "\"");
    if (!obj.at(field).is_string())
        throw DataError(path + ":" + std::to_string(lineno) + ": field \"" + std::string(field) +
                        "\" must be a string");
    return obj.at(field).get<std::string>();
}

// The system turn carries the persona; cap it at 1000 characters the way the
// upstream export does.
std::string truncate_persona(std::string text) {
    static const std::string open = "<|system|>\n";
    static const std::string close = "\n<|eot_id|>";
    const std::size_t a = text.find(open);
    if (a == std::string::npos) return text;
    const std::size_t start = a + open.size();
    const std::size_t b = text.find(close, start);
    if (b == std::string::npos) return text;
    const std::size_t len = b - start;
    if (len <= kMaxPersonaChars) return text;
    return text.substr(0, start + kMaxPersonaChars) + text.substr(b);
}

template <typename RecordT, typename ParseFn>
std::vector<RecordT> load_jsonl(const std::string& path, ParseFn parse) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<RecordT> out;
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        RecordT rec = parse(parse_line(line, path, lineno), lineno);
        check_dim(rec.uservector.size(), dim, path, lineno);
        dim = rec.uservector.size();
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace

std::vector<LMRecord> load_lm_jsonl(const std::string& path) {
    return load_jsonl<LMRecord>(path, [&path](const json& obj, std::size_t lineno) {
        LMRecord rec;
        rec.uservector = read_uservector(obj, path, lineno);
        rec.text = truncate_persona(require_string(obj, "text", path, lineno));
        if (rec.text.empty())
            throw DataError(path + ":" + std::to_string(lineno) + ": empty \"text\"");
        return rec;
    });
}

std::vector<PrefRecord> load_pref_jsonl(const std::string& path) {
    return load_jsonl<PrefRecord>(path, [&path](const json& obj, std::size_t lineno) {
        PrefRecord rec;
        rec.uservector = read_uservector(obj, path, lineno);
        rec.prompt = require_string(obj, "prompt", path, lineno);
        rec.completion = require_string(obj, "completion", path, lineno);
        if (rec.completion.empty())
            throw DataError(path + ":" + std::to_string(lineno) + ": empty \"completion\"");
        if (!obj.contains("label"))
            throw DataError(path + ":" + std::to_string(lineno) + ": missing field \"label\"");
        const auto& lab = obj.at("label");
        if (!lab.is_number_integer() || (lab.get<int>() != 0 && lab.get<int>() != 1))
            throw DataError(path + ":" + std::to_string(lineno) + ": \"label\" must be 0 or 1");
        rec.label = lab.get<int>();
        return rec;
    });
}

namespace {

json uservector_json(const std::vector<double>& uv) {
    json arr = json::array();
    for (double v : uv) arr.push_back(v);
    return arr;
}

} // namespace

void save_lm_jsonl(const std::string& path, const std::vector<LMRecord>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& rec : records) {
        json obj;
        obj["uservector"] = uservector_json(rec.uservector);
        obj["text"] = rec.text;
        out << obj.dump() << "\n";
    }
}

void save_pref_jsonl(const std::string& path, const std::vector<PrefRecord>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& rec : records) {
        json obj;
        obj["uservector"] = uservector_json(rec.uservector);
        obj["prompt"] = rec.prompt;
        obj["completion"] = rec.completion;
        obj["label"] = rec.label;
        out << obj.dump() << "\n";
    }
}

} // namespace e2p
