#include "e2p/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "e2p/digest.hpp"
#include "e2p/errors.hpp"

namespace e2p {

namespace {

constexpr char kMagic[8] = {'E', '2', 'P', 'C', 'K', 'P', 'T', '1'};

class Writer {
  public:
    void put(const void* data, std::size_t len) {
        const char* p = static_cast<const char*>(data);
        buf_.insert(buf_.end(), p, p + len);
    }
    void put_u32(std::uint32_t v) {
        std::uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = std::uint8_t(v >> (8 * i));
        put(b, 4);
    }
    void put_u64(std::uint64_t v) {
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = std::uint8_t(v >> (8 * i));
        put(b, 8);
    }
    void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

    const std::string& bytes() const { return buf_; }

  private:
    std::string buf_;
};

class Reader {
  public:
    Reader(std::string bytes, std::string path) : buf_(std::move(bytes)), path_(std::move(path)) {}

    void get(void* dst, std::size_t len) {
        if (pos_ + len > buf_.size()) throw DataError(path_ + ": truncated checkpoint");
        std::memcpy(dst, buf_.data() + pos_, len);
        pos_ += len;
    }
    std::uint32_t get_u32() {
        std::uint8_t b[4];
        get(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t get_u64() {
        std::uint8_t b[8];
        get(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
        return v;
    }
    double get_f64() { return std::bit_cast<double>(get_u64()); }
    std::string get_string(std::size_t len) {
        std::string s(len, '\0');
        get(s.data(), len);
        return s;
    }
    std::size_t pos() const { return pos_; }
    const std::string& bytes() const { return buf_; }

  private:
    std::string buf_;
    std::string path_;
    std::size_t pos_ = 0;
};

} // namespace

const Tensor& Checkpoint::block(const std::string& name) const {
    for (const auto& [n, t] : blocks)
        if (n == name) return t;
    throw DataError("checkpoint: no block named \"" + name + "\"");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    Writer w;
    w.put(kMagic, sizeof(kMagic));
    const std::string header = ckpt.header.dump();
    w.put_u32(std::uint32_t(header.size()));
    w.put(header.data(), header.size());
    w.put_u32(std::uint32_t(ckpt.blocks.size()));
    for (const auto& [name, tensor] : ckpt.blocks) {
        w.put_u32(std::uint32_t(name.size()));
        w.put(name.data(), name.size());
        w.put_u32(std::uint32_t(tensor.shape().size()));
        for (std::size_t d : tensor.shape()) w.put_u64(d);
        for (double v : tensor.values()) w.put_f64(v);
    }

    Sha256 h;
    h.update(w.bytes().data(), w.bytes().size());
    const auto digest = h.finish();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out.write(w.bytes().data(), std::streamsize(w.bytes().size()));
    out.write(reinterpret_cast<const char*>(digest.data()), std::streamsize(digest.size()));
    if (!out) throw DataError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < sizeof(kMagic) + 32) throw DataError(path + ": not a checkpoint file");

    const std::string payload = bytes.substr(0, bytes.size() - 32);
    Sha256 h;
    h.update(payload.data(), payload.size());
    const std::string want = to_hex(h.finish());
    std::array<std::uint8_t, 32> stored;
    std::memcpy(stored.data(), bytes.data() + bytes.size() - 32, 32);
    if (to_hex(stored) != want)
        throw DataError(path + ": digest mismatch, checkpoint is corrupt");

    Reader r(payload, path);
    char magic[8];
    r.get(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw DataError(path + ": bad magic");

    Checkpoint ckpt;
    const std::uint32_t hlen = r.get_u32();
    const std::string header = r.get_string(hlen);
    try {
        ckpt.header = nlohmann::json::parse(header);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path + ": bad header JSON (" + e.what() + ")");
    }

    const std::uint32_t nblocks = r.get_u32();
    ckpt.blocks.reserve(nblocks);
    for (std::uint32_t b = 0; b < nblocks; ++b) {
        const std::uint32_t nlen = r.get_u32();
        std::string name = r.get_string(nlen);
        const std::uint32_t ndim = r.get_u32();
        std::vector<std::size_t> shape(ndim);
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < ndim; ++i) {
            shape[i] = static_cast<std::size_t>(r.get_u64());
            numel *= shape[i];
        }
        std::vector<double> values(numel);
        for (std::size_t i = 0; i < numel; ++i) values[i] = r.get_f64();
        ckpt.blocks.emplace_back(std::move(name), Tensor::from(shape, std::move(values)));
    }
    return ckpt;
}

} // namespace e2p
