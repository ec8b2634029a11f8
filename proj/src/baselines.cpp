#include "e2p/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "e2p/digest.hpp"
#include "e2p/errors.hpp"
#include "e2p/objectives.hpp"
#include "e2p/parallel.hpp"
#include "e2p/rng.hpp"

namespace e2p {

std::string baseline_name(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::NoContext: return "NoContext";
        case BaselineKind::PromptContext: return "PromptContext";
        case BaselineKind::E2PRandom: return "E2PRandom";
        case BaselineKind::E2P: return "E2P";
        case BaselineKind::E2PPlusPrompt: return "E2PPlusPrompt";
        case BaselineKind::EmbeddingRetrieval: return "EmbeddingRetrieval";
    }
    throw ConfigError("baseline_name: unknown kind");
}

BaselineKind baseline_from_name(const std::string& name) {
    for (BaselineKind k : {BaselineKind::NoContext, BaselineKind::PromptContext,
                           BaselineKind::E2PRandom, BaselineKind::E2P,
                           BaselineKind::E2PPlusPrompt, BaselineKind::EmbeddingRetrieval}) {
        if (baseline_name(k) == name) return k;
    }
    throw ConfigError("unknown baseline \"" + name + "\"");
}

std::string embedding_key(const std::vector<double>& uservector) {
    Sha256 h;
    h.update_doubles(uservector.data(), uservector.size());
    return to_hex(h.finish());
}

namespace {

bool uses_prefix(BaselineKind k) {
    return k == BaselineKind::E2P || k == BaselineKind::E2PRandom ||
           k == BaselineKind::E2PPlusPrompt;
}

bool uses_profile(BaselineKind k) {
    return k == BaselineKind::PromptContext || k == BaselineKind::E2PPlusPrompt;
}

const std::string& profile_for(const EvalTask& task, const std::vector<double>& uservector) {
    const auto it = task.profiles.find(embedding_key(uservector));
    if (it == task.profiles.end())
        throw ConfigError("baseline: no textual profile for a test user (profiles artifact "
                          "missing or incomplete)");
    return it->second;
}

// For E2PRandom every example draws a replacement embedding uniformly from
// the test set's own uservectors, seeded per example.
EmbeddingSource make_embedding_source(BaselineKind kind, const EvalTask& task) {
    if (kind == BaselineKind::E2PRandom) {
        const auto& records = task.records;
        const std::uint64_t seed = task.seed;
        return [&records, seed](std::size_t i) -> const std::vector<double>& {
            Rng rng(mix_seed(seed, 0x72616e64ULL ^ i));
            return records[rng.below(records.size())].uservector;
        };
    }
    return nullptr; // records' own uservectors
}

template <typename RecordT>
double mean_profile_tokens(const EvalTask& task, const std::vector<RecordT>& records) {
    double total = 0.0;
    for (const RecordT& rec : records)
        total += double(task.tok->tokenize(profile_for(task, rec.uservector)).size());
    return total / double(records.size());
}

// greedy generation scored by longest-common-subsequence overlap against the
// reference completion; positives only (negatives carry mismatched text)
EvalReport run_rouge(BaselineKind kind, const EvalTask& task) {
    std::vector<PrefRecord> records;
    for (const PrefRecord& rec : task.pref_records)
        if (rec.label == 1) records.push_back(rec);
    if (records.empty()) throw DataError("rouge baseline: no positive test records");

    double context_overhead = 0.0;
    if (uses_profile(kind)) {
        context_overhead += mean_profile_tokens(task, records);
        for (PrefRecord& rec : records) rec.prompt = profile_for(task, rec.uservector) + rec.prompt;
    }
    if (uses_prefix(kind)) context_overhead += 1.0;

    std::vector<double> r1(records.size()), r2(records.size()), rl(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
        NoGradGuard no_grad;
        const PrefRecord& rec = records[i];
        std::optional<Tensor> prefix;
        if (task.phi && uses_prefix(kind)) {
            Rng pick(mix_seed(task.seed, 0x72616e64ULL ^ i));
            const std::vector<double>& emb =
                kind == BaselineKind::E2PRandom
                    ? task.pref_records[pick.below(task.pref_records.size())].uservector
                    : rec.uservector;
            prefix = project(*task.phi, emb);
        }
        const TokenSequence prompt = task.tok->tokenize(rec.prompt);
        const std::size_t budget = task.tok->tokenize(rec.completion).size() + 8;
        const TokenSequence got = sample_generate(*task.lm, prompt, prefix, 0.0, budget,
                                                  mix_seed(task.seed, i), task.stop_id);
        TokenSequence clean = got;
        if (!clean.empty() && clean.back() == task.stop_id) clean.pop_back();
        const std::string decoded = task.tok->detokenize(clean);
        r1[i] = rouge(decoded, rec.completion, RougeVariant::R1);
        r2[i] = rouge(decoded, rec.completion, RougeVariant::R2);
        rl[i] = rouge(decoded, rec.completion, RougeVariant::RL);
    });

    EvalReport report;
    report.metric = "rougeL";
    double m1 = 0.0, m2 = 0.0, ml = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        m1 += r1[i];
        m2 += r2[i];
        ml += rl[i];
    }
    report.aggregate = ml / double(records.size());
    report.n = records.size();
    report.seed = task.seed;
    report.per_example = std::move(rl);
    report.extra["rouge1"] = m1 / double(records.size());
    report.extra["rouge2"] = m2 / double(records.size());
    report.extra["rougeL"] = report.aggregate;
    report.extra["scoring"] = "f1";
    report.extra["tokenization"] = "lowercased_whitespace";
    report.extra["context_overhead"] = context_overhead;
    return report;
}

EvalReport run_retrieval(const EvalTask& task) {
    if (task.items.empty() || task.item_ids.empty())
        throw ConfigError("EmbeddingRetrieval needs item embeddings and their semantic ids");
    if (task.metric != TaskMetric::Hitrate)
        throw ConfigError("EmbeddingRetrieval is a ranking baseline; it applies to the "
                          "hitrate task only");

    const auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        if (na == 0.0 || nb == 0.0) return 0.0;
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };

    std::vector<double> hits;
    hits.reserve(task.records.size());
    for (const LMRecord& rec : task.records) {
        const MaskedSequence seq = mask_lm_record(rec, *task.tok);
        TokenSequence target(seq.tokens.begin() + std::ptrdiff_t(seq.target_begin),
                             seq.tokens.end());
        if (!target.empty() && target.back() == task.stop_id) target.pop_back();
        const std::string target_text = task.tok->detokenize(target);
        int true_id = 0;
        try {
            true_id = std::stoi(target_text);
        } catch (const std::exception&) {
            throw DataError("EmbeddingRetrieval: target \"" + target_text +
                            "\" is not a numeric semantic id");
        }

        std::vector<std::size_t> order(task.items.size());
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> score(task.items.size());
        for (std::size_t i = 0; i < task.items.size(); ++i)
            score[i] = cosine(rec.uservector, task.items[i]);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

        double hit = 0.0;
        for (std::size_t r = 0; r < std::min(task.hitrate_k, order.size()); ++r) {
            if (task.item_ids[order[r]] == true_id) {
                hit = 1.0;
                break;
            }
        }
        hits.push_back(hit);
    }

    EvalReport report;
    report.metric = "hitrate@" + std::to_string(task.hitrate_k);
    report.aggregate = std::accumulate(hits.begin(), hits.end(), 0.0) / double(hits.size());
    report.n = task.records.size();
    report.seed = task.seed;
    report.per_example = std::move(hits);
    return report;
}

} // namespace

EvalReport run_baseline(BaselineKind kind, const EvalTask& task) {
    if (task.lm == nullptr || task.tok == nullptr)
        throw ConfigError("baseline: model and tokenizer are required");
    if (uses_prefix(kind) && !task.phi)
        throw ConfigError(baseline_name(kind) + " needs a trained projection checkpoint");

    if (task.metric == TaskMetric::Rouge) {
        if (kind == BaselineKind::EmbeddingRetrieval)
            throw ConfigError("EmbeddingRetrieval does not apply to the rouge task");
        if (task.pref_records.empty()) throw DataError("baseline: empty preference test set");
        EvalReport report = run_rouge(kind, task);
        report.split_digest = task.split_digest;
        report.config_digest = task.config_digest;
        report.extra["baseline"] = baseline_name(kind);
        return report;
    }

    if (task.records.empty()) throw DataError("baseline: empty test set");

    if (kind == BaselineKind::EmbeddingRetrieval) {
        EvalReport report = run_retrieval(task);
        report.split_digest = task.split_digest;
        report.config_digest = task.config_digest;
        report.extra["baseline"] = baseline_name(kind);
        report.extra["context_overhead"] = -1.0; // not a generative context
        return report;
    }

    // prompt variants evaluate on profile-prepended texts
    std::vector<LMRecord> records = task.records;
    double context_overhead = 0.0;
    if (uses_profile(kind)) {
        context_overhead += mean_profile_tokens(task, records);
        for (LMRecord& rec : records) rec.text = profile_for(task, rec.uservector) + rec.text;
    }
    if (uses_prefix(kind)) context_overhead += 1.0; // the soft token

    const std::optional<ProjectionParams>& phi =
        uses_prefix(kind) ? task.phi : std::optional<ProjectionParams>{};
    const EmbeddingSource source = make_embedding_source(kind, task);

    EvalReport report;
    if (task.metric == TaskMetric::Perplexity) {
        report = perplexity(*task.lm, phi, records, *task.tok, task.seed, source);
    } else {
        std::vector<HitrateQuery> queries;
        queries.reserve(records.size());
        for (const LMRecord& rec : records) {
            const MaskedSequence seq = mask_lm_record(rec, *task.tok);
            HitrateQuery q;
            q.uservector = rec.uservector;
            q.prompt.assign(seq.tokens.begin(),
                            seq.tokens.begin() + std::ptrdiff_t(seq.target_begin));
            q.target.assign(seq.tokens.begin() + std::ptrdiff_t(seq.target_begin),
                            seq.tokens.end());
            queries.push_back(std::move(q));
        }
        report = hitrate_at_k(*task.lm, phi, queries, task.hitrate_k, task.temperature, task.seed,
                              task.stop_id, source);
    }
    report.split_digest = task.split_digest;
    report.config_digest = task.config_digest;
    report.extra["baseline"] = baseline_name(kind);
    report.extra["context_overhead"] = context_overhead;
    return report;
}

ComparisonTable make_comparison(const std::vector<std::pair<BaselineKind, EvalReport>>& reports) {
    ComparisonTable table;
    for (const auto& [kind, report] : reports) {
        if (table.metric.empty()) table.metric = report.metric;
        ComparisonRow row;
        row.method = baseline_name(kind);
        row.context_overhead = report.extra.value("context_overhead", 0.0);
        row.value = report.aggregate;
        table.rows.push_back(row);
    }
    return table;
}

std::string ComparisonTable::render() const {
    std::ostringstream out;
    out << "method               context  " << metric << "\n";
    for (const ComparisonRow& row : rows) {
        out << row.method;
        for (std::size_t i = row.method.size(); i < 21; ++i) out << ' ';
        if (row.context_overhead < 0.0) {
            out << "N/A      ";
        } else {
            std::ostringstream ctx;
            ctx << row.context_overhead;
            out << ctx.str();
            for (std::size_t i = ctx.str().size(); i < 9; ++i) out << ' ';
        }
        out << row.value << row.marker << "\n";
    }
    return out.str();
}

nlohmann::json ComparisonTable::to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const ComparisonRow& row : rows) {
        nlohmann::json r;
        r["method"] = row.method;
        if (row.context_overhead < 0.0)
            r["context_length"] = nullptr;
        else
            r["context_length"] = row.context_overhead;
        r["value"] = row.value;
        if (!row.marker.empty()) r["marker"] = row.marker;
        rows_json.push_back(r);
    }
    return {{"metric", metric}, {"rows", rows_json}};
}

} // namespace e2p
