#include "e2p/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>

#include "e2p/errors.hpp"
#include "e2p/objectives.hpp"
#include "e2p/parallel.hpp"
#include "e2p/rng.hpp"

namespace e2p {

using nlohmann::json;

json EvalReport::to_json(bool include_per_example) const {
    json obj;
    obj["metric"] = metric;
    obj["aggregate"] = aggregate;
    obj["n"] = n;
    obj["seed"] = seed;
    obj["config_digest"] = config_digest;
    obj["split_digest"] = split_digest;
    if (include_per_example) obj["per_example"] = per_example;
    if (!extra.is_null()) obj["extra"] = extra;
    return obj;
}

EvalReport EvalReport::from_json(const json& obj) {
    EvalReport r;
    r.metric = obj.at("metric").get<std::string>();
    r.aggregate = obj.at("aggregate").get<double>();
    r.n = obj.at("n").get<std::size_t>();
    r.seed = obj.at("seed").get<std::uint64_t>();
    r.config_digest = obj.value("config_digest", "");
    r.split_digest = obj.value("split_digest", "");
    if (obj.contains("per_example")) r.per_example = obj.at("per_example").get<std::vector<double>>();
    if (obj.contains("extra")) r.extra = obj.at("extra");
    return r;
}

EvalReport perplexity(const FrozenLMWeights& lm, const std::optional<ProjectionParams>& phi,
                      const std::vector<LMRecord>& records, const Tokenizer& tok,
                      std::uint64_t seed, const EmbeddingSource& embedding_source) {
    if (records.empty()) throw DataError("perplexity: empty dataset");

    std::vector<double> mean_nll(records.size());
    std::vector<std::size_t> counts(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
        NoGradGuard no_grad;
        std::optional<Tensor> prefix;
        if (phi) {
            const std::vector<double>& emb =
                embedding_source ? embedding_source(i) : records[i].uservector;
            prefix = project(*phi, emb);
        }
        const std::vector<Tensor> terms = nll_terms(lm, prefix, mask_lm_record(records[i], tok));
        double s = 0.0;
        for (const Tensor& t : terms) s += t.item();
        mean_nll[i] = s / double(terms.size());
        counts[i] = terms.size();
    });

    double total_nll = 0.0;
    std::size_t total_tokens = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        total_nll += mean_nll[i] * double(counts[i]);
        total_tokens += counts[i];
    }
    if (total_tokens == 0) throw DataError("perplexity: no target tokens in dataset");

    EvalReport report;
    report.metric = "perplexity";
    report.aggregate = std::exp(total_nll / double(total_tokens));
    report.n = records.size();
    report.seed = seed;
    report.per_example = std::move(mean_nll);
    // aggregate = exp(sum(per_example * per_example_tokens) / target_tokens)
    report.extra["reduction"] = "exp_token_weighted_mean_nll";
    report.extra["per_example_tokens"] = counts;
    report.extra["target_tokens"] = total_tokens;
    return report;
}

namespace {

std::vector<std::string> rouge_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

double f1(double overlap, double n_cand, double n_ref) {
    if (n_cand == 0.0 || n_ref == 0.0) return 0.0;
    const double precision = overlap / n_cand;
    const double recall = overlap / n_ref;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double ngram_overlap_f1(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                        std::size_t n) {
    const auto grams = [n](const std::vector<std::string>& toks) {
        std::map<std::vector<std::string>, std::size_t> counts;
        if (toks.size() >= n)
            for (std::size_t i = 0; i + n <= toks.size(); ++i)
                ++counts[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
        return counts;
    };
    const auto gc = grams(cand);
    const auto gr = grams(ref);
    std::size_t nc = 0, nr = 0, overlap = 0;
    for (const auto& [g, c] : gc) nc += c;
    for (const auto& [g, c] : gr) nr += c;
    for (const auto& [g, c] : gc) {
        const auto it = gr.find(g);
        if (it != gr.end()) overlap += std::min(c, it->second); // clipped counts
    }
    return f1(double(overlap), double(nc), double(nr));
}

double lcs_f1(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
    const std::size_t m = cand.size(), n = ref.size();
    if (m == 0 || n == 0) return f1(0.0, double(m), double(n));
    std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            cur[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1
                                               : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return f1(double(prev[n]), double(m), double(n));
}

} // namespace

double rouge(const std::string& candidate, const std::string& reference, RougeVariant variant) {
    const std::vector<std::string> cand = rouge_tokens(candidate);
    const std::vector<std::string> ref = rouge_tokens(reference);
    // empty-text convention: both empty match perfectly, one empty not at all
    if (cand.empty() && ref.empty()) return 1.0;
    if (cand.empty() || ref.empty()) return 0.0;
    switch (variant) {
        case RougeVariant::R1:
            return ngram_overlap_f1(cand, ref, 1);
        case RougeVariant::R2:
            return ngram_overlap_f1(cand, ref, 2);
        case RougeVariant::RL:
            return lcs_f1(cand, ref);
    }
    throw ConfigError("rouge: unknown variant");
}

EvalReport hitrate_at_k(const FrozenLMWeights& lm, const std::optional<ProjectionParams>& phi,
                        const std::vector<HitrateQuery>& queries, std::size_t k,
                        double temperature, std::uint64_t seed, int stop_id,
                        const EmbeddingSource& embedding_source) {
    if (queries.empty()) throw DataError("hitrate: empty query set");
    if (k < 1) throw ConfigError("hitrate: k must be >= 1");

    std::vector<double> hits(queries.size(), 0.0);
    parallel_for(queries.size(), [&](std::size_t i) {
        NoGradGuard no_grad;
        const HitrateQuery& q = queries[i];
        std::optional<Tensor> prefix;
        if (phi) {
            const std::vector<double>& emb =
                embedding_source ? embedding_source(i) : q.uservector;
            prefix = project(*phi, emb);
        }
        TokenSequence want = q.target;
        // generation may end with the stop token; compare without it
        if (!want.empty() && want.back() == stop_id) want.pop_back();
        // with a stop token the model gets one extra slot to emit it
        const std::size_t max_new = want.size() + (stop_id >= 0 ? 1 : 0);
        for (std::size_t j = 0; j < k; ++j) {
            TokenSequence got = sample_generate(lm, q.prompt, prefix, temperature, max_new,
                                                mix_seed(seed, i * 1000003ULL + j), stop_id);
            if (!got.empty() && got.back() == stop_id) got.pop_back();
            if (got == want) {
                hits[i] = 1.0;
                break;
            }
        }
    });

    EvalReport report;
    report.metric = "hitrate@" + std::to_string(k);
    double s = 0.0;
    for (double h : hits) s += h;
    report.aggregate = s / double(hits.size());
    report.n = queries.size();
    report.seed = seed;
    report.per_example = std::move(hits);
    report.extra["k"] = k;
    report.extra["temperature"] = temperature;
    return report;
}

double incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw ConfigError("incomplete_beta: x outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    // symmetry keeps the continued fraction in its fast-converging region
    if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

    const double ln_front = a * std::log(x) + b * std::log(1.0 - x) + std::lgamma(a + b) -
                            std::lgamma(a) - std::lgamma(b);
    // modified Lentz evaluation of the standard continued fraction
    const double tiny = 1e-300;
    double f = tiny, c = f, d = 0.0;
    for (int i = 0; i <= 400; ++i) {
        const int m = i / 2;
        double numerator;
        if (i == 0)
            numerator = 1.0;
        else if (i % 2 == 0)
            numerator = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        else
            numerator = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 + numerator * d;
        if (std::abs(d) < tiny) d = tiny;
        d = 1.0 / d;
        c = 1.0 + numerator / c;
        if (std::abs(c) < tiny) c = tiny;
        const double delta = c * d;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return std::exp(ln_front) * f / a;
}

double student_t_two_sided_p(double t, std::size_t dof) {
    if (dof == 0) throw ConfigError("student_t: dof must be >= 1");
    if (std::isinf(t)) return 0.0;
    const double v = double(dof);
    const double x = v / (v + t * t);
    return incomplete_beta(v / 2.0, 0.5, x);
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw DataError("paired_t_test: unequal lengths " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
    const std::size_t n = a.size();
    if (n < 2) throw DataError("paired_t_test: need at least 2 pairs");

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= double(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / double(n - 1));

    TTestResult out;
    if (sd == 0.0) {
        if (mean == 0.0) {
            out.degenerate = true; // no difference anywhere
            out.t = 0.0;
            out.p = 1.0;
            out.significant = false;
            return out;
        }
        out.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();
        out.p = 0.0;
        out.significant = true;
        return out;
    }
    out.t = mean / (sd / std::sqrt(double(n)));
    out.p = student_t_two_sided_p(out.t, n - 1);
    out.significant = out.p < 0.05;
    return out;
}

} // namespace e2p
