#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "e2p/projection.hpp"
#include "e2p/records.hpp"
#include "e2p/tokenizer.hpp"
#include "e2p/transformer.hpp"

namespace e2p {

struct EvalReport {
    std::string metric;
    double aggregate = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::string split_digest; // fingerprint of the evaluated dataset
    std::vector<double> per_example;
    nlohmann::json extra; // metric-specific fields (context overhead, ...)

    nlohmann::json to_json(bool include_per_example = true) const;
    static EvalReport from_json(const nlohmann::json& obj);
};

// Source of the prefix embedding for one evaluated record.
using EmbeddingSource = std::function<const std::vector<double>&(std::size_t example_idx)>;

// exp of the pooled per-target-token negative log-likelihood. per_example
// holds each record's mean target NLL (the pairing unit for t-tests).
// When phi is set, the record's uservector (via embedding_source if given)
// is projected and injected.
EvalReport perplexity(const FrozenLMWeights& lm, const std::optional<ProjectionParams>& phi,
                      const std::vector<LMRecord>& records, const Tokenizer& tok,
                      std::uint64_t seed, const EmbeddingSource& embedding_source = nullptr);

enum class RougeVariant { R1, R2, RL };

// F1 over lowercased whitespace tokens: unigram overlap (R1), bigram overlap
// (R2), or longest common subsequence (RL). Both empty -> 1, one empty -> 0.
double rouge(const std::string& candidate, const std::string& reference, RougeVariant variant);

struct HitrateQuery {
    std::vector<double> uservector;
    TokenSequence prompt;
    TokenSequence target; // the true semantic-id token sequence
};

// For each query, draws k sampled generations at the given temperature and
// scores 1 when any equals the target. The j-th draw of query i is seeded by
// (seed, i, j) alone, so hits are nested across k: hitrate is monotone in k
// by construction, matching k independent samples.
EvalReport hitrate_at_k(const FrozenLMWeights& lm, const std::optional<ProjectionParams>& phi,
                        const std::vector<HitrateQuery>& queries, std::size_t k,
                        double temperature, std::uint64_t seed, int stop_id,
                        const EmbeddingSource& embedding_source = nullptr);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    bool significant = false; // two-sided at 0.05
    bool degenerate = false;  // all differences zero: "no difference"
};

// Paired two-sided t-test with n-1 degrees of freedom.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Regularized incomplete beta I_x(a, b) by continued fraction; the basis for
// the Student-t p-value.
double incomplete_beta(double a, double b, double x);

double student_t_two_sided_p(double t, std::size_t dof);

} // namespace e2p
