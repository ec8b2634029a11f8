#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "e2p/metrics.hpp"
#include "e2p/projection.hpp"
#include "e2p/records.hpp"
#include "e2p/tokenizer.hpp"
#include "e2p/transformer.hpp"

namespace e2p {

enum class BaselineKind {
    NoContext,
    PromptContext,
    E2PRandom,
    E2P,
    E2PPlusPrompt,
    EmbeddingRetrieval,
};

std::string baseline_name(BaselineKind kind);
BaselineKind baseline_from_name(const std::string& name);

enum class TaskMetric { Perplexity, Hitrate, Rouge };

// Everything a baseline run may need; run_baseline checks that the pieces
// required by the requested kind are present.
struct EvalTask {
    TaskMetric metric = TaskMetric::Perplexity;
    const FrozenLMWeights* lm = nullptr;
    const Tokenizer* tok = nullptr;
    std::vector<LMRecord> records;                  // test split (perplexity/hitrate)
    std::vector<PrefRecord> pref_records;           // test split (rouge)
    std::optional<ProjectionParams> phi;            // E2P kinds
    std::map<std::string, std::string> profiles;    // uservector key -> profile text
    std::vector<std::vector<double>> items;         // EmbeddingRetrieval
    std::vector<int> item_ids;                      // semantic id per item
    std::size_t hitrate_k = 30;
    double temperature = 1.0;
    int stop_id = Tokenizer::kEot;
    std::uint64_t seed = 42;
    std::string split_digest;
    std::string config_digest;
};

// Key used to look up a record's profile/identity from its uservector.
std::string embedding_key(const std::vector<double>& uservector);

// Runs one baseline over the task's test records. The report's extra field
// carries "context_overhead": the mean number of extra input slots the
// method consumes per example (0 none, 1 soft prefix, profile token count
// for prompt methods, profile+1 for the combined one).
EvalReport run_baseline(BaselineKind kind, const EvalTask& task);

struct ComparisonRow {
    std::string method;
    double context_overhead = 0.0;
    double value = 0.0;
    std::string marker; // significance daggers, filled by the t-test step
};

struct ComparisonTable {
    std::string metric;
    std::vector<ComparisonRow> rows;

    std::string render() const;
    nlohmann::json to_json() const;
};

ComparisonTable make_comparison(const std::vector<std::pair<BaselineKind, EvalReport>>& reports);

} // namespace e2p
