#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e2p/records.hpp"

namespace e2p {

// Synthetic population: K preference clusters, user embeddings scattered
// around cluster centers, and a per-cluster symbol-emission table that
// drives record generation. The emission tables are the analytic oracle:
// the ideal per-token perplexity for a user is exp(H) of their cluster's
// table, so trained models can be scored against a known floor.
struct PopulationConfig {
    std::size_t n_clusters = 4;
    std::size_t embedding_dim = 16;
    double sigma = 0.05;
    std::size_t n_symbols = 8;          // alphabet 'a', 'b', ...
    double peak_mass = 0.85;            // mass on each cluster's two preferred symbols
    std::size_t symbols_per_record = 16;
    std::string query = "hi";

    void validate() const;
};

struct SyntheticUser {
    std::size_t id = 0;
    std::size_t cluster = 0;
    std::vector<double> embedding;
};

struct SyntheticPopulation {
    PopulationConfig config;
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> centers;  // K × d
    std::vector<std::vector<double>> emission; // K × n_symbols, each row sums to 1
    std::vector<std::string> profiles;         // per-cluster textual profile
    std::vector<SyntheticUser> users;

    static SyntheticPopulation generate(const PopulationConfig& cfg, std::size_t n_users,
                                        std::uint64_t seed);

    char symbol_char(std::size_t j) const { return char('a' + j); }
    double cluster_entropy(std::size_t k) const;      // nats per symbol
    double cluster_perplexity(std::size_t k) const;   // exp(entropy)

    // exp of the mean per-target-token entropy over the given per-record
    // cluster assignments; the best perplexity any model can reach.
    double oracle_perplexity(const std::vector<std::size_t>& record_clusters) const;

    // index of the user whose embedding matches exactly, or npos
    std::size_t find_user(const std::vector<double>& embedding) const;

    void save_json(const std::string& path) const;
    static SyntheticPopulation load_json(const std::string& path);
};

struct SynthRecord {
    std::size_t user = 0;
    LMRecord record;
};

// Disjoint 80/10/10 partition of user ids, shuffled under the seed. Splitting
// by user keeps every user's records inside one split.
struct UserSplits {
    std::vector<std::size_t> train, dev, test;
};

UserSplits split_users_80_10_10(std::size_t n_users, std::uint64_t seed);

// Pretraining texts drawn from the given records: a hint_fraction share gets
// the owner's cluster profile prepended, teaching the model to condition on
// leading context; the rest stay bare so the unconditioned format is also in
// distribution.
std::vector<LMRecord> pretrain_corpus(const SyntheticPopulation& pop,
                                      const std::vector<SynthRecord>& records,
                                      double hint_fraction, std::uint64_t seed);

// Chat-formatted records whose response region is symbols drawn from the
// user's cluster emission table.
std::vector<SynthRecord> synth_lm_records(const SyntheticPopulation& pop, std::size_t per_user,
                                          std::uint64_t seed);

struct SynthPrefRecord {
    std::size_t user = 0;
    PrefRecord record;
};

// Preference records: positives carry completions from the user's own
// cluster, negatives from a different cluster.
std::vector<SynthPrefRecord> synth_pref_records(const SyntheticPopulation& pop,
                                                std::size_t per_user, std::uint64_t seed);

// Item embeddings for the recommendation flavor: per cluster, noisy copies
// of the cluster center.
struct SynthItems {
    std::vector<std::vector<double>> embeddings;
    std::vector<std::size_t> item_cluster;
};

SynthItems synth_items(const SyntheticPopulation& pop, std::size_t items_per_cluster,
                       std::uint64_t seed);

// Recommendation records: the response region is the decimal semantic id of
// an item drawn from the user's cluster, terminated with <|eot_id|>.
std::vector<SynthRecord> synth_rec_records(const SyntheticPopulation& pop, const SynthItems& items,
                                           const std::vector<int>& item_ids, std::size_t per_user,
                                           std::uint64_t seed);

} // namespace e2p
