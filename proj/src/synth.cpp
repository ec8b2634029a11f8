#include "e2p/synth.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "e2p/errors.hpp"
#include "e2p/rng.hpp"

namespace e2p {

using nlohmann::json;

void PopulationConfig::validate() const {
    if (n_clusters < 2) throw ConfigError("population: need at least 2 clusters");
    if (sigma < 0.0) throw ConfigError("population: sigma must be >= 0");
    if (embedding_dim == 0) throw ConfigError("population: embedding_dim must be positive");
    if (n_symbols < 2 * n_clusters)
        throw ConfigError("population: need at least 2 symbols per cluster (n_symbols >= 2K)");
    if (n_symbols > 26) throw ConfigError("population: alphabet capped at 26 symbols");
    if (peak_mass <= 0.0 || peak_mass >= 1.0)
        throw ConfigError("population: peak_mass must lie in (0, 1)");
    if (symbols_per_record == 0)
        throw ConfigError("population: symbols_per_record must be positive");
}

SyntheticPopulation SyntheticPopulation::generate(const PopulationConfig& cfg,
                                                  std::size_t n_users, std::uint64_t seed) {
    cfg.validate();
    if (n_users == 0) throw ConfigError("population: n_users must be positive");

    SyntheticPopulation pop;
    pop.config = cfg;
    pop.seed = seed;
    Rng rng(mix_seed(seed, 0x706f70756cULL));

    for (std::size_t k = 0; k < cfg.n_clusters; ++k) {
        std::vector<double> center(cfg.embedding_dim);
        for (double& v : center) v = rng.gaussian(0.0, 1.0);
        pop.centers.push_back(std::move(center));

        // two disjoint preferred symbols per cluster, remainder spread evenly
        std::vector<double> row(cfg.n_symbols, (1.0 - cfg.peak_mass) / double(cfg.n_symbols - 2));
        row[2 * k] = cfg.peak_mass / 2.0;
        row[2 * k + 1] = cfg.peak_mass / 2.0;
        pop.emission.push_back(std::move(row));

        pop.profiles.push_back(std::string(1, char('A' + k)));
    }

    for (std::size_t u = 0; u < n_users; ++u) {
        SyntheticUser user;
        user.id = u;
        user.cluster = u % cfg.n_clusters; // balanced assignment
        user.embedding = pop.centers[user.cluster];
        for (double& v : user.embedding) v += rng.gaussian(0.0, cfg.sigma);
        pop.users.push_back(std::move(user));
    }
    return pop;
}

double SyntheticPopulation::cluster_entropy(std::size_t k) const {
    double h = 0.0;
    for (double p : emission.at(k))
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

double SyntheticPopulation::cluster_perplexity(std::size_t k) const {
    return std::exp(cluster_entropy(k));
}

double SyntheticPopulation::oracle_perplexity(const std::vector<std::size_t>& record_clusters) const {
    if (record_clusters.empty()) throw DataError("oracle_perplexity: no records");
    double h = 0.0;
    for (std::size_t k : record_clusters) h += cluster_entropy(k);
    return std::exp(h / double(record_clusters.size()));
}

std::size_t SyntheticPopulation::find_user(const std::vector<double>& embedding) const {
    for (const SyntheticUser& u : users)
        if (u.embedding == embedding) return u.id;
    return std::numeric_limits<std::size_t>::max();
}

void SyntheticPopulation::save_json(const std::string& path) const {
    json obj;
    obj["seed"] = seed;
    obj["n_clusters"] = config.n_clusters;
    obj["embedding_dim"] = config.embedding_dim;
    obj["sigma"] = config.sigma;
    obj["n_symbols"] = config.n_symbols;
    obj["peak_mass"] = config.peak_mass;
    obj["symbols_per_record"] = config.symbols_per_record;
    obj["query"] = config.query;
    obj["centers"] = centers;
    obj["emission"] = emission;
    obj["profiles"] = profiles;
    json users_json = json::array();
    for (const SyntheticUser& u : users)
        users_json.push_back({{"id", u.id}, {"cluster", u.cluster}, {"embedding", u.embedding}});
    obj["users"] = users_json;

    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << obj.dump(2) << "\n";
}

SyntheticPopulation SyntheticPopulation::load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    json obj;
    try {
        in >> obj;
    } catch (const json::parse_error& e) {
        throw DataError(path + ": bad oracle JSON (" + e.what() + ")");
    }
    SyntheticPopulation pop;
    pop.seed = obj.at("seed").get<std::uint64_t>();
    pop.config.n_clusters = obj.at("n_clusters").get<std::size_t>();
    pop.config.embedding_dim = obj.at("embedding_dim").get<std::size_t>();
    pop.config.sigma = obj.at("sigma").get<double>();
    pop.config.n_symbols = obj.at("n_symbols").get<std::size_t>();
    pop.config.peak_mass = obj.at("peak_mass").get<double>();
    pop.config.symbols_per_record = obj.at("symbols_per_record").get<std::size_t>();
    pop.config.query = obj.at("query").get<std::string>();
    pop.centers = obj.at("centers").get<std::vector<std::vector<double>>>();
    pop.emission = obj.at("emission").get<std::vector<std::vector<double>>>();
    pop.profiles = obj.at("profiles").get<std::vector<std::string>>();
    for (const auto& u : obj.at("users")) {
        SyntheticUser user;
        user.id = u.at("id").get<std::size_t>();
        user.cluster = u.at("cluster").get<std::size_t>();
        user.embedding = u.at("embedding").get<std::vector<double>>();
        pop.users.push_back(std::move(user));
    }
    return pop;
}

namespace {

std::size_t draw_from(const std::vector<double>& dist, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        cum += dist[i];
        if (u < cum) return i;
    }
    return dist.size() - 1;
}

std::string chat_prompt(const PopulationConfig& cfg) {
    return "<|user|>\n" + cfg.query + "\n<|eot_id|>\n<|model|>\n";
}

std::string draw_symbols(const SyntheticPopulation& pop, std::size_t cluster, Rng& rng) {
    std::string s;
    s.reserve(pop.config.symbols_per_record);
    for (std::size_t i = 0; i < pop.config.symbols_per_record; ++i)
        s.push_back(pop.symbol_char(draw_from(pop.emission[cluster], rng)));
    return s;
}

} // namespace

UserSplits split_users_80_10_10(std::size_t n_users, std::uint64_t seed) {
    std::vector<std::size_t> ids(n_users);
    for (std::size_t i = 0; i < n_users; ++i) ids[i] = i;
    Rng rng(mix_seed(seed, 0x73706c6974ULL));
    rng.shuffle(ids);
    UserSplits s;
    const std::size_t tr = std::size_t(0.8 * double(n_users));
    const std::size_t dv = std::size_t(0.9 * double(n_users));
    s.train.assign(ids.begin(), ids.begin() + std::ptrdiff_t(tr));
    s.dev.assign(ids.begin() + std::ptrdiff_t(tr), ids.begin() + std::ptrdiff_t(dv));
    s.test.assign(ids.begin() + std::ptrdiff_t(dv), ids.end());
    return s;
}

std::vector<LMRecord> pretrain_corpus(const SyntheticPopulation& pop,
                                      const std::vector<SynthRecord>& records,
                                      double hint_fraction, std::uint64_t seed) {
    std::vector<LMRecord> out;
    out.reserve(records.size());
    Rng rng(mix_seed(seed, 0x68696e74ULL));
    for (const SynthRecord& sr : records) {
        LMRecord rec = sr.record;
        if (rng.uniform() < hint_fraction)
            rec.text = pop.profiles[pop.users[sr.user].cluster] + rec.text;
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<SynthRecord> synth_lm_records(const SyntheticPopulation& pop, std::size_t per_user,
                                          std::uint64_t seed) {
    std::vector<SynthRecord> out;
    out.reserve(pop.users.size() * per_user);
    const std::string prompt = chat_prompt(pop.config);
    for (const SyntheticUser& user : pop.users) {
        Rng rng(mix_seed(seed, user.id));
        for (std::size_t r = 0; r < per_user; ++r) {
            SynthRecord rec;
            rec.user = user.id;
            rec.record.uservector = user.embedding;
            rec.record.text = prompt + draw_symbols(pop, user.cluster, rng);
            out.push_back(std::move(rec));
        }
    }
    return out;
}

std::vector<SynthPrefRecord> synth_pref_records(const SyntheticPopulation& pop,
                                                std::size_t per_user, std::uint64_t seed) {
    std::vector<SynthPrefRecord> out;
    out.reserve(pop.users.size() * per_user);
    const std::string prompt = chat_prompt(pop.config);
    for (const SyntheticUser& user : pop.users) {
        Rng rng(mix_seed(seed, 0xf00d ^ user.id));
        for (std::size_t r = 0; r < per_user; ++r) {
            SynthPrefRecord rec;
            rec.user = user.id;
            rec.record.uservector = user.embedding;
            rec.record.prompt = prompt;
            rec.record.label = int(r % 2 == 0);
            std::size_t cluster = user.cluster;
            if (rec.record.label == 0) {
                // completion from someone else's cluster
                cluster = (user.cluster + 1 + rng.below(pop.config.n_clusters - 1)) %
                          pop.config.n_clusters;
            }
            rec.record.completion = draw_symbols(pop, cluster, rng);
            out.push_back(std::move(rec));
        }
    }
    return out;
}

SynthItems synth_items(const SyntheticPopulation& pop, std::size_t items_per_cluster,
                       std::uint64_t seed) {
    if (items_per_cluster == 0) throw ConfigError("synth_items: items_per_cluster must be > 0");
    SynthItems items;
    Rng rng(mix_seed(seed, 0x17e35));
    for (std::size_t k = 0; k < pop.config.n_clusters; ++k) {
        for (std::size_t i = 0; i < items_per_cluster; ++i) {
            std::vector<double> v = pop.centers[k];
            for (double& x : v) x += rng.gaussian(0.0, 0.1);
            items.embeddings.push_back(std::move(v));
            items.item_cluster.push_back(k);
        }
    }
    return items;
}

std::vector<SynthRecord> synth_rec_records(const SyntheticPopulation& pop, const SynthItems& items,
                                           const std::vector<int>& item_ids, std::size_t per_user,
                                           std::uint64_t seed) {
    if (items.embeddings.size() != item_ids.size())
        throw ConfigError("synth_rec_records: item/id count mismatch");
    std::vector<SynthRecord> out;
    out.reserve(pop.users.size() * per_user);
    const std::string prompt = "<|user|>\nnext\n<|eot_id|>\n<|model|>\n";
    // items of the user's cluster, indexed once
    std::vector<std::vector<std::size_t>> by_cluster(pop.config.n_clusters);
    for (std::size_t i = 0; i < items.item_cluster.size(); ++i)
        by_cluster[items.item_cluster[i]].push_back(i);

    for (const SyntheticUser& user : pop.users) {
        Rng rng(mix_seed(seed, 0xbeef ^ user.id));
        const auto& pool = by_cluster[user.cluster];
        if (pool.empty()) throw ConfigError("synth_rec_records: cluster has no items");
        for (std::size_t r = 0; r < per_user; ++r) {
            const std::size_t item = pool[rng.below(pool.size())];
            SynthRecord rec;
            rec.user = user.id;
            rec.record.uservector = user.embedding;
            rec.record.text = prompt + std::to_string(item_ids[item]) + "<|eot_id|>";
            out.push_back(std::move(rec));
        }
    }
    return out;
}

} // namespace e2p
