// Command-line pipeline: synthesize data, pretrain and freeze the model,
// train the projection, evaluate baselines, test significance, export the
// prefix-space structure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "e2p/baselines.hpp"
#include "e2p/checkpoint.hpp"
#include "e2p/codebook.hpp"
#include "e2p/config.hpp"
#include "e2p/digest.hpp"
#include "e2p/errors.hpp"
#include "e2p/metrics.hpp"
#include "e2p/prefix_space.hpp"
#include "e2p/projection.hpp"
#include "e2p/records.hpp"
#include "e2p/rng.hpp"
#include "e2p/synth.hpp"
#include "e2p/tokenizer.hpp"
#include "e2p/train.hpp"
#include "e2p/transformer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace e2p;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitContract = 4;

std::string file_digest_or_empty(const std::string& path) {
    return fs::exists(path) ? sha256_file_hex(path) : "";
}

// fingerprint of the resolved config plus every consumed input file
std::string inputs_digest(const Config& cfg, const std::vector<std::string>& input_paths) {
    Sha256 h;
    h.update(cfg.resolved_text());
    for (const std::string& p : input_paths) {
        h.update(p);
        h.update(file_digest_or_empty(p));
    }
    return to_hex(h.finish());
}

void write_json(const std::string& path, const json& obj) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << obj.dump(2) << "\n";
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    json obj;
    try {
        in >> obj;
    } catch (const json::parse_error& e) {
        throw DataError(path + ": bad JSON (" + e.what() + ")");
    }
    return obj;
}

void require_fresh(const fs::path& path, bool force) {
    if (fs::exists(path) && !force)
        throw ConfigError(path.string() + " already exists; pass --force to overwrite");
}

fs::path ensure_out_dir(const Config& cfg) {
    const fs::path dir = cfg.get_string("out_dir", "out");
    fs::create_directories(dir);
    return dir;
}

TrainConfig train_config_from(const Config& cfg) {
    TrainConfig tc = default_train_config(cfg.get_string("task", "synthetic"));
    tc.learning_rate = cfg.get_double("train.lr", tc.learning_rate);
    tc.batch_size = std::size_t(cfg.get_int("train.batch", std::int64_t(tc.batch_size)));
    tc.epochs = std::size_t(cfg.get_int("train.epochs", std::int64_t(tc.epochs)));
    tc.seed = cfg.get_u64("seed", tc.seed);
    tc.alpha = cfg.get_double("train.alpha", tc.alpha);
    tc.beta1 = cfg.get_double("train.beta1", tc.beta1);
    tc.beta2 = cfg.get_double("train.beta2", tc.beta2);
    tc.adam_eps = cfg.get_double("train.eps", tc.adam_eps);
    tc.weight_decay = cfg.get_double("train.weight_decay", tc.weight_decay);
    if (tc.learning_rate <= 0.0) throw ConfigError("train.lr must be positive");
    if (tc.alpha < 0.0) throw ConfigError("train.alpha must be >= 0");
    return tc;
}

LMConfig lm_config_from(const Config& cfg) {
    LMConfig mc;
    mc.vocab_size = std::size_t(cfg.get_int("lm.vocab_size", Tokenizer::kVocabSize));
    mc.hidden_dim = std::size_t(cfg.get_int("lm.hidden_dim", 64));
    mc.n_layers = std::size_t(cfg.get_int("lm.n_layers", 2));
    mc.n_heads = std::size_t(cfg.get_int("lm.n_heads", 4));
    mc.max_seq_len = std::size_t(cfg.get_int("lm.max_seq_len", 128));
    mc.layer_norm_eps = cfg.get_double("lm.layer_norm_eps", 1e-5);
    mc.seed = cfg.get_u64("lm.seed", cfg.get_u64("seed", 42));
    mc.validate();
    return mc;
}

PopulationConfig population_config_from(const Config& cfg) {
    PopulationConfig pc;
    pc.n_clusters = std::size_t(cfg.get_int("synth.clusters", 4));
    pc.embedding_dim = std::size_t(cfg.get_int("synth.dim", 16));
    pc.sigma = cfg.get_double("synth.sigma", 0.05);
    pc.n_symbols = std::size_t(cfg.get_int("synth.symbols", 8));
    pc.peak_mass = cfg.get_double("synth.peak_mass", 0.85);
    pc.symbols_per_record = std::size_t(cfg.get_int("synth.symbols_per_record", 16));
    pc.query = cfg.get_string("synth.query", "hi");
    pc.validate();
    return pc;
}

// ---- synth ----

int cmd_synth(const Config& cfg) {
    const fs::path out_dir = ensure_out_dir(cfg);
    const bool force = cfg.get_bool("force", false);
    const std::uint64_t seed = cfg.get_u64("seed", 42);
    const std::string flavor = cfg.get_string("synth.flavor", "lm");
    const std::size_t n_users = std::size_t(cfg.get_int("synth.users", 200));
    const std::size_t per_user = std::size_t(cfg.get_int("synth.records_per_user", 50));
    const double hint_fraction = cfg.get_double("synth.hint_fraction", 0.5);

    const PopulationConfig pop_cfg = population_config_from(cfg);
    const SyntheticPopulation pop = SyntheticPopulation::generate(pop_cfg, n_users, seed);
    const UserSplits splits = split_users_80_10_10(n_users, seed);
    std::set<std::size_t> train_users(splits.train.begin(), splits.train.end());
    std::set<std::size_t> dev_users(splits.dev.begin(), splits.dev.end());

    std::vector<std::string> names = {"train.jsonl", "dev.jsonl", "test.jsonl",
                                      "pretrain.jsonl", "oracle.json", "synth.meta.json"};
    if (flavor == "rec") {
        names.push_back("codebook.ckpt");
        names.push_back("items.json");
    }
    for (const std::string& name : names) require_fresh(out_dir / name, force);

    // per-split record lists
    auto split_of = [&](std::size_t user) {
        if (train_users.count(user)) return 0;
        if (dev_users.count(user)) return 1;
        return 2;
    };

    std::vector<LMRecord> lm_split[3];
    std::vector<PrefRecord> pref_split[3];
    std::vector<LMRecord> pretrain_records;
    Codebook codebook;
    SynthItems items;

    if (flavor == "lm" || flavor == "rec") {
        std::vector<SynthRecord> records;
        if (flavor == "lm") {
            records = synth_lm_records(pop, per_user, seed);
        } else {
            items = synth_items(pop, std::size_t(cfg.get_int("synth.items_per_cluster", 8)),
                                seed);
            codebook = build_codebook(items.embeddings,
                                      std::size_t(cfg.get_int("synth.codebook_size", 8)), seed);
            std::vector<int> ids;
            for (const auto& emb : items.embeddings) ids.push_back(codebook.assign(emb));
            records = synth_rec_records(pop, items, ids, per_user, seed);
        }
        std::vector<SynthRecord> train_records;
        for (const SynthRecord& sr : records) {
            lm_split[split_of(sr.user)].push_back(sr.record);
            if (train_users.count(sr.user)) train_records.push_back(sr);
        }
        pretrain_records = pretrain_corpus(pop, train_records, hint_fraction, seed);
        save_lm_jsonl((out_dir / "train.jsonl").string(), lm_split[0]);
        save_lm_jsonl((out_dir / "dev.jsonl").string(), lm_split[1]);
        save_lm_jsonl((out_dir / "test.jsonl").string(), lm_split[2]);
    } else if (flavor == "pref") {
        const auto records = synth_pref_records(pop, per_user, seed);
        std::vector<SynthRecord> positives; // pretraining sees positive texts only
        for (const SynthPrefRecord& sr : records) {
            pref_split[split_of(sr.user)].push_back(sr.record);
            if (train_users.count(sr.user) && sr.record.label == 1) {
                SynthRecord pre;
                pre.user = sr.user;
                pre.record.uservector = sr.record.uservector;
                pre.record.text = sr.record.prompt + sr.record.completion;
                positives.push_back(std::move(pre));
            }
        }
        pretrain_records = pretrain_corpus(pop, positives, hint_fraction, seed);
        save_pref_jsonl((out_dir / "train.jsonl").string(), pref_split[0]);
        save_pref_jsonl((out_dir / "dev.jsonl").string(), pref_split[1]);
        save_pref_jsonl((out_dir / "test.jsonl").string(), pref_split[2]);
    } else {
        throw ConfigError("synth.flavor must be lm, pref or rec (got \"" + flavor + "\")");
    }

    save_lm_jsonl((out_dir / "pretrain.jsonl").string(), pretrain_records);
    pop.save_json((out_dir / "oracle.json").string());
    if (flavor == "rec") {
        codebook.save((out_dir / "codebook.ckpt").string());
        json items_json;
        items_json["embeddings"] = items.embeddings;
        items_json["cluster"] = items.item_cluster;
        write_json((out_dir / "items.json").string(), items_json);
    }
    cfg.write_resolved((out_dir / "synth.resolved.cfg").string());

    json meta;
    meta["seed"] = seed;
    meta["inputs_digest"] = inputs_digest(cfg, {});
    meta["flavor"] = flavor;
    meta["users"] = {{"train", splits.train}, {"dev", splits.dev}, {"test", splits.test}};
    json files;
    for (const char* name : {"train.jsonl", "dev.jsonl", "test.jsonl", "pretrain.jsonl"})
        files[name] = file_digest_or_empty((out_dir / name).string());
    meta["file_digests"] = files;
    write_json((out_dir / "synth.meta.json").string(), meta);

    std::cout << "synth: wrote " << out_dir.string() << " (train/dev/test = "
              << lm_split[0].size() + pref_split[0].size() << "/"
              << lm_split[1].size() + pref_split[1].size() << "/"
              << lm_split[2].size() + pref_split[2].size() << " records, "
              << pretrain_records.size() << " pretraining texts)\n";
    return kExitOk;
}

// ---- pretrain ----

int cmd_pretrain(const Config& cfg) {
    const fs::path out_dir = ensure_out_dir(cfg);
    const std::string data_path =
        cfg.get_string("data.pretrain", (out_dir / "pretrain.jsonl").string());
    const std::vector<LMRecord> records = load_lm_jsonl(data_path);
    if (records.empty()) throw DataError("pretrain: no records in " + data_path);

    Tokenizer tok;
    std::vector<TokenSequence> corpus;
    corpus.reserve(records.size());
    for (const LMRecord& rec : records) corpus.push_back(tok.tokenize(rec.text));

    const LMConfig mc = lm_config_from(cfg);
    const TrainConfig tc = train_config_from(cfg);

    PretrainReport report;
    const FrozenLMWeights lm = pretrain(corpus, mc, tc, &report);

    const std::string ckpt_path = cfg.get_string("ckpt.lm", (out_dir / "lm.ckpt").string());
    lm.save(ckpt_path);
    cfg.write_resolved((out_dir / "pretrain.resolved.cfg").string());

    json rj;
    rj["seed"] = tc.seed;
    rj["inputs_digest"] = inputs_digest(cfg, {data_path});
    rj["epoch_losses"] = report.epoch_losses;
    rj["n_sequences"] = report.n_sequences;
    rj["lm_digest"] = lm.digest();
    write_json((out_dir / "pretrain_report.json").string(), rj);

    std::cout << "pretrain: " << report.n_sequences << " sequences, loss "
              << report.epoch_losses.front() << " -> " << report.epoch_losses.back()
              << ", frozen digest " << lm.digest().substr(0, 12) << "...\n";
    return kExitOk;
}

// ---- train-e2p ----

int cmd_train_e2p(const Config& cfg) {
    const fs::path out_dir = ensure_out_dir(cfg);
    const std::string lm_path = cfg.get_string("ckpt.lm", (out_dir / "lm.ckpt").string());
    const std::string data_path = cfg.get_string("data.train", (out_dir / "train.jsonl").string());
    const FrozenLMWeights lm = FrozenLMWeights::load(lm_path);
    if (!lm.frozen()) throw ContractError("train-e2p: checkpoint " + lm_path + " is not frozen");

    const std::string objective_name = cfg.get_string("train.objective", "lm");
    const Objective objective = objective_name == "kto" ? Objective::KTO : Objective::LM;
    if (objective_name != "lm" && objective_name != "kto")
        throw ConfigError("train.objective must be lm or kto");

    TrainData data;
    if (objective == Objective::KTO)
        data = load_pref_jsonl(data_path);
    else
        data = load_lm_jsonl(data_path);

    const TrainConfig tc = train_config_from(cfg);
    const std::size_t proj_dim = std::size_t(cfg.get_int("train.proj_dim", 0));

    Tokenizer tok;
    TrainReport report;
    const ProjectionParams phi = train_e2p(lm, data, objective, tc, tok, proj_dim, &report);

    const std::string phi_path = cfg.get_string("ckpt.phi", (out_dir / "phi.ckpt").string());
    phi.save(phi_path, report.objective, tc.alpha, lm.digest());
    cfg.write_resolved((out_dir / "train_e2p.resolved.cfg").string());

    json rj;
    rj["seed"] = tc.seed;
    rj["inputs_digest"] = inputs_digest(cfg, {lm_path, data_path});
    rj["objective"] = report.objective;
    rj["epoch_losses"] = report.epoch_losses;
    rj["n_records"] = report.n_records;
    rj["lm_digest"] = report.lm_digest;
    rj["phi_digest"] = phi.compute_digest();
    write_json((out_dir / "train_e2p_report.json").string(), rj);

    std::cout << "train-e2p: " << report.n_records << " records, loss "
              << report.epoch_losses.front() << " -> " << report.epoch_losses.back() << "\n";
    return kExitOk;
}

// ---- eval ----

std::map<std::string, std::string> profiles_from(const SyntheticPopulation& pop) {
    std::map<std::string, std::string> out;
    for (const SyntheticUser& u : pop.users)
        out[embedding_key(u.embedding)] = pop.profiles[u.cluster];
    return out;
}

int cmd_eval(const Config& cfg) {
    const fs::path out_dir = ensure_out_dir(cfg);
    const std::string task_name = cfg.get_string("task", "synthetic");
    const std::string lm_path = cfg.get_string("ckpt.lm", (out_dir / "lm.ckpt").string());
    const std::string phi_path = cfg.get_string("ckpt.phi", (out_dir / "phi.ckpt").string());
    const std::string test_path = cfg.get_string("data.test", (out_dir / "test.jsonl").string());
    const std::string oracle_path =
        cfg.get_string("data.oracle", (out_dir / "oracle.json").string());

    const FrozenLMWeights lm = FrozenLMWeights::load(lm_path);
    Tokenizer tok;

    EvalTask task;
    task.lm = &lm;
    task.tok = &tok;
    task.seed = cfg.get_u64("seed", 42);
    task.hitrate_k = std::size_t(cfg.get_int("eval.k", 30));
    task.temperature = cfg.get_double("eval.temperature", 1.0);
    task.split_digest = sha256_file_hex(test_path);
    task.config_digest = sha256_hex(cfg.resolved_text());

    const std::string flavor = cfg.get_string("synth.flavor", "lm");
    if (flavor == "rec")
        task.metric = TaskMetric::Hitrate;
    else if (flavor == "pref" || task_name == "pens")
        task.metric = TaskMetric::Rouge;
    else
        task.metric = TaskMetric::Perplexity;
    if (task.metric == TaskMetric::Rouge)
        task.pref_records = load_pref_jsonl(test_path);
    else
        task.records = load_lm_jsonl(test_path);

    const std::vector<std::string> kinds =
        cfg.get_list("eval.baselines", {"NoContext", "E2PRandom", "E2P"});

    // the projection is only loaded when some requested baseline needs it
    bool needs_phi = false;
    for (const std::string& name : kinds) {
        const BaselineKind k = baseline_from_name(name);
        needs_phi = needs_phi || k == BaselineKind::E2P || k == BaselineKind::E2PRandom ||
                    k == BaselineKind::E2PPlusPrompt;
    }
    if (needs_phi) {
        const LoadedProjection loaded = load_projection(phi_path, lm.digest());
        if (loaded.lm_digest != lm.digest())
            throw ConfigError("eval: " + phi_path + " was trained against a different frozen "
                              "model; retrain it or point ckpt.lm at the matching checkpoint");
        task.phi = loaded.phi;
    }

    SyntheticPopulation pop;
    bool have_oracle = false;
    if (fs::exists(oracle_path)) {
        pop = SyntheticPopulation::load_json(oracle_path);
        task.profiles = profiles_from(pop);
        have_oracle = true;
    }
    const std::string items_path = cfg.get_string("data.items", (out_dir / "items.json").string());
    if (fs::exists(items_path)) {
        const json items_json = load_json(items_path);
        task.items = items_json.at("embeddings").get<std::vector<std::vector<double>>>();
        const std::string cb_path =
            cfg.get_string("ckpt.codebook", (out_dir / "codebook.ckpt").string());
        const Codebook cb = Codebook::load(cb_path);
        for (const auto& emb : task.items) task.item_ids.push_back(cb.assign(emb));
    }

    std::vector<std::pair<BaselineKind, EvalReport>> reports;
    for (const std::string& name : kinds) {
        const BaselineKind kind = baseline_from_name(name);
        EvalReport report = run_baseline(kind, task);
        report.extra["inputs_digest"] = inputs_digest(cfg, {lm_path, test_path});
        write_json((out_dir / ("report_" + name + ".json")).string(), report.to_json());
        std::cout << "eval " << name << ": " << report.metric << " = " << report.aggregate
                  << "\n";
        reports.emplace_back(kind, std::move(report));
    }

    ComparisonTable table = make_comparison(reports);

    // significance markers in the style of the results table: dagger against
    // NoContext, star against PromptContext
    auto find_report = [&](BaselineKind k) -> const EvalReport* {
        for (const auto& [kind, rep] : reports)
            if (kind == k) return &rep;
        return nullptr;
    };
    const EvalReport* no_context = find_report(BaselineKind::NoContext);
    const EvalReport* prompt_context = find_report(BaselineKind::PromptContext);
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& [kind, rep] = reports[i];
        if (kind == BaselineKind::NoContext || kind == BaselineKind::EmbeddingRetrieval) continue;
        std::string marker;
        if (no_context && no_context->per_example.size() == rep.per_example.size() &&
            paired_t_test(rep.per_example, no_context->per_example).significant)
            marker += "+";
        if (prompt_context && kind != BaselineKind::PromptContext &&
            prompt_context->per_example.size() == rep.per_example.size() &&
            paired_t_test(rep.per_example, prompt_context->per_example).significant)
            marker += "*";
        table.rows[i].marker = marker;
    }

    json cj = table.to_json();
    cj["seed"] = task.seed;
    cj["split_digest"] = task.split_digest;
    cj["inputs_digest"] = inputs_digest(cfg, {lm_path, test_path});
    if (have_oracle && task.metric == TaskMetric::Perplexity) {
        std::vector<std::size_t> clusters;
        for (const LMRecord& rec : task.records) {
            const std::size_t uid = pop.find_user(rec.uservector);
            if (uid != std::numeric_limits<std::size_t>::max())
                clusters.push_back(pop.users[uid].cluster);
        }
        if (clusters.size() == task.records.size())
            cj["oracle_perplexity"] = pop.oracle_perplexity(clusters);
    }
    write_json((out_dir / "comparison.json").string(), cj);
    {
        std::ofstream out(out_dir / "comparison.txt");
        out << "# seed=" << task.seed << " inputs=" << cj["inputs_digest"].get<std::string>()
            << "\n";
        out << table.render();
    }
    cfg.write_resolved((out_dir / "eval.resolved.cfg").string());
    std::cout << table.render();
    return kExitOk;
}

// ---- ttest ----

int cmd_ttest(const Config& cfg, const std::string& path_a, const std::string& path_b) {
    const fs::path out_dir = ensure_out_dir(cfg);
    const EvalReport a = EvalReport::from_json(load_json(path_a));
    const EvalReport b = EvalReport::from_json(load_json(path_b));
    if (a.split_digest != b.split_digest)
        throw ConfigError("ttest: reports come from different test splits; refusing to pair them");
    if (a.per_example.empty() || b.per_example.empty())
        throw DataError("ttest: reports lack per-example scores");

    const TTestResult r = paired_t_test(a.per_example, b.per_example);
    const std::string name_a = a.extra.value("baseline", fs::path(path_a).stem().string());
    const std::string name_b = b.extra.value("baseline", fs::path(path_b).stem().string());

    json rj;
    rj["a"] = name_a;
    rj["b"] = name_b;
    rj["metric"] = a.metric;
    rj["t"] = r.t;
    rj["p"] = r.p;
    rj["significant"] = r.significant;
    rj["degenerate"] = r.degenerate;
    rj["n"] = a.per_example.size();
    rj["seed"] = a.seed;
    rj["inputs_digest"] = inputs_digest(cfg, {path_a, path_b});
    rj["marker"] = r.significant ? "+" : "";
    write_json((out_dir / ("ttest_" + name_a + "_vs_" + name_b + ".json")).string(), rj);

    std::cout << name_a << " vs " << name_b << ": t = " << r.t << ", p = " << r.p << " -> "
              << (r.degenerate ? "no difference"
                               : (r.significant ? "significant (+)" : "not significant"))
              << "\n";
    return kExitOk;
}

// ---- export-prefix-space ----

int cmd_export_prefix_space(const Config& cfg) {
    const fs::path out_dir = ensure_out_dir(cfg);
    const std::string phi_path = cfg.get_string("ckpt.phi", (out_dir / "phi.ckpt").string());
    const std::string oracle_path =
        cfg.get_string("data.oracle", (out_dir / "oracle.json").string());
    const LoadedProjection loaded = load_projection(phi_path);
    const SyntheticPopulation pop = SyntheticPopulation::load_json(oracle_path);

    std::vector<LabeledPoint> points;
    for (const SyntheticUser& u : pop.users) points.push_back({u.id, u.cluster, u.embedding});

    const std::string csv_path = (out_dir / "prefix_space.csv").string();
    const std::size_t neighbors = std::size_t(cfg.get_int("export.neighbors", 10));
    const PrefixSpaceExport result = export_prefix_space(loaded.phi, points, csv_path, neighbors);

    json rj;
    rj["seed"] = cfg.get_u64("seed", 42);
    rj["inputs_digest"] = inputs_digest(cfg, {phi_path, oracle_path});
    rj["embedding_agreement"] = result.embedding_agreement;
    rj["prefix_agreement"] = result.prefix_agreement;
    rj["n_points"] = result.n_points;
    rj["n_neighbors"] = result.n_neighbors;
    rj["csv"] = csv_path;
    write_json((out_dir / "prefix_space.json").string(), rj);
    cfg.write_resolved((out_dir / "export.resolved.cfg").string());

    std::cout << "export-prefix-space: agreement embedding " << result.embedding_agreement
              << ", prefix " << result.prefix_agreement << " (" << result.n_points
              << " points)\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"embedding-to-prefix personalization pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir, ttest_a, ttest_b;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
    bool force = false;

    app.add_option("--config", config_path, "key = value config file");
    app.add_option("--seed", seed, "global seed override");
    app.add_option("--out", out_dir, "output directory");
    app.add_flag("--force", force, "overwrite existing outputs");
    app.add_option("--set", overrides, "extra key=value overrides")->take_all();

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic personalization corpus");
    CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "train and freeze the base model");
    CLI::App* train_cmd = app.add_subcommand("train-e2p", "train the projection against a frozen model");
    CLI::App* eval_cmd = app.add_subcommand("eval", "run baselines and build the comparison table");
    CLI::App* ttest_cmd = app.add_subcommand("ttest", "paired significance test of two reports");
    CLI::App* export_cmd =
        app.add_subcommand("export-prefix-space", "2-D structure export with neighbor agreement");

    ttest_cmd->add_option("--a", ttest_a, "first report JSON")->required();
    ttest_cmd->add_option("--b", ttest_b, "second report JSON")->required();

    // global flags are accepted after the subcommand name too
    for (CLI::App* sub : {synth, pretrain_cmd, train_cmd, eval_cmd, ttest_cmd, export_cmd})
        sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        Config cfg;
        if (!config_path.empty()) cfg = Config::from_file(config_path);
        for (const std::string& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got \"" + kv + "\"");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed >= 0) cfg.set("seed", std::to_string(seed));
        if (!out_dir.empty()) cfg.set("out_dir", out_dir);
        if (force) cfg.set("force", "true");

        if (synth->parsed()) return cmd_synth(cfg);
        if (pretrain_cmd->parsed()) return cmd_pretrain(cfg);
        if (train_cmd->parsed()) return cmd_train_e2p(cfg);
        if (eval_cmd->parsed()) return cmd_eval(cfg);
        if (ttest_cmd->parsed()) return cmd_ttest(cfg, ttest_a, ttest_b);
        if (export_cmd->parsed()) return cmd_export_prefix_space(cfg);
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ContractError& e) {
        std::cerr << "contract violation: " << e.what() << "\n";
        return kExitContract;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
