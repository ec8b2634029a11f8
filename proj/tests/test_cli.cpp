#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// End-to-end checks of the command-line pipeline. The binary path arrives via
// the E2P_BIN environment variable set by the test harness.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "e2p/digest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string bin() {
    const char* env = std::getenv("E2P_BIN");
    REQUIRE_MESSAGE(env != nullptr, "E2P_BIN must point at the cli binary");
    return env;
}

int run(const std::string& args) {
    const std::string cmd = bin() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& child) const { return (path / child).string(); }
};

const std::string kTinySynth =
    "--set synth.users=20 synth.records_per_user=6 synth.dim=8";
const std::string kTinyLM =
    "lm.hidden_dim=32 lm.n_layers=1 lm.n_heads=2 lm.max_seq_len=64";

json read_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), ("missing file: " + path).c_str());
    json obj;
    in >> obj;
    return obj;
}

} // namespace

TEST_CASE("synth is byte-identical under a fixed seed and refuses overwrites") {
    TempDir dir("e2p_cli_synth");
    REQUIRE(run("synth --out " + dir / "a" + " --seed 42 " + kTinySynth) == 0);
    REQUIRE(run("synth --out " + dir / "b" + " --seed 42 " + kTinySynth) == 0);

    for (const std::string name : {"train.jsonl", "dev.jsonl", "test.jsonl", "pretrain.jsonl",
                                   "oracle.json"}) {
        CHECK(e2p::sha256_file_hex(dir / ("a/" + name)) ==
              e2p::sha256_file_hex(dir / ("b/" + name)));
    }

    // refusal without --force, success with it
    CHECK(run("synth --out " + dir / "a" + " --seed 42 " + kTinySynth) == 2);
    CHECK(run("synth --out " + dir / "a" + " --seed 42 --force " + kTinySynth) == 0);
}

TEST_CASE("synth splits 80/10/10 by user with no user crossing splits") {
    TempDir dir("e2p_cli_split");
    REQUIRE(run("synth --out " + dir / "s" + " --seed 7 " + kTinySynth) == 0);
    const json meta = read_json(dir / "s/synth.meta.json");
    const auto train = meta.at("users").at("train").get<std::vector<std::size_t>>();
    const auto dev = meta.at("users").at("dev").get<std::vector<std::size_t>>();
    const auto test = meta.at("users").at("test").get<std::vector<std::size_t>>();
    CHECK(train.size() == 16); // 80/10/10 of 20 users
    CHECK(dev.size() == 2);
    CHECK(test.size() == 2);

    std::set<std::size_t> all(train.begin(), train.end());
    for (std::size_t u : dev) CHECK(all.insert(u).second);
    for (std::size_t u : test) CHECK(all.insert(u).second);
    CHECK(all.size() == 20);
}

TEST_CASE("configuration and data errors map to exit codes 2 and 3") {
    TempDir dir("e2p_cli_err");
    // unknown config key
    std::ofstream(dir / "bad.cfg") << "no.such.key = 1\n";
    CHECK(run("synth --config " + dir / "bad.cfg" + " --out " + dir / "x") == 2);
    // missing data file
    CHECK(run("pretrain --out " + dir / "void" + " --set data.pretrain=" + dir / "nope.jsonl") ==
          3);
    // include works exactly one level deep
    std::ofstream(dir / "base.cfg") << "seed = 9\n";
    std::ofstream(dir / "top.cfg") << "include base.cfg\nsynth.users = 20\n";
    std::ofstream(dir / "loop.cfg") << "include loop2.cfg\n";
    std::ofstream(dir / "loop2.cfg") << "include base.cfg\n";
    CHECK(run("synth --config " + dir / "top.cfg" + " --out " + dir / "inc" +
              " --set synth.records_per_user=6 synth.dim=8") == 0);
    CHECK(run("synth --config " + dir / "loop.cfg" + " --out " + dir / "inc2") == 2);
}

TEST_CASE("full tiny pipeline: pretrain, train, eval, ttest, export") {
    TempDir dir("e2p_cli_pipe");
    const std::string out = dir / "run";
    REQUIRE(run("synth --out " + out + " --seed 42 " + kTinySynth) == 0);
    REQUIRE(run("pretrain --out " + out + " --seed 42 --set " + kTinyLM +
                " train.lr=3e-3 train.batch=16 train.epochs=3") == 0);
    REQUIRE(run("train-e2p --out " + out + " --seed 42 --set train.epochs=1") == 0);
    REQUIRE(run("eval --out " + out + " --seed 42 --set eval.baselines=NoContext,E2P") == 0);

    CHECK(fs::exists(out + "/report_NoContext.json"));
    CHECK(fs::exists(out + "/report_E2P.json"));
    CHECK(fs::exists(out + "/comparison.json"));
    CHECK(fs::exists(out + "/comparison.txt"));
    CHECK(fs::exists(out + "/eval.resolved.cfg"));

    const json comparison = read_json(out + "/comparison.json");
    REQUIRE(comparison.at("rows").size() == 2);
    CHECK(comparison.at("rows")[0].at("context_length") == 0.0);
    CHECK(comparison.at("rows")[1].at("context_length") == 1.0);
    CHECK(comparison.contains("oracle_perplexity"));

    // reports embed seed and input digests
    const json report = read_json(out + "/report_E2P.json");
    CHECK(report.at("seed") == 42);
    CHECK(report.at("extra").contains("inputs_digest"));
    CHECK(!report.at("split_digest").get<std::string>().empty());

    // idempotent: re-running eval reproduces the reports byte-for-byte
    const std::string before = e2p::sha256_file_hex(out + "/report_E2P.json");
    REQUIRE(run("eval --out " + out + " --seed 42 --set eval.baselines=NoContext,E2P") == 0);
    CHECK(e2p::sha256_file_hex(out + "/report_E2P.json") == before);

    // and re-running pretraining reproduces the checkpoint byte-for-byte
    const std::string ckpt_before = e2p::sha256_file_hex(out + "/lm.ckpt");
    REQUIRE(run("pretrain --out " + out + " --seed 42 --set " + kTinyLM +
                " train.lr=3e-3 train.batch=16 train.epochs=3") == 0);
    CHECK(e2p::sha256_file_hex(out + "/lm.ckpt") == ckpt_before);

    REQUIRE(run("ttest --a " + out + "/report_E2P.json --b " + out +
                "/report_NoContext.json --out " + out) == 0);
    CHECK(fs::exists(out + "/ttest_E2P_vs_NoContext.json"));

    REQUIRE(run("export-prefix-space --out " + out + " --seed 42") == 0);
    CHECK(fs::exists(out + "/prefix_space.csv"));
    CHECK(fs::exists(out + "/prefix_space.json"));
}

TEST_CASE("eval refuses a projection trained against a different frozen model") {
    TempDir dir("e2p_cli_stale");
    const std::string out = dir / "run";
    REQUIRE(run("synth --out " + out + " --seed 42 " + kTinySynth) == 0);
    REQUIRE(run("pretrain --out " + out + " --seed 42 --set " + kTinyLM +
                " train.lr=3e-3 train.batch=16 train.epochs=1") == 0);
    REQUIRE(run("train-e2p --out " + out + " --seed 42 --set train.epochs=1") == 0);
    // retrain the base model with a different seed: phi is now stale
    REQUIRE(run("pretrain --out " + out + " --seed 43 --set " + kTinyLM +
                " train.lr=3e-3 train.batch=16 train.epochs=1") == 0);
    CHECK(run("eval --out " + out + " --seed 42 --set eval.baselines=E2P") == 2);
    // baselines that need no projection still run
    CHECK(run("eval --out " + out + " --seed 42 --set eval.baselines=NoContext") == 0);
}

TEST_CASE("ttest refuses reports from different test splits") {
    TempDir dir("e2p_cli_ttsplit");
    const std::string a = dir / "a";
    const std::string b = dir / "b";
    for (const auto& [out, seed] : {std::pair{a, 42}, std::pair{b, 43}}) {
        REQUIRE(run("synth --out " + out + " --seed " + std::to_string(seed) + " " +
                    kTinySynth) == 0);
        REQUIRE(run("pretrain --out " + out + " --seed 42 --set " + kTinyLM +
                    " train.lr=3e-3 train.batch=16 train.epochs=1") == 0);
        REQUIRE(run("eval --out " + out + " --seed 42 --set eval.baselines=NoContext") == 0);
    }
    CHECK(run("ttest --a " + a + "/report_NoContext.json --b " + b +
              "/report_NoContext.json --out " + dir / "t") == 2);
}

TEST_CASE("preference flavor trains with the kto objective and scores rouge") {
    TempDir dir("e2p_cli_pref");
    const std::string out = dir / "run";
    REQUIRE(run("synth --out " + out + " --seed 42 --set synth.flavor=pref synth.users=20 "
                "synth.records_per_user=6 synth.dim=8") == 0);
    REQUIRE(run("pretrain --out " + out + " --seed 42 --set " + kTinyLM +
                " train.lr=3e-3 train.batch=16 train.epochs=2") == 0);
    REQUIRE(run("train-e2p --out " + out +
                " --seed 42 --set train.objective=kto train.epochs=1 train.batch=8") == 0);
    REQUIRE(run("eval --out " + out +
                " --seed 42 --set synth.flavor=pref eval.baselines=NoContext,E2P") == 0);
    const json report = read_json(out + "/report_E2P.json");
    CHECK(report.at("metric") == "rougeL");
    CHECK(report.at("extra").contains("rouge1"));
}

TEST_CASE("recommendation flavor quantizes targets and scores hitrate") {
    TempDir dir("e2p_cli_rec");
    const std::string out = dir / "run";
    REQUIRE(run("synth --out " + out + " --seed 42 --set synth.flavor=rec synth.users=20 "
                "synth.records_per_user=4 synth.dim=8 synth.items_per_cluster=4 "
                "synth.codebook_size=8") == 0);
    CHECK(fs::exists(out + "/codebook.ckpt"));
    CHECK(fs::exists(out + "/items.json"));
    REQUIRE(run("pretrain --out " + out + " --seed 42 --set " + kTinyLM +
                " train.lr=3e-3 train.batch=16 train.epochs=2") == 0);
    REQUIRE(run("train-e2p --out " + out + " --seed 42 --set train.epochs=1") == 0);
    REQUIRE(run("eval --out " + out + " --seed 42 --set synth.flavor=rec eval.k=10 "
                "eval.baselines=NoContext,E2P,EmbeddingRetrieval") == 0);
    const json comparison = read_json(out + "/comparison.json");
    CHECK(comparison.at("metric") == "hitrate@10");
    // retrieval reports no generative context length
    bool saw_retrieval = false;
    for (const auto& row : comparison.at("rows")) {
        if (row.at("method") == "EmbeddingRetrieval") {
            CHECK(row.at("context_length").is_null());
            saw_retrieval = true;
        }
    }
    CHECK(saw_retrieval);
}
