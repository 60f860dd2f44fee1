#include <doctest.h>

#include <fstream>
#include <sstream>

#include "funad/cli.hpp"
#include "funad/inference.hpp"
#include "oracles.hpp"

using namespace funad;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string P(const oracle::TempDir& d, const std::string& name) { return (d / name).string(); }

}  // namespace

TEST_CASE("help and usage errors") {
    auto h = invoke({"--help"});
    CHECK(h.code == 0);
    CHECK(h.out.find("repro-motivation") != std::string::npos);
    CHECK(invoke({"train", "--help"}).code == 0);
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"bogus"}).code == 2);
    CHECK(invoke({"synth", "--out", "x.funf", "--no-such-flag"}).code == 2);
    CHECK(invoke({"train"}).code == 2);  // --features is required
    CHECK(invoke({"train", "--features", "x", "--epochs", "abc"}).code == 2);
}

TEST_CASE("runtime failures exit with 1 and a diagnostic") {
    auto r = invoke({"train", "--features", "definitely_missing.funf"});
    CHECK(r.code == 1);
    CHECK(r.err.find("not found") != std::string::npos);
    oracle::TempDir d("cli_err");
    write(d / "bad.json", R"({"nonsense": 1})");
    auto s = invoke({"synth", "--config", P(d, "bad.json"), "--out", P(d, "x.funf")});
    CHECK(s.code == 1);
    CHECK(s.err.find("nonsense") != std::string::npos);
}

TEST_CASE("train config JSON defaults and overrides") {
    const TrainConfig c = cli::train_config_from_json(json::object());
    CHECK(c.ms_weight == 2.5);
    CHECK(c.thresholds.tau_b == 0.5);
    CHECK(c.thresholds.tau_n == 0.5);
    CHECK(c.thresholds.tau_c == 0.9);
    CHECK(c.optimizer.lr == 2e-5);
    CHECK(c.optimizer.momentum == 0.2);
    CHECK(c.batch_images == 32);
    CHECK(c.sample_ratio == 0.5);
    CHECK(c.epochs == 1500);
    CHECK(kDefaultBlurSigma == 4.0);
    const TrainConfig o = cli::train_config_from_json(
        json{{"lambda", 0.0}, {"tau_n", 0.4}, {"adaptor", "second"}, {"pair_constraint", "strict"}, {"augment", false}});
    CHECK(o.ms_weight == 0.0);
    CHECK(o.thresholds.tau_n == 0.4);
    CHECK(o.adaptor == AdaptorBoundary::SecondHidden);
    CHECK(o.pair_constraint == PairConstraint::DistinctImageAndPosition);
    CHECK_FALSE(o.augment);
    CHECK_THROWS(cli::train_config_from_json(json{{"tau_n", 0.95}}));
    CHECK_THROWS(cli::train_config_from_json(json{{"epochs", "many"}}));
}

TEST_CASE("synthetic config JSON accepts scalar or vector means") {
    auto c = cli::synthetic_config_from_json(json{{"dim", 3}, {"mu_anomaly", 1.5}, {"sigma_anomaly", 2.0}});
    CHECK(c.mu_anomaly == std::vector<double>{1.5, 1.5, 1.5});
    auto v = cli::synthetic_config_from_json(json{{"dim", 2}, {"mu_normal", {0.5, -1.0}}});
    CHECK(v.mu_normal == std::vector<double>{0.5, -1.0});
    CHECK_THROWS(cli::synthetic_config_from_json(json{{"dim", 2}, {"mu_normal", {0.5}}}));
}

TEST_CASE("end-to-end pipeline: synth, contaminate, train, infer, eval") {
    oracle::TempDir d("cli_e2e");
    write(d / "toy.json", R"({"dim": 16, "n_normal": 300, "n_anomaly": 200, "mu_anomaly": 1.5,
                               "sigma_anomaly": 1.4142135623730951, "patches_per_image": 4, "seed": 3})");
    write(d / "test.json", R"({"dim": 16, "n_normal": 100, "n_anomaly": 100, "mu_anomaly": 1.5,
                               "sigma_anomaly": 1.4142135623730951, "patches_per_image": 4, "seed": 99})");
    REQUIRE(invoke({"synth", "--config", P(d, "toy.json"), "--out", P(d, "pool.funf")}).code == 0);
    REQUIRE(invoke({"synth", "--config", P(d, "test.json"), "--out", P(d, "test.funf")}).code == 0);
    auto c = invoke({"contaminate", "--source", P(d, "pool.funf"), "--ratio", "0.1", "--seed", "4", "--out",
                  P(d, "train.funf"), "--truth", P(d, "train_truth.funl"), "--moved", P(d, "moved.json")});
    REQUIRE(c.code == 0);
    CHECK(c.out.find("330 images") != std::string::npos);
    auto moved = json::parse(std::ifstream(d / "moved.json"));
    CHECK(moved["moved_anomalies"].size() == 30);

    auto t = invoke({"train", "--features", P(d, "train.funf"), "--epochs", "15", "--hidden1", "32", "--hidden2", "16",
                  "--lr", "1e-3", "--seed", "5", "--checkpoint", P(d, "net.funw"), "--log", P(d, "log.jsonl"),
                  "--truth", P(d, "train_truth.funl"), "--threads", "2"});
    REQUIRE(t.code == 0);
    std::ifstream log(d / "log.jsonl");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(log, line)) {
        auto j = json::parse(line);
        CHECK(j.contains("bank_purity"));
        CHECK(std::fabs(j["total"].get<double>() - j["l_phi"].get<double>() - 2.5 * j["l_ms"].get<double>()) < 1e-12);
        ++rows;
    }
    CHECK(rows == 15 * 11);

    auto inf = invoke({"infer", "--checkpoint", P(d, "net.funw"), "--features", P(d, "test.funf"), "--scores",
                    P(d, "scores.csv"), "--maps", P(d, "maps.funa"), "--height", "16", "--width", "16"});
    REQUIRE(inf.code == 0);
    auto maps = read_map_file(d / "maps.funa");
    CHECK(maps.size() == 200);
    CHECK(maps[0].height == 16);

    auto ev = invoke({"eval", "--scores", P(d, "scores.csv"), "--labels", P(d, "test.funl"), "--out", P(d, "eval.json")});
    REQUIRE(ev.code == 0);
    auto report = json::parse(ev.out);
    MESSAGE("held-out image AUROC " << report["image_auroc"].get<double>());
    CHECK(report["image_auroc"].get<double>() > 0.9);
    CHECK(report["n_pos"] == 100);
    CHECK(json::parse(std::ifstream(d / "eval.json")) == report);

    auto ev_missing = invoke({"eval", "--scores", P(d, "scores.csv"), "--labels", P(d, "nope.funl")});
    CHECK(ev_missing.code == 1);
}

TEST_CASE("seeded commands produce byte-identical artifacts across runs and thread counts") {
    oracle::TempDir d("cli_det");
    REQUIRE(invoke({"synth", "--out", P(d, "a.funf"), "--seed", "8"}).code == 0);
    REQUIRE(invoke({"synth", "--out", P(d, "b.funf"), "--seed", "8", "--threads", "3"}).code == 0);
    CHECK(oracle::slurp(d / "a.funf") == oracle::slurp(d / "b.funf"));
    CHECK(oracle::slurp(d / "a.funl") == oracle::slurp(d / "b.funl"));

    REQUIRE(invoke({"contaminate", "--source", P(d, "a.funf"), "--ratio", "0.1", "--seed", "1", "--out", P(d, "t.funf")})
                .code == 0);
    std::vector<std::string> common{"train",    "--features", P(d, "t.funf"), "--epochs", "2",        "--hidden1",
                                    "16",       "--hidden2",  "8",            "--seed",   "6",        "--save-optimizer"};
    auto a = common;
    auto b = common;
    a.insert(a.end(), {"--checkpoint", P(d, "a.funw"), "--log", P(d, "a.jsonl"), "--threads", "1"});
    b.insert(b.end(), {"--checkpoint", P(d, "b.funw"), "--log", P(d, "b.jsonl"), "--threads", "4"});
    REQUIRE(invoke(a).code == 0);
    REQUIRE(invoke(b).code == 0);
    CHECK(oracle::slurp(d / "a.funw") == oracle::slurp(d / "b.funw"));
    CHECK(oracle::slurp(d / "a.jsonl") == oracle::slurp(d / "b.jsonl"));
    CHECK(!oracle::slurp(d / "a.jsonl").empty());
}

TEST_CASE("stats and repro-motivation subcommands") {
    oracle::TempDir d("cli_stats");
    auto s = invoke({"stats", "--dim", "16", "--tau-count", "5"});
    REQUIRE(s.code == 0);
    auto j = json::parse(s.out);
    CHECK(j["analytic"]["ratios"].size() == 5);
    CHECK(j["analytic"]["ratios"][0]["nn_over_aa"].get<double>() == doctest::Approx(256.0).epsilon(0.01));

    REQUIRE(invoke({"synth", "--out", P(d, "s.funf")}).code == 0);
    auto h = invoke({"stats", "--features", P(d, "s.funf"), "--bins", "20", "--csv", P(d, "h.csv")});
    REQUIRE(h.code == 0);
    auto hj = json::parse(h.out);
    CHECK(hj["histogram"]["edges"].size() == 21);
    CHECK(hj["matching_ratio"]["false"].get<double>() < 0.05);
    CHECK(std::filesystem::file_size(d / "h.csv") > 0);

    auto m = invoke({"repro-motivation", "--out", P(d, "mot"), "--seeds", "2"});
    REQUIRE(m.code == 0);
    for (const char* f : {"motivation.json", "histogram.csv", "ratios_separated.csv", "ratios_same_mean.csv",
                          "ratios_far_mean.csv"}) {
        CHECK(std::filesystem::exists(d / "mot" / f));
    }
    CHECK(json::parse(m.out)["matching_ratio"].size() == 2);
}
