#include "funad/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "funad/error.hpp"
#include "funad/eval.hpp"
#include "funad/experiments.hpp"
#include "funad/inference.hpp"
#include "funad/parallel.hpp"
#include "funad/stats.hpp"

namespace funad::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
    if (!j.is_object()) throw ArgumentError(std::string(what) + " config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!known.contains(k)) throw ArgumentError(std::string(what) + " config: unknown key \"" + k + "\"");
    }
}

std::vector<double> vector_or_scalar(const json& v, std::size_t dim) {
    if (v.is_number()) return std::vector<double>(dim, v.get<double>());
    return v.get<std::vector<double>>();
}

AdaptorBoundary parse_adaptor(const std::string& s) {
    if (s == "first") return AdaptorBoundary::FirstHidden;
    if (s == "second") return AdaptorBoundary::SecondHidden;
    throw ArgumentError("adaptor must be \"first\" or \"second\"");
}

PairConstraint parse_pair_constraint(const std::string& s) {
    if (s == "patch") return PairConstraint::DistinctPatch;
    if (s == "strict") return PairConstraint::DistinctImageAndPosition;
    throw ArgumentError("pair constraint must be \"patch\" or \"strict\"");
}

std::vector<std::uint8_t> label_bytes(const std::vector<ImageLabel>& labels) {
    std::vector<std::uint8_t> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] == ImageLabel::Anomaly ? 1 : 0;
    return out;
}

json iteration_json(const IterationLog& e) {
    json j = {{"iteration", e.iteration},
              {"epoch", e.epoch},
              {"l_phi", e.loss.l_phi},
              {"l_ms", e.loss.l_ms},
              {"total", e.loss.total},
              {"n_anomaly_labeled", e.loss.n_anomaly_labeled},
              {"n_normal_labeled", e.loss.n_normal_labeled},
              {"n_ambiguous", e.loss.n_ambiguous},
              {"n_pairs", e.loss.n_pairs},
              {"bank_size", e.bank_size},
              {"bank_images", e.bank_images},
              {"bank_fallback", e.bank_fallback}};
    if (e.bank_purity) j["bank_purity"] = *e.bank_purity;
    return j;
}

json histogram_json(const stats::PairHistogram& h) {
    json j;
    j["edges"] = h.edges;
    for (auto t : stats::kAllPairTypes) {
        const auto k = static_cast<std::size_t>(t);
        j["counts"][std::string(stats::to_string(t))] = h.counts[k];
        j["mean_distance"][std::string(stats::to_string(t))] = h.mean_distance[k];
        j["totals"][std::string(stats::to_string(t))] = h.totals[k];
    }
    return j;
}

std::string histogram_csv(const stats::PairHistogram& h) {
    std::ostringstream os;
    os << "bin_lo,bin_hi,NN,AA,NA\n";
    for (std::size_t k = 0; k + 1 < h.edges.size(); ++k) {
        os << fmt_real(h.edges[k]) << ',' << fmt_real(h.edges[k + 1]) << ',' << h.counts[0][k] << ','
           << h.counts[1][k] << ',' << h.counts[2][k] << '\n';
    }
    return os.str();
}

json matching_json(const stats::MatchingRatioReport& r) {
    return {{"true_normal", r.true_normal},   {"true_anomaly", r.true_anomaly}, {"false", r.false_ratio},
            {"n_pairs", r.n_pairs},           {"nn_pairs", r.nn_pairs},         {"aa_pairs", r.aa_pairs},
            {"na_pairs", r.na_pairs},         {"n_normal", r.n_normal},         {"n_anomaly", r.n_anomaly},
            {"normal_class_empty", r.normal_class_empty}, {"anomaly_class_empty", r.anomaly_class_empty}};
}

std::string ratio_csv(const std::vector<RatioRow>& rows) {
    std::ostringstream os;
    os << "tau,nn_over_aa,nn_over_na\n";
    for (const auto& r : rows) os << fmt_real(r.tau) << ',' << fmt_real(r.nn_over_aa) << ',' << fmt_real(r.nn_over_na) << '\n';
    return os.str();
}

std::vector<double> read_scores_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "image,score") throw FormatError(path.string() + ": expected header \"image,score\"");
    std::vector<double> scores;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError(path.string() + ": malformed row \"" + line + "\"");
        const std::size_t idx = std::stoul(line.substr(0, comma));
        if (idx != scores.size()) throw FormatError(path.string() + ": image indices must be consecutive");
        scores.push_back(std::stod(line.substr(comma + 1)));
    }
    return scores;
}

std::set<std::size_t> read_exclusion(const fs::path& path) {
    const json j = read_json(path);
    const json& list = j.is_object() ? j.at("exclude") : j;
    std::set<std::size_t> out;
    for (const auto& v : list) out.insert(v.get<std::size_t>());
    return out;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string config, out, normal_out, anomaly_out;
    std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    auto cfg = a.config.empty() ? SyntheticGaussianConfig::motivation_default()
                                : synthetic_config_from_json(read_json(a.config));
    if (a.seed) cfg.seed = *a.seed;
    auto [tensor, manifest] = generate_synthetic(cfg);
    save_features(tensor, manifest, a.out);
    if (!a.normal_out.empty() || !a.anomaly_out.empty()) {
        auto [normals, anomalies] = split_by_label(tensor, *manifest.image_labels);
        if (!a.normal_out.empty()) write_feature_file(normals, a.normal_out);
        if (!a.anomaly_out.empty()) write_feature_file(anomalies, a.anomaly_out);
    }
    out << "wrote " << tensor.n_images() << " images (" << cfg.n_normal << " normal, " << cfg.n_anomaly
        << " anomaly), P=" << tensor.n_patches() << ", D=" << tensor.dim() << " to " << a.out << '\n';
    return 0;
}

struct ContaminateArgs {
    std::string normal, anomaly, source, out, truth, moved;
    double ratio = 0.1;
    std::uint64_t seed = 0;
};

int cmd_contaminate(const ContaminateArgs& a, std::ostream& out) {
    FeatureTensor normals, anomalies;
    DatasetManifest nm, am;
    if (!a.source.empty()) {
        auto [t, m] = load_features(a.source);
        if (!m.image_labels) throw ArgumentError("--source needs a sibling labels file");
        std::tie(normals, anomalies) = split_by_label(t, *m.image_labels);
    } else {
        if (a.normal.empty() || a.anomaly.empty()) throw ArgumentError("give --source or both --normal and --anomaly");
        std::tie(normals, nm) = load_features(a.normal);
        std::tie(anomalies, am) = load_features(a.anomaly);
    }
    auto split = contaminate(normals, nm, anomalies, am, a.ratio, a.seed);
    write_feature_file(split.train, a.out);
    const fs::path truth = a.truth.empty() ? fs::path(a.out).replace_extension(".truth.funl") : fs::path(a.truth);
    write_labels_file(*split.truth.image_labels, truth);
    if (split.truth.pixel_masks) write_masks_file(*split.truth.pixel_masks, fs::path(truth).replace_extension(".funm"));
    if (!a.moved.empty()) {
        json j;
        j["moved_anomalies"] = split.moved_anomalies;
        json origin = json::array();
        for (const auto& [label, idx] : split.origin) {
            origin.push_back({{"label", label == ImageLabel::Anomaly ? "anomaly" : "normal"}, {"index", idx}});
        }
        j["origin"] = origin;
        write_text(a.moved, j.dump(2) + "\n");
    }
    out << "train set: " << split.train.n_images() << " images (" << split.moved_anomalies.size()
        << " anomalies); truth labels in " << truth.string() << '\n';
    return 0;
}

struct StatsArgs {
    std::string features, labels, out, csv;
    std::size_t bins = 50;
    std::optional<std::size_t> dim;
    double sigma_normal = 1.0, sigma_anomaly = std::sqrt(2.0), mu_normal = 0.0, mu_anomaly = 1.5;
    double tau_lo = 0.01, tau_hi = 2.0;
    std::size_t tau_count = 25;
};

int cmd_stats(const StatsArgs& a, std::ostream& out) {
    if (a.features.empty() && !a.dim) throw ArgumentError("stats needs --features and/or --dim");
    json report;
    if (a.dim) {
        stats::GaussianPairModel m{*a.dim, std::vector<double>(*a.dim, a.mu_normal),
                                   std::vector<double>(*a.dim, a.mu_anomaly), a.sigma_normal, a.sigma_anomaly};
        json rows = json::array();
        for (const auto& r : ratio_table(m, log_grid(a.tau_lo, a.tau_hi, a.tau_count))) {
            rows.push_back({{"tau", r.tau}, {"nn_over_aa", r.nn_over_aa}, {"nn_over_na", r.nn_over_na}});
        }
        report["analytic"] = {{"dim", m.dim}, {"sigma_normal", m.sigma_normal}, {"sigma_anomaly", m.sigma_anomaly},
                              {"noncentrality", m.noncentrality()}, {"ratios", rows}};
    }
    if (!a.features.empty()) {
        auto [tensor, manifest] = load_features(a.features);
        if (!a.labels.empty()) manifest.image_labels = read_labels_file(a.labels);
        if (!manifest.image_labels) throw ArgumentError("stats needs labels (sibling .funl or --labels)");
        validate_manifest(tensor, manifest);
        const auto hist = stats::distance_histogram(tensor, *manifest.image_labels, a.bins);
        report["histogram"] = histogram_json(hist);
        report["matching_ratio"] = matching_json(stats::matching_ratio(tensor, *manifest.image_labels));
        if (!a.csv.empty()) write_text(a.csv, histogram_csv(hist));
    }
    const std::string text = report.dump(2) + "\n";
    if (!a.out.empty()) write_text(a.out, text);
    out << text;
    return 0;
}

struct TrainArgs {
    std::string features, config, checkpoint, log, truth, validation, adaptor, pair_constraint;
    std::optional<std::size_t> epochs, batch, hidden1, hidden2, checkpoint_every;
    std::optional<double> lambda, tau_b, tau_n, tau_c, sample_ratio, lr, momentum;
    std::optional<std::uint64_t> seed;
    bool no_augment = false;
    bool save_optimizer = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    auto [features, manifest] = load_features(a.features);
    TrainConfig cfg = a.config.empty() ? TrainConfig{} : train_config_from_json(read_json(a.config));
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.batch) cfg.batch_images = *a.batch;
    if (a.hidden1) cfg.hidden1 = *a.hidden1;
    if (a.hidden2) cfg.hidden2 = *a.hidden2;
    if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
    if (a.lambda) cfg.ms_weight = *a.lambda;
    if (a.tau_b) cfg.thresholds.tau_b = *a.tau_b;
    if (a.tau_n) cfg.thresholds.tau_n = *a.tau_n;
    if (a.tau_c) cfg.thresholds.tau_c = *a.tau_c;
    if (a.sample_ratio) cfg.sample_ratio = *a.sample_ratio;
    if (a.lr) cfg.optimizer.lr = *a.lr;
    if (a.momentum) cfg.optimizer.momentum = *a.momentum;
    if (a.seed) cfg.seed = *a.seed;
    if (!a.adaptor.empty()) cfg.adaptor = parse_adaptor(a.adaptor);
    if (!a.pair_constraint.empty()) cfg.pair_constraint = parse_pair_constraint(a.pair_constraint);
    if (a.no_augment) cfg.augment = false;
    cfg.validate();

    TrainHooks hooks;
    if (!a.truth.empty()) hooks.truth = read_labels_file(a.truth);

    std::optional<std::ofstream> log;
    if (!a.log.empty()) {
        log.emplace(a.log, std::ios::trunc);
        if (!*log) throw IoError("cannot open " + a.log + " for writing");
        hooks.on_iteration = [&](const IterationLog& e) { *log << iteration_json(e).dump() << '\n'; };
    }

    // Optional best-on-validation selection; otherwise the final epoch wins.
    std::optional<std::pair<FeatureTensor, std::vector<std::uint8_t>>> val;
    std::optional<LocalNetParams> best;
    double best_auroc = -1.0;
    if (!a.validation.empty()) {
        auto [vt, vm] = load_features(a.validation);
        if (!vm.image_labels) throw ArgumentError("--validation needs a sibling labels file");
        val.emplace(std::move(vt), label_bytes(*vm.image_labels));
        hooks.on_epoch_end = [&](std::size_t, const LocalNetParams& p) {
            const double v = auroc(image_anomaly_scores(p, val->first), val->second);
            if (v > best_auroc) {
                best_auroc = v;
                best = p;
            }
        };
    }
    if (!a.checkpoint.empty() && cfg.checkpoint_every > 0) {
        hooks.on_checkpoint = [&](std::size_t epoch, const LocalNetParams& p, const RmsPropState& s) {
            fs::path path(a.checkpoint);
            path.replace_filename(path.stem().string() + ".epoch" + std::to_string(epoch + 1) +
                                  path.extension().string());
            save_checkpoint(path, p, a.save_optimizer ? &s : nullptr);
        };
    }

    auto result = train(features, cfg, hooks);
    const LocalNetParams& chosen = best ? *best : result.params;
    if (!a.checkpoint.empty()) save_checkpoint(a.checkpoint, chosen, a.save_optimizer ? &result.optimizer : nullptr);
    out << "trained " << result.log.size() << " iterations over " << cfg.epochs << " epochs";
    if (!result.log.empty()) out << "; final loss " << fmt_real(result.log.back().loss.total);
    if (best) out << "; best validation AUROC " << fmt_real(best_auroc);
    out << '\n';
    return 0;
}

struct InferArgs {
    std::string checkpoint, features, scores, maps;
    std::optional<std::size_t> height, width;
    double blur_sigma = kDefaultBlurSigma;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
    const auto ck = load_checkpoint(a.checkpoint);
    auto [features, manifest] = load_features(a.features);
    if (features.dim() != ck.params.d_in()) throw ArgumentError("feature dim does not match checkpoint");
    const auto scores = image_anomaly_scores(ck.params, features);
    std::ostringstream csv;
    csv << "image,score\n";
    for (std::size_t i = 0; i < scores.size(); ++i) csv << i << ',' << fmt_real(scores[i]) << '\n';
    if (!a.scores.empty()) write_text(a.scores, csv.str());
    else out << csv.str();

    if (!a.maps.empty()) {
        const std::size_t h = a.height ? *a.height : manifest.image_h.value_or(0);
        const std::size_t w = a.width ? *a.width : manifest.image_w.value_or(0);
        if (h == 0 || w == 0) throw ArgumentError("--maps needs --height/--width or sibling masks");
        std::vector<AnomalyMap> maps;
        maps.reserve(features.n_images());
        for (std::size_t i = 0; i < features.n_images(); ++i) {
            maps.push_back(anomaly_map(ck.params, features.image(i), features.grid_h(), features.grid_w(), h, w,
                                       a.blur_sigma));
        }
        write_map_file(maps, a.maps);
    }
    if (!a.scores.empty()) out << "scored " << scores.size() << " images\n";
    return 0;
}

struct EvalArgs {
    std::string scores, labels, maps, masks, exclude, out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    DatasetManifest truth;
    truth.image_labels = read_labels_file(a.labels);
    const auto scores = read_scores_csv(a.scores);
    std::vector<AnomalyMap> maps;
    if (!a.maps.empty()) {
        if (a.masks.empty()) throw ArgumentError("--maps needs --masks");
        maps = read_map_file(a.maps);
        truth.pixel_masks = read_masks_file(a.masks);
    }
    const auto exclusion = a.exclude.empty() ? std::set<std::size_t>{} : read_exclusion(a.exclude);
    const auto r = evaluate(scores, maps, truth, exclusion);
    json j = {{"image_auroc", r.image_auroc}, {"n_pos", r.n_pos}, {"n_neg", r.n_neg}, {"n_excluded", r.n_excluded}};
    j["pixel_auroc"] = r.pixel_auroc ? json(*r.pixel_auroc) : json(nullptr);
    const std::string text = j.dump(2) + "\n";
    if (!a.out.empty()) write_text(a.out, text);
    out << text;
    return 0;
}

struct MotivationArgs {
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t seeds = 5;
    std::size_t bins = 50;
};

int cmd_repro_motivation(const MotivationArgs& a, std::ostream& out) {
    const auto taus = log_grid(0.01, 2.0, 25);
    const std::size_t d = 16;
    const stats::GaussianPairModel paper_model{d, std::vector<double>(d, 0.0), std::vector<double>(d, 1.5), 1.0,
                                               std::sqrt(2.0)};
    const stats::GaussianPairModel same_mean{d, std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), 1.0,
                                             std::sqrt(2.0)};
    const stats::GaussianPairModel far_mean{d, std::vector<double>(d, 0.0), std::vector<double>(d, 1.5), 1.0, 1.05};

    json summary;
    auto table = [&](const char* name, const stats::GaussianPairModel& m) {
        const auto rows = ratio_table(m, taus);
        bool all_above = true;
        for (const auto& r : rows) all_above = all_above && r.nn_over_aa > 1.0 && r.nn_over_na > 1.0;
        if (m.sigma_normal == m.sigma_anomaly) all_above = false;
        summary["ratios"][name] = {{"noncentrality", m.noncentrality()},
                                   {"min_nn_over_na", std::min_element(rows.begin(), rows.end(), [](auto& x, auto& y) {
                                                          return x.nn_over_na < y.nn_over_na;
                                                      })->nn_over_na},
                                   {"nn_over_aa_at_min_tau", rows.front().nn_over_aa}};
        if (!a.out_dir.empty()) write_text(fs::path(a.out_dir) / (std::string("ratios_") + name + ".csv"), ratio_csv(rows));
    };
    if (!a.out_dir.empty()) fs::create_directories(a.out_dir);
    table("separated", paper_model);
    table("same_mean", same_mean);
    table("far_mean", far_mean);

    auto cfg = SyntheticGaussianConfig::motivation_default();
    json matching = json::array();
    for (std::size_t s = 0; s < a.seeds; ++s) {
        cfg.seed = a.seed + s;
        auto [tensor, manifest] = generate_synthetic(cfg);
        auto m = matching_json(stats::matching_ratio(tensor, *manifest.image_labels));
        m["seed"] = cfg.seed;
        matching.push_back(m);
        if (s == 0) {
            const auto hist = stats::distance_histogram(tensor, *manifest.image_labels, a.bins);
            summary["histogram_means"] = histogram_json(hist)["mean_distance"];
            if (!a.out_dir.empty()) write_text(fs::path(a.out_dir) / "histogram.csv", histogram_csv(hist));
        }
    }
    summary["matching_ratio"] = matching;
    const std::string text = summary.dump(2) + "\n";
    if (!a.out_dir.empty()) write_text(fs::path(a.out_dir) / "motivation.json", text);
    out << text;
    return 0;
}

struct ToyArgs {
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t iterations = 2000;
    std::optional<double> lambda, lr;
};

int cmd_repro_toy(const ToyArgs& a, std::ostream& out) {
    auto cfg = ToyExperimentConfig::standard(a.seed);
    cfg.min_iterations = a.iterations;
    if (a.lambda) cfg.train.ms_weight = *a.lambda;
    if (a.lr) cfg.train.optimizer.lr = *a.lr;
    const auto r = run_toy_experiment(cfg);
    std::ostringstream os;
    os << "epoch,iteration,test_auroc,bank_purity\n";
    os << "-1,0," << fmt_real(r.initial_test_auroc) << ",\n";
    for (const auto& c : r.trajectory) {
        os << c.epoch << ',' << c.iteration << ',' << fmt_real(c.test_auroc) << ',' << fmt_real(c.bank_purity) << '\n';
    }
    json j = {{"seed", a.seed},
              {"iterations", r.iterations},
              {"initial_test_auroc", r.initial_test_auroc},
              {"final_test_auroc", r.final_test_auroc},
              {"final_bank_purity", r.final_bank_purity},
              {"ms_weight", cfg.train.ms_weight}};
    if (!a.out_dir.empty()) {
        fs::create_directories(a.out_dir);
        write_text(fs::path(a.out_dir) / "trajectory.csv", os.str());
        write_text(fs::path(a.out_dir) / "toy.json", j.dump(2) + "\n");
    }
    out << os.str() << j.dump(2) << '\n';
    return 0;
}

}  // namespace

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    reject_unknown(j,
                   {"ms_weight", "lambda", "lr", "momentum", "alpha", "epsilon", "batch_images", "epochs", "tau_b",
                    "tau_n", "tau_c", "sample_ratio", "seed", "checkpoint_every", "hidden1", "hidden2", "adaptor",
                    "pair_constraint", "augment"},
                   "train");
    try {
        if (j.contains("ms_weight")) c.ms_weight = j["ms_weight"].get<double>();
        if (j.contains("lambda")) c.ms_weight = j["lambda"].get<double>();
        if (j.contains("lr")) c.optimizer.lr = j["lr"].get<double>();
        if (j.contains("momentum")) c.optimizer.momentum = j["momentum"].get<double>();
        if (j.contains("alpha")) c.optimizer.alpha = j["alpha"].get<double>();
        if (j.contains("epsilon")) c.optimizer.epsilon = j["epsilon"].get<double>();
        if (j.contains("batch_images")) c.batch_images = j["batch_images"].get<std::size_t>();
        if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
        if (j.contains("tau_b")) c.thresholds.tau_b = j["tau_b"].get<double>();
        if (j.contains("tau_n")) c.thresholds.tau_n = j["tau_n"].get<double>();
        if (j.contains("tau_c")) c.thresholds.tau_c = j["tau_c"].get<double>();
        if (j.contains("sample_ratio")) c.sample_ratio = j["sample_ratio"].get<double>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("checkpoint_every")) c.checkpoint_every = j["checkpoint_every"].get<std::size_t>();
        if (j.contains("hidden1")) c.hidden1 = j["hidden1"].get<std::size_t>();
        if (j.contains("hidden2")) c.hidden2 = j["hidden2"].get<std::size_t>();
        if (j.contains("adaptor")) c.adaptor = parse_adaptor(j["adaptor"].get<std::string>());
        if (j.contains("pair_constraint")) c.pair_constraint = parse_pair_constraint(j["pair_constraint"].get<std::string>());
        if (j.contains("augment")) c.augment = j["augment"].get<bool>();
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

SyntheticGaussianConfig synthetic_config_from_json(const json& j) {
    reject_unknown(j,
                   {"dim", "n_normal", "n_anomaly", "mu_normal", "mu_anomaly", "sigma_normal", "sigma_anomaly",
                    "patches_per_image", "patch_noise_sigma", "seed"},
                   "synthetic");
    SyntheticGaussianConfig c;
    c.mu_normal.clear();
    c.mu_anomaly.clear();
    try {
        if (j.contains("dim")) c.dim = j["dim"].get<std::size_t>();
        if (j.contains("n_normal")) c.n_normal = j["n_normal"].get<std::size_t>();
        if (j.contains("n_anomaly")) c.n_anomaly = j["n_anomaly"].get<std::size_t>();
        if (j.contains("mu_normal")) c.mu_normal = vector_or_scalar(j["mu_normal"], c.dim);
        if (j.contains("mu_anomaly")) c.mu_anomaly = vector_or_scalar(j["mu_anomaly"], c.dim);
        if (j.contains("sigma_normal")) c.sigma_normal = j["sigma_normal"].get<double>();
        if (j.contains("sigma_anomaly")) c.sigma_anomaly = j["sigma_anomaly"].get<double>();
        if (j.contains("patches_per_image")) c.patches_per_image = j["patches_per_image"].get<std::size_t>();
        if (j.contains("patch_noise_sigma")) c.patch_noise_sigma = j["patch_noise_sigma"].get<double>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("synthetic config: ") + e.what());
    }
    c.validate();
    return c;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fully unsupervised anomaly detection on patch features", "funad"};
    app.require_subcommand(1);
    app.fallthrough();
    std::size_t threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = all cores); results do not depend on it");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Sample two isotropic Gaussian classes into a FUNF/FUNL pair");
    s->add_option("--config", synth.config, "JSON synthetic config (defaults to the 16-dim motivation setup)");
    s->add_option("--out", synth.out, "Output .funf path")->required();
    s->add_option("--normal-out", synth.normal_out, "Also write the normal images alone");
    s->add_option("--anomaly-out", synth.anomaly_out, "Also write the anomaly images alone");
    s->add_option("--seed", synth.seed);

    ContaminateArgs cont;
    auto* c = app.add_subcommand("contaminate", "Mix anomalies into a normal set as unlabeled training data");
    c->add_option("--normal", cont.normal);
    c->add_option("--anomaly", cont.anomaly);
    c->add_option("--source", cont.source, "Labeled .funf to split into normals and anomalies");
    c->add_option("--ratio", cont.ratio, "Anomalies per normal image")->capture_default_str();
    c->add_option("--seed", cont.seed);
    c->add_option("--out", cont.out, "Unlabeled training .funf")->required();
    c->add_option("--truth", cont.truth, "Evaluation-only labels (.funl)");
    c->add_option("--moved", cont.moved, "JSON record of moved anomalies and image origins");

    StatsArgs st;
    auto* sc = app.add_subcommand("stats", "Pairwise-distance statistics and analytic probability ratios");
    sc->add_option("--features", st.features);
    sc->add_option("--labels", st.labels);
    sc->add_option("--bins", st.bins)->capture_default_str();
    sc->add_option("--out", st.out, "JSON report path");
    sc->add_option("--csv", st.csv, "Histogram bin table path");
    sc->add_option("--dim", st.dim, "Feature dimension for the analytic ratio table");
    sc->add_option("--sigma-normal", st.sigma_normal)->capture_default_str();
    sc->add_option("--sigma-anomaly", st.sigma_anomaly)->capture_default_str();
    sc->add_option("--mu-normal", st.mu_normal)->capture_default_str();
    sc->add_option("--mu-anomaly", st.mu_anomaly)->capture_default_str();
    sc->add_option("--tau-min", st.tau_lo)->capture_default_str();
    sc->add_option("--tau-max", st.tau_hi)->capture_default_str();
    sc->add_option("--tau-count", st.tau_count)->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a Local-Net on unlabeled features");
    t->add_option("--features", tr.features)->required();
    t->add_option("--config", tr.config, "JSON train config; flags override it");
    t->add_option("--epochs", tr.epochs);
    t->add_option("--lambda", tr.lambda, "Mutual smoothness weight");
    t->add_option("--tau-b", tr.tau_b);
    t->add_option("--tau-n", tr.tau_n);
    t->add_option("--tau-c", tr.tau_c);
    t->add_option("--sample-ratio", tr.sample_ratio);
    t->add_option("--seed", tr.seed);
    t->add_option("--lr", tr.lr);
    t->add_option("--momentum", tr.momentum);
    t->add_option("--batch", tr.batch, "Images per mini-batch");
    t->add_option("--hidden1", tr.hidden1);
    t->add_option("--hidden2", tr.hidden2);
    t->add_option("--adaptor", tr.adaptor, "Adaptor boundary: first | second");
    t->add_option("--pair-constraint", tr.pair_constraint, "patch | strict");
    t->add_flag("--no-augment", tr.no_augment);
    t->add_option("--checkpoint", tr.checkpoint, "Output .funw");
    t->add_option("--checkpoint-every", tr.checkpoint_every, "Also write <stem>.epochN.funw every N epochs");
    t->add_flag("--save-optimizer", tr.save_optimizer);
    t->add_option("--log", tr.log, "JSON-lines training log");
    t->add_option("--truth", tr.truth, "Training labels, used only for bank purity in the log");
    t->add_option("--validation", tr.validation, "Labeled .funf for best-epoch selection");

    InferArgs inf;
    auto* in = app.add_subcommand("infer", "Image scores and anomaly maps from a checkpoint");
    in->add_option("--checkpoint", inf.checkpoint)->required();
    in->add_option("--features", inf.features)->required();
    in->add_option("--scores", inf.scores, "CSV output (stdout if omitted)");
    in->add_option("--maps", inf.maps, "FUNA output");
    in->add_option("--height", inf.height);
    in->add_option("--width", inf.width);
    in->add_option("--blur-sigma", inf.blur_sigma)->capture_default_str();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "AUROC report");
    e->add_option("--scores", ev.scores)->required();
    e->add_option("--labels", ev.labels)->required();
    e->add_option("--maps", ev.maps);
    e->add_option("--masks", ev.masks);
    e->add_option("--exclude", ev.exclude, "JSON list of image indices to leave out");
    e->add_option("--out", ev.out);

    MotivationArgs mo;
    auto* m = app.add_subcommand("repro-motivation", "Probability ratios, distance histograms, matching ratios");
    m->add_option("--out", mo.out_dir, "Output directory");
    m->add_option("--seed", mo.seed);
    m->add_option("--seeds", mo.seeds)->capture_default_str();
    m->add_option("--bins", mo.bins)->capture_default_str();

    ToyArgs toy;
    auto* ty = app.add_subcommand("repro-toy", "Contaminated-Gaussian end-to-end run with AUROC trajectory");
    ty->add_option("--out", toy.out_dir, "Output directory");
    ty->add_option("--seed", toy.seed);
    ty->add_option("--iterations", toy.iterations)->capture_default_str();
    ty->add_option("--lambda", toy.lambda);
    ty->add_option("--lr", toy.lr);

    std::vector<std::string> argv_store{"funad"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& ex) {
        err << "funad: " << ex.what() << "\n" << "Run with --help for usage.\n";
        return 2;
    }

    set_num_threads(threads);
    try {
        if (s->parsed()) return cmd_synth(synth, out);
        if (c->parsed()) return cmd_contaminate(cont, out);
        if (sc->parsed()) return cmd_stats(st, out);
        if (t->parsed()) return cmd_train(tr, out);
        if (in->parsed()) return cmd_infer(inf, out);
        if (e->parsed()) return cmd_eval(ev, out);
        if (m->parsed()) return cmd_repro_motivation(mo, out);
        if (ty->parsed()) return cmd_repro_toy(toy, out);
    } catch (const std::exception& ex) {
        err << "funad: error: " << ex.what() << '\n';
        return 1;
    }
    return 2;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace funad::cli
