#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "funad/error.hpp"
#include "funad/experiments.hpp"
#include "funad/train.hpp"
#include "oracles.hpp"

using namespace funad;

namespace {

TrainConfig small_config(std::uint64_t seed) {
    TrainConfig c;
    c.seed = seed;
    c.hidden1 = 8;
    c.hidden2 = 4;
    c.batch_images = 8;
    c.epochs = 3;
    c.optimizer.lr = 1e-3;
    return c;
}

FeatureTensor small_features(std::uint64_t seed, std::size_t patches = 2) {
    SyntheticGaussianConfig cfg;
    cfg.dim = 5;
    cfg.n_normal = 30;
    cfg.n_anomaly = 4;
    cfg.mu_anomaly = std::vector<double>(5, 2.0);
    cfg.sigma_anomaly = 1.5;
    cfg.patches_per_image = patches;
    cfg.seed = seed;
    return generate_synthetic(cfg).first;
}

bool same_log(const std::vector<IterationLog>& a, const std::vector<IterationLog>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const auto &x = a[k], &y = b[k];
        if (x.epoch != y.epoch || x.iteration != y.iteration || x.bank_size != y.bank_size ||
            x.bank_images != y.bank_images || x.bank_fallback != y.bank_fallback || x.bank_purity != y.bank_purity ||
            x.loss.l_phi != y.loss.l_phi || x.loss.l_ms != y.loss.l_ms || x.loss.total != y.loss.total ||
            x.loss.n_pairs != y.loss.n_pairs || x.loss.n_ambiguous != y.loss.n_ambiguous ||
            x.loss.n_anomaly_labeled != y.loss.n_anomaly_labeled) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("balanced BCE examples") {
    CHECK(balanced_bce(std::vector<double>{0.5, 0.5, 0.5}, std::vector<std::uint8_t>{1, 0, 0}) ==
          doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));
    CHECK(balanced_bce(std::vector<double>{0.5, 0.5, 0.5}, std::vector<std::uint8_t>{1, 0, 0}) ==
          doctest::Approx(1.386294).epsilon(1e-6));
    CHECK(balanced_bce(std::vector<double>{1.0, 0.0, 0.9999999}, std::vector<std::uint8_t>{1, 0, 1}) < 1e-5);
    // Single class: the absent class contributes nothing.
    CHECK(balanced_bce(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{0, 0}) ==
          doctest::Approx(std::log(2.0)));
    // Clamped at the extremes instead of producing infinity.
    CHECK(balanced_bce(std::vector<double>{0.0}, std::vector<std::uint8_t>{1}) ==
          doctest::Approx(-std::log(1e-7)).epsilon(1e-12));
    CHECK_THROWS_AS(balanced_bce(std::vector<double>{}, std::vector<std::uint8_t>{}), ArgumentError);
}

TEST_CASE("balanced BCE matches a scalar oracle; gradient matches finite differences") {
    std::mt19937_64 g(8);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> s(37);
        std::vector<std::uint8_t> y(37);
        for (std::size_t k = 0; k < 37; ++k) {
            s[k] = u(g);
            y[k] = u(g) < 0.3;
        }
        CHECK(std::fabs(balanced_bce(s, y) - oracle::bce(s, y)) < 1e-10);
        const auto grad = balanced_bce_grad(s, y);
        for (std::size_t k = 0; k < 37; ++k) {
            auto sp = s, sm = s;
            sp[k] += 1e-6;
            sm[k] -= 1e-6;
            CHECK(grad[k] == doctest::Approx((oracle::bce(sp, y) - oracle::bce(sm, y)) / 2e-6).epsilon(1e-6));
        }
    }
}

TEST_CASE("mutual smoothness examples and oracle") {
    MutualPairSet one{{{0, 1}}};
    CHECK(mutual_smoothness(std::vector<double>{0.2, 0.6}, one) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(mutual_smoothness(std::vector<double>{0.3, 0.3}, one) == 0.0);
    CHECK(mutual_smoothness(std::vector<double>{0.3, 0.3}, MutualPairSet{}) == 0.0);
    CHECK_THROWS_AS(mutual_smoothness(std::vector<double>{0.3}, one), ArgumentError);

    std::mt19937_64 g(2);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> s(100);
    for (auto& v : s) v = u(g);
    std::vector<std::size_t> idx(100);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), g);
    MutualPairSet pairs;
    for (std::size_t k = 0; k < 50; ++k) {
        pairs.pairs.emplace_back(std::min(idx[2 * k], idx[2 * k + 1]), std::max(idx[2 * k], idx[2 * k + 1]));
    }
    CHECK(std::fabs(mutual_smoothness(s, pairs) - oracle::ms(s, pairs.pairs)) < 1e-12);
    const auto grad = mutual_smoothness_grad(s, pairs);
    for (std::size_t k = 0; k < 100; ++k) {
        auto sp = s, sm = s;
        sp[k] += 1e-7;
        sm[k] -= 1e-7;
        CHECK(grad[k] == doctest::Approx((oracle::ms(sp, pairs.pairs) - oracle::ms(sm, pairs.pairs)) / 2e-7).epsilon(1e-6));
    }
}

TEST_CASE("TrainConfig defaults equal the published settings") {
    TrainConfig c;
    CHECK(c.ms_weight == 2.5);
    CHECK(c.optimizer.lr == 2e-5);
    CHECK(c.optimizer.momentum == 0.2);
    CHECK(c.batch_images == 32);
    CHECK(c.epochs == 1500);
    CHECK(c.thresholds.tau_b == 0.5);
    CHECK(c.thresholds.tau_n == 0.5);
    CHECK(c.thresholds.tau_c == 0.9);
    CHECK(c.sample_ratio == 0.5);
    CHECK(c.hidden1 == 1024);
    CHECK(c.hidden2 == 128);
    c.sample_ratio = 0.0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("composite objective with weight 0 equals the BCE-only gradient") {
    auto p = oracle::random_net(5, 6, 3, 4);
    auto x = oracle::random_rows(8, 5, 5);
    std::vector<std::uint8_t> y{1, 0, 0, 1, 0, 0, 1, 0}, amb(8, 0);
    MutualPairSet pairs{{{0, 1}, {2, 5}}};
    auto obj = composite_objective(p, x, x, y, amb, pairs, 0.0);
    auto scores = forward_batch(p, x).score;
    auto expect = backward(p, x, balanced_bce_grad(scores, y));
    CHECK(obj.grads == expect);
    CHECK(obj.loss.total == obj.loss.l_phi);
    CHECK(obj.loss.l_ms > 0.0);  // still reported
    CHECK(obj.loss.n_pairs == 2);
    CHECK(obj.loss.n_anomaly_labeled == 3);
    CHECK(obj.loss.n_normal_labeled == 5);
}

TEST_CASE("epochs = 0 returns the initialization unchanged") {
    auto f = small_features(1);
    auto c = small_config(5);
    c.epochs = 0;
    std::optional<LocalNetParams> init;
    TrainHooks h;
    h.on_start = [&](const LocalNetParams& p) { init = p; };
    auto r = train(f, c, h);
    REQUIRE(init);
    CHECK(r.params == *init);
    CHECK(r.log.empty());
    CHECK(r.params.layers.shape() == NetShape{5, 8, 4});
}

TEST_CASE("training is deterministic and logs consistent totals") {
    auto f = small_features(2);
    auto c = small_config(9);
    auto a = train(f, c);
    auto b = train(f, c);
    CHECK(a.params == b.params);
    CHECK(same_log(a.log, b.log));
    CHECK(a.log.size() == 3 * 5);  // 34 images in batches of 8
    for (const auto& e : a.log) {
        CHECK(std::fabs(e.loss.total - (e.loss.l_phi + c.ms_weight * e.loss.l_ms)) <= 1e-12);
        CHECK(e.bank_size == e.bank_images * 2);
        CHECK(e.loss.n_anomaly_labeled + e.loss.n_normal_labeled == (e.iteration % 5 == 4 ? 4u : 16u));
    }
    c.seed = 10;
    CHECK_FALSE(train(f, c).params == a.params);
}

TEST_CASE("training with the mutual smoothness weight set to 0 runs to completion") {
    auto f = small_features(3);
    auto c = small_config(1);
    c.ms_weight = 0.0;
    auto r = train(f, c);
    CHECK(r.log.size() == 15);
    for (const auto& e : r.log) CHECK(e.loss.total == e.loss.l_phi);
}

TEST_CASE("hooks observe training without changing it") {
    auto f = small_features(4);
    auto c = small_config(2);
    c.checkpoint_every = 2;
    std::vector<std::size_t> checkpoints, epochs;
    std::size_t iterations = 0;
    TrainHooks h;
    h.truth = std::vector<ImageLabel>(f.n_images(), ImageLabel::Normal);
    h.on_iteration = [&](const IterationLog& e) {
        ++iterations;
        CHECK(e.bank_purity == 1.0);
    };
    h.on_checkpoint = [&](std::size_t e, const LocalNetParams&, const RmsPropState&) { checkpoints.push_back(e); };
    h.on_epoch_end = [&](std::size_t e, const LocalNetParams&) { epochs.push_back(e); };
    auto with = train(f, c, h);
    auto without = train(f, c);
    CHECK(with.params == without.params);
    CHECK(iterations == 15);
    CHECK(checkpoints == std::vector<std::size_t>{1, 2});
    CHECK(epochs == std::vector<std::size_t>{0, 1, 2});
    TrainHooks bad;
    bad.truth = std::vector<ImageLabel>(3, ImageLabel::Normal);
    CHECK_THROWS_AS(train(f, c, bad), ArgumentError);
}

TEST_CASE("a query whose only bank neighbour is itself widens the bank to all images") {
    // Two single-patch images: the lower-scored one forms the bank, and it is
    // also a query, so its only bank entry sits at distance 0.
    FeatureTensor f(2, 1, 2, 1, 1, {0.f, 0.f, 3.f, 1.f});
    TrainConfig c = small_config(0);
    c.batch_images = 2;
    c.epochs = 2;
    auto r = train(f, c);
    REQUIRE(r.log.size() == 2);
    for (const auto& e : r.log) {
        CHECK(e.bank_fallback);
        CHECK(e.bank_images == 2);
    }
}

TEST_CASE("adaptor boundary and pair constraint options train") {
    auto f = small_features(5, 4);
    auto c = small_config(3);
    c.adaptor = AdaptorBoundary::SecondHidden;
    c.pair_constraint = PairConstraint::DistinctImageAndPosition;
    c.augment = false;
    auto r = train(f, c);
    CHECK(r.params.adaptor == AdaptorBoundary::SecondHidden);
    for (const auto& e : r.log) CHECK(e.loss.n_pairs <= 16);
}
