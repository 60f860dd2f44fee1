#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "funad/error.hpp"
#include "funad/inference.hpp"
#include "oracles.hpp"

using namespace funad;

namespace {

// D_in = 1 network whose score is exactly sigmoid(x) for x > -10.
LocalNetParams passthrough_net() {
    auto p = LocalNetParams::zeros({1, 1, 1});
    p.layers.layer1.weights[0] = 1.0;
    p.layers.layer1.bias[0] = 10.0;
    p.layers.layer2.weights[0] = 1.0;
    p.layers.layer3.weights[0] = 1.0;
    p.layers.layer3.bias[0] = -10.0;
    return p;
}

float logit(double s) { return static_cast<float>(std::log(s / (1 - s))); }

}  // namespace

TEST_CASE("image score of an all-zero network is 0.5") {
    auto p = LocalNetParams::zeros({3, 4, 2});
    std::vector<float> img(5 * 3, 1.5f);
    CHECK(image_anomaly_score(p, img) == 0.5);
}

TEST_CASE("image score is the max patch score") {
    auto p = passthrough_net();
    std::vector<float> img{logit(0.1), logit(0.9), logit(0.3)};
    const auto s = patch_scores(p, img);
    CHECK(s[0] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(s[2] == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(image_anomaly_score(p, img) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(image_anomaly_score(p, img) == *std::max_element(s.begin(), s.end()));
}

TEST_CASE("image scores match a brute-force per-patch oracle") {
    auto p = oracle::random_net(6, 5, 4, 3);
    std::mt19937_64 g(1);
    std::normal_distribution<float> n(0, 1);
    std::vector<float> data(7 * 4 * 6);
    for (auto& v : data) v = n(g);
    FeatureTensor f(7, 4, 6, 2, 2, data);
    const auto scores = image_anomaly_scores(p, f);
    for (std::size_t i = 0; i < 7; ++i) {
        double m = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            auto r = f.patch(i, j);
            m = std::max(m, oracle::score(p, std::vector<double>(r.begin(), r.end())));
        }
        CHECK(scores[i] == doctest::Approx(m).epsilon(1e-12));
    }
    CHECK_THROWS_AS(patch_scores(p, std::vector<float>(7)), ArgumentError);
}

TEST_CASE("gaussian kernel is normalized with radius int(4 sigma + 0.5)") {
    for (double sigma : {0.5, 1.0, 2.3, 4.0, 7.5}) {
        const auto k = gaussian_kernel(sigma);
        const int r = static_cast<int>(4 * sigma + 0.5);
        CHECK(k.size() == static_cast<std::size_t>(2 * r + 1));
        CHECK(std::fabs(std::accumulate(k.begin(), k.end(), 0.0) - 1.0) <= 1e-12);
        for (std::size_t t = 0; t < k.size(); ++t) CHECK(k[t] == doctest::Approx(k[k.size() - 1 - t]).epsilon(1e-15));
    }
    CHECK(gaussian_kernel(4.0).size() == 33);
    CHECK_THROWS_AS(gaussian_kernel(0.0), ArgumentError);
}

TEST_CASE("constant patch scores give a constant 224 x 224 map") {
    std::vector<double> grid(28 * 28, 0.37);
    auto m = map_from_patch_scores(grid, 28, 28, 224, 224);
    CHECK(m.height == 224);
    CHECK(m.width == 224);
    REQUIRE(m.values.size() == 224 * 224);
    for (double v : m.values) CHECK(std::fabs(v - 0.37) < 1e-12);
}

TEST_CASE("output dimensions are exactly the requested ones") {
    std::vector<double> grid(3 * 5, 0.2);
    grid[7] = 0.9;
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {17, 9}, {224, 224}, {3, 5}}) {
        auto m = map_from_patch_scores(grid, 3, 5, h, w);
        CHECK(m.height == h);
        CHECK(m.width == w);
        CHECK(m.values.size() == h * w);
    }
    CHECK_THROWS_AS(map_from_patch_scores(grid, 4, 4, 10, 10), ArgumentError);
}

TEST_CASE("map pipeline matches reference bilinear resize and reflect-padded blur") {
    std::mt19937_64 g(6);
    std::uniform_real_distribution<double> u(0, 1);
    for (auto [gh, gw, oh, ow, sigma] : {std::tuple{28, 28, 224, 224, 4.0}, std::tuple{3, 5, 17, 9, 1.5},
                                         std::tuple{4, 4, 4, 4, 2.0}, std::tuple{6, 2, 40, 30, 0.7}}) {
        std::vector<double> grid(static_cast<std::size_t>(gh * gw));
        for (auto& v : grid) v = u(g);
        auto got = map_from_patch_scores(grid, gh, gw, oh, ow, sigma);
        auto want = oracle::blur(oracle::resize(grid, gh, gw, oh, ow), oh, ow, sigma);
        double worst = 0;
        for (std::size_t k = 0; k < want.size(); ++k) worst = std::max(worst, std::fabs(got.values[k] - want[k]));
        CHECK(worst < 1e-12);
        // Range preserved.
        const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
        for (double v : got.values) {
            CHECK(v >= *lo - 1e-12);
            CHECK(v <= *hi + 1e-12);
        }
    }
}

TEST_CASE("a single hot patch peaks inside its upscaled footprint") {
    std::vector<double> grid(28 * 28, 0.1);
    const int hy = 9, hx = 20;
    grid[hy * 28 + hx] = 0.95;
    auto m = map_from_patch_scores(grid, 28, 28, 224, 224);
    const auto it = std::max_element(m.values.begin(), m.values.end());
    const auto k = static_cast<std::size_t>(it - m.values.begin());
    const std::size_t y = k / 224, x = k % 224;
    CHECK(y >= hy * 8);
    CHECK(y < (hy + 1) * 8);
    CHECK(x >= hx * 8);
    CHECK(x < (hx + 1) * 8);
}

TEST_CASE("bilinear resize to the same size is the identity; blur with sigma 0 is a no-op") {
    AnomalyMap in{3, 4, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}};
    CHECK(bilinear_resize(in, 3, 4).values == in.values);
    CHECK(gaussian_blur(in, 0.0).values == in.values);
}

TEST_CASE("anomaly_map uses row-major patch order") {
    auto p = passthrough_net();
    // 2 x 3 grid, scores rising along the patch index.
    std::vector<float> img;
    for (int j = 0; j < 6; ++j) img.push_back(logit(0.1 + 0.1 * j));
    auto m = anomaly_map(p, img, 2, 3, 2, 3, 0.0);
    for (int j = 0; j < 6; ++j) CHECK(m.values[static_cast<std::size_t>(j)] == doctest::Approx(0.1 + 0.1 * j).epsilon(1e-6));
    auto blurred = anomaly_map(p, img, 2, 3, 224, 224);
    CHECK(blurred.values.size() == 224 * 224);
}

TEST_CASE("FUNA map files round trip as float32") {
    oracle::TempDir dir("funa");
    std::vector<AnomalyMap> maps{{2, 3, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}}, {2, 3, {1, 0, 1, 0, 1, 0}}};
    write_map_file(maps, dir / "m.funa");
    const auto bytes = oracle::slurp(dir / "m.funa");
    CHECK(bytes.size() == 16 + 4 * 12);
    auto back = read_map_file(dir / "m.funa");
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].height == 2);
        CHECK(back[i].width == 3);
        for (std::size_t k = 0; k < 6; ++k) {
            CHECK(back[i].values[k] == static_cast<double>(static_cast<float>(maps[i].values[k])));
        }
    }
    auto bad = bytes;
    bad[0] = 'Z';
    oracle::spit(dir / "bad.funa", bad);
    CHECK_THROWS_AS(read_map_file(dir / "bad.funa"), FormatError);
    bad = bytes;
    bad.pop_back();
    oracle::spit(dir / "short.funa", bad);
    CHECK_THROWS_AS(read_map_file(dir / "short.funa"), TruncationError);
    std::vector<AnomalyMap> mixed{{1, 1, {0}}, {2, 1, {0, 0}}};
    CHECK_THROWS_AS(write_map_file(mixed, dir / "x.funa"), ArgumentError);
}
