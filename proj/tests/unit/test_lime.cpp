#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "rowserve/lime.hpp"

using namespace rowserve;
using namespace rowserve::lime;

namespace {

SegmentationSpec tabular_seg(int d) {
    return SegmentationSpec{TabularSegmentation{d, std::vector<double>(static_cast<size_t>(d), 0.0)}};
}

// Normal-equations oracle for weighted least squares with intercept: solves
// [X 1]' W [X 1] beta = [X 1]' W y by LDLT, independent of the descent path.
std::pair<std::vector<double>, double> weighted_ls_oracle(const std::vector<Mask>& X,
                                                          const std::vector<double>& y,
                                                          const std::vector<double>& w) {
    const auto n = static_cast<Eigen::Index>(X.size());
    const auto d = static_cast<Eigen::Index>(X[0].size());
    Eigen::MatrixXd A(n, d + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            A(i, j) = X[static_cast<size_t>(i)][static_cast<size_t>(j)];
        }
        A(i, d) = 1.0;
    }
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), n);
    Eigen::MatrixXd AtW = A.transpose() * wv.asDiagonal();
    Eigen::VectorXd beta = (AtW * A).ldlt().solve(AtW * yv);
    std::vector<double> weights(beta.data(), beta.data() + d);
    return {weights, beta(d)};
}

}  // namespace

TEST_CASE("segment_grid: 4x4 image with 2x2 cells") {
    auto map = segment_grid(4, 4, 2, 2);
    std::array<int, 4> counts{};
    for (int s : map) counts[static_cast<size_t>(s)]++;
    for (int c : counts) CHECK(c == 4);
    CHECK(map[0] == 0);
    CHECK(map[3] == 1);
    CHECK(map[15] == 3);
}

TEST_CASE("segment_grid: ceiling arithmetic on 5x4 with 2x2 cells") {
    auto map = segment_grid(5, 4, 2, 2);
    int max_seg = 0;
    for (int s : map) max_seg = std::max(max_seg, s);
    CHECK(max_seg == 5);  // 3 x 2 cells
    // right column cells have width 1
    CHECK(map[4] == 2);
    CHECK(map[4 + 5] == 2);
}

TEST_CASE("segment_grid: 64x64 with 8x8 cells, closed-form index") {
    auto map = segment_grid(64, 64, 8, 8);
    CHECK(map[63 * 64 + 63] == 63);
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            CHECK(map[static_cast<size_t>(y) * 64 + x] == (y / 8) * 8 + (x / 8));
        }
    }
}

TEST_CASE("segment_grid: cell larger than image gives one segment") {
    auto map = segment_grid(3, 3, 10, 10);
    for (int s : map) CHECK(s == 0);
}

TEST_CASE("sample_masks: n=1 yields only the all-ones anchor") {
    LimeConfig config;
    config.num_samples = 1;
    auto masks = sample_masks(5, config);
    REQUIRE(masks.size() == 1);
    CHECK(masks[0] == Mask(5, 1));
}

TEST_CASE("sample_masks: deterministic under seed") {
    LimeConfig config;
    config.num_samples = 200;
    config.seed = 777;
    CHECK(sample_masks(9, config) == sample_masks(9, config));
    config.seed = 778;
    CHECK(sample_masks(9, config) != sample_masks(9, LimeConfig{200, 0.25, std::nullopt, 0.5, 777}));
}

TEST_CASE("sample_masks: per-bit on-rate near p") {
    LimeConfig config;
    config.num_samples = 10000;
    config.seed = 4242;
    auto masks = sample_masks(8, config);
    std::array<int, 8> on{};
    for (const auto& m : masks) {
        for (int j = 0; j < 8; ++j) on[static_cast<size_t>(j)] += m[static_cast<size_t>(j)];
    }
    for (int c : on) {
        double rate = c / 10000.0;
        CHECK(rate >= 0.48);
        CHECK(rate <= 0.52);
    }
}

TEST_CASE("perturb: all-ones is the identity, all-zeros is fully neutral") {
    auto seg = SegmentationSpec{TabularSegmentation{3, {9.0, 9.0, 9.0}}};
    auto inst = Instance::tabular({1.0, 2.0, 3.0});
    CHECK(perturb(inst, Mask{1, 1, 1}, seg).features() == std::vector<double>{1, 2, 3});
    CHECK(perturb(inst, Mask{0, 0, 0}, seg).features() == std::vector<double>{9, 9, 9});
    CHECK(perturb(inst, Mask{1, 0, 1}, SegmentationSpec{TabularSegmentation{3, {0, 0, 0}}})
              .features() == std::vector<double>{1, 0, 3});
    CHECK_THROWS_AS(perturb(inst, Mask{1, 0}, seg), ConfigError);
}

TEST_CASE("perturb image: neutral color fills off segments, identity on all-ones") {
    GridSegmentation grid;
    grid.width = 4;
    grid.height = 2;
    grid.cell_w = 2;
    grid.cell_h = 2;
    grid.neutral_color = {7, 8, 9};
    SegmentationSpec seg{grid};
    Image img;
    img.width = 4;
    img.height = 2;
    img.rgb.assign(4 * 2 * 3, 100);
    auto inst = Instance::image(img);

    CHECK(perturb(inst, Mask{1, 1}, seg).img() == img);

    Image half = perturb(inst, Mask{0, 1}, seg).img();
    CHECK(half.rgb[0] == 7);   // pixel (0,0) in segment 0
    CHECK(half.rgb[1] == 8);
    CHECK(half.rgb[2] == 9);
    CHECK(half.rgb[2 * 3] == 100);  // pixel (2,0) in segment 1
}

TEST_CASE("kernel_weight: anchor 1, all-zeros exp(-1/sigma^2)") {
    CHECK(kernel_weight(Mask{1, 1, 1, 1}, 0.7) == doctest::Approx(1.0));
    CHECK(kernel_weight(Mask{0, 0, 0}, 1.0) == doctest::Approx(std::exp(-1.0)));
    // d=4, 2 bits on, sigma=0.5: D=0.5, exp(-0.25/0.25) = exp(-1)
    CHECK(kernel_weight(Mask{1, 0, 1, 0}, 0.5) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("lasso: lambda=0 on a full-rank system matches the normal equations") {
    std::mt19937_64 rng(31);
    LimeConfig config;
    config.num_samples = 200;
    config.seed = 5;
    auto X = sample_masks(6, config);
    std::vector<double> y, w;
    for (const auto& m : X) {
        double v = 0.3;
        for (size_t j = 0; j < m.size(); ++j) v += (m[j] ? 1.0 : 0.0) * (0.5 + 0.25 * static_cast<double>(j));
        v += static_cast<double>(rng() % 1000) / 1000.0 - 0.5;  // noise
        y.push_back(v);
        w.push_back(kernel_weight(m, 0.25));
    }
    auto fit = fit_weighted_lasso(X, y, w, 0.0);
    auto [oracle_w, oracle_b] = weighted_ls_oracle(X, y, w);
    for (size_t j = 0; j < oracle_w.size(); ++j) {
        CHECK(std::abs(fit.weights[j] - oracle_w[j]) <= 1e-9);
    }
    CHECK(std::abs(fit.intercept - oracle_b) <= 1e-9);
}

TEST_CASE("lasso: huge lambda zeroes all coefficients, intercept = weighted mean") {
    LimeConfig config;
    config.num_samples = 100;
    config.seed = 9;
    auto X = sample_masks(4, config);
    std::vector<double> y, w;
    double wsum = 0, wy = 0;
    for (size_t i = 0; i < X.size(); ++i) {
        y.push_back(static_cast<double>(i % 7));
        w.push_back(1.0 + static_cast<double>(i % 3));
        wsum += w.back();
        wy += w.back() * y.back();
    }
    auto fit = fit_weighted_lasso(X, y, w, 1e12);
    for (double b : fit.weights) CHECK(b == doctest::Approx(0.0));
    CHECK(fit.intercept == doctest::Approx(wy / wsum).epsilon(1e-9));
}

TEST_CASE("lasso: synthetic 3x1 - 2x2 + 1 recovered at lambda=0") {
    LimeConfig config;
    config.num_samples = 500;
    config.seed = 12;
    auto X = sample_masks(2, config);
    std::vector<double> y, w(X.size(), 1.0);
    for (const auto& m : X) y.push_back(3.0 * m[0] - 2.0 * m[1] + 1.0);
    auto fit = fit_weighted_lasso(X, y, w, 0.0);
    CHECK(fit.weights[0] == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(fit.weights[1] == doctest::Approx(-2.0).epsilon(1e-6));
    CHECK(fit.intercept == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("lasso: constant column gets coefficient 0 under penalty") {
    // column 1 always on -> collinear with the intercept
    std::vector<Mask> X;
    std::vector<double> y, w;
    std::mt19937_64 rng(8);
    for (int i = 0; i < 100; ++i) {
        Mask m{static_cast<uint8_t>(rng() % 2), 1, static_cast<uint8_t>(rng() % 2)};
        y.push_back(2.0 * m[0] + 0.5 * m[2] + 4.0);
        w.push_back(1.0);
        X.push_back(std::move(m));
    }
    auto fit = fit_weighted_lasso(X, y, w, 0.1);
    CHECK(std::abs(fit.weights[1]) < 1e-9);

    CHECK_THROWS(fit_weighted_lasso(X, {1.0}, {1.0}, 0.0));
    std::vector<double> bad_y(X.size(), std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS(fit_weighted_lasso(X, bad_y, w, 0.0));
}

TEST_CASE("explain: constant blackbox gives zero weights and intercept c") {
    auto seg = tabular_seg(4);
    LimeConfig config;
    config.num_samples = 300;
    config.seed = 77;
    config.l1_penalty = 0.0;
    auto result = explain({Instance::tabular({1, 2, 3, 4})},
                          [](const Instance&) { return 2.5; }, seg, config);
    REQUIRE(result.size() == 1);
    REQUIRE(result[0].has_value());
    for (double wj : result[0]->weights) CHECK(wj == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(result[0]->intercept == doctest::Approx(2.5));
    CHECK(result[0]->weighted_r2 == doctest::Approx(1.0));
    CHECK(result[0]->sample_count == 300);
}

TEST_CASE("explain: recovers a blackbox linear in the mask bits") {
    const int d = 8;
    auto seg = tabular_seg(d);
    std::vector<double> coef{1.5, -2.0, 0.0, 3.25, 0.5, -1.0, 2.0, -0.25};
    // instance feature j is j+1, neutral is 0, so bit_j = feature_j / (j+1)
    std::vector<double> inst(d);
    for (int j = 0; j < d; ++j) inst[static_cast<size_t>(j)] = j + 1.0;
    Blackbox bb = [&coef](const Instance& x) {
        double v = 0.75;
        for (size_t j = 0; j < coef.size(); ++j) {
            v += coef[j] * (x.features()[j] != 0.0 ? 1.0 : 0.0);
        }
        return v;
    };
    LimeConfig config;
    config.num_samples = 2000;
    config.seed = 20260810;
    config.l1_penalty = 0.0;
    ExplainStats stats;
    auto result = explain({Instance::tabular(inst)}, bb, seg, config, &stats);
    REQUIRE(result[0].has_value());
    for (int j = 0; j < d; ++j) {
        CHECK(result[0]->weights[static_cast<size_t>(j)] ==
              doctest::Approx(coef[static_cast<size_t>(j)]).epsilon(1e-3));
    }
    CHECK(result[0]->intercept == doctest::Approx(0.75).epsilon(1e-3));
    CHECK(stats.evaluations.load() == 2000);
}

TEST_CASE("explain: deterministic for identical inputs, seeds, config") {
    auto seg = tabular_seg(5);
    Blackbox bb = [](const Instance& x) {
        double v = 0;
        for (double f : x.features()) v += f * f;
        return v;
    };
    LimeConfig config;
    config.num_samples = 400;
    config.seed = 123;
    std::vector<Instance> instances = {Instance::tabular({1, 0, 2, 0, 1}),
                                       Instance::tabular({0, 1, 0, 1, 0})};
    auto a = explain(instances, bb, seg, config);
    auto b = explain(instances, bb, seg, config);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].has_value());
        CHECK(a[i]->weights == b[i]->weights);
        CHECK(a[i]->intercept == b[i]->intercept);
        CHECK(a[i]->weighted_r2 == b[i]->weighted_r2);
    }
}

TEST_CASE("explain: blackbox failures drop samples, too many is an error") {
    auto seg = tabular_seg(4);
    LimeConfig config;
    config.num_samples = 100;
    config.seed = 6;
    int call = 0;
    Blackbox flaky = [&call](const Instance&) -> double {
        if (++call % 5 == 0) throw std::runtime_error("scorer down");
        return 1.0;
    };
    ExplainStats stats;
    auto result = explain({Instance::tabular({1, 1, 1, 1})}, flaky, seg, config, &stats);
    REQUIRE(result[0].has_value());
    CHECK(result[0]->sample_count == 100 - static_cast<int>(stats.dropped_samples.load()));
    CHECK(stats.evaluations.load() == 100);

    Blackbox dead = [](const Instance&) -> double { throw std::runtime_error("down"); };
    auto none = explain({Instance::tabular({1, 1, 1, 1})}, dead, seg, config);
    CHECK_FALSE(none[0].has_value());
}

TEST_CASE("explain: exhaustive d=8 oracle vs sampled fit") {
    const int d = 8;
    auto seg = tabular_seg(d);
    std::vector<double> coef{2.0, -1.5, 0.75, 0.0, 1.0, -0.5, 0.25, 3.0};
    Blackbox bb = [&coef](const Instance& x) {
        double v = 1.0;
        for (size_t j = 0; j < coef.size(); ++j) v += coef[j] * (x.features()[j] != 0.0);
        return v;
    };
    std::vector<double> inst(d, 1.0);

    // brute-force enumeration of all 256 masks
    std::vector<Mask> X;
    std::vector<double> y, w;
    for (int bits = 0; bits < 256; ++bits) {
        Mask m(d);
        for (int j = 0; j < d; ++j) m[static_cast<size_t>(j)] = (bits >> j) & 1;
        Instance p = perturb(Instance::tabular(inst), m, seg);
        y.push_back(bb(p));
        w.push_back(kernel_weight(m, 0.25));
        X.push_back(std::move(m));
    }
    auto exhaustive = fit_weighted_lasso(X, y, w, 0.0);
    auto [oracle_w, oracle_b] = weighted_ls_oracle(X, y, w);
    for (int j = 0; j < d; ++j) {
        CHECK(std::abs(exhaustive.weights[static_cast<size_t>(j)] -
                       oracle_w[static_cast<size_t>(j)]) <= 1e-9);
    }
    CHECK(std::abs(exhaustive.intercept - oracle_b) <= 1e-9);

    LimeConfig config;
    config.num_samples = 2000;
    config.seed = 99;
    config.l1_penalty = 0.0;
    auto sampled = explain({Instance::tabular(inst)}, bb, seg, config);
    REQUIRE(sampled[0].has_value());
    for (int j = 0; j < d; ++j) {
        CHECK(std::abs(sampled[0]->weights[static_cast<size_t>(j)] -
                       exhaustive.weights[static_cast<size_t>(j)]) < 0.05);
    }
}
