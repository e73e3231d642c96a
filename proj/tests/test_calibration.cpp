#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stablesketch/calibration.hpp"
#include "stablesketch/errors.hpp"

using namespace stablesketch;
namespace fs = std::filesystem;

namespace {

BiasBuildOptions small_run(unsigned threads = 1) {
    BiasBuildOptions o;
    o.min_replicates = 1;
    o.block_size = 500;
    o.threads = threads;
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("stablesketch_" + name); }

CalibrationTable synthetic_table() {
    std::vector<BiasCell> cells;
    for (double a : {0.5, 1.0}) {
        for (std::size_t k : {10ul, 20ul}) {
            cells.push_back({a, k, 1.0 + a / static_cast<double>(k), 0.001, 1000, 1});
        }
    }
    return CalibrationTable({}, cells);
}

}  // namespace

TEST(BiasTable, RefusesSmallRuns) {
    EXPECT_THROW(build_bias_table({1.0}, {10}, 99999, 1), ConfigurationError);
    EXPECT_THROW(build_bias_table({2.5}, {10}, 1000, 1, small_run()), DomainError);
    EXPECT_THROW(build_bias_table({1.0}, {0}, 1000, 1, small_run()), DomainError);
}

TEST(BiasTable, DeterministicAndThreadIndependent) {
    const auto a = build_bias_table({0.5, 1.5}, {5, 20}, 3000, 77, small_run(1));
    const auto b = build_bias_table({0.5, 1.5}, {5, 20}, 3000, 77, small_run(3));
    ASSERT_EQ(a.cells().size(), 4u);
    for (std::size_t i = 0; i < a.cells().size(); ++i) {
        EXPECT_EQ(a.cells()[i].B, b.cells()[i].B);
        EXPECT_EQ(a.cells()[i].std_error, b.cells()[i].std_error);
    }
    const auto c = build_bias_table({0.5, 1.5}, {5, 20}, 3000, 78, small_run(1));
    EXPECT_NE(a.cells()[0].B, c.cells()[0].B);
}

TEST(BiasTable, BiasAboveOneAndShrinksWithK) {
    const auto t = build_bias_table({1.0}, {5, 50}, 20000, 5, small_run());
    const auto* small = t.find(1.0, 5);
    const auto* large = t.find(1.0, 50);
    ASSERT_TRUE(small && large);
    EXPECT_GT(small->B, large->B + 3.0 * (small->std_error + large->std_error));
    EXPECT_GT(large->B, 1.0);
    EXPECT_TRUE(bias_monotonicity_violations(t).empty());
}

TEST(BiasTable, ExactCellsAndInterpolation) {
    const auto t = synthetic_table();
    EXPECT_DOUBLE_EQ(t.bias(0.5, 10), 1.05);
    EXPECT_DOUBLE_EQ(t.bias(1.0, 20), 1.05);
    // B is linear in alpha / k, i.e. bilinear in (alpha, 1/k): exact
    EXPECT_NEAR(t.bias(0.75, 10), 1.075, 1e-15);
    EXPECT_NEAR(t.bias(0.75, 15), 1.0 + 0.75 / 15.0, 1e-15);
    EXPECT_DOUBLE_EQ(t.bias(0.7, 1000), 1.0);
}

TEST(BiasTable, Misses) {
    const auto t = synthetic_table();
    EXPECT_THROW(t.bias(0.75, 10, false), CalibrationMissError);
    EXPECT_THROW(t.bias(0.3, 10), CalibrationMissError);
    EXPECT_THROW(t.bias(1.2, 10), CalibrationMissError);
    EXPECT_THROW(t.bias(0.5, 5), CalibrationMissError);
    CalibrationTable holes({}, {{0.5, 10, 1.1, 0, 1, 1}, {1.0, 20, 1.05, 0, 1, 1}});
    EXPECT_THROW(holes.bias(0.75, 15), CalibrationMissError);
}

TEST(BiasTable, MonotonicityViolationsFlagged) {
    CalibrationTable t({}, {{1.0, 10, 1.10, 0.001, 1, 1}, {1.0, 20, 1.20, 0.001, 1, 1}, {1.0, 30, 1.05, 0.001, 1, 1}});
    const auto v = bias_monotonicity_violations(t);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].first.k, 10u);
    EXPECT_EQ(v[0].second.k, 20u);
}

TEST(CalibrationFiles, RoundTripExactly) {
    const auto t = build_bias_table({0.25, 1.75}, {5, 10}, 2000, 9, small_run());
    const auto bias_path = temp_file("bias.csv");
    const auto q_path = temp_file("qstar.csv");
    write_bias_csv(t, bias_path.string());
    write_qstar_csv(t.quantiles(), q_path.string());
    EXPECT_EQ(slurp(bias_path).substr(0, std::string(kBiasCsvHeader).size()), kBiasCsvHeader);
    const auto back = load_calibration(bias_path.string(), q_path.string());
    ASSERT_EQ(back.cells().size(), t.cells().size());
    for (std::size_t i = 0; i < t.cells().size(); ++i) {
        EXPECT_EQ(back.cells()[i].B, t.cells()[i].B);
        EXPECT_EQ(back.cells()[i].std_error, t.cells()[i].std_error);
        EXPECT_EQ(back.cells()[i].replicates, 2000u);
        EXPECT_EQ(back.cells()[i].seed, 9u);
    }
    ASSERT_EQ(back.quantiles().size(), 2u);
    EXPECT_EQ(back.quantiles()[1].q_star, t.quantiles()[1].q_star);
    write_bias_csv(back, bias_path.string() + "2");
    EXPECT_EQ(slurp(bias_path), slurp(bias_path.string() + "2"));
    fs::remove(bias_path);
    fs::remove(bias_path.string() + "2");
    fs::remove(q_path);
}

TEST(CalibrationFiles, Errors) {
    EXPECT_THROW(read_bias_csv("/nonexistent/bias.csv"), IoError);
    const auto p = temp_file("bad.csv");
    {
        std::ofstream out(p);
        out << "alpha,k,B\n1,10,1.1\n";
    }
    EXPECT_THROW(read_bias_csv(p.string()), FormatError);
    {
        std::ofstream out(p);
        out << kBiasCsvHeader << "\n1,10,abc,0.1,100,1\n";
    }
    EXPECT_THROW(read_bias_csv(p.string()), FormatError);
    fs::remove(p);
}

TEST(CalibrationSpec, UsesTableConstants) {
    CalibrationTable t({{1.0, 0.5, 1.0}}, {{1.0, 10, 1.15, 0.001, 1, 1}});
    const auto spec = make_estimator_spec(EstimatorKind::oqc, 1.0, 10, t);
    EXPECT_EQ(spec.coefficients().bias, 1.15);
    EXPECT_EQ(spec.coefficients().q, 0.5);
    EXPECT_THROW(make_estimator_spec(EstimatorKind::oqc, 1.0, 9, t, false), CalibrationMissError);
    EXPECT_EQ(make_estimator_spec(EstimatorKind::gm, 1.0, 9, t).kind(), EstimatorKind::gm);
}

TEST(InfiniteMean, MatchesDependenceOnSampleMaximum) {
    // the estimate has infinite mean for alpha < 2 exactly when it moves with the sample maximum
    for (std::size_t k = 1; k <= 30; ++k) {
        for (double q = 0.01; q < 1.0; q += 0.0137) {
            std::vector<double> x(k), y(k);
            for (std::size_t i = 0; i < k; ++i) x[i] = y[i] = static_cast<double>(i + 1);
            y[k - 1] = 1e6;
            const bool moves = interpolated_q_quantile(x, q) != interpolated_q_quantile(y, q);
            EXPECT_EQ(quantile_estimate_has_mean(1.5, k, q), !moves) << k << " " << q;
            EXPECT_TRUE(quantile_estimate_has_mean(2.0, k, q));
        }
    }
}

TEST(InfiniteMean, CellsSkippedAndLookupsMiss) {
    const double q = solve_q_star(1.7);
    ASSERT_FALSE(quantile_estimate_has_mean(1.7, 5, q));
    ASSERT_TRUE(quantile_estimate_has_mean(1.7, 10, q));
    auto opts = small_run();
    std::vector<std::pair<double, std::size_t>> skipped;
    opts.on_skip = [&](double a, std::size_t k) { skipped.emplace_back(a, k); };
    const auto t = build_bias_table({1.7}, {5, 10}, 2000, 3, opts);
    ASSERT_EQ(t.cells().size(), 1u);
    EXPECT_EQ(t.cells().front().k, 10u);
    ASSERT_EQ(skipped.size(), 1u);
    EXPECT_EQ(skipped.front().second, 5u);
    EXPECT_THROW(make_estimator_spec(EstimatorKind::oqc, 1.7, 5, t), CalibrationMissError);
    EXPECT_THROW(make_estimator_spec(EstimatorKind::oqc, 1.7, 7, t), CalibrationMissError);
    EXPECT_NO_THROW(make_estimator_spec(EstimatorKind::oq, 1.7, 5, t));
}

#ifdef STABLESKETCH_DATA_DIR
TEST(ShippedTable, CoversDefaultGridAndIsSane) {
    const std::string dir = STABLESKETCH_DATA_DIR;
    if (!fs::exists(dir + "/bias_table.csv")) GTEST_SKIP() << "no shipped table";
    const auto t = load_calibration(dir + "/bias_table.csv", dir + "/qstar.csv");
    for (double alpha : default_alpha_grid()) {
        for (std::size_t k : default_k_grid()) {
            const bool finite = quantile_estimate_has_mean(alpha, k, t.quantile_for(alpha)->q_star);
            EXPECT_EQ(t.find(alpha, k) != nullptr, finite) << alpha << " " << k;
        }
    }
    for (const auto& c : t.cells()) {
        EXPECT_GT(c.B, 1.0 - 4.0 * c.std_error) << c.alpha << " " << c.k;
        EXPECT_LT(c.B, 2.0) << c.alpha << " " << c.k;
    }
    EXPECT_TRUE(bias_monotonicity_violations(t).empty());
    EXPECT_EQ(t.quantile_for(1.0)->q_star, 0.5);
}
#endif
