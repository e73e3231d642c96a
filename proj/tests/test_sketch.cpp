#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "stablesketch/errors.hpp"
#include "stablesketch/estimators.hpp"
#include "stablesketch/sketch.hpp"

using namespace stablesketch;

namespace {

std::vector<std::vector<double>> random_dense(std::size_t n, std::size_t D, double density, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0), p(0.0, 1.0);
    std::vector<std::vector<double>> rows(n, std::vector<double>(D, 0.0));
    for (auto& r : rows) {
        for (auto& v : r) {
            if (p(rng) < density) v = u(rng);
        }
    }
    return rows;
}

DataMatrix to_sparse(const std::vector<std::vector<double>>& rows) {
    std::vector<SparseRow> out;
    for (const auto& r : rows) {
        SparseRow s;
        for (std::size_t d = 0; d < r.size(); ++d) {
            if (r[d] != 0.0) {
                s.indices.push_back(d);
                s.values.push_back(r[d]);
            }
        }
        out.push_back(std::move(s));
    }
    return DataMatrix::sparse(rows.front().size(), std::move(out));
}

}  // namespace

TEST(DataMatrix, Validation) {
    EXPECT_THROW(DataMatrix::dense({{1, 2}, {3}}), FormatError);
    EXPECT_THROW(DataMatrix::sparse(3, {SparseRow{{0, 3}, {1.0, 2.0}}}), FormatError);
    EXPECT_THROW(DataMatrix::sparse(3, {SparseRow{{1, 0}, {1.0, 2.0}}}), FormatError);
    EXPECT_THROW(DataMatrix::sparse(3, {SparseRow{{0}, {1.0, 2.0}}}), FormatError);
}

TEST(Sketch, EntryIsACoordinateFunction) {
    // v_i[j] = sum_d u_i[d] r_dj with r_dj = projection_entry(alpha, seed, j, d)
    const auto rows = random_dense(3, 7, 1.0, 1);
    const auto s = build_sketch(DataMatrix::dense(rows), 1.3, 4, 99);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            double v = 0.0;
            for (std::size_t d = 0; d < 7; ++d) v += rows[i][d] * projection_entry(1.3, 99, j, d);
            EXPECT_NEAR(s.row(i)[j], v, 1e-12);
        }
    }
}

TEST(Sketch, DenseAndSparseAgree) {
    const auto rows = random_dense(6, 300, 0.1, 2);
    const auto a = build_sketch(DataMatrix::dense(rows), 0.7, 16, 5);
    const auto b = build_sketch(to_sparse(rows), 0.7, 16, 5);
    ASSERT_EQ(a.values().size(), b.values().size());
    for (std::size_t t = 0; t < a.values().size(); ++t) EXPECT_NEAR(a.values()[t], b.values()[t], 1e-10);
}

TEST(Sketch, ThreadCountDoesNotChangeResult) {
    const auto rows = random_dense(5, 50, 0.5, 3);
    const auto a = build_sketch(DataMatrix::dense(rows), 1.8, 33, 5, 1);
    const auto b = build_sketch(DataMatrix::dense(rows), 1.8, 33, 5, 4);
    EXPECT_TRUE(a == b);
}

TEST(Sketch, UpdatesMatchRebuild) {
    auto rows = random_dense(2, 20, 0.5, 4);
    auto s = build_sketch(DataMatrix::dense(rows), 1.0, 8, 11);
    update_row(s, 1, 7, 0.5);
    update_row(s, 1, 3, -1.25);
    rows[1][7] += 0.5;
    rows[1][3] += -1.25;
    const auto t = build_sketch(DataMatrix::dense(rows), 1.0, 8, 11);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(s.row(1)[j], t.row(1)[j], 1e-12);
    EXPECT_THROW(update_row(s, 2, 0, 1.0), IndexError);
    EXPECT_THROW(update_row(s, 0, 20, 1.0), IndexError);
}

TEST(Sketch, L2PipelineIsUnbiased) {
    // alpha = 2: E (1/2k) sum x_j^2 = sum_d (u1 - u2)^2
    const std::vector<std::vector<double>> rows{{1, 0, 2, 0, -1}, {0, 1, 1, 0, 1}};
    double truth = 0.0;
    for (int d = 0; d < 5; ++d) truth += std::pow(rows[0][d] - rows[1][d], 2);
    const std::size_t k = 20000;
    const auto s = build_sketch(DataMatrix::dense(rows), 2.0, k, 8);
    const auto spec = EstimatorSpec::make(EstimatorKind::am, 2.0, k);
    const double d = estimate_distance(s, 0, 1, spec).d_hat;
    EXPECT_NEAR(d / truth, 1.0, 4.0 * std::sqrt(2.0 / k));
}

TEST(Sketch, DistanceChecks) {
    const auto s = build_sketch(DataMatrix::dense({{1, 2}, {3, 4}}), 1.0, 5, 1);
    EXPECT_THROW(estimate_distance(s, 0, 1, EstimatorSpec::make(EstimatorKind::oq, 1.5, 5)), ConfigurationError);
    EXPECT_THROW(estimate_distance(s, 0, 2, EstimatorSpec::make(EstimatorKind::oq, 1.0, 5)), IndexError);
    EXPECT_EQ(estimate_distance(s, 1, 1, EstimatorSpec::make(EstimatorKind::oq, 1.0, 5)).d_hat, 0.0);
    const auto spec = EstimatorSpec::make(EstimatorKind::oq, 1.0, 5);
    EXPECT_NEAR(estimate_distance_root(s, 0, 1, spec), estimate_distance(s, 0, 1, spec).d_hat, 1e-12);
    EXPECT_THROW(s.row(2), IndexError);
}

TEST(SketchFormat, RoundTripAndSize) {
    const auto s = build_sketch(DataMatrix::dense(random_dense(3, 4, 1.0, 5)), 0.9, 2, 1234);
    const auto bytes = serialize_sketch(s);
    EXPECT_EQ(bytes.size(), kSketchHeaderBytes + 3 * 2 * 8);
    EXPECT_EQ(bytes.substr(0, 4), "SSKP");
    const auto back = deserialize_sketch(bytes);
    EXPECT_TRUE(back == s);
    EXPECT_EQ(back.seed(), 1234u);
    EXPECT_EQ(back.alpha(), 0.9);

    const auto path = std::filesystem::temp_directory_path() / "stablesketch_roundtrip.sskp";
    save_sketch(s, path.string());
    EXPECT_EQ(std::filesystem::file_size(path), bytes.size());
    EXPECT_TRUE(load_sketch(path.string()) == s);
    std::filesystem::remove(path);
}

TEST(SketchFormat, RejectsCorruption) {
    const auto s = build_sketch(DataMatrix::dense({{1, 2}, {3, 4}}), 1.5, 3, 1);
    const auto good = serialize_sketch(s);
    auto bad = good;
    bad[0] = 'X';
    EXPECT_THROW(deserialize_sketch(bad), FormatError);
    bad = good;
    bad[4] = 9;
    EXPECT_THROW(deserialize_sketch(bad), FormatError);
    EXPECT_THROW(deserialize_sketch(good.substr(0, good.size() - 1)), FormatError);
    EXPECT_THROW(deserialize_sketch(good + "x"), FormatError);
    EXPECT_THROW(deserialize_sketch(good.substr(0, 10)), FormatError);
    EXPECT_THROW(load_sketch("/nonexistent/file.sskp"), IoError);
}

TEST(EntropyProxy, SingleEntry) {
    // one coordinate z = e: d(alpha) = e^alpha, proxy = (e^1.05 - e^0.95) / 0.1
    const std::size_t k = 4000;
    const std::vector<std::vector<double>> rows{{std::exp(1.0), 0.0}, {0.0, 0.0}};
    const auto hi = build_sketch(DataMatrix::dense(rows), kEntropyAlphaHigh, k, 3);
    const auto lo = build_sketch(DataMatrix::dense(rows), kEntropyAlphaLow, k, 3);
    const auto sh = EstimatorSpec::make(EstimatorKind::gm, kEntropyAlphaHigh, k);
    const auto sl = EstimatorSpec::make(EstimatorKind::gm, kEntropyAlphaLow, k);
    const double truth = (std::exp(1.05) - std::exp(0.95)) / 0.1;
    EXPECT_NEAR(estimate_entropy_proxy(hi, lo, 0, 1, sh, sl), truth, 0.1 * truth);
    EXPECT_THROW(estimate_entropy_proxy(lo, hi, 0, 1, sl, sh), ConfigurationError);
}
