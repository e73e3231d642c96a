#pragma once

// q*(alpha), W^alpha(q*) and the Monte-Carlo bias factors
// B_{alpha,k} = E[d_hat_oq] at d = 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "stablesketch/errors.hpp"
#include "stablesketch/estimators.hpp"
#include "stablesketch/optimal_quantile.hpp"
#include "stablesketch/rng.hpp"
#include "stablesketch/stable.hpp"

namespace stablesketch {

/// 0.05, 0.10, ..., 2.00
inline std::vector<double> default_alpha_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 40; ++i) grid.push_back(i / 20.0);
    return grid;
}

inline std::vector<std::size_t> default_k_grid() {
    return {5, 10, 15, 20, 30, 50, 75, 100, 150, 200, 300, 400};
}

struct QStarRow {
    double alpha = 0.0;
    double q_star = 0.0;
    double W_alpha = 0.0;
};

struct BiasCell {
    double alpha = 0.0;
    std::size_t k = 0;
    double B = 1.0;
    double std_error = 0.0;
    std::uint64_t replicates = 0;
    std::uint64_t seed = 0;
};

class CalibrationTable {
public:
    CalibrationTable() = default;
    CalibrationTable(std::vector<QStarRow> quantiles, std::vector<BiasCell> cells)
        : quantiles_(std::move(quantiles)), cells_(std::move(cells)) {
        std::sort(quantiles_.begin(), quantiles_.end(),
                  [](const QStarRow& a, const QStarRow& b) { return a.alpha < b.alpha; });
        std::sort(cells_.begin(), cells_.end(), [](const BiasCell& a, const BiasCell& b) {
            return a.alpha != b.alpha ? a.alpha < b.alpha : a.k < b.k;
        });
        for (const auto& c : cells_) {
            insert_sorted(alphas_, c.alpha);
            insert_sorted(ks_, c.k);
        }
    }

    const std::vector<QStarRow>& quantiles() const noexcept { return quantiles_; }
    const std::vector<BiasCell>& cells() const noexcept { return cells_; }
    const std::vector<double>& alpha_grid() const noexcept { return alphas_; }
    const std::vector<std::size_t>& k_grid() const noexcept { return ks_; }

    std::uint64_t seed = 0;
    std::uint64_t replicates = 0;
    std::string built_at;

    const BiasCell* find(double alpha, std::size_t k) const noexcept {
        for (const auto& c : cells_) {
            if (std::fabs(c.alpha - alpha) < kAlphaMatch && c.k == k) return &c;
        }
        return nullptr;
    }

    std::optional<QStarRow> quantile_for(double alpha) const noexcept {
        for (const auto& r : quantiles_) {
            if (std::fabs(r.alpha - alpha) < kAlphaMatch) return r;
        }
        return std::nullopt;
    }

    /// B_{alpha,k}. Grid cells are returned as stored; k above the largest
    /// grid k gives 1; otherwise bilinear interpolation in (alpha, 1/k) when
    /// allowed. Anything else is a calibration miss.
    double bias(double alpha, std::size_t k, bool interpolate = true) const {
        if (const auto* c = find(alpha, k)) return c->B;
        if (!ks_.empty() && k > ks_.back()) return 1.0;
        if (!interpolate) throw miss(alpha, k, "no grid cell and interpolation is disabled");
        if (alphas_.empty() || alpha < alphas_.front() - kAlphaMatch || alpha > alphas_.back() + kAlphaMatch ||
            k < ks_.front()) {
            throw miss(alpha, k, "outside the calibrated grid");
        }
        const auto [a0, a1] = bracket(alphas_, alpha);
        const auto [k0, k1] = bracket(ks_, k);
        const BiasCell* c00 = find(a0, k0);
        const BiasCell* c01 = find(a0, k1);
        const BiasCell* c10 = find(a1, k0);
        const BiasCell* c11 = find(a1, k1);
        if (!c00 || !c01 || !c10 || !c11) throw miss(alpha, k, "grid has holes around this point");
        const double ta = a1 == a0 ? 0.0 : (alpha - a0) / (a1 - a0);
        const double x = 1.0 / static_cast<double>(k);
        const double x0 = 1.0 / static_cast<double>(k0);
        const double x1 = 1.0 / static_cast<double>(k1);
        const double tk = k1 == k0 ? 0.0 : (x - x0) / (x1 - x0);
        return (1 - ta) * (1 - tk) * c00->B + (1 - ta) * tk * c01->B + ta * (1 - tk) * c10->B + ta * tk * c11->B;
    }

private:
    static constexpr double kAlphaMatch = 1e-9;

    template <class T>
    static void insert_sorted(std::vector<T>& v, T x) {
        auto it = std::lower_bound(v.begin(), v.end(), x);
        if (it == v.end() || *it != x) v.insert(it, x);
    }

    template <class T, class U>
    static std::pair<T, T> bracket(const std::vector<T>& grid, U x) {
        auto it = std::lower_bound(grid.begin(), grid.end(), static_cast<T>(x));
        if (it == grid.end()) return {grid.back(), grid.back()};
        if (*it == static_cast<T>(x) || it == grid.begin()) return {*it, *it};
        return {*(it - 1), *it};
    }

    static CalibrationMissError miss(double alpha, std::size_t k, const char* why) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "no bias factor for alpha=%g, k=%zu: %s", alpha, k, why);
        return CalibrationMissError(buf);
    }

    std::vector<QStarRow> quantiles_;
    std::vector<BiasCell> cells_;
    std::vector<double> alphas_;
    std::vector<std::size_t> ks_;
};

struct BiasBuildOptions {
    unsigned threads = 1;
    /// Replicates per independent stream; the last block of a cell may be shorter.
    std::uint64_t block_size = 10000;
    /// Refuse smaller runs; tests lower this to exercise the machinery.
    std::uint64_t min_replicates = 100000;
    std::function<void(const BiasCell&)> on_cell;
    /// Called for grid points left out because B is infinite there.
    std::function<void(double alpha, std::size_t k)> on_skip;
};

namespace detail {

struct MomentSums {
    double sum = 0.0;
    double sum_sq = 0.0;
};

/// Stream for block `block` of grid cell (alpha_index, k).
inline RngStream bias_block_stream(std::uint64_t seed, std::size_t alpha_index, std::size_t k, std::uint64_t block) {
    const std::uint64_t cell = mix64((static_cast<std::uint64_t>(alpha_index) << 32) ^ k);
    return RngStream(seed, mix64(cell ^ mix64(block + 1)));
}

inline MomentSums run_bias_block(const EstimatorSpec& spec, RngStream stream, std::uint64_t count) {
    std::vector<double> x(spec.k());
    MomentSums m;
    for (std::uint64_t r = 0; r < count; ++r) {
        for (double& v : x) v = sample_standard_stable(spec.alpha(), stream);
        const double d = spec.estimate(x).d_hat;
        m.sum += d;
        m.sum_sq += d * d;
    }
    return m;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace detail

/// Monte-Carlo bias table. Every (cell, block) pair owns its stream and the
/// block sums are reduced in block order, so the table does not depend on
/// the thread count.
inline CalibrationTable build_bias_table(const std::vector<double>& alpha_grid, const std::vector<std::size_t>& k_grid,
                                         std::uint64_t replicates, std::uint64_t seed,
                                         const BiasBuildOptions& opts = {}) {
    if (replicates < opts.min_replicates) {
        throw ConfigurationError("bias table needs at least " + std::to_string(opts.min_replicates) +
                                 " replicates per cell, got " + std::to_string(replicates));
    }
    if (replicates < 2) throw ConfigurationError("bias table needs at least 2 replicates per cell");
    if (opts.block_size == 0) throw ConfigurationError("block_size must be positive");
    for (double a : alpha_grid) detail::require_alpha(a);
    for (auto k : k_grid) {
        if (k == 0) throw DomainError("k grid entries must be >= 1");
    }

    std::vector<QStarRow> quantiles;
    std::vector<OptimalQuantile> oqs;
    for (double a : alpha_grid) {
        oqs.push_back(optimal_quantile(a));
        quantiles.push_back({a, oqs.back().q_star, oqs.back().W_alpha});
    }

    const std::uint64_t blocks = (replicates + opts.block_size - 1) / opts.block_size;
    std::vector<BiasCell> cells;
    for (std::size_t ai = 0; ai < alpha_grid.size(); ++ai) {
        for (std::size_t k : k_grid) {
            if (!quantile_estimate_has_mean(alpha_grid[ai], k, oqs[ai].q_star)) {
                if (opts.on_skip) opts.on_skip(alpha_grid[ai], k);
                continue;
            }
            const auto spec = EstimatorSpec::make(EstimatorKind::oq, alpha_grid[ai], k, std::nullopt, oqs[ai]);
            std::vector<detail::MomentSums> partial(blocks);
            auto work = [&](unsigned worker, unsigned nworkers) {
                for (std::uint64_t b = worker; b < blocks; b += nworkers) {
                    const std::uint64_t count = std::min(opts.block_size, replicates - b * opts.block_size);
                    partial[b] = detail::run_bias_block(spec, detail::bias_block_stream(seed, ai, k, b), count);
                }
            };
            const unsigned nthreads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(blocks)));
            if (nthreads == 1) {
                work(0, 1);
            } else {
                std::vector<std::thread> pool;
                for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(work, t, nthreads);
                for (auto& th : pool) th.join();
            }
            detail::MomentSums total;
            for (const auto& p : partial) {
                total.sum += p.sum;
                total.sum_sq += p.sum_sq;
            }
            const auto n = static_cast<double>(replicates);
            const double mean = total.sum / n;
            const double var = std::max(0.0, (total.sum_sq - n * mean * mean) / (n - 1.0));
            cells.push_back({alpha_grid[ai], k, mean, std::sqrt(var / n), replicates, seed});
            if (opts.on_cell) opts.on_cell(cells.back());
        }
    }
    CalibrationTable table(std::move(quantiles), std::move(cells));
    table.seed = seed;
    table.replicates = replicates;
    table.built_at = detail::utc_timestamp();
    return table;
}

/// Cells (alpha, k1 < k2) where B rises with k by more than `sigmas`
/// combined standard errors.
inline std::vector<std::pair<BiasCell, BiasCell>> bias_monotonicity_violations(const CalibrationTable& table,
                                                                              double sigmas = 3.0) {
    std::vector<std::pair<BiasCell, BiasCell>> out;
    const auto& cells = table.cells();
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
        const auto& a = cells[i];
        const auto& b = cells[i + 1];
        if (a.alpha != b.alpha) continue;
        const double se = std::hypot(a.std_error, b.std_error);
        if (b.B - a.B > sigmas * se) out.emplace_back(a, b);
    }
    return out;
}

namespace detail {

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, ',')) fields.push_back(cur);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

inline double parse_double_field(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw FormatError("");
        return v;
    } catch (const std::exception&) {
        throw FormatError(where + ": cannot parse number '" + s + "'");
    }
}

inline std::uint64_t parse_u64_field(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(s, &used);
        if (used != s.size() || s.empty() || s[0] == '-') throw FormatError("");
        return v;
    } catch (const std::exception&) {
        throw FormatError(where + ": cannot parse integer '" + s + "'");
    }
}

inline std::vector<std::vector<std::string>> read_csv_with_header(const std::string& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw FormatError(path + ": expected header '" + header + "'");
    std::vector<std::vector<std::string>> rows;
    const std::size_t width = split_csv_line(header).size();
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != width) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) + " fields");
        }
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace detail

inline constexpr const char* kBiasCsvHeader = "alpha,k,B,stderr,replicates,seed";
inline constexpr const char* kQStarCsvHeader = "alpha,q_star,W_alpha";

inline void write_bias_csv(const CalibrationTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << kBiasCsvHeader << '\n';
    for (const auto& c : table.cells()) {
        out << detail::format_g17(c.alpha) << ',' << c.k << ',' << detail::format_g17(c.B) << ','
            << detail::format_g17(c.std_error) << ',' << c.replicates << ',' << c.seed << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline void write_qstar_csv(const std::vector<QStarRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << kQStarCsvHeader << '\n';
    for (const auto& r : rows) {
        out << detail::format_g17(r.alpha) << ',' << detail::format_g17(r.q_star) << ','
            << detail::format_g17(r.W_alpha) << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::vector<BiasCell> read_bias_csv(const std::string& path) {
    std::vector<BiasCell> cells;
    for (const auto& f : detail::read_csv_with_header(path, kBiasCsvHeader)) {
        BiasCell c;
        c.alpha = detail::parse_double_field(f[0], path);
        c.k = detail::parse_u64_field(f[1], path);
        c.B = detail::parse_double_field(f[2], path);
        c.std_error = detail::parse_double_field(f[3], path);
        c.replicates = detail::parse_u64_field(f[4], path);
        c.seed = detail::parse_u64_field(f[5], path);
        cells.push_back(c);
    }
    return cells;
}

inline std::vector<QStarRow> read_qstar_csv(const std::string& path) {
    std::vector<QStarRow> rows;
    for (const auto& f : detail::read_csv_with_header(path, kQStarCsvHeader)) {
        rows.push_back({detail::parse_double_field(f[0], path), detail::parse_double_field(f[1], path),
                        detail::parse_double_field(f[2], path)});
    }
    return rows;
}

/// Table from a bias CSV and an optional q* CSV (empty path: none).
inline CalibrationTable load_calibration(const std::string& bias_path, const std::string& qstar_path = {}) {
    auto cells = read_bias_csv(bias_path);
    std::vector<QStarRow> rows;
    if (!qstar_path.empty()) rows = read_qstar_csv(qstar_path);
    CalibrationTable table(std::move(rows), std::move(cells));
    if (!table.cells().empty()) {
        table.seed = table.cells().front().seed;
        table.replicates = table.cells().front().replicates;
    }
    return table;
}

/// EstimatorSpec whose oq/oqc constants come from the table where it has them.
/// q* and W^alpha are taken from the q* rows at grid alphas and recomputed
/// elsewhere; oqc additionally looks up B_{alpha,k}.
inline EstimatorSpec make_estimator_spec(EstimatorKind kind, double alpha, std::size_t k,
                                         const CalibrationTable& table, bool interpolate = true) {
    if (kind != EstimatorKind::oq && kind != EstimatorKind::oqc) return EstimatorSpec::make(kind, alpha, k);
    std::optional<OptimalQuantile> oq;
    if (auto row = table.quantile_for(alpha)) {
        oq = OptimalQuantile{alpha, row->q_star, std::pow(row->W_alpha, 1.0 / alpha), row->W_alpha};
    }
    std::optional<double> bias;
    if (kind == EstimatorKind::oqc) {
        const double q = oq ? oq->q_star : solve_q_star(alpha);
        if (!quantile_estimate_has_mean(alpha, k, q)) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "no bias factor for alpha=%g, k=%zu: the oq estimate has infinite mean there",
                          alpha, k);
            throw CalibrationMissError(buf);
        }
        bias = table.bias(alpha, k, interpolate);
    }
    return EstimatorSpec::make(kind, alpha, k, bias, oq);
}

}  // namespace stablesketch
