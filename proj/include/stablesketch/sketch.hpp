#pragma once

// Stable random projection sketches. Row i of the sketch is v_i = R^T u_i
// where R is D x k with entries r_{dj} ~ S(alpha, 1). R is never stored:
// r_{dj} is the CMS draw from block d of stream (seed, j).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "stablesketch/errors.hpp"
#include "stablesketch/estimators.hpp"
#include "stablesketch/rng.hpp"
#include "stablesketch/stable.hpp"

namespace stablesketch {

struct SparseRow {
    std::vector<std::size_t> indices;  ///< strictly increasing
    std::vector<double> values;
};

/// n x D data, held densely or as sparse rows.
class DataMatrix {
public:
    static DataMatrix dense(std::vector<std::vector<double>> rows) {
        DataMatrix m;
        m.sparse_ = false;
        m.dim_ = rows.empty() ? 0 : rows.front().size();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.dim_) {
                throw FormatError("row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                                  " entries, expected " + std::to_string(m.dim_));
            }
            for (double v : rows[i]) {
                if (!std::isfinite(v)) throw FormatError("row " + std::to_string(i) + " has a non-finite entry");
            }
        }
        m.dense_ = std::move(rows);
        return m;
    }

    static DataMatrix sparse(std::size_t dim, std::vector<SparseRow> rows) {
        DataMatrix m;
        m.sparse_ = true;
        m.dim_ = dim;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = rows[i];
            const std::string where = "sparse row " + std::to_string(i);
            if (r.indices.size() != r.values.size()) throw FormatError(where + ": index/value length mismatch");
            for (std::size_t e = 0; e < r.indices.size(); ++e) {
                if (r.indices[e] >= dim) throw FormatError(where + ": index out of range");
                if (e > 0 && r.indices[e] <= r.indices[e - 1]) {
                    throw FormatError(where + ": indices must be strictly increasing");
                }
                if (!std::isfinite(r.values[e])) throw FormatError(where + ": non-finite entry");
            }
        }
        m.sparse_rows_ = std::move(rows);
        return m;
    }

    std::size_t rows() const noexcept { return sparse_ ? sparse_rows_.size() : dense_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    bool is_sparse() const noexcept { return sparse_; }
    const std::vector<std::vector<double>>& dense_rows() const noexcept { return dense_; }
    const std::vector<SparseRow>& sparse_rows() const noexcept { return sparse_rows_; }

private:
    bool sparse_ = false;
    std::size_t dim_ = 0;
    std::vector<std::vector<double>> dense_;
    std::vector<SparseRow> sparse_rows_;
};

/// r_{dj}: entry (d, j) of the implicit projection matrix.
inline double projection_entry(double alpha, std::uint64_t seed, std::uint64_t column, std::uint64_t position) {
    const auto u = RngStream(seed, column).block_at(position);
    return stable_from_uniforms(alpha, u.first, u.second);
}

class Sketch {
public:
    Sketch() = default;
    Sketch(std::size_t n, std::size_t k, double alpha, std::uint64_t seed, std::size_t dim = 0)
        : n_(n), k_(k), alpha_(alpha), seed_(seed), dim_(dim), values_(n * k, 0.0) {
        detail::require_alpha(alpha);
        if (k == 0) throw DomainError("sketch: k must be >= 1");
    }

    std::size_t n() const noexcept { return n_; }
    std::size_t k() const noexcept { return k_; }
    double alpha() const noexcept { return alpha_; }
    std::uint64_t seed() const noexcept { return seed_; }
    /// Data dimension D, or 0 when unknown (e.g. after loading from a file).
    std::size_t dim() const noexcept { return dim_; }

    std::span<double> row(std::size_t i) {
        check_row(i);
        return {values_.data() + i * k_, k_};
    }
    std::span<const double> row(std::size_t i) const {
        check_row(i);
        return {values_.data() + i * k_, k_};
    }
    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

    /// Compares the persisted state; the data dimension is not part of it.
    friend bool operator==(const Sketch& a, const Sketch& b) {
        return a.n_ == b.n_ && a.k_ == b.k_ && a.alpha_ == b.alpha_ && a.seed_ == b.seed_ && a.values_ == b.values_;
    }

private:
    void check_row(std::size_t i) const {
        if (i >= n_) throw IndexError("row " + std::to_string(i) + " outside sketch with " + std::to_string(n_) + " rows");
    }

    std::size_t n_ = 0;
    std::size_t k_ = 0;
    double alpha_ = 2.0;
    std::uint64_t seed_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> values_;
};

namespace detail {

/// Adds sum_d u_{i,d} r_{dj} into sketch columns [j0, j1), visiting
/// coordinates in increasing d so every entry sees the same summation order.
inline void project_columns(const DataMatrix& data, Sketch& out, std::size_t j0, std::size_t j1) {
    const std::size_t width = j1 - j0;
    if (width == 0) return;
    const std::size_t k = out.k();
    std::vector<double> r(width);
    auto draw = [&](std::size_t d) {
        for (std::size_t j = j0; j < j1; ++j) r[j - j0] = projection_entry(out.alpha(), out.seed(), j, d);
    };
    double* base = out.values().data();
    if (!data.is_sparse()) {
        const auto& rows = data.dense_rows();
        for (std::size_t d = 0; d < data.dim(); ++d) {
            bool drawn = false;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const double u = rows[i][d];
                if (u == 0.0) continue;
                if (!drawn) {
                    draw(d);
                    drawn = true;
                }
                double* v = base + i * k + j0;
                for (std::size_t j = 0; j < width; ++j) v[j] += u * r[j];
            }
        }
        return;
    }
    // Column-wise view of the non-zeros: coordinate -> (row, value).
    std::vector<std::pair<std::size_t, std::pair<std::size_t, double>>> entries;
    const auto& rows = data.sparse_rows();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t e = 0; e < rows[i].indices.size(); ++e) {
            if (rows[i].values[e] != 0.0) entries.push_back({rows[i].indices[e], {i, rows[i].values[e]}});
        }
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t last = static_cast<std::size_t>(-1);
    for (const auto& [d, iv] : entries) {
        if (d != last) {
            draw(d);
            last = d;
        }
        double* v = base + iv.first * k + j0;
        for (std::size_t j = 0; j < width; ++j) v[j] += iv.second * r[j];
    }
}

}  // namespace detail

/// Sketch of every row of `data`. Columns are split across `threads`
/// workers; the result does not depend on the thread count.
inline Sketch build_sketch(const DataMatrix& data, double alpha, std::size_t k, std::uint64_t seed,
                           unsigned threads = 1) {
    Sketch out(data.rows(), k, alpha, seed, data.dim());
    const unsigned nthreads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(k)));
    if (nthreads == 1) {
        detail::project_columns(data, out, 0, k);
        return out;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t) {
        const std::size_t j0 = k * t / nthreads;
        const std::size_t j1 = k * (t + 1) / nthreads;
        pool.emplace_back([&data, &out, j0, j1] { detail::project_columns(data, out, j0, j1); });
    }
    for (auto& th : pool) th.join();
    return out;
}

/// Streaming update u_{i,position} += delta.
inline void update_row(Sketch& sketch, std::size_t i, std::size_t position, double delta) {
    if (sketch.dim() != 0 && position >= sketch.dim()) {
        throw IndexError("position " + std::to_string(position) + " outside dimension " +
                         std::to_string(sketch.dim()));
    }
    if (!std::isfinite(delta)) throw DomainError("update_row: delta must be finite");
    auto v = sketch.row(i);
    if (delta == 0.0) return;
    for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] += delta * projection_entry(sketch.alpha(), sketch.seed(), j, position);
    }
}

namespace detail {

inline void check_pair(const Sketch& s, std::size_t i, std::size_t j, const EstimatorSpec& spec) {
    if (spec.alpha() != s.alpha()) {
        throw ConfigurationError("estimator alpha " + std::to_string(spec.alpha()) + " differs from sketch alpha " +
                                 std::to_string(s.alpha()));
    }
    if (i >= s.n() || j >= s.n()) throw IndexError("row pair outside sketch");
}

inline std::span<double> difference(const Sketch& s, std::size_t i, std::size_t j, std::vector<double>& buf) {
    buf.resize(s.k());
    const auto a = s.row(i);
    const auto b = s.row(j);
    for (std::size_t t = 0; t < buf.size(); ++t) buf[t] = a[t] - b[t];
    return buf;
}

}  // namespace detail

/// d_hat for the pair (i, j) from x = v_i - v_j.
inline DistanceEstimate estimate_distance(const Sketch& sketch, std::size_t i, std::size_t j,
                                          const EstimatorSpec& spec) {
    detail::check_pair(sketch, i, j, spec);
    thread_local std::vector<double> buf;
    return spec.estimate(detail::difference(sketch, i, j, buf));
}

/// d_hat^(1/alpha), the l_alpha distance itself.
inline double estimate_distance_root(const Sketch& sketch, std::size_t i, std::size_t j,
                                     const EstimatorSpec& spec) {
    detail::check_pair(sketch, i, j, spec);
    thread_local std::vector<double> buf;
    return spec.estimate_root(detail::difference(sketch, i, j, buf));
}

inline constexpr double kEntropyAlphaHigh = 1.05;
inline constexpr double kEntropyAlphaLow = 0.95;

/// (d_hat at alpha 1.05 - d_hat at alpha 0.95) / 0.1, a central difference of
/// sum_d |z_d|^alpha in alpha at 1, i.e. of sum_d |z_d| log |z_d| for
/// z = u_i - u_j. Both sketches must cover the same rows; sharing the seed
/// makes the two estimates strongly correlated.
inline double estimate_entropy_proxy(const Sketch& high, const Sketch& low, std::size_t i, std::size_t j,
                                     const EstimatorSpec& spec_high, const EstimatorSpec& spec_low) {
    if (std::fabs(high.alpha() - kEntropyAlphaHigh) > 1e-12 || std::fabs(low.alpha() - kEntropyAlphaLow) > 1e-12) {
        throw ConfigurationError("entropy proxy needs sketches at alpha 1.05 and 0.95");
    }
    if (high.n() != low.n() || high.k() != low.k()) {
        throw ConfigurationError("entropy proxy sketches differ in shape");
    }
    const double dh = estimate_distance(high, i, j, spec_high).d_hat;
    const double dl = estimate_distance(low, i, j, spec_low).d_hat;
    return (dh - dl) / (kEntropyAlphaHigh - kEntropyAlphaLow);
}

// ---- binary format -------------------------------------------------------
//
// little-endian:  "SSKP" | u16 version = 1 | u16 reserved | f64 alpha |
//                 u64 n | u32 k | u32 reserved | u64 seed | n*k f64 row-major

inline constexpr std::uint16_t kSketchFormatVersion = 1;
inline constexpr std::size_t kSketchHeaderBytes = 40;

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
    std::uint64_t bits = 0;
    if constexpr (std::is_same_v<T, double>) {
        std::memcpy(&bits, &value, sizeof value);
    } else {
        bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

template <class T>
T get_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) bits |= std::uint64_t{p[b]} << (8 * b);
    if constexpr (std::is_same_v<T, double>) {
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    } else {
        return static_cast<T>(bits);
    }
}

}  // namespace detail

inline std::string serialize_sketch(const Sketch& s) {
    if (s.k() > 0xFFFFFFFFull) throw FormatError("k does not fit the file format");
    std::string out;
    out.reserve(kSketchHeaderBytes + 8 * s.values().size());
    out.append("SSKP", 4);
    detail::put_le<std::uint16_t>(out, kSketchFormatVersion);
    detail::put_le<std::uint16_t>(out, 0);
    detail::put_le<double>(out, s.alpha());
    detail::put_le<std::uint64_t>(out, s.n());
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.k()));
    detail::put_le<std::uint32_t>(out, 0);
    detail::put_le<std::uint64_t>(out, s.seed());
    for (double v : s.values()) detail::put_le<double>(out, v);
    return out;
}

inline Sketch deserialize_sketch(std::string_view bytes) {
    if (bytes.size() < kSketchHeaderBytes) throw FormatError("sketch file truncated: header incomplete");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (std::memcmp(p, "SSKP", 4) != 0) throw FormatError("not a sketch file: bad magic");
    const auto version = detail::get_le<std::uint16_t>(p + 4);
    if (version != kSketchFormatVersion) {
        throw FormatError("unsupported sketch format version " + std::to_string(version));
    }
    const double alpha = detail::get_le<double>(p + 8);
    const auto n = detail::get_le<std::uint64_t>(p + 16);
    const auto k = detail::get_le<std::uint32_t>(p + 24);
    const auto seed = detail::get_le<std::uint64_t>(p + 32);
    if (!(alpha > 0.0 && alpha <= 2.0)) throw FormatError("sketch file has invalid alpha");
    if (k == 0) throw FormatError("sketch file has k = 0");
    const std::uint64_t payload = bytes.size() - kSketchHeaderBytes;
    if (n > payload / 8 / k || payload != n * k * 8) {
        throw FormatError("sketch file size does not match n = " + std::to_string(n) + ", k = " + std::to_string(k));
    }
    Sketch s(static_cast<std::size_t>(n), k, alpha, seed);
    auto& values = s.values();
    for (std::size_t t = 0; t < values.size(); ++t) {
        values[t] = detail::get_le<double>(p + kSketchHeaderBytes + 8 * t);
    }
    return s;
}

inline void save_sketch(const Sketch& s, const std::string& path) {
    const std::string bytes = serialize_sketch(s);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline Sketch load_sketch(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_sketch(bytes);
}

}  // namespace stablesketch
