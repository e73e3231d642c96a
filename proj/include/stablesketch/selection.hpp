#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include "stablesketch/errors.hpp"
#include "stablesketch/rng.hpp"

namespace stablesketch {

namespace detail {

inline constexpr std::size_t kInsertionCutoff = 16;

inline void insertion_sort(double* a, std::size_t n) noexcept {
    for (std::size_t i = 1; i < n; ++i) {
        const double v = a[i];
        std::size_t j = i;
        for (; j > 0 && v < a[j - 1]; --j) {
            a[j] = a[j - 1];
        }
        a[j] = v;
    }
}

/// Puts the median of a[i], a[j], a[m] into a[m].
inline void median_of_three(double* a, std::size_t i, std::size_t m, std::size_t j) noexcept {
    if (a[m] < a[i]) std::swap(a[m], a[i]);
    if (a[j] < a[m]) std::swap(a[j], a[m]);
    if (a[m] < a[i]) std::swap(a[m], a[i]);
}

/// Moves the elements of a[0, n) satisfying `keep` to the front, in one
/// pass with no data-dependent branch, and returns their count.
template <class Keep>
inline std::size_t branchless_partition(double* a, std::size_t n, Keep keep) noexcept {
    std::size_t s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = a[i];
        const bool k = keep(v);
        a[i] = a[s];
        a[s] = v;
        s += k;
    }
    return s;
}

}  // namespace detail

/// Rearranges `values` so that values[rank - 1] holds the rank-th smallest
/// element (1-based), everything before it is <= and everything after is >=,
/// and returns that element. Median-of-three pivots; after repeated lopsided
/// splits the pivot is drawn at random from a stream seeded by the size.
/// Runs of values equal to the pivot are split off in a second pass.
inline double quickselect(std::span<double> values, std::size_t rank) {
    const std::size_t k = values.size();
    if (k == 0) throw EmptyInputError("quickselect: empty buffer");
    if (rank < 1 || rank > k) {
        throw IndexError("quickselect: rank " + std::to_string(rank) + " outside [1, " +
                         std::to_string(k) + "]");
    }
    double* a = values.data();
    std::size_t lo = 0;
    std::size_t hi = k;
    const std::size_t target = rank - 1;
    int lopsided = 0;
    RngStream fallback(0x5e1ec7ull, k);
    while (hi - lo > detail::kInsertionCutoff) {
        const std::size_t n = hi - lo;
        std::size_t p = n / 2;
        if (lopsided < 3) {
            detail::median_of_three(a + lo, 0, p, n - 1);
        } else {
            p = static_cast<std::size_t>(fallback.next_bits() % n);
        }
        std::swap(a[lo + p], a[hi - 1]);
        const double pivot = a[hi - 1];
        const std::size_t s =
            lo + detail::branchless_partition(a + lo, n - 1, [pivot](double v) { return v < pivot; });
        std::swap(a[s], a[hi - 1]);
        if (target == s) return pivot;
        const std::size_t smaller = std::min(s - lo, hi - s - 1);
        lopsided = (smaller < n / 8) ? lopsided + 1 : 0;
        if (target < s) {
            hi = s;
            continue;
        }
        const bool none_smaller = s == lo;
        lo = s + 1;
        if (none_smaller) {
            const std::size_t e =
                lo + detail::branchless_partition(a + lo, hi - lo, [pivot](double v) { return !(pivot < v); });
            if (target < e) return pivot;
            lo = e;
        }
    }
    detail::insertion_sort(a + lo, hi - lo);
    return a[target];
}

/// The ceil(q k)-th order statistic (1-based).
inline double empirical_q_quantile(std::span<double> values, double q) {
    detail::require_open_unit(q, "q");
    if (values.empty()) throw EmptyInputError("empirical_q_quantile: empty buffer");
    const auto k = static_cast<double>(values.size());
    const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(q * k)));
    return quickselect(values, std::min(rank, values.size()));
}

/// Midpoint-rule sample quantile: position h = q k + 1/2 (1-based), linear
/// interpolation between the order statistics at floor(h) and floor(h) + 1,
/// clamped to the sample range. Costs one selection plus a scan for the
/// next order statistic.
inline double interpolated_q_quantile(std::span<double> values, double q) {
    detail::require_open_unit(q, "q");
    const std::size_t k = values.size();
    if (k == 0) throw EmptyInputError("interpolated_q_quantile: empty buffer");
    const double h = q * static_cast<double>(k) + 0.5;
    if (h <= 1.0) return quickselect(values, 1);
    if (h >= static_cast<double>(k)) return quickselect(values, k);
    const auto r = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(r);
    const double lower = quickselect(values, r);
    if (frac == 0.0) return lower;
    double upper = values[r];
    for (std::size_t i = r + 1; i < k; ++i) upper = std::min(upper, values[i]);
    return lower + frac * (upper - lower);
}

}  // namespace stablesketch
