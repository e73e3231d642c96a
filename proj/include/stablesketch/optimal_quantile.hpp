#pragma once

// Asymptotic variance of the quantile estimator and the variance-minimizing
// quantile q*(alpha).

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stablesketch/errors.hpp"
#include "stablesketch/stable.hpp"

namespace stablesketch {

/// g(q; alpha) = (q - q^2) / (f_|X|(W)^2 W^2) with f_|X| = 2 f_X the density of
/// |X|, X ~ S(alpha, 1), and W = abs_quantile_W(q, alpha). At alpha = 1 this is
/// (q - q^2) pi^2 / sin^2(pi q).
inline double variance_factor_g(double q, double alpha) {
    detail::require_alpha(alpha);
    detail::require_open_unit(q, "q");
    const double w = abs_quantile_W(q, alpha);
    const double f = stable_pdf(w, alpha);
    const double fw = 2.0 * f * w;
    if (!(fw > 0.0) || !std::isfinite(fw)) {
        throw NumericalError("variance_factor_g: degenerate density at W");
    }
    return (q - q * q) / (fw * fw);
}

/// k Var(d_hat_q) / d^2 as k grows: alpha^2 g(q; alpha).
inline double asymptotic_variance_factor(double q, double alpha) {
    return alpha * alpha * variance_factor_g(q, alpha);
}

/// Limit of alpha^2 g(q; alpha) as alpha -> 0+, where |X|^alpha tends to 1/E
/// with E unit exponential: (1 - q) / (q log^2 q).
inline double zero_limit_variance_factor(double q) {
    detail::require_open_unit(q, "q");
    const double lq = std::log(q);
    return (1.0 - q) / (q * lq * lq);
}

/// W^alpha in the alpha -> 0+ limit: the q-quantile of 1/E is -1/log q.
inline double zero_limit_W_alpha(double q) {
    detail::require_open_unit(q, "q");
    return -1.0 / std::log(q);
}

/// q*(0+): root of -log q + 2q - 2 = 0 on [0.05, 0.5].
inline double solve_q_star_zero_limit() {
    auto h = [](double q) { return -std::log(q) + 2.0 * q - 2.0; };
    double lo = 0.05;  // h > 0
    double hi = 0.5;   // h < 0
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (h(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

struct QStarOptions {
    /// Return 0.5 at alpha = 1 without searching.
    bool analytic_shortcut = true;
    /// Golden-section stops once the bracket is narrower than this.
    double tolerance = 1e-7;
};

/// argmin of g(q; alpha) over q in [0.05, 0.95]. A 50-point scan locates the
/// basin, then golden-section search refines it.
inline double solve_q_star(double alpha, QStarOptions opts = {}) {
    detail::require_alpha(alpha);
    if (opts.analytic_shortcut && alpha == 1.0) return 0.5;

    constexpr int kScan = 50;
    constexpr double kLo = 0.05;
    constexpr double kHi = 0.95;
    constexpr double step = (kHi - kLo) / (kScan - 1);
    auto g = [alpha](double q) { return variance_factor_g(q, alpha); };

    int best = 0;
    double best_val = g(kLo);
    for (int i = 1; i < kScan; ++i) {
        const double v = g(kLo + step * i);
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    double a = kLo + step * std::max(best - 1, 0);
    double b = kLo + step * std::min(best + 1, kScan - 1);

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double gc = g(c);
    double gd = g(d);
    while (b - a > opts.tolerance) {
        if (gc < gd) {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    return 0.5 * (a + b);
}

/// q*, W = q*-quantile of |S(alpha, 1)| and W^alpha for one alpha.
struct OptimalQuantile {
    double alpha;
    double q_star;
    double W;
    double W_alpha;
};

inline OptimalQuantile optimal_quantile(double alpha) {
    const double q = solve_q_star(alpha);
    const double w = abs_quantile_W(q, alpha);
    return {alpha, q, w, std::pow(w, alpha)};
}

}  // namespace stablesketch
