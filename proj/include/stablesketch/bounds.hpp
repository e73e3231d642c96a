#pragma once

// Exponential tail bounds for the quantile estimator,
//     Pr(d_hat >= (1 + eps) d) <= exp(-k eps^2 / G_R),
//     Pr(d_hat <= (1 - eps) d) <= exp(-k eps^2 / G_L),
// and the sample sizes they imply.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "stablesketch/errors.hpp"
#include "stablesketch/optimal_quantile.hpp"
#include "stablesketch/stable.hpp"

namespace stablesketch {

namespace detail {

/// eps^2 / G with P = P(|X| <= t) = 2F - 1 and S = P(|X| > t) = 2 - 2F.
/// Falls back to the eps -> 0 limit 2 alpha^2 g(q; alpha) when the
/// expression has cancelled below its rounding error.
inline double tail_constant_from_probs(double q, double alpha, double eps, double P, double S) {
    if (!(P > 0.0) || !(S > 0.0)) throw NumericalError("tail constant: degenerate F at the shifted quantile");
    const double t1 = -(1.0 - q) * std::log(S);
    const double t2 = -q * std::log(P);
    const double t3 = (1.0 - q) * std::log1p(-q) + q * std::log(q);
    const double rate = t1 + t2 + t3;
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * (std::fabs(t1) + std::fabs(t2) + std::fabs(t3));
    if (!(rate > noise)) return 2.0 * asymptotic_variance_factor(q, alpha);
    return eps * eps / rate;
}

}  // namespace detail

/// G_{R,q}; eps > 0.
inline double tail_constant_right(double q, double alpha, double eps) {
    detail::require_alpha(alpha);
    detail::require_open_unit(q, "q");
    if (!(eps > 0.0) || !std::isfinite(eps)) throw DomainError("tail_constant_right: eps must be > 0");
    const double t = std::pow(1.0 + eps, 1.0 / alpha) * abs_quantile_W(q, alpha);
    const double P = stable_abs_cdf(t, alpha);
    const double S = stable_abs_sf(t, alpha);
    if (!(P > q)) throw NumericalError("tail_constant_right: F_R did not exceed (1 + q) / 2");
    return detail::tail_constant_from_probs(q, alpha, eps, P, S);
}

/// G_{L,q}; 0 < eps < 1.
inline double tail_constant_left(double q, double alpha, double eps) {
    detail::require_alpha(alpha);
    detail::require_open_unit(q, "q");
    if (!(eps > 0.0 && eps < 1.0)) throw DomainError("tail_constant_left: eps must lie in (0, 1)");
    const double t = std::pow(1.0 - eps, 1.0 / alpha) * abs_quantile_W(q, alpha);
    const double P = stable_abs_cdf(t, alpha);
    const double S = stable_abs_sf(t, alpha);
    return detail::tail_constant_from_probs(q, alpha, eps, P, S);
}

enum class PlanRegime { bonferroni_n, fraction_T };

inline const char* to_string(PlanRegime r) noexcept {
    return r == PlanRegime::bonferroni_n ? "bonferroni_n" : "fraction_T";
}

/// Exactly one of `n` (number of points; all pairs covered) or `T` (all but
/// a 1/T fraction of pairs covered) is set.
struct PlanTarget {
    std::optional<double> n;
    std::optional<double> T;
};

struct TailBoundReport {
    double alpha = 0.0;
    double q = 0.0;
    double epsilon = 0.0;
    double delta = 0.0;
    double G_right = 0.0;
    /// NaN when eps >= 1: the left deviation cannot reach (1 - eps) d < 0.
    double G_left = 0.0;
    double G = 0.0;
    std::uint64_t k_planned = 0;
    PlanRegime regime = PlanRegime::fraction_T;
    double target = 0.0;  ///< n or T
};

/// k = ceil(G / eps^2 (2 log n - log delta)) or ceil(G / eps^2 (log 2T - log delta)).
inline std::uint64_t planned_k(double G, double eps, double delta, const PlanTarget& target) {
    if (!(G > 0.0) || !std::isfinite(G)) throw DomainError("planned_k: G must be finite and positive");
    if (!(eps > 0.0) || !std::isfinite(eps)) throw DomainError("planned_k: eps must be > 0");
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
    if (target.n.has_value() == target.T.has_value()) throw DomainError("supply exactly one of n and T");
    double log_term = 0.0;
    if (target.n) {
        if (!(*target.n >= 1.0)) throw DomainError("n must be >= 1");
        log_term = 2.0 * std::log(*target.n) - std::log(delta);
    } else {
        if (!(*target.T >= 1.0)) throw DomainError("T must be >= 1");
        log_term = std::log(2.0 * *target.T) - std::log(delta);
    }
    const double k = std::ceil(G / (eps * eps) * log_term);
    return static_cast<std::uint64_t>(std::max(1.0, k));
}

/// Sample size from G = max(G_R, G_L) at the target eps. For eps >= 1 only
/// the right tail exists and G = G_R.
inline TailBoundReport plan_sample_size(double alpha, double q, double eps, double delta, const PlanTarget& target) {
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
    if (target.n.has_value() == target.T.has_value()) throw DomainError("supply exactly one of n and T");
    TailBoundReport r;
    r.alpha = alpha;
    r.q = q;
    r.epsilon = eps;
    r.delta = delta;
    r.G_right = tail_constant_right(q, alpha, eps);
    r.G_left = eps < 1.0 ? tail_constant_left(q, alpha, eps) : std::numeric_limits<double>::quiet_NaN();
    r.G = eps < 1.0 ? std::max(r.G_right, r.G_left) : r.G_right;
    r.regime = target.n ? PlanRegime::bonferroni_n : PlanRegime::fraction_T;
    r.target = target.n ? *target.n : *target.T;
    r.k_planned = planned_k(r.G, eps, delta, target);
    return r;
}

enum class TailSide { right, left };

/// Chernoff bound on a Binomial(k, p) tail:
///   right: Pr(X >= (1 + e) k p) <= [((1-p)/(1-m))^(1-m) (1/(1+e))^m]^k,  m = (1+e) p
///   left:  Pr(X <= (1 - e) k p) <= [((1-p)/(1-m))^(1-m) (1/(1-e))^m]^k,  m = (1-e) p
inline double binomial_chernoff_check(std::uint64_t k, double p, double eps_prime, TailSide side) {
    detail::require_open_unit(p, "p");
    if (k == 0) throw DomainError("binomial_chernoff_check: k must be >= 1");
    if (side == TailSide::right) {
        if (!(eps_prime > 0.0)) throw DomainError("right-tail eps' must be > 0");
    } else if (!(eps_prime > 0.0 && eps_prime < 1.0)) {
        throw DomainError("left-tail eps' must lie in (0, 1)");
    }
    const double factor = side == TailSide::right ? 1.0 + eps_prime : 1.0 - eps_prime;
    const double m = factor * p;
    if (m > 1.0) return 0.0;
    const double first = m == 1.0 ? 0.0 : (1.0 - m) * (std::log1p(-p) - std::log1p(-m));
    const double log_bound = static_cast<double>(k) * (first - m * std::log(factor));
    return std::exp(log_bound);
}

}  // namespace stablesketch
