#pragma once

// Estimators of the scale parameter d from k samples x_j ~ S(alpha, d).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <boost/math/special_functions/gamma.hpp>

#include "stablesketch/errors.hpp"
#include "stablesketch/optimal_quantile.hpp"
#include "stablesketch/selection.hpp"
#include "stablesketch/stable.hpp"

namespace stablesketch {

enum class EstimatorKind { gm, hm, fp, oq, oqc, median, am };

inline std::string_view to_string(EstimatorKind kind) noexcept {
    switch (kind) {
        case EstimatorKind::gm: return "gm";
        case EstimatorKind::hm: return "hm";
        case EstimatorKind::fp: return "fp";
        case EstimatorKind::oq: return "oq";
        case EstimatorKind::oqc: return "oqc";
        case EstimatorKind::median: return "median";
        case EstimatorKind::am: return "am";
    }
    return "?";
}

inline EstimatorKind parse_estimator_kind(std::string_view name) {
    for (auto kind : {EstimatorKind::gm, EstimatorKind::hm, EstimatorKind::fp, EstimatorKind::oq,
                      EstimatorKind::oqc, EstimatorKind::median, EstimatorKind::am}) {
        if (to_string(kind) == name) return kind;
    }
    throw ConfigurationError("unknown estimator '" + std::string(name) + "'");
}

struct DistanceEstimate {
    double d_hat = 0.0;
    EstimatorKind kind = EstimatorKind::oq;
    double alpha = 0.0;
    /// Set when the fp correction factor went negative and d_hat was clamped to 0.
    bool clamped = false;
};

/// log E|X|^t for X ~ S(alpha, 1), valid for -1 < t < alpha:
///     E|X|^t = (2/pi) Gamma(1 - t/alpha) Gamma(t) sin(pi t / 2).
inline double log_abs_moment(double t, double alpha) {
    detail::require_alpha(alpha);
    if (!(t > -1.0 && t < alpha)) throw DomainError("log_abs_moment: need -1 < t < alpha");
    if (t == 0.0) return 0.0;
    constexpr double pi = std::numbers::pi;
    return std::log(2.0 / pi) + boost::math::lgamma(1.0 - t / alpha) + boost::math::lgamma(t) +
           std::log(std::fabs(std::sin(0.5 * pi * t)));
}

/// Variance objective of the fractional power estimator,
///     (1/lambda^2) (C(2 lambda) / C(lambda)^2 - 1),   C(l) = E|X|^(l alpha).
inline double fp_variance_objective(double lambda, double alpha) {
    const double log_ratio = log_abs_moment(2.0 * lambda * alpha, alpha) -
                             2.0 * log_abs_moment(lambda * alpha, alpha);
    return std::expm1(log_ratio) / (lambda * lambda);
}

/// lambda* = argmin of fp_variance_objective over (-1/(2 alpha), 1/2), kept
/// 1e-4 inside both ends.
inline double solve_lambda_star(double alpha) {
    detail::require_alpha(alpha);
    const double lo = -1.0 / (2.0 * alpha) + 1e-4;
    const double hi = 0.5 - 1e-4;
    auto f = [alpha](double lambda) {
        if (lambda == 0.0) lambda = 1e-12;
        return fp_variance_objective(lambda, alpha);
    };

    constexpr int kScan = 64;
    const double step = (hi - lo) / (kScan - 1);
    int best = 0;
    double best_val = f(lo);
    for (int i = 1; i < kScan; ++i) {
        const double v = f(lo + step * i);
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    double a = lo + step * std::max(best - 1, 0);
    double b = lo + step * std::min(best + 1, kScan - 1);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c);
    double fd = f(d);
    while (b - a > 1e-9) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    const double lambda = 0.5 * (a + b);
    return lambda == 0.0 ? 1e-12 : lambda;
}

/// Precomputed constants; only the members relevant to the kind are set.
struct EstimatorCoefficients {
    double gm_log_denominator = 0.0;  ///< k log E|X|^(alpha/k)
    double hm_c1 = 0.0;               ///< E|X|^(-alpha)
    double hm_correction = 0.0;       ///< E|X|^(-2 alpha) / (E|X|^(-alpha))^2 - 1
    double lambda = 0.0;
    double fp_log_c = 0.0;            ///< log E|X|^(lambda alpha)
    double fp_correction = 1.0;       ///< 1 - (1/k)(1/(2 lambda))(1/lambda - 1)(C(2l)/C(l)^2 - 1)
    double q = 0.0;
    double W = 0.0;
    double bias = 1.0;                ///< B_{alpha,k}; 1 except for oqc
};

/// Whether the q-quantile estimate (quantile / W)^alpha on k samples has a
/// finite mean. It interpolates the order statistics at floor(h) and
/// floor(h) + 1 of |x|, h = q k + 1/2; for alpha < 2 the j-th of k raised to
/// the power alpha has finite mean exactly when j < k.
inline bool quantile_estimate_has_mean(double alpha, std::size_t k, double q) {
    if (alpha == 2.0) return true;
    const double kd = static_cast<double>(k);
    const double h = q * kd + 0.5;
    std::size_t top = 0;
    if (h <= 1.0) {
        top = 1;
    } else if (h >= kd) {
        top = k;
    } else {
        const auto r = static_cast<std::size_t>(h);
        top = h == static_cast<double>(r) ? r : r + 1;
    }
    return top < k;
}

namespace detail {

inline double gm_kernel(std::span<const double> x, double alpha, double log_denominator) {
    double s = 0.0;
    for (double v : x) s += std::log(std::fabs(v));
    return std::exp(alpha / static_cast<double>(x.size()) * s - log_denominator);
}

inline double hm_kernel(std::span<const double> x, double alpha, double c1, double correction) {
    double s = 0.0;
    for (double v : x) {
        if (v == 0.0) throw DomainError("harmonic mean estimator is undefined for a zero sample");
        s += std::pow(std::fabs(v), -alpha);
    }
    return c1 / s * (static_cast<double>(x.size()) - correction);
}

inline double fp_kernel(std::span<const double> x, double alpha, double lambda, double log_c,
                        double correction) {
    const double t = lambda * alpha;
    double s = 0.0;
    for (double v : x) s += std::pow(std::fabs(v), t);
    const double mean = s / static_cast<double>(x.size());
    if (mean == 0.0 || std::isinf(mean)) {
        // all-zero samples (t > 0) or some zero sample with t < 0
        return 0.0;
    }
    return std::exp((std::log(mean) - log_c) / lambda) * correction;
}

/// (quantile / W)^alpha, or quantile / W when `root` is set. Overwrites x
/// with |x| and permutes it.
inline double oq_kernel(std::span<double> x, double alpha, double q, double W, bool root) {
    for (double& v : x) v = std::fabs(v);
    const double ratio = interpolated_q_quantile(x, q) / W;
    return root ? ratio : std::pow(ratio, alpha);
}

inline double am_kernel(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s / (2.0 * static_cast<double>(x.size()));
}

inline void require_samples(std::size_t k, std::size_t min_k, const char* who) {
    if (k == 0) throw EmptyInputError(std::string(who) + ": no samples");
    if (k < min_k) {
        throw DomainError(std::string(who) + ": needs at least " + std::to_string(min_k) + " samples");
    }
}

}  // namespace detail

/// Immutable estimator configuration: kind, alpha, k and every constant the
/// estimate needs. Construction does all the special-function work.
class EstimatorSpec {
public:
    /// `bias` is B_{alpha,k} and is required for oqc. `quantile` overrides the
    /// q* search for oq and oqc (e.g. values read from a calibration file).
    static EstimatorSpec make(EstimatorKind kind, double alpha, std::size_t k,
                              std::optional<double> bias = std::nullopt,
                              std::optional<OptimalQuantile> quantile = std::nullopt) {
        detail::require_alpha(alpha);
        if (k == 0) throw DomainError("estimator spec: k must be >= 1");
        EstimatorSpec spec(kind, alpha, k);
        auto& c = spec.coeffs_;
        const auto kd = static_cast<double>(k);
        switch (kind) {
            case EstimatorKind::gm:
                if (k < 2) throw DomainError("geometric mean estimator needs k >= 2");
                c.gm_log_denominator = kd * log_abs_moment(alpha / kd, alpha);
                break;
            case EstimatorKind::hm: {
                if (!(alpha < 0.5)) {
                    throw DomainError("harmonic mean estimator is supported only for alpha < 0.5");
                }
                const double l1 = log_abs_moment(-alpha, alpha);
                const double l2 = log_abs_moment(-2.0 * alpha, alpha);
                c.hm_c1 = std::exp(l1);
                c.hm_correction = std::expm1(l2 - 2.0 * l1);
                break;
            }
            case EstimatorKind::fp: {
                if (k < 2) throw DomainError("fractional power estimator needs k >= 2");
                const double lambda = solve_lambda_star(alpha);
                c.lambda = lambda;
                c.fp_log_c = log_abs_moment(lambda * alpha, alpha);
                const double excess = std::expm1(log_abs_moment(2.0 * lambda * alpha, alpha) - 2.0 * c.fp_log_c);
                c.fp_correction = 1.0 - (1.0 / kd) * (1.0 / (2.0 * lambda)) * (1.0 / lambda - 1.0) * excess;
                break;
            }
            case EstimatorKind::oqc:
                if (!bias) throw ConfigurationError("oqc estimator needs a bias factor B_{alpha,k}");
                if (!(*bias > 0.0) || !std::isfinite(*bias)) {
                    throw ConfigurationError("bias factor must be finite and positive");
                }
                c.bias = *bias;
                [[fallthrough]];
            case EstimatorKind::oq: {
                const OptimalQuantile oq = quantile ? *quantile : optimal_quantile(alpha);
                if (oq.alpha != alpha) throw ConfigurationError("optimal quantile computed for a different alpha");
                c.q = oq.q_star;
                c.W = oq.W;
                break;
            }
            case EstimatorKind::median:
                c.q = 0.5;
                c.W = abs_quantile_W(0.5, alpha);
                break;
            case EstimatorKind::am:
                if (alpha != 2.0) throw DomainError("arithmetic mean estimator requires alpha = 2");
                break;
        }
        return spec;
    }

    EstimatorKind kind() const noexcept { return kind_; }
    double alpha() const noexcept { return alpha_; }
    std::size_t k() const noexcept { return k_; }
    const EstimatorCoefficients& coefficients() const noexcept { return coeffs_; }

    /// True when the fp correction factor is negative, so every fp estimate
    /// at this (alpha, k) is clamped to 0.
    bool fp_clamps() const noexcept { return kind_ == EstimatorKind::fp && coeffs_.fp_correction < 0.0; }

    /// Estimate d from raw samples x_j (signs are ignored). Quantile-based
    /// kinds overwrite the buffer with |x_j| and permute it.
    DistanceEstimate estimate(std::span<double> x) const {
        DistanceEstimate out{0.0, kind_, alpha_, false};
        out.d_hat = evaluate(x, false, out.clamped);
        return out;
    }

    /// Estimate d^(1/alpha). For the quantile kinds no fractional power of the
    /// sample quantile is taken.
    double estimate_root(std::span<double> x) const {
        bool clamped = false;
        return evaluate(x, true, clamped);
    }

private:
    EstimatorSpec(EstimatorKind kind, double alpha, std::size_t k) : kind_(kind), alpha_(alpha), k_(k) {}

    void require_k(std::size_t got) const {
        if (got != k_) {
            throw ConfigurationError("estimator spec built for k = " + std::to_string(k_) + " got " +
                                     std::to_string(got) + " samples");
        }
    }

    double evaluate(std::span<double> x, bool root, bool& clamped) const {
        if (x.empty()) throw EmptyInputError("estimate: no samples");
        const auto& c = coeffs_;
        double d = 0.0;
        switch (kind_) {
            case EstimatorKind::gm:
                require_k(x.size());
                d = detail::gm_kernel(x, alpha_, c.gm_log_denominator);
                break;
            case EstimatorKind::hm:
                d = detail::hm_kernel(x, alpha_, c.hm_c1, c.hm_correction);
                break;
            case EstimatorKind::fp:
                require_k(x.size());
                if (c.fp_correction < 0.0) {
                    clamped = true;
                    return 0.0;
                }
                d = detail::fp_kernel(x, alpha_, c.lambda, c.fp_log_c, c.fp_correction);
                break;
            case EstimatorKind::oq:
            case EstimatorKind::median:
                return detail::oq_kernel(x, alpha_, c.q, c.W, root);
            case EstimatorKind::oqc: {
                const double v = detail::oq_kernel(x, alpha_, c.q, c.W, root);
                return root ? v / std::pow(c.bias, 1.0 / alpha_) : v / c.bias;
            }
            case EstimatorKind::am:
                d = detail::am_kernel(x);
                break;
        }
        return root ? std::pow(d, 1.0 / alpha_) : d;
    }

    EstimatorKind kind_;
    double alpha_;
    std::size_t k_;
    EstimatorCoefficients coeffs_{};
};

/// Geometric mean estimator, computed in the log domain.
inline DistanceEstimate estimate_gm(std::span<const double> x, double alpha) {
    detail::require_alpha(alpha);
    detail::require_samples(x.size(), 2, "estimate_gm");
    const double log_den = static_cast<double>(x.size()) * log_abs_moment(alpha / static_cast<double>(x.size()), alpha);
    return {detail::gm_kernel(x, alpha, log_den), EstimatorKind::gm, alpha, false};
}

/// Harmonic mean estimator with its O(1/k) bias correction; alpha < 0.5.
inline DistanceEstimate estimate_hm(std::span<const double> x, double alpha) {
    detail::require_alpha(alpha);
    detail::require_samples(x.size(), 1, "estimate_hm");
    const auto spec = EstimatorSpec::make(EstimatorKind::hm, alpha, x.size());
    const auto& c = spec.coefficients();
    return {detail::hm_kernel(x, alpha, c.hm_c1, c.hm_correction), EstimatorKind::hm, alpha, false};
}

/// Fractional power estimator at a given lambda (normally solve_lambda_star).
inline DistanceEstimate estimate_fp(std::span<const double> x, double alpha, double lambda) {
    detail::require_alpha(alpha);
    detail::require_samples(x.size(), 2, "estimate_fp");
    if (!(lambda > -1.0 / (2.0 * alpha) && lambda < 0.5) || lambda == 0.0) {
        throw DomainError("estimate_fp: lambda must lie in (-1/(2 alpha), 1/2) and be nonzero");
    }
    const auto kd = static_cast<double>(x.size());
    const double log_c = log_abs_moment(lambda * alpha, alpha);
    const double excess = std::expm1(log_abs_moment(2.0 * lambda * alpha, alpha) - 2.0 * log_c);
    const double correction = 1.0 - (1.0 / kd) * (1.0 / (2.0 * lambda)) * (1.0 / lambda - 1.0) * excess;
    if (correction < 0.0) return {0.0, EstimatorKind::fp, alpha, true};
    return {detail::fp_kernel(x, alpha, lambda, log_c, correction), EstimatorKind::fp, alpha, false};
}

/// (sample q-quantile of |x| / W)^alpha. Permutes the buffer.
inline DistanceEstimate estimate_oq(std::span<double> x, double alpha, double q, double W) {
    detail::require_alpha(alpha);
    detail::require_open_unit(q, "q");
    if (!(W > 0.0) || !std::isfinite(W)) throw DomainError("estimate_oq: W must be finite and positive");
    detail::require_samples(x.size(), 1, "estimate_oq");
    return {detail::oq_kernel(x, alpha, q, W, false), EstimatorKind::oq, alpha, false};
}

/// estimate_oq / B_{alpha,k} with the constants carried by an oqc spec.
inline DistanceEstimate estimate_oq_corrected(std::span<double> x, const EstimatorSpec& spec) {
    if (spec.kind() != EstimatorKind::oqc) throw ConfigurationError("estimate_oq_corrected needs an oqc spec");
    return spec.estimate(x);
}

/// estimate_oq at q = 0.5.
inline DistanceEstimate estimate_median(std::span<double> x, double alpha) {
    detail::require_alpha(alpha);
    detail::require_samples(x.size(), 1, "estimate_median");
    return {detail::oq_kernel(x, alpha, 0.5, abs_quantile_W(0.5, alpha), false), EstimatorKind::median, alpha,
            false};
}

/// (1 / (2k)) sum x_j^2: S(2, d) has variance 2d.
inline DistanceEstimate estimate_am(std::span<const double> x) {
    detail::require_samples(x.size(), 1, "estimate_am");
    return {detail::am_kernel(x), EstimatorKind::am, 2.0, false};
}

}  // namespace stablesketch
