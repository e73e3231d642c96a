#pragma once

// Symmetric alpha-stable laws under the convention
//     E exp(i t X) = exp(-d |t|^alpha),   0 < alpha <= 2.
// S(2, d) is therefore normal with variance 2d and S(1, 1) is standard Cauchy.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "stablesketch/errors.hpp"
#include "stablesketch/rng.hpp"

namespace stablesketch {

/// Parameter pair (alpha, d) naming the law S(alpha, d).
class StableLaw {
public:
    StableLaw(double alpha, double d) : alpha_(alpha), d_(d) {
        detail::require_alpha(alpha);
        if (!(d >= 0.0) || !std::isfinite(d)) {
            throw DomainError("scale parameter d must be finite and >= 0");
        }
    }

    double alpha() const noexcept { return alpha_; }
    double d() const noexcept { return d_; }

    /// Multiplier mapping a S(alpha, 1) draw to a S(alpha, d) draw.
    double scale_multiplier() const noexcept { return std::pow(d_, 1.0 / alpha_); }

private:
    double alpha_;
    double d_;
};

/// Chambers-Mallows-Stuck transform of two (0,1) uniforms into one S(alpha, 1)
/// draw. No validation; callers check alpha.
inline double stable_from_uniforms(double alpha, double u1, double u2) noexcept {
    constexpr double pi = std::numbers::pi;
    const double v = pi * (u1 - 0.5);
    const double e = -std::log(u2);
    if (alpha == 1.0) {
        return std::tan(v);
    }
    if (alpha == 2.0) {
        return 2.0 * std::sin(v) * std::sqrt(e);
    }
    const double s = std::sin(alpha * v);
    if (s == 0.0) {
        return 0.0;
    }
    const double log_mag = std::log(std::fabs(s)) - std::log(std::cos(v)) / alpha +
                           (1.0 - alpha) / alpha * (std::log(std::cos((1.0 - alpha) * v)) - std::log(e));
    const double mag = std::min(std::exp(log_mag), std::numeric_limits<double>::max());
    return std::copysign(mag, s);
}

/// One draw from S(alpha, 1); advances the stream by one block.
inline double sample_standard_stable(double alpha, RngStream& rng) {
    detail::require_alpha(alpha);
    const auto u = rng.next_pair();
    return stable_from_uniforms(alpha, u.first, u.second);
}

namespace detail {

/// Probabilities and density of S(alpha, 1) at x > 0.
struct StablePoint {
    double central;  ///< P(0 < X < x)
    double tail;     ///< P(X > x)
    double pdf;
};

inline constexpr double kCauchyAlphaBand = 1e-10;
/// Within this distance of alpha = 1 the density integral loses accuracy
/// (its 1/|alpha - 1| prefactor meets a vanishing integral); the density is
/// interpolated linearly in alpha from alpha = 1 instead.
inline constexpr double kNearCauchyPdfBand = 1e-6;

inline bool is_cauchy(double alpha) noexcept { return std::fabs(alpha - 1.0) < kCauchyAlphaBand; }

inline StablePoint closed_form_point(double x, double alpha) {
    constexpr double pi = std::numbers::pi;
    if (alpha == 2.0) {
        return {0.5 * std::erf(0.5 * x), 0.5 * std::erfc(0.5 * x),
                std::exp(-0.25 * x * x) / (2.0 * std::sqrt(pi))};
    }
    return {std::atan(x) / pi, std::atan2(1.0, x) / pi, 1.0 / (pi * (1.0 + x * x))};
}

/// Zolotarev's integral representation (in Nolan's form) for the symmetric
/// case. With zeta = alpha / (alpha - 1) and
///     h(theta) = x^zeta (cos t / sin(alpha t))^zeta cos((alpha - 1) t) / cos t,
/// h is monotone on (0, pi/2) and
///     alpha < 1:  P(0<X<x) = 1/pi int e^-h,      P(X>x) = 1/pi int (1 - e^-h)
///     alpha > 1:  P(0<X<x) = 1/pi int (1 - e^-h), P(X>x) = 1/pi int e^-h
///     f(x) = alpha / (pi |alpha - 1| x) int h e^-h.
class ZolotarevKernel {
public:
    ZolotarevKernel(double x, double alpha)
        : alpha_(alpha), zeta_(alpha / (alpha - 1.0)), log_x_(std::log(x)) {}

    double log_h(double theta) const noexcept {
        constexpr double half_pi = std::numbers::pi / 2.0;
        const double log_cos = std::log(std::sin(half_pi - theta));
        return (zeta_ - 1.0) * log_cos + zeta_ * (log_x_ - std::log(std::sin(alpha_ * theta))) +
               std::log(std::cos((alpha_ - 1.0) * theta));
    }

    /// Location of the peak of h e^-h, i.e. log h = 0.
    double peak() const noexcept {
        constexpr double half_pi = std::numbers::pi / 2.0;
        const bool increasing = alpha_ < 1.0;
        double lo = 0.0;
        double hi = half_pi;
        for (int it = 0; it < 80 && hi - lo > 1e-15; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double v = log_h(mid);
            if ((v < 0.0) == increasing) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    }

private:
    double alpha_;
    double zeta_;
    double log_x_;
};

/// Tanh-sinh on [a, b]; panels too narrow for its abscissae get a fixed
/// 20-point Gauss rule.
template <class F>
double integrate_panel(F f, double a, double b) {
    constexpr double tol = 1e-13;
    if (!(b > a)) return 0.0;
    if (b - a < 1e-9 * std::max(1.0, std::fabs(a))) {
        return boost::math::quadrature::gauss<double, 20>::integrate(f, a, b);
    }
    thread_local boost::math::quadrature::tanh_sinh<double> quad(15);
    return quad.integrate([&](double t, double) { return f(t); }, a, b, tol);
}

/// Integrates over (0, split) and (split, pi/2). The integrands vary on a
/// scale that can be tiny next to `split`; tanh-sinh clusters its nodes at
/// the panel ends, which is where that variation lives.
template <class F>
double integrate_split(F f, double split) {
    return integrate_panel(f, 0.0, split) + integrate_panel(f, split, std::numbers::pi / 2.0);
}

inline StablePoint zolotarev_point(double x, double alpha, bool want_pdf = true) {
    constexpr double pi = std::numbers::pi;
    const ZolotarevKernel kernel(x, alpha);
    const double split = kernel.peak();

    auto exp_neg_h = [&](double t) {
        const double lh = kernel.log_h(t);
        if (lh > 700.0) return 0.0;
        return std::exp(-std::exp(lh));
    };
    auto one_minus_exp_neg_h = [&](double t) {
        const double lh = kernel.log_h(t);
        if (lh > 700.0) return 1.0;
        return -std::expm1(-std::exp(lh));
    };

    // Integrate directly whichever of the two complementary pieces is small;
    // the other follows from their sum pi/2 without cancellation.
    double int_e = integrate_split(exp_neg_h, split);
    double int_m = 0.0;
    if (int_e < pi / 4.0) {
        int_m = pi / 2.0 - int_e;
    } else {
        int_m = integrate_split(one_minus_exp_neg_h, split);
        int_e = pi / 2.0 - int_m;
    }

    StablePoint out{};
    if (alpha < 1.0) {
        out.central = int_e / pi;
        out.tail = int_m / pi;
    } else {
        out.central = int_m / pi;
        out.tail = int_e / pi;
    }
    if (want_pdf) {
        auto peak_integrand = [&](double t) {
            const double lh = kernel.log_h(t);
            if (lh > 700.0 || lh < -745.0) return 0.0;
            const double h = std::exp(lh);
            return h * std::exp(-h);
        };
        const double mass = integrate_split(peak_integrand, split);
        out.pdf = alpha / (pi * std::fabs(alpha - 1.0) * x) * mass;
    }
    return out;
}

/// Probabilities and density of S(alpha, 1) at x > 0.
inline StablePoint stable_point(double x, double alpha, bool want_pdf = true) {
    if (alpha == 2.0 || is_cauchy(alpha)) {
        return closed_form_point(x, alpha == 2.0 ? 2.0 : 1.0);
    }
    if (std::isinf(x)) {
        return {0.5, 0.0, 0.0};
    }
    if (want_pdf && std::fabs(alpha - 1.0) < kNearCauchyPdfBand) {
        StablePoint out = zolotarev_point(x, alpha, false);
        const double edge = alpha < 1.0 ? 1.0 - kNearCauchyPdfBand : 1.0 + kNearCauchyPdfBand;
        const double at_one = closed_form_point(x, 1.0).pdf;
        const double at_edge = zolotarev_point(x, edge, true).pdf;
        out.pdf = at_one + (at_edge - at_one) * (std::fabs(alpha - 1.0) / kNearCauchyPdfBand);
        return out;
    }
    return zolotarev_point(x, alpha, want_pdf);
}

inline double density_at_zero(double alpha) {
    return std::tgamma(1.0 + 1.0 / alpha) / std::numbers::pi;
}

}  // namespace detail

/// Density of S(alpha, 1).
inline double stable_pdf(double x, double alpha) {
    detail::require_alpha(alpha);
    if (std::isnan(x)) throw DomainError("stable_pdf: x is NaN");
    const double ax = std::fabs(x);
    if (ax == 0.0) return detail::density_at_zero(alpha);
    return detail::stable_point(ax, alpha).pdf;
}

/// Cumulative distribution function of S(alpha, 1).
inline double stable_cdf(double x, double alpha) {
    detail::require_alpha(alpha);
    if (std::isnan(x)) throw DomainError("stable_cdf: x is NaN");
    if (x == 0.0) return 0.5;
    const auto pt = detail::stable_point(std::fabs(x), alpha, false);
    if (x > 0.0) {
        return pt.central < 0.25 ? 0.5 + pt.central : 1.0 - pt.tail;
    }
    return pt.central < 0.25 ? 0.5 - pt.central : pt.tail;
}

/// Survival function P(X > x); keeps relative precision deep in the tail.
inline double stable_sf(double x, double alpha) {
    detail::require_alpha(alpha);
    return stable_cdf(-x, alpha);
}

/// P(|X| <= z) for z >= 0, accurate for small z.
inline double stable_abs_cdf(double z, double alpha) {
    detail::require_alpha(alpha);
    if (!(z >= 0.0)) throw DomainError("stable_abs_cdf: z must be >= 0");
    if (z == 0.0) return 0.0;
    return 2.0 * detail::stable_point(z, alpha, false).central;
}

/// P(|X| > z) for z >= 0, accurate for large z.
inline double stable_abs_sf(double z, double alpha) {
    detail::require_alpha(alpha);
    if (!(z >= 0.0)) throw DomainError("stable_abs_sf: z must be >= 0");
    if (z == 0.0) return 1.0;
    return 2.0 * detail::stable_point(z, alpha, false).tail;
}

namespace detail {

/// Solve P(0 < X < z) = target (use_tail = false) or P(X > z) = target
/// (use_tail = true) for z > 0 with a bracketed Newton iteration in log z.
inline double solve_positive_quantile(double alpha, bool use_tail, double target) {
    auto residual = [&](double z, bool with_pdf, double* pdf) {
        const auto pt = stable_point(z, alpha, with_pdf);
        if (pdf) *pdf = pt.pdf;
        return use_tail ? pt.tail - target : pt.central - target;
    };
    // residual is increasing in z for the central mass, decreasing for the tail.
    const double sign = use_tail ? -1.0 : 1.0;

    double lo = 1.0;
    double hi = 1.0;
    double r = sign * residual(1.0, false, nullptr);
    while (r < 0.0) {
        lo = hi;
        hi *= 4.0;
        if (hi > 1e300) throw NumericalError("stable quantile: bracket search overflowed");
        r = sign * residual(hi, false, nullptr);
    }
    if (r == 0.0) return hi;
    if (lo == hi) {
        while (r > 0.0) {
            hi = lo;
            lo *= 0.25;
            if (lo < 1e-300) throw NumericalError("stable quantile: bracket search underflowed");
            r = sign * residual(lo, false, nullptr);
        }
        if (r == 0.0) return lo;
    }

    double z = std::sqrt(lo * hi);
    for (int it = 0; it < 200; ++it) {
        double pdf = 0.0;
        const double res = sign * residual(z, true, &pdf);
        if (res == 0.0) return z;
        if (res < 0.0) {
            lo = z;
        } else {
            hi = z;
        }
        double next = (pdf > 0.0) ? z - res / pdf : std::numeric_limits<double>::quiet_NaN();
        if (!(next > lo && next < hi)) {
            next = std::sqrt(lo * hi);
        }
        if (std::fabs(next - z) <= 4.0 * std::numeric_limits<double>::epsilon() * z ||
            hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * lo) {
            return next;
        }
        z = next;
    }
    return z;
}

}  // namespace detail

/// Inverse CDF of S(alpha, 1).
inline double stable_quantile(double p, double alpha) {
    detail::require_alpha(alpha);
    detail::require_open_unit(p, "p");
    if (p == 0.5) return 0.0;
    constexpr double pi = std::numbers::pi;
    if (detail::is_cauchy(alpha) && alpha != 1.0) alpha = 1.0;
    if (alpha == 1.0) {
        return p > 0.5 ? 1.0 / std::tan(pi * (1.0 - p)) : -1.0 / std::tan(pi * p);
    }
    if (alpha == 2.0) {
        return p > 0.5 ? 2.0 * boost::math::erfc_inv(2.0 * (1.0 - p)) : -2.0 * boost::math::erfc_inv(2.0 * p);
    }
    const bool upper = p > 0.5;
    const double tail = upper ? 1.0 - p : p;
    const double z = tail < 0.25 ? detail::solve_positive_quantile(alpha, true, tail)
                                 : detail::solve_positive_quantile(alpha, false, 0.5 - tail);
    return upper ? z : -z;
}

/// Population q-quantile of |X|, X ~ S(alpha, 1):  F_X^{-1}((q + 1) / 2).
inline double abs_quantile_W(double q, double alpha) {
    detail::require_alpha(alpha);
    detail::require_open_unit(q, "q");
    constexpr double pi = std::numbers::pi;
    if (detail::is_cauchy(alpha)) {
        return std::tan(0.5 * pi * q);
    }
    if (alpha == 2.0) {
        return 2.0 * boost::math::erf_inv(q);
    }
    return q < 0.5 ? detail::solve_positive_quantile(alpha, false, 0.5 * q)
                   : detail::solve_positive_quantile(alpha, true, 0.5 * (1.0 - q));
}

}  // namespace stablesketch
