#pragma once

// Desk-scale simulation studies: mean square error, right-tail frequency and
// per-estimate timing of the estimators on S(alpha, 1) samples (d = 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "stablesketch/bounds.hpp"
#include "stablesketch/calibration.hpp"
#include "stablesketch/errors.hpp"
#include "stablesketch/estimators.hpp"
#include "stablesketch/rng.hpp"
#include "stablesketch/stable.hpp"

namespace stablesketch {

struct ExperimentPlan {
    std::vector<double> alphas;
    std::vector<std::size_t> ks;
    std::vector<double> epsilons;
    std::uint64_t replicates = 1000000;
    std::uint64_t seed = 1;
    std::vector<EstimatorKind> estimators{EstimatorKind::gm, EstimatorKind::fp, EstimatorKind::oq, EstimatorKind::oqc};
    unsigned threads = 1;
    std::uint64_t block_size = 10000;
};

/// One output row: `alpha,k,estimator,metric,value,stderr`.
struct MetricRecord {
    double alpha = 0.0;
    std::size_t k = 0;
    std::string estimator;
    std::string metric;
    double value = 0.0;
    double std_error = 0.0;
    /// Fewer than two replicates: the standard error is undefined.
    bool unreliable = false;
};

inline constexpr const char* kMetricCsvHeader = "alpha,k,estimator,metric,value,stderr";

inline void write_metric_csv(std::ostream& out, const std::vector<MetricRecord>& records) {
    out << kMetricCsvHeader << '\n';
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%.17g,%zu,%s,%s,%.17g,%.17g\n", r.alpha, r.k, r.estimator.c_str(),
                      r.metric.c_str(), r.value, r.std_error);
        out << buf;
    }
}

/// Metric name of the tail frequency / bound at a given eps, e.g. "right_tail_eps=1.5".
inline std::string tail_metric_name(const char* base, double eps) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_eps=%g", base, eps);
    return buf;
}

namespace detail {

struct EstimatorAccumulator {
    double sum_err = 0.0;   ///< sum (d_hat - 1)
    double sum_err2 = 0.0;  ///< sum (d_hat - 1)^2
    double sum_err4 = 0.0;  ///< sum (d_hat - 1)^4
    std::vector<std::uint64_t> exceed;  ///< per eps: #{d_hat >= 1 + eps}
    std::uint64_t clamped = 0;

    void merge(const EstimatorAccumulator& o) {
        sum_err += o.sum_err;
        sum_err2 += o.sum_err2;
        sum_err4 += o.sum_err4;
        clamped += o.clamped;
        if (exceed.size() < o.exceed.size()) exceed.resize(o.exceed.size(), 0);
        for (std::size_t e = 0; e < o.exceed.size(); ++e) exceed[e] += o.exceed[e];
    }
};

inline RngStream cell_block_stream(std::uint64_t seed, std::uint64_t cell, std::uint64_t block) {
    return RngStream(seed, mix64(mix64(cell + 0x9e3779b97f4a7c15ull) ^ (block + 1)));
}

/// Runs `count` replicates; all estimators see the same samples.
inline std::vector<EstimatorAccumulator> simulate_block(double alpha, std::size_t k,
                                                        const std::vector<EstimatorSpec>& specs,
                                                        const std::vector<double>& epsilons, RngStream stream,
                                                        std::uint64_t count) {
    std::vector<EstimatorAccumulator> acc(specs.size());
    for (auto& a : acc) a.exceed.assign(epsilons.size(), 0);
    std::vector<double> x(k);
    std::vector<double> work(k);
    for (std::uint64_t r = 0; r < count; ++r) {
        for (double& v : x) v = sample_standard_stable(alpha, stream);
        for (std::size_t s = 0; s < specs.size(); ++s) {
            std::copy(x.begin(), x.end(), work.begin());
            const auto est = specs[s].estimate(work);
            const double e = est.d_hat - 1.0;
            const double e2 = e * e;
            acc[s].sum_err += e;
            acc[s].sum_err2 += e2;
            acc[s].sum_err4 += e2 * e2;
            acc[s].clamped += est.clamped ? 1 : 0;
            for (std::size_t t = 0; t < epsilons.size(); ++t) {
                if (est.d_hat >= 1.0 + epsilons[t]) ++acc[s].exceed[t];
            }
        }
    }
    return acc;
}

inline std::vector<EstimatorAccumulator> simulate_cell(double alpha, std::size_t k,
                                                       const std::vector<EstimatorSpec>& specs,
                                                       const std::vector<double>& epsilons, std::uint64_t replicates,
                                                       std::uint64_t seed, std::uint64_t cell, unsigned threads,
                                                       std::uint64_t block_size) {
    const std::uint64_t blocks = (replicates + block_size - 1) / block_size;
    std::vector<std::vector<EstimatorAccumulator>> partial(blocks);
    auto work = [&](unsigned worker, unsigned nworkers) {
        for (std::uint64_t b = worker; b < blocks; b += nworkers) {
            const std::uint64_t count = std::min(block_size, replicates - b * block_size);
            partial[b] = simulate_block(alpha, k, specs, epsilons, cell_block_stream(seed, cell, b), count);
        }
    };
    const unsigned nthreads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::uint64_t>(blocks, 1))));
    if (nthreads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(work, t, nthreads);
        for (auto& th : pool) th.join();
    }
    std::vector<EstimatorAccumulator> total(specs.size());
    for (auto& a : total) a.exceed.assign(epsilons.size(), 0);
    for (const auto& p : partial) {
        for (std::size_t s = 0; s < specs.size(); ++s) total[s].merge(p[s]);
    }
    return total;
}

inline bool estimator_applies(EstimatorKind kind, double alpha, std::size_t k) {
    switch (kind) {
        case EstimatorKind::hm: return alpha < 0.5;
        case EstimatorKind::am: return alpha == 2.0;
        case EstimatorKind::gm:
        case EstimatorKind::fp: return k >= 2;
        default: return true;
    }
}

inline std::vector<EstimatorSpec> plan_specs(const ExperimentPlan& plan, double alpha, std::size_t k,
                                             const CalibrationTable* table, std::vector<EstimatorKind>& kinds) {
    std::vector<EstimatorSpec> specs;
    kinds.clear();
    std::optional<OptimalQuantile> oq;
    for (auto kind : plan.estimators) {
        if (!estimator_applies(kind, alpha, k)) continue;
        if (kind == EstimatorKind::oq || kind == EstimatorKind::oqc) {
            if (kind == EstimatorKind::oqc && !table) {
                throw ConfigurationError("oqc needs a calibration table");
            }
            if (table) {
                specs.push_back(make_estimator_spec(kind, alpha, k, *table, true));
            } else {
                if (!oq) oq = optimal_quantile(alpha);
                specs.push_back(EstimatorSpec::make(kind, alpha, k, std::nullopt, oq));
            }
        } else {
            specs.push_back(EstimatorSpec::make(kind, alpha, k));
        }
        kinds.push_back(kind);
    }
    return specs;
}

inline void validate_plan(const ExperimentPlan& plan) {
    if (plan.replicates < 1) throw ConfigurationError("experiment needs at least one replicate");
    if (plan.alphas.empty() || plan.ks.empty()) throw ConfigurationError("experiment needs alphas and ks");
    if (plan.block_size == 0) throw ConfigurationError("block_size must be positive");
    for (double a : plan.alphas) require_alpha(a);
    for (auto k : plan.ks) {
        if (k == 0) throw DomainError("k must be >= 1");
    }
    for (double e : plan.epsilons) {
        if (!(e >= 0.0) || !std::isfinite(e)) throw DomainError("epsilons must be finite and >= 0");
    }
}

}  // namespace detail

/// Per (alpha, k, estimator): k MSE, k bias^2 and the mean estimate, each
/// with a standard error.
inline std::vector<MetricRecord> run_mse_experiment(const ExperimentPlan& plan, const CalibrationTable* table = nullptr) {
    detail::validate_plan(plan);
    std::vector<MetricRecord> out;
    std::uint64_t cell = 0;
    for (double alpha : plan.alphas) {
        for (std::size_t k : plan.ks) {
            std::vector<EstimatorKind> kinds;
            const auto specs = detail::plan_specs(plan, alpha, k, table, kinds);
            const auto acc = detail::simulate_cell(alpha, k, specs, {}, plan.replicates, plan.seed, cell++,
                                                   plan.threads, plan.block_size);
            const auto R = static_cast<double>(plan.replicates);
            const auto kd = static_cast<double>(k);
            const bool unreliable = plan.replicates < 2;
            const double nan = std::numeric_limits<double>::quiet_NaN();
            for (std::size_t s = 0; s < specs.size(); ++s) {
                const auto& a = acc[s];
                const double mean_err = a.sum_err / R;
                const double mse = a.sum_err2 / R;
                const double var_err = unreliable ? nan : std::max(0.0, (a.sum_err2 - R * mean_err * mean_err) / (R - 1));
                const double var_sq = unreliable ? nan : std::max(0.0, (a.sum_err4 - R * mse * mse) / (R - 1));
                const double se_mean = std::sqrt(var_err / R);
                const std::string name(to_string(kinds[s]));
                out.push_back({alpha, k, name, "k_mse", kd * mse, kd * std::sqrt(var_sq / R), unreliable});
                out.push_back({alpha, k, name, "k_bias2", kd * mean_err * mean_err,
                               2.0 * kd * std::fabs(mean_err) * se_mean, unreliable});
                out.push_back({alpha, k, name, "mean", 1.0 + mean_err, se_mean, unreliable});
            }
        }
    }
    return out;
}

/// Per (alpha, k, estimator, eps): empirical Pr(d_hat >= 1 + eps), plus the
/// exponential bound exp(-k eps^2 / G_R) for oq (q = q*) and median (q = 1/2).
inline std::vector<MetricRecord> run_tail_experiment(const ExperimentPlan& plan, const CalibrationTable* table = nullptr) {
    detail::validate_plan(plan);
    if (plan.epsilons.empty()) throw ConfigurationError("tail experiment needs at least one eps");
    std::vector<MetricRecord> out;
    std::uint64_t cell = 0;
    for (double alpha : plan.alphas) {
        for (std::size_t k : plan.ks) {
            std::vector<EstimatorKind> kinds;
            const auto specs = detail::plan_specs(plan, alpha, k, table, kinds);
            const auto acc = detail::simulate_cell(alpha, k, specs, plan.epsilons, plan.replicates, plan.seed,
                                                   cell++, plan.threads, plan.block_size);
            const auto R = static_cast<double>(plan.replicates);
            const bool unreliable = plan.replicates < 2;
            for (std::size_t s = 0; s < specs.size(); ++s) {
                const std::string name(to_string(kinds[s]));
                for (std::size_t t = 0; t < plan.epsilons.size(); ++t) {
                    const double eps = plan.epsilons[t];
                    const double p = static_cast<double>(acc[s].exceed[t]) / R;
                    const double se = unreliable ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(p * (1 - p) / R);
                    out.push_back({alpha, k, name, tail_metric_name("right_tail", eps), p, se, unreliable});
                    if ((kinds[s] == EstimatorKind::oq || kinds[s] == EstimatorKind::median)) {
                        const double q = specs[s].coefficients().q;
                        const double bound =
                            eps > 0.0 ? std::exp(-static_cast<double>(k) * eps * eps / tail_constant_right(q, alpha, eps))
                                      : 1.0;
                        out.push_back({alpha, k, name, tail_metric_name("bound", eps), bound, 0.0, false});
                    }
                }
            }
        }
    }
    return out;
}

struct TimingOptions {
    /// Estimates per timed run; at least 10^5.
    std::uint64_t batch = 200000;
    int runs = 5;
    std::uint64_t seed = 1;
    /// Distinct sample vectors cycled through during a run.
    std::size_t pool = 256;
    std::vector<EstimatorKind> estimators{EstimatorKind::gm, EstimatorKind::fp, EstimatorKind::oqc};
};

/// Per (alpha, k, estimator): median-of-runs wall time per estimate
/// ("ns_per_estimate") and gm time over this estimator's time
/// ("ratio_gm_over"). Every timed estimate copies one pooled sample vector
/// into a work buffer first, as estimate_distance does when it forms the
/// row difference; that copy is the same for all estimators. Runs on the
/// calling thread.
inline std::vector<MetricRecord> run_timing_benchmark(const std::vector<double>& alphas, const std::vector<std::size_t>& ks,
                                                      const TimingOptions& opts = {},
                                                      const CalibrationTable* table = nullptr) {
    if (opts.batch < 100000) throw ConfigurationError("timing batch must be at least 10^5 estimates");
    if (opts.runs < 1 || opts.pool == 0) throw ConfigurationError("timing needs runs >= 1 and a non-empty pool");
    std::vector<MetricRecord> out;
    std::uint64_t cell = 0;
    volatile double sink = 0.0;
    for (double alpha : alphas) {
        for (std::size_t k : ks) {
            std::vector<double> pool(opts.pool * k);
            RngStream stream = detail::cell_block_stream(opts.seed, cell++, 0);
            for (double& v : pool) v = sample_standard_stable(alpha, stream);

            std::vector<EstimatorKind> kinds = opts.estimators;
            if (std::find(kinds.begin(), kinds.end(), EstimatorKind::gm) == kinds.end()) {
                kinds.insert(kinds.begin(), EstimatorKind::gm);
            }
            std::map<EstimatorKind, double> ns;
            std::vector<double> work(k);
            for (auto kind : kinds) {
                if (!detail::estimator_applies(kind, alpha, k)) continue;
                EstimatorSpec spec = (kind == EstimatorKind::oqc || kind == EstimatorKind::oq)
                                         ? (table ? make_estimator_spec(kind, alpha, k, *table, true)
                                                  : EstimatorSpec::make(kind, alpha, k, 1.0))
                                         : EstimatorSpec::make(kind, alpha, k);
                auto run_once = [&](std::uint64_t n) {
                    double acc = 0.0;
                    for (std::uint64_t r = 0; r < n; ++r) {
                        const double* src = pool.data() + (r % opts.pool) * k;
                        std::copy(src, src + k, work.begin());
                        acc += spec.estimate(work).d_hat;
                    }
                    return acc;
                };
                sink = sink + run_once(std::max<std::uint64_t>(opts.batch / 10, 1));  // warm-up
                std::vector<double> times;
                for (int run = 0; run < opts.runs; ++run) {
                    const auto t0 = std::chrono::steady_clock::now();
                    sink = sink + run_once(opts.batch);
                    const auto t1 = std::chrono::steady_clock::now();
                    times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count() /
                                    static_cast<double>(opts.batch));
                }
                std::sort(times.begin(), times.end());
                const double median = times[times.size() / 2];
                const double spread = times.back() - times.front();
                ns[kind] = median;
                out.push_back({alpha, k, std::string(to_string(kind)), "ns_per_estimate", median, spread, false});
            }
            for (const auto& [kind, t] : ns) {
                out.push_back({alpha, k, std::string(to_string(kind)), "ratio_gm_over", ns[EstimatorKind::gm] / t, 0.0, false});
            }
        }
    }
    return out;
}

}  // namespace stablesketch
