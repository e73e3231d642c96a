#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "stablesketch/stablesketch.hpp"

namespace ss = stablesketch;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kIo = 2, kDomain = 3, kCalibrationMiss = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    std::string s = buf;
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::vector<std::pair<std::size_t, std::size_t>> parse_pairs(const std::string& text) {
    // "i,j;i,j;..."
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::stringstream ss_in(text);
    std::string item;
    while (std::getline(ss_in, item, ';')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        std::size_t i = 0, j = 0;
        char comma = 0;
        std::string rest;
        std::istringstream is(item);
        if (!(is >> i >> comma >> j) || comma != ',' || (is >> rest)) {
            throw UsageError("malformed pair '" + item + "', expected i,j");
        }
        out.emplace_back(i, j);
    }
    if (out.empty()) throw UsageError("--pairs is empty");
    return out;
}

std::vector<ss::EstimatorKind> parse_kinds(const std::vector<std::string>& names) {
    std::vector<ss::EstimatorKind> out;
    for (const auto& n : names) {
        try {
            out.push_back(ss::parse_estimator_kind(n));
        } catch (const ss::Error& e) {
            throw UsageError(e.what());
        }
    }
    return out;
}

std::string build_info() {
    std::string s = "stablesketch ";
#ifdef __VERSION__
    s += "compiler " __VERSION__;
#endif
#ifdef NDEBUG
    s += " release";
#else
    s += " debug";
#endif
    return s;
}

// ---- sketch ---------------------------------------------------------------

struct SketchArgs {
    std::string input, output;
    double alpha = 1.0;
    std::size_t k = 0;
    std::uint64_t seed = 1;
    std::size_t dim = 0;
    unsigned threads = 1;
};

int cmd_sketch(const SketchArgs& a) {
    const auto data = ss::read_matrix_file(a.input, a.dim);
    const auto sketch = ss::build_sketch(data, a.alpha, a.k, a.seed, a.threads);
    ss::save_sketch(sketch, a.output);
    std::cout << "n=" << sketch.n() << " k=" << sketch.k() << " alpha=" << fmt_short(sketch.alpha())
              << " seed=" << sketch.seed() << '\n';
    return kOk;
}

// ---- estimate -------------------------------------------------------------

struct EstimateArgs {
    std::string sketch;
    std::string pairs;
    bool all = false;
    std::string estimator;
    bool root = false;
    std::optional<double> kernel_gamma;
    std::string calibration;
    std::string qstar;
    bool no_interpolate = false;
};

int cmd_estimate(const EstimateArgs& a) {
    const auto sketch = ss::load_sketch(a.sketch);
    const std::string name = a.estimator.empty() ? (a.calibration.empty() ? "oq" : "oqc") : a.estimator;
    const auto kind = parse_kinds({name}).front();
    ss::EstimatorSpec spec = [&] {
        if (a.calibration.empty()) {
            if (kind == ss::EstimatorKind::oqc) {
                throw ss::ConfigurationError("estimator oqc needs --calibration <bias table CSV>");
            }
            return ss::EstimatorSpec::make(kind, sketch.alpha(), sketch.k());
        }
        const auto table = ss::load_calibration(a.calibration, a.qstar);
        return ss::make_estimator_spec(kind, sketch.alpha(), sketch.k(), table, !a.no_interpolate);
    }();

    const char* column = a.kernel_gamma ? "kernel" : (a.root ? "distance" : "d_hat");
    std::cout << "i,j," << column << '\n';
    auto emit = [&](std::size_t i, std::size_t j) {
        double v = 0.0;
        if (i != j) {
            v = a.root ? ss::estimate_distance_root(sketch, i, j, spec) : ss::estimate_distance(sketch, i, j, spec).d_hat;
        } else if (i >= sketch.n()) {
            throw ss::IndexError("row " + std::to_string(i) + " outside sketch with n = " + std::to_string(sketch.n()));
        }
        if (a.kernel_gamma) v = std::exp(-*a.kernel_gamma * v);
        std::cout << i << ',' << j << ',' << fmt_g17(v) << '\n';
    };
    if (a.all) {
        for (std::size_t i = 0; i < sketch.n(); ++i) {
            for (std::size_t j = i + 1; j < sketch.n(); ++j) emit(i, j);
        }
    } else {
        for (const auto& [i, j] : parse_pairs(a.pairs)) emit(i, j);
    }
    return kOk;
}

// ---- calibrate ------------------------------------------------------------

struct CalibrateArgs {
    std::vector<double> alphas;
    std::vector<std::size_t> ks;
    std::uint64_t replicates = 10000000;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string output = "bias_table.csv";
    std::string qstar_output;
    bool quiet = false;
};

int cmd_calibrate(CalibrateArgs a) {
    if (a.alphas.empty()) a.alphas = ss::default_alpha_grid();
    if (a.ks.empty()) a.ks = ss::default_k_grid();
    ss::BiasBuildOptions opts;
    opts.threads = a.threads;
    if (!a.quiet) {
        opts.on_cell = [](const ss::BiasCell& c) {
            std::fprintf(stderr, "alpha=%g k=%zu B=%.6f se=%.2g\n", c.alpha, c.k, c.B, c.std_error);
        };
    }
    std::size_t skipped = 0;
    opts.on_skip = [&skipped, quiet = a.quiet](double alpha, std::size_t k) {
        ++skipped;
        if (!quiet) std::fprintf(stderr, "alpha=%g k=%zu skipped: infinite mean, no bias factor\n", alpha, k);
    };
    const auto table = ss::build_bias_table(a.alphas, a.ks, a.replicates, a.seed, opts);
    ss::write_bias_csv(table, a.output);
    if (!a.qstar_output.empty()) ss::write_qstar_csv(table.quantiles(), a.qstar_output);
    for (const auto& [lo, hi] : ss::bias_monotonicity_violations(table, 3.0)) {
        std::fprintf(stderr, "warning: B rises with k at alpha=%g: k=%zu B=%.6f, k=%zu B=%.6f\n", lo.alpha, lo.k, lo.B,
                     hi.k, hi.B);
    }
    std::cout << "cells=" << table.cells().size() << " skipped=" << skipped << " replicates=" << a.replicates << " seed=" << a.seed
              << " output=" << a.output << '\n';
    return kOk;
}

// ---- qstar ----------------------------------------------------------------

int cmd_qstar(const std::vector<std::string>& alphas, bool header) {
    if (header) std::cout << ss::kQStarCsvHeader << '\n';
    for (const auto& text : alphas) {
        if (text == "0+" || text == "0") {
            const double q = ss::solve_q_star_zero_limit();
            std::cout << "0+," << fmt_short(q) << ',' << fmt_short(ss::zero_limit_W_alpha(q)) << '\n';
            continue;
        }
        double alpha = 0.0;
        try {
            std::size_t used = 0;
            alpha = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
        } catch (const std::exception&) {
            throw UsageError("--alpha expects a number or 0+, got '" + text + "'");
        }
        const auto oq = ss::optimal_quantile(alpha);
        std::cout << fmt_short(alpha) << ',' << fmt_short(oq.q_star) << ',' << fmt_short(oq.W_alpha) << '\n';
    }
    return kOk;
}

// ---- bounds ---------------------------------------------------------------

struct BoundsArgs {
    double alpha = 1.0;
    std::optional<double> q;
    double eps = 0.5;
    double delta = 0.05;
    std::optional<double> n;
    std::optional<double> T;
};

int cmd_bounds(const BoundsArgs& a) {
    const double q = a.q ? *a.q : ss::solve_q_star(a.alpha);
    const auto r = ss::plan_sample_size(a.alpha, q, a.eps, a.delta, ss::PlanTarget{a.n, a.T});
    nlohmann::json j;
    j["alpha"] = r.alpha;
    j["q"] = r.q;
    j["epsilon"] = r.epsilon;
    j["delta"] = r.delta;
    j["G_right"] = r.G_right;
    j["G_left"] = std::isnan(r.G_left) ? nlohmann::json(nullptr) : nlohmann::json(r.G_left);
    j["G"] = r.G;
    j["k"] = r.k_planned;
    j["regime"] = ss::to_string(r.regime);
    j[r.regime == ss::PlanRegime::bonferroni_n ? "n" : "T"] = r.target;
    std::cout << j.dump() << '\n';
    std::printf("k = %llu projections (G = %.4f, G_R = %.4f, G_L = %s) for eps = %g, delta = %g, %s = %g\n",
                static_cast<unsigned long long>(r.k_planned), r.G, r.G_right,
                std::isnan(r.G_left) ? "n/a" : fmt_short(r.G_left).c_str(), r.epsilon, r.delta,
                r.regime == ss::PlanRegime::bonferroni_n ? "n" : "T", r.target);
    return kOk;
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
    std::string experiment;
    std::vector<double> alphas;
    std::vector<std::size_t> ks;
    std::vector<double> epsilons;
    std::uint64_t replicates = 1000000;
    std::uint64_t seed = 1;
    std::vector<std::string> estimators;
    unsigned threads = 1;
    std::string calibration;
    std::string qstar;
    std::string output;
    std::string manifest;
    std::uint64_t batch = 200000;
};

int cmd_simulate(const SimulateArgs& a) {
    if (a.replicates == 0) throw UsageError("--replicates must be at least 1");
    if (a.alphas.empty() || a.ks.empty()) throw UsageError("--alphas and --ks are required");
    std::optional<ss::CalibrationTable> table;
    if (!a.calibration.empty()) table = ss::load_calibration(a.calibration, a.qstar);
    const ss::CalibrationTable* tp = table ? &*table : nullptr;

    std::vector<ss::MetricRecord> records;
    if (a.experiment == "timing") {
        ss::TimingOptions opts;
        opts.batch = a.batch;
        opts.seed = a.seed;
        if (!a.estimators.empty()) opts.estimators = parse_kinds(a.estimators);
        records = ss::run_timing_benchmark(a.alphas, a.ks, opts, tp);
    } else {
        ss::ExperimentPlan plan;
        plan.alphas = a.alphas;
        plan.ks = a.ks;
        plan.epsilons = a.epsilons;
        plan.replicates = a.replicates;
        plan.seed = a.seed;
        plan.threads = a.threads;
        if (!a.estimators.empty()) {
            plan.estimators = parse_kinds(a.estimators);
        } else if (!tp) {
            plan.estimators = {ss::EstimatorKind::gm, ss::EstimatorKind::fp, ss::EstimatorKind::oq};
        }
        if (a.experiment == "tail" && plan.epsilons.empty()) throw UsageError("tail needs --eps");
        records = a.experiment == "mse" ? ss::run_mse_experiment(plan, tp) : ss::run_tail_experiment(plan, tp);
    }

    if (a.output.empty() || a.output == "-") {
        ss::write_metric_csv(std::cout, records);
    } else {
        std::ofstream out(a.output);
        if (!out) throw ss::IoError("cannot write '" + a.output + "'");
        ss::write_metric_csv(out, records);
        if (!out) throw ss::IoError("write failed for '" + a.output + "'");
    }
    if (!a.manifest.empty()) {
        nlohmann::json m;
        m["experiment"] = a.experiment;
        m["alphas"] = a.alphas;
        m["ks"] = a.ks;
        m["epsilons"] = a.epsilons;
        m["replicates"] = a.replicates;
        m["seed"] = a.seed;
        m["estimators"] = a.estimators;
        m["threads"] = a.threads;
        m["calibration"] = a.calibration;
        m["output"] = a.output;
        m["build"] = build_info();
        m["created_at"] = ss::detail::utc_timestamp();
        std::ofstream out(a.manifest);
        if (!out) throw ss::IoError("cannot write '" + a.manifest + "'");
        out << m.dump(2) << '\n';
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stable random projection sketches and l_alpha distance estimation"};
    app.require_subcommand(1);

    SketchArgs sk;
    auto* c_sketch = app.add_subcommand("sketch", "Project a CSV/NDJSON matrix into an SSKP sketch file");
    c_sketch->add_option("input", sk.input, "Input matrix (.csv dense, .ndjson/.jsonl sparse)")->required();
    c_sketch->add_option("--alpha", sk.alpha, "Stability index in (0, 2]")->required();
    c_sketch->add_option("--k", sk.k, "Number of projections")->required();
    c_sketch->add_option("--seed", sk.seed, "Projection seed");
    c_sketch->add_option("--dim", sk.dim, "Dimension of sparse input (default: largest index + 1)");
    c_sketch->add_option("--threads", sk.threads, "Worker threads");
    c_sketch->add_option("-o,--output", sk.output, "Output sketch file")->required();

    EstimateArgs est;
    auto* c_est = app.add_subcommand("estimate", "Estimate distances between sketched rows");
    c_est->add_option("sketch", est.sketch, "Sketch file")->required();
    auto* o_pairs = c_est->add_option("--pairs", est.pairs, "Row pairs as \"i,j;i,j\"");
    auto* o_all = c_est->add_flag("--all", est.all, "Every pair i < j");
    o_pairs->excludes(o_all);
    o_all->excludes(o_pairs);
    c_est->add_option("--estimator", est.estimator, "gm | hm | fp | oq | oqc | median | am");
    c_est->add_flag("--root", est.root, "Emit d^(1/alpha) instead of d");
    c_est->add_option("--kernel", est.kernel_gamma, "Emit exp(-gamma d) for this gamma");
    c_est->add_option("--calibration", est.calibration, "Bias table CSV");
    c_est->add_option("--qstar", est.qstar, "q* table CSV");
    c_est->add_flag("--no-interpolate", est.no_interpolate, "Fail instead of interpolating off-grid B");

    CalibrateArgs cal;
    auto* c_cal = app.add_subcommand("calibrate", "Build the Monte-Carlo bias table B(alpha, k)");
    c_cal->add_option("--alphas", cal.alphas, "Alpha grid (default 0.05..2.00)")->delimiter(',');
    c_cal->add_option("--ks", cal.ks, "k grid")->delimiter(',');
    c_cal->add_option("--replicates", cal.replicates, "Replicates per cell (>= 10^5)");
    c_cal->add_option("--seed", cal.seed, "Seed");
    c_cal->add_option("--threads", cal.threads, "Worker threads");
    c_cal->add_option("-o,--output", cal.output, "Bias table CSV");
    c_cal->add_option("--qstar-output", cal.qstar_output, "Also write the q* table here");
    c_cal->add_flag("--quiet", cal.quiet, "No per-cell progress");

    std::vector<std::string> q_alphas;
    bool q_header = false;
    auto* c_q = app.add_subcommand("qstar", "Optimal quantile q* and W^alpha");
    c_q->add_option("--alpha", q_alphas, "Alpha values, or 0+ for the limit")->required()->delimiter(',');
    c_q->add_flag("--header", q_header, "Print the CSV header");

    BoundsArgs bd;
    auto* c_bd = app.add_subcommand("bounds", "Tail-bound constants and the implied sample size");
    c_bd->add_option("--alpha", bd.alpha, "Stability index")->required();
    c_bd->add_option("--q", bd.q, "Quantile (default q*)");
    c_bd->add_option("--eps", bd.eps, "Relative accuracy")->required();
    c_bd->add_option("--delta", bd.delta, "Failure probability")->required();
    auto* o_n = c_bd->add_option("--n", bd.n, "Number of points: cover all pairs");
    auto* o_T = c_bd->add_option("--T", bd.T, "Cover all but a 1/T fraction of pairs");
    o_n->excludes(o_T);
    o_T->excludes(o_n);

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Monte-Carlo studies");
    c_sim->add_option("experiment", sim.experiment, "mse | tail | timing")
        ->required()
        ->check(CLI::IsMember({"mse", "tail", "timing"}));
    c_sim->add_option("--alphas", sim.alphas, "Alpha values")->delimiter(',');
    c_sim->add_option("--ks", sim.ks, "Sample sizes")->delimiter(',');
    c_sim->add_option("--eps", sim.epsilons, "Tail thresholds")->delimiter(',');
    c_sim->add_option("--replicates", sim.replicates, "Replicates per cell");
    c_sim->add_option("--seed", sim.seed, "Seed");
    c_sim->add_option("--estimators", sim.estimators, "Estimators to run")->delimiter(',');
    c_sim->add_option("--threads", sim.threads, "Worker threads (not used by timing)");
    c_sim->add_option("--calibration", sim.calibration, "Bias table CSV (needed for oqc)");
    c_sim->add_option("--qstar", sim.qstar, "q* table CSV");
    c_sim->add_option("--batch", sim.batch, "Timing: estimates per timed run (>= 10^5)");
    c_sim->add_option("-o,--output", sim.output, "CSV output (default stdout)");
    c_sim->add_option("--manifest", sim.manifest, "Write a JSON manifest here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*c_sketch) return cmd_sketch(sk);
        if (*c_est) {
            if (!est.all && est.pairs.empty()) throw UsageError("estimate needs --pairs or --all");
            return cmd_estimate(est);
        }
        if (*c_cal) return cmd_calibrate(cal);
        if (*c_q) return cmd_qstar(q_alphas, q_header);
        if (*c_bd) {
            if (!bd.n && !bd.T) throw UsageError("bounds needs --n or --T");
            return cmd_bounds(bd);
        }
        if (*c_sim) return cmd_simulate(sim);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const ss::CalibrationMissError& e) {
        std::cerr << "calibration miss: " << e.what() << '\n';
        return kCalibrationMiss;
    } catch (const ss::IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kIo;
    } catch (const ss::FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kIo;
    } catch (const ss::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDomain;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDomain;
    }
    return kUsage;
}
