// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "aslmrf/config.hpp"
#include "aslmrf/crlb.hpp"
#include "aslmrf/dsp.hpp"
#include "aslmrf/io.hpp"
#include "aslmrf/multipld.hpp"
#include "aslmrf/phantom.hpp"
#include "aslmrf/random.hpp"
#include "aslmrf/regressor.hpp"
#include "aslmrf/schedules.hpp"
#include "aslmrf/signal_model.hpp"
#include "cli.hpp"
#include "rk4_oracle.hpp"

using namespace aslmrf;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kOracleTol = 1e-5;
constexpr double kOracleStep = 1e-5; // 0.01 ms
constexpr double kOracleBudgetS = 120.0;
constexpr double kFisherTol = 1e-12;
constexpr double kCbvaColumnTol = 1e-4;
constexpr double kDesignBudgetS = 30.0 * 60.0;
constexpr double kPaperPerfusionStd = 46.4;
constexpr double kPerfusionBand = 0.5;
constexpr double kMuchGreater = 2.0;
constexpr double kPerfusionCorrMin = 0.75;
constexpr double kT1FlipCorrMin = 0.95;
constexpr double kPipelineBudgetS = 60.0 * 60.0;
constexpr double kCutoffDbTol = 0.1;
constexpr double kDcGainMax = 1e-8;
constexpr double kRampResidualMax = 0.01;
constexpr double kRecoveryTol = 0.01;
constexpr double kCbvaRecoveryTol = 0.05;
constexpr double kWhiteMatterDegradation = 1.25;
constexpr double kInferenceBudgetS = 10.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int prec = 4) {
    std::ostringstream ss;
    ss << std::setprecision(prec) << v;
    return ss.str();
}

struct Outcome {
    bool pass = false;
    std::string summary;
};

void detail(const std::string &line) { std::cout << "    " << line << std::endl; }

std::vector<std::vector<std::string>> read_csv(const fs::path &path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

std::string slurp(const fs::path &p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void run_cli(const std::vector<std::string> &args) {
    std::string joined;
    for (const auto &a : args) {
        joined += " " + a;
    }
    std::cout << "  $ aslmrf" << joined << std::endl;
    const int rc = cli::run(args);
    if (rc != 0) {
        throw std::runtime_error("aslmrf" + joined + " exited with " + std::to_string(rc));
    }
}

ScanSchedule default_schedule(std::uint64_t seed) {
    const auto order = random_label_order(700, seed);
    return schedule_from_control_points({{0.3, 1.5, 0.6, 2.2, 0.1}}, order, 600.0);
}

HemodynamicParams draw(Rng &rng, const ParameterSpace &space) {
    HemodynamicParams p;
    for (auto q : kAllParams) {
        p.set(q, rng.uniform(space[q].min, space[q].max));
    }
    return p;
}

// ------------------------------------------------------------------ runs

struct Runs {
    fs::path work;
    bool reuse = false;
    std::string design_config;
    double design_seconds = 0.0;
    double pipeline_seconds = 0.0;
    bool design_done = false;
    bool pipeline_done = false;
    bool multipld_done = false;

    fs::path design() const { return work / "design"; }
    fs::path weights(const std::string &s) const { return work / ("train_" + s); }
    fs::path phantom(const std::string &s) const { return work / ("phantom_" + s); }
    fs::path multipld() const { return work / "multipld"; }
    fs::path schedule(const std::string &s) const { return design() / ("schedule_" + s + ".csv"); }

    bool cached(const fs::path &marker) const { return reuse && fs::exists(marker); }

    void ensure_design() {
        if (design_done) {
            return;
        }
        const auto t0 = Clock::now();
        if (!cached(design() / "comparison.csv")) {
            run_cli({"design", "--out", design().string()});
        }
        design_seconds = seconds_since(t0);
        design_done = true;
    }

    void ensure_pipeline() {
        if (pipeline_done) {
            return;
        }
        ensure_design();
        const auto t0 = Clock::now();
        for (const std::string s : {"optimized", "suboptimal1", "suboptimal2"}) {
            if (!cached(weights(s) / "weights_flip.json")) {
                run_cli({"train", "--schedule", schedule(s).string(), "--out", weights(s).string()});
            }
            if (!cached(phantom(s) / "evaluation.csv")) {
                run_cli({"phantom", "--weights", weights(s).string(), "--schedule", schedule(s).string(), "--out",
                         phantom(s).string()});
            }
        }
        pipeline_seconds = seconds_since(t0);
        pipeline_done = true;
    }

    void ensure_multipld() {
        if (multipld_done) {
            return;
        }
        ensure_pipeline();
        if (!cached(multipld() / "tissue_means.csv")) {
            run_cli({"multipld", "--mrf", phantom("optimized").string(), "--out", multipld().string()});
        }
        multipld_done = true;
    }
};

// ------------------------------------------------------------------ 1

Outcome criterion_simulator(Runs &) {
    const auto t0 = Clock::now();
    const auto space = ParameterSpace::design_default();
    Rng rng(derive_seed(2024, 1));
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const auto sched = default_schedule(derive_seed(2024, 100 + static_cast<std::uint64_t>(k)));
        const auto p = draw(rng, space);
        const auto fp = simulate_fingerprint(p, {}, sched);
        const auto ref = oracle::fingerprint(p, {}, sched, kOracleStep, true);
        worst = std::max(worst, oracle::relative_linf(fp.samples, ref));
    }
    // The per-segment closed form above must agree with explicit stepping.
    const auto short_sched = assemble_schedule(std::vector<double>(9, 0.7),
                                               std::vector<PulseType>{PulseType::Label, PulseType::Silence,
                                                                      PulseType::Control, PulseType::Label,
                                                                      PulseType::Control, PulseType::Silence,
                                                                      PulseType::Label, PulseType::Label,
                                                                      PulseType::Control});
    const HemodynamicParams p{55.0, 0.012, 0.7, 0.02, 1.3, 75.0};
    const double stepping = oracle::relative_linf(oracle::fingerprint(p, {}, short_sched, kOracleStep, true),
                                                  oracle::fingerprint(p, {}, short_sched, kOracleStep, false));
    const double elapsed = seconds_since(t0);
    detail("worst relative Linf over 100 draws: " + num(worst, 3) + " (limit " + num(kOracleTol) + ")");
    detail("closed-form vs explicit RK4 stepping: " + num(stepping, 3));
    detail("runtime " + num(elapsed, 3) + " s (limit " + num(kOracleBudgetS) + " s)");
    const bool ok = worst < kOracleTol && stepping < kOracleTol && elapsed < kOracleBudgetS;
    return {ok, "relative Linf " + num(worst, 3) + " in " + num(elapsed, 3) + " s"};
}

// ------------------------------------------------------------------ 2

Outcome criterion_fisher(Runs &) {
    const auto space = ParameterSpace::design_default();
    Rng rng(derive_seed(2024, 2));
    double fisher_worst = 0.0, column_worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        const auto sched = default_schedule(derive_seed(2024, 200 + static_cast<std::uint64_t>(k)));
        const auto p = draw(rng, space);
        const ModelConstants c;
        const Jacobian J = numerical_jacobian(p, c, sched);
        const FisherMatrix F = fisher_matrix(J, c.noise_sigma);
        for (Eigen::Index a = 0; a < 6; ++a) {
            for (Eigen::Index b = 0; b < 6; ++b) {
                double dot = 0.0;
                for (Eigen::Index r = 0; r < J.rows(); ++r) {
                    dot += J(r, a) * J(r, b);
                }
                dot /= c.noise_sigma * c.noise_sigma;
                fisher_worst = std::max(fisher_worst, std::abs(F(a, b) - dot) / std::max(std::abs(dot), 1e-300));
            }
        }
        // The signal is affine in CBVa: ds/dcbva = (M_art - M_tis) sin(flip).
        const auto tr = simulate_compartments(p, c, sched);
        const double sb = std::sin(p.flip * std::numbers::pi / 180.0);
        double diff = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < sched.size(); ++i) {
            const double analytic = (tr.m_art[i] - tr.m_tis[i]) * sb;
            diff = std::max(diff, std::abs(J(static_cast<Eigen::Index>(i), index(Param::Cbva)) - analytic));
            scale = std::max(scale, std::abs(analytic));
        }
        column_worst = std::max(column_worst, diff / scale);
    }
    detail("Fisher vs dot-product oracle, worst relative entry error: " + num(fisher_worst, 3));
    detail("CBVa column vs analytic derivative, worst relative error: " + num(column_worst, 3));
    const bool ok = fisher_worst <= kFisherTol && column_worst <= kCbvaColumnTol;
    return {ok, "Fisher " + num(fisher_worst, 3) + ", CBVa column " + num(column_worst, 3)};
}

// ------------------------------------------------------------------ 3, 4

std::map<std::string, std::vector<double>> comparison(const Runs &runs) {
    const auto rows = read_csv(runs.design() / "comparison.csv");
    std::map<std::string, std::vector<double>> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        std::vector<double> v;
        for (std::size_t c = 1; c < rows[r].size(); ++c) {
            v.push_back(std::stod(rows[r][c]));
        }
        out[rows[r][0]] = v;
    }
    return out;
}

Outcome criterion_design_order(Runs &runs) {
    runs.ensure_design();
    const auto cmp = comparison(runs);
    const double opt = cmp.at("optimized")[0];
    const double s1 = cmp.at("suboptimal1")[0];
    const double s2 = cmp.at("suboptimal2")[0];
    const auto cfg = RunConfig{};
    const std::size_t candidates = static_cast<std::size_t>(std::pow(cfg.design.grid.values.size(), 5) + 0.5);
    const std::size_t listed = read_csv(runs.design() / "candidates.csv").size() - 1;
    detail("cost optimized " + num(opt, 6) + ", suboptimal1 " + num(s1, 6) + ", suboptimal2 " + num(s2, 6) +
           " (|theta| = " + std::to_string(cfg.design.n_theta_eval) + ")");
    detail(std::to_string(listed) + " of " + std::to_string(candidates) + " grid candidates scored, |theta| = " +
           std::to_string(cfg.design.n_theta_search) + " during search");
    detail("design runtime " + num(runs.design_seconds, 4) + " s (limit " + num(kDesignBudgetS) + " s)");
    const bool ok = opt < s1 && opt < s2 && listed == candidates && runs.design_seconds < kDesignBudgetS;
    return {ok, "optimized " + num(opt, 5) + " < " + num(s1, 5) + ", " + num(s2, 5)};
}

Outcome criterion_precision_pattern(Runs &runs) {
    runs.ensure_design();
    const auto v = comparison(runs).at("optimized");
    const double perf = v[1 + index(Param::Perfusion)], cbva = v[1 + index(Param::Cbva)];
    const double bat = v[1 + index(Param::Bat)], mtr = v[1 + index(Param::Mtr)];
    const double t1 = v[1 + index(Param::T1)], flip = v[1 + index(Param::Flip)];
    detail("normalized std (%): perfusion " + num(perf) + ", cbva " + num(cbva) + ", bat " + num(bat) + ", mtr " +
           num(mtr) + ", t1 " + num(t1) + ", flip " + num(flip));
    const bool mtr_ok = mtr >= kMuchGreater * perf;
    const bool perf_ok = perf > cbva;
    const double smallest_three = std::max({bat, t1, flip});
    const bool cbva_ok = cbva >= kMuchGreater * smallest_three;
    const double lo = kPaperPerfusionStd * (1.0 - kPerfusionBand), hi = kPaperPerfusionStd * (1.0 + kPerfusionBand);
    const bool band_ok = perf >= lo && perf <= hi;
    detail(std::string("MTR >> perfusion (ratio >= 2): ") + (mtr_ok ? "yes" : "no") + ", ratio " + num(mtr / perf, 3));
    detail(std::string("perfusion > CBVa: ") + (perf_ok ? "yes" : "no"));
    detail(std::string("CBVa >> BAT, T1, flip (ratio >= 2): ") + (cbva_ok ? "yes" : "no") + ", ratio " +
           num(cbva / smallest_three, 3));
    detail(std::string("perfusion within [") + num(lo) + ", " + num(hi) + "]: " + (band_ok ? "yes" : "no"));
    return {mtr_ok && perf_ok && cbva_ok && band_ok,
            "perfusion " + num(perf) + "%, mtr/perfusion " + num(mtr / perf, 3) + ", cbva/max(bat,t1,flip) " +
                num(cbva / smallest_three, 3)};
}

// ------------------------------------------------------------------ 5

std::map<std::string, double> correlations(const fs::path &dir) {
    std::map<std::string, double> out;
    const auto rows = read_csv(dir / "evaluation.csv");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        out[rows[r][0]] = std::stod(rows[r][1]);
    }
    return out;
}

Outcome criterion_phantom(Runs &runs) {
    runs.ensure_pipeline();
    const auto opt = correlations(runs.phantom("optimized"));
    const auto s1 = correlations(runs.phantom("suboptimal1"));
    const auto s2 = correlations(runs.phantom("suboptimal2"));
    for (const auto *name : {"perfusion", "cbva", "bat", "mtr", "t1", "flip"}) {
        detail(std::string(name) + " correlation: optimized " + num(opt.at(name), 4) + ", suboptimal1 " +
               num(s1.at(name), 4) + ", suboptimal2 " + num(s2.at(name), 4));
    }
    const auto lesions = read_csv(runs.phantom("optimized") / "lesions.csv");
    for (std::size_t r = 1; r < lesions.size(); ++r) {
        detail("lesion " + lesions[r][0] + " (x" + lesions[r][1] + "): recovered contrast fraction " +
               num(std::stod(lesions[r][6]), 3));
    }
    detail("train + phantom runtime for three schedules " + num(runs.pipeline_seconds, 4) + " s (limit " +
           num(kPipelineBudgetS) + " s)");
    const double p = opt.at("perfusion");
    const bool ok = p >= kPerfusionCorrMin && p > s1.at("perfusion") && p > s2.at("perfusion") &&
                    opt.at("t1") >= kT1FlipCorrMin && opt.at("flip") >= kT1FlipCorrMin &&
                    runs.pipeline_seconds < kPipelineBudgetS;
    return {ok, "perfusion r " + num(p, 3) + " (sub " + num(s1.at("perfusion"), 3) + ", " +
                    num(s2.at("perfusion"), 3) + "), t1 " + num(opt.at("t1"), 3) + ", flip " +
                    num(opt.at("flip"), 3)};
}

// ------------------------------------------------------------------ 6

Outcome criterion_butterworth(Runs &) {
    const auto f = design_butterworth_highpass();
    const double cutoff_db = 20.0 * std::log10(f.magnitude_at(0.05));
    const double target_db = 20.0 * std::log10(1.0 / std::sqrt(2.0));
    const double dc = f.magnitude_at(0.0);
    std::vector<double> ramp(700);
    for (std::size_t k = 0; k < ramp.size(); ++k) {
        ramp[k] = 0.002 * static_cast<double>(k);
    }
    const auto y = filtfilt(f, ramp);
    double residual = 0.0;
    for (double v : y) {
        residual = std::max(residual, std::abs(v));
    }
    residual /= ramp.back() - ramp.front();
    detail("gain at 0.05 Hz " + num(cutoff_db, 6) + " dB (target " + num(target_db, 6) + " dB)");
    detail("DC gain " + num(dc, 3));
    detail("ramp residual after zero-phase filtering, fraction of ramp range: " + num(residual, 3));
    const bool ok =
        std::abs(cutoff_db - target_db) <= kCutoffDbTol && dc < kDcGainMax && residual < kRampResidualMax;
    return {ok, "cutoff " + num(cutoff_db, 5) + " dB, DC " + num(dc, 3) + ", ramp " + num(residual, 3)};
}

// ------------------------------------------------------------------ 7

std::vector<double> protocol_signal(const HemodynamicParams &p, double m0, const MultiPLDProtocol &prot) {
    ModelConstants c;
    c.m0_tis = m0;
    auto q = p;
    q.flip = prot.flip;
    return simulate_fingerprint(q, c, prot.schedule()).samples;
}

double white_matter_nrmse(const std::vector<double> &est, const PhantomTruth &truth) {
    double sq = 0.0, sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        if (truth.tissue[i] != Tissue::White || truth.lesion[i] >= 0) {
            continue;
        }
        const double t = truth.maps[Param::Perfusion].values[i];
        const double e = std::isfinite(est[i]) ? est[i] : 0.0;
        sq += (e - t) * (e - t);
        sum += t;
        ++n;
    }
    return std::sqrt(sq / static_cast<double>(n)) / (sum / static_cast<double>(n));
}

Outcome criterion_multipld(Runs &runs) {
    const RunConfig cfg;
    const auto prot = cfg.multipld.protocol();
    Rng rng(derive_seed(2024, 7));
    double t1_err = 0.0, m0_err = 0.0, f_err = 0.0, bat_err = 0.0, cbva_err = 0.0;
    bool all_converged = true;
    for (int k = 0; k < 20; ++k) {
        // Stage 1 sees voxels at the fit nominals; stage 2 gets the true T1 and M0.
        const double t1 = rng.uniform(0.7, 2.0), m0 = rng.uniform(0.5, 2.0);
        const FitNominals nom = cfg.multipld.nominal;
        const HemodynamicParams at_nominal{nom.f, nom.cbva, nom.bat, nom.mtr, t1, prot.flip};
        const auto s1 = fit_stage1(control_samples(protocol_signal(at_nominal, m0, prot)), prot, nom);
        t1_err = std::max(t1_err, std::abs(s1.estimates[0] / t1 - 1.0));
        m0_err = std::max(m0_err, std::abs(s1.estimates[1] / m0 - 1.0));

        const HemodynamicParams v{rng.uniform(15.0, 80.0), rng.uniform(0.004, 0.02), rng.uniform(0.5, 1.6), nom.mtr,
                                  t1,                       prot.flip};
        const auto s2 = fit_stage2(difference_samples(protocol_signal(v, m0, prot)), t1, m0, prot, nom);
        f_err = std::max(f_err, std::abs(s2.estimates[0] / v.f - 1.0));
        cbva_err = std::max(cbva_err, std::abs(s2.estimates[1] / v.cbva - 1.0));
        bat_err = std::max(bat_err, std::abs(s2.estimates[2] / v.bat - 1.0));
        all_converged = all_converged && s1.converged && s2.converged;
    }
    detail("noiseless, 20 voxels, worst relative error: T1 " + num(t1_err, 3) + ", M0 " + num(m0_err, 3) + ", CBF " +
           num(f_err, 3) + ", BAT " + num(bat_err, 3) + ", CBVa " + num(cbva_err, 3));
    const bool noiseless_ok = t1_err < kRecoveryTol && m0_err < kRecoveryTol && f_err < kRecoveryTol &&
                              bat_err < kRecoveryTol && cbva_err < kCbvaRecoveryTol && all_converged;

    runs.ensure_multipld();
    PhantomSpec spec = cfg.phantom;
    spec.seed = derive_seed(cfg.seed, 31);
    const auto truth = make_phantom_truth(spec);
    const auto mpld = io::read_raster(runs.multipld() / "mpld_perfusion.aslm").values;
    const auto mrf = io::read_raster(runs.phantom("optimized") / "est_perfusion.aslm").values;
    const double e_mpld = white_matter_nrmse(mpld, truth);
    const double e_mrf = white_matter_nrmse(mrf, truth);
    const auto means = read_csv(runs.multipld() / "tissue_means.csv");
    for (std::size_t r = 1; r < means.size(); ++r) {
        if (means[r][1] == "perfusion") {
            detail(means[r][0] + " matter CBF mean: truth " + num(std::stod(means[r][2])) + ", multi-delay " +
                   num(std::stod(means[r][3])) + ", fingerprint " + num(std::stod(means[r][4])) + " (" +
                   means[r][6] + "/" + means[r][5] + " fits converged)");
        }
    }
    detail("white matter CBF nRMSE with sigma = " + num(cfg.multipld.noise_sigma) + ": multi-delay " +
           num(e_mpld, 3) + ", fingerprint " + num(e_mrf, 3) + " (required ratio >= " +
           num(kWhiteMatterDegradation) + ")");
    const bool degraded = e_mpld >= kWhiteMatterDegradation * e_mrf;
    return {noiseless_ok && degraded, "noiseless worst CBF " + num(f_err, 3) + ", WM nRMSE multi-delay " +
                                          num(e_mpld, 3) + " vs fingerprint " + num(e_mrf, 3)};
}

// ------------------------------------------------------------------ 8

Outcome criterion_speed(Runs &runs) {
    runs.ensure_pipeline();
    std::array<TrainedNetwork, kNumParams> nets;
    for (auto p : kAllParams) {
        nets[index(p)] =
            io::read_weights(runs.weights("optimized") / ("weights_" + std::string(param_name(p)) + ".json"));
    }
    const auto filt = io::read_filter_csv(runs.weights("optimized") / "filter.csv");
    const auto sched = io::read_schedule(runs.schedule("optimized"));
    const RunConfig cfg;
    PhantomSpec spec = cfg.phantom;
    const auto truth = make_phantom_truth(spec);
    const auto volume = simulate_volume(truth, sched, spec.noise_sigma, 5);
    double worst = 0.0;
    for (auto p : kAllParams) {
        // Every slot holds the same network so the call times one parameter.
        std::array<TrainedNetwork, kNumParams> single;
        single.fill(nets[index(p)]);
        for (auto q : kAllParams) {
            single[index(q)].spec.target = q;
        }
        EstimateSettings es;
        const auto t0 = Clock::now();
        const auto maps = estimate_maps(single, volume, filt, es);
        const double per_param = seconds_since(t0) / static_cast<double>(kNumParams);
        worst = std::max(worst, per_param);
        detail(std::string(param_name(p)) + ": " + num(per_param, 3) + " s per 64x64 map");
    }
    EstimateSettings es;
    const auto t0 = Clock::now();
    estimate_maps(nets, volume, filt, es);
    const double all = seconds_since(t0);
    detail("all six maps together: " + num(all, 3) + " s");
    return {worst < kInferenceBudgetS, "slowest parameter " + num(worst, 3) + " s per map (limit " +
                                           num(kInferenceBudgetS) + " s)"};
}

// ------------------------------------------------------------------ 9

Outcome criterion_determinism(Runs &runs) {
    const fs::path base = runs.work / "determinism";
    fs::remove_all(base);
    fs::create_directories(base);
    const auto config = base / "config.json";
    std::ofstream(config) << R"({
  "seed": 11,
  "schedule": {"nframes": 80, "total_s": 70},
  "design": {"grid_s": [0.2, 1.0], "n_theta_search": 6, "n_theta_order": 6, "n_theta_eval": 10, "n_orders": 4},
  "train": {"n_samples": 3000, "epochs": 3, "batch_size": 128},
  "phantom": {"rows": 32, "cols": 32, "lesions": [{"row": 15.5, "col": 15.5, "radius": 2.5, "multiplier": 1.8}]},
  "multipld": {"n_plds": 6, "total_s": 61.35}
})";
    auto pass = [&](const std::string &tag, const std::string &workers) {
        const auto d = base / tag;
        const std::vector<std::string> common{"--config", config.string(), "--workers", workers};
        auto with = [&](std::vector<std::string> a, const std::string &out) {
            a.insert(a.end(), common.begin(), common.end());
            a.push_back("--out");
            a.push_back((d / out).string());
            run_cli(a);
        };
        with({"design"}, "design");
        const auto sched = (d / "design" / "schedule_optimized.csv").string();
        with({"train", "--schedule", sched}, "train");
        with({"simulate", "--schedule", sched}, "simulate");
        with({"simulate", "--schedule", sched, "--params", "perfusion=40,cbva=0.01,bat=1.1,mtr=0.02,t1=1.2,flip=65",
              "--noise", "0.01"},
             "fingerprint");
        with({"estimate", "--weights", (d / "train").string(), "--volume", (d / "simulate" / "volume.aslv").string()},
             "estimate");
        with({"phantom", "--weights", (d / "train").string(), "--schedule", sched}, "phantom");
        with({"multipld", "--mrf", (d / "phantom").string()}, "multipld");
        with({"report", "--runs", (d / "design").string(), (d / "phantom").string()}, "report");
    };
    pass("a", "0");
    pass("b", "1");

    std::size_t compared = 0, differing = 0;
    std::set<std::string> kinds;
    for (const auto &e : fs::recursive_directory_iterator(base / "a")) {
        if (!e.is_regular_file()) {
            continue;
        }
        const auto rel = fs::relative(e.path(), base / "a");
        const auto other = base / "b" / rel;
        ++compared;
        kinds.insert(e.path().extension().string());
        if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
            // Saved configs record the worker count, which is not an artifact.
            if (rel.filename() == "config.json") {
                --compared;
                continue;
            }
            ++differing;
            detail("differs: " + rel.string());
        }
    }
    std::string ext;
    for (const auto &k : kinds) {
        ext += " " + k;
    }
    detail(std::to_string(compared) + " artifacts compared across two runs with different worker counts (" + ext +
           " )");
    return {differing == 0 && compared > 0,
            std::to_string(differing) + " of " + std::to_string(compared) + " artifacts differ"};
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Acceptance checks"};
    std::string work = "acceptance_work";
    std::vector<int> only;
    bool reuse = false;
    app.add_option("--work", work, "Working directory for run artifacts");
    app.add_option("--only", only, "Run only these criteria")->delimiter(',');
    app.add_flag("--reuse", reuse, "Reuse finished runs found in the working directory");
    CLI11_PARSE(app, argc, argv);

    Runs runs;
    runs.work = fs::absolute(work);
    runs.reuse = reuse;
    if (!reuse) {
        fs::remove_all(runs.work);
    }
    fs::create_directories(runs.work);

    const std::vector<std::pair<std::string, std::function<Outcome(Runs &)>>> criteria{
        {"simulator matches the RK4 oracle", criterion_simulator},
        {"Fisher matrix and CBVa sensitivity", criterion_fisher},
        {"optimized schedule has the lowest design cost", criterion_design_order},
        {"predicted precision pattern", criterion_precision_pattern},
        {"phantom correlations", criterion_phantom},
        {"Butterworth high-pass", criterion_butterworth},
        {"multi-delay baseline", criterion_multipld},
        {"64x64 inference speed", criterion_speed},
        {"byte-identical reruns", criterion_determinism},
    };

    std::vector<std::string> lines;
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) {
            continue;
        }
        std::cout << "[criterion " << id << "] " << criteria[i].first << std::endl;
        Outcome out;
        try {
            out = criteria[i].second(runs);
        } catch (const std::exception &e) {
            out = {false, std::string("error: ") + e.what()};
        }
        const std::string line = std::string(out.pass ? "PASS" : "FAIL") + "  criterion " + std::to_string(id) +
                                 ": " + criteria[i].first + " - " + out.summary;
        std::cout << line << std::endl;
        lines.push_back(line);
        all = all && out.pass;
    }
    std::cout << "\nsummary\n";
    for (const auto &l : lines) {
        std::cout << l << '\n';
    }
    return all ? 0 : 1;
}
