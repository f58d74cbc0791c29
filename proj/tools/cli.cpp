#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"

#include "aslmrf/config.hpp"
#include "aslmrf/crlb.hpp"
#include "aslmrf/dsp.hpp"
#include "aslmrf/error.hpp"
#include "aslmrf/io.hpp"
#include "aslmrf/multipld.hpp"
#include "aslmrf/phantom.hpp"
#include "aslmrf/random.hpp"
#include "aslmrf/regressor.hpp"
#include "aslmrf/schedules.hpp"

namespace aslmrf::cli {

namespace {

namespace fs = std::filesystem;

// Seed streams of the individual stages, all derived from the run seed.
enum Stream : std::uint64_t {
    kSearchTheta = 11,
    kReferenceOrder = 12,
    kOrderTheta = 13,
    kOrderShuffle = 14,
    kSuboptimal1 = 15,
    kSuboptimal2 = 16,
    kEvalTheta = 17,
    kTraining = 21,
    kPhantomTruth = 31,
    kPhantomNoise = 32,
    kMultiPLDNoise = 41,
    kFitStarts = 42,
    kFingerprintNoise = 51,
};

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    unsigned workers = 0;
};

struct Context {
    RunConfig cfg;
    fs::path out;
};

void log(const std::string &msg) { std::cerr << "[aslmrf] " << msg << std::endl; }

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
    return ss.str();
}

Context prepare(const CLI::App &sub, const Common &c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    if (sub.count("--seed") > 0) {
        cfg.seed = c.seed;
    }
    if (sub.count("--workers") > 0) {
        cfg.workers = c.workers;
    }
    cfg.validate();
    const fs::path out = c.out.empty() ? fs::path("runs") / (timestamp() + "-seed" + std::to_string(cfg.seed) + "-" +
                                                           sub.get_name())
                                       : fs::path(c.out);
    fs::create_directories(out);
    io::write_text(out / "config.json", dump_config(cfg));
    return {cfg, out};
}

std::uint64_t stream(const RunConfig &cfg, Stream s) { return derive_seed(cfg.seed, s); }

void require_file(const std::string &path, const char *what) {
    if (path.empty() || !fs::is_regular_file(path)) {
        throw InputError(std::string(what) + " '" + path + "' does not exist");
    }
}

IIRFilter configured_filter(const RunConfig &cfg) {
    const auto &f = cfg.train.filter;
    return design_butterworth_highpass(f.order, f.cutoff_hz, f.fs_hz);
}

std::array<TrainedNetwork, kNumParams> load_networks(const fs::path &dir) {
    std::array<TrainedNetwork, kNumParams> nets;
    for (auto p : kAllParams) {
        const auto path = dir / ("weights_" + std::string(param_name(p)) + ".json");
        if (!fs::is_regular_file(path)) {
            throw InputError("missing weight file " + path.string());
        }
        nets[index(p)] = io::read_weights(path);
        if (nets[index(p)].spec.target != p) {
            throw InputError(path.string() + " holds a network for " +
                             std::string(param_name(nets[index(p)].spec.target)));
        }
    }
    return nets;
}

IIRFilter filter_for(const fs::path &weights_dir, const RunConfig &cfg) {
    const auto path = weights_dir / "filter.csv";
    return fs::is_regular_file(path) ? io::read_filter_csv(path) : configured_filter(cfg);
}

PhantomTruth phantom_truth(const RunConfig &cfg) {
    PhantomSpec spec = cfg.phantom;
    spec.seed = stream(cfg, kPhantomTruth);
    return make_phantom_truth(spec);
}

void write_maps(const fs::path &dir, const std::string &prefix, const ParamMaps &maps) {
    for (auto p : kAllParams) {
        io::write_raster(dir / (prefix + std::string(param_name(p)) + ".aslm"), maps[p]);
    }
}

void write_tissue(const fs::path &dir, const PhantomTruth &truth, std::size_t rows, std::size_t cols) {
    Map2D m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.values[i] = static_cast<double>(truth.tissue[i]);
    }
    io::write_raster(dir / "tissue.aslm", m);
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream ss;
    ss << std::setprecision(prec) << v;
    return ss.str();
}

// ---------------------------------------------------------------- design

int cmd_design(const Context &ctx) {
    const auto &cfg = ctx.cfg;
    const auto &d = cfg.design;
    const auto &sd = cfg.schedule;
    CrlbSettings crlb = d.crlb;
    crlb.workers = cfg.workers;

    const auto search_thetas = sample_theta_set(d.space, d.n_theta_search, stream(cfg, kSearchTheta), d.sampling);
    const auto reference = random_label_order(sd.nframes, stream(cfg, kReferenceOrder));
    const std::size_t n_candidates =
        static_cast<std::size_t>(std::pow(static_cast<double>(d.grid.values.size()), 5.0) + 0.5);
    log("searching " + std::to_string(n_candidates) + " labeling-duration candidates over " +
        std::to_string(search_thetas.size()) + " parameter draws");
    const auto lab = optimize_labeling(d.grid, reference, sd.total_s, search_thetas, d.weights, cfg.model, crlb,
                                       sd.timing);
    if (!std::isfinite(lab.cost)) {
        throw NumericalError("every candidate schedule has a singular Fisher matrix");
    }
    io::write_candidates_csv(ctx.out / "candidates.csv", lab.candidates);

    log("searching " + std::to_string(d.n_orders) + " label orders");
    const auto order_thetas = sample_theta_set(d.space, d.n_theta_order, stream(cfg, kOrderTheta), d.sampling);
    const auto ord = optimize_label_order(lab.schedule, d.n_orders, order_thetas, d.weights, cfg.model,
                                          stream(cfg, kOrderShuffle), crlb);
    {
        std::ofstream os(ctx.out / "order_candidates.csv");
        os << "candidate,cost\n";
        for (std::size_t i = 0; i < ord.candidate_costs.size(); ++i) {
            os << i << ',' << io::format_double(ord.candidate_costs[i]) << '\n';
        }
    }

    auto optimized = with_order(lab.schedule, ord.order);
    optimized.id = "optimized";
    auto sub1 = make_suboptimal_1(sd.nframes, sd.total_s, stream(cfg, kSuboptimal1), sd);
    sub1.id = "suboptimal1";
    auto sub2 = make_suboptimal_2(sd.nframes, sd.total_s, stream(cfg, kSuboptimal2), sd);
    sub2.id = "suboptimal2";
    io::write_schedule(ctx.out / "schedule_optimized.csv", optimized, {"optimized", cfg.seed});
    io::write_schedule(ctx.out / "schedule_suboptimal1.csv", sub1, {"suboptimal1", cfg.seed});
    io::write_schedule(ctx.out / "schedule_suboptimal2.csv", sub2, {"suboptimal2", cfg.seed});

    const auto eval_thetas = sample_theta_set(d.space, d.n_theta_eval, stream(cfg, kEvalTheta), d.sampling);
    std::vector<io::ComparisonRow> rows;
    for (const auto *s : {&optimized, &sub1, &sub2}) {
        io::ComparisonRow r;
        r.schedule = s->id;
        r.cost = design_cost(*s, eval_thetas, d.weights, cfg.model, crlb);
        r.normalized_std = predicted_normalized_std(*s, eval_thetas, cfg.model, crlb);
        rows.push_back(r);
    }
    io::write_comparison_csv(ctx.out / "comparison.csv", rows);

    std::cout << "schedule      cost";
    for (auto p : kAllParams) {
        std::cout << "  " << param_name(p);
    }
    std::cout << '\n';
    for (const auto &r : rows) {
        std::cout << std::left << std::setw(12) << r.schedule << "  " << fmt(r.cost);
        for (double v : r.normalized_std) {
            std::cout << "  " << fmt(v, 3);
        }
        std::cout << '\n';
    }
    std::cout << "outputs in " << ctx.out.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- train

int cmd_train(const Context &ctx, const std::string &schedule_path) {
    require_file(schedule_path, "schedule file");
    const auto &cfg = ctx.cfg;
    const auto sched = io::read_schedule(schedule_path);
    const auto filt = configured_filter(cfg);
    io::write_filter_csv(ctx.out / "filter.csv", filt);

    TrainConfig tc = cfg.train.train;
    tc.seed = stream(cfg, kTraining);
    tc.workers = cfg.workers;

    auto fit = [&](const Dataset &data, Param p) {
        auto spec = NetworkSpec::default_for(p, sched.size());
        spec.target_range = cfg.train.space[p];
        TrainConfig local = tc;
        local.on_epoch = [&](std::size_t e, double tl, double vl) {
            log(std::string(param_name(p)) + " epoch " + std::to_string(e + 1) + "/" + std::to_string(tc.epochs) +
                " train " + fmt(tl) + " val " + fmt(vl));
        };
        const auto net = train(spec, data, local);
        io::write_weights(ctx.out / ("weights_" + std::string(param_name(p)) + ".json"), net);
        io::write_loss_csv(ctx.out / ("loss_" + std::string(param_name(p)) + ".csv"), net.history);
    };

    // One dataset alive at a time keeps peak memory at a single copy.
    {
        log("synthesizing " + std::to_string(tc.n_samples) + " raw fingerprints");
        const auto raw = synthesize_dataset(tc, sched, cfg.train.space, nullptr, cfg.model);
        for (auto p : kAllParams) {
            if (!NetworkSpec::default_for(p).preconditioned) {
                fit(raw, p);
            }
        }
    }
    {
        log("synthesizing " + std::to_string(tc.n_samples) + " high-passed fingerprints");
        const auto hp = synthesize_dataset(tc, sched, cfg.train.space, &filt, cfg.model);
        for (auto p : kAllParams) {
            if (NetworkSpec::default_for(p).preconditioned) {
                fit(hp, p);
            }
        }
    }
    std::cout << "weights in " << ctx.out.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- estimate

int cmd_estimate(const Context &ctx, const std::string &weights_dir, const std::string &volume_path) {
    require_file(volume_path, "volume file");
    if (!fs::is_directory(weights_dir)) {
        throw InputError("weights directory '" + weights_dir + "' does not exist");
    }
    const auto &cfg = ctx.cfg;
    const auto nets = load_networks(weights_dir);
    const auto filt = filter_for(weights_dir, cfg);
    const auto vol = io::read_volume(volume_path);
    EstimateSettings es = cfg.estimate;
    es.workers = cfg.workers;
    const auto t0 = std::chrono::steady_clock::now();
    const auto est = estimate_maps(nets, vol.voxels, filt, es);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<bool> mask(vol.voxels.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = std::isfinite(est[0][i]);
    }
    write_maps(ctx.out, "est_", to_maps(est, vol.rows, vol.cols, mask));
    std::cout << "estimated " << vol.rows << "x" << vol.cols << " maps in " << fmt(secs, 3) << " s; outputs in "
              << ctx.out.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- simulate

HemodynamicParams parse_params(const std::string &text) {
    HemodynamicParams p;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw InputError("--params expects name=value pairs, got '" + item + "'");
        }
        const auto name = item.substr(0, eq);
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(item.substr(eq + 1), &used);
            if (used != item.size() - eq - 1) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception &) {
            throw InputError("bad value in --params: '" + item + "'");
        }
        p.set(param_from_name(name), v);
    }
    p.validate();
    return p;
}

int cmd_simulate(const Context &ctx, const std::string &schedule_path, const std::string &params, double noise) {
    require_file(schedule_path, "schedule file");
    const auto &cfg = ctx.cfg;
    const auto sched = io::read_schedule(schedule_path);
    if (!params.empty()) {
        const auto p = parse_params(params);
        auto fp = simulate_fingerprint(p, cfg.model, sched);
        fp = add_noise(std::move(fp), noise, stream(cfg, kFingerprintNoise));
        const auto acq = sched.acquisition_times();
        std::ofstream os(ctx.out / "fingerprint.csv");
        os << "frame,pulse,t_acq_s,signal\n";
        for (std::size_t i = 0; i < fp.size(); ++i) {
            os << i << ',' << pulse_code(sched.frames[i].pulse) << ',' << io::format_double(acq[i]) << ','
               << io::format_double(fp.samples[i]) << '\n';
        }
        std::cout << "fingerprint in " << (ctx.out / "fingerprint.csv").string() << '\n';
        return kOk;
    }
    const auto truth = phantom_truth(cfg);
    const auto volume = simulate_volume(truth, sched, cfg.phantom.noise_sigma, stream(cfg, kPhantomNoise), cfg.model,
                                        cfg.workers);
    write_maps(ctx.out, "truth_", truth.maps);
    write_tissue(ctx.out, truth, cfg.phantom.rows, cfg.phantom.cols);
    io::write_volume(ctx.out / "volume.aslv", {cfg.phantom.rows, cfg.phantom.cols, volume});
    std::cout << "phantom volume in " << ctx.out.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- phantom

int cmd_phantom(const Context &ctx, const std::string &weights_dir, const std::string &schedule_path) {
    require_file(schedule_path, "schedule file");
    if (!fs::is_directory(weights_dir)) {
        throw InputError("weights directory '" + weights_dir + "' does not exist");
    }
    const auto &cfg = ctx.cfg;
    const auto sched = io::read_schedule(schedule_path);
    const auto nets = load_networks(weights_dir);
    const auto filt = filter_for(weights_dir, cfg);
    const auto truth = phantom_truth(cfg);
    const std::size_t rows = cfg.phantom.rows, cols = cfg.phantom.cols;
    const auto volume = simulate_volume(truth, sched, cfg.phantom.noise_sigma, stream(cfg, kPhantomNoise), cfg.model,
                                        cfg.workers);
    EstimateSettings es = cfg.estimate;
    es.workers = cfg.workers;
    const auto est = to_maps(estimate_maps(nets, volume, filt, es), rows, cols, truth.maps.mask);
    const auto rep = evaluate(est, truth.maps);

    write_maps(ctx.out, "truth_", truth.maps);
    write_maps(ctx.out, "est_", est);
    write_tissue(ctx.out, truth, rows, cols);
    io::write_evaluation_csv(ctx.out / "evaluation.csv", rep);
    for (auto p : kAllParams) {
        io::write_scatter_csv(ctx.out / ("scatter_" + std::string(param_name(p)) + ".csv"), rep.scatter[index(p)]);
    }
    {
        std::ofstream os(ctx.out / "lesions.csv");
        os << "lesion,multiplier,truth_lesion,truth_surround,estimate_lesion,estimate_surround,recovered_fraction\n";
        for (std::size_t l = 0; l < cfg.phantom.lesions.size(); ++l) {
            PhantomSpec spec = cfg.phantom;
            const auto c = lesion_contrast(est, truth, spec, l);
            const double frac = (c.estimate_lesion - c.estimate_surround) / (c.truth_lesion - c.truth_surround);
            os << l << ',' << io::format_double(spec.lesions[l].multiplier) << ','
               << io::format_double(c.truth_lesion) << ',' << io::format_double(c.truth_surround) << ','
               << io::format_double(c.estimate_lesion) << ',' << io::format_double(c.estimate_surround) << ','
               << io::format_double(frac) << '\n';
        }
    }
    std::cout << "parameter   correlation  bias  nrmse\n";
    for (const auto &s : rep.scores) {
        std::cout << std::left << std::setw(10) << param_name(s.param) << "  " << fmt(s.correlation) << "  "
                  << fmt(s.bias) << "  " << fmt(s.nrmse) << '\n';
    }
    std::cout << "outputs in " << ctx.out.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- multipld

int cmd_multipld(const Context &ctx, const std::string &mrf_dir) {
    const auto &cfg = ctx.cfg;
    const auto protocol = cfg.multipld.protocol();
    const auto truth = phantom_truth(cfg);
    const std::size_t rows = cfg.phantom.rows, cols = cfg.phantom.cols, n = rows * cols;
    const auto volume = simulate_protocol_volume(truth, protocol, cfg.multipld.noise_sigma,
                                                 stream(cfg, kMultiPLDNoise), cfg.model, cfg.workers);
    FitSettings fs = cfg.multipld.fit;
    fs.seed = stream(cfg, kFitStarts);
    fs.workers = cfg.workers;
    fs.bounds = cfg.design.space;
    log("fitting " + std::to_string(std::count(truth.maps.mask.begin(), truth.maps.mask.end(), true)) + " voxels");
    const auto fit = fit_volume(volume, truth.maps.mask, rows, cols, protocol, cfg.multipld.nominal, fs, cfg.model);

    auto as_map = [&](const std::vector<double> &v) {
        Map2D m(rows, cols);
        m.values = v;
        return m;
    };
    std::map<Param, const std::vector<double> *> fitted{
        {Param::Perfusion, &fit.f}, {Param::Cbva, &fit.cbva}, {Param::Bat, &fit.bat}, {Param::T1, &fit.t1}};
    for (const auto &[p, v] : fitted) {
        io::write_raster(ctx.out / ("mpld_" + std::string(param_name(p)) + ".aslm"), as_map(*v));
    }
    io::write_raster(ctx.out / "mpld_m0.aslm", as_map(fit.m0));
    {
        Map2D conv(rows, cols, kNoData);
        for (std::size_t i = 0; i < n; ++i) {
            if (truth.maps.mask[i]) {
                conv.values[i] = fit.converged[i] ? 1.0 : 0.0;
            }
        }
        io::write_raster(ctx.out / "mpld_converged.aslm", conv);
    }
    write_maps(ctx.out, "truth_", truth.maps);
    write_tissue(ctx.out, truth, rows, cols);
    {
        std::ofstream os(ctx.out / "protocol.csv");
        os << "pair,pld_s,tag_s\n";
        for (std::size_t i = 0; i < protocol.plds.size(); ++i) {
            os << i << ',' << io::format_double(protocol.plds[i]) << ',' << io::format_double(protocol.tag) << '\n';
        }
    }

    std::map<Param, Map2D> mrf;
    if (!mrf_dir.empty()) {
        for (const auto &[p, v] : fitted) {
            const auto path = fs::path(mrf_dir) / ("est_" + std::string(param_name(p)) + ".aslm");
            if (!fs::is_regular_file(path)) {
                throw InputError("missing fingerprint estimate " + path.string());
            }
            auto m = io::read_raster(path);
            if (m.rows != rows || m.cols != cols) {
                throw InputError(path.string() + " does not match the phantom dimensions");
            }
            mrf[p] = std::move(m);
        }
        for (const auto &[p, v] : fitted) {
            std::ofstream os(ctx.out / ("scatter_mrf_vs_multipld_" + std::string(param_name(p)) + ".csv"));
            os << "truth,mrf,multipld\n";
            for (std::size_t i = 0; i < n; ++i) {
                if (truth.maps.mask[i]) {
                    os << io::format_double(truth.maps[p].values[i]) << ',' << io::format_double(mrf[p].values[i])
                       << ',' << io::format_double((*v)[i]) << '\n';
                }
            }
        }
    }

    std::ofstream os(ctx.out / "tissue_means.csv");
    os << "tissue,parameter,truth_mean,multipld_mean,mrf_mean,n,n_converged\n";
    std::cout << "tissue  parameter   truth  multipld" << (mrf.empty() ? "" : "  mrf") << '\n';
    for (auto cls : {Tissue::Gray, Tissue::White}) {
        const char *cname = cls == Tissue::Gray ? "gray" : "white";
        for (const auto &[p, v] : fitted) {
            double st = 0.0, sm = 0.0, sr = 0.0;
            std::size_t cnt = 0, cm = 0, cr = 0, conv = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (truth.tissue[i] != cls) {
                    continue;
                }
                ++cnt;
                st += truth.maps[p].values[i];
                conv += fit.converged[i] ? 1 : 0;
                if (std::isfinite((*v)[i])) {
                    sm += (*v)[i];
                    ++cm;
                }
                if (!mrf.empty() && std::isfinite(mrf[p].values[i])) {
                    sr += mrf[p].values[i];
                    ++cr;
                }
            }
            const double tm = cnt ? st / static_cast<double>(cnt) : kNoData;
            const double mm = cm ? sm / static_cast<double>(cm) : kNoData;
            const double rm = cr ? sr / static_cast<double>(cr) : kNoData;
            os << cname << ',' << param_name(p) << ',' << io::format_double(tm) << ',' << io::format_double(mm) << ','
               << (mrf.empty() ? "" : io::format_double(rm)) << ',' << cnt << ',' << conv << '\n';
            std::cout << std::left << std::setw(6) << cname << "  " << std::setw(10) << param_name(p) << "  "
                      << fmt(tm) << "  " << fmt(mm);
            if (!mrf.empty()) {
                std::cout << "  " << fmt(rm);
            }
            std::cout << '\n';
        }
    }
    std::cout << "outputs in " << ctx.out.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- report

std::vector<std::vector<std::string>> read_csv(const fs::path &path) {
    std::ifstream is(path);
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

std::string markdown_table(const std::vector<std::vector<std::string>> &rows) {
    std::ostringstream os;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        os << '|';
        for (const auto &c : rows[r]) {
            os << ' ' << c << " |";
        }
        os << '\n';
        if (r == 0) {
            os << '|';
            for (std::size_t c = 0; c < rows[0].size(); ++c) {
                os << "---|";
            }
            os << '\n';
        }
    }
    return os.str();
}

/// Scatter of the first two numeric columns with an identity line.
void write_scatter_svg(const fs::path &csv, const fs::path &svg) {
    const auto rows = read_csv(csv);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() < 2) {
            continue;
        }
        try {
            const double x = std::stod(rows[r][0]), y = std::stod(rows[r][1]);
            if (std::isfinite(x) && std::isfinite(y)) {
                pts.emplace_back(x, y);
            }
        } catch (const std::exception &) {
        }
    }
    if (pts.empty() || rows.empty()) {
        return;
    }
    double lo = pts[0].first, hi = pts[0].first;
    for (const auto &[x, y] : pts) {
        lo = std::min({lo, x, y});
        hi = std::max({hi, x, y});
    }
    if (hi <= lo) {
        hi = lo + 1.0;
    }
    const double size = 320.0, pad = 40.0, span = size - 2.0 * pad;
    auto px = [&](double v) { return pad + (v - lo) / (hi - lo) * span; };
    auto py = [&](double v) { return size - pad - (v - lo) / (hi - lo) * span; };
    std::ofstream os(svg);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"320\" height=\"320\" font-family=\"sans-serif\" "
          "font-size=\"10\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"320\" height=\"320\" fill=\"white\"/>\n";
    os << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << span << "\" height=\"" << span
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << px(lo) << "\" y1=\"" << py(lo) << "\" x2=\"" << px(hi) << "\" y2=\"" << py(hi)
       << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    for (const auto &[x, y] : pts) {
        os << "<circle cx=\"" << fmt(px(x), 5) << "\" cy=\"" << fmt(py(y), 5)
           << "\" r=\"1.5\" fill=\"steelblue\" fill-opacity=\"0.6\"/>\n";
    }
    os << "<text x=\"" << size / 2 << "\" y=\"" << size - 10 << "\" text-anchor=\"middle\">" << rows[0][0]
       << "</text>\n";
    os << "<text x=\"12\" y=\"" << size / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 12 " << size / 2
       << ")\">" << rows[0][1] << "</text>\n";
    os << "<text x=\"" << pad << "\" y=\"" << size - pad + 12 << "\">" << fmt(lo) << "</text>\n";
    os << "<text x=\"" << size - pad << "\" y=\"" << size - pad + 12 << "\" text-anchor=\"end\">" << fmt(hi)
       << "</text>\n";
    os << "<text x=\"" << size / 2 << "\" y=\"20\" text-anchor=\"middle\">" << csv.stem().string() << "</text>\n";
    os << "</svg>\n";
}

int cmd_report(const Context &ctx, const std::vector<std::string> &runs) {
    std::ostringstream md;
    md << "# Run report\n";
    for (const auto &run : runs) {
        const fs::path dir(run);
        if (!fs::is_directory(dir)) {
            throw InputError("run directory '" + run + "' does not exist");
        }
        md << "\n## " << dir.filename().string() << "\n";
        for (const char *name : {"comparison.csv", "evaluation.csv", "lesions.csv", "tissue_means.csv"}) {
            if (fs::is_regular_file(dir / name)) {
                md << "\n### " << name << "\n\n" << markdown_table(read_csv(dir / name));
            }
        }
        std::vector<fs::path> scatters;
        for (const auto &e : fs::directory_iterator(dir)) {
            const auto fname = e.path().filename().string();
            if (e.is_regular_file() && fname.starts_with("scatter") && e.path().extension() == ".csv") {
                scatters.push_back(e.path());
            }
        }
        std::sort(scatters.begin(), scatters.end());
        for (const auto &s : scatters) {
            const auto svg = ctx.out / (dir.filename().string() + "_" + s.stem().string() + ".svg");
            write_scatter_svg(s, svg);
            md << "\n![" << s.stem().string() << "](" << svg.filename().string() << ")\n";
        }
    }
    io::write_text(ctx.out / "report.md", md.str());
    std::cout << md.str();
    return kOk;
}

void add_common(CLI::App *sub, Common &c) {
    sub->add_option("--config", c.config, "JSON configuration file (defaults apply to missing keys)");
    sub->add_option("--seed", c.seed, "Run seed; overrides the config");
    sub->add_option("--out", c.out, "Output directory (default runs/<timestamp>-seed<seed>-<command>)");
    sub->add_option("--workers", c.workers, "Worker threads (0 = all cores)");
}

int dispatch(int argc, const char *const *argv) {
    CLI::App app{"ASL fingerprinting: schedule design, simulation, training and evaluation"};
    app.require_subcommand(1);
    Common common;
    std::string schedule, weights, volume, params, mrf;
    std::vector<std::string> runs;
    double noise = 0.0;

    auto *design = app.add_subcommand("design", "Search labeling schedules and write the comparison table");
    add_common(design, common);
    auto *trn = app.add_subcommand("train", "Train the six parameter networks for a schedule");
    add_common(trn, common);
    trn->add_option("--schedule", schedule, "Schedule CSV")->required();
    auto *estimate = app.add_subcommand("estimate", "Estimate parameter maps from a fingerprint volume");
    add_common(estimate, common);
    estimate->add_option("--weights", weights, "Directory with weights_<param>.json")->required();
    estimate->add_option("--volume", volume, "Fingerprint volume (.aslv)")->required();
    auto *phantom = app.add_subcommand("phantom", "Simulate the phantom, estimate maps and score them");
    add_common(phantom, common);
    phantom->add_option("--weights", weights, "Directory with weights_<param>.json")->required();
    phantom->add_option("--schedule", schedule, "Schedule CSV the networks were trained for")->required();
    auto *mpld = app.add_subcommand("multipld", "Fit the multi-delay baseline on the phantom");
    add_common(mpld, common);
    mpld->add_option("--mrf", mrf, "Phantom run directory with est_<param>.aslm for comparison");
    auto *simulate = app.add_subcommand("simulate", "Simulate one fingerprint or the phantom volume");
    add_common(simulate, common);
    simulate->add_option("--schedule", schedule, "Schedule CSV")->required();
    simulate->add_option("--params", params, "Single voxel, e.g. perfusion=60,cbva=0.01,bat=1,mtr=0.015,t1=1.4,flip=70");
    simulate->add_option("--noise", noise, "Noise sigma for --params (default 0)")->check(CLI::NonNegativeNumber);
    auto *report = app.add_subcommand("report", "Collect tables and scatter plots from run directories");
    add_common(report, common);
    report->add_option("--runs", runs, "Run directories")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    for (auto *sub : app.get_subcommands()) {
        const auto ctx = prepare(*sub, common);
        const auto &name = sub->get_name();
        if (name == "design") return cmd_design(ctx);
        if (name == "train") return cmd_train(ctx, schedule);
        if (name == "estimate") return cmd_estimate(ctx, weights, volume);
        if (name == "phantom") return cmd_phantom(ctx, weights, schedule);
        if (name == "multipld") return cmd_multipld(ctx, mrf);
        if (name == "simulate") return cmd_simulate(ctx, schedule, params, noise);
        if (name == "report") return cmd_report(ctx, runs);
    }
    return kUsage;
}

} // namespace

int run(int argc, const char *const *argv) {
    try {
        return dispatch(argc, argv);
    } catch (const InputError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const fs::filesystem_error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericalError &e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception &e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
}

int run(const std::vector<std::string> &args) {
    std::vector<const char *> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("aslmrf");
    for (const auto &a : args) {
        argv.push_back(a.c_str());
    }
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace aslmrf::cli
