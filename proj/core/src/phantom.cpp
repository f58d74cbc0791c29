#include "aslmrf/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "aslmrf/error.hpp"
#include "aslmrf/parallel.hpp"
#include "aslmrf/random.hpp"

namespace aslmrf {

namespace {

struct Geometry {
    double cr, cc;   // center
    double ar, ac;   // head semi-axes
    double ribbon;   // normalized radius where cortex begins
};

Geometry geometry_for(std::size_t rows, std::size_t cols) {
    const double r = static_cast<double>(rows), c = static_cast<double>(cols);
    return {(r - 1.0) / 2.0, (c - 1.0) / 2.0, 0.42 * r, 0.36 * c, 0.78};
}

double head_radius(const Geometry &g, double r, double c) {
    const double dr = (r - g.cr) / g.ar, dc = (c - g.cc) / g.ac;
    return std::sqrt(dr * dr + dc * dc);
}

Tissue classify(const Geometry &g, double r, double c) {
    const double rho = head_radius(g, r, c);
    if (rho > 1.0) {
        return Tissue::Background;
    }
    if (rho > g.ribbon) {
        return Tissue::Gray;
    }
    // Deep nuclei, one per hemisphere.
    for (double side : {-1.0, 1.0}) {
        const double dr = (r - (g.cr + 0.22 * g.ar)) / (0.13 * g.ar);
        const double dc = (c - (g.cc + side * 0.39 * g.ac)) / (0.13 * g.ac);
        if (dr * dr + dc * dc <= 1.0) {
            return Tissue::Gray;
        }
    }
    return Tissue::White;
}

/// Sum of a few low-frequency plane waves, scaled to peak |value| = 1 over the head.
std::vector<double> smooth_field(std::size_t rows, std::size_t cols, const std::vector<Tissue> &tissue,
                                 std::uint64_t seed) {
    Rng rng(seed);
    constexpr int kWaves = 4;
    std::array<double, kWaves> kr{}, kc{}, phase{};
    for (int w = 0; w < kWaves; ++w) {
        kr[w] = rng.uniform(-2.0, 2.0);
        kc[w] = rng.uniform(-2.0, 2.0);
        phase[w] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    std::vector<double> field(rows * cols, 0.0);
    double peak = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            double v = 0.0;
            for (int w = 0; w < kWaves; ++w) {
                v += std::cos(2.0 * std::numbers::pi *
                                  (kr[w] * static_cast<double>(r) / static_cast<double>(rows) +
                                   kc[w] * static_cast<double>(c) / static_cast<double>(cols)) +
                              phase[w]);
            }
            field[r * cols + c] = v;
            if (tissue[r * cols + c] != Tissue::Background) {
                peak = std::max(peak, std::abs(v));
            }
        }
    }
    if (peak > 0.0) {
        for (auto &v : field) {
            v /= peak;
        }
    }
    return field;
}

bool in_disk(const Lesion &l, double r, double c) {
    const double dr = r - l.row, dc = c - l.col;
    return dr * dr + dc * dc <= l.radius * l.radius;
}

} // namespace

void PhantomSpec::validate() const {
    if (rows < 16 || cols < 16 || rows > 65535 || cols > 65535) {
        throw InputError("phantom dimensions must lie in [16, 65535], got " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    }
    gray.validate();
    white.validate();
    if (!(variation >= 0.0 && variation < 1.0)) {
        throw InputError("phantom variation must lie in [0, 1)");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw InputError("phantom noise sigma must be >= 0");
    }
    const auto g = geometry_for(rows, cols);
    for (std::size_t i = 0; i < lesions.size(); ++i) {
        const auto &l = lesions[i];
        if (!(l.multiplier > 0.0) || !std::isfinite(l.multiplier)) {
            throw InputError("lesion " + std::to_string(i) + " multiplier must be > 0");
        }
        if (!(l.radius > 0.0)) {
            throw InputError("lesion " + std::to_string(i) + " radius must be > 0");
        }
        bool any = false;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double rd = static_cast<double>(r), cd = static_cast<double>(c);
                if (in_disk(l, rd, cd)) {
                    any = true;
                    if (classify(g, rd, cd) == Tissue::Background) {
                        throw InputError("lesion " + std::to_string(i) + " extends outside the brain mask");
                    }
                }
            }
        }
        if (!any) {
            throw InputError("lesion " + std::to_string(i) + " covers no voxel");
        }
    }
}

PhantomTruth make_phantom_truth(const PhantomSpec &spec) {
    spec.validate();
    const std::size_t rows = spec.rows, cols = spec.cols, n = rows * cols;
    const auto g = geometry_for(rows, cols);
    const auto space = ParameterSpace::design_default();

    PhantomTruth out;
    out.tissue.resize(n);
    out.lesion.assign(n, -1);
    out.maps.mask.assign(n, false);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const auto t = classify(g, static_cast<double>(r), static_cast<double>(c));
            out.tissue[r * cols + c] = t;
            out.maps.mask[r * cols + c] = t != Tissue::Background;
            for (std::size_t l = 0; l < spec.lesions.size(); ++l) {
                if (in_disk(spec.lesions[l], static_cast<double>(r), static_cast<double>(c))) {
                    out.lesion[r * cols + c] = static_cast<int>(l);
                }
            }
        }
    }
    for (auto p : kAllParams) {
        const auto field = smooth_field(rows, cols, out.tissue, derive_seed(spec.seed, 100 + index(p)));
        auto &map = out.maps[p];
        map = Map2D(rows, cols, kNoData);
        for (std::size_t i = 0; i < n; ++i) {
            if (!out.maps.mask[i]) {
                continue;
            }
            const auto &cls = out.tissue[i] == Tissue::Gray ? spec.gray : spec.white;
            double v = cls.get(p) * (1.0 + spec.variation * field[i]);
            if (p == Param::Perfusion && out.lesion[i] >= 0) {
                v *= spec.lesions[static_cast<std::size_t>(out.lesion[i])].multiplier;
            }
            map.values[i] = std::clamp(v, space[p].min, space[p].max);
        }
    }
    return out;
}

std::vector<Fingerprint> simulate_volume(const PhantomTruth &truth, const ScanSchedule &sched, double noise_sigma,
                                         std::uint64_t seed, const ModelConstants &c, unsigned workers) {
    sched.validate();
    c.validate();
    if (!(noise_sigma >= 0.0)) {
        throw InputError("noise sigma must be >= 0");
    }
    const std::size_t n = truth.maps.mask.size();
    std::vector<Fingerprint> volume(n);
    parallel_for(n, workers, [&](std::size_t i) {
        Fingerprint fp;
        fp.schedule_id = sched.id;
        fp.samples.assign(sched.size(), 0.0);
        if (truth.maps.mask[i]) {
            HemodynamicParams p;
            for (auto q : kAllParams) {
                p.set(q, truth.maps[q].values[i]);
            }
            simulate_into(p, c, sched, fp.samples);
        }
        volume[i] = add_noise(std::move(fp), noise_sigma, derive_seed(seed, i));
    });
    return volume;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw InputError("pearson: length mismatch");
    }
    const std::size_t n = x.size();
    if (n < 2) {
        return 0.0;
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    // Relative threshold so a constant map with rounding noise still counts as constant.
    const auto flat = [n](double ss, double mean) { return ss <= 1e-24 * static_cast<double>(n) * (1.0 + mean * mean); };
    if (flat(sxx, mx) || flat(syy, my)) {
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

EvaluationReport evaluate(const ParamMaps &estimate, const ParamMaps &truth) {
    const std::size_t n = truth.mask.size();
    for (auto p : kAllParams) {
        if (estimate[p].rows != truth[p].rows || estimate[p].cols != truth[p].cols || estimate[p].size() != n ||
            truth[p].size() != n) {
            throw InputError("estimate and truth map shapes differ for " + std::string(param_name(p)));
        }
    }
    EvaluationReport rep;
    for (auto p : kAllParams) {
        std::vector<double> t, e;
        auto &scatter = rep.scatter[index(p)];
        for (std::size_t i = 0; i < n; ++i) {
            const double tv = truth[p].values[i], ev = estimate[p].values[i];
            if (!truth.mask[i] || !std::isfinite(ev) || !std::isfinite(tv)) {
                continue;
            }
            t.push_back(tv);
            e.push_back(ev);
            scatter.emplace_back(tv, ev);
        }
        auto &s = rep.scores[index(p)];
        s.param = p;
        s.n = t.size();
        s.correlation = pearson(t, e);
        if (!t.empty()) {
            double bias = 0.0, sq = 0.0, mean_t = 0.0;
            for (std::size_t i = 0; i < t.size(); ++i) {
                bias += e[i] - t[i];
                sq += (e[i] - t[i]) * (e[i] - t[i]);
                mean_t += t[i];
            }
            const double m = static_cast<double>(t.size());
            s.bias = bias / m;
            mean_t /= m;
            s.nrmse = mean_t != 0.0 ? std::sqrt(sq / m) / std::abs(mean_t) : std::sqrt(sq / m);
        }
    }
    return rep;
}

ParamMaps to_maps(const std::array<std::vector<double>, kNumParams> &values, std::size_t rows, std::size_t cols,
                  std::vector<bool> mask) {
    const std::size_t n = rows * cols;
    if (mask.size() != n) {
        throw InputError("mask size does not match map shape");
    }
    ParamMaps out;
    for (auto p : kAllParams) {
        const auto &v = values[index(p)];
        if (v.size() != n) {
            throw InputError("map for " + std::string(param_name(p)) + " has " + std::to_string(v.size()) +
                             " voxels, expected " + std::to_string(n));
        }
        out[p].rows = rows;
        out[p].cols = cols;
        out[p].values = v;
    }
    out.mask = std::move(mask);
    return out;
}

LesionContrast lesion_contrast(const ParamMaps &estimate, const PhantomTruth &truth, const PhantomSpec &spec,
                               std::size_t lesion_index, double ring) {
    if (lesion_index >= spec.lesions.size()) {
        throw InputError("lesion index out of range");
    }
    const auto &l = spec.lesions[lesion_index];
    const std::size_t rows = spec.rows, cols = spec.cols;
    const auto center_r = static_cast<std::size_t>(std::lround(l.row));
    const auto center_c = static_cast<std::size_t>(std::lround(l.col));
    const Tissue cls = truth.tissue[center_r * cols + center_c];
    double tl = 0.0, ts = 0.0, el = 0.0, es = 0.0;
    std::size_t nl = 0, ns = 0;
    const auto &tf = truth.maps[Param::Perfusion].values;
    const auto &ef = estimate[Param::Perfusion].values;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            if (!truth.maps.mask[i] || !std::isfinite(ef[i])) {
                continue;
            }
            const double d = std::hypot(static_cast<double>(r) - l.row, static_cast<double>(c) - l.col);
            if (truth.lesion[i] == static_cast<int>(lesion_index)) {
                tl += tf[i];
                el += ef[i];
                ++nl;
            } else if (truth.lesion[i] < 0 && d <= l.radius + ring && truth.tissue[i] == cls) {
                ts += tf[i];
                es += ef[i];
                ++ns;
            }
        }
    }
    if (nl == 0 || ns == 0) {
        throw InputError("lesion " + std::to_string(lesion_index) + " has no scored voxels or no surround");
    }
    return {tl / static_cast<double>(nl), ts / static_cast<double>(ns), el / static_cast<double>(nl),
            es / static_cast<double>(ns)};
}

} // namespace aslmrf
