#include "aslmrf/multipld.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "aslmrf/error.hpp"
#include "aslmrf/parallel.hpp"
#include "aslmrf/random.hpp"

namespace aslmrf {

namespace {

using Residual = std::function<void(const Eigen::VectorXd &, Eigen::VectorXd &)>;

struct Solution {
    Eigen::VectorXd x;
    double cost = 0.0; // sum of squares
    bool stationary = false;
};

double sum_sq(const Eigen::VectorXd &r) {
    const double s = r.squaredNorm();
    return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
}

/// Levenberg-Marquardt with box constraints. Coordinates that sit on a bound
/// with the gradient pointing outward are frozen for the step; trial points are
/// projected back into the box. Jacobian by central differences.
Solution solve_bounded(const Residual &residual, Eigen::VectorXd x, const Eigen::VectorXd &lo, const Eigen::VectorXd &hi,
                       const Eigen::VectorXd &typ, std::size_t max_iter) {
    const auto n = x.size();
    x = x.cwiseMax(lo).cwiseMin(hi);
    Eigen::VectorXd r, rp, rm;
    residual(x, r);
    double cost = sum_sq(r);
    const auto m = r.size();
    double mu = 1e-3;
    Eigen::MatrixXd J(m, n);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        if (cost <= 1e-30) {
            return {x, cost, true};
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            const double h = 1e-6 * std::max(std::abs(x(j)), typ(j));
            Eigen::VectorXd xp = x, xm = x;
            xp(j) = std::min(x(j) + h, hi(j));
            xm(j) = std::max(x(j) - h, lo(j));
            residual(xp, rp);
            residual(xm, rm);
            J.col(j) = (rp - rm) / (xp(j) - xm(j));
        }
        const Eigen::VectorXd g = J.transpose() * r;
        std::vector<Eigen::Index> free;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double tol = 1e-12 * typ(j);
            const bool at_lo = x(j) <= lo(j) + tol && g(j) > 0.0;
            const bool at_hi = x(j) >= hi(j) - tol && g(j) < 0.0;
            if (!at_lo && !at_hi) {
                free.push_back(j);
            }
        }
        if (free.empty()) {
            return {x, cost, true};
        }
        const auto k = static_cast<Eigen::Index>(free.size());
        Eigen::MatrixXd A(k, k);
        Eigen::VectorXd gk(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            gk(a) = g(free[a]);
            for (Eigen::Index b = 0; b < k; ++b) {
                A(a, b) = J.col(free[a]).dot(J.col(free[b]));
            }
        }
        bool accepted = false;
        while (mu < 1e16) {
            Eigen::MatrixXd D = A;
            for (Eigen::Index a = 0; a < k; ++a) {
                D(a, a) += mu * std::max(A(a, a), 1e-30);
            }
            const Eigen::VectorXd step = D.ldlt().solve(-gk);
            Eigen::VectorXd xt = x;
            for (Eigen::Index a = 0; a < k; ++a) {
                xt(free[a]) += step(a);
            }
            xt = xt.cwiseMax(lo).cwiseMin(hi);
            Eigen::VectorXd rt;
            residual(xt, rt);
            const double ct = sum_sq(rt);
            if (ct < cost) {
                const double rel_drop = (cost - ct) / cost;
                const double rel_step = ((xt - x).array() / typ.array()).abs().maxCoeff();
                x = xt;
                r = rt;
                cost = ct;
                mu = std::max(mu / 3.0, 1e-12);
                accepted = true;
                if (rel_drop < 1e-14 || rel_step < 1e-12) {
                    return {x, cost, true};
                }
                break;
            }
            mu *= 4.0;
        }
        if (!accepted) {
            // No descent in any damped direction: a stationary point to working precision.
            return {x, cost, true};
        }
    }
    return {x, cost, false};
}

bool pinned(const Eigen::VectorXd &x, const Eigen::VectorXd &lo, const Eigen::VectorXd &hi, const Eigen::VectorXd &typ) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double tol = 1e-9 * typ(j);
        if (x(j) <= lo(j) + tol || x(j) >= hi(j) - tol) {
            return true;
        }
    }
    return false;
}

bool all_zero(std::span<const double> y) {
    return std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; });
}

bool all_finite(std::span<const double> y) {
    return std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); });
}

/// Starting points in the unit cube, identical for every voxel.
std::vector<std::vector<double>> unit_starts(std::size_t starts, std::size_t dims, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> out(starts, std::vector<double>(dims));
    for (auto &s : out) {
        for (auto &v : s) {
            v = rng.uniform();
        }
    }
    return out;
}

void check_settings(const FitSettings &s) {
    if (s.starts == 0) {
        throw InputError("at least one fit start is required");
    }
    if (!(s.t1_bounds.min > 0.0 && s.t1_bounds.min < s.t1_bounds.max)) {
        throw InputError("T1 fit bounds must satisfy 0 < min < max");
    }
    s.bounds.validate();
}

} // namespace

ScanSchedule MultiPLDProtocol::schedule() const {
    ScanSchedule s;
    s.id = "multipld";
    s.frames.reserve(2 * plds.size());
    for (double pld : plds) {
        s.frames.push_back({PulseType::Label, tag, pld, timing.t_aq, timing.t_adjust});
        s.frames.push_back({PulseType::Control, tag, pld, timing.t_aq, timing.t_adjust});
    }
    return s;
}

void MultiPLDProtocol::validate() const {
    if (plds.size() < 2) {
        throw InputError("a multi-PLD protocol needs at least 2 delays");
    }
    for (std::size_t i = 0; i < plds.size(); ++i) {
        if (!(plds[i] > 0.0) || !std::isfinite(plds[i])) {
            throw InputError("post-labeling delays must be positive");
        }
        if (i > 0 && !(plds[i] > plds[i - 1])) {
            throw InputError("post-labeling delays must be strictly ascending");
        }
    }
    if (!(tag > 0.0)) {
        throw InputError("labeling duration must be positive");
    }
    if (!(flip > 0.0 && flip < 180.0)) {
        throw InputError("protocol flip angle must lie in (0, 180)");
    }
}

MultiPLDProtocol protocol_from_plds(std::vector<double> plds, double total, const FrameTiming &timing, double flip) {
    MultiPLDProtocol p;
    p.plds = std::move(plds);
    p.total = total;
    p.timing = timing;
    p.flip = flip;
    if (p.plds.size() < 2) {
        throw InputError("a multi-PLD protocol needs at least 2 delays");
    }
    double fixed = 0.0;
    for (double pld : p.plds) {
        fixed += 2.0 * (pld + timing.t_aq + timing.t_adjust);
    }
    p.tag = (total - fixed) / (2.0 * static_cast<double>(p.plds.size()));
    if (!(p.tag > 0.0)) {
        throw InputError("protocol timing infeasible: delays and readouts need " + std::to_string(fixed) +
                         " s of the " + std::to_string(total) + " s budget");
    }
    p.validate();
    return p;
}

MultiPLDProtocol build_protocol(std::size_t n_plds, double total, double pld_min, double pld_max,
                                const FrameTiming &timing, double flip) {
    if (n_plds < 2) {
        throw InputError("a multi-PLD protocol needs at least 2 delays");
    }
    if (!(pld_min > 0.0 && pld_min < pld_max)) {
        throw InputError("delays must satisfy 0 < pld_min < pld_max");
    }
    std::vector<double> plds(n_plds);
    for (std::size_t i = 0; i < n_plds; ++i) {
        plds[i] = pld_min + (pld_max - pld_min) * static_cast<double>(i) / static_cast<double>(n_plds - 1);
    }
    plds.back() = pld_max;
    return protocol_from_plds(std::move(plds), total, timing, flip);
}

std::vector<double> control_samples(std::span<const double> signal) {
    if (signal.size() % 2 != 0) {
        throw InputError("protocol signal must hold label/control pairs");
    }
    std::vector<double> out(signal.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = signal[2 * i + 1];
    }
    return out;
}

std::vector<double> difference_samples(std::span<const double> signal) {
    if (signal.size() % 2 != 0) {
        throw InputError("protocol signal must hold label/control pairs");
    }
    std::vector<double> out(signal.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = signal[2 * i + 1] - signal[2 * i];
    }
    return out;
}

FitResult fit_stage1(std::span<const double> control, const MultiPLDProtocol &protocol, const FitNominals &nominal,
                     const FitSettings &settings, const ModelConstants &c) {
    protocol.validate();
    check_settings(settings);
    c.validate();
    const std::size_t n = protocol.plds.size();
    if (control.size() != n) {
        throw InputError("expected " + std::to_string(n) + " control samples, got " + std::to_string(control.size()));
    }
    FitResult out;
    if (!all_finite(control)) {
        out.estimates = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
        out.residual_norm = std::numeric_limits<double>::infinity();
        return out;
    }
    const auto sched = protocol.schedule();
    const Eigen::Map<const Eigen::VectorXd> y(control.data(), static_cast<Eigen::Index>(n));
    std::vector<double> full(sched.size());

    // Unit-M0 control signal for a given T1; the model is linear in M0.
    auto shape = [&](double t1, Eigen::VectorXd &s) {
        HemodynamicParams p{nominal.f, nominal.cbva, nominal.bat, nominal.mtr, t1, protocol.flip};
        ModelConstants cc = c;
        cc.m0_tis = 1.0;
        simulate_into(p, cc, sched, full);
        s.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            s(static_cast<Eigen::Index>(i)) = full[2 * i + 1];
        }
    };
    const Residual residual = [&](const Eigen::VectorXd &x, Eigen::VectorXd &r) {
        shape(x(0), r);
        r = x(1) * r - y;
    };

    const double ymax = y.cwiseAbs().maxCoeff();
    const double m0_typ = std::max(ymax, 1e-12);
    Eigen::VectorXd lo(2), hi(2), typ(2);
    lo << settings.t1_bounds.min, 1e-9 * m0_typ;
    hi << settings.t1_bounds.max, 1e3 * m0_typ;
    typ << settings.t1_bounds.width(), m0_typ;

    Solution best;
    best.cost = std::numeric_limits<double>::infinity();
    bool best_ok = false;
    for (const auto &u : unit_starts(settings.starts, 1, derive_seed(settings.seed, 1))) {
        Eigen::VectorXd x0(2), s;
        x0(0) = settings.t1_bounds.min + u[0] * settings.t1_bounds.width();
        shape(x0(0), s);
        const double ss = s.squaredNorm();
        x0(1) = std::clamp(ss > 0.0 ? s.dot(y) / ss : m0_typ, lo(1), hi(1));
        Eigen::VectorXd r0;
        residual(x0, r0);
        out.start_residuals.push_back(std::sqrt(sum_sq(r0)));
        auto sol = solve_bounded(residual, x0, lo, hi, typ, settings.max_iterations);
        if (sol.cost < best.cost) {
            best = sol;
            best_ok = sol.stationary;
        }
    }
    out.estimates = {best.x(0), best.x(1)};
    out.residual_norm = std::sqrt(best.cost);
    out.converged = best_ok && std::isfinite(best.cost) && !all_zero(control) && !pinned(best.x, lo, hi, typ);
    return out;
}

FitResult fit_stage2(std::span<const double> diff, double t1, double m0, const MultiPLDProtocol &protocol,
                     const FitNominals &nominal, const FitSettings &settings, const ModelConstants &c) {
    protocol.validate();
    check_settings(settings);
    c.validate();
    const std::size_t n = protocol.plds.size();
    if (diff.size() != n) {
        throw InputError("expected " + std::to_string(n) + " difference samples, got " + std::to_string(diff.size()));
    }
    FitResult out;
    if (!all_finite(diff) || !(t1 > 0.0) || !std::isfinite(m0)) {
        out.estimates.assign(3, std::numeric_limits<double>::quiet_NaN());
        out.residual_norm = std::numeric_limits<double>::infinity();
        return out;
    }
    const auto sched = protocol.schedule();
    const Eigen::Map<const Eigen::VectorXd> y(diff.data(), static_cast<Eigen::Index>(n));
    std::vector<double> full(sched.size());
    ModelConstants cc = c;
    cc.m0_tis = m0;

    const Residual residual = [&](const Eigen::VectorXd &x, Eigen::VectorXd &r) {
        HemodynamicParams p{x(0), x(1), x(2), nominal.mtr, t1, protocol.flip};
        simulate_into(p, cc, sched, full);
        r.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            r(static_cast<Eigen::Index>(i)) = full[2 * i + 1] - full[2 * i] - y(static_cast<Eigen::Index>(i));
        }
    };

    const auto &b = settings.bounds;
    Eigen::VectorXd lo(3), hi(3), typ(3);
    lo << b[Param::Perfusion].min, b[Param::Cbva].min, b[Param::Bat].min;
    hi << b[Param::Perfusion].max, b[Param::Cbva].max, b[Param::Bat].max;
    typ = hi - lo;

    Solution best;
    best.cost = std::numeric_limits<double>::infinity();
    bool best_ok = false;
    for (const auto &u : unit_starts(settings.starts, 3, derive_seed(settings.seed, 2))) {
        Eigen::VectorXd x0(3);
        for (Eigen::Index j = 0; j < 3; ++j) {
            x0(j) = lo(j) + u[static_cast<std::size_t>(j)] * typ(j);
        }
        Eigen::VectorXd r0;
        residual(x0, r0);
        out.start_residuals.push_back(std::sqrt(sum_sq(r0)));
        auto sol = solve_bounded(residual, x0, lo, hi, typ, settings.max_iterations);
        if (sol.cost < best.cost) {
            best = sol;
            best_ok = sol.stationary;
        }
    }
    // The arterial term switches whenever bat crosses a delay, so the cost is
    // only piecewise smooth in bat. Refine within every inter-delay segment.
    std::vector<double> edges{lo(2)};
    for (double pld : protocol.plds) {
        if (pld > lo(2) && pld < hi(2)) {
            edges.push_back(pld);
        }
    }
    edges.push_back(hi(2));
    for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
        Eigen::VectorXd slo = lo, shi = hi;
        slo(2) = s == 0 ? edges[s] : edges[s] + 1e-9;
        shi(2) = edges[s + 1];
        if (!(slo(2) < shi(2))) {
            continue;
        }
        Eigen::VectorXd x0 = best.x;
        x0(2) = 0.5 * (slo(2) + shi(2));
        auto sol = solve_bounded(residual, x0, slo, shi, typ, settings.max_iterations);
        if (sol.cost < best.cost) {
            best = sol;
            best_ok = sol.stationary;
        }
    }
    out.estimates = {best.x(0), best.x(1), best.x(2)};
    out.residual_norm = std::sqrt(best.cost);
    out.converged = best_ok && std::isfinite(best.cost) && !all_zero(diff) && !pinned(best.x, lo, hi, typ);
    return out;
}

MultiPLDMaps fit_volume(std::span<const Fingerprint> volume, const std::vector<bool> &mask, std::size_t rows,
                        std::size_t cols, const MultiPLDProtocol &protocol, const FitNominals &nominal,
                        const FitSettings &settings, const ModelConstants &c) {
    const std::size_t n = rows * cols;
    if (volume.size() != n || mask.size() != n) {
        throw InputError("volume and mask must both hold rows * cols voxels");
    }
    protocol.validate();
    check_settings(settings);
    MultiPLDMaps out;
    out.rows = rows;
    out.cols = cols;
    for (auto *v : {&out.t1, &out.m0, &out.f, &out.cbva, &out.bat}) {
        v->assign(n, kNoData);
    }
    std::vector<char> ok(n, 0);
    parallel_for(n, settings.workers, [&](std::size_t i) {
        if (!mask[i]) {
            return;
        }
        const auto &s = volume[i].samples;
        if (s.size() != 2 * protocol.plds.size()) {
            throw InputError("voxel " + std::to_string(i) + " signal length does not match the protocol");
        }
        const auto s1 = fit_stage1(control_samples(s), protocol, nominal, settings, c);
        out.t1[i] = s1.estimates[0];
        out.m0[i] = s1.estimates[1];
        const auto s2 = fit_stage2(difference_samples(s), s1.estimates[0], s1.estimates[1], protocol, nominal,
                                   settings, c);
        out.f[i] = s2.estimates[0];
        out.cbva[i] = s2.estimates[1];
        out.bat[i] = s2.estimates[2];
        ok[i] = s1.converged && s2.converged;
    });
    out.converged.assign(ok.begin(), ok.end());
    return out;
}

std::vector<Fingerprint> simulate_protocol_volume(const PhantomTruth &truth, const MultiPLDProtocol &protocol,
                                                  double noise_sigma, std::uint64_t seed, const ModelConstants &c,
                                                  unsigned workers) {
    protocol.validate();
    PhantomTruth t = truth;
    for (std::size_t i = 0; i < t.maps.mask.size(); ++i) {
        if (t.maps.mask[i]) {
            t.maps[Param::Flip].values[i] = protocol.flip;
        }
    }
    return simulate_volume(t, protocol.schedule(), noise_sigma, seed, c, workers);
}

} // namespace aslmrf
