#pragma once

// Reference integrator for the tissue compartment, written from the model
// equations without reusing any simulator internals.

#include <algorithm>
#include <cmath>
#include <vector>

#include "aslmrf/params.hpp"
#include "aslmrf/schedule.hpp"

namespace oracle {

struct Window {
    double begin, end;
};

struct Timeline {
    std::vector<Window> tag;      // RF on (Label and Control)
    std::vector<Window> label;    // inversion applied to inflowing blood
    std::vector<double> acquire;  // excitation instants
    double total = 0.0;
};

inline Timeline timeline(const aslmrf::ScanSchedule &s) {
    Timeline t;
    double clock = 0.0;
    for (const auto &f : s.frames) {
        if (f.pulse != aslmrf::PulseType::Silence) {
            t.tag.push_back({clock, clock + f.t_tag});
        }
        if (f.pulse == aslmrf::PulseType::Label) {
            t.label.push_back({clock, clock + f.t_tag});
        }
        t.acquire.push_back(clock + f.t_tag + f.t_delay);
        clock += f.t_tag + f.t_delay + f.t_aq + f.t_adjust;
    }
    t.total = clock;
    return t;
}

inline bool inside(const std::vector<Window> &ws, double u) {
    for (const auto &w : ws) {
        if (u >= w.begin && u < w.end) {
            return true;
        }
    }
    return false;
}

/// dM/dt = (M0 - M)/T1 + f' Ma(t) - (f'/lambda) M - K(t) M  written as a(t) - b(t) M.
struct Rates {
    double a, b;
};

inline Rates rates_at(double t, const aslmrf::HemodynamicParams &p, const aslmrf::ModelConstants &c,
                      const Timeline &tl) {
    const double fp = p.f / 6000.0;
    const bool labeled = inside(tl.label, t - p.bat);
    const double ma = c.m0_tis * (1.0 - (labeled ? 2.0 * c.alpha * std::exp(-p.bat / c.t1_art) : 0.0));
    const double k = inside(tl.tag, t) ? p.mtr : 0.0;
    return {c.m0_tis / p.t1_tis + fp * ma, 1.0 / p.t1_tis + fp / c.lambda + k};
}

inline double arterial(double t, const aslmrf::HemodynamicParams &p, const aslmrf::ModelConstants &c,
                       const Timeline &tl) {
    const bool labeled = inside(tl.label, t - p.bat);
    return c.m0_tis * (1.0 - (labeled ? 2.0 * c.alpha * std::exp(-p.bat / c.t1_art) : 0.0));
}

/// Classic RK4 with step <= dt. Steps land exactly on every instant where a
/// rate changes and on every acquisition. With `closed_form`, the n identical
/// RK4 steps of a constant-rate segment are applied at once through the RK4
/// amplification factor R(z)^n, which is algebraically the same iteration.
inline std::vector<double> fingerprint(const aslmrf::HemodynamicParams &p, const aslmrf::ModelConstants &c,
                                       const aslmrf::ScanSchedule &s, double dt, bool closed_form) {
    const auto tl = timeline(s);
    std::vector<double> cuts{0.0, tl.total};
    for (const auto &w : tl.tag) {
        cuts.push_back(w.begin);
        cuts.push_back(w.end);
    }
    for (const auto &w : tl.label) {
        cuts.push_back(w.begin + p.bat);
        cuts.push_back(w.end + p.bat);
    }
    for (double t : tl.acquire) {
        cuts.push_back(t);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    const double beta = p.flip * 3.14159265358979323846 / 180.0;
    std::vector<double> out;
    out.reserve(tl.acquire.size());
    std::size_t next_acq = 0;
    double m = c.m0_tis;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double t0 = cuts[i], t1 = cuts[i + 1];
        while (next_acq < tl.acquire.size() && tl.acquire[next_acq] == t0) {
            out.push_back((p.cbva * arterial(t0, p, c, tl) + (1.0 - p.cbva) * m) * std::sin(beta));
            m *= std::cos(beta);
            ++next_acq;
        }
        if (t1 > tl.total || !(t1 > t0)) {
            continue;
        }
        const Rates r = rates_at(0.5 * (t0 + t1), p, c, tl);
        const auto n = static_cast<long>(std::ceil((t1 - t0) / dt));
        const double h = (t1 - t0) / static_cast<double>(n);
        if (closed_form) {
            const double z = -r.b * h;
            const double amp = 1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0;
            const double ss = r.a / r.b;
            m = ss + (m - ss) * std::pow(amp, static_cast<double>(n));
        } else {
            auto deriv = [&](double x) { return r.a - r.b * x; };
            for (long k = 0; k < n; ++k) {
                const double k1 = deriv(m);
                const double k2 = deriv(m + 0.5 * h * k1);
                const double k3 = deriv(m + 0.5 * h * k2);
                const double k4 = deriv(m + h * k3);
                m += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
    }
    while (next_acq < tl.acquire.size()) {
        out.push_back((p.cbva * arterial(tl.acquire[next_acq], p, c, tl) + (1.0 - p.cbva) * m) * std::sin(beta));
        m *= std::cos(beta);
        ++next_acq;
    }
    return out;
}

inline double relative_linf(const std::vector<double> &a, const std::vector<double> &b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / den;
}

} // namespace oracle
