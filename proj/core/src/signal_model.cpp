#include "aslmrf/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aslmrf/error.hpp"
#include "aslmrf/random.hpp"

namespace aslmrf {

namespace {

constexpr double kPerfusionToPerSecond = 1.0 / 6000.0; // mL/100g/min -> 1/s at 1 g/mL

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// Walks the schedule once, advancing the tissue compartment with the exact
/// solution of dM/dt = a - b M across every interval on which a and b are
/// constant. Interval edges are tag-window edges (MT saturation on/off),
/// tag-window edges of Label frames shifted by the arrival time (arterial
/// inversion on/off) and acquisition instants.
template <typename Sink>
void integrate(const HemodynamicParams &p, const ModelConstants &c, const ScanSchedule &sched, Sink &&sink) {
    const double fs = p.f * kPerfusionToPerSecond;
    const double m0 = c.m0_tis;
    const double r1 = 1.0 / p.t1_tis;
    const double b_rf_off = r1 + fs / c.lambda;
    const double b_rf_on = b_rf_off + p.mtr;
    const double m_art_relaxed = m0;
    const double m_art_labeled = m0 * (1.0 - 2.0 * c.alpha * std::exp(-p.bat / c.t1_art));
    const double a_plain = m0 * r1 + fs * m_art_relaxed;
    const double a_labeled = m0 * r1 + fs * m_art_labeled;
    const double flip = deg2rad(p.flip);
    const double sin_flip = std::sin(flip);
    const double cos_flip = std::cos(flip);

    // Arterial inversion windows, in arrival time. Sorted because frames are sequential.
    std::vector<double> bolus_on, bolus_off;
    bolus_on.reserve(sched.size() / 2 + 1);
    bolus_off.reserve(sched.size() / 2 + 1);
    {
        double start = 0.0;
        for (const auto &fr : sched.frames) {
            if (fr.pulse == PulseType::Label && fr.t_tag > 0.0) {
                bolus_on.push_back(start + p.bat);
                bolus_off.push_back(start + fr.t_tag + p.bat);
            }
            start += fr.tr();
        }
    }
    const std::size_t n_bolus = bolus_on.size();
    std::size_t k = 0; // first bolus window that has not ended

    double m = m0;
    // Advance m from t0 to t1 with the saturation state `rf` held fixed.
    auto advance = [&](double t0, double t1, bool rf) {
        const double b = rf ? b_rf_on : b_rf_off;
        while (t0 < t1) {
            while (k < n_bolus && bolus_off[k] <= t0) {
                ++k;
            }
            const bool labeled = k < n_bolus && bolus_on[k] <= t0;
            double next = t1;
            if (k < n_bolus) {
                next = std::min(t1, labeled ? bolus_off[k] : bolus_on[k]);
            }
            const double a = labeled ? a_labeled : a_plain;
            const double ss = a / b;
            m = ss + (m - ss) * std::exp(-b * (next - t0));
            t0 = next;
        }
    };
    auto labeled_at = [&](double t) {
        while (k < n_bolus && bolus_off[k] <= t) {
            ++k;
        }
        return k < n_bolus && bolus_on[k] <= t;
    };

    double start = 0.0;
    for (std::size_t i = 0; i < sched.size(); ++i) {
        const auto &fr = sched.frames[i];
        const double tag_end = start + fr.t_tag;
        const double acq = tag_end + fr.t_delay;
        const double end = start + fr.tr();
        advance(start, tag_end, fr.pulse != PulseType::Silence);
        advance(tag_end, acq, false);
        const double m_art = labeled_at(acq) ? m_art_labeled : m_art_relaxed;
        sink(i, m_art, m, sin_flip);
        m *= cos_flip;
        advance(acq, end, false);
        start = end;
    }
}

void check_inputs(const HemodynamicParams &p, const ModelConstants &c, const ScanSchedule &sched) {
    p.validate();
    c.validate();
    sched.validate();
}

} // namespace

double arterial_magnetization(double t, const HemodynamicParams &p, const ModelConstants &c,
                              const ScanSchedule &sched) {
    const double u = t - p.bat;
    bool labeled = false;
    if (u >= 0.0) {
        double start = 0.0;
        for (const auto &fr : sched.frames) {
            if (u < start) {
                break;
            }
            if (fr.pulse == PulseType::Label && u < start + fr.t_tag) {
                labeled = true;
                break;
            }
            start += fr.tr();
        }
    }
    const double decay = labeled ? 2.0 * c.alpha * std::exp(-p.bat / c.t1_art) : 0.0;
    return c.m0_tis * (1.0 - decay);
}

void simulate_into(const HemodynamicParams &p, const ModelConstants &c, const ScanSchedule &sched,
                   std::span<double> out) {
    integrate(p, c, sched, [&](std::size_t i, double m_art, double m_tis, double sin_flip) {
        out[i] = (p.cbva * m_art + (1.0 - p.cbva) * m_tis) * sin_flip;
    });
}

Fingerprint simulate_fingerprint(const HemodynamicParams &p, const ModelConstants &c, const ScanSchedule &sched) {
    check_inputs(p, c, sched);
    Fingerprint fp;
    fp.samples.resize(sched.size());
    fp.schedule_id = sched.id;
    simulate_into(p, c, sched, fp.samples);
    return fp;
}

CompartmentTrace simulate_compartments(const HemodynamicParams &p, const ModelConstants &c,
                                       const ScanSchedule &sched) {
    check_inputs(p, c, sched);
    CompartmentTrace trace;
    trace.m_art.resize(sched.size());
    trace.m_tis.resize(sched.size());
    integrate(p, c, sched, [&](std::size_t i, double m_art, double m_tis, double) {
        trace.m_art[i] = m_art;
        trace.m_tis[i] = m_tis;
    });
    return trace;
}

Fingerprint add_noise(Fingerprint fp, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) {
        throw InputError("noise sigma must be >= 0");
    }
    if (sigma == 0.0) {
        return fp;
    }
    Rng rng(seed);
    for (auto &s : fp.samples) {
        s += sigma * rng.normal();
    }
    return fp;
}

Fingerprint normalize_first_frame(Fingerprint fp, double floor) {
    if (fp.samples.empty()) {
        throw InputError("cannot normalize an empty fingerprint");
    }
    const double first = fp.samples.front();
    if (!(std::abs(first) >= floor)) {
        throw NumericalError("first frame magnitude " + std::to_string(first) + " is below the floor; " +
                             "degenerate acquisition");
    }
    for (auto &s : fp.samples) {
        s /= first;
    }
    fp.samples.front() = 1.0;
    fp.normalized = true;
    return fp;
}

} // namespace aslmrf
