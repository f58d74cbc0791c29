#include "aslmrf/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "aslmrf/error.hpp"
#include "aslmrf/random.hpp"

namespace aslmrf {

void ControlPoints::validate() const {
    bool any_positive = false;
    for (double d : durations) {
        if (!(std::isfinite(d) && d >= 0.0)) {
            throw InputError("control-point durations must be finite and >= 0");
        }
        any_positive = any_positive || d > 0.0;
    }
    if (!any_positive) {
        throw InputError("at least one control-point duration must be > 0");
    }
}

void DurationGrid::validate() const {
    if (values.empty()) {
        throw InputError("duration grid is empty");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(std::isfinite(values[i]) && values[i] >= 0.0)) {
            throw InputError("duration grid values must be finite and >= 0");
        }
        if (i > 0 && !(values[i] > values[i - 1])) {
            throw InputError("duration grid must be strictly ascending");
        }
    }
}

std::size_t control_index(std::size_t k, std::size_t nframes) {
    return static_cast<std::size_t>(std::lround(static_cast<double>(k) * static_cast<double>(nframes - 1) / 4.0));
}

std::vector<double> interpolate_durations(const ControlPoints &cp, std::size_t nframes) {
    if (nframes < 5) {
        throw InputError("interpolation needs at least 5 frames, got " + std::to_string(nframes));
    }
    cp.validate();
    std::vector<double> out(nframes);
    for (std::size_t seg = 0; seg < 4; ++seg) {
        const std::size_t i0 = control_index(seg, nframes);
        const std::size_t i1 = control_index(seg + 1, nframes);
        const double d0 = cp.durations[seg];
        const double d1 = cp.durations[seg + 1];
        const double span = static_cast<double>(i1 - i0);
        for (std::size_t i = i0; i <= i1; ++i) {
            const double u = static_cast<double>(i - i0) / span;
            out[i] = (1.0 - u) * d0 + u * d1;
        }
    }
    for (std::size_t k = 0; k < 5; ++k) {
        out[control_index(k, nframes)] = cp.durations[k];
    }
    return out;
}

std::vector<double> scale_to_total(std::span<const double> durations, double overhead_per_frame, double total) {
    const double sum = std::accumulate(durations.begin(), durations.end(), 0.0);
    if (!(sum > 0.0)) {
        throw InputError("durations must have a positive sum to be scaled");
    }
    const double budget = total - static_cast<double>(durations.size()) * overhead_per_frame;
    if (!(budget > 0.0)) {
        throw InputError("no labeling time left: total duration does not exceed the per-frame overhead");
    }
    const double k = budget / sum;
    std::vector<double> out(durations.begin(), durations.end());
    for (auto &d : out) {
        d *= k;
    }
    return out;
}

std::vector<PulseType> random_label_order(std::size_t nframes, std::uint64_t seed) {
    if (nframes < 3) {
        throw InputError("label order needs at least 3 frames");
    }
    const std::size_t base = nframes / 3;
    const std::size_t rem = nframes % 3;
    const std::size_t n_label = base + (rem >= 1 ? 1 : 0);
    const std::size_t n_control = base + (rem >= 2 ? 1 : 0);
    std::vector<PulseType> order;
    order.reserve(nframes);
    order.insert(order.end(), n_label, PulseType::Label);
    order.insert(order.end(), n_control, PulseType::Control);
    order.insert(order.end(), nframes - n_label - n_control, PulseType::Silence);
    Rng rng(seed);
    for (std::size_t i = nframes - 1; i > 0; --i) {
        std::swap(order[i], order[rng.below(i + 1)]);
    }
    return order;
}

ScanSchedule assemble_schedule(std::span<const double> durations, std::span<const PulseType> order,
                               const FrameTiming &timing) {
    if (durations.size() != order.size()) {
        throw InputError("duration list has " + std::to_string(durations.size()) + " entries but label order has " +
                         std::to_string(order.size()));
    }
    ScanSchedule s;
    s.frames.reserve(durations.size());
    for (std::size_t i = 0; i < durations.size(); ++i) {
        s.frames.push_back({order[i], durations[i], timing.t_delay, timing.t_aq, timing.t_adjust});
    }
    s.validate();
    return s;
}

ScanSchedule make_suboptimal_1(std::size_t nframes, double total, std::uint64_t seed,
                               const ScheduleDefaults &defaults) {
    if (nframes < 3) {
        throw InputError("suboptimal schedule needs at least 3 frames");
    }
    Rng rng(derive_seed(seed, 1));
    std::vector<double> d(nframes);
    for (auto &x : d) {
        x = rng.uniform(defaults.sub1_min_s, defaults.sub1_max_s);
    }
    const auto scaled = scale_to_total(d, defaults.timing.overhead(), total);
    const auto order = random_label_order(nframes, derive_seed(seed, 2));
    auto s = assemble_schedule(scaled, order, defaults.timing);
    s.id = "suboptimal1";
    return s;
}

ScanSchedule make_suboptimal_2(std::size_t nframes, double total, std::uint64_t seed,
                               const ScheduleDefaults &defaults) {
    if (nframes < 3) {
        throw InputError("suboptimal schedule needs at least 3 frames");
    }
    const double n = static_cast<double>(nframes);
    const double budget = total - n * defaults.timing.overhead();
    const double d_min = defaults.sub2_min_s;
    // Linear ramp d_max -> d_min whose sum fills the labeling budget.
    const double d_max = 2.0 * budget / n - d_min;
    if (!(d_max >= d_min)) {
        throw InputError("total duration too short for a decreasing schedule ending at " + std::to_string(d_min) +
                         " s");
    }
    std::vector<double> d(nframes);
    for (std::size_t i = 0; i < nframes; ++i) {
        const double u = static_cast<double>(i) / (n - 1.0);
        d[i] = d_max + (d_min - d_max) * u;
    }
    const auto scaled = scale_to_total(d, defaults.timing.overhead(), total);
    const auto order = random_label_order(nframes, derive_seed(seed, 2));
    auto s = assemble_schedule(scaled, order, defaults.timing);
    s.id = "suboptimal2";
    return s;
}

ScanSchedule schedule_from_control_points(const ControlPoints &cp, std::span<const PulseType> order,
                                          double total, const FrameTiming &timing) {
    const auto d = interpolate_durations(cp, order.size());
    const auto scaled = scale_to_total(d, timing.overhead(), total);
    return assemble_schedule(scaled, order, timing);
}

} // namespace aslmrf
