#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "aslmrf/schedule.hpp"

namespace aslmrf {

/// Five labeling durations (s) anchored at equally spaced frame indices.
struct ControlPoints {
    std::array<double, 5> durations{};

    void validate() const;
    bool operator==(const ControlPoints &) const = default;
};

/// Candidate labeling durations (s) for the exhaustive search.
struct DurationGrid {
    std::vector<double> values{0.1, 0.3, 0.6, 1.0, 1.5, 2.2};

    void validate() const;
};

/// Defaults for the fixed-time generators.
struct ScheduleDefaults {
    std::size_t nframes = 700;
    double total_s = 600.0;
    FrameTiming timing{};
    double sub1_min_s = 0.05; // uniform sampling interval of suboptimal schedule 1
    double sub1_max_s = 1.5;
    double sub2_min_s = 0.05; // final (shortest) duration of suboptimal schedule 2
};

/// Frame index of control point k (0..4) for a schedule of n frames.
std::size_t control_index(std::size_t k, std::size_t nframes);

/// Piecewise-linear interpolation of the control points over nframes frames.
std::vector<double> interpolate_durations(const ControlPoints &cp, std::size_t nframes);

/// Uniformly rescales durations so that sum(durations) + n*overhead == total.
std::vector<double> scale_to_total(std::span<const double> durations, double overhead_per_frame, double total);

/// Seeded shuffle of a label/control/silence sequence with counts
/// floor(n/3) each, remainder going to Label first, then Control.
std::vector<PulseType> random_label_order(std::size_t nframes, std::uint64_t seed);

ScanSchedule assemble_schedule(std::span<const double> durations, std::span<const PulseType> order,
                               const FrameTiming &timing = {});

/// I.i.d. uniform durations rescaled to the total, with a random label order.
ScanSchedule make_suboptimal_1(std::size_t nframes, double total, std::uint64_t seed,
                               const ScheduleDefaults &defaults = {});

/// Durations decreasing linearly to sub2_min_s, rescaled to the total, with a random label order.
ScanSchedule make_suboptimal_2(std::size_t nframes, double total, std::uint64_t seed,
                               const ScheduleDefaults &defaults = {});

/// interpolate -> scale -> assemble.
ScanSchedule schedule_from_control_points(const ControlPoints &cp, std::span<const PulseType> order,
                                          double total, const FrameTiming &timing = {});

} // namespace aslmrf
