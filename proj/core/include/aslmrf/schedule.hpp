#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace aslmrf {

enum class PulseType { Label, Control, Silence };

char pulse_code(PulseType p);          // 'L', 'C', 'S'
PulseType pulse_from_code(char code); // throws InputError

/// Fixed sequence timings shared by every frame.
struct FrameTiming {
    double t_delay = 0.055;
    double t_aq = 0.0324;
    double t_adjust = 0.050;

    double overhead() const { return t_delay + t_aq + t_adjust; }
};

/// One TR of the sequence: labeling window, post-label delay, acquisition,
/// adjustment. All durations in seconds.
struct ScanFrame {
    PulseType pulse = PulseType::Control;
    double t_tag = 0.0;
    double t_delay = 0.055;
    double t_aq = 0.0324;
    double t_adjust = 0.050;

    double tr() const { return t_tag + t_delay + t_aq + t_adjust; }
    bool operator==(const ScanFrame &) const = default;
};

struct ScanSchedule {
    std::vector<ScanFrame> frames;
    std::string id; // generator name, carried into fingerprint metadata

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }

    double total_duration() const;
    /// Start time of every frame.
    std::vector<double> frame_starts() const;
    /// Acquisition instant of every frame: start of its t_aq window.
    std::vector<double> acquisition_times() const;
    std::size_t count(PulseType p) const;
    std::vector<PulseType> order() const;
    std::vector<double> tag_durations() const;

    /// Throws InputError if empty or any duration is negative / non-finite.
    void validate() const;
};

} // namespace aslmrf
