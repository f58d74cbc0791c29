#include "aslmrf/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "aslmrf/error.hpp"

namespace aslmrf {

char pulse_code(PulseType p) {
    switch (p) {
    case PulseType::Label: return 'L';
    case PulseType::Control: return 'C';
    case PulseType::Silence: return 'S';
    }
    return '?';
}

PulseType pulse_from_code(char code) {
    switch (code) {
    case 'L': return PulseType::Label;
    case 'C': return PulseType::Control;
    case 'S': return PulseType::Silence;
    default: throw InputError(std::string("unknown pulse code '") + code + "'");
    }
}

double ScanSchedule::total_duration() const {
    double total = 0.0;
    for (const auto &f : frames) {
        total += f.tr();
    }
    return total;
}

std::vector<double> ScanSchedule::frame_starts() const {
    std::vector<double> starts(frames.size());
    double t = 0.0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        starts[i] = t;
        t += frames[i].tr();
    }
    return starts;
}

std::vector<double> ScanSchedule::acquisition_times() const {
    auto t = frame_starts();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        t[i] += frames[i].t_tag + frames[i].t_delay;
    }
    return t;
}

std::size_t ScanSchedule::count(PulseType p) const {
    return static_cast<std::size_t>(
        std::count_if(frames.begin(), frames.end(), [p](const ScanFrame &f) { return f.pulse == p; }));
}

std::vector<PulseType> ScanSchedule::order() const {
    std::vector<PulseType> out;
    out.reserve(frames.size());
    for (const auto &f : frames) {
        out.push_back(f.pulse);
    }
    return out;
}

std::vector<double> ScanSchedule::tag_durations() const {
    std::vector<double> out;
    out.reserve(frames.size());
    for (const auto &f : frames) {
        out.push_back(f.t_tag);
    }
    return out;
}

void ScanSchedule::validate() const {
    if (frames.empty()) {
        throw InputError("schedule has no frames");
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto &f = frames[i];
        for (double d : {f.t_tag, f.t_delay, f.t_aq, f.t_adjust}) {
            if (!(std::isfinite(d) && d >= 0.0)) {
                throw InputError("frame " + std::to_string(i) + " has a negative or non-finite duration");
            }
        }
    }
}

} // namespace aslmrf
