#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aslmrf/params.hpp"
#include "aslmrf/schedule.hpp"

namespace aslmrf {

/// Acquired magnitude samples, one per frame, plus how they were processed.
struct Fingerprint {
    std::vector<double> samples;
    std::string schedule_id;
    bool normalized = false;
    bool filtered = false;

    std::size_t size() const { return samples.size(); }
};

/// Magnetization of both compartments at each acquisition instant, before
/// the excitation pulse is applied.
struct CompartmentTrace {
    std::vector<double> m_art;
    std::vector<double> m_tis;
};

/// Inflowing arterial magnetization at time t. Blood labeled at time u reaches
/// the voxel at u + bat, having relaxed for bat seconds:
///   m_art(t) = m0 * (1 - 2 alpha * label(t - bat) * exp(-bat / t1_art))
/// where label(u) is 1 inside the tag window of a Label frame, else 0.
double arterial_magnetization(double t, const HemodynamicParams &p, const ModelConstants &c,
                              const ScanSchedule &sched);

/// Integrates the tissue compartment exactly (piecewise-constant coefficients
/// between events) and samples (cbva * m_art + (1 - cbva) * m_tis) * sin(flip)
/// at every acquisition, followed by m_tis *= cos(flip).
Fingerprint simulate_fingerprint(const HemodynamicParams &p, const ModelConstants &c, const ScanSchedule &sched);

/// Same integration, writing samples into `out` (size must equal sched.size()).
/// Skips validation; intended for hot loops that validated inputs once.
void simulate_into(const HemodynamicParams &p, const ModelConstants &c, const ScanSchedule &sched,
                   std::span<double> out);

CompartmentTrace simulate_compartments(const HemodynamicParams &p, const ModelConstants &c,
                                       const ScanSchedule &sched);

/// Adds i.i.d. N(0, sigma^2) to every sample. sigma == 0 returns the input unchanged.
Fingerprint add_noise(Fingerprint fp, double sigma, std::uint64_t seed);

inline constexpr double kDefaultFirstFrameFloor = 1e-9;

/// Divides every sample by the first. Throws NumericalError if |samples[0]| < floor.
Fingerprint normalize_first_frame(Fingerprint fp, double floor = kDefaultFirstFrameFloor);

} // namespace aslmrf
