#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aslmrf/params.hpp"
#include "aslmrf/phantom.hpp"
#include "aslmrf/schedule.hpp"
#include "aslmrf/signal_model.hpp"

namespace aslmrf {

/// Label/control pairs, one per post-labeling delay, with a common tag duration.
struct MultiPLDProtocol {
    std::vector<double> plds; // seconds, ascending
    double tag = 0.0;         // seconds
    double total = 409.0;
    FrameTiming timing;
    double flip = 90.0; // degrees, excitation used by the protocol

    /// Frames in acquisition order: Label then Control for each delay.
    ScanSchedule schedule() const;
    void validate() const;
};

/// Linearly spaced delays from pld_min to pld_max; the tag duration is solved
/// so the protocol lasts exactly `total`. Throws InputError if infeasible.
MultiPLDProtocol build_protocol(std::size_t n_plds = 40, double total = 409.0, double pld_min = 0.2,
                                double pld_max = 3.0, const FrameTiming &timing = {}, double flip = 90.0);

/// Same, for an explicit delay list.
MultiPLDProtocol protocol_from_plds(std::vector<double> plds, double total = 409.0, const FrameTiming &timing = {},
                                    double flip = 90.0);

/// Values held fixed during the fits.
struct FitNominals {
    double f = 50.0;
    double cbva = 0.01;
    double bat = 1.0;
    double mtr = 0.015;
    bool operator==(const FitNominals &) const = default;
};

struct FitSettings {
    std::size_t starts = 3;
    std::uint64_t seed = 1;
    std::size_t max_iterations = 200;
    Range t1_bounds{0.3, 3.3};
    ParameterSpace bounds = ParameterSpace::design_default(); // perfusion, cbva, bat used in stage 2
    unsigned workers = 0;
};

struct FitResult {
    std::vector<double> estimates; // stage 1: {T1, M0}; stage 2: {f, cbva, bat}
    double residual_norm = 0.0;
    bool converged = false;
    std::vector<double> start_residuals; // residual norm at each initialization
};

std::vector<double> control_samples(std::span<const double> signal);
/// control - label, one value per delay.
std::vector<double> difference_samples(std::span<const double> signal);

/// Bounded damped Gauss-Newton fit of T1 and M0 to control samples, with
/// perfusion, cbva, bat and mtr fixed at the nominals.
FitResult fit_stage1(std::span<const double> control, const MultiPLDProtocol &protocol, const FitNominals &nominal = {},
                     const FitSettings &settings = {}, const ModelConstants &c = {});

/// Fit of perfusion, cbva and bat to difference samples given stage-1 T1 and M0.
FitResult fit_stage2(std::span<const double> diff, double t1, double m0, const MultiPLDProtocol &protocol,
                     const FitNominals &nominal = {}, const FitSettings &settings = {}, const ModelConstants &c = {});

struct MultiPLDMaps {
    std::size_t rows = 0, cols = 0;
    std::vector<double> t1, m0, f, cbva, bat; // kNoData outside the mask
    std::vector<bool> converged;              // both stages converged
};

/// Fits every in-mask voxel. `volume` holds full protocol signals (label and control).
MultiPLDMaps fit_volume(std::span<const Fingerprint> volume, const std::vector<bool> &mask, std::size_t rows,
                        std::size_t cols, const MultiPLDProtocol &protocol, const FitNominals &nominal = {},
                        const FitSettings &settings = {}, const ModelConstants &c = {});

/// Phantom signals for the protocol: each voxel's truth with the flip angle
/// replaced by the protocol's excitation.
std::vector<Fingerprint> simulate_protocol_volume(const PhantomTruth &truth, const MultiPLDProtocol &protocol,
                                                  double noise_sigma, std::uint64_t seed, const ModelConstants &c = {},
                                                  unsigned workers = 0);

} // namespace aslmrf
