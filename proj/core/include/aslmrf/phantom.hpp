#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "aslmrf/maps.hpp"
#include "aslmrf/params.hpp"
#include "aslmrf/schedule.hpp"
#include "aslmrf/signal_model.hpp"

namespace aslmrf {

enum class Tissue : std::uint8_t { Background = 0, Gray = 1, White = 2 };

/// Circular region whose perfusion is multiplied by `multiplier`.
struct Lesion {
    double row = 0.0;
    double col = 0.0;
    double radius = 0.0;
    double multiplier = 1.0;
    bool operator==(const Lesion &) const = default;
};

struct PhantomSpec {
    std::size_t rows = 64;
    std::size_t cols = 64;
    HemodynamicParams gray{60.0, 0.012, 0.9, 0.015, 1.4, 75.0};
    HemodynamicParams white{20.0, 0.005, 1.3, 0.022, 0.9, 75.0};
    double variation = 0.10; // peak relative amplitude of the smooth multiplicative field
    std::vector<Lesion> lesions{{24.0, 40.0, 4.0, 2.0}, {8.0, 31.5, 2.5, 0.5}};
    double noise_sigma = 0.01;
    std::uint64_t seed = 1;

    /// Throws InputError on bad dimensions, non-positive multipliers or lesions leaving the brain.
    void validate() const;
    bool operator==(const PhantomSpec &) const = default;
};

struct PhantomTruth {
    ParamMaps maps;              // clamped to the design space inside the mask, kNoData outside
    std::vector<Tissue> tissue;  // row-major
    std::vector<int> lesion;     // index into PhantomSpec::lesions, -1 elsewhere
};

/// Elliptical head: a cortical gray ribbon around a white interior with two
/// deep gray nuclei. Class means times (1 + variation * smooth field), lesions
/// applied to perfusion, then clamped to the design space.
PhantomTruth make_phantom_truth(const PhantomSpec &spec);

/// One fingerprint per voxel (row-major). Background voxels hold noise only.
/// Voxel noise depends on (seed, voxel index) alone.
std::vector<Fingerprint> simulate_volume(const PhantomTruth &truth, const ScanSchedule &sched, double noise_sigma,
                                         std::uint64_t seed, const ModelConstants &c = {}, unsigned workers = 0);

struct ParamScore {
    Param param = Param::Perfusion;
    double correlation = 0.0; // Pearson, 0 when either side has zero variance
    double bias = 0.0;        // mean(estimate - truth)
    double nrmse = 0.0;       // RMSE / mean(truth)
    std::size_t n = 0;        // in-mask voxels with a finite estimate
};

struct EvaluationReport {
    std::array<ParamScore, kNumParams> scores;
    /// Per parameter: (truth, estimate) pairs over the scored voxels, row-major order.
    std::array<std::vector<std::pair<double, double>>, kNumParams> scatter;
};

/// Sample Pearson correlation; 0 if either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Scores estimates over the truth mask. Throws InputError on shape mismatch.
EvaluationReport evaluate(const ParamMaps &estimate, const ParamMaps &truth);

/// Packs per-parameter voxel vectors into maps sharing the truth's shape and mask.
ParamMaps to_maps(const std::array<std::vector<double>, kNumParams> &values, std::size_t rows, std::size_t cols,
                  std::vector<bool> mask);

struct LesionContrast {
    double truth_lesion = 0.0;
    double truth_surround = 0.0;
    double estimate_lesion = 0.0;
    double estimate_surround = 0.0;
};

/// Mean perfusion inside a lesion and in a same-tissue ring of `ring` pixels around it.
LesionContrast lesion_contrast(const ParamMaps &estimate, const PhantomTruth &truth, const PhantomSpec &spec,
                               std::size_t lesion_index, double ring = 3.0);

} // namespace aslmrf
