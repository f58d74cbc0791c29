#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aslmrf/params.hpp"
#include "aslmrf/schedule.hpp"
#include "aslmrf/schedules.hpp"

namespace aslmrf {

using FisherMatrix = Eigen::Matrix<double, 6, 6>;
using Jacobian = Eigen::Matrix<double, Eigen::Dynamic, 6>;

/// Per-parameter weights w_i. The cost multiplies each normalized standard
/// deviation by w_i^2, so the default gives perfusion an effective factor 2.
struct DesignWeights {
    ParamVector w{std::sqrt(2.0), 1.0, 1.0, 1.0, 1.0, 1.0};
};

struct CrlbSettings {
    /// Central-difference step: h_i = max(rel_step * |theta_i|, min_step_i).
    double rel_step = 1e-4;
    ParamVector min_step{1e-3, 1e-6, 1e-5, 1e-6, 1e-5, 1e-3};
    /// Candidates whose relative-parameter Fisher matrix exceeds this condition number score +inf.
    double condition_cap = 1e12;
    unsigned workers = 0;
};

/// Central finite-difference sensitivities ds/dtheta, one column per parameter.
/// Throws InputError if a perturbed parameter set leaves the model's domain.
Jacobian numerical_jacobian(const HemodynamicParams &p, const ModelConstants &c, const ScanSchedule &sched,
                            const CrlbSettings &settings = {});

/// F = J^T J / sigma^2.
FisherMatrix fisher_matrix(const Jacobian &J, double sigma);

inline constexpr double kInfiniteCost = std::numeric_limits<double>::infinity();

/// Normalized CRLB standard deviation sqrt([F^-1]_ii) / theta_i in percent for
/// one theta; nullopt when F is too ill-conditioned to invert.
std::optional<ParamVector> normalized_std(const HemodynamicParams &p, const ModelConstants &c,
                                          const ScanSchedule &sched, const CrlbSettings &settings = {});

/// Weighted normalized-CRLB design cost, averaged over the theta set:
///   (1/|T|) sum_theta sum_i w_i^2 * 100 * sqrt([F^-1]_ii) / theta_i
/// Returns kInfiniteCost if any theta yields a near-singular F.
double design_cost(const ScanSchedule &sched, std::span<const HemodynamicParams> thetas, const DesignWeights &w,
                   const ModelConstants &c, const CrlbSettings &settings = {});

/// Per-parameter mean over the theta set of 100 * sqrt([F^-1]_ii) / theta_i.
/// Throws NumericalError if any theta yields a near-singular F.
ParamVector predicted_normalized_std(const ScanSchedule &sched, std::span<const HemodynamicParams> thetas,
                                     const ModelConstants &c, const CrlbSettings &settings = {});

enum class ThetaSampling { Uniform, LowDiscrepancy };

std::vector<HemodynamicParams> sample_theta_set(const ParameterSpace &space, std::size_t n, std::uint64_t seed,
                                                ThetaSampling mode = ThetaSampling::Uniform);

struct CandidateRecord {
    ControlPoints control;
    double cost = kInfiniteCost;
    ParamVector normalized_std{}; // NaN entries when the cost is infinite
};

struct LabelingResult {
    ControlPoints control;
    ScanSchedule schedule;
    double cost = kInfiniteCost;
    std::vector<CandidateRecord> candidates; // in lexicographic tuple order
};

/// Scores every 5-tuple drawn from the grid and returns the cheapest one.
/// Ties go to the lexicographically smallest tuple.
LabelingResult optimize_labeling(const DurationGrid &grid, std::span<const PulseType> reference_order, double total,
                                 std::span<const HemodynamicParams> thetas, const DesignWeights &w,
                                 const ModelConstants &c, const CrlbSettings &settings = {},
                                 const FrameTiming &timing = {});

struct OrderResult {
    std::vector<PulseType> order;
    double cost = kInfiniteCost;
    std::vector<double> candidate_costs; // index 0 is the incumbent order of the input schedule
};

/// Scores the schedule's own order followed by n_orders - 1 seeded random
/// orders with the same label/control/silence counts, keeping the durations.
OrderResult optimize_label_order(const ScanSchedule &sched, std::size_t n_orders,
                                 std::span<const HemodynamicParams> thetas, const DesignWeights &w,
                                 const ModelConstants &c, std::uint64_t seed, const CrlbSettings &settings = {});

/// Schedule with the same frame timings and a different pulse order.
ScanSchedule with_order(const ScanSchedule &sched, std::span<const PulseType> order);

} // namespace aslmrf
