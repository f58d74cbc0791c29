#include "aslmrf/crlb.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aslmrf/error.hpp"
#include "aslmrf/parallel.hpp"
#include "aslmrf/random.hpp"
#include "aslmrf/signal_model.hpp"

namespace aslmrf {

namespace {

// Column-wise central differences without per-call validation; sched and c are
// validated by the public entry points.
void jacobian_into(const HemodynamicParams &p, const ModelConstants &c, const ScanSchedule &sched,
                   const CrlbSettings &settings, Jacobian &J, std::vector<double> &plus, std::vector<double> &minus) {
    const std::size_t n = sched.size();
    J.resize(static_cast<Eigen::Index>(n), 6);
    plus.resize(n);
    minus.resize(n);
    const ParamVector theta = p.to_array();
    for (std::size_t i = 0; i < kNumParams; ++i) {
        const double h = std::max(settings.rel_step * std::abs(theta[i]), settings.min_step[i]);
        ParamVector tp = theta;
        ParamVector tm = theta;
        tp[i] = theta[i] + h;
        tm[i] = theta[i] - h;
        const auto pp = HemodynamicParams::from_array(tp);
        const auto pm = HemodynamicParams::from_array(tm);
        if (!pp.valid() || !pm.valid()) {
            throw InputError("finite-difference step for " + std::string(param_name(kAllParams[i])) +
                             " leaves the model domain at value " + std::to_string(theta[i]));
        }
        simulate_into(pp, c, sched, plus);
        simulate_into(pm, c, sched, minus);
        const double inv = 1.0 / (tp[i] - tm[i]);
        for (std::size_t r = 0; r < n; ++r) {
            J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = (plus[r] - minus[r]) * inv;
        }
    }
}

struct Workspace {
    Jacobian J;
    std::vector<double> plus, minus;
};

// Normalized std (percent) from F by inverting the Fisher matrix of the
// relative parameters theta_i * d/dtheta_i, which is unit-free.
std::optional<ParamVector> normalized_std_from_fisher(const FisherMatrix &F, const ParamVector &theta,
                                                      double condition_cap) {
    Eigen::Matrix<double, 6, 1> d;
    for (std::size_t i = 0; i < kNumParams; ++i) {
        d(static_cast<Eigen::Index>(i)) = theta[i];
    }
    const FisherMatrix G = d.asDiagonal() * F * d.asDiagonal();
    Eigen::SelfAdjointEigenSolver<FisherMatrix> eig(G);
    if (eig.info() != Eigen::Success) {
        return std::nullopt;
    }
    const auto &lambda = eig.eigenvalues(); // ascending
    const double lmax = lambda(5);
    const double lmin = lambda(0);
    if (!(lmax > 0.0) || !(lmin > 0.0) || lmax > condition_cap * lmin) {
        return std::nullopt;
    }
    const auto &V = eig.eigenvectors();
    const FisherMatrix Ginv = V * lambda.cwiseInverse().asDiagonal() * V.transpose();
    ParamVector out{};
    for (std::size_t i = 0; i < kNumParams; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out[i] = 100.0 * std::sqrt(std::abs(Ginv(k, k)));
    }
    return out;
}

std::optional<ParamVector> normalized_std_ws(const HemodynamicParams &p, const ModelConstants &c,
                                             const ScanSchedule &sched, const CrlbSettings &settings, Workspace &ws) {
    jacobian_into(p, c, sched, settings, ws.J, ws.plus, ws.minus);
    const FisherMatrix F = fisher_matrix(ws.J, c.noise_sigma);
    return normalized_std_from_fisher(F, p.to_array(), settings.condition_cap);
}

struct Score {
    double cost = kInfiniteCost;
    ParamVector mean_std{};
};

// Canonical accumulation shared by design_cost, predicted_normalized_std and
// the searches so that all of them report bit-identical numbers.
Score score_schedule(const ScanSchedule &sched, std::span<const HemodynamicParams> thetas, const DesignWeights &w,
                     const ModelConstants &c, const CrlbSettings &settings, Workspace &ws) {
    Score s;
    s.mean_std.fill(std::numeric_limits<double>::quiet_NaN());
    ParamVector sum{};
    for (const auto &theta : thetas) {
        const auto ns = normalized_std_ws(theta, c, sched, settings, ws);
        if (!ns) {
            return s;
        }
        for (std::size_t i = 0; i < kNumParams; ++i) {
            sum[i] += (*ns)[i];
        }
    }
    const double count = static_cast<double>(thetas.size());
    double cost = 0.0;
    for (std::size_t i = 0; i < kNumParams; ++i) {
        s.mean_std[i] = sum[i] / count;
        cost += w.w[i] * w.w[i] * s.mean_std[i];
    }
    s.cost = cost;
    return s;
}

void check_thetas(std::span<const HemodynamicParams> thetas) {
    if (thetas.empty()) {
        throw InputError("theta set is empty");
    }
    for (const auto &t : thetas) {
        t.validate();
    }
}

} // namespace

Jacobian numerical_jacobian(const HemodynamicParams &p, const ModelConstants &c, const ScanSchedule &sched,
                            const CrlbSettings &settings) {
    p.validate();
    c.validate();
    sched.validate();
    Jacobian J;
    std::vector<double> plus, minus;
    jacobian_into(p, c, sched, settings, J, plus, minus);
    return J;
}

FisherMatrix fisher_matrix(const Jacobian &J, double sigma) {
    if (!(sigma > 0.0)) {
        throw InputError("noise sigma must be > 0 to form Fisher information");
    }
    FisherMatrix F = J.transpose() * J;
    F /= sigma * sigma;
    // Exact symmetry; the product is symmetric up to rounding only.
    return 0.5 * (F + F.transpose());
}

std::optional<ParamVector> normalized_std(const HemodynamicParams &p, const ModelConstants &c,
                                          const ScanSchedule &sched, const CrlbSettings &settings) {
    p.validate();
    c.validate();
    sched.validate();
    Workspace ws;
    return normalized_std_ws(p, c, sched, settings, ws);
}

double design_cost(const ScanSchedule &sched, std::span<const HemodynamicParams> thetas, const DesignWeights &w,
                   const ModelConstants &c, const CrlbSettings &settings) {
    check_thetas(thetas);
    c.validate();
    sched.validate();
    Workspace ws;
    return score_schedule(sched, thetas, w, c, settings, ws).cost;
}

ParamVector predicted_normalized_std(const ScanSchedule &sched, std::span<const HemodynamicParams> thetas,
                                     const ModelConstants &c, const CrlbSettings &settings) {
    check_thetas(thetas);
    c.validate();
    sched.validate();
    Workspace ws;
    const auto s = score_schedule(sched, thetas, DesignWeights{}, c, settings, ws);
    if (!std::isfinite(s.cost)) {
        throw NumericalError("Fisher information is near-singular for at least one theta");
    }
    return s.mean_std;
}

std::vector<HemodynamicParams> sample_theta_set(const ParameterSpace &space, std::size_t n, std::uint64_t seed,
                                                ThetaSampling mode) {
    if (n < 1) {
        throw InputError("theta set size must be >= 1");
    }
    space.validate();
    std::vector<HemodynamicParams> out;
    out.reserve(n);
    if (mode == ThetaSampling::Uniform) {
        Rng rng(seed);
        for (std::size_t k = 0; k < n; ++k) {
            ParamVector v{};
            for (std::size_t i = 0; i < kNumParams; ++i) {
                v[i] = rng.uniform(space.ranges[i].min, space.ranges[i].max);
            }
            out.push_back(HemodynamicParams::from_array(v));
        }
        return out;
    }
    // Additive recurrence on the generalized golden ratio for d = 6, with a
    // seeded random shift; points stay strictly inside the box.
    double phi = 2.0;
    for (int it = 0; it < 64; ++it) {
        phi = std::pow(1.0 + phi, 1.0 / 7.0);
    }
    Rng rng(seed);
    ParamVector shift{};
    ParamVector alpha{};
    for (std::size_t i = 0; i < kNumParams; ++i) {
        alpha[i] = std::fmod(std::pow(1.0 / phi, static_cast<double>(i + 1)), 1.0);
        shift[i] = rng.uniform();
    }
    for (std::size_t k = 0; k < n; ++k) {
        ParamVector v{};
        for (std::size_t i = 0; i < kNumParams; ++i) {
            const double u = std::fmod(shift[i] + alpha[i] * static_cast<double>(k + 1), 1.0);
            v[i] = space.ranges[i].min + u * space.ranges[i].width();
        }
        out.push_back(HemodynamicParams::from_array(v));
    }
    return out;
}

LabelingResult optimize_labeling(const DurationGrid &grid, std::span<const PulseType> reference_order, double total,
                                 std::span<const HemodynamicParams> thetas, const DesignWeights &w,
                                 const ModelConstants &c, const CrlbSettings &settings, const FrameTiming &timing) {
    grid.validate();
    check_thetas(thetas);
    c.validate();
    const std::size_t g = grid.values.size();
    const std::size_t n_candidates = g * g * g * g * g;

    auto tuple_at = [&](std::size_t idx) {
        ControlPoints cp;
        for (int k = 4; k >= 0; --k) {
            cp.durations[static_cast<std::size_t>(k)] = grid.values[idx % g];
            idx /= g;
        }
        return cp;
    };

    std::vector<CandidateRecord> records(n_candidates);
    parallel_for(n_candidates, settings.workers, [&](std::size_t idx) {
        thread_local Workspace ws;
        CandidateRecord rec;
        rec.control = tuple_at(idx);
        rec.normalized_std.fill(std::numeric_limits<double>::quiet_NaN());
        ScanSchedule sched;
        try {
            sched = schedule_from_control_points(rec.control, reference_order, total, timing);
        } catch (const InputError &) {
            records[idx] = rec; // e.g. an all-zero tuple: no labeling time to distribute
            return;
        }
        const auto s = score_schedule(sched, thetas, w, c, settings, ws);
        rec.cost = s.cost;
        rec.normalized_std = s.mean_std;
        records[idx] = rec;
    });

    // Index order is lexicographic tuple order, so strict < keeps the smallest tuple on ties.
    std::size_t best = 0;
    for (std::size_t i = 1; i < n_candidates; ++i) {
        if (records[i].cost < records[best].cost) {
            best = i;
        }
    }
    LabelingResult result;
    result.control = records[best].control;
    result.cost = records[best].cost;
    if (std::isfinite(result.cost)) {
        result.schedule = schedule_from_control_points(result.control, reference_order, total, timing);
        result.schedule.id = "optimized";
    }
    result.candidates = std::move(records);
    return result;
}

ScanSchedule with_order(const ScanSchedule &sched, std::span<const PulseType> order) {
    if (order.size() != sched.size()) {
        throw InputError("label order length does not match the schedule");
    }
    ScanSchedule out = sched;
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.frames[i].pulse = order[i];
    }
    return out;
}

OrderResult optimize_label_order(const ScanSchedule &sched, std::size_t n_orders,
                                 std::span<const HemodynamicParams> thetas, const DesignWeights &w,
                                 const ModelConstants &c, std::uint64_t seed, const CrlbSettings &settings) {
    if (n_orders < 1) {
        throw InputError("need at least one label order to score");
    }
    sched.validate();
    check_thetas(thetas);
    c.validate();
    const auto incumbent = sched.order();
    std::vector<std::vector<PulseType>> orders(n_orders);
    orders[0] = incumbent;
    for (std::size_t j = 1; j < n_orders; ++j) {
        auto o = incumbent;
        Rng rng(derive_seed(seed, j));
        for (std::size_t i = o.size() - 1; i > 0; --i) {
            std::swap(o[i], o[rng.below(i + 1)]);
        }
        orders[j] = std::move(o);
    }
    std::vector<double> costs(n_orders, kInfiniteCost);
    parallel_for(n_orders, settings.workers, [&](std::size_t j) {
        thread_local Workspace ws;
        costs[j] = score_schedule(with_order(sched, orders[j]), thetas, w, c, settings, ws).cost;
    });
    std::size_t best = 0;
    for (std::size_t j = 1; j < n_orders; ++j) {
        if (costs[j] < costs[best]) {
            best = j;
        }
    }
    return {orders[best], costs[best], costs};
}

} // namespace aslmrf
