#include <benchmark/benchmark.h>

#include "aslmrf/crlb.hpp"
#include "aslmrf/dsp.hpp"
#include "aslmrf/phantom.hpp"
#include "aslmrf/random.hpp"
#include "aslmrf/regressor.hpp"
#include "aslmrf/schedules.hpp"

using namespace aslmrf;

namespace {

ScanSchedule schedule_700() {
    const auto order = random_label_order(700, 1);
    return schedule_from_control_points({{0.3, 1.5, 0.6, 2.2, 0.1}}, order, 600.0);
}

TrainedNetwork random_network(Param p, std::size_t input_dim, std::uint64_t seed) {
    TrainedNetwork net;
    net.spec = NetworkSpec::default_for(p, input_dim);
    Rng rng(seed);
    std::size_t in = input_dim;
    auto widths = net.spec.hidden;
    widths.push_back(1);
    for (std::size_t w : widths) {
        DenseLayer l;
        l.weight.resize(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(in));
        l.bias = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(w));
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) {
            l.weight.data()[i] = static_cast<float>(rng.normal() / std::sqrt(static_cast<double>(in)));
        }
        net.layers.push_back(std::move(l));
        in = w;
    }
    net.input_mean = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(input_dim));
    net.input_scale = Eigen::VectorXf::Ones(static_cast<Eigen::Index>(input_dim));
    return net;
}

} // namespace

static void BM_SimulateFingerprint(benchmark::State &state) {
    const auto sched = schedule_700();
    const HemodynamicParams p;
    for (auto _ : state) {
        benchmark::DoNotOptimize(simulate_fingerprint(p, {}, sched));
    }
}
BENCHMARK(BM_SimulateFingerprint);

static void BM_NumericalJacobian(benchmark::State &state) {
    const auto sched = schedule_700();
    const HemodynamicParams p;
    for (auto _ : state) {
        benchmark::DoNotOptimize(numerical_jacobian(p, {}, sched));
    }
}
BENCHMARK(BM_NumericalJacobian);

static void BM_DesignCost(benchmark::State &state) {
    const auto sched = schedule_700();
    const auto thetas = sample_theta_set(ParameterSpace::design_default(), 50, 3);
    CrlbSettings settings;
    settings.workers = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(design_cost(sched, thetas, {}, {}, settings));
    }
}
BENCHMARK(BM_DesignCost)->Unit(benchmark::kMillisecond);

static void BM_FiltFilt(benchmark::State &state) {
    const auto f = design_butterworth_highpass();
    Rng rng(4);
    std::vector<double> x(700);
    for (auto &v : x) {
        v = rng.normal();
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(filtfilt(f, x));
    }
}
BENCHMARK(BM_FiltFilt);

static void BM_MapInference64(benchmark::State &state) {
    const auto sched = schedule_700();
    const auto truth = make_phantom_truth(PhantomSpec{});
    const auto volume = simulate_volume(truth, sched, 0.01, 5);
    std::array<TrainedNetwork, kNumParams> nets;
    for (auto p : kAllParams) {
        nets[index(p)] = random_network(p, 700, 10 + index(p));
    }
    const auto filt = design_butterworth_highpass();
    EstimateSettings es;
    es.workers = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(estimate_maps(nets, volume, filt, es));
    }
}
BENCHMARK(BM_MapInference64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
