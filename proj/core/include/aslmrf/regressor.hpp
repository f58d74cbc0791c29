#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aslmrf/dsp.hpp"
#include "aslmrf/params.hpp"
#include "aslmrf/schedule.hpp"
#include "aslmrf/signal_model.hpp"

namespace aslmrf {

/// Architecture of a single-target regressor: input -> hidden ReLU layers -> linear scalar head.
struct NetworkSpec {
    Param target = Param::Perfusion;
    std::size_t input_dim = 700;
    std::vector<std::size_t> hidden;
    Range target_range;
    bool preconditioned = false; // input is high-pass filtered

    /// Layer widths and training ranges for each target.
    static NetworkSpec default_for(Param target, std::size_t input_dim = 700);
    void validate() const;
};

struct DenseLayer {
    Eigen::MatrixXf weight; // out x in
    Eigen::VectorXf bias;   // out
};

struct TrainingHistory {
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    std::size_t n_train = 0;
    std::size_t n_val = 0;
    std::vector<double> train_loss; // per epoch, MSE on range-normalized targets
    std::vector<double> val_loss;
};

struct TrainedNetwork {
    NetworkSpec spec;
    std::vector<DenseLayer> layers;
    /// Inputs are standardized as (x - input_mean) .* input_scale before the first layer.
    Eigen::VectorXf input_mean;
    Eigen::VectorXf input_scale;
    TrainingHistory history;

    /// Checks that layer shapes chain from input_dim through the hidden widths to one output.
    void validate() const;
};

struct TrainConfig {
    std::size_t n_samples = 500000;
    double noise_sigma = 0.01;
    std::uint64_t seed = 1;
    std::size_t batch_size = 512;
    std::size_t epochs = 30;
    double learning_rate = 2e-3;
    double lr_decay = 0.9; // multiplicative, per epoch
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double validation_fraction = 0.1;
    unsigned workers = 0;
    /// Optional per-epoch progress callback (epoch, train loss, validation loss).
    std::function<void(std::size_t, double, double)> on_epoch;
};

/// Synthetic training set. inputs holds one processed fingerprint per column.
struct Dataset {
    Eigen::MatrixXf inputs; // frames x samples
    std::vector<HemodynamicParams> targets;
    bool filtered = false;

    std::size_t size() const { return targets.size(); }
    std::size_t input_dim() const { return static_cast<std::size_t>(inputs.rows()); }
    std::vector<double> target_values(Param p) const;
};

/// Draws theta uniformly from the space, simulates, adds AWGN, normalizes by
/// the first frame and, when a filter is given, high-passes every fingerprint.
/// Sample i depends only on (cfg.seed, i).
Dataset synthesize_dataset(const TrainConfig &cfg, const ScanSchedule &sched, const ParameterSpace &space,
                           const IIRFilter *filt, const ModelConstants &c = {});

/// Adam on MSE of range-normalized targets. Deterministic for a given seed.
/// Throws InputError on dimension mismatch and NumericalError on divergence.
TrainedNetwork train(const NetworkSpec &spec, const Dataset &data, const TrainConfig &cfg);

/// Raw network output for already standardized inputs (one column per sample).
Eigen::RowVectorXf forward(const TrainedNetwork &net, const Eigen::MatrixXf &standardized);

/// Prediction in physical units, clipped to the target range widened by 10% on each side.
double predict(const TrainedNetwork &net, const Fingerprint &fp);
/// Batched prediction; inputs holds one preprocessed fingerprint per column.
std::vector<double> predict_batch(const TrainedNetwork &net, const Eigen::MatrixXf &inputs);

struct EstimateSettings {
    double background_floor = 0.05; // |first frame| below this marks background
    unsigned workers = 0;
};

/// Per-voxel first-frame normalization, high-pass for preconditioned
/// networks, then prediction. Background voxels get kNoData in every map.
/// Networks are indexed by Param.
std::array<std::vector<double>, kNumParams> estimate_maps(const std::array<TrainedNetwork, kNumParams> &nets,
                                                          std::span<const Fingerprint> volume, const IIRFilter &filt,
                                                          const EstimateSettings &settings = {});

} // namespace aslmrf
