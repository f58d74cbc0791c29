#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aslmrf/crlb.hpp"
#include "aslmrf/error.hpp"
#include "aslmrf/multipld.hpp"
#include "aslmrf/params.hpp"
#include "aslmrf/phantom.hpp"
#include "aslmrf/regressor.hpp"
#include "aslmrf/schedules.hpp"

namespace aslmrf {

/// Malformed or semantically invalid configuration.
class ConfigError : public InputError {
  public:
    using InputError::InputError;
};

struct DesignConfig {
    DurationGrid grid;
    std::size_t n_theta_search = 50;
    std::size_t n_theta_order = 75;
    std::size_t n_theta_eval = 250;
    std::size_t n_orders = 50;
    ThetaSampling sampling = ThetaSampling::Uniform;
    DesignWeights weights;
    CrlbSettings crlb;
    ParameterSpace space = ParameterSpace::design_default();
};

struct FilterConfig {
    int order = 4;
    double cutoff_hz = 0.05;
    double fs_hz = 1.0;
};

struct TrainSection {
    TrainConfig train;
    ParameterSpace space = ParameterSpace::training_default();
    FilterConfig filter;
};

struct MultiPLDConfig {
    std::size_t n_plds = 40;
    double total_s = 409.0;
    double pld_min_s = 0.2;
    double pld_max_s = 3.0;
    std::vector<double> plds_s; // overrides the linear rule when nonempty
    double flip_deg = 90.0;
    double noise_sigma = 0.01;
    FitNominals nominal;
    FitSettings fit;

    MultiPLDProtocol protocol() const;
};

/// Every tunable of a run. Seeds of the individual stages derive from `seed`.
struct RunConfig {
    std::uint64_t seed = 1;
    unsigned workers = 0;
    ModelConstants model;
    ScheduleDefaults schedule;
    DesignConfig design;
    TrainSection train;
    EstimateSettings estimate;
    PhantomSpec phantom;
    MultiPLDConfig multipld;

    void validate() const;
};

/// Parses JSON text over the defaults. Unknown keys and bad values throw
/// ConfigError; syntax errors report line and column.
RunConfig parse_config(const std::string &text);
RunConfig load_config(const std::filesystem::path &path);
/// Fully resolved configuration as pretty-printed JSON.
std::string dump_config(const RunConfig &cfg);

} // namespace aslmrf
