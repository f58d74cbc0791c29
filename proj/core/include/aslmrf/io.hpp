#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "aslmrf/crlb.hpp"
#include "aslmrf/dsp.hpp"
#include "aslmrf/maps.hpp"
#include "aslmrf/phantom.hpp"
#include "aslmrf/regressor.hpp"
#include "aslmrf/schedule.hpp"
#include "aslmrf/signal_model.hpp"

namespace aslmrf::io {

namespace fs = std::filesystem;

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
/// Milliseconds text with at least three fractional digits. parse_ms recovers
/// `seconds` exactly.
std::string format_ms(double seconds);
/// Reads milliseconds text into seconds by moving the decimal point, so the
/// output of format_ms round trips without rounding. False on malformed text.
bool parse_ms(const std::string &text, double &seconds);

struct ScheduleMeta {
    std::string generator;
    std::uint64_t seed = 0;
};

// Schedule CSV:
//   # nframes=700
//   # total_s=600
//   # generator=optimized
//   # seed=1
//   frame,pulse,t_tag_ms,t_delay_ms,t_aq_ms,t_adjust_ms
//   0,L,1234.567,55.000,32.400,50.000
void write_schedule(std::ostream &os, const ScanSchedule &sched, const ScheduleMeta &meta);
void write_schedule(const fs::path &path, const ScanSchedule &sched, const ScheduleMeta &meta);
/// Parses a schedule CSV. Throws InputError with the offending line number.
ScanSchedule read_schedule(std::istream &is, ScheduleMeta *meta = nullptr);
ScanSchedule read_schedule(const fs::path &path, ScheduleMeta *meta = nullptr);

// Raster: 16-byte header "ASLM", u16 version, u16 rows, u16 cols, 6 reserved
// bytes, then rows*cols little-endian float32 values row-major. NaN = no data.
inline constexpr std::uint16_t kRasterVersion = 1;
void write_raster(const fs::path &path, const Map2D &map);
Map2D read_raster(const fs::path &path);

// Fingerprint volume: "ASLV", u16 version, u16 rows, u16 cols, u32 frames,
// 2 reserved bytes, then rows*cols*frames little-endian float64, voxel-major.
struct Volume {
    std::size_t rows = 0, cols = 0;
    std::vector<Fingerprint> voxels;
};
void write_volume(const fs::path &path, const Volume &vol);
Volume read_volume(const fs::path &path);

// Weight file: JSON with schema_version, spec, layers (row-major weight and
// bias arrays), input standardization and training history.
inline constexpr int kWeightsSchemaVersion = 1;
std::string weights_to_json(const TrainedNetwork &net);
TrainedNetwork weights_from_json(const std::string &text);
void write_weights(const fs::path &path, const TrainedNetwork &net);
TrainedNetwork read_weights(const fs::path &path);

void write_loss_csv(const fs::path &path, const TrainingHistory &h);
/// b coefficients on the first row, a on the second.
void write_filter_csv(const fs::path &path, const IIRFilter &f);
IIRFilter read_filter_csv(const fs::path &path);

/// One row per candidate: five durations, cost, six normalized stds.
void write_candidates_csv(const fs::path &path, std::span<const CandidateRecord> candidates);

struct ComparisonRow {
    std::string schedule;
    double cost = 0.0;
    ParamVector normalized_std{};
};
void write_comparison_csv(const fs::path &path, std::span<const ComparisonRow> rows);

void write_evaluation_csv(const fs::path &path, const EvaluationReport &rep);
/// truth,estimate per row.
void write_scatter_csv(const fs::path &path, std::span<const std::pair<double, double>> points);

void write_text(const fs::path &path, const std::string &text);
std::string read_text(const fs::path &path);

} // namespace aslmrf::io
