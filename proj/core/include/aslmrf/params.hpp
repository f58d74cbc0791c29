#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace aslmrf {

/// Index of each unknown in the six-parameter model. The order is fixed and
/// shared by Jacobian columns, weight vectors and report rows.
enum class Param : std::size_t { Perfusion = 0, Cbva, Bat, Mtr, T1, Flip };

inline constexpr std::size_t kNumParams = 6;

inline constexpr std::array<Param, kNumParams> kAllParams{Param::Perfusion, Param::Cbva, Param::Bat,
                                                         Param::Mtr,       Param::T1,   Param::Flip};

constexpr std::size_t index(Param p) { return static_cast<std::size_t>(p); }

/// Short lowercase identifier used in file names, config keys and CSV columns.
std::string_view param_name(Param p);
Param param_from_name(std::string_view name);

using ParamVector = std::array<double, kNumParams>;

/// The six unknowns of the two-compartment model.
///  - f:      perfusion, mL/100g/min
///  - cbva:   arterial blood volume fraction
///  - bat:    bolus arrival time, s
///  - mtr:    magnetization transfer rate, 1/s
///  - t1_tis: tissue T1, s
///  - flip:   excitation flip angle, degrees
struct HemodynamicParams {
    double f = 50.0;
    double cbva = 0.01;
    double bat = 1.0;
    double mtr = 0.015;
    double t1_tis = 1.4;
    double flip = 70.0;

    ParamVector to_array() const { return {f, cbva, bat, mtr, t1_tis, flip}; }
    static HemodynamicParams from_array(const ParamVector &v) { return {v[0], v[1], v[2], v[3], v[4], v[5]}; }

    double get(Param p) const { return to_array()[index(p)]; }
    void set(Param p, double value);

    bool valid() const;
    /// Throws InputError naming the first violated invariant.
    void validate() const;

    bool operator==(const HemodynamicParams &) const = default;
};

/// Fixed physical constants of the signal model.
struct ModelConstants {
    double lambda = 0.9;       // blood-brain partition coefficient
    double alpha = 0.85;       // inversion efficiency
    double t1_art = 1.65;      // arterial blood T1 at 3 T, s
    double m0_tis = 1.0;       // equilibrium tissue magnetization
    double noise_sigma = 0.01; // AWGN standard deviation

    void validate() const;
};

struct Range {
    double min = 0.0;
    double max = 1.0;

    double width() const { return max - min; }
    bool contains(double v) const { return v >= min && v <= max; }
    double midpoint() const { return 0.5 * (min + max); }
    bool operator==(const Range &) const = default;
};

/// Axis-aligned box over the six unknowns.
struct ParameterSpace {
    std::array<Range, kNumParams> ranges{};

    const Range &operator[](Param p) const { return ranges[index(p)]; }
    Range &operator[](Param p) { return ranges[index(p)]; }

    bool contains(const HemodynamicParams &p) const;
    void validate() const;

    /// Prior used for schedule design and CRLB evaluation.
    static ParameterSpace design_default();
    /// Prior used to synthesize regressor training data.
    static ParameterSpace training_default();

    bool operator==(const ParameterSpace &) const = default;
};

} // namespace aslmrf
