#include "aslmrf/params.hpp"

#include <cmath>
#include <string>

#include "aslmrf/error.hpp"

namespace aslmrf {

namespace {
constexpr std::array<std::string_view, kNumParams> kNames{"perfusion", "cbva", "bat", "mtr", "t1", "flip"};
}

std::string_view param_name(Param p) { return kNames[index(p)]; }

Param param_from_name(std::string_view name) {
    for (auto p : kAllParams) {
        if (kNames[index(p)] == name) {
            return p;
        }
    }
    throw InputError("unknown parameter name '" + std::string(name) + "'");
}

void HemodynamicParams::set(Param p, double value) {
    switch (p) {
    case Param::Perfusion: f = value; break;
    case Param::Cbva: cbva = value; break;
    case Param::Bat: bat = value; break;
    case Param::Mtr: mtr = value; break;
    case Param::T1: t1_tis = value; break;
    case Param::Flip: flip = value; break;
    }
}

bool HemodynamicParams::valid() const {
    for (double v : to_array()) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return f >= 0.0 && cbva >= 0.0 && cbva <= 1.0 && bat > 0.0 && mtr >= 0.0 && t1_tis > 0.0 && flip > 0.0 &&
           flip < 180.0;
}

void HemodynamicParams::validate() const {
    for (auto p : kAllParams) {
        if (!std::isfinite(get(p))) {
            throw InputError("parameter " + std::string(param_name(p)) + " is not finite");
        }
    }
    if (f < 0.0) throw InputError("perfusion must be >= 0, got " + std::to_string(f));
    if (cbva < 0.0 || cbva > 1.0) throw InputError("cbva must lie in [0, 1], got " + std::to_string(cbva));
    if (bat <= 0.0) throw InputError("bolus arrival time must be > 0, got " + std::to_string(bat));
    if (mtr < 0.0) throw InputError("mtr must be >= 0, got " + std::to_string(mtr));
    if (t1_tis <= 0.0) throw InputError("tissue T1 must be > 0, got " + std::to_string(t1_tis));
    if (flip <= 0.0 || flip >= 180.0) throw InputError("flip angle must lie in (0, 180), got " + std::to_string(flip));
}

void ModelConstants::validate() const {
    if (!(std::isfinite(lambda) && lambda > 0.0)) throw InputError("lambda must be > 0");
    if (!(std::isfinite(alpha) && alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in [0, 1]");
    if (!(std::isfinite(t1_art) && t1_art > 0.0)) throw InputError("t1_art must be > 0");
    if (!std::isfinite(m0_tis)) throw InputError("m0_tis must be finite");
    if (!(std::isfinite(noise_sigma) && noise_sigma >= 0.0)) throw InputError("noise_sigma must be >= 0");
}

bool ParameterSpace::contains(const HemodynamicParams &p) const {
    const auto v = p.to_array();
    for (std::size_t i = 0; i < kNumParams; ++i) {
        if (!ranges[i].contains(v[i])) {
            return false;
        }
    }
    return true;
}

void ParameterSpace::validate() const {
    for (auto p : kAllParams) {
        const auto &r = (*this)[p];
        if (!(std::isfinite(r.min) && std::isfinite(r.max) && r.min < r.max)) {
            throw InputError("parameter range for " + std::string(param_name(p)) + " must satisfy min < max");
        }
    }
}

ParameterSpace ParameterSpace::design_default() {
    ParameterSpace s;
    s[Param::Perfusion] = {12.0, 90.0};
    s[Param::Cbva] = {0.002, 0.03};
    s[Param::Bat] = {0.36, 1.7};
    s[Param::Mtr] = {0.01, 0.03};
    s[Param::T1] = {0.3, 3.3};
    s[Param::Flip] = {54.0, 112.0};
    return s;
}

ParameterSpace ParameterSpace::training_default() {
    ParameterSpace s;
    s[Param::Perfusion] = {0.0, 90.0};
    s[Param::Cbva] = {0.0, 0.015};
    s[Param::Bat] = {0.3, 3.0};
    s[Param::Mtr] = {0.0, 0.03};
    s[Param::T1] = {0.33, 3.33};
    s[Param::Flip] = {48.0, 112.0};
    return s;
}

} // namespace aslmrf
