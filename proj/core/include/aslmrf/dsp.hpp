#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "aslmrf/signal_model.hpp"

namespace aslmrf {

/// Digital IIR filter b(z)/a(z) with a[0] == 1.
struct IIRFilter {
    std::vector<double> b;
    std::vector<double> a;
    int order = 0;
    double cutoff_hz = 0.0;
    double fs_hz = 1.0;

    /// |H(e^{j 2 pi f / fs})|
    double magnitude_at(double f_hz) const;
    /// Number of edge samples reflected on each side by filtfilt.
    std::size_t pad_length() const { return 3 * std::max(a.size(), b.size()); }
};

/// Butterworth high-pass from the analog prototype via the bilinear transform
/// with a prewarped cutoff. Defaults: 4th order, 0.05 Hz, fs = 1 Hz.
IIRFilter design_butterworth_highpass(int order = 4, double cutoff_hz = 0.05, double fs_hz = 1.0);

/// Single forward pass (direct form II transposed) starting from state zi.
std::vector<double> lfilter(const IIRFilter &filt, std::span<const double> x, std::span<const double> zi);

/// Steady-state initial conditions for a unit step input.
std::vector<double> lfilter_zi(const IIRFilter &filt);

/// Forward-backward filtering with odd reflection padding of pad_length()
/// samples on each side and steady-state initial conditions. Zero phase;
/// squared magnitude response. Throws InputError if x.size() <= pad_length().
std::vector<double> filtfilt(const IIRFilter &filt, std::span<const double> x);

Fingerprint apply_zero_phase(const IIRFilter &filt, const Fingerprint &x);

} // namespace aslmrf
