#include "aslmrf/dsp.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "aslmrf/error.hpp"

namespace aslmrf {

namespace {

using cplx = std::complex<double>;

// Coefficients of prod_k (z - roots_k), highest power first.
std::vector<cplx> poly_from_roots(const std::vector<cplx> &roots) {
    std::vector<cplx> c{1.0};
    for (const auto &r : roots) {
        std::vector<cplx> next(c.size() + 1, 0.0);
        for (std::size_t i = 0; i < c.size(); ++i) {
            next[i] += c[i];
            next[i + 1] -= c[i] * r;
        }
        c = std::move(next);
    }
    return c;
}

} // namespace

double IIRFilter::magnitude_at(double f_hz) const {
    const cplx z = std::polar(1.0, 2.0 * std::numbers::pi * f_hz / fs_hz);
    // Horner in z^-1.
    auto eval = [&](const std::vector<double> &c) {
        cplx acc = 0.0;
        const cplx zinv = 1.0 / z;
        for (auto it = c.rbegin(); it != c.rend(); ++it) {
            acc = acc * zinv + *it;
        }
        return acc;
    };
    return std::abs(eval(b) / eval(a));
}

IIRFilter design_butterworth_highpass(int order, double cutoff_hz, double fs_hz) {
    if (order < 1) {
        throw InputError("filter order must be >= 1");
    }
    if (!(fs_hz > 0.0) || !(cutoff_hz > 0.0) || !(cutoff_hz < fs_hz / 2.0)) {
        throw InputError("cutoff " + std::to_string(cutoff_hz) + " Hz must lie strictly between 0 and Nyquist (" +
                         std::to_string(fs_hz / 2.0) + " Hz)");
    }
    const int n = order;
    const double fs2 = 2.0 * fs_hz;
    const double warped = fs2 * std::tan(std::numbers::pi * cutoff_hz / fs_hz);

    // Analog low-pass prototype poles on the unit circle, left half plane.
    std::vector<cplx> poles;
    for (int k = 0; k < n; ++k) {
        const double theta = std::numbers::pi * (2.0 * k + n + 1) / (2.0 * n);
        poles.push_back(std::polar(1.0, theta));
    }
    // Low-pass -> high-pass at the warped cutoff: s -> warped / s.
    // Zeros move to the origin; gain becomes 1 / prod(-p) which is 1 for Butterworth.
    cplx prod_neg_p = 1.0;
    for (auto &p : poles) {
        prod_neg_p *= -p;
        p = warped / p;
    }
    double gain = (1.0 / prod_neg_p).real();
    std::vector<cplx> zeros(static_cast<std::size_t>(n), 0.0);

    // Bilinear transform.
    cplx num = 1.0, den = 1.0;
    std::vector<cplx> zd, pd;
    for (const auto &z : zeros) {
        num *= fs2 - z;
        zd.push_back((fs2 + z) / (fs2 - z));
    }
    for (const auto &p : poles) {
        den *= fs2 - p;
        pd.push_back((fs2 + p) / (fs2 - p));
    }
    gain *= (num / den).real();

    const auto bc = poly_from_roots(zd);
    const auto ac = poly_from_roots(pd);
    IIRFilter f;
    f.order = order;
    f.cutoff_hz = cutoff_hz;
    f.fs_hz = fs_hz;
    for (const auto &c : bc) {
        f.b.push_back(gain * c.real());
    }
    for (const auto &c : ac) {
        f.a.push_back(c.real());
    }
    return f;
}

std::vector<double> lfilter(const IIRFilter &filt, std::span<const double> x, std::span<const double> zi) {
    const std::size_t n = std::max(filt.a.size(), filt.b.size());
    std::vector<double> b(filt.b), a(filt.a);
    b.resize(n, 0.0);
    a.resize(n, 0.0);
    std::vector<double> z(n - 1, 0.0);
    for (std::size_t i = 0; i < std::min(zi.size(), z.size()); ++i) {
        z[i] = zi[i];
    }
    std::vector<double> y(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double xt = x[t];
        const double yt = b[0] * xt + (z.empty() ? 0.0 : z[0]);
        for (std::size_t k = 1; k + 1 < n; ++k) {
            z[k - 1] = b[k] * xt + z[k] - a[k] * yt;
        }
        if (n >= 2) {
            z[n - 2] = b[n - 1] * xt - a[n - 1] * yt;
        }
        y[t] = yt;
    }
    return y;
}

std::vector<double> lfilter_zi(const IIRFilter &filt) {
    const std::size_t n = std::max(filt.a.size(), filt.b.size());
    if (n < 2) {
        return {};
    }
    std::vector<double> b(filt.b), a(filt.a);
    b.resize(n, 0.0);
    a.resize(n, 0.0);
    const auto m = static_cast<Eigen::Index>(n - 1);
    // (I - A^T) zi = b[1:] - a[1:] b[0], A the companion matrix of a.
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        companion(0, j) = -a[static_cast<std::size_t>(j + 1)];
    }
    for (Eigen::Index i = 1; i < m; ++i) {
        companion(i, i - 1) = 1.0;
    }
    const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(m, m) - companion.transpose();
    Eigen::VectorXd rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        rhs(i) = b[static_cast<std::size_t>(i + 1)] - a[static_cast<std::size_t>(i + 1)] * b[0];
    }
    const Eigen::VectorXd zi = lhs.partialPivLu().solve(rhs);
    return {zi.data(), zi.data() + zi.size()};
}

std::vector<double> filtfilt(const IIRFilter &filt, std::span<const double> x) {
    const std::size_t pad = filt.pad_length();
    if (x.size() <= pad) {
        throw InputError("signal of length " + std::to_string(x.size()) + " is too short for zero-phase filtering " +
                         "(needs more than " + std::to_string(pad) + " samples)");
    }
    const std::size_t n = x.size();
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) {
        ext.push_back(2.0 * x[0] - x[i]);
    }
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) {
        ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    const auto zi = lfilter_zi(filt);
    std::vector<double> state(zi.size());
    for (std::size_t i = 0; i < zi.size(); ++i) {
        state[i] = zi[i] * ext.front();
    }
    auto fwd = lfilter(filt, ext, state);
    std::reverse(fwd.begin(), fwd.end());
    for (std::size_t i = 0; i < zi.size(); ++i) {
        state[i] = zi[i] * fwd.front();
    }
    auto bwd = lfilter(filt, fwd, state);
    std::reverse(bwd.begin(), bwd.end());
    return {bwd.begin() + static_cast<std::ptrdiff_t>(pad), bwd.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

Fingerprint apply_zero_phase(const IIRFilter &filt, const Fingerprint &x) {
    Fingerprint out;
    out.samples = filtfilt(filt, x.samples);
    out.schedule_id = x.schedule_id;
    out.normalized = x.normalized;
    out.filtered = true;
    return out;
}

} // namespace aslmrf
