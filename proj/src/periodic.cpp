#include "nlsc/periodic.hpp"

#include <cmath>
#include <numbers>
#include <unsupported/Eigen/FFT>

#include "nlsc/errors.hpp"

namespace nlsc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Signed wavenumber of DFT slot k.
int wavenumber(int k, int M) { return k <= M / 2 ? k : k - M; }

}  // namespace

TrigSeries::TrigSeries(const std::vector<double>& samples, double period) : period_(period) {
    if (samples.empty()) throw ValidationError("trigonometric series needs samples");
    Eigen::FFT<double> fft;
    fft.fwd(coeff_, samples);
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (auto& c : coeff_) c *= inv;
}

double TrigSeries::eval(double s, int derivative) const {
    const int M = size();
    const double w0 = kTwoPi / period_;
    double sum = derivative == 0 ? coeff_[0].real() : 0.0;
    for (int k = 1; k <= (M - 1) / 2; ++k) {
        const double kw = k * w0;
        const std::complex<double> ik(0.0, kw);
        const std::complex<double> e = std::polar(1.0, kw * s);
        std::complex<double> fac = std::pow(ik, derivative);
        // Pair k and -k: 2 Re(c_k e^{iks} (ik)^d).
        sum += 2.0 * (coeff_[k] * e * fac).real();
    }
    if (M % 2 == 0) {
        const int k = M / 2;
        const double kw = k * w0;
        // Nyquist term c cos(kw s) differentiated d times.
        const double c = coeff_[k].real();
        double v = 0.0;
        switch (derivative % 4) {
            case 0: v = std::cos(kw * s); break;
            case 1: v = -std::sin(kw * s); break;
            case 2: v = -std::cos(kw * s); break;
            default: v = std::sin(kw * s); break;
        }
        sum += c * std::pow(kw, derivative) * v;
    }
    return sum;
}

std::vector<double> TrigSeries::derivative_samples(int order) const {
    return resample(size(), order);
}

std::vector<double> TrigSeries::resample(int count, int derivative) const {
    const int M = size();
    if (count < M) throw ValidationError("resample: target count below source count");
    const double w0 = kTwoPi / period_;
    std::vector<std::complex<double>> c(static_cast<std::size_t>(count), {0.0, 0.0});
    for (int k = 0; k < M; ++k) {
        const int q = wavenumber(k, M);
        std::complex<double> v = coeff_[k];
        if (M % 2 == 0 && std::abs(q) == M / 2) {
            // Split the Nyquist mode between +q and -q.
            const double fac = std::pow(q * w0, derivative);
            const double re = coeff_[k].real() * 0.5;
            std::complex<double> plus = re * std::pow(std::complex<double>(0.0, 1.0), derivative) * fac;
            std::complex<double> minus = re * std::pow(std::complex<double>(0.0, -1.0), derivative) * fac;
            if (count == M) {
                c[k] += plus + minus;
            } else {
                c[static_cast<std::size_t>(M / 2)] += plus;
                c[static_cast<std::size_t>(count - M / 2)] += minus;
            }
            continue;
        }
        v *= std::pow(std::complex<double>(0.0, q * w0), derivative);
        const int slot = q >= 0 ? q : count + q;
        c[static_cast<std::size_t>(slot)] += v;
    }
    for (auto& v : c) v *= static_cast<double>(count);
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> out;
    fft.inv(out, c);
    std::vector<double> r(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) r[i] = out[i].real();
    return r;
}

std::vector<double> spectral_derivative(const std::vector<double>& f, double period, int order) {
    return TrigSeries(f, period).derivative_samples(order);
}

std::vector<double> spectral_antiderivative(const std::vector<double>& f, double period) {
    const int M = static_cast<int>(f.size());
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> c;
    fft.fwd(c, f);
    const double mean = c[0].real() / M;
    const double w0 = kTwoPi / period;
    std::vector<std::complex<double>> g(c.size(), {0.0, 0.0});
    for (int k = 1; k < M; ++k) {
        const int q = wavenumber(k, M);
        if (M % 2 == 0 && std::abs(q) == M / 2) continue;
        g[k] = c[k] / std::complex<double>(0.0, q * w0);
    }
    std::vector<std::complex<double>> G;
    fft.inv(G, g);
    std::vector<double> out(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i) out[i] = G[i].real() - G[0].real() + mean * period * i / M;
    return out;
}

double periodic_integral(const std::vector<double>& f, double period) {
    double s = 0.0;
    for (double v : f) s += v;
    return s * period / static_cast<double>(f.size());
}

Eigen::MatrixXd fourier_d1(int M, double period) {
    // Derivative of the trigonometric interpolant (Nyquist split), M even or odd.
    Eigen::MatrixXd D(M, M);
    for (int j = 0; j < M; ++j) {
        std::vector<double> e(static_cast<std::size_t>(M), 0.0);
        e[j] = 1.0;
        const auto d = spectral_derivative(e, period, 1);
        for (int i = 0; i < M; ++i) D(i, j) = d[i];
    }
    return D;
}

Eigen::MatrixXd fourier_d2(int M, double period) {
    Eigen::MatrixXd D(M, M);
    for (int j = 0; j < M; ++j) {
        std::vector<double> e(static_cast<std::size_t>(M), 0.0);
        e[j] = 1.0;
        const auto d = spectral_derivative(e, period, 2);
        for (int i = 0; i < M; ++i) D(i, j) = d[i];
    }
    // Exactly symmetric (circulant and even); remove rounding asymmetry.
    return 0.5 * (D + D.transpose());
}

}  // namespace nlsc
