#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace nlsc {

// Trigonometric interpolant of M uniform samples of an L-periodic function.
// The Nyquist mode of an even sample count is split symmetrically so the
// interpolant is real.
class TrigSeries {
public:
    TrigSeries() = default;
    TrigSeries(const std::vector<double>& samples, double period);

    double operator()(double s) const { return eval(s, 0); }
    double eval(double s, int derivative) const;
    std::vector<double> derivative_samples(int order) const;
    // Samples on a uniform grid of `count` points (count >= M).
    std::vector<double> resample(int count, int derivative = 0) const;
    double mean() const { return coeff_.empty() ? 0.0 : coeff_[0].real(); }
    int size() const { return static_cast<int>(coeff_.size()); }
    double period() const { return period_; }

private:
    std::vector<std::complex<double>> coeff_;  // normalized DFT coefficients
    double period_ = 1.0;
};

std::vector<double> spectral_derivative(const std::vector<double>& f, double period, int order = 1);
// F(s_i) - F(0) for F' = f, exact for trigonometric polynomials (mean part
// integrates to mean * s).
std::vector<double> spectral_antiderivative(const std::vector<double>& f, double period);
double periodic_integral(const std::vector<double>& f, double period);
// Dense Fourier collocation matrices on M uniform nodes.
Eigen::MatrixXd fourier_d1(int M, double period);
Eigen::MatrixXd fourier_d2(int M, double period);

}  // namespace nlsc
