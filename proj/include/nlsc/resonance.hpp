#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "nlsc/model_spectrum.hpp"
#include "nlsc/scalings.hpp"

namespace nlsc {

struct QIntegrals {
    std::vector<double> q1, q2, q3;
    double max_normalization_error = 0.0;  // max |q1 + q2 - 1|
};

QIntegrals q_integrals(const AlphaField& af);

// Fast-mode basis on a uniform grid of [0, L) fine enough for the
// oscillations at scale eps.
struct ResonanceBasis {
    double eps = 0.0;
    double delta = 0.3;
    int J = 0;           // window |j| <= J = floor(delta^2 / eps)
    int j_eps = 0;       // sorted index of the first nonnegative eigenvalue
    double L = 0.0;
    double ds = 0.0;
    int M = 0;
    // Coefficients on the resonance grid.
    Eigen::VectorXd k, alpha, fp, q1, q2, q3, weight;  // weight = 1 / (1 + 2 f' Q3 / (k alpha))
    Eigen::VectorXd all_nu;                            // full sorted spectrum
    // Window j = -J..J stored at column j + J.
    Eigen::VectorXd nu;
    Eigen::MatrixXd xi, beta, gamma, kappa, q;
    // nu w xi / (2k): differs from kappa by a factor k alpha and breaks
    // -k alpha kappa + eps gamma' = O(nu^2). Kept for comparison only.
    Eigen::MatrixXd kappa_literal;
    Eigen::MatrixXd D1, D2;  // Fourier collocation on the grid

    int count() const { return 2 * J + 1; }
};

// Fields resampled from the curve nodes; min_nodes bounds the grid from below.
ResonanceBasis resonance_eigenpairs(const ScalingFields& sf, const AlphaField& af, const QIntegrals& Q, double eps,
                                    double delta = 0.3, int min_nodes = 64);

struct CoupledResidual {
    double max_residual = 0.0;  // max over the window of the relative residual
    double C = 0.0;             // max_j residual_j / (nu_j^2 + eps)
    std::vector<double> per_j;
};

// Both lines of the (beta_j, xi_j) system.
CoupledResidual verify_coupled_system(const ResonanceBasis& b);

// Relative sizes of -eps^2 gamma'' - alpha^2 k^2 gamma and
// -k alpha kappa + eps gamma', divided by nu_j^2 (max over the window).
struct CorrectionCheck {
    double gamma_ratio = 0.0;
    double kappa_ratio = 0.0;
    double kappa_literal_ratio = 0.0;  // same check with kappa_literal
};
CorrectionCheck correction_identities(const ResonanceBasis& b);

struct Lambda0 {
    Eigen::MatrixXd form;   // symmetrized quadratic form in the b_j coordinates
    Eigen::MatrixXd mass;
    double raw_asymmetry = 0.0;
    Eigen::VectorXd eigenvalues;  // generalized, ascending
    double max_deviation = 0.0;   // max_j |eig_j - nu_j|
    double C = 0.0;               // max_j |eig_j - nu_j| / (nu_j^2 + eps)
};

Lambda0 assemble_lambda0(const ResonanceBasis& b);

// Least-squares slope of nu_j against j over |j| <= fit_half, divided by eps.
double fit_weyl_constant(const ResonanceBasis& b, int fit_half);

struct GapRow {
    double eps = 0.0;
    double min_abs = 0.0;
    bool admitted = false;
    int j_eps = 0;
    double nu0 = 0.0;             // first nonnegative eigenvalue
    double dnu0_deps = 0.0;       // finite difference to the previous row (NaN when j_eps shifts)
    double kato_lower = 0.0;      // (nu0 + inf(2 a^2 k^2 + 4 f' a k Q3)) / eps
};

struct GapScan {
    std::vector<GapRow> rows;
    std::vector<double> admissible;
};

GapScan gap_scan(const ScalingFields& sf, const AlphaField& af, const QIntegrals& Q, const std::vector<double>& eps_grid,
                 double delta, double threshold, int min_nodes = 64);

double sharp_norm(const std::vector<double>& b);

}  // namespace nlsc
