#pragma once

#include <array>
#include <string>
#include <vector>

#include "nlsc/radial.hpp"
#include "nlsc/scalings.hpp"

namespace nlsc {

// Two-component eigenfunction (u, v) in one angular sector.
struct CoupledPair {
    double value = 0.0;
    RadialProfile u, v;
};

// Lowest eigenpairs of
//   [Lr + alpha^2, mu alpha; mu alpha, Li + alpha^2]
// in sector ell, normalized to int (u^2 + v^2) = 1 over R^{n-1}.
std::vector<CoupledPair> coupled_spectrum(const RadialProfile& U, double p, double alpha, double mu,
                                          int ell, int count);
// Eigenvalues only.
std::vector<double> coupled_eigenvalues(const RadialProfile& U, double p, double alpha, double mu,
                                        int ell, int count);

struct SpectralBranch {
    std::string label;
    int ell = 0;
    double mu = 0.0;
    std::vector<double> alpha;
    std::vector<double> value;
    std::vector<RadialProfile> u, v;
    double min_overlap = 1.0;
};

struct BranchTrace {
    SpectralBranch eta;          // lowest, radial
    SpectralBranch sigma;        // l = 1 sector, from (dU, 0)
    SpectralBranch sigma_radial; // l = 0 sector, from (0, U)
    SpectralBranch tau;          // next eigenvalue above both sigma branches
    bool eta_increasing = false;
    bool ordered = false;        // eta < sigma <= tau on the grid
    bool single_zero_crossing = false;
};

BranchTrace trace_branches(const RadialProfile& U, double p, double mu, const std::vector<double>& alpha_grid);

struct EigenPairZW {
    double mu = 0.0;
    double alpha_bar = 0.0;
    double eta = 0.0;
    RadialProfile Z, W;
    RadialProfile dZ, dW;  // derivatives in alpha at alpha_bar
    double decay_rate = 0.0;
    double q1 = 0.0, q2 = 0.0, q3 = 0.0;
};

EigenPairZW find_alpha_bar(const RadialProfile& U, double p, double mu);

// Richardson-extrapolated centered differences (step h and h/2) of
// branch values in alpha.
struct BranchDerivatives {
    double d1 = 0.0;
    double d2 = 0.0;
};
BranchDerivatives eta_derivatives(const RadialProfile& U, double p, double mu, double alpha, double step = 1e-3);
// Second derivative at 0 of the branch starting from (dU, 0) (l = 1) or
// (0, U) (l = 0).
double sigma_curvature(const RadialProfile& U, double p, double mu, int ell, double step = 1e-3);
// Closed forms for the two sigma curvatures at alpha = 0, with
// mu = 2 A h^sigma / k.
std::array<double, 2> sigma_curvature_closed_form(double A, double h_hat, const Exponents& ex);

struct AlphaField {
    std::vector<double> mu;
    std::vector<EigenPairZW> zw;  // per curve node
    double max_jump = 0.0;        // between neighbouring nodes
};

AlphaField alpha_field(const RadialProfile& U, const ScalingFields& sf);

struct FrakVW {
    RadialProfile V;       // l = 1 radial part (multiplies y_j / |y|)
    RadialProfile W;       // l = 0
    double removed_V = 0.0, removed_W = 0.0;    // kernel parts taken off the rhs
    double rhs_norm_V = 0.0, rhs_norm_W = 0.0;
    double roundtrip_V = 0.0, roundtrip_W = 0.0;
};

// Second alpha-derivatives (halved) of the sigma-branch eigenfunctions.
FrakVW compute_frakVW(const RadialProfile& U, double h_hat, double A, const Exponents& ex);

// Perturbation solves for the first alpha-derivatives at alpha = 0; returns
// the relative deviation from (mu/2) y U and mu (U/(p-1) + r U'/2).
std::array<double, 2> first_derivative_identities(const RadialProfile& U, double p, double mu);

// Largest mu on the scan for which eta is increasing, crosses zero once,
// and tau stays above sigma.
double scan_mu_limit(const RadialProfile& U, double p, const std::vector<double>& mu_grid,
                     const std::vector<double>& alpha_grid);

}  // namespace nlsc
