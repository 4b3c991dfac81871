#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace nlsc {

// Uniform grid r_i = i*h on [0, r_max].
struct RadialGrid {
    double r_max = 30.0;
    int m = 4001;

    double h() const { return r_max / (m - 1); }
    double r(int i) const { return i * h(); }
    // Same interval, spacing halved (nested nodes).
    RadialGrid refined() const { return {r_max, 2 * m - 1}; }
    void validate() const;
};

// Radial part of a field on R^dim.  parity = 0 for profiles that extend evenly
// through r = 0, 1 for odd extension (angular modes with odd l).
struct RadialProfile {
    RadialGrid grid;
    std::vector<double> values;
    int dim = 1;
    int parity = 0;
    double decay_rate = std::numeric_limits<double>::quiet_NaN();

    double operator()(double r) const;
    double derivative(double r) const;
    double at(int i) const { return values[static_cast<std::size_t>(i)]; }
    void write_csv(const std::string& path) const;
};

enum class OpKind { Lr, Li };

// -Lap + 1 + shift - c U^{p-1} restricted to angular mode ell, with
// c = p (Lr) or 1 (Li).
struct SectorOperator {
    OpKind kind = OpKind::Lr;
    int ell = 0;
    double shift = 0.0;
    int dim = 1;
    double p = 3.0;
};

// Tridiagonal sector matrix K (symmetric) with cell weights W on the active
// nodes [first, last]; the operator is W^{-1} K.
struct SectorMatrix {
    int first = 0;
    int last = 0;
    std::vector<double> diag;
    std::vector<double> off;
    std::vector<double> w;
    int size() const { return last - first + 1; }
};

struct EigenPair {
    double value = 0.0;
    RadialProfile vector;
};

struct SolveOptions {
    double kernel_tol = 1e-6;
    // Error out when the kernel part exceeds this fraction of |rhs|.
    double max_kernel_fraction = 0.5;
};

struct SectorSolution {
    RadialProfile u;
    double removed_norm = 0.0;  // kernel component taken off the rhs
    double rhs_norm = 0.0;
    double roundtrip_rel = 0.0;  // |K u - rhs_projected| / |rhs_projected|
    int kernel_dim = 0;
};

struct ScaledProfile {
    double h_hat = 1.0;
    double k_hat = 1.0;
    std::function<double(double)> eval;  // |x'| -> h_hat U(k_hat |x'|)
};

double surface_area(int dim);
bool admissible_p(int n, double p);

// Weighted quadrature: sum_i W_i f_i g_i, the radial part of the integral
// over R^dim without the sphere factor.
double radial_dot(const RadialProfile& f, const RadialProfile& g);
double radial_norm(const RadialProfile& f);
// Full integral over R^dim of f(|y|) g(|y|).
double integral_product(const RadialProfile& f, const RadialProfile& g);
std::vector<double> cell_weights(const RadialGrid& g, int dim);

RadialProfile solve_ground_state(int n, double p, const RadialGrid& grid);
// Shooting only, with an adaptive integrator: U(0) to high accuracy.
double shoot_ground_state_peak(int n, double p, double tol = 1e-13);
// Sup-norm of the finite-difference form of -Lap U + U - U^p on the grid.
double ground_state_residual(const RadialProfile& U, double p);
double fit_decay_rate(const RadialProfile& U);

ScaledProfile scaled_profile(const RadialProfile& U, double f_hat, double V_hat, double p);

SectorMatrix build_sector(const SectorOperator& op, const RadialProfile& U);
// Apply the discrete sector operator; output on the full grid (excluded
// nodes are set to zero).
RadialProfile sector_apply(const SectorOperator& op, const RadialProfile& U,
                           const RadialProfile& u);
SectorSolution sector_solve(const SectorOperator& op, const RadialProfile& U,
                            const RadialProfile& rhs, const SolveOptions& opts = {});
std::vector<EigenPair> sector_spectrum(const SectorOperator& op, const RadialProfile& U,
                                       int count);

// (4 fine - coarse) / 3 on the coarse nodes; fine must be coarse.grid.refined().
RadialProfile richardson(const RadialProfile& coarse, const RadialProfile& fine);
RadialProfile make_profile(const RadialGrid& grid, int dim, int parity,
                           const std::function<double(double)>& f);
// Profile of f'(r) from a smooth profile, sixth-order central differences.
RadialProfile differentiate(const RadialProfile& f);

}  // namespace nlsc
