#pragma once

#include <Eigen/Dense>
#include <vector>

#include "nlsc/curve.hpp"

namespace nlsc {

struct Exponents {
    double sigma = 0.0;
    double theta = 0.0;
    double p = 3.0;
    int n = 2;
};

Exponents compute_exponents(int n, double p);

// Periodic fields along the curve, sampled on the arc-length nodes.
struct ScalingFields {
    Exponents ex;
    double A = 0.0;
    double A_prime = 0.0;    // nonlocal constant entering f1'
    double A1_prime = 0.0;   // nonlocal constant entering the Jacobi operator
    double L = 0.0;
    std::vector<double> h, k, fp, f, f1p;
    double phase_budget = 0.0;  // A * int h^sigma = f(L) - f(0)

    int size() const { return static_cast<int>(h.size()); }
    // Phase at arbitrary sbar, including the secular part.
    double phase(double sbar) const;
    // Sup over nodes of |k^2 - f'^2 - V| and |h^{p-1} - k^2|.
    double consistency(const PotentialData& pot) const;
};

// Largest value of 2 sigma A^2 h^{2 sigma - p + 1} / (p - 1) over the nodes;
// runs require this below 1/2.
double small_A_ratio(const ScalingFields& sf);

// Solves u = V + A^2 u^{2 sigma/(p-1)} for u = k^2 at every node.
ScalingFields compute_scalings(const CurveData& curve, const PotentialData& pot, double A,
                               const Exponents& ex);

// First phase correction from the normal section Phi (frame components).
std::vector<double> compute_f1(const ScalingFields& sf, const std::vector<Eigen::VectorXd>& Phi,
                               double A_prime, const CurveData& curve);
// Sup-norm of the divergence-form equation for f1' evaluated spectrally.
double f1_equation_residual(const ScalingFields& sf, const std::vector<double>& f1p,
                            const std::vector<Eigen::VectorXd>& Phi, const CurveData& curve);

struct EulerResidual {
    std::vector<Eigen::VectorXd> values;  // frame components per node
    double sup = 0.0;
};

EulerResidual euler_residual(const CurveData& curve, const PotentialData& pot,
                             const ScalingFields& sf);
double reduced_functional(const ScalingFields& sf);

struct JacobiMatrix {
    Eigen::MatrixXd J;           // rank*M square, index i*rank + m
    Eigen::VectorXd offset;      // affine term independent of the section
    std::vector<double> weight;  // h^theta per node
    int rank = 1;
    double ds = 0.0;
    double raw_asymmetry = 0.0;  // |J - J^T| / |J| before symmetrization
};

JacobiMatrix assemble_jacobi(const CurveData& curve, const PotentialData& pot,
                             const ScalingFields& sf);

struct PhaseOperator {
    Eigen::MatrixXd T;
    std::vector<double> weight;  // h^{-sigma}
    std::vector<double> coefficient;
    double ds = 0.0;
};

PhaseOperator assemble_T(const ScalingFields& sf);

struct WeightedEigenbasis {
    Eigen::VectorXd values;     // ascending
    Eigen::MatrixXd vectors;    // columns, int weight phi_j phi_l = delta_jl
    double orthonormality_error = 0.0;
    double min_abs = 0.0;
    double max_abs = 0.0;
    bool nondegenerate = false;  // min |lambda| > 1e-6 max |lambda|
};

// Generalized problem A x = lambda diag(weight) x; weight repeats per block
// of `block` unknowns.  count <= 0 keeps every pair.
WeightedEigenbasis weighted_eigenbasis(const Eigen::MatrixXd& A, const std::vector<double>& weight,
                                       int block, double ds, int count = 0);

struct CriticalCircle {
    double radius = 0.0;
    double euler_sup = 0.0;
    double functional = 0.0;  // reduced functional at the root
};

// Centred circle in the (x1, x2) plane on which the Euler residual of a
// radially symmetric V vanishes.  The signed residual along H is scanned on
// [r_lo, r_hi] and the first sign change is refined by a bracketing solver.
CriticalCircle critical_circle(const Expression& V, int n, double A, const Exponents& ex, double r_lo,
                               double r_hi, int M = 64, int scan = 64);

// A' such that A' * int h^sigma(A') / eps' equals A * int h^sigma(A) / eps.
double adjust_A_for_eps(const CurveData& curve, const PotentialData& pot, const Exponents& ex,
                        double A, double eps, double eps_new);

}  // namespace nlsc
