#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "nlsc/curve.hpp"
#include "nlsc/expression.hpp"
#include "nlsc/model_spectrum.hpp"
#include "nlsc/radial.hpp"
#include "nlsc/resonance.hpp"
#include "nlsc/scalings.hpp"

namespace nlsc {

struct TubeOptions {
    double delta_bar = 0.25;
    // The cutoff starts at K|y| = max(eps^{-delta_bar}, core) and ends one unit later.
    double core = 12.0;
    double points_per_unit = 32.0;  // dz = 1 / (points_per_unit * max k)
    double margin = 0.5;            // box beyond the cutoff end, in y units
    double extra_box = 0.0;         // widens the box further (no-cutoff comparisons)
    int s_nodes = 64;               // tube s-nodes: ceil(s_nodes / eps), at least the curve's M
    int fd_order = 6;               // 2, 4 or 6
    bool cutoff = true;

    void validate() const;
};

// Tensor grid s x y^{n-1} of the scaled tube, s in [0, L/eps), y in [-Z, Z]^{n-1}.
struct TubeGrid {
    int N = 1;
    double eps = 0.0;
    double L = 0.0;  // curve length, period in sbar
    int Ns = 0;
    double ds = 0.0;  // spacing in s
    int Nz = 0;       // nodes per normal axis (odd, symmetric about 0)
    double dz = 0.0;
    double Z = 0.0;
    double zeta_eff = 0.0;
    double K_max = 0.0;
    bool cutoff = true;
    bool capped = false;  // s-grid hit the 2^16 cap
    int fd_order = 6;
    std::vector<double> sbar;
    std::vector<double> K;       // sqrt(V) on the curve
    Eigen::MatrixXd Hc, dHc;     // N x Ns curvature components and their sbar-derivatives
    std::vector<double> Vx;      // V(eps x) at every node
    double chart = 0.0;          // max eps <H, y> over the grid

    std::size_t slice() const { return slice_; }
    std::size_t size() const { return slice_ * static_cast<std::size_t>(Ns); }
    double z(int a) const { return -Z + a * dz; }
    // Normal coordinates of in-slice index q.
    void point(std::size_t q, double* y) const;
    double cutoff_value(int i, double yabs) const;
    // |y| below which the stencil never sees the cutoff transition.
    double core_radius() const;

    std::size_t slice_ = 0;
};

TubeGrid build_tube_grid(const CurveData& curve, const ScalingFields& sf, const Expression& V, double eps,
                         const TubeOptions& opts);
// Straight periodic cylinder with H = 0 and constant V; a test harness.
TubeGrid straight_tube_grid(int N, double period, double V, double eps, int Ns, double dz, double Z,
                            int fd_order = 6);

struct TubeField {
    std::vector<std::complex<double>> values;
    std::vector<double> phase;  // ftilde(sbar_i) / eps per s-node
    double seam = 0.0;          // phase gained over one period: psi(s + L/eps) = e^{-i seam} psi(s)
};

// Normal section Phi, phase correction f2 and resonance coefficients b_j.
struct AnsatzParams {
    int level = 2;
    std::vector<Eigen::VectorXd> Phi;  // frame components per curve node; empty means 0
    std::vector<double> f2;            // per curve node; empty means 0
    std::vector<double> b;             // j = -J..J; empty means 0
    double phase_shift = 0.0;          // constant added to ftilde (gauge checks)
};

struct ParamBounds {
    double Phi_H2 = 0.0, f2_H2 = 0.0, b_sharp = 0.0;
    bool ok = true;
};
// ||Phi||_{H^2} <= c1 eps, ||f2||_{H^2} <= c2, ||b||_# <= c3 eps^2.
ParamBounds check_params(const AnsatzParams& a, double L, double eps, double c1, double c2, double c3);

// Unit-variable radial building blocks shared by every cross-section
// (rho = k |z|), Richardson-combined over two nested radial grids.
struct CorrectorProfiles {
    int N = 1;
    double p = 3.0;
    RadialProfile U, dU, Utilde, P, dP;
    double c_ratio = 0.0;  // <rho U, U'> / <U', U'>
    std::vector<RadialProfile> g0, g2, g1;  // second-order sources by sector (l = 0, 2, 1)
    std::vector<RadialProfile> s0, s0q, s2, s1;  // their solutions; s0q solves g2 in l = 0
    double max_roundtrip = 0.0;
    double max_removed = 0.0;  // kernel parts removed in the second-order solves
    bool second = false;
};

// Corrector data on the curve nodes.
struct CorrectorSet {
    ScalingFields sf;
    CorrectorProfiles prof;
    std::vector<Eigen::VectorXd> Phi, dPhi;
    std::vector<double> f1p, f2, f2p;
    // w_ro = (a . yhat) P(rho); w_re = c_re Utilde(rho); w_ie = c_ie rho^2 U(rho);
    // w_io = (c_io . yhat) rho U(rho).
    std::vector<Eigen::VectorXd> a, c_io;
    std::vector<Eigen::VectorXd> bH;  // -h H / k, the U' part of the w_ro source
    std::vector<double> c_re, c_ie;
    // wro solvability: removed kernel coefficient vs the Euler residual
    double wro_removed = 0.0, wro_bound = 0.0;
    // Second order.
    std::vector<double> c_tv;                         // vtilde = c_tv Utilde(rho)
    std::vector<std::vector<double>> c0;              // [term][node]
    std::vector<std::vector<Eigen::MatrixXd>> m2;     // [term][node]
    std::vector<std::vector<Eigen::VectorXd>> v1;     // [term][node]
    bool second = false;

    int size() const { return sf.size(); }
};

// Radial grid for the corrector profiles: coarse grid, the refined grid is
// derived by halving.
CorrectorProfiles corrector_profiles(int n, double p, const RadialGrid& grid, bool second);

CorrectorSet first_correctors(const CurveData& curve, const PotentialData& pot, const ScalingFields& sf,
                              const CorrectorProfiles& prof, const std::vector<Eigen::VectorXd>& Phi);
void second_correctors(CorrectorSet& c, const CurveData& curve, const PotentialData& pot,
                       const std::vector<double>& f2);

// Pointwise right-hand sides at curve node i and normal point z (frame
// components): first order F_r (odd part, the wro source) and the second-order
// remainders R2_r, R2_i cancelled by v0.
double wro_source(const CorrectorSet& c, int i, const Eigen::VectorXd& z);
std::complex<double> second_order_source(const CorrectorSet& c, int i, const Eigen::VectorXd& z);
// Correctors at curve node i: w = w_r + i w_i and v0 = v_r + i v_i.
std::complex<double> first_corrector_value(const CorrectorSet& c, int i, const Eigen::VectorXd& z);
std::complex<double> second_corrector_value(const CorrectorSet& c, int i, const Eigen::VectorXd& z);

// Resonance part v_delta = beta Z + i xi W (needs b in the params).
struct ResonanceInput {
    const AlphaField* alpha = nullptr;
    const ResonanceBasis* basis = nullptr;
};

TubeField assemble_ansatz(const TubeGrid& grid, const CorrectorSet& corr, const AnsatzParams& params,
                          const ResonanceInput& res = {});

// S(psi) = -Lap_g psi + V(eps x) psi - |psi|^{p-1} psi with the exact Fermi
// metric of the tube; the output carries the input's phase bookkeeping.
TubeField apply_S_eps(const TubeField& field, const TubeGrid& grid, double p);
// Multiplies by e^{+i ftilde / eps}.
TubeField demodulate(const TubeField& field, const TubeGrid& grid);

enum class NormMode { Sup, L2 };

// Sup mode: max over nodes with |y| <= radius of e^{rate(sbar) |y|} |f|.
// L2 mode: root mean square over the period of the per-slice weighted sups.
double weighted_norm(const TubeField& f, const TubeGrid& grid, const std::vector<double>& rate, NormMode mode,
                     double radius);

struct OrderFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<double> deviations;
    bool monotone = true;
};
OrderFit convergence_order(const std::vector<double>& eps, const std::vector<double>& norms);

// Max over s-nodes of the normalized overlap between the odd part of
// Re(e^{i ftilde/eps} S) and d_j U(k y).
double parity_overlap(const TubeField& residual, const TubeGrid& grid, const CorrectorSet& corr);

struct ResidualRow {
    double eps = 0.0;
    int level = 0;
    double core = 0.0;   // sup-weighted norm on the core
    double full = 0.0;   // sup-weighted norm on the whole box
    double l2 = 0.0;     // L2-in-s mode on the core
    int Ns = 0, Nz = 0;
};

struct ResidualStudy {
    std::vector<ResidualRow> rows;
    std::vector<OrderFit> fits;  // per level, on the core norm
    bool level2_below_level1 = true;
    double varsigma = 0.5;
};

ResidualStudy residual_study(const CurveData& curve, const Expression& V, const CorrectorSet& corr,
                             const std::vector<double>& eps_list, const std::vector<int>& levels,
                             const TubeOptions& opts, double varsigma = 0.5, const AnsatzParams& params = {});

// Per-s-node decay rate varsigma * k for the weighted norms.
std::vector<double> weight_rates(const TubeGrid& grid, const CorrectorSet& corr, double varsigma);

void write_residual_csv(const ResidualStudy& s, const std::string& path);

}  // namespace nlsc
