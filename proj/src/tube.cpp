#include "nlsc/tube.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "nlsc/errors.hpp"
#include "nlsc/periodic.hpp"

namespace nlsc {

namespace {

constexpr int kMaxSNodes = 1 << 16;

using cplx = std::complex<double>;

// Term order of the second-order sources; the coefficient assembly in
// second_correctors and the profile construction below must agree.
enum G0 { g0_U, g0_rUp, g0_r2Upp, g0_r2U, g0_r3Up, g0_r4Upow, g0_Pr, g0_count };
enum G2 { g2_r2U, g2_rP, g2_dP, g2_rUp, g2_PP, g2_count };
enum G1 { g1_r3U, g1_P, g1_rdP, g1_rU, g1_r2Up, g1_r2UP, g1_count };

double smooth_step_down(double t) {
    if (t <= 0.0) return 1.0;
    if (t >= 1.0) return 0.0;
    const double a = std::exp(-1.0 / (1.0 - t)), b = std::exp(-1.0 / t);
    return a / (a + b);
}

std::array<double, 6> lagrange_weights(double t) {
    std::array<double, 6> w{};
    for (int a = 0; a < 6; ++a) {
        double num = 1.0, den = 1.0;
        for (int b = 0; b < 6; ++b) {
            if (b == a) continue;
            num *= t - (b - 2);
            den *= a - b;
        }
        w[a] = num / den;
    }
    return w;
}

// Shared interpolation stencil for several profiles on one radial grid.
struct Stencil {
    int i0 = 0;
    bool outside = false;
    std::array<double, 6> w{};

    Stencil(const RadialGrid& g, double rho) {
        const double h = g.h();
        if (rho > g.r_max) {
            outside = true;
            return;
        }
        i0 = std::min(static_cast<int>(std::floor(rho / h)), g.m - 4);
        w = lagrange_weights(rho / h - i0);
    }

    double operator()(const RadialProfile& f) const {
        if (outside) return 0.0;
        double s = 0.0;
        const int m = f.grid.m;
        for (int a = 0; a < 6; ++a) {
            const int i = i0 - 2 + a;
            double v;
            if (i >= m)
                v = 0.0;
            else if (i >= 0)
                v = f.values[static_cast<std::size_t>(i)];
            else
                v = f.parity == 0 ? f.values[static_cast<std::size_t>(-i)] : -f.values[static_cast<std::size_t>(-i)];
            s += w[a] * v;
        }
        return s;
    }
};

Eigen::VectorXd zero_vec(int N) { return Eigen::VectorXd::Zero(N); }

Eigen::MatrixXd sym_outer(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    return 0.5 * (u * v.transpose() + v * u.transpose());
}

std::vector<double> component(const std::vector<Eigen::VectorXd>& v, int j) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i][j];
    return out;
}

std::vector<Eigen::VectorXd> derivative_vec(const std::vector<Eigen::VectorXd>& v, double L, int N) {
    std::vector<Eigen::VectorXd> out(v.size(), zero_vec(N));
    for (int j = 0; j < N; ++j) {
        const auto d = spectral_derivative(component(v, j), L, 1);
        for (std::size_t i = 0; i < v.size(); ++i) out[i][j] = d[i];
    }
    return out;
}

std::vector<double> resample_to(const std::vector<double>& v, double L, int count) {
    return TrigSeries(v, L).resample(count);
}

std::vector<Eigen::VectorXd> resample_vec(const std::vector<Eigen::VectorXd>& v, double L, int count, int N) {
    std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(count), zero_vec(N));
    for (int j = 0; j < N; ++j) {
        const auto r = resample_to(component(v, j), L, count);
        for (int i = 0; i < count; ++i) out[i][j] = r[i];
    }
    return out;
}

std::vector<Eigen::MatrixXd> resample_mat(const std::vector<Eigen::MatrixXd>& v, double L, int count, int N) {
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(count), Eigen::MatrixXd::Zero(N, N));
    std::vector<double> c(v.size());
    for (int j = 0; j < N; ++j)
        for (int l = j; l < N; ++l) {
            for (std::size_t i = 0; i < v.size(); ++i) c[i] = v[i](j, l);
            const auto r = resample_to(c, L, count);
            for (int i = 0; i < count; ++i) {
                out[i](j, l) = r[i];
                out[i](l, j) = r[i];
            }
        }
    return out;
}

// Everything needed to evaluate the correctors on one cross-section.
struct Slice {
    double h = 0, k = 0, fp = 0;
    Eigen::VectorXd a, c_io, Phi;
    double c_re = 0, c_ie = 0, c_tv = 0;
    std::array<double, g0_count> c0{};
    std::array<Eigen::MatrixXd, g2_count> m2;
    std::array<Eigen::VectorXd, g1_count> v1;
};

Slice node_slice(const CorrectorSet& c, int i) {
    Slice s;
    s.h = c.sf.h[i];
    s.k = c.sf.k[i];
    s.fp = c.sf.fp[i];
    s.a = c.a[i];
    s.c_io = c.c_io[i];
    s.Phi = c.Phi[i];
    s.c_re = c.c_re[i];
    s.c_ie = c.c_ie[i];
    if (c.second) {
        s.c_tv = c.c_tv[i];
        for (int t = 0; t < g0_count; ++t) s.c0[t] = c.c0[t][i];
        for (int t = 0; t < g2_count; ++t) s.m2[t] = c.m2[t][i];
        for (int t = 0; t < g1_count; ++t) s.v1[t] = c.v1[t][i];
    }
    return s;
}

std::vector<Slice> tube_slices(const CorrectorSet& c, int Ns) {
    const int N = c.prof.N;
    const double L = c.sf.L;
    std::vector<Slice> out(static_cast<std::size_t>(Ns));
    const auto h = resample_to(c.sf.h, L, Ns), k = resample_to(c.sf.k, L, Ns), fp = resample_to(c.sf.fp, L, Ns);
    const auto a = resample_vec(c.a, L, Ns, N), cio = resample_vec(c.c_io, L, Ns, N),
               Phi = resample_vec(c.Phi, L, Ns, N);
    const auto cre = resample_to(c.c_re, L, Ns), cie = resample_to(c.c_ie, L, Ns);
    for (int i = 0; i < Ns; ++i) {
        Slice& s = out[i];
        s.h = h[i];
        s.k = k[i];
        s.fp = fp[i];
        s.a = a[i];
        s.c_io = cio[i];
        s.Phi = Phi[i];
        s.c_re = cre[i];
        s.c_ie = cie[i];
    }
    if (c.second) {
        const auto ctv = resample_to(c.c_tv, L, Ns);
        for (int i = 0; i < Ns; ++i) out[i].c_tv = ctv[i];
        for (int t = 0; t < g0_count; ++t) {
            const auto r = resample_to(c.c0[t], L, Ns);
            for (int i = 0; i < Ns; ++i) out[i].c0[t] = r[i];
        }
        for (int t = 0; t < g2_count; ++t) {
            const auto r = resample_mat(c.m2[t], L, Ns, N);
            for (int i = 0; i < Ns; ++i) out[i].m2[t] = r[i];
        }
        for (int t = 0; t < g1_count; ++t) {
            const auto r = resample_vec(c.v1[t], L, Ns, N);
            for (int i = 0; i < Ns; ++i) out[i].v1[t] = r[i];
        }
    }
    return out;
}

struct Polar {
    double r = 0.0;
    Eigen::VectorXd yhat;
};

Polar polar(const Eigen::VectorXd& z) {
    Polar p;
    p.r = z.norm();
    p.yhat = p.r > 0.0 ? Eigen::VectorXd(z / p.r) : Eigen::VectorXd(Eigen::VectorXd::Zero(z.size()));
    return p;
}

cplx first_value(const CorrectorProfiles& P, const Slice& s, const Polar& z) {
    const double rho = s.k * z.r;
    const Stencil st(P.U.grid, rho);
    const double U = st(P.U), Ut = st(P.Utilde), Pv = st(P.P);
    const double wr = s.c_re * Ut + s.a.dot(z.yhat) * Pv;
    const double wi = s.c_ie * rho * rho * U + s.c_io.dot(z.yhat) * rho * U;
    return {wr, wi};
}

cplx second_value(const CorrectorProfiles& P, const Slice& s, const Polar& z) {
    const int N = P.N;
    const double rho = s.k * z.r;
    const Stencil st(P.U.grid, rho);
    double vr = 0.0, vi = 0.0;
    for (int t = 0; t < g0_count; ++t) vr += s.c0[t] * st(P.s0[t]);
    for (int t = 0; t < g2_count; ++t) {
        const double tr = s.m2[t].trace() / N;
        vr += tr * st(P.s0q[t]);
        if (N >= 2) {
            const double q = z.yhat.dot(s.m2[t] * z.yhat) - tr * z.yhat.squaredNorm();
            vr += q * st(P.s2[t]);
        }
    }
    for (int t = 0; t < g1_count; ++t) vi += s.v1[t].dot(z.yhat) * st(P.s1[t]);
    const double kk = s.k * s.k;
    return {-vr / kk, -vi / kk};
}

cplx second_source(const CorrectorProfiles& P, const Slice& s, const Polar& z) {
    const double rho = s.k * z.r;
    const Stencil st(P.U.grid, rho);
    double r = 0.0, im = 0.0;
    for (int t = 0; t < g0_count; ++t) r += s.c0[t] * st(P.g0[t]);
    for (int t = 0; t < g2_count; ++t) r += z.yhat.dot(s.m2[t] * z.yhat) * st(P.g2[t]);
    for (int t = 0; t < g1_count; ++t) im += s.v1[t].dot(z.yhat) * st(P.g1[t]);
    return {r, im};
}

std::array<double, 7> d2_coeffs(int order) {
    if (order == 2) return {0, 0, 1, -2, 1, 0, 0};
    if (order == 4) return {0, -1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12, 0};
    return {1.0 / 90, -3.0 / 20, 3.0 / 2, -49.0 / 18, 3.0 / 2, -3.0 / 20, 1.0 / 90};
}

std::array<double, 7> d1_coeffs(int order) {
    if (order == 2) return {0, 0, -0.5, 0, 0.5, 0, 0};
    if (order == 4) return {0, 1.0 / 12, -2.0 / 3, 0, 2.0 / 3, -1.0 / 12, 0};
    return {-1.0 / 60, 3.0 / 20, -3.0 / 4, 0, 3.0 / 4, -3.0 / 20, 1.0 / 60};
}

// Periodic phase: mean slope times sbar plus a trigonometric remainder.
struct PhaseSeries {
    double slope = 0.0;
    TrigSeries wiggle;

    PhaseSeries() = default;
    PhaseSeries(const std::vector<double>& derivative, double L) {
        const auto F = spectral_antiderivative(derivative, L);
        const int M = static_cast<int>(F.size());
        slope = M > 0 ? (std::accumulate(derivative.begin(), derivative.end(), 0.0) / M) : 0.0;
        std::vector<double> w(F.size());
        for (int i = 0; i < M; ++i) w[i] = F[i] - slope * L * i / M;
        wiggle = TrigSeries(w, L);
    }
    double operator()(double s) const { return wiggle(s) + slope * s; }
};

double h2_norm(const std::vector<double>& f, double L) {
    const auto d1 = spectral_derivative(f, L, 1), d2 = spectral_derivative(f, L, 2);
    std::vector<double> sq(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) sq[i] = f[i] * f[i] + d1[i] * d1[i] + d2[i] * d2[i];
    return std::sqrt(periodic_integral(sq, L));
}

RadialProfile profile_from(const RadialGrid& g, int N, int parity, const std::vector<double>& v) {
    RadialProfile p;
    p.grid = g;
    p.dim = N;
    p.parity = parity;
    p.values = v;
    return p;
}

struct GridProfiles {
    RadialProfile U, dU, P;
    std::vector<RadialProfile> g0, g2, g1, s0, s0q, s2, s1;
    double rho_u_dot = 0.0, up_dot = 0.0;
    double max_roundtrip = 0.0, max_removed = 0.0;
};

GridProfiles grid_profiles(int n, double p, const RadialGrid& g, bool second) {
    const int N = n - 1;
    GridProfiles out;
    out.U = solve_ground_state(n, p, g);
    out.dU = differentiate(out.U);
    const RadialProfile d2U = differentiate(out.dU);
    const int m = g.m;
    std::vector<double> rhoU(m);
    for (int i = 0; i < m; ++i) rhoU[i] = g.r(i) * out.U.values[i];
    const RadialProfile rU = profile_from(g, N, 1, rhoU);
    // rho U is nearly parallel to the kernel direction U'; only the
    // remainder is solved here, solvability is checked per curve node.
    SolveOptions loose;
    loose.max_kernel_fraction = 1.0;
    const SectorSolution sp = sector_solve({OpKind::Lr, 1, 0.0, N, p}, out.U, rU, loose);
    out.P = sp.u;
    out.max_roundtrip = sp.roundtrip_rel;
    out.rho_u_dot = radial_dot(rU, out.dU);
    out.up_dot = radial_dot(out.dU, out.dU);
    if (!second) return out;

    const RadialProfile dP = differentiate(out.P);
    auto U = [&](int i) { return out.U.values[i]; };
    auto Up = [&](int i) { return out.dU.values[i]; };
    auto Pv = [&](int i) { return out.P.values[i]; };
    auto upow = [&](int i, double e) { return U(i) > 1e-300 ? std::pow(U(i), e) : 0.0; };
    std::vector<std::vector<double>> g0(g0_count, std::vector<double>(m)), g2(g2_count, std::vector<double>(m)),
        g1(g1_count, std::vector<double>(m));
    for (int i = 0; i < m; ++i) {
        const double r = g.r(i);
        const double P_over_r = i == 0 ? dP.values[0] : Pv(i) / r;
        g0[g0_U][i] = U(i);
        g0[g0_rUp][i] = r * Up(i);
        g0[g0_r2Upp][i] = r * r * d2U.values[i];
        g0[g0_r2U][i] = r * r * U(i);
        g0[g0_r3Up][i] = r * r * r * Up(i);
        g0[g0_r4Upow][i] = r * r * r * r * upow(i, p);
        g0[g0_Pr][i] = P_over_r;
        g2[g2_r2U][i] = r * r * U(i);
        g2[g2_rP][i] = r * Pv(i);
        g2[g2_dP][i] = i == 0 ? 0.0 : dP.values[i] - P_over_r;
        g2[g2_rUp][i] = r * Up(i);
        g2[g2_PP][i] = upow(i, p - 2) * Pv(i) * Pv(i);
        g1[g1_r3U][i] = r * r * r * U(i);
        g1[g1_P][i] = Pv(i);
        g1[g1_rdP][i] = r * dP.values[i];
        g1[g1_rU][i] = r * U(i);
        g1[g1_r2Up][i] = r * r * Up(i);
        g1[g1_r2UP][i] = r * r * upow(i, p - 1) * Pv(i);
    }
    auto solve = [&](OpKind kind, int ell, const RadialProfile& rhs) {
        const SectorSolution s = sector_solve({kind, ell, 0.0, N, p}, out.U, rhs);
        out.max_roundtrip = std::max(out.max_roundtrip, s.roundtrip_rel);
        if (s.rhs_norm > 0.0) out.max_removed = std::max(out.max_removed, s.removed_norm / s.rhs_norm);
        return s.u;
    };
    for (auto& v : g0) {
        out.g0.push_back(profile_from(g, N, 0, v));
        out.s0.push_back(solve(OpKind::Lr, 0, out.g0.back()));
    }
    for (auto& v : g2) {
        out.g2.push_back(profile_from(g, N, 0, v));
        out.s0q.push_back(solve(OpKind::Lr, 0, out.g2.back()));
        if (N >= 2) out.s2.push_back(solve(OpKind::Lr, 2, out.g2.back()));
    }
    for (auto& v : g1) {
        out.g1.push_back(profile_from(g, N, 1, v));
        out.s1.push_back(solve(OpKind::Li, 1, out.g1.back()));
    }
    return out;
}

std::vector<RadialProfile> richardson_all(const std::vector<RadialProfile>& c, const std::vector<RadialProfile>& f) {
    std::vector<RadialProfile> out;
    for (std::size_t t = 0; t < c.size(); ++t) out.push_back(richardson(c[t], f[t]));
    return out;
}

}  // namespace

void TubeOptions::validate() const {
    std::vector<std::string> bad;
    if (!(delta_bar > 0.0 && delta_bar < 1.0)) bad.push_back("delta_bar must lie in (0, 1)");
    if (!(core >= 0.0)) bad.push_back("core must be nonnegative");
    if (!(points_per_unit >= 8.0)) bad.push_back("points_per_unit must be >= 8 (spacing <= 1/(8k))");
    if (!(margin >= 0.0) || !(extra_box >= 0.0)) bad.push_back("margin and extra_box must be nonnegative");
    if (s_nodes < 4) bad.push_back("s_nodes must be >= 4");
    if (fd_order != 2 && fd_order != 4 && fd_order != 6) bad.push_back("fd_order must be 2, 4 or 6");
    if (!bad.empty()) {
        std::string msg = "tube options:";
        for (const auto& b : bad) msg += " " + b + ";";
        throw ValidationError(msg);
    }
}

void TubeGrid::point(std::size_t q, double* y) const {
    for (int a = N - 1; a >= 0; --a) {
        y[a] = z(static_cast<int>(q % static_cast<std::size_t>(Nz)));
        q /= static_cast<std::size_t>(Nz);
    }
}

double TubeGrid::cutoff_value(int i, double yabs) const {
    if (!cutoff) return 1.0;
    return smooth_step_down(K[i] * yabs - zeta_eff);
}

double TubeGrid::core_radius() const {
    const double stencil = 0.5 * fd_order * dz + 1e-12;
    if (!cutoff) return Z - stencil;
    return zeta_eff / K_max - stencil;
}

TubeGrid build_tube_grid(const CurveData& curve, const ScalingFields& sf, const Expression& V, double eps,
                         const TubeOptions& opts) {
    opts.validate();
    if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("tube: eps must lie in (0, 1)");
    if (V.dim() != curve.n) throw ValidationError("tube: potential dimension differs from the curve's");
    if (curve.n >= 3 && std::abs(curve.holonomy_angle) > 1e-8)
        throw ValidationError("tube: the normal frame has holonomy; the flat Fermi metric needs a closed parallel frame");
    if (sf.size() != curve.M) throw ValidationError("tube: scalings and curve sizes differ");
    TubeGrid g;
    g.N = curve.n - 1;
    g.eps = eps;
    g.L = curve.L;
    g.cutoff = opts.cutoff;
    g.fd_order = opts.fd_order;
    long want = static_cast<long>(std::ceil(opts.s_nodes / eps));
    want = std::max<long>(want, curve.M);
    if (want > kMaxSNodes) {
        spdlog::warn("tube: s-grid capped at {} nodes (wanted {})", kMaxSNodes, want);
        want = kMaxSNodes;
        g.capped = true;
    }
    g.Ns = static_cast<int>(want);
    g.ds = curve.L / (eps * g.Ns);
    g.sbar.resize(g.Ns);
    g.K.resize(g.Ns);
    g.Hc.resize(g.N, g.Ns);
    g.dHc.resize(g.N, g.Ns);
    std::vector<Eigen::VectorXd> X(g.Ns);
    std::vector<Eigen::MatrixXd> E(g.Ns);
    double K_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < g.Ns; ++i) {
        const double s = curve.L * i / g.Ns;
        g.sbar[i] = s;
        X[i] = curve.position(s);
        E[i] = curve.frame(s);
        const double v = V(std::span<const double>(X[i].data(), X[i].size()));
        if (!(v > 0.0)) throw ValidationError("tube: potential is not positive on the curve");
        g.K[i] = std::sqrt(v);
        K_min = std::min(K_min, g.K[i]);
        g.K_max = std::max(g.K_max, g.K[i]);
        g.Hc.col(i) = curve.curvature(s, 0);
        g.dHc.col(i) = curve.curvature(s, 1);
    }
    double k_max = 0.0;
    for (double k : sf.k) k_max = std::max(k_max, k);
    g.dz = 1.0 / (opts.points_per_unit * k_max);
    g.zeta_eff = std::max(std::pow(eps, -opts.delta_bar), opts.core);
    const double Zwant = (g.zeta_eff + 1.0) / K_min + opts.margin + opts.extra_box;
    const int half = static_cast<int>(std::ceil(Zwant / g.dz));
    g.Nz = 2 * half + 1;
    g.Z = half * g.dz;
    g.slice_ = 1;
    for (int a = 0; a < g.N; ++a) g.slice_ *= static_cast<std::size_t>(g.Nz);
    if (g.size() > 400'000'000ULL) throw ValidationError("tube: grid too large; coarsen points_per_unit or s_nodes");

    for (int i = 0; i < g.Ns; ++i) g.chart = std::max(g.chart, eps * g.Z * g.Hc.col(i).lpNorm<1>());
    if (!(g.chart < 1.0))
        throw ValidationError("tube: eps * |y| * |H| reaches 1 inside the box; the Fermi chart breaks down");

    g.Vx.resize(g.size());
    std::vector<double> y(g.N);
    Eigen::VectorXd x(curve.n);
    for (int i = 0; i < g.Ns; ++i) {
        for (std::size_t q = 0; q < g.slice_; ++q) {
            g.point(q, y.data());
            x = X[i];
            for (int a = 0; a < g.N; ++a) x += eps * y[a] * E[i].col(a);
            g.Vx[static_cast<std::size_t>(i) * g.slice_ + q] = V(std::span<const double>(x.data(), x.size()));
        }
    }
    return g;
}

TubeGrid straight_tube_grid(int N, double period, double V, double eps, int Ns, double dz, double Z, int fd_order) {
    if (N < 1 || Ns < 8 || !(dz > 0.0) || !(Z > dz) || !(period > 0.0) || !(V > 0.0))
        throw ValidationError("straight tube: invalid sizes");
    TubeGrid g;
    g.N = N;
    g.eps = eps;
    g.L = period;
    g.Ns = Ns;
    g.ds = period / (eps * Ns);
    g.dz = dz;
    const int half = static_cast<int>(std::round(Z / dz));
    g.Nz = 2 * half + 1;
    g.Z = half * dz;
    g.fd_order = fd_order;
    g.cutoff = false;
    g.zeta_eff = g.Z;
    g.sbar.resize(Ns);
    for (int i = 0; i < Ns; ++i) g.sbar[i] = period * i / Ns;
    g.K.assign(Ns, std::sqrt(V));
    g.K_max = std::sqrt(V);
    g.Hc = Eigen::MatrixXd::Zero(N, Ns);
    g.dHc = Eigen::MatrixXd::Zero(N, Ns);
    g.slice_ = 1;
    for (int a = 0; a < N; ++a) g.slice_ *= static_cast<std::size_t>(g.Nz);
    g.Vx.assign(g.size(), V);
    return g;
}

ParamBounds check_params(const AnsatzParams& a, double L, double eps, double c1, double c2, double c3) {
    ParamBounds out;
    if (!a.Phi.empty()) {
        double s = 0.0;
        const int N = static_cast<int>(a.Phi[0].size());
        for (int j = 0; j < N; ++j) {
            const double n = h2_norm(component(a.Phi, j), L);
            s += n * n;
        }
        out.Phi_H2 = std::sqrt(s);
    }
    if (!a.f2.empty()) out.f2_H2 = h2_norm(a.f2, L);
    if (!a.b.empty()) out.b_sharp = sharp_norm(a.b);
    out.ok = out.Phi_H2 <= c1 * eps && out.f2_H2 <= c2 && out.b_sharp <= c3 * eps * eps;
    return out;
}

CorrectorProfiles corrector_profiles(int n, double p, const RadialGrid& grid, bool second) {
    grid.validate();
    const GridProfiles c = grid_profiles(n, p, grid, second);
    const GridProfiles f = grid_profiles(n, p, grid.refined(), second);
    CorrectorProfiles out;
    out.N = n - 1;
    out.p = p;
    out.U = richardson(c.U, f.U);
    out.dU = differentiate(out.U);
    out.P = richardson(c.P, f.P);
    out.dP = differentiate(out.P);
    out.c_ratio = (4.0 * f.rho_u_dot / f.up_dot - c.rho_u_dot / c.up_dot) / 3.0;
    out.Utilde = out.U;
    for (int i = 0; i < grid.m; ++i)
        out.Utilde.values[i] = out.U.values[i] / (p - 1) + 0.5 * grid.r(i) * out.dU.values[i];
    out.max_roundtrip = std::max(c.max_roundtrip, f.max_roundtrip);
    out.max_removed = std::max(c.max_removed, f.max_removed);
    if (second) {
        out.second = true;
        out.g0 = richardson_all(c.g0, f.g0);
        out.g2 = richardson_all(c.g2, f.g2);
        out.g1 = richardson_all(c.g1, f.g1);
        out.s0 = richardson_all(c.s0, f.s0);
        out.s0q = richardson_all(c.s0q, f.s0q);
        out.s2 = richardson_all(c.s2, f.s2);
        out.s1 = richardson_all(c.s1, f.s1);
    }
    return out;
}

CorrectorSet first_correctors(const CurveData& curve, const PotentialData& pot, const ScalingFields& sf,
                              const CorrectorProfiles& prof, const std::vector<Eigen::VectorXd>& Phi) {
    const int M = curve.M, N = curve.rank();
    if (sf.size() != M || static_cast<int>(pot.V.size()) != M)
        throw ValidationError("correctors: curve, potential and scalings sizes differ");
    if (prof.N != N) throw ValidationError("correctors: profiles built for another dimension");
    const Exponents& e = sf.ex;
    CorrectorSet c;
    c.sf = sf;
    c.prof = prof;
    c.Phi = Phi.empty() ? std::vector<Eigen::VectorXd>(M, zero_vec(N)) : Phi;
    if (static_cast<int>(c.Phi.size()) != M) throw ValidationError("correctors: Phi needs one sample per curve node");
    c.dPhi = derivative_vec(c.Phi, sf.L, N);
    c.f1p = compute_f1(sf, c.Phi, sf.A_prime, curve);
    const auto dh = spectral_derivative(sf.h, sf.L, 1);
    const EulerResidual eu = euler_residual(curve, pot, sf);
    c.a.resize(M);
    c.bH.resize(M);
    c.c_io.resize(M);
    c.c_re.resize(M);
    c.c_ie.resize(M);
    double tol = 0.0;
    for (int i = 0; i < M; ++i) {
        const double h = sf.h[i], k = sf.k[i], fp = sf.fp[i];
        const Eigen::VectorXd& H = curve.Hc[i];
        c.a[i] = -(2 * fp * fp * H + pot.gradN[i]) * h / (k * k * k);
        c.bH[i] = -h * H / k;
        const Eigen::VectorXd removed = prof.c_ratio * c.a[i] + c.bH[i];
        c.wro_removed = std::max(c.wro_removed, removed.norm());
        c.wro_bound = std::max(c.wro_bound, 2.0 * std::abs(prof.c_ratio) * h / (k * k * k) * eu.values[i].norm());
        tol = std::max(tol, 1e-6 * h * H.norm() / k);
        c.c_re[i] = ((e.p - 1) / e.theta * std::pow(h, e.p) * H.dot(c.Phi[i]) + 2 * fp * c.f1p[i] * h) / (k * k);
        c.c_ie[i] = (e.p - 1) / 4 * fp * dh[i] / (k * k);
        c.c_io[i] = -fp * h * c.dPhi[i] / k;
    }
    // The removed part equals -c_ratio h/k^3 times the Euler residual, so it
    // must be negligible against the odd source for w_ro to exist.
    if (c.wro_removed > tol)
        throw CurveNotCritical(fmt::format(
            "first corrector: kernel part of the odd source is {:.3g} (tolerance {:.3g}, Euler residual {:.3g}); "
            "the curve is not critical",
            c.wro_removed, tol, eu.sup));
    if (c.wro_removed > c.wro_bound + tol)
        throw CurveNotCritical("first corrector: kernel part of the odd source exceeds twice the Euler residual");
    return c;
}

void second_correctors(CorrectorSet& c, const CurveData& curve, const PotentialData& pot,
                       const std::vector<double>& f2) {
    if (!c.prof.second) throw ValidationError("second correctors: profiles were built without the second order");
    const ScalingFields& sf = c.sf;
    const int M = sf.size(), N = c.prof.N;
    const double L = sf.L, p = sf.ex.p;
    c.f2 = f2.empty() ? std::vector<double>(M, 0.0) : f2;
    if (static_cast<int>(c.f2.size()) != M) throw ValidationError("second correctors: f2 needs one sample per node");
    c.f2p = spectral_derivative(c.f2, L, 1);
    const auto dh = spectral_derivative(sf.h, L, 1), d2h = spectral_derivative(sf.h, L, 2);
    const auto dk = spectral_derivative(sf.k, L, 1), d2k = spectral_derivative(sf.k, L, 2);
    const auto dfp = spectral_derivative(sf.fp, L, 1);
    std::vector<double> fph(M);
    for (int i = 0; i < M; ++i) fph[i] = sf.fp[i] * dh[i];
    const auto dfph = spectral_derivative(fph, L, 1);
    const auto da = derivative_vec(c.a, L, N);
    const auto dH = derivative_vec(curve.Hc, L, N);

    c.c_tv.resize(M);
    c.c0.assign(g0_count, std::vector<double>(M));
    c.m2.assign(g2_count, std::vector<Eigen::MatrixXd>(M));
    c.v1.assign(g1_count, std::vector<Eigen::VectorXd>(M));
    for (int i = 0; i < M; ++i) {
        const double h = sf.h[i], k = sf.k[i], f1 = sf.fp[i], f2d = dfp[i];
        const double h1 = dh[i], h2 = d2h[i], k1 = dk[i], k2 = d2k[i];
        const double cie = c.c_ie[i];
        const double hp2 = std::pow(h, p - 2);
        const Eigen::VectorXd& H = curve.Hc[i];
        const Eigen::VectorXd& G = pot.gradN[i];
        const Eigen::VectorXd& a = c.a[i];
        c.c_tv[i] = 2 * f1 * c.f2p[i] * h / (k * k);

        c.c0[g0_U][i] = -h2;
        c.c0[g0_rUp][i] = -(2 * h1 * k1 + h * k2) / k;
        c.c0[g0_r2Upp][i] = -h * k1 * k1 / (k * k);
        c.c0[g0_r2U][i] = -(p - 1) / 4 * (2 * f1 * dfph[i] + f2d * f1 * h1) / (k * k);
        c.c0[g0_r3Up][i] = -(p - 1) / 2 * f1 * f1 * h1 * k1 / (k * k * k);
        c.c0[g0_r4Upow][i] = -0.5 * (p - 1) * hp2 * cie * cie;
        c.c0[g0_Pr][i] = k * H.dot(a);

        c.m2[g2_r2U][i] = 3 * f1 * f1 * h / (k * k) * H * H.transpose() + h / (2 * k * k) * pot.hessN[i];
        c.m2[g2_rP][i] = 2 * f1 * f1 / k * sym_outer(H, a) + sym_outer(G, a) / k;
        c.m2[g2_dP][i] = k * sym_outer(H, a);
        c.m2[g2_rUp][i] = h * H * H.transpose();
        c.m2[g2_PP][i] = -0.5 * p * (p - 1) * hp2 * a * a.transpose();

        c.v1[g1_r3U][i] = 2 * f1 * f1 * cie / k * H + cie / k * G;
        c.v1[g1_P][i] = f2d * a + 2 * f1 * da[i];
        c.v1[g1_rdP][i] = 2 * f1 * k1 / k * a;
        c.v1[g1_rU][i] = 2 * (f2d * h + 2 * f1 * h1) / k * H + f1 * h / k * dH[i] + (p - 1) * f1 * h1 / (2 * k) * H;
        c.v1[g1_r2Up][i] = 4 * f1 * h * k1 / (k * k) * H + (p - 1) * f1 * h1 / (4 * k) * H;
        c.v1[g1_r2UP][i] = -(p - 1) * hp2 * cie * a;
    }
    c.second = true;
}

double wro_source(const CorrectorSet& c, int i, const Eigen::VectorXd& z) {
    const Polar pz = polar(z);
    const double k = c.sf.k[i];
    const Stencil st(c.prof.U.grid, k * pz.r);
    return k * k * (c.a[i].dot(pz.yhat) * k * pz.r * st(c.prof.U) + c.bH[i].dot(pz.yhat) * st(c.prof.dU));
}

std::complex<double> first_corrector_value(const CorrectorSet& c, int i, const Eigen::VectorXd& z) {
    const Slice s = node_slice(c, i);
    return first_value(c.prof, s, polar(z));
}

std::complex<double> second_corrector_value(const CorrectorSet& c, int i, const Eigen::VectorXd& z) {
    if (!c.second) throw ValidationError("second corrector requested before second_correctors");
    const Slice s = node_slice(c, i);
    return second_value(c.prof, s, polar(z));
}

std::complex<double> second_order_source(const CorrectorSet& c, int i, const Eigen::VectorXd& z) {
    if (!c.second) throw ValidationError("second-order source requested before second_correctors");
    const Slice s = node_slice(c, i);
    return second_source(c.prof, s, polar(z));
}

namespace {

std::vector<std::size_t> axis_strides(const TubeGrid& g) {
    std::vector<std::size_t> st(static_cast<std::size_t>(g.N));
    std::size_t acc = 1;
    for (int a = g.N - 1; a >= 0; --a) {
        st[a] = acc;
        acc *= static_cast<std::size_t>(g.Nz);
    }
    return st;
}

// Normal coordinates of every in-slice node, N per node.
std::vector<double> slice_points(const TubeGrid& g) {
    std::vector<double> y(g.slice() * static_cast<std::size_t>(g.N));
    for (std::size_t q = 0; q < g.slice(); ++q) g.point(q, y.data() + q * g.N);
    return y;
}

std::vector<double> slice_radii(const TubeGrid& g, const std::vector<double>& y) {
    std::vector<double> r(g.slice());
    for (std::size_t q = 0; q < g.slice(); ++q) {
        double s = 0.0;
        for (int a = 0; a < g.N; ++a) s += y[q * g.N + a] * y[q * g.N + a];
        r[q] = std::sqrt(s);
    }
    return r;
}

void check_field(const TubeField& f, const TubeGrid& g) {
    if (f.values.size() != g.size() || f.phase.size() != static_cast<std::size_t>(g.Ns))
        throw ValidationError("tube field does not match the grid");
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TubeField assemble_ansatz(const TubeGrid& grid, const CorrectorSet& corr, const AnsatzParams& params,
                          const ResonanceInput& res) {
    const ScalingFields& sf = corr.sf;
    const int level = params.level, Ns = grid.Ns, N = grid.N;
    if (level < 0 || level > 2) throw ValidationError("ansatz level must be 0, 1 or 2");
    if (corr.prof.N != N) throw ValidationError("ansatz: correctors built for another dimension");
    if (std::abs(sf.L - grid.L) > 1e-9 * sf.L) throw ValidationError("ansatz: grid and curve lengths differ");
    if (level == 2 && !corr.second) throw ValidationError("ansatz level 2 needs the second-order correctors");
    if (!params.Phi.empty()) {
        double d = params.Phi.size() == corr.Phi.size() ? 0.0 : 1.0;
        for (std::size_t i = 0; d == 0.0 && i < params.Phi.size(); ++i)
            d = std::max(d, (params.Phi[i] - corr.Phi[i]).cwiseAbs().maxCoeff());
        if (d > 1e-12) throw ValidationError("ansatz: Phi differs from the one the correctors were built with");
    }
    if (!params.f2.empty() && (params.f2.size() != corr.f2.size() || max_diff(params.f2, corr.f2) > 1e-12))
        throw ValidationError("ansatz: f2 differs from the one the correctors were built with");
    const bool resonant = level == 2 && !params.b.empty();
    if (resonant) {
        if (res.alpha == nullptr || res.basis == nullptr)
            throw ValidationError("ansatz: b given without the resonance basis");
        if (static_cast<int>(params.b.size()) != res.basis->count())
            throw ValidationError("ansatz: b must have one entry per window index");
        if (static_cast<int>(res.alpha->zw.size()) != sf.size())
            throw ValidationError("ansatz: alpha field and scalings sizes differ");
    }

    double k_max = 0.0;
    for (double k : sf.k) k_max = std::max(k_max, k);
    if (k_max * std::sqrt(static_cast<double>(N)) * grid.Z > corr.prof.U.grid.r_max)
        throw ValidationError("ansatz: the radial profiles end inside the tube box; raise the radial r_max");

    const double eps = grid.eps;
    TubeField out;
    out.values.assign(grid.size(), cplx(0.0, 0.0));
    out.phase.resize(Ns);
    const PhaseSeries f1 = level >= 1 ? PhaseSeries(corr.f1p, sf.L) : PhaseSeries();
    const TrigSeries f2 = level == 2 && !corr.f2.empty() ? TrigSeries(corr.f2, sf.L) : TrigSeries();
    auto ftilde = [&](double s) {
        double v = sf.phase(s);
        if (level >= 1) v += eps * f1(s);
        if (level == 2 && f2.size() > 0) v += eps * eps * f2(s);
        return v;
    };
    for (int i = 0; i < Ns; ++i) out.phase[i] = (ftilde(grid.sbar[i]) + params.phase_shift) / eps;
    out.seam = (ftilde(sf.L) - ftilde(0.0)) / eps;

    const std::vector<Slice> slices = tube_slices(corr, Ns);
    // Resonance layer along the curve.
    std::vector<double> beta_s(Ns, 0.0), xi_s(Ns, 0.0);
    if (resonant) {
        const ResonanceBasis& b = *res.basis;
        const Eigen::VectorXd bv = Eigen::Map<const Eigen::VectorXd>(params.b.data(), b.count());
        const Eigen::VectorXd be = b.beta * bv, xi = b.xi * bv;
        const TrigSeries tb(std::vector<double>(be.data(), be.data() + be.size()), b.L);
        const TrigSeries tx(std::vector<double>(xi.data(), xi.data() + xi.size()), b.L);
        for (int i = 0; i < Ns; ++i) {
            beta_s[i] = tb(grid.sbar[i]);
            xi_s[i] = tx(grid.sbar[i]);
        }
    }
    const int Mc = sf.size();
    bool uniform_zw = true;
    if (resonant) {
        const auto& zw = res.alpha->zw;
        for (int i = 1; i < Mc && uniform_zw; ++i)
            uniform_zw = zw[i].Z.values == zw[0].Z.values && zw[i].W.values == zw[0].W.values;
    }

    const std::vector<double> ys = slice_points(grid);
    const std::vector<double> rs = slice_radii(grid, ys);
    Polar pz;
    pz.yhat.resize(N);
    for (int i = 0; i < Ns; ++i) {
        const Slice& sl = slices[i];
        const cplx rot = std::polar(1.0, -out.phase[i]);
        int n0 = 0, n1 = 0;
        double t = 0.0;
        if (resonant && !uniform_zw) {
            const double x = grid.sbar[i] / sf.L * Mc;
            n0 = std::min(static_cast<int>(std::floor(x)), Mc - 1);
            n1 = (n0 + 1) % Mc;
            t = x - n0;
        }
        for (std::size_t q = 0; q < grid.slice(); ++q) {
            const double r = rs[q];
            const double cut = grid.cutoff_value(i, r);
            if (cut == 0.0) continue;
            pz.r = r;
            for (int a = 0; a < N; ++a) pz.yhat[a] = r > 0.0 ? ys[q * N + a] / r : 0.0;
            const double rho = sl.k * r;
            const Stencil st(corr.prof.U.grid, rho);
            cplx v = sl.h * st(corr.prof.U);
            if (level >= 1) v += eps * first_value(corr.prof, sl, pz);
            if (level == 2) {
                v += eps * eps * (sl.c_tv * st(corr.prof.Utilde) + second_value(corr.prof, sl, pz));
                if (resonant) {
                    const auto& zw = res.alpha->zw;
                    const auto& Z0 = zw[n0];
                    const Stencil sz(Z0.Z.grid, rho);
                    double Zv = sz(Z0.Z), Wv = sz(Z0.W);
                    if (!uniform_zw && t > 0.0) {
                        const auto& Z1 = zw[n1];
                        const Stencil s1(Z1.Z.grid, rho);
                        Zv = (1 - t) * Zv + t * s1(Z1.Z);
                        Wv = (1 - t) * Wv + t * s1(Z1.W);
                    }
                    v += cplx(beta_s[i] * Zv, xi_s[i] * Wv);
                }
            }
            out.values[static_cast<std::size_t>(i) * grid.slice() + q] = cut * v * rot;
        }
    }
    return out;
}

TubeField apply_S_eps(const TubeField& field, const TubeGrid& g, double p) {
    check_field(field, g);
    if (!(p > 1.0)) throw ValidationError("apply_S_eps: p must exceed 1");
    const auto c2 = d2_coeffs(g.fd_order), c1 = d1_coeffs(g.fd_order);
    const int N = g.N, Ns = g.Ns, Nz = g.Nz;
    const std::size_t S = g.slice();
    const auto stride = axis_strides(g);
    const std::vector<double> ys = slice_points(g);
    const cplx fwd = std::polar(1.0, -field.seam), bwd = std::polar(1.0, field.seam);
    const double ids2 = 1.0 / (g.ds * g.ds), ids = 1.0 / g.ds, idz2 = 1.0 / (g.dz * g.dz), idz = 1.0 / g.dz;
    const double eps = g.eps;
    const auto& v = field.values;

    TubeField out;
    out.values.resize(v.size());
    out.phase = field.phase;
    out.seam = field.seam;
    std::vector<int> idx(N);
    for (int i = 0; i < Ns; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * S;
        for (std::size_t q = 0; q < S; ++q) {
            std::size_t rest = q;
            for (int a = 0; a < N; ++a) {
                idx[a] = static_cast<int>(rest / stride[a]);
                rest %= stride[a];
            }
            const cplx psi = v[base + q];
            cplx dss = 0.0, ds1 = 0.0;
            for (int m = -3; m <= 3; ++m) {
                const double a2 = c2[m + 3], a1 = c1[m + 3];
                if (a2 == 0.0 && a1 == 0.0) continue;
                int ii = i + m;
                cplx fac = 1.0;
                if (ii >= Ns) {
                    ii -= Ns;
                    fac = fwd;
                } else if (ii < 0) {
                    ii += Ns;
                    fac = bwd;
                }
                const cplx val = v[static_cast<std::size_t>(ii) * S + q] * fac;
                dss += a2 * val;
                ds1 += a1 * val;
            }
            dss *= ids2;
            ds1 *= ids;
            cplx lap_y = 0.0, hgrad = 0.0;
            double hy = 0.0, dhy = 0.0;
            for (int a = 0; a < N; ++a) {
                cplx d2 = 0.0, d1 = 0.0;
                for (int m = -3; m <= 3; ++m) {
                    const int ia = idx[a] + m;
                    if (ia < 0 || ia >= Nz) continue;
                    const double a2 = c2[m + 3], a1 = c1[m + 3];
                    if (a2 == 0.0 && a1 == 0.0) continue;
                    const cplx val = v[base + static_cast<std::size_t>(static_cast<long>(q) + m * static_cast<long>(stride[a]))];
                    d2 += a2 * val;
                    d1 += a1 * val;
                }
                lap_y += d2 * idz2;
                hgrad += g.Hc(a, i) * d1 * idz;
                hy += g.Hc(a, i) * ys[q * N + a];
                dhy += g.dHc(a, i) * ys[q * N + a];
            }
            const double A = 1.0 - eps * hy, As = -eps * eps * dhy;
            const cplx mlap = -dss / (A * A) + As / (A * A * A) * ds1 - lap_y + eps * hgrad / A;
            const double mod = std::abs(psi);
            out.values[base + q] = mlap + g.Vx[base + q] * psi - std::pow(mod, p - 1) * psi;
        }
    }
    return out;
}

TubeField demodulate(const TubeField& field, const TubeGrid& g) {
    check_field(field, g);
    TubeField out = field;
    for (int i = 0; i < g.Ns; ++i) {
        const cplx rot = std::polar(1.0, field.phase[i]);
        const std::size_t base = static_cast<std::size_t>(i) * g.slice();
        for (std::size_t q = 0; q < g.slice(); ++q) out.values[base + q] *= rot;
    }
    std::fill(out.phase.begin(), out.phase.end(), 0.0);
    out.seam = 0.0;
    return out;
}

double weighted_norm(const TubeField& f, const TubeGrid& g, const std::vector<double>& rate, NormMode mode,
                     double radius) {
    if (f.values.size() != g.size()) throw ValidationError("weighted norm: field does not match the grid");
    if (static_cast<int>(rate.size()) != g.Ns) throw ValidationError("weighted norm: one rate per s-node");
    const std::vector<double> rs = slice_radii(g, slice_points(g));
    double sup = 0.0, sq = 0.0;
    for (int i = 0; i < g.Ns; ++i) {
        double m = 0.0;
        const std::size_t base = static_cast<std::size_t>(i) * g.slice();
        for (std::size_t q = 0; q < g.slice(); ++q) {
            if (rs[q] > radius) continue;
            m = std::max(m, std::exp(rate[i] * rs[q]) * std::abs(f.values[base + q]));
        }
        sup = std::max(sup, m);
        sq += m * m;
    }
    return mode == NormMode::Sup ? sup : std::sqrt(sq / g.Ns);
}

OrderFit convergence_order(const std::vector<double>& eps, const std::vector<double>& norms) {
    if (eps.size() != norms.size() || eps.size() < 3)
        throw ValidationError("convergence fit needs at least three (eps, norm) pairs");
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0) || !(norms[i] > 0.0)) throw ValidationError("convergence fit needs positive data");
        if (i > 0 && !(eps[i] < eps[i - 1])) throw ValidationError("convergence fit needs descending eps");
    }
    const std::size_t n = eps.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(eps[i]), y = std::log(norms[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    OrderFit fit;
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / n;
    for (std::size_t i = 0; i < n; ++i) {
        fit.deviations.push_back(std::log(norms[i]) - (fit.intercept + fit.slope * std::log(eps[i])));
        if (i > 0 && !(norms[i] < norms[i - 1])) fit.monotone = false;
    }
    if (!fit.monotone) spdlog::warn("convergence fit: norms do not decrease with eps");
    return fit;
}

std::vector<double> weight_rates(const TubeGrid& grid, const CorrectorSet& corr, double varsigma) {
    if (!(varsigma > 0.0 && varsigma < 1.0)) throw ValidationError("varsigma must lie in (0, 1)");
    std::vector<double> r(static_cast<std::size_t>(grid.Ns));
    const TrigSeries k(corr.sf.k, corr.sf.L);
    for (int i = 0; i < grid.Ns; ++i) r[i] = varsigma * k(grid.sbar[i]);
    return r;
}

double parity_overlap(const TubeField& residual, const TubeGrid& g, const CorrectorSet& corr) {
    const TubeField d = demodulate(residual, g);
    const std::vector<double> ys = slice_points(g);
    const std::vector<double> rs = slice_radii(g, ys);
    const TrigSeries ks(corr.sf.k, corr.sf.L);
    const double radius = g.core_radius();
    const std::size_t S = g.slice();
    const int N = g.N;
    double worst = 0.0;
    for (int i = 0; i < g.Ns; ++i) {
        const double k = ks(g.sbar[i]);
        const std::size_t base = static_cast<std::size_t>(i) * S;
        std::vector<double> dot(N, 0.0), nb(N, 0.0);
        double no = 0.0;
        for (std::size_t q = 0; q < S; ++q) {
            if (rs[q] > radius) continue;
            const double odd = 0.5 * (d.values[base + q].real() - d.values[base + S - 1 - q].real());
            no += odd * odd;
            if (rs[q] == 0.0) continue;
            const double up = k * corr.prof.dU(k * rs[q]) / rs[q];
            for (int a = 0; a < N; ++a) {
                const double b = up * ys[q * N + a];
                dot[a] += odd * b;
                nb[a] += b * b;
            }
        }
        if (no == 0.0) continue;
        for (int a = 0; a < N; ++a)
            if (nb[a] > 0.0) worst = std::max(worst, std::abs(dot[a]) / std::sqrt(no * nb[a]));
    }
    return worst;
}

ResidualStudy residual_study(const CurveData& curve, const Expression& V, const CorrectorSet& corr,
                             const std::vector<double>& eps_list, const std::vector<int>& levels,
                             const TubeOptions& opts, double varsigma, const AnsatzParams& params) {
    if (eps_list.empty() || levels.empty()) throw ValidationError("residual study needs eps values and levels");
    ResidualStudy st;
    st.varsigma = varsigma;
    for (double eps : eps_list) {
        const TubeGrid grid = build_tube_grid(curve, corr.sf, V, eps, opts);
        const std::vector<double> rate = weight_rates(grid, corr, varsigma);
        const double core = grid.core_radius();
        for (int level : levels) {
            AnsatzParams pa = params;
            pa.level = level;
            const TubeField psi = assemble_ansatz(grid, corr, pa);
            const TubeField S = apply_S_eps(psi, grid, corr.prof.p);
            ResidualRow row;
            row.eps = eps;
            row.level = level;
            row.core = weighted_norm(S, grid, rate, NormMode::Sup, core);
            row.full = weighted_norm(S, grid, rate, NormMode::Sup, std::numeric_limits<double>::infinity());
            row.l2 = weighted_norm(S, grid, rate, NormMode::L2, core);
            row.Ns = grid.Ns;
            row.Nz = grid.Nz;
            spdlog::info("residual eps={} level={} core={:.4e} full={:.4e} l2={:.4e}", eps, level, row.core, row.full,
                         row.l2);
            st.rows.push_back(row);
        }
    }
    for (int level : levels) {
        std::vector<double> e, n;
        for (const auto& r : st.rows)
            if (r.level == level) {
                e.push_back(r.eps);
                n.push_back(r.core);
            }
        st.fits.push_back(e.size() >= 3 ? convergence_order(e, n) : OrderFit{});
    }
    for (const auto& r2 : st.rows) {
        if (r2.level != 2) continue;
        for (const auto& r1 : st.rows)
            if (r1.level == 1 && r1.eps == r2.eps && !(r2.core < r1.core)) st.level2_below_level1 = false;
    }
    return st;
}

void write_residual_csv(const ResidualStudy& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(17);
    out << "eps,level,core_norm,full_norm,l2_norm,Ns,Nz\n";
    for (const auto& r : s.rows)
        out << r.eps << ',' << r.level << ',' << r.core << ',' << r.full << ',' << r.l2 << ',' << r.Ns << ',' << r.Nz
            << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace nlsc
