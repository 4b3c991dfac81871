#include "nlsc/radial.hpp"

#include <lapacke.h>

#include <algorithm>
#include <array>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <fstream>
#include <numbers>

#include "nlsc/errors.hpp"

namespace nlsc {

namespace {

constexpr double kPi = std::numbers::pi;

double coefficient(OpKind k, double p) { return k == OpKind::Lr ? p : 1.0; }

double pow_abs(double u, double e) { return std::pow(std::abs(u), e); }

// Six-point Lagrange weights on nodes -2..3 at offset t in [0,1).
std::array<double, 6> lagrange6(double t) {
    std::array<double, 6> w{};
    for (int a = 0; a < 6; ++a) {
        double num = 1.0, den = 1.0;
        for (int b = 0; b < 6; ++b) {
            if (b == a) continue;
            num *= t - (b - 2);
            den *= (a - 2) - (b - 2);
        }
        w[a] = num / den;
    }
    return w;
}

std::array<double, 6> lagrange6_deriv(double t) {
    std::array<double, 6> w{};
    for (int a = 0; a < 6; ++a) {
        double den = 1.0;
        for (int b = 0; b < 6; ++b)
            if (b != a) den *= (a - 2) - (b - 2);
        double sum = 0.0;
        for (int c = 0; c < 6; ++c) {
            if (c == a) continue;
            double prod = 1.0;
            for (int b = 0; b < 6; ++b)
                if (b != a && b != c) prod *= t - (b - 2);
            sum += prod;
        }
        w[a] = sum / den;
    }
    return w;
}

// Value at node index i, extended by parity for i < 0 and by 0 past the end.
double extended(const RadialProfile& f, int i) {
    const int m = f.grid.m;
    if (i >= m) return 0.0;
    if (i >= 0) return f.values[static_cast<std::size_t>(i)];
    const double v = f.values[static_cast<std::size_t>(-i)];
    return f.parity == 0 ? v : -v;
}

void check_sector(int dim, int ell) {
    if (dim < 1) throw ValidationError("radial dimension must be >= 1");
    if (ell < 0) throw ValidationError("angular mode must be nonnegative");
    if (dim == 1 && ell > 1)
        throw ValidationError("in one dimension only the even (l=0) and odd (l=1) sectors exist");
}

SectorMatrix build_sector_impl(const SectorOperator& op, const RadialProfile& U) {
    check_sector(op.dim, op.ell);
    if (U.dim != op.dim) throw ValidationError("operator and ground state dimensions differ");
    const RadialGrid& g = U.grid;
    const int N = op.dim;
    const double h = g.h();
    const double cent = op.ell * (op.ell + N - 2.0);
    const double c = coefficient(op.kind, op.p);
    const auto W = cell_weights(g, N);
    SectorMatrix S;
    S.first = op.ell == 0 ? 0 : 1;
    S.last = g.m - 2;
    const int n = S.size();
    S.diag.resize(n);
    S.off.resize(std::max(n - 1, 0));
    S.w.resize(n);
    for (int k = 0; k < n; ++k) {
        const int i = S.first + k;
        const double r = g.r(i);
        const double fr = std::pow(r + 0.5 * h, N - 1) / h;
        const double fl = i == 0 ? 0.0 : std::pow(r - 0.5 * h, N - 1) / h;
        double pot = 1.0 + op.shift - c * pow_abs(U.at(i), op.p - 1.0);
        if (cent != 0.0 && i > 0) pot += cent / (r * r);
        S.diag[k] = fr + fl + W[i] * pot;
        S.w[k] = W[i];
        if (k + 1 < n) S.off[k] = -fr;
    }
    return S;
}

// Lowest `count` eigenpairs of K x = lambda W x via the symmetric form.
std::vector<std::pair<double, std::vector<double>>> lowest_pairs(const SectorMatrix& S,
                                                                 int count) {
    const int n = S.size();
    count = std::min(count, n);
    std::vector<double> d(n), e(std::max(n - 1, 1));
    for (int k = 0; k < n; ++k) d[k] = S.diag[k] / S.w[k];
    for (int k = 0; k + 1 < n; ++k) e[k] = S.off[k] / std::sqrt(S.w[k] * S.w[k + 1]);
    std::vector<double> vals(n), z(static_cast<std::size_t>(n) * count);
    std::vector<lapack_int> ifail(n);
    lapack_int found = 0;
    const lapack_int info = LAPACKE_dstevx(LAPACK_COL_MAJOR, 'V', 'I', n, d.data(), e.data(), 0.0,
                                           0.0, 1, count, 0.0, &found, vals.data(), z.data(), n,
                                           ifail.data());
    if (info != 0) throw ConvergenceError("tridiagonal eigensolver failed, info=" + std::to_string(info));
    std::vector<std::pair<double, std::vector<double>>> out;
    for (int j = 0; j < found; ++j) {
        std::vector<double> v(n);
        for (int k = 0; k < n; ++k) v[k] = z[static_cast<std::size_t>(j) * n + k] / std::sqrt(S.w[k]);
        out.emplace_back(vals[j], std::move(v));
    }
    return out;
}

// Solve the tridiagonal system K x = b in place.
void tridiagonal_solve(const SectorMatrix& S, std::vector<double>& b) {
    const int n = S.size();
    std::vector<double> dl(S.off), du(S.off), d(S.diag);
    const lapack_int info = LAPACKE_dgtsv(LAPACK_COL_MAJOR, n, 1, dl.data(), d.data(), du.data(),
                                          b.data(), n);
    if (info != 0) throw ConvergenceError("singular sector matrix in tridiagonal solve");
}

std::vector<double> apply_matrix(const SectorMatrix& S, const std::vector<double>& x) {
    const int n = S.size();
    std::vector<double> y(n);
    for (int k = 0; k < n; ++k) {
        double v = S.diag[k] * x[k];
        if (k > 0) v += S.off[k - 1] * x[k - 1];
        if (k + 1 < n) v += S.off[k] * x[k + 1];
        y[k] = v;
    }
    return y;
}

double wdot(const std::vector<double>& w, const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += w[k] * a[k] * b[k];
    return s;
}

RadialProfile embed(const RadialGrid& g, int dim, int parity, int first,
                    const std::vector<double>& x) {
    RadialProfile f;
    f.grid = g;
    f.dim = dim;
    f.parity = parity;
    f.values.assign(static_cast<std::size_t>(g.m), 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) f.values[first + k] = x[k];
    return f;
}

// Laplacian part plus Robin closure at r_max (U' = -(1 + (N-1)/(2R)) U),
// used only for the ground state.
struct GroundMatrix {
    std::vector<double> diag, off, w;
};

GroundMatrix ground_laplacian(const RadialGrid& g, int N) {
    const int m = g.m;
    const double h = g.h();
    const double R = g.r_max;
    GroundMatrix G;
    G.diag.assign(m, 0.0);
    G.off.assign(m - 1, 0.0);
    G.w = cell_weights(g, N);
    G.w[m - 1] = (std::pow(R, N) - std::pow(R - 0.5 * h, N)) / N;
    for (int i = 0; i < m; ++i) {
        const double r = g.r(i);
        const double fl = i == 0 ? 0.0 : std::pow(r - 0.5 * h, N - 1) / h;
        double fr = 0.0;
        if (i + 1 < m) {
            fr = std::pow(r + 0.5 * h, N - 1) / h;
            G.off[i] = -fr;
        } else {
            fr = std::pow(R, N - 1) * (1.0 + (N - 1) / (2.0 * R));
        }
        G.diag[i] = fl + fr;
    }
    return G;
}

std::vector<double> ground_residual(const GroundMatrix& G, const std::vector<double>& u, double p) {
    const std::size_t m = u.size();
    std::vector<double> F(m);
    for (std::size_t i = 0; i < m; ++i) {
        double Ku = G.diag[i] * u[i];
        if (i > 0) Ku += G.off[i - 1] * u[i - 1];
        if (i + 1 < m) Ku += G.off[i] * u[i + 1];
        F[i] = Ku / G.w[i] + u[i] - pow_abs(u[i], p - 1.0) * u[i];
    }
    return F;
}

using State = std::array<double, 2>;

struct GroundOde {
    int N;
    double p;
    void operator()(const State& y, State& dy, double r) const {
        dy[0] = y[1];
        dy[1] = -(N - 1) / r * y[1] + y[0] - pow_abs(y[0], p - 1.0) * y[0];
    }
};

// +1 overshoot (crosses zero), -1 undershoot (turns upward), 0 undecided.
// Optionally samples the trajectory on the grid until it is decided.
int shoot(int N, double p, double a, double r_end, double tol, const RadialGrid* grid,
          std::vector<double>* samples, double* r_decided) {
    namespace ode = boost::numeric::odeint;
    const double r0 = 1e-6;
    const double c = (a - std::pow(a, p)) / (2.0 * N);
    State y{a + c * r0 * r0, 2.0 * c * r0};
    auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<State>());
    stepper.initialize(y, r0, 1e-3);
    std::size_t next = 0;
    if (samples) {
        samples->clear();
        samples->push_back(a);
        next = 1;
    }
    int verdict = 0;
    while (stepper.current_time() < r_end) {
        stepper.do_step(GroundOde{N, p});
        const double t = stepper.current_time();
        if (samples && grid) {
            while (next < static_cast<std::size_t>(grid->m) && grid->r(static_cast<int>(next)) <= t) {
                State s;
                stepper.calc_state(grid->r(static_cast<int>(next)), s);
                samples->push_back(s[0]);
                ++next;
            }
        }
        const State& s = stepper.current_state();
        if (s[0] < 0.0) {
            verdict = 1;
            break;
        }
        if (s[1] > 0.0) {
            verdict = -1;
            break;
        }
    }
    if (r_decided) *r_decided = stepper.current_time();
    return verdict;
}

struct Bracket {
    double lo, hi;
};

Bracket bracket_peak(int N, double p, double tol, int iterations) {
    double lo = 1.0;
    double hi = 2.0 * std::pow((p + 1.0) / 2.0, 1.0 / (p - 1.0));
    for (int k = 0; k < 60 && shoot(N, p, hi, 80.0, 1e-10, nullptr, nullptr, nullptr) != 1; ++k)
        hi *= 2.0;
    if (shoot(N, p, hi, 80.0, 1e-10, nullptr, nullptr, nullptr) != 1)
        throw ConvergenceError("shooting: no overshooting initial value found");
    for (int it = 0; it < iterations && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        const int v = shoot(N, p, mid, 80.0, tol, nullptr, nullptr, nullptr);
        if (v == 1)
            hi = mid;
        else
            lo = mid;
    }
    return {lo, hi};
}

bool newton_ground(const GroundMatrix& G, std::vector<double>& u, double p) {
    const std::size_t m = u.size();
    for (int it = 0; it < 60; ++it) {
        auto F = ground_residual(G, u, p);
        double fmax = 0.0;
        for (double v : F) fmax = std::max(fmax, std::abs(v));
        if (fmax < 1e-12) return true;
        std::vector<double> d(m), dl(G.off), du(G.off), b(m);
        for (std::size_t i = 0; i < m; ++i) {
            d[i] = G.diag[i] + G.w[i] * (1.0 - p * pow_abs(u[i], p - 1.0));
            b[i] = G.w[i] * F[i];
        }
        const lapack_int info = LAPACKE_dgtsv(LAPACK_COL_MAJOR, static_cast<lapack_int>(m), 1,
                                              dl.data(), d.data(), du.data(), b.data(),
                                              static_cast<lapack_int>(m));
        if (info != 0) return false;
        double step = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            u[i] -= b[i];
            step = std::max(step, std::abs(b[i]));
        }
        if (!std::isfinite(step)) return false;
        if (step < 1e-14 * std::abs(u[0])) break;
    }
    const auto F = ground_residual(G, u, p);
    double fmax = 0.0;
    for (double v : F) fmax = std::max(fmax, std::abs(v));
    return std::isfinite(fmax) && fmax < 1e-9;
}

}  // namespace

SectorMatrix build_sector(const SectorOperator& op, const RadialProfile& U) {
    return build_sector_impl(op, U);
}

void RadialGrid::validate() const {
    if (!(r_max >= 20.0)) throw ValidationError("radial grid: r_max must be >= 20");
    if (m < 1000) throw ValidationError("radial grid: at least 1000 nodes required");
}

double RadialProfile::operator()(double r) const {
    r = std::abs(r);
    const double h = grid.h();
    if (r > grid.r_max) return 0.0;
    int i = static_cast<int>(std::floor(r / h));
    i = std::min(i, grid.m - 4);
    const double t = r / h - i;
    const auto w = lagrange6(t);
    double s = 0.0;
    for (int a = 0; a < 6; ++a) s += w[a] * extended(*this, i - 2 + a);
    return s;
}

double RadialProfile::derivative(double r) const {
    const double sign = (r < 0.0 && parity == 0) ? -1.0 : 1.0;
    r = std::abs(r);
    const double h = grid.h();
    if (r > grid.r_max) return 0.0;
    int i = static_cast<int>(std::floor(r / h));
    i = std::min(i, grid.m - 4);
    const double t = r / h - i;
    const auto w = lagrange6_deriv(t);
    double s = 0.0;
    for (int a = 0; a < 6; ++a) s += w[a] * extended(*this, i - 2 + a);
    return sign * s / h;
}

void RadialProfile::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(17);
    out << "r,value\n";
    for (int i = 0; i < grid.m; ++i) out << grid.r(i) << ',' << values[i] << '\n';
}

double surface_area(int dim) {
    return 2.0 * std::pow(kPi, 0.5 * dim) / std::tgamma(0.5 * dim);
}

bool admissible_p(int n, double p) {
    if (!(p > 1.0)) return false;
    if (n <= 3) return true;
    return p < (n + 1.0) / (n - 3.0);
}

std::vector<double> cell_weights(const RadialGrid& g, int N) {
    const double h = g.h();
    std::vector<double> W(static_cast<std::size_t>(g.m));
    W[0] = std::pow(0.5 * h, N) / N;
    for (int i = 1; i < g.m; ++i) {
        const double r = g.r(i);
        W[i] = (std::pow(r + 0.5 * h, N) - std::pow(r - 0.5 * h, N)) / N;
    }
    return W;
}

double radial_dot(const RadialProfile& f, const RadialProfile& g) {
    if (f.grid.m != g.grid.m) throw ValidationError("radial_dot: grid mismatch");
    const auto W = cell_weights(f.grid, f.dim);
    double s = 0.0;
    for (int i = 0; i < f.grid.m; ++i) s += W[i] * f.values[i] * g.values[i];
    return s;
}

double radial_norm(const RadialProfile& f) { return std::sqrt(radial_dot(f, f)); }

double integral_product(const RadialProfile& f, const RadialProfile& g) {
    return surface_area(f.dim) * radial_dot(f, g);
}

RadialProfile make_profile(const RadialGrid& grid, int dim, int parity,
                           const std::function<double(double)>& f) {
    RadialProfile out;
    out.grid = grid;
    out.dim = dim;
    out.parity = parity;
    out.values.resize(static_cast<std::size_t>(grid.m));
    for (int i = 0; i < grid.m; ++i) out.values[i] = f(grid.r(i));
    return out;
}

double shoot_ground_state_peak(int n, double p, double tol) {
    if (n < 2 || !admissible_p(n, p)) throw ValidationError("ground state: p outside (1, (n+1)/(n-3))");
    const Bracket b = bracket_peak(n - 1, p, tol, 200);
    return 0.5 * (b.lo + b.hi);
}

RadialProfile solve_ground_state(int n, double p, const RadialGrid& grid) {
    if (n < 2) throw ValidationError("ground state: n must be >= 2");
    if (!admissible_p(n, p)) throw ValidationError("ground state: p outside (1, (n+1)/(n-3))");
    grid.validate();
    const int N = n - 1;
    const GroundMatrix G = ground_laplacian(grid, N);
    std::vector<double> u;
    bool ok = false;
    try {
        const Bracket b = bracket_peak(N, p, 1e-11, 80);
        const double a = 0.5 * (b.lo + b.hi);
        std::vector<double> samples;
        shoot(N, p, a, grid.r_max, 1e-11, &grid, &samples, nullptr);
        // Keep the trustworthy head of the trajectory, then an exponential tail.
        std::size_t keep = 1;
        while (keep < samples.size() && samples[keep] > 1e-5 * a && samples[keep] < samples[keep - 1])
            ++keep;
        u.assign(static_cast<std::size_t>(grid.m), 0.0);
        for (std::size_t i = 0; i < keep; ++i) u[i] = samples[i];
        const double rs = grid.r(static_cast<int>(keep - 1));
        for (std::size_t i = keep; i < u.size(); ++i) {
            const double r = grid.r(static_cast<int>(i));
            u[i] = u[keep - 1] * std::exp(-(r - rs)) * std::pow(rs / r, 0.5 * (N - 1));
        }
        ok = newton_ground(G, u, p);
    } catch (const ConvergenceError&) {
        ok = false;
    }
    if (!ok) {
        // Relaxation from a sech power.
        const double a = std::pow((p + 1.0) / 2.0, 1.0 / (p - 1.0));
        u.resize(static_cast<std::size_t>(grid.m));
        for (int i = 0; i < grid.m; ++i)
            u[i] = a * std::pow(1.0 / std::cosh(0.5 * (p - 1.0) * grid.r(i)), 2.0 / (p - 1.0));
        ok = newton_ground(G, u, p);
    }
    if (!ok || !(u[0] > 0.0))
        throw ConvergenceError("ground state: shooting/relaxation did not converge; refine the grid");
    RadialProfile U = embed(grid, N, 0, 0, u);
    for (int i = 1; i < grid.m; ++i)
        if (!(U.values[i] > 0.0) || !(U.values[i] < U.values[i - 1]))
            throw ConvergenceError("ground state: profile not positive and decreasing");
    U.decay_rate = fit_decay_rate(U);
    return U;
}

double ground_state_residual(const RadialProfile& U, double p) {
    const GroundMatrix G = ground_laplacian(U.grid, U.dim);
    const auto F = ground_residual(G, U.values, p);
    double fmax = 0.0;
    for (double v : F) fmax = std::max(fmax, std::abs(v));
    return fmax;
}

double fit_decay_rate(const RadialProfile& U) {
    const int m = U.grid.m;
    const int N = U.dim;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int i = (3 * m) / 4; i < m; ++i) {
        const double v = std::abs(U.values[i]);
        if (!(v > 1e-300)) continue;
        const double r = U.grid.r(i);
        const double y = std::log(v * std::pow(r, 0.5 * (N - 1)));
        sx += r;
        sy += y;
        sxx += r * r;
        sxy += r * y;
        ++cnt;
    }
    if (cnt < 3) return std::numeric_limits<double>::quiet_NaN();
    const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    return -slope;
}

ScaledProfile scaled_profile(const RadialProfile& U, double f_hat, double V_hat, double p) {
    if (!(V_hat > 0.0)) throw ValidationError("scaled profile: V_hat must be positive");
    const double base = f_hat * f_hat + V_hat;
    ScaledProfile s;
    s.h_hat = std::pow(base, 1.0 / (p - 1.0));
    s.k_hat = std::sqrt(base);
    const double hh = s.h_hat, kk = s.k_hat;
    s.eval = [U, hh, kk](double r) { return hh * U(kk * r); };
    return s;
}

RadialProfile sector_apply(const SectorOperator& op, const RadialProfile& U, const RadialProfile& u) {
    const SectorMatrix S = build_sector_impl(op, U);
    std::vector<double> x(S.size());
    for (int k = 0; k < S.size(); ++k) x[k] = u.at(S.first + k);
    auto y = apply_matrix(S, x);
    for (int k = 0; k < S.size(); ++k) y[k] /= S.w[k];
    return embed(U.grid, op.dim, op.ell % 2, S.first, y);
}

SectorSolution sector_solve(const SectorOperator& op, const RadialProfile& U,
                            const RadialProfile& rhs, const SolveOptions& opts) {
    const SectorMatrix S = build_sector_impl(op, U);
    const int n = S.size();
    std::vector<double> b(n);
    for (int k = 0; k < n; ++k) b[k] = rhs.at(S.first + k);
    SectorSolution out;
    out.rhs_norm = std::sqrt(wdot(S.w, b, b));

    std::vector<std::vector<double>> kernel;
    for (auto& [lam, v] : lowest_pairs(S, 3))
        if (std::abs(lam) < opts.kernel_tol) kernel.push_back(std::move(v));
    out.kernel_dim = static_cast<int>(kernel.size());
    double removed2 = 0.0;
    for (const auto& v : kernel) {
        const double c = wdot(S.w, v, b) / wdot(S.w, v, v);
        for (int k = 0; k < n; ++k) b[k] -= c * v[k];
        removed2 += c * c * wdot(S.w, v, v);
    }
    out.removed_norm = std::sqrt(removed2);
    if (out.rhs_norm > 0.0 && out.removed_norm > opts.max_kernel_fraction * out.rhs_norm)
        throw IllPosedSolve("sector solve: rhs has a large component in the operator kernel",
                            out.removed_norm / out.rhs_norm);

    std::vector<double> x(n);
    for (int k = 0; k < n; ++k) x[k] = S.w[k] * b[k];
    tridiagonal_solve(S, x);
    for (const auto& v : kernel) {
        const double c = wdot(S.w, v, x) / wdot(S.w, v, v);
        for (int k = 0; k < n; ++k) x[k] -= c * v[k];
    }
    auto Kx = apply_matrix(S, x);
    double num = 0.0;
    for (int k = 0; k < n; ++k) {
        const double d = Kx[k] / S.w[k] - b[k];
        num += S.w[k] * d * d;
    }
    const double bn = std::sqrt(wdot(S.w, b, b));
    out.roundtrip_rel = bn > 0.0 ? std::sqrt(num) / bn : std::sqrt(num);
    out.u = embed(U.grid, op.dim, op.ell % 2, S.first, x);
    return out;
}

std::vector<EigenPair> sector_spectrum(const SectorOperator& op, const RadialProfile& U, int count) {
    if (count < 1) throw ValidationError("sector spectrum: count must be >= 1");
    const SectorMatrix S = build_sector_impl(op, U);
    std::vector<EigenPair> out;
    for (auto& [lam, v] : lowest_pairs(S, count)) {
        // Fix the sign so that the largest-magnitude entry is positive.
        double big = 0.0;
        for (double a : v)
            if (std::abs(a) > std::abs(big)) big = a;
        if (big < 0.0)
            for (double& a : v) a = -a;
        out.push_back({lam, embed(U.grid, op.dim, op.ell % 2, S.first, v)});
    }
    return out;
}

RadialProfile richardson(const RadialProfile& coarse, const RadialProfile& fine) {
    if (fine.grid.m != 2 * coarse.grid.m - 1 || fine.grid.r_max != coarse.grid.r_max)
        throw ValidationError("richardson: fine grid must halve the coarse spacing");
    RadialProfile out = coarse;
    for (int i = 0; i < coarse.grid.m; ++i)
        out.values[i] = (4.0 * fine.values[2 * i] - coarse.values[i]) / 3.0;
    return out;
}

RadialProfile differentiate(const RadialProfile& f) {
    static constexpr std::array<double, 3> c{3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0};
    RadialProfile d = f;
    d.parity = 1 - f.parity;
    const double h = f.grid.h();
    const int m = f.grid.m;
    for (int i = 0; i < m; ++i) {
        if (i + 3 < m) {
            double s = 0.0;
            for (int k = 1; k <= 3; ++k) s += c[k - 1] * (extended(f, i + k) - extended(f, i - k));
            d.values[i] = s / h;
        } else {
            d.values[i] = (f.values[i] - f.values[i - 1]) / h;
        }
    }
    return d;
}

}  // namespace nlsc
