#include "nlsc/model_spectrum.hpp"

#include <lapacke.h>

#include <cmath>
#include <map>
#include <string>

#include "nlsc/errors.hpp"

namespace nlsc {

namespace {

// Interleaved symmetric pentadiagonal form of the coupled sector operator,
// in the variables W^{1/2} x so that the eigenproblem is standard.
struct CoupledBand {
    int first = 0;
    int nodes = 0;
    std::vector<double> d;    // diagonal, length 2*nodes
    std::vector<double> e1;   // superdiagonal 1
    std::vector<double> e2;   // superdiagonal 2
    std::vector<double> w;    // cell weights per node
    int size() const { return 2 * nodes; }
};

CoupledBand build_band(const RadialProfile& U, double p, double alpha, double mu, int ell) {
    const SectorMatrix R = build_sector({OpKind::Lr, ell, alpha * alpha, U.dim, p}, U);
    const SectorMatrix I = build_sector({OpKind::Li, ell, alpha * alpha, U.dim, p}, U);
    CoupledBand B;
    B.first = R.first;
    B.nodes = R.size();
    B.w = R.w;
    const int n = B.size();
    B.d.resize(n);
    B.e1.assign(n, 0.0);
    B.e2.assign(n, 0.0);
    for (int k = 0; k < B.nodes; ++k) {
        B.d[2 * k] = R.diag[k] / R.w[k];
        B.d[2 * k + 1] = I.diag[k] / I.w[k];
        B.e1[2 * k] = mu * alpha;
        if (k + 1 < B.nodes) {
            const double s = std::sqrt(R.w[k] * R.w[k + 1]);
            B.e2[2 * k] = R.off[k] / s;
            B.e2[2 * k + 1] = I.off[k] / s;
        }
    }
    return B;
}

// Number of eigenvalues below x: inertia of the block LDL^T factorization
// with 2x2 diagonal blocks (one per radial node).
int sturm_count(const CoupledBand& B, double x) {
    int neg = 0;
    double p00 = 0, p01 = 0, p11 = 0;  // inverse of the previous block
    for (int k = 0; k < B.nodes; ++k) {
        double a = B.d[2 * k] - x, b = B.e1[2 * k], c = B.d[2 * k + 1] - x;
        if (k > 0) {
            const double er = B.e2[2 * (k - 1)], ei = B.e2[2 * (k - 1) + 1];
            a -= er * er * p00;
            b -= er * ei * p01;
            c -= ei * ei * p11;
        }
        double det = a * c - b * b;
        if (det == 0.0) {
            a += 1e-300 + 1e-15 * std::abs(a);
            det = a * c - b * b;
        }
        if (det < 0.0)
            neg += 1;
        else if (a + c < 0.0)
            neg += 2;
        p00 = c / det;
        p01 = -b / det;
        p11 = a / det;
    }
    return neg;
}

// Lowest eigenvalues to a loose tolerance by bisection on the Sturm count;
// the final values come from Rayleigh quotients.
std::vector<double> band_estimates(const CoupledBand& B, int count) {
    const int n = B.size();
    count = std::min(count, n);
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < n; ++i) {
        double rad = std::abs(B.e1[i]) + std::abs(B.e2[i]);
        if (i >= 1) rad += std::abs(B.e1[i - 1]);
        if (i >= 2) rad += std::abs(B.e2[i - 2]);
        lo = std::min(lo, B.d[i] - rad);
        hi = std::max(hi, B.d[i] + rad);
    }
    std::vector<double> out;
    for (int j = 0; j < count; ++j) {
        double a = out.empty() ? lo : out.back() - 1e-9, b = hi;
        // Shrink the upper end quickly before the plain bisection.
        for (double t = a + 1.0; t < b; t = a + 2.0 * (t - a)) {
            if (sturm_count(B, t) >= j + 1) {
                b = t;
                break;
            }
        }
        while (b - a > 1e-10 * std::max(1.0, std::abs(a))) {
            const double mid = 0.5 * (a + b);
            if (sturm_count(B, mid) >= j + 1)
                b = mid;
            else
                a = mid;
        }
        out.push_back(0.5 * (a + b));
    }
    return out;
}

// Inverse iteration for the eigenvector of a computed eigenvalue; the
// vector is returned in the symmetric variables.
std::vector<double> band_eigenvector(const CoupledBand& B, double lambda,
                                     const std::vector<std::vector<double>>& deflate) {
    const int n = B.size(), kl = 2, ku = 2, ldab = 2 * kl + ku + 1;
    const double shift = lambda + 1e-12 * std::max(1.0, std::abs(lambda));
    std::vector<double> ab(static_cast<std::size_t>(ldab) * n, 0.0);
    auto put = [&](int i, int j, double v) { ab[static_cast<std::size_t>(kl + ku + i - j + j * ldab)] = v; };
    for (int j = 0; j < n; ++j) {
        put(j, j, B.d[j] - shift);
        if (j + 1 < n) {
            put(j, j + 1, B.e1[j]);
            put(j + 1, j, B.e1[j]);
        }
        if (j + 2 < n) {
            put(j, j + 2, B.e2[j]);
            put(j + 2, j, B.e2[j]);
        }
    }
    std::vector<lapack_int> ipiv(n);
    if (LAPACKE_dgbtrf(LAPACK_COL_MAJOR, n, n, kl, ku, ab.data(), ldab, ipiv.data()) < 0)
        throw ConvergenceError("banded factorization failed");
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = 1.0 + 0.1 * std::sin(0.37 * i);
    for (int it = 0; it < 4; ++it) {
        for (const auto& v : deflate) {
            double c = 0.0;
            for (int i = 0; i < n; ++i) c += v[i] * x[i];
            for (int i = 0; i < n; ++i) x[i] -= c * v[i];
        }
        LAPACKE_dgbtrs(LAPACK_COL_MAJOR, 'N', n, kl, ku, 1, ab.data(), ldab, ipiv.data(), x.data(), n);
        double nrm = 0.0;
        for (double v : x) nrm += v * v;
        nrm = std::sqrt(nrm);
        if (!(nrm > 0.0) || !std::isfinite(nrm)) throw ConvergenceError("inverse iteration broke down");
        for (double& v : x) v /= nrm;
    }
    return x;
}

RadialProfile blank(const RadialProfile& U, int parity) {
    RadialProfile f;
    f.grid = U.grid;
    f.dim = U.dim;
    f.parity = parity;
    f.values.assign(static_cast<std::size_t>(U.grid.m), 0.0);
    return f;
}

double pair_dot(const CoupledPair& a, const CoupledPair& b) {
    return integral_product(a.u, b.u) + integral_product(a.v, b.v);
}

void scale_pair(CoupledPair& c, double s) {
    for (double& v : c.u.values) v *= s;
    for (double& v : c.v.values) v *= s;
}

double eta_value(const RadialProfile& U, double p, double alpha, double mu) {
    return coupled_eigenvalues(U, p, alpha, mu, 0, 1).at(0);
}

// Sigma branch value: lowest l = 1 eigenvalue, or the second l = 0 one.
double sigma_value(const RadialProfile& U, double p, double alpha, double mu, int ell) {
    const auto v = coupled_eigenvalues(U, p, alpha, mu, ell, 2);
    return ell == 0 ? v.at(1) : v.at(0);
}

// Decay of |Z| + |W| fitted where the profile is between 1e-4 and 1e-11 of
// its maximum, avoiding rounding noise in the far tail.
double fit_pair_decay(const RadialProfile& Z, const RadialProfile& W) {
    const int m = Z.grid.m, N = Z.dim;
    double top = 0.0;
    for (int i = 0; i < m; ++i) top = std::max(top, std::abs(Z.values[i]) + std::abs(W.values[i]));
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int i = 1; i < m; ++i) {
        const double v = std::abs(Z.values[i]) + std::abs(W.values[i]);
        if (v > 1e-4 * top || v < 1e-11 * top) continue;
        const double r = Z.grid.r(i);
        const double y = std::log(v * std::pow(r, 0.5 * (N - 1)));
        sx += r;
        sy += y;
        sxx += r * r;
        sxy += r * y;
        ++cnt;
    }
    if (cnt < 3) return std::numeric_limits<double>::quiet_NaN();
    return -(cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
}

}  // namespace

namespace {

// Quadratic form of the coupled operator evaluated term by term (fluxes of
// differences plus potential), free of the 1/h^2 cancellation of x^T K x.
double rayleigh_energy(const RadialProfile& U, double p, double alpha, double mu, int ell, const CoupledBand& B,
                       const std::vector<double>& y) {
    const RadialGrid& g = U.grid;
    const int N = U.dim;
    const double h = g.h();
    const double cent = ell * (ell + N - 2.0);
    std::vector<double> u(B.nodes), v(B.nodes);
    for (int k = 0; k < B.nodes; ++k) {
        const double s = 1.0 / std::sqrt(B.w[k]);
        u[k] = y[2 * k] * s;
        v[k] = y[2 * k + 1] * s;
    }
    double num = 0.0, den = 0.0;
    if (B.first > 0) {
        const double fl = std::pow(g.r(B.first) - 0.5 * h, N - 1) / h;
        num += fl * (u[0] * u[0] + v[0] * v[0]);
    }
    for (int k = 0; k < B.nodes; ++k) {
        const int i = B.first + k;
        const double r = g.r(i);
        const double fr = std::pow(r + 0.5 * h, N - 1) / h;
        const double un = k + 1 < B.nodes ? u[k + 1] : 0.0, vn = k + 1 < B.nodes ? v[k + 1] : 0.0;
        num += fr * ((u[k] - un) * (u[k] - un) + (v[k] - vn) * (v[k] - vn));
        const double up = std::pow(std::abs(U.at(i)), p - 1.0);
        double base = 1.0 + alpha * alpha;
        if (cent != 0.0 && i > 0) base += cent / (r * r);
        num += B.w[k] * ((base - p * up) * u[k] * u[k] + (base - up) * v[k] * v[k] + 2.0 * mu * alpha * u[k] * v[k]);
        den += B.w[k] * (u[k] * u[k] + v[k] * v[k]);
    }
    return num / den;
}

struct BandSolution {
    CoupledBand band;
    std::vector<double> values;
    std::vector<std::vector<double>> vectors;  // symmetric variables
};

BandSolution solve_band(const RadialProfile& U, double p, double alpha, double mu, int ell, int count) {
    if (count < 1) throw ValidationError("coupled spectrum: count must be >= 1");
    if (alpha < 0.0 || mu < 0.0) throw ValidationError("coupled spectrum: alpha and mu must be nonnegative");
    BandSolution S;
    S.band = build_band(U, p, alpha, mu, ell);
    const auto est = band_estimates(S.band, count);
    for (std::size_t j = 0; j < est.size(); ++j) {
        // Deflate against earlier vectors of (nearly) equal eigenvalue.
        std::vector<std::vector<double>> defl;
        for (std::size_t l = 0; l < j; ++l)
            if (std::abs(est[l] - est[j]) < 1e-8 * std::max(1.0, std::abs(est[j]))) defl.push_back(S.vectors[l]);
        S.vectors.push_back(band_eigenvector(S.band, est[j], defl));
        S.values.push_back(rayleigh_energy(U, p, alpha, mu, ell, S.band, S.vectors.back()));
    }
    return S;
}

}  // namespace

std::vector<double> coupled_eigenvalues(const RadialProfile& U, double p, double alpha, double mu, int ell,
                                        int count) {
    return solve_band(U, p, alpha, mu, ell, count).values;
}

std::vector<CoupledPair> coupled_spectrum(const RadialProfile& U, double p, double alpha, double mu, int ell,
                                          int count) {
    const BandSolution S = solve_band(U, p, alpha, mu, ell, count);
    const CoupledBand& B = S.band;
    std::vector<CoupledPair> out;
    const double area = surface_area(U.dim);
    for (std::size_t j = 0; j < S.values.size(); ++j) {
        const auto& y = S.vectors[j];
        CoupledPair c{S.values[j], blank(U, ell % 2), blank(U, ell % 2)};
        double big = 0.0;
        for (int k = 0; k < B.nodes; ++k) {
            const double s = 1.0 / std::sqrt(B.w[k] * area);
            c.u.values[B.first + k] = y[2 * k] * s;
            c.v.values[B.first + k] = y[2 * k + 1] * s;
            for (double a : {y[2 * k], y[2 * k + 1]})
                if (std::abs(a) > std::abs(big)) big = a;
        }
        if (big < 0.0) scale_pair(c, -1.0);
        out.push_back(std::move(c));
    }
    return out;
}

BranchTrace trace_branches(const RadialProfile& U, double p, double mu, const std::vector<double>& alpha_grid) {
    if (alpha_grid.size() < 2) throw ValidationError("trace_branches: need at least two alpha samples");
    for (std::size_t i = 1; i < alpha_grid.size(); ++i)
        if (!(alpha_grid[i] > alpha_grid[i - 1])) throw ValidationError("trace_branches: alpha grid must ascend");
    if (alpha_grid.front() < 0.0) throw ValidationError("trace_branches: alpha grid must start at >= 0");
    BranchTrace t;
    t.eta = {"eta", 0, mu, {}, {}, {}, {}, 1.0};
    t.sigma = {"sigma", 1, mu, {}, {}, {}, {}, 1.0};
    t.sigma_radial = {"sigma", 0, mu, {}, {}, {}, {}, 1.0};
    t.tau = {"tau", 0, mu, {}, {}, {}, {}, 1.0};
    const bool has_l2 = U.dim >= 2;

    auto push = [](SpectralBranch& b, double a, const CoupledPair& c) {
        b.alpha.push_back(a);
        b.value.push_back(c.value);
        b.u.push_back(c.u);
        b.v.push_back(c.v);
    };
    // Picks the pair best matching the previous sample and aligns its sign.
    auto match = [&](SpectralBranch& b, std::vector<CoupledPair>& cand, std::vector<bool>& used, double a) {
        const CoupledPair prev{0.0, b.u.back(), b.v.back()};
        int best = -1;
        double ov = 0.0;
        for (std::size_t j = 0; j < cand.size(); ++j) {
            if (used[j]) continue;
            const double o = std::abs(pair_dot(prev, cand[j]));
            if (o > ov) {
                ov = o;
                best = static_cast<int>(j);
            }
        }
        if (best < 0 || ov < 0.5)
            throw BranchTrackingError("branch " + b.label + " (l=" + std::to_string(b.ell) +
                                          ") lost: eigenvector overlap " + std::to_string(ov) + " at alpha=" +
                                          std::to_string(a),
                                      a);
        used[best] = true;
        CoupledPair c = cand[best];
        if (pair_dot(prev, c) < 0.0) scale_pair(c, -1.0);
        b.min_overlap = std::min(b.min_overlap, ov);
        push(b, a, c);
    };

    for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
        const double a = alpha_grid[i];
        auto c0 = coupled_spectrum(U, p, a, mu, 0, 3);
        auto c1 = coupled_spectrum(U, p, a, mu, 1, 2);
        std::vector<bool> used0(c0.size(), false), used1(c1.size(), false);
        if (i == 0) {
            push(t.eta, a, c0[0]);
            push(t.sigma_radial, a, c0[1]);
            push(t.sigma, a, c1[0]);
            used0[0] = used0[1] = used1[0] = true;
        } else {
            match(t.eta, c0, used0, a);
            match(t.sigma_radial, c0, used0, a);
            match(t.sigma, c1, used1, a);
        }
        double tau = 1e300;
        for (std::size_t j = 0; j < c0.size(); ++j)
            if (!used0[j]) tau = std::min(tau, c0[j].value);
        for (std::size_t j = 0; j < c1.size(); ++j)
            if (!used1[j]) tau = std::min(tau, c1[j].value);
        if (has_l2) tau = std::min(tau, coupled_eigenvalues(U, p, a, mu, 2, 1).at(0));
        t.tau.alpha.push_back(a);
        t.tau.value.push_back(tau);
    }
    t.eta_increasing = true;
    int crossings = 0;
    t.ordered = true;
    for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
        if (i > 0 && !(t.eta.value[i] > t.eta.value[i - 1])) t.eta_increasing = false;
        if (i > 0 && (t.eta.value[i] > 0.0) != (t.eta.value[i - 1] > 0.0)) ++crossings;
        const double slo = std::min(t.sigma.value[i], t.sigma_radial.value[i]);
        const double shi = std::max(t.sigma.value[i], t.sigma_radial.value[i]);
        if (!(t.eta.value[i] < slo) || !(shi <= t.tau.value[i])) t.ordered = false;
    }
    t.single_zero_crossing = crossings == 1;
    return t;
}

EigenPairZW find_alpha_bar(const RadialProfile& U, double p, double mu) {
    if (mu < 0.0) throw ValidationError("find_alpha_bar: mu must be nonnegative");
    double lo = 0.0, hi = 1.0;
    if (!(eta_value(U, p, lo, mu) < 0.0))
        throw ConvergenceError("find_alpha_bar: eta is not negative at alpha = 0");
    int grow = 0;
    while (!(eta_value(U, p, hi, mu) > 0.0)) {
        lo = hi;
        hi *= 2.0;
        if (++grow > 20)
            throw ConvergenceError("find_alpha_bar: no sign change of eta; mu too large or grid too coarse");
    }
    double mid = 0.5 * (lo + hi), eta = 1.0;
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        eta = eta_value(U, p, mid, mu);
        if (std::abs(eta) < 1e-8 && hi - lo < 1e-9) break;
        if (eta < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    if (!(std::abs(eta) < 1e-8)) throw ConvergenceError("find_alpha_bar: bisection did not reach |eta| < 1e-8");

    EigenPairZW out;
    out.mu = mu;
    out.alpha_bar = mid;
    const auto c = coupled_spectrum(U, p, mid, mu, 0, 1).at(0);
    out.eta = c.value;
    out.Z = c.u;
    out.W = c.v;
    // Gauge: Z(0) > 0.
    if (out.Z.values[0] < 0.0) {
        for (double& v : out.Z.values) v = -v;
        for (double& v : out.W.values) v = -v;
    }
    out.q1 = integral_product(out.Z, out.Z);
    out.q2 = integral_product(out.W, out.W);
    out.q3 = integral_product(out.Z, out.W);
    out.decay_rate = fit_pair_decay(out.Z, out.W);

    // Eigenfunction derivatives in alpha, sign aligned with (Z, W).
    const CoupledPair ref{0.0, out.Z, out.W};
    auto at = [&](double a) {
        CoupledPair e = coupled_spectrum(U, p, a, mu, 0, 1).at(0);
        if (pair_dot(ref, e) < 0.0) scale_pair(e, -1.0);
        return e;
    };
    const double hs = std::min(1e-3, 0.5 * mid);
    auto central = [&](double step) {
        const CoupledPair a = at(mid + step), b = at(mid - step);
        CoupledPair d{0.0, blank(U, 0), blank(U, 0)};
        for (int i = 0; i < U.grid.m; ++i) {
            d.u.values[i] = (a.u.values[i] - b.u.values[i]) / (2 * step);
            d.v.values[i] = (a.v.values[i] - b.v.values[i]) / (2 * step);
        }
        return d;
    };
    const CoupledPair d1 = central(hs), d2 = central(0.5 * hs);
    out.dZ = blank(U, 0);
    out.dW = blank(U, 0);
    for (int i = 0; i < U.grid.m; ++i) {
        out.dZ.values[i] = (4 * d2.u.values[i] - d1.u.values[i]) / 3;
        out.dW.values[i] = (4 * d2.v.values[i] - d1.v.values[i]) / 3;
    }
    return out;
}

BranchDerivatives eta_derivatives(const RadialProfile& U, double p, double mu, double alpha, double step) {
    // The branch is even in alpha (v -> -v), so mirror across zero.
    auto eta = [&](double a) { return eta_value(U, p, std::abs(a), mu); };
    const double e0 = eta(alpha);
    auto d1 = [&](double s) { return (eta(alpha + s) - eta(alpha - s)) / (2 * s); };
    auto d2 = [&](double s) { return (eta(alpha + s) - 2 * e0 + eta(alpha - s)) / (s * s); };
    BranchDerivatives d;
    d.d1 = (4 * d1(0.5 * step) - d1(step)) / 3;
    d.d2 = (4 * d2(0.5 * step) - d2(step)) / 3;
    return d;
}

double sigma_curvature(const RadialProfile& U, double p, double mu, int ell, double step) {
    if (ell != 0 && ell != 1) throw ValidationError("sigma_curvature: ell must be 0 or 1");
    const double s0 = sigma_value(U, p, 0.0, mu, ell);
    auto d2 = [&](double s) { return 2.0 * (sigma_value(U, p, s, mu, ell) - s0) / (s * s); };
    return (4 * d2(0.5 * step) - d2(step)) / 3;
}

std::array<double, 2> sigma_curvature_closed_form(double A, double h_hat, const Exponents& ex) {
    const double p = ex.p;
    const double g = std::pow(h_hat, 2 * ex.sigma - p + 1);
    return {2.0 / (p - 1) * ((p - 1) - 2 * A * A * ex.theta * g), 2.0 / (p - 1) * ((p - 1) - 2 * A * A * ex.sigma * g)};
}

AlphaField alpha_field(const RadialProfile& U, const ScalingFields& sf) {
    AlphaField af;
    const int M = sf.size();
    af.mu.resize(M);
    // Nodes whose mu agrees to 1e-12 share one solve; the bisection itself
    // resolves alpha_bar far more coarsely than that.
    std::map<long long, EigenPairZW> cache;
    for (int i = 0; i < M; ++i) {
        const double mu = 2.0 * sf.fp[i] / sf.k[i];
        af.mu[i] = mu;
        const auto key = std::llround(mu * 1e12);
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, find_alpha_bar(U, sf.ex.p, mu)).first;
        af.zw.push_back(it->second);
    }
    for (int i = 0; i < M; ++i)
        af.max_jump = std::max(af.max_jump, std::abs(af.zw[(i + 1) % M].alpha_bar - af.zw[i].alpha_bar));
    return af;
}

FrakVW compute_frakVW(const RadialProfile& U, double h_hat, double A, const Exponents& ex) {
    const double p = ex.p;
    const double g = std::pow(h_hat, 2 * ex.sigma - p + 1);
    const auto cf = sigma_curvature_closed_form(A, h_hat, ex);
    const RadialProfile dU = differentiate(U);
    const RadialGrid& G = U.grid;
    RadialProfile rhsV = blank(U, 1), rhsW = blank(U, 0);
    for (int i = 0; i < G.m; ++i) {
        const double r = G.r(i), u = U.values[i], du = dU.values[i];
        rhsV.values[i] = cf[0] * du - 2 * du - 4 * A * A * g * r * u;
        const double Ut = u / (p - 1) + 0.5 * r * du;
        rhsW.values[i] = cf[1] * u - 2 * u - 8 * A * A * g * Ut;
    }
    SolveOptions opts;
    const auto sv = sector_solve({OpKind::Lr, 1, 0.0, U.dim, p}, U, rhsV, opts);
    const auto sw = sector_solve({OpKind::Li, 0, 0.0, U.dim, p}, U, rhsW, opts);
    FrakVW out;
    out.V = sv.u;
    out.W = sw.u;
    for (double& v : out.V.values) v *= 0.5;
    for (double& v : out.W.values) v *= 0.5;
    out.removed_V = sv.removed_norm;
    out.removed_W = sw.removed_norm;
    out.rhs_norm_V = sv.rhs_norm;
    out.rhs_norm_W = sw.rhs_norm;
    out.roundtrip_V = sv.roundtrip_rel;
    out.roundtrip_W = sw.roundtrip_rel;
    return out;
}

std::array<double, 2> first_derivative_identities(const RadialProfile& U, double p, double mu) {
    if (mu == 0.0) return {0.0, 0.0};
    const RadialProfile dU = differentiate(U);
    const RadialGrid& G = U.grid;
    RadialProfile rv = blank(U, 1), ru = blank(U, 0), ev = blank(U, 1), eu = blank(U, 0);
    for (int i = 0; i < G.m; ++i) {
        const double r = G.r(i);
        rv.values[i] = -mu * dU.values[i];
        ru.values[i] = -mu * U.values[i];
        ev.values[i] = 0.5 * mu * r * U.values[i];
        eu.values[i] = mu * (U.values[i] / (p - 1) + 0.5 * r * dU.values[i]);
    }
    const auto sv = sector_solve({OpKind::Li, 1, 0.0, U.dim, p}, U, rv);
    const auto su = sector_solve({OpKind::Lr, 0, 0.0, U.dim, p}, U, ru);
    auto rel = [](const RadialProfile& a, const RadialProfile& b) {
        RadialProfile d = a;
        for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] -= b.values[i];
        return radial_norm(d) / radial_norm(b);
    };
    return {rel(sv.u, ev), rel(su.u, eu)};
}

double scan_mu_limit(const RadialProfile& U, double p, const std::vector<double>& mu_grid,
                     const std::vector<double>& alpha_grid) {
    double best = 0.0;
    for (double mu : mu_grid) {
        try {
            const auto t = trace_branches(U, p, mu, alpha_grid);
            if (!(t.eta_increasing && t.single_zero_crossing && t.ordered)) break;
            best = mu;
        } catch (const BranchTrackingError&) {
            break;
        }
    }
    return best;
}

}  // namespace nlsc
