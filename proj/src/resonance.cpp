#include "nlsc/resonance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "nlsc/errors.hpp"
#include "nlsc/periodic.hpp"

namespace nlsc {

namespace {

Eigen::VectorXd resample_field(const std::vector<double>& samples, double L, int count) {
    const auto r = TrigSeries(samples, L).resample(count);
    return Eigen::Map<const Eigen::VectorXd>(r.data(), count);
}

double grid_norm(const Eigen::VectorXd& a, double ds) { return std::sqrt(a.squaredNorm() * ds); }

int next_pow2(int v) {
    int p = 1;
    while (p < v) p *= 2;
    return p;
}

}  // namespace

QIntegrals q_integrals(const AlphaField& af) {
    QIntegrals Q;
    for (const auto& zw : af.zw) {
        Q.q1.push_back(zw.q1);
        Q.q2.push_back(zw.q2);
        Q.q3.push_back(zw.q3);
        Q.max_normalization_error = std::max(Q.max_normalization_error, std::abs(zw.q1 + zw.q2 - 1.0));
    }
    return Q;
}

ResonanceBasis resonance_eigenpairs(const ScalingFields& sf, const AlphaField& af, const QIntegrals& Q, double eps,
                                    double delta, int min_nodes) {
    if (!(eps > 0.0)) throw ValidationError("resonance: eps must be positive");
    if (!(delta > 0.0)) throw ValidationError("resonance: delta must be positive");
    const int Mc = sf.size();
    ResonanceBasis b;
    b.eps = eps;
    b.delta = delta;
    b.L = sf.L;
    b.J = static_cast<int>(std::floor(delta * delta / eps));

    std::vector<double> alpha(Mc);
    double top = 0.0;
    for (int i = 0; i < Mc; ++i) {
        alpha[i] = af.zw[i].alpha_bar;
        top = std::max(top, sf.k[i] * alpha[i]);
    }
    const double waves = top * sf.L / (2 * std::numbers::pi * eps) + b.J + 4;
    b.M = std::max({min_nodes, Mc, next_pow2(static_cast<int>(std::ceil(4 * waves)))});
    b.ds = b.L / b.M;
    b.k = resample_field(sf.k, sf.L, b.M);
    b.alpha = resample_field(alpha, sf.L, b.M);
    b.fp = resample_field(sf.fp, sf.L, b.M);
    b.q1 = resample_field(Q.q1, sf.L, b.M);
    b.q2 = resample_field(Q.q2, sf.L, b.M);
    b.q3 = resample_field(Q.q3, sf.L, b.M);
    b.weight.resize(b.M);
    for (int i = 0; i < b.M; ++i) {
        const double d = 1.0 + 2.0 * b.fp[i] * b.q3[i] / (b.k[i] * b.alpha[i]);
        if (!(d > 0.0)) throw SmallAViolation("resonance weight changes sign at grid node " + std::to_string(i));
        b.weight[i] = 1.0 / d;
    }
    b.D1 = fourier_d1(b.M, b.L);
    b.D2 = fourier_d2(b.M, b.L);

    // -eps^2 xi'' - k^2 a^2 xi = nu weight xi, symmetrized with weight^{-1/2}.
    Eigen::MatrixXd A = -eps * eps * b.D2;
    for (int i = 0; i < b.M; ++i) A(i, i) -= b.k[i] * b.k[i] * b.alpha[i] * b.alpha[i];
    const Eigen::VectorXd s = b.weight.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd S = s.asDiagonal() * A * s.asDiagonal();
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success) throw ConvergenceError("resonance eigensolver failed");
    b.all_nu = es.eigenvalues();
    b.j_eps = -1;
    for (int j = 0; j < b.M; ++j)
        if (b.all_nu[j] >= 0.0) {
            b.j_eps = j;
            break;
        }
    if (b.j_eps < 0 || b.j_eps - b.J < 0 || b.j_eps + b.J >= b.M)
        throw ValidationError("resonance: index window does not fit the discrete spectrum; refine the grid");

    const int n = b.count();
    b.nu.resize(n);
    b.xi.resize(b.M, n);
    for (int c = 0; c < n; ++c) {
        const int j = b.j_eps - b.J + c;
        b.nu[c] = b.all_nu[j];
        Eigen::VectorXd x = s.asDiagonal() * es.eigenvectors().col(j);
        // Normalize in L^2 with the weight; gauge by the first large entry.
        x /= std::sqrt((x.array().square() * b.weight.array()).sum() * b.ds);
        int pivot = 0;
        x.cwiseAbs().maxCoeff(&pivot);
        if (x[pivot] < 0.0) x = -x;
        b.xi.col(c) = x;
    }
    b.beta.resize(b.M, n);
    b.gamma.resize(b.M, n);
    b.kappa.resize(b.M, n);
    b.kappa_literal.resize(b.M, n);
    b.q.resize(b.M, n);
    for (int c = 0; c < n; ++c) {
        const Eigen::VectorXd dxi = b.D1 * b.xi.col(c);
        const double nu = b.nu[c];
        for (int i = 0; i < b.M; ++i) {
            const double ka = b.k[i] * b.alpha[i];
            const double den = ka * ka + 2 * b.fp[i] * ka * b.q3[i];
            b.beta(i, c) = -(1.0 / ka) * (1.0 - b.q1[i] * nu / den) * eps * dxi[i];
            b.gamma(i, c) = -eps * dxi[i] * nu / (2 * b.k[i] * den);
            // From kappa = (eps beta' - k alpha xi) / (2 k Q2) with the
            // eigen-relation substituted; see kappa_literal for the other form.
            b.kappa(i, c) = b.xi(i, c) * nu / (2 * b.k[i] * (ka + 2 * b.fp[i] * b.q3[i]));
            b.kappa_literal(i, c) = nu * b.weight[i] * b.xi(i, c) / (2 * b.k[i]);
            b.q(i, c) = b.xi(i, c) * nu / (2 * b.k[i] * (ka + 2 * b.fp[i] * b.q3[i]));
        }
    }
    return b;
}

CoupledResidual verify_coupled_system(const ResonanceBasis& b) {
    CoupledResidual out;
    const double e = b.eps;
    for (int c = 0; c < b.count(); ++c) {
        const Eigen::VectorXd be = b.beta.col(c), xi = b.xi.col(c);
        const Eigen::VectorXd dbe = b.D1 * be, dxi = b.D1 * xi;
        const Eigen::VectorXd d2be = b.D2 * be, d2xi = b.D2 * xi;
        const double nu = b.nu[c];
        Eigen::VectorXd r1(b.M), r2(b.M);
        for (int i = 0; i < b.M; ++i) {
            const double ka = b.k[i] * b.alpha[i];
            const double c1 = b.fp[i] == 0.0 || b.q3[i] == 0.0 ? 0.0 : 2 * b.fp[i] * b.q3[i] / b.q1[i];
            const double c2 = b.fp[i] == 0.0 || b.q3[i] == 0.0 ? 0.0 : 2 * b.fp[i] * b.q3[i] / b.q2[i];
            r1[i] = -e * e * d2be[i] - ka * ka * be[i] - c1 * (e * dxi[i] + ka * be[i]) - nu * be[i];
            r2[i] = -e * e * d2xi[i] - ka * ka * xi[i] + c2 * (e * dbe[i] - ka * xi[i]) - nu * xi[i];
        }
        const double size = std::sqrt(be.squaredNorm() + xi.squaredNorm());
        const double res = std::sqrt(r1.squaredNorm() + r2.squaredNorm()) / size;
        out.per_j.push_back(res);
        out.max_residual = std::max(out.max_residual, res);
        out.C = std::max(out.C, res / (nu * nu + e));
    }
    return out;
}

CorrectionCheck correction_identities(const ResonanceBasis& b) {
    CorrectionCheck out;
    const double e = b.eps;
    for (int c = 0; c < b.count(); ++c) {
        const double nu2 = b.nu[c] * b.nu[c];
        if (nu2 < 1e-14) continue;
        const Eigen::VectorXd g = b.gamma.col(c), ka = b.kappa.col(c), kl = b.kappa_literal.col(c);
        const Eigen::VectorXd dg = b.D1 * g, d2g = b.D2 * g;
        Eigen::VectorXd t1(b.M), t2(b.M), t3(b.M);
        for (int i = 0; i < b.M; ++i) {
            const double a2k2 = b.alpha[i] * b.alpha[i] * b.k[i] * b.k[i];
            t1[i] = -e * e * d2g[i] - a2k2 * g[i];
            t2[i] = -b.k[i] * b.alpha[i] * ka[i] + e * dg[i];
            t3[i] = -b.k[i] * b.alpha[i] * kl[i] + e * dg[i];
        }
        const double nb = grid_norm(b.beta.col(c), b.ds), nx = grid_norm(b.xi.col(c), b.ds);
        out.gamma_ratio = std::max(out.gamma_ratio, grid_norm(t1, b.ds) / nb / nu2);
        out.kappa_ratio = std::max(out.kappa_ratio, grid_norm(t2, b.ds) / nx / nu2);
        out.kappa_literal_ratio = std::max(out.kappa_literal_ratio, grid_norm(t3, b.ds) / nx / nu2);
    }
    return out;
}

Lambda0 assemble_lambda0(const ResonanceBasis& b) {
    const int n = b.count();
    const double e = b.eps;
    Lambda0 out;
    out.form = Eigen::MatrixXd::Zero(n, n);
    out.mass = Eigen::MatrixXd::Zero(n, n);
    const Eigen::MatrixXd dB = b.D1 * b.beta, dX = b.D1 * b.xi;
    for (int j = 0; j < n; ++j) {
        for (int l = 0; l < n; ++l) {
            double f = 0.0, m = 0.0;
            for (int i = 0; i < b.M; ++i) {
                const double ka = b.k[i] * b.alpha[i];
                const double B1 = b.beta(i, j), B2 = b.beta(i, l), X1 = b.xi(i, j), X2 = b.xi(i, l);
                f += b.q1[i] * (e * e * dB(i, j) * dB(i, l) - ka * ka * B1 * B2) +
                     b.q2[i] * (e * e * dX(i, j) * dX(i, l) - ka * ka * X1 * X2) +
                     2 * b.fp[i] * b.q3[i] * (e * dB(i, j) * X2 - e * dX(i, j) * B2 - ka * B1 * B2 - ka * X1 * X2);
                m += b.q1[i] * B1 * B2 + b.q2[i] * X1 * X2;
            }
            out.form(j, l) = f * b.ds;
            out.mass(j, l) = m * b.ds;
        }
    }
    const double nrm = out.form.norm();
    out.raw_asymmetry = nrm > 0.0 ? (out.form - out.form.transpose()).norm() / nrm : 0.0;
    out.form = 0.5 * (out.form + out.form.transpose());
    out.mass = 0.5 * (out.mass + out.mass.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(out.form, out.mass);
    if (es.info() != Eigen::Success) throw ConvergenceError("Lambda0 generalized eigensolver failed");
    out.eigenvalues = es.eigenvalues();
    Eigen::VectorXd nu = b.nu;
    std::sort(nu.data(), nu.data() + nu.size());
    for (int j = 0; j < n; ++j) {
        const double d = std::abs(out.eigenvalues[j] - nu[j]);
        out.max_deviation = std::max(out.max_deviation, d);
        out.C = std::max(out.C, d / (nu[j] * nu[j] + e));
    }
    return out;
}

double fit_weyl_constant(const ResonanceBasis& b, int fit_half) {
    if (fit_half < 1) throw ValidationError("fit_weyl_constant: window must contain at least three indices");
    if (b.j_eps - fit_half < 0 || b.j_eps + fit_half >= b.M)
        throw ValidationError("fit_weyl_constant: fit window exceeds the computed spectrum");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (int j = -fit_half; j <= fit_half; ++j) {
        const double y = b.all_nu[b.j_eps + j];
        sx += j;
        sy += y;
        sxx += j * j;
        sxy += j * y;
        ++cnt;
    }
    const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    return slope / b.eps;
}

GapScan gap_scan(const ScalingFields& sf, const AlphaField& af, const QIntegrals& Q, const std::vector<double>& eps_grid,
                 double delta, double threshold, int min_nodes) {
    for (std::size_t i = 1; i < eps_grid.size(); ++i)
        if (!(eps_grid[i] < eps_grid[i - 1])) throw ValidationError("gap_scan: eps grid must be descending");
    GapScan out;
    for (double eps : eps_grid) {
        const ResonanceBasis b = resonance_eigenpairs(sf, af, Q, eps, delta, min_nodes);
        const Lambda0 l0 = assemble_lambda0(b);
        GapRow row;
        row.eps = eps;
        row.min_abs = l0.eigenvalues.cwiseAbs().minCoeff();
        row.admitted = row.min_abs >= threshold * eps && row.min_abs > 1e-10;
        row.j_eps = b.j_eps;
        row.nu0 = b.nu[b.J];
        double inf = std::numeric_limits<double>::infinity();
        for (int i = 0; i < b.M; ++i) {
            const double ak = b.alpha[i] * b.k[i];
            inf = std::min(inf, 2 * ak * ak + 4 * b.fp[i] * ak * b.q3[i]);
        }
        row.kato_lower = (row.nu0 + inf) / eps;
        row.dnu0_deps = std::numeric_limits<double>::quiet_NaN();
        if (!out.rows.empty() && out.rows.back().j_eps == row.j_eps)
            row.dnu0_deps = (out.rows.back().nu0 - row.nu0) / (out.rows.back().eps - eps);
        if (row.admitted) out.admissible.push_back(eps);
        out.rows.push_back(row);
    }
    return out;
}

double sharp_norm(const std::vector<double>& b) {
    // Index j runs symmetrically around zero.
    const int J = static_cast<int>(b.size()) / 2;
    double s = 0.0;
    for (std::size_t c = 0; c < b.size(); ++c) {
        const double w = 1.0 + std::abs(static_cast<int>(c) - J);
        s += b[c] * b[c] * w * w;
    }
    return std::sqrt(s);
}

}  // namespace nlsc
