#include "nlsc/scalings.hpp"

#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <string>

#include "nlsc/errors.hpp"
#include "nlsc/periodic.hpp"
#include "nlsc/radial.hpp"

namespace nlsc {

Exponents compute_exponents(int n, double p) {
    if (!admissible_p(n, p))
        throw ValidationError("p = " + std::to_string(p) + " outside the admissible range for n = " +
                              std::to_string(n));
    Exponents e;
    e.n = n;
    e.p = p;
    e.sigma = (n - 1) * (p - 1) / 2.0 - 2.0;
    e.theta = p + 1.0 - 0.5 * (p - 1) * (n - 1);
    return e;
}

double ScalingFields::phase(double sbar) const {
    const double mean = phase_budget / L;
    std::vector<double> wiggle(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) wiggle[i] = f[i] - mean * (L * i / f.size());
    return TrigSeries(wiggle, L)(sbar) + mean * sbar;
}

double ScalingFields::consistency(const PotentialData& pot) const {
    double worst = 0.0;
    for (int i = 0; i < size(); ++i) {
        worst = std::max(worst, std::abs(k[i] * k[i] - fp[i] * fp[i] - pot.V[i]));
        worst = std::max(worst, std::abs(std::pow(h[i], ex.p - 1) - k[i] * k[i]));
    }
    return worst;
}

double small_A_ratio(const ScalingFields& sf) {
    const auto& e = sf.ex;
    double worst = 0.0;
    for (double hv : sf.h)
        worst = std::max(worst, 2.0 * e.sigma * sf.A * sf.A * std::pow(hv, 2 * e.sigma - e.p + 1) / (e.p - 1));
    return worst;
}

namespace {

void guard_small_A(const ScalingFields& sf) {
    const double r = small_A_ratio(sf);
    if (r >= 0.5)
        throw SmallAViolation("phase constant A = " + std::to_string(sf.A) +
                              " too large: 2 sigma A^2 h^{2 sigma - p + 1}/(p-1) reaches " + std::to_string(r) +
                              " (must stay below 1/2)");
}

// Second-order periodic conservative stencil -(c u')' as a dense matrix,
// with c at half nodes taken as the average of neighbours.
void add_divergence(Eigen::MatrixXd& A, const std::vector<double>& c, double ds, int block, int comp,
                    double sign) {
    const int M = static_cast<int>(c.size());
    const double inv = sign / (ds * ds);
    for (int i = 0; i < M; ++i) {
        const int ip = (i + 1) % M, im = (i + M - 1) % M;
        const double cp = 0.5 * (c[i] + c[ip]), cm = 0.5 * (c[i] + c[im]);
        const int r = i * block + comp;
        A(r, ip * block + comp) -= inv * cp;
        A(r, im * block + comp) -= inv * cm;
        A(r, r) += inv * (cp + cm);
    }
}

}  // namespace

ScalingFields compute_scalings(const CurveData& curve, const PotentialData& pot, double A,
                               const Exponents& ex) {
    if (A < 0.0) throw ValidationError("phase constant A must be nonnegative");
    const int M = curve.M;
    ScalingFields sf;
    sf.ex = ex;
    sf.A = A;
    sf.L = curve.L;
    sf.h.resize(M);
    sf.k.resize(M);
    sf.fp.resize(M);
    sf.f1p.assign(M, 0.0);
    const double q = 2.0 * ex.sigma / (ex.p - 1);
    for (int i = 0; i < M; ++i) {
        const double V = pot.V[i];
        double u = V;
        bool ok = A == 0.0;
        for (int it = 0; it < 100 && !ok; ++it) {
            const double g = u - V - A * A * std::pow(u, q);
            const double dg = 1.0 - A * A * q * std::pow(u, q - 1);
            if (!(dg > 0.0) || !std::isfinite(g)) break;
            const double step = g / dg;
            u -= step;
            if (!(u > 0.0)) break;
            if (std::abs(step) <= 1e-15 * u) ok = true;
        }
        if (!ok || !(u > 0.0))
            throw ConvergenceError("scalar scaling equation diverged at node " + std::to_string(i) +
                                   "; try a smaller A");
        sf.k[i] = std::sqrt(u);
        sf.h[i] = std::pow(u, 1.0 / (ex.p - 1));
        sf.fp[i] = A * std::pow(sf.h[i], ex.sigma);
        // Keep k^2 = f'^2 + V exact to rounding.
        sf.k[i] = std::sqrt(sf.fp[i] * sf.fp[i] + V);
        sf.h[i] = std::pow(sf.k[i] * sf.k[i], 1.0 / (ex.p - 1));
    }
    guard_small_A(sf);
    sf.phase_budget = periodic_integral(sf.fp, curve.L);
    sf.f = spectral_antiderivative(sf.fp, curve.L);
    return sf;
}

std::vector<double> compute_f1(const ScalingFields& sf, const std::vector<Eigen::VectorXd>& Phi,
                               double A_prime, const CurveData& curve) {
    guard_small_A(sf);
    const auto& e = sf.ex;
    const double p = e.p;
    std::vector<double> out(sf.size());
    for (int i = 0; i < sf.size(); ++i) {
        const double h = sf.h[i], kk = std::pow(sf.k[i], e.n + 1);
        const double den = (p - 1) * std::pow(h, p + 1) - 2 * e.sigma * sf.A * sf.A * std::pow(h, 2 * e.sigma + 2);
        if (!(den > 0.0)) throw SmallAViolation("f1 denominator vanishes at node " + std::to_string(i));
        const double hphi = Phi.empty() ? 0.0 : curve.Hc[i].dot(Phi[i]);
        out[i] = 2 * sf.A * (p - 1) * kk / den * ((p - 1) / (2 * e.theta) - 1) * hphi + A_prime * (p - 1) * kk / den;
    }
    return out;
}

double f1_equation_residual(const ScalingFields& sf, const std::vector<double>& f1p,
                            const std::vector<Eigen::VectorXd>& Phi, const CurveData& curve) {
    const auto& e = sf.ex;
    const int M = sf.size();
    std::vector<double> flux(M), hphi(M);
    for (int i = 0; i < M; ++i) {
        const double h = sf.h[i];
        flux[i] = h * h * f1p[i] / ((e.p - 1) * std::pow(sf.k[i], e.n + 1)) *
                  ((e.p - 1) * std::pow(h, e.p - 1) - 2 * e.sigma * sf.A * sf.A * std::pow(h, 2 * e.sigma));
        hphi[i] = Phi.empty() ? 0.0 : curve.Hc[i].dot(Phi[i]);
    }
    const auto lhs = spectral_derivative(flux, sf.L);
    const auto rhs = spectral_derivative(hphi, sf.L);
    const double c = 2 * sf.A * ((e.p - 1) / (2 * e.theta) - 1);
    double worst = 0.0;
    for (int i = 0; i < M; ++i) worst = std::max(worst, std::abs(lhs[i] - c * rhs[i]));
    return worst;
}

EulerResidual euler_residual(const CurveData& curve, const PotentialData& pot, const ScalingFields& sf) {
    const auto& e = sf.ex;
    EulerResidual r;
    r.values.resize(curve.M);
    for (int i = 0; i < curve.M; ++i) {
        const double h = sf.h[i];
        const double c = (e.p - 1) / e.theta * std::pow(h, e.p - 1) - 2 * sf.A * sf.A * std::pow(h, 2 * e.sigma);
        r.values[i] = pot.gradN[i] - c * curve.Hc[i];
        r.sup = std::max(r.sup, r.values[i].cwiseAbs().maxCoeff());
    }
    return r;
}

double reduced_functional(const ScalingFields& sf) {
    std::vector<double> v(sf.h.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::pow(sf.h[i], sf.ex.theta);
    return periodic_integral(v, sf.L);
}

JacobiMatrix assemble_jacobi(const CurveData& curve, const PotentialData& pot, const ScalingFields& sf) {
    guard_small_A(sf);
    const auto& e = sf.ex;
    const double p = e.p, th = e.theta, sg = e.sigma, A2 = sf.A * sf.A;
    const int M = curve.M, N = curve.rank();
    JacobiMatrix J;
    J.rank = N;
    J.ds = curve.L / M;
    J.J = Eigen::MatrixXd::Zero(N * M, N * M);
    J.offset = Eigen::VectorXd::Zero(N * M);
    J.weight.resize(M);
    std::vector<double> a(M);
    for (int i = 0; i < M; ++i) {
        const double h = sf.h[i];
        a[i] = std::pow(h, th) - 2 * A2 * th / (p - 1) * std::pow(h, sg);
        J.weight[i] = std::pow(h, th);
    }
    // The first two terms are -(a V')' since a' = theta (h^{theta-1} - ...) h'.
    for (int m = 0; m < N; ++m) add_divergence(J.J, a, J.ds, N, m, 1.0);
    for (int i = 0; i < M; ++i) {
        const double h = sf.h[i];
        const Eigen::VectorXd& H = curve.Hc[i];
        const double den = (p - 1) * std::pow(h, th) - 2 * A2 * sg * std::pow(h, sg);
        if (!(den > 0.0)) throw SmallAViolation("Jacobi denominator vanishes at node " + std::to_string(i));
        const double bracket = (-(p - 1) * (3 + sg / th) * std::pow(h, 2 * th) -
                                16 * sg * th * A2 * A2 / (p - 1) * std::pow(h, 2 * sg) +
                                2 * A2 * (5 * sg + 3 * th) * std::pow(h, th + sg)) /
                               den;
        for (int m = 0; m < N; ++m) {
            for (int j = 0; j < N; ++j) {
                double v = th / (p - 1) * std::pow(h, -sg) * pot.hessN[i](j, m);
                v += 0.5 * a[i] * pot.d2g11[i](j, m);
                v += H[m] * H[j] * bracket;
                J.J(i * N + m, i * N + j) += v;
            }
            J.offset[i * N + m] = -2 * sf.A * sf.A1_prime * (th - sg) * std::pow(h, p - 1) / den * H[m];
        }
    }
    const double nrm = J.J.norm();
    J.raw_asymmetry = nrm > 0 ? (J.J - J.J.transpose()).norm() / nrm : 0.0;
    J.J = 0.5 * (J.J + J.J.transpose());
    return J;
}

PhaseOperator assemble_T(const ScalingFields& sf) {
    guard_small_A(sf);
    const auto& e = sf.ex;
    const int M = sf.size();
    PhaseOperator T;
    T.ds = sf.L / M;
    T.coefficient.resize(M);
    T.weight.resize(M);
    for (int i = 0; i < M; ++i) {
        const double h = sf.h[i];
        const double c = h * h / ((e.p - 1) * std::pow(sf.k[i], e.n + 1)) *
                         ((e.p - 1) * std::pow(h, e.p - 1) - 2 * e.sigma * sf.A * sf.A * std::pow(h, 2 * e.sigma));
        if (!(c > 0.0)) throw SmallAViolation("phase operator coefficient not positive at node " + std::to_string(i));
        T.coefficient[i] = c;
        T.weight[i] = std::pow(h, -e.sigma);
    }
    T.T = Eigen::MatrixXd::Zero(M, M);
    // T f = (c f')', the negative of the divergence stencil.
    add_divergence(T.T, T.coefficient, T.ds, 1, 0, -1.0);
    return T;
}

WeightedEigenbasis weighted_eigenbasis(const Eigen::MatrixXd& A, const std::vector<double>& weight, int block,
                                       double ds, int count) {
    const int size = static_cast<int>(A.rows());
    if (static_cast<int>(weight.size()) * block != size)
        throw ValidationError("weighted eigenbasis: weight length does not match the operator");
    Eigen::VectorXd w(size);
    for (int i = 0; i < size; ++i) {
        w[i] = weight[static_cast<std::size_t>(i / block)];
        if (!(w[i] > 0.0)) throw ValidationError("weighted eigenbasis: weight must be positive");
    }
    // Symmetric scaling D^{-1/2} A D^{-1/2} keeps the solve well conditioned.
    const Eigen::VectorXd isw = w.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd S = isw.asDiagonal() * A * isw.asDiagonal();
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success) throw ConvergenceError("weighted eigenbasis: eigensolver failed");
    const int keep = count > 0 ? std::min(count, size) : size;
    WeightedEigenbasis out;
    out.values = es.eigenvalues().head(keep);
    out.vectors = (isw.asDiagonal() * es.eigenvectors().leftCols(keep)) / std::sqrt(ds);
    const Eigen::MatrixXd G = out.vectors.transpose() * (ds * w).asDiagonal() * out.vectors;
    out.orthonormality_error = (G - Eigen::MatrixXd::Identity(keep, keep)).cwiseAbs().maxCoeff();
    const Eigen::VectorXd all = es.eigenvalues().cwiseAbs();
    out.min_abs = all.minCoeff();
    out.max_abs = all.maxCoeff();
    out.nondegenerate = out.min_abs > 1e-6 * out.max_abs;
    return out;
}

double adjust_A_for_eps(const CurveData& curve, const PotentialData& pot, const Exponents& ex, double A,
                        double eps, double eps_new) {
    if (A == 0.0) return 0.0;
    const double target = compute_scalings(curve, pot, A, ex).phase_budget / eps * eps_new;
    auto g = [&](double a) { return compute_scalings(curve, pot, a, ex).phase_budget - target; };
    // The budget is increasing in A on the small-A range; bracket and bisect.
    double lo = 0.0, hi = A * std::max(1.0, 2.0 * eps_new / eps);
    for (int it = 0; it < 60 && g(hi) < 0.0; ++it) hi *= 2.0;
    boost::math::tools::eps_tolerance<double> tol(52);
    std::uintmax_t iters = 200;
    const auto root = boost::math::tools::bisect(g, lo, hi, tol, iters);
    return 0.5 * (root.first + root.second);
}

namespace {

double signed_circle_residual(const Expression& V, int n, double A, const Exponents& ex, double r, int M,
                              double* sup = nullptr, double* functional = nullptr) {
    CurveSpec spec;
    spec.kind = CurveSpec::Kind::Circle;
    spec.n = n;
    spec.radius = r;
    const CurveData curve = build_curve(spec, M);
    const PotentialData pot = sample_potential(V, curve);
    const ScalingFields sf = compute_scalings(curve, pot, A, ex);
    const EulerResidual eu = euler_residual(curve, pot, sf);
    if (sup != nullptr) *sup = eu.sup;
    if (functional != nullptr) *functional = reduced_functional(sf);
    const Eigen::VectorXd& H = curve.Hc[0];
    return eu.values[0].dot(H) / H.norm();
}

}  // namespace

CriticalCircle critical_circle(const Expression& V, int n, double A, const Exponents& ex, double r_lo,
                               double r_hi, int M, int scan) {
    if (!(r_lo > 0.0 && r_hi > r_lo) || scan < 2 || M < 8)
        throw ValidationError("critical circle: need 0 < r_lo < r_hi, scan >= 2 and M >= 8");
    auto g = [&](double r) { return signed_circle_residual(V, n, A, ex, r, M); };
    double a = r_lo, ga = g(a);
    for (int i = 1; i <= scan; ++i) {
        const double b = r_lo + (r_hi - r_lo) * i / scan, gb = g(b);
        if (ga == 0.0 || (ga < 0.0) != (gb < 0.0)) {
            double root = a;
            if (ga != 0.0) {
                boost::uintmax_t iters = 200;
                const auto br = boost::math::tools::toms748_solve(
                    g, a, b, ga, gb, boost::math::tools::eps_tolerance<double>(50), iters);
                root = 0.5 * (br.first + br.second);
            }
            CriticalCircle c;
            c.radius = root;
            signed_circle_residual(V, n, A, ex, root, M, &c.euler_sup, &c.functional);
            return c;
        }
        a = b;
        ga = gb;
    }
    throw ConvergenceError("critical circle: the Euler residual keeps one sign on the scanned radii");
}

}  // namespace nlsc
