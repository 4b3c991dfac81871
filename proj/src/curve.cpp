#include "nlsc/curve.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <unsupported/Eigen/MatrixFunctions>

#include "nlsc/errors.hpp"

namespace nlsc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// x(t), x'(t), x''(t) on t in [0, 2 pi).
struct Parameterization {
    std::function<Eigen::VectorXd(double, int)> eval;
};

Eigen::VectorXd unit(int n, int k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[k] = 1.0;
    return e;
}

Parameterization make_parameterization(const CurveSpec& spec) {
    const int n = spec.n;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    if (!spec.center.empty())
        for (int i = 0; i < n; ++i) c[i] = spec.center[i];
    const Eigen::VectorXd ea = unit(n, spec.axis_a), eb = unit(n, spec.axis_b);
    switch (spec.kind) {
        case CurveSpec::Kind::Circle:
        case CurveSpec::Kind::Ellipse: {
            const double A = spec.kind == CurveSpec::Kind::Circle ? spec.radius : spec.a;
            const double B = spec.kind == CurveSpec::Kind::Circle ? spec.radius : spec.b;
            return {[=](double t, int d) -> Eigen::VectorXd {
                // d-th derivative of (A cos t, B sin t).
                const double ct = std::cos(t + 0.5 * std::numbers::pi * d);
                const double st = std::sin(t + 0.5 * std::numbers::pi * d);
                Eigen::VectorXd v = A * ct * ea + B * st * eb;
                if (d == 0) v += c;
                return v;
            }};
        }
        case CurveSpec::Kind::Parametric: {
            const int K = static_cast<int>(spec.points.size());
            std::vector<TrigSeries> comp;
            for (int i = 0; i < n; ++i) {
                std::vector<double> v(static_cast<std::size_t>(K));
                for (int k = 0; k < K; ++k) v[k] = spec.points[k][i];
                comp.emplace_back(v, kTwoPi);
            }
            return {[=](double t, int d) -> Eigen::VectorXd {
                Eigen::VectorXd v(n);
                for (int i = 0; i < n; ++i) v[i] = comp[i].eval(t, d);
                return v;
            }};
        }
    }
    throw ValidationError("unknown curve kind");
}

double seg_point_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd ab = b - a;
    double t = ab.squaredNorm() > 0 ? (p - a).dot(ab) / ab.squaredNorm() : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (a + t * ab - p).norm();
}

void check_simple(const Parameterization& par) {
    const int K = 512;
    std::vector<Eigen::VectorXd> P(K);
    double min_step = 1e300;
    for (int k = 0; k < K; ++k) P[k] = par.eval(kTwoPi * k / K, 0);
    for (int k = 0; k < K; ++k) min_step = std::min(min_step, (P[(k + 1) % K] - P[k]).norm());
    if (!(min_step > 0.0)) throw ValidationError("parametric curve has a stationary point");
    for (int i = 0; i < K; ++i) {
        for (int j = i + 3; j < K; ++j) {
            if (i == 0 && j >= K - 2) continue;
            const double d = std::min(seg_point_distance(P[i], P[j], P[(j + 1) % K]),
                                      seg_point_distance(P[j], P[i], P[(i + 1) % K]));
            if (d < 0.25 * min_step)
                throw ValidationError("parametric curve is self-intersecting (or nearly so)");
        }
    }
}

// Double-reflection transport of the columns of F from (x0, t0) to (x1, t1).
Eigen::MatrixXd transport(const Eigen::MatrixXd& F, const Eigen::VectorXd& x0, const Eigen::VectorXd& t0,
                          const Eigen::VectorXd& x1, const Eigen::VectorXd& t1) {
    const Eigen::VectorXd v1 = x1 - x0;
    const double c1 = v1.squaredNorm();
    Eigen::MatrixXd R = F;
    Eigen::VectorXd tl = t0;
    if (c1 > 0.0) {
        R -= (2.0 / c1) * v1 * (v1.transpose() * F);
        tl -= (2.0 / c1) * v1.dot(t0) * v1;
    }
    const Eigen::VectorXd v2 = t1 - tl;
    const double c2 = v2.squaredNorm();
    if (c2 > 1e-300) R -= (2.0 / c2) * v2 * (v2.transpose() * R);
    return R;
}

Eigen::MatrixXd initial_normals(const Eigen::VectorXd& T) {
    const int n = static_cast<int>(T.size());
    Eigen::MatrixXd F(n, n - 1);
    int col = 0;
    std::vector<Eigen::VectorXd> basis{T};
    for (int k = 0; k < n && col < n - 1; ++k) {
        Eigen::VectorXd v = unit(n, k);
        for (const auto& b : basis) v -= v.dot(b) * b;
        if (v.norm() < 1e-6) continue;
        v.normalize();
        basis.push_back(v);
        F.col(col++) = v;
    }
    return F;
}

}  // namespace

void CurveSpec::validate() const {
    if (n < 2) throw ValidationError("curve: ambient dimension must be >= 2");
    if (!center.empty() && static_cast<int>(center.size()) != n)
        throw ValidationError("curve: center has wrong dimension");
    if (axis_a < 0 || axis_b < 0 || axis_a >= n || axis_b >= n || axis_a == axis_b)
        throw ValidationError("curve: plane axes must be two distinct coordinates");
    switch (kind) {
        case Kind::Circle:
            if (!(radius > 0.0)) throw ValidationError("curve: circle radius must be positive");
            break;
        case Kind::Ellipse:
            if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("curve: ellipse semi-axes must be positive");
            break;
        case Kind::Parametric:
            if (points.size() < 8) throw ValidationError("curve: parametric loop needs at least 8 points");
            for (const auto& p : points)
                if (p.size() != n) throw ValidationError("curve: parametric point with wrong dimension");
            break;
    }
}

CurveData build_curve(const CurveSpec& spec, int M) {
    spec.validate();
    if (M < 64) throw ValidationError("curve: at least 64 samples required");
    const Parameterization par = make_parameterization(spec);
    if (spec.kind == CurveSpec::Kind::Parametric) check_simple(par);
    const int n = spec.n;

    // Arc length from the parameter speed; spectral trapezoid rule.
    const int Q = std::max(4 * M, 1024);
    std::vector<double> speed(static_cast<std::size_t>(Q));
    for (int k = 0; k < Q; ++k) speed[k] = par.eval(kTwoPi * k / Q, 1).norm();
    const double L = periodic_integral(speed, kTwoPi);
    const double mean = L / kTwoPi;
    std::vector<double> wiggle(speed);
    for (double& v : wiggle) v -= mean;
    const TrigSeries A(spectral_antiderivative(wiggle, kTwoPi), kTwoPi);
    const double A0 = A(0.0);
    auto arc = [&](double t) { return mean * t + A(t) - A0; };

    CurveData c;
    c.n = n;
    c.M = M;
    c.L = L;
    c.s.resize(M);
    c.X.resize(M);
    c.T.resize(M);
    c.H.resize(M);
    std::vector<double> tpar(M);
    for (int i = 0; i < M; ++i) {
        const double target = L * i / M;
        double t = kTwoPi * i / M;
        for (int it = 0; it < 50; ++it) {
            const double dt = (arc(t) - target) / par.eval(t, 1).norm();
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        tpar[i] = t;
        c.s[i] = target;
        const Eigen::VectorXd d1 = par.eval(t, 1), d2 = par.eval(t, 2);
        const double sp = d1.norm();
        c.X[i] = par.eval(t, 0);
        c.T[i] = d1 / sp;
        c.H[i] = (d2 - d2.dot(c.T[i]) * c.T[i]) / (sp * sp);
    }

    // Normal frame.
    c.E.resize(M);
    if (n == 2) {
        for (int i = 0; i < M; ++i) {
            Eigen::MatrixXd F(2, 1);
            F(0, 0) = c.T[i][1];
            F(1, 0) = -c.T[i][0];
            c.E[i] = F;
        }
    } else {
        c.E[0] = initial_normals(c.T[0]);
        for (int i = 1; i < M; ++i) c.E[i] = transport(c.E[i - 1], c.X[i - 1], c.T[i - 1], c.X[i], c.T[i]);
        const Eigen::MatrixXd closed = transport(c.E[M - 1], c.X[M - 1], c.T[M - 1], c.X[0], c.T[0]);
        Eigen::MatrixXd R = c.E[0].transpose() * closed;
        // Re-orthogonalize the closing rotation before taking its logarithm.
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
        R = svd.matrixU() * svd.matrixV().transpose();
        Eigen::MatrixXd logR = R.log();
        logR = 0.5 * (logR - logR.transpose());
        c.holonomy_angle = n == 3 ? std::atan2(R(1, 0), R(0, 0)) : logR.norm() / std::sqrt(2.0);
        for (int i = 0; i < M; ++i) {
            const Eigen::MatrixXd Q = (-(static_cast<double>(i) / M) * logR).exp();
            c.E[i] = c.E[i] * Q;
        }
        const Eigen::MatrixXd Qlast = (-(1.0 / M) * logR).exp();
        const Eigen::MatrixXd wrap =
            transport(c.E[M - 1], c.X[M - 1], c.T[M - 1], c.X[0], c.T[0]) * Qlast;
        c.seam_jump = (wrap - c.E[0]).cwiseAbs().maxCoeff();
    }
    c.Hc.resize(M);
    for (int i = 0; i < M; ++i) c.Hc[i] = c.E[i].transpose() * c.H[i];

    // Interpolants.
    std::vector<double> buf(M);
    for (int d = 0; d < n; ++d) {
        for (int i = 0; i < M; ++i) buf[i] = c.X[i][d];
        c.x_series.emplace_back(buf, L);
    }
    for (int j = 0; j < n - 1; ++j)
        for (int d = 0; d < n; ++d) {
            for (int i = 0; i < M; ++i) buf[i] = c.E[i](d, j);
            c.e_series.emplace_back(buf, L);
        }
    for (int j = 0; j < n - 1; ++j) {
        for (int i = 0; i < M; ++i) buf[i] = c.Hc[i][j];
        c.h_series.emplace_back(buf, L);
    }
    return c;
}

Eigen::VectorXd CurveData::position(double sbar) const {
    Eigen::VectorXd v(n);
    for (int d = 0; d < n; ++d) v[d] = x_series[d](sbar);
    return v;
}

Eigen::MatrixXd CurveData::frame(double sbar) const {
    Eigen::MatrixXd F(n, n - 1);
    for (int j = 0; j < n - 1; ++j)
        for (int d = 0; d < n; ++d) F(d, j) = e_series[static_cast<std::size_t>(j * n + d)](sbar);
    return F;
}

Eigen::VectorXd CurveData::curvature(double sbar, int derivative) const {
    Eigen::VectorXd v(n - 1);
    for (int j = 0; j < n - 1; ++j) v[j] = h_series[j].eval(sbar, derivative);
    return v;
}

double CurveData::transport_defect() const {
    double worst = 0.0;
    std::vector<std::vector<double>> dE;
    for (const auto& ser : e_series) dE.push_back(ser.derivative_samples(1));
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < n - 1; ++j)
            for (int l = 0; l < n - 1; ++l) {
                if (j == l) continue;
                double dot = 0.0;
                for (int d = 0; d < n; ++d) dot += dE[static_cast<std::size_t>(j * n + d)][i] * E[i](d, l);
                worst = std::max(worst, std::abs(dot));
            }
    return worst;
}

void CurveData::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(15);
    out << "s";
    for (int d = 0; d < n; ++d) out << ",x" << d + 1;
    for (int d = 0; d < n; ++d) out << ",t" << d + 1;
    for (int j = 0; j < n - 1; ++j) out << ",H" << j + 1;
    out << '\n';
    for (int i = 0; i < M; ++i) {
        out << s[i];
        for (int d = 0; d < n; ++d) out << ',' << X[i][d];
        for (int d = 0; d < n; ++d) out << ',' << T[i][d];
        for (int j = 0; j < n - 1; ++j) out << ',' << Hc[i][j];
        out << '\n';
    }
}

void PotentialData::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(15);
    const int r = gradN.empty() ? 0 : static_cast<int>(gradN[0].size());
    out << "i,V";
    for (int j = 0; j < r; ++j) out << ",dV" << j + 1;
    for (int j = 0; j < r; ++j)
        for (int l = j; l < r; ++l) out << ",d2V" << j + 1 << l + 1;
    out << '\n';
    for (std::size_t i = 0; i < V.size(); ++i) {
        out << i << ',' << V[i];
        for (int j = 0; j < r; ++j) out << ',' << gradN[i][j];
        for (int j = 0; j < r; ++j)
            for (int l = j; l < r; ++l) out << ',' << hessN[i](j, l);
        out << '\n';
    }
}

PotentialData sample_potential(const Expression& Vx, const CurveData& curve, double V1, double V2) {
    if (Vx.dim() != curve.n) throw ValidationError("potential dimension differs from the curve's");
    const int r = curve.rank();
    PotentialData P;
    P.V.resize(curve.M);
    P.gradN.resize(curve.M);
    P.hessN.resize(curve.M);
    P.d2g11.resize(curve.M);
    P.V_min = 1e300;
    P.V_max = -1e300;
    auto f = [&](const Eigen::VectorXd& x) { return Vx(std::span<const double>(x.data(), x.size())); };
    for (int i = 0; i < curve.M; ++i) {
        const Eigen::VectorXd& x = curve.X[i];
        const double scale = std::max(1.0, x.norm());
        const double d = 1e-3 * scale;
        const double v0 = f(x);
        if (!(v0 > 0.0) || !std::isfinite(v0))
            throw ValidationError("potential is not positive on the curve (node " + std::to_string(i) + ")");
        P.V[i] = v0;
        P.V_min = std::min(P.V_min, v0);
        P.V_max = std::max(P.V_max, v0);
        Eigen::VectorXd g(r);
        Eigen::MatrixXd Hs(r, r);
        for (int j = 0; j < r; ++j) {
            const Eigen::VectorXd ej = curve.E[i].col(j);
            auto grad = [&](double t) { return (f(x + t * ej) - f(x - t * ej)) / (2.0 * t); };
            auto second = [&](double t) { return (f(x + t * ej) - 2.0 * v0 + f(x - t * ej)) / (t * t); };
            g[j] = (4.0 * grad(0.5 * d) - grad(d)) / 3.0;
            Hs(j, j) = (4.0 * second(0.5 * d) - second(d)) / 3.0;
            for (int l = 0; l < j; ++l) {
                const Eigen::VectorXd el = curve.E[i].col(l);
                auto mixed = [&](double t) {
                    return (f(x + t * ej + t * el) - f(x + t * ej - t * el) - f(x - t * ej + t * el) +
                            f(x - t * ej - t * el)) /
                           (4.0 * t * t);
                };
                Hs(j, l) = Hs(l, j) = (4.0 * mixed(0.5 * d) - mixed(d)) / 3.0;
            }
        }
        P.gradN[i] = g;
        P.hessN[i] = Hs;
        P.d2g11[i] = 2.0 * curve.Hc[i] * curve.Hc[i].transpose();
    }
    if (V2 >= V1 && V1 > 0.0 && (P.V_min < V1 || P.V_max > V2))
        throw ValidationError("potential leaves the configured bounds [V1, V2] on the curve");
    return P;
}

double tube_volume(const CurveData& curve, double rho, int radial_nodes) {
    const int N = curve.rank();
    if (N > 2) throw ValidationError("tube volume quadrature implemented for n <= 3");
    // Gauss-Legendre in the radial (or linear) variable; the metric factor is
    // |1 - <H, y>| with y in the normal frame.
    std::vector<double> xg(radial_nodes), wg(radial_nodes);
    {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(radial_nodes, radial_nodes);
        for (int k = 1; k < radial_nodes; ++k) J(k, k - 1) = J(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
        for (int k = 0; k < radial_nodes; ++k) {
            xg[k] = es.eigenvalues()[k];
            wg[k] = 2.0 * es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
        }
    }
    const double ds = curve.L / curve.M;
    double vol = 0.0;
    for (int i = 0; i < curve.M; ++i) {
        const Eigen::VectorXd& H = curve.Hc[i];
        double cross = 0.0;
        if (N == 1) {
            for (int k = 0; k < radial_nodes; ++k) {
                const double y = rho * xg[k];
                cross += rho * wg[k] * std::abs(1.0 - H[0] * y);
            }
        } else {
            const int nth = 4 * radial_nodes;
            for (int k = 0; k < radial_nodes; ++k) {
                const double r = 0.5 * rho * (xg[k] + 1.0);
                for (int a = 0; a < nth; ++a) {
                    const double th = kTwoPi * a / nth;
                    const double y1 = r * std::cos(th), y2 = r * std::sin(th);
                    cross += 0.5 * rho * wg[k] * r * (kTwoPi / nth) * std::abs(1.0 - H[0] * y1 - H[1] * y2);
                }
            }
        }
        vol += cross * ds;
    }
    return vol;
}

}  // namespace nlsc
