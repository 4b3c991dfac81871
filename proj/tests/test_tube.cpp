#include <doctest.h>

#include <map>
#include <random>

#include "common.hpp"
#include "nlsc/errors.hpp"
#include "nlsc/tube.hpp"

using namespace nlsc;
using testing_support::pi;
using cplx = std::complex<double>;

namespace {

constexpr int n = 2;
constexpr double p = 3.0;
const char* const radial_V = "1 + 8/r^2";  // critical circle r = 4 at A = 0

const CorrectorProfiles& profiles() {
    static const CorrectorProfiles prof = corrector_profiles(n, p, RadialGrid{45.0, 6001}, true);
    return prof;
}

struct Fixture {
    Expression V;
    CurveData curve;
    PotentialData pot;
    ScalingFields sf;
    CorrectorSet corr;
};

Fixture make(const std::string& V, double R, double A) {
    const Expression e = Expression::parse(V, n);
    CurveSpec spec;
    spec.radius = R;
    CurveData curve = build_curve(spec, 64);
    PotentialData pot = sample_potential(e, curve);
    ScalingFields sf = compute_scalings(curve, pot, A, compute_exponents(n, p));
    CorrectorSet corr = first_correctors(curve, pot, sf, profiles(), {});
    second_correctors(corr, curve, pot, {});
    return {e, std::move(curve), std::move(pot), std::move(sf), std::move(corr)};
}

const Fixture& critical(double A) {
    static std::map<double, Fixture> cache;
    auto it = cache.find(A);
    if (it != cache.end()) return it->second;
    const Exponents ex = compute_exponents(n, p);
    const double R = A == 0.0 ? 4.0 : critical_circle(Expression::parse(radial_V, n), n, A, ex, 2.0, 8.0).radius;
    return cache.emplace(A, make(radial_V, R, A)).first->second;
}

double y_of(const TubeGrid& g, std::size_t q) {
    double y = 0.0;
    g.point(q, &y);
    return y;
}

TubeField constant_field(const TubeGrid& g, cplx c) {
    TubeField f;
    f.values.assign(g.size(), c);
    f.phase.assign(static_cast<std::size_t>(g.Ns), 0.0);
    return f;
}

double max_abs(const std::vector<cplx>& v) {
    double m = 0.0;
    for (const cplx& x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST_SUITE("tube") {
    TEST_CASE("first correctors vanish without phase and section") {
        const Fixture& f = critical(0.0);
        for (int i = 0; i < f.corr.size(); ++i) {
            CHECK(f.corr.c_re[i] == 0.0);
            CHECK(f.corr.c_ie[i] == 0.0);
            CHECK(f.corr.c_io[i].norm() == 0.0);
        }
        Eigen::VectorXd z(1), mz(1);
        for (double y : {0.3, 1.0, 2.5}) {
            z[0] = y;
            mz[0] = -y;
            const cplx a = first_corrector_value(f.corr, 7, z), b = first_corrector_value(f.corr, 7, mz);
            CHECK(a.imag() == 0.0);
            CHECK(std::abs(a.real() + b.real()) < 1e-14);
            CHECK(std::abs(a.real()) > 0.0);
        }
    }

    TEST_CASE("odd corrector profile reproduces its source") {
        // -P'' + P - p U^{p-1} P = rho U - c U' in one transverse dimension.
        const CorrectorProfiles& pr = profiles();
        const RadialProfile d2P = differentiate(differentiate(pr.P));
        double worst = 0.0, scale = 0.0;
        for (int i = 0; i < pr.P.grid.m; ++i) {
            const double r = pr.P.grid.r(i);
            if (r < 0.5 || r > 20.0) continue;
            const double u = pr.U.at(i);
            const double rhs = r * u - pr.c_ratio * pr.dU.at(i);
            const double lhs = -d2P.at(i) + pr.P.at(i) - p * std::pow(u, p - 1) * pr.P.at(i);
            worst = std::max(worst, std::abs(lhs - rhs));
            scale = std::max(scale, std::abs(rhs));
        }
        CHECK(worst < 1e-7 * scale);
        CHECK(pr.max_roundtrip < 1e-7);
    }

    TEST_CASE("non-critical curves are rejected") {
        CHECK_THROWS_AS(make("1", 1.0, 0.0), CurveNotCritical);
        CHECK_THROWS_AS(make(radial_V, 5.0, 0.0), CurveNotCritical);
        CHECK_NOTHROW(make(radial_V, 4.0, 0.0));
        const Fixture& f = critical(0.0);
        CHECK(f.corr.wro_removed < 1e-9);
    }

    TEST_CASE("second correctors") {
        const Fixture& f = critical(0.05);
        for (double c : f.corr.c_tv) CHECK(c == 0.0);
        CHECK(profiles().max_roundtrip < 1e-6);
        // Source parity: real part even, imaginary part odd.
        Eigen::VectorXd z(1), mz(1);
        double im = 0.0;
        for (int i : {0, 11, 40})
            for (double y : {0.2, 0.9, 1.7, 3.1}) {
                z[0] = y;
                mz[0] = -y;
                const cplx a = second_order_source(f.corr, i, z), b = second_order_source(f.corr, i, mz);
                CHECK(std::abs(a.real() - b.real()) < 1e-12);
                CHECK(std::abs(a.imag() + b.imag()) < 1e-12);
                im = std::max(im, std::abs(a.imag()));
            }
        CHECK(im > 0.0);
    }

    TEST_CASE("second-order source matches the eps^2 part of the level-1 residual") {
        // A potential with angular variation for which the radius-4 circle is exactly
        // critical at A = 0.1: V = u - A^2/u + c(u) (r - 4) / ... with u = 1.5 (1 + 0.5 sin).
        const std::string G = "(1+0.5*x2/r)";
        const std::string V = "1.5*" + G + " - 0.01/(1.5*" + G + ") - ((2/3)*1.5*" + G + " - 0.02/(1.5*" + G +
                              "))/4*(r-4) + 0.1*(r-4)^2";
        const Fixture f = make(V, 4.0, 0.1);
        TubeOptions o;
        o.cutoff = false;
        o.core = 14;
        const double e0 = 0.05;
        const std::vector<double> es{e0, e0 / 2, e0 / 4};
        std::vector<std::vector<cplx>> D;
        TubeGrid g0;
        for (double e : es) {
            const TubeGrid g = build_tube_grid(f.curve, f.sf, f.V, e, o);
            AnsatzParams pa;
            pa.level = 1;
            const TubeField S = demodulate(apply_S_eps(assemble_ansatz(g, f.corr, pa), g, p), g);
            std::vector<cplx> d(g.slice());
            for (std::size_t q = 0; q < g.slice(); ++q) d[q] = S.values[q] / e;
            D.push_back(std::move(d));
            g0 = g;
        }
        double worst = 0.0, scale = 0.0;
        Eigen::VectorXd z(1);
        for (std::size_t q = 0; q < g0.slice(); ++q) {
            z[0] = y_of(g0, q);
            if (std::abs(z[0]) > 6) continue;
            // S/eps = X + eps R2 + eps^2 R3 on the s = 0 slice; eliminate X and R3.
            const cplx d1 = (D[0][q] - D[1][q]) / (e0 / 2), d2 = (D[1][q] - D[2][q]) / (e0 / 4);
            const cplx ref = second_order_source(f.corr, 0, z);
            worst = std::max(worst, std::abs(2.0 * d2 - d1 - ref));
            scale = std::max(scale, std::abs(ref));
        }
        CHECK(scale > 1e-2);
        CHECK(worst < 1e-4);
    }

    TEST_CASE("level 0 at A = 0 is the real scaled profile") {
        const Fixture& f = critical(0.0);
        const TubeGrid g = build_tube_grid(f.curve, f.sf, f.V, 0.1, TubeOptions{});
        AnsatzParams pa;
        pa.level = 0;
        const TubeField psi = assemble_ansatz(g, f.corr, pa);
        const double h = f.sf.h[0], k = f.sf.k[0];
        double worst = 0.0;
        for (int i = 0; i < g.Ns; i += 37)
            for (std::size_t q = 0; q < g.slice(); ++q) {
                const cplx v = psi.values[static_cast<std::size_t>(i) * g.slice() + q];
                const double y = std::abs(y_of(g, static_cast<std::size_t>(q)));
                CHECK(v.imag() == 0.0);
                CHECK(v.real() >= 0.0);
                worst = std::max(worst, std::abs(v.real() - h * profiles().U(k * y) * g.cutoff_value(i, y)));
            }
        CHECK(worst < 1e-8);
        CHECK(psi.seam == 0.0);
    }

    TEST_CASE("level-2 minus level-1 ansatz is O(eps^2) with profile decay") {
        const Fixture& f = critical(0.05);
        std::vector<double> C;
        for (double eps : {0.1, 0.05}) {
            const TubeGrid g = build_tube_grid(f.curve, f.sf, f.V, eps, TubeOptions{});
            AnsatzParams a1, a2;
            a1.level = 1;
            a2.level = 2;
            const TubeField p1 = assemble_ansatz(g, f.corr, a1), p2 = assemble_ansatz(g, f.corr, a2);
            const double k = f.sf.k[0], core = g.core_radius();
            double m = 0.0;
            for (std::size_t x = 0; x < g.size(); ++x) {
                const double y = std::abs(y_of(g, x % g.slice()));
                if (y > core) continue;
                m = std::max(m, std::abs(p2.values[x] - p1.values[x]) / ((1 + y * y) * std::exp(-k * y)));
            }
            C.push_back(m / (eps * eps));
        }
        CHECK(C[0] > 0.0);
        CHECK(C[1] < 1.5 * C[0]);
    }

    TEST_CASE("phase covariance") {
        const Fixture& f = critical(0.05);
        const TubeGrid g = build_tube_grid(f.curve, f.sf, f.V, 0.1, TubeOptions{});
        const std::vector<double> rate = weight_rates(g, f.corr, 0.5);
        for (int level : {0, 1, 2}) {
            AnsatzParams a, b;
            a.level = b.level = level;
            b.phase_shift = 0.7;
            const TubeField pa = assemble_ansatz(g, f.corr, a), pb = assemble_ansatz(g, f.corr, b);
            double dm = 0.0;
            for (std::size_t x = 0; x < g.size(); ++x) dm = std::max(dm, std::abs(std::abs(pa.values[x]) - std::abs(pb.values[x])));
            CHECK(dm < 1e-12);
            CHECK(pa.seam == doctest::Approx(pb.seam).epsilon(1e-14));
            const TubeField sa = apply_S_eps(pa, g, p), sb = apply_S_eps(pb, g, p);
            for (NormMode mode : {NormMode::Sup, NormMode::L2}) {
                const double na = weighted_norm(sa, g, rate, mode, g.core_radius());
                const double nb = weighted_norm(sb, g, rate, mode, g.core_radius());
                CHECK(std::abs(na - nb) < 1e-12);
            }
        }
    }

    TEST_CASE("manufactured soliton on a straight periodic tube") {
        // u = sqrt(2 w) sech(sqrt(w) y) e^{i kappa s} with w = 1 + kappa^2 solves S = 0;
        // kappa is not a multiple of the period frequency, so the seam carries the rest.
        const double kappa = 0.37, period = 1.0, eps = 0.1;
        std::vector<double> err;
        for (int refine : {1, 2}) {
            const TubeGrid g = straight_tube_grid(1, period, 1.0, eps, 64 * refine, 0.1 / refine, 20.0, 2);
            TubeField f = constant_field(g, 0.0);
            const double w = 1 + kappa * kappa;
            for (int i = 0; i < g.Ns; ++i)
                for (std::size_t q = 0; q < g.slice(); ++q)
                    f.values[static_cast<std::size_t>(i) * g.slice() + q] =
                        std::sqrt(2 * w) / std::cosh(std::sqrt(w) * y_of(g, q)) * std::polar(1.0, kappa * i * g.ds);
            f.seam = -kappa * period / eps;
            err.push_back(max_abs(apply_S_eps(f, g, p).values));
        }
        CHECK(err[0] < 1e-2);
        CHECK(err[0] / err[1] > 3.5);
        CHECK(err[0] / err[1] < 4.5);
    }

    TEST_CASE("constant field") {
        const TubeGrid g = straight_tube_grid(2, 1.0, 1.0, 0.1, 16, 0.25, 2.0);
        const cplx c(0.6, -0.3);
        const TubeField S = apply_S_eps(constant_field(g, c), g, p);
        const cplx expect = c - std::norm(c) * c;
        double worst = 0.0;
        for (std::size_t x = 0; x < g.size(); ++x) {
            double y[2];
            g.point(x % g.slice(), y);
            if (std::max(std::abs(y[0]), std::abs(y[1])) > g.Z - 3 * g.dz - 1e-12) continue;
            worst = std::max(worst, std::abs(S.values[x] - expect));
        }
        CHECK(worst < 1e-12);
    }

    TEST_CASE("small-amplitude limit is linear") {
        const Fixture& f = critical(0.05);
        const TubeGrid g = build_tube_grid(f.curve, f.sf, f.V, 0.2, TubeOptions{});
        AnsatzParams pa;
        pa.level = 1;
        const TubeField psi = assemble_ansatz(g, f.corr, pa);
        auto scaled = [&](double t) {
            TubeField s = psi;
            for (cplx& v : s.values) v *= t;
            return apply_S_eps(s, g, p);
        };
        const double t = 1e-6;
        const TubeField a = scaled(t), b = scaled(2 * t);
        double diff = 0.0;
        for (std::size_t x = 0; x < g.size(); ++x) diff = std::max(diff, std::abs(b.values[x] - 2.0 * a.values[x]));
        CHECK(diff < 1e-10 * max_abs(a.values));
        CHECK(max_abs(apply_S_eps(constant_field(g, 0.0), g, p).values) == 0.0);
    }

    TEST_CASE("weighted norms") {
        const TubeGrid g = straight_tube_grid(1, 1.0, 1.0, 0.1, 16, 0.05, 10.0);
        const std::vector<double> rate(static_cast<std::size_t>(g.Ns), 1.0);
        TubeField e = constant_field(g, 0.0);
        for (std::size_t x = 0; x < g.size(); ++x) e.values[x] = std::exp(-std::abs(y_of(g, x % g.slice())));
        const double inf = std::numeric_limits<double>::infinity();
        CHECK(std::abs(weighted_norm(e, g, rate, NormMode::Sup, inf) - 1.0) < 1e-12);
        CHECK(std::abs(weighted_norm(e, g, rate, NormMode::L2, inf) - 1.0) < 1e-12);

        std::mt19937 rng(11);
        std::normal_distribution<double> nd;
        for (int t = 0; t < 5; ++t) {
            TubeField a = constant_field(g, 0.0), b = constant_field(g, 0.0), s = constant_field(g, 0.0);
            for (std::size_t x = 0; x < g.size(); ++x) {
                a.values[x] = {nd(rng), nd(rng)};
                b.values[x] = {nd(rng), nd(rng)};
                s.values[x] = a.values[x] + b.values[x];
            }
            for (NormMode mode : {NormMode::Sup, NormMode::L2}) {
                const double na = weighted_norm(a, g, rate, mode, 5.0), nb = weighted_norm(b, g, rate, mode, 5.0);
                CHECK(weighted_norm(s, g, rate, mode, 5.0) <= na + nb + 1e-12);
                TubeField c = a;
                for (cplx& v : c.values) v *= cplx(-2.5, 1.0);
                CHECK(std::abs(weighted_norm(c, g, rate, mode, 5.0) - std::abs(cplx(-2.5, 1.0)) * na) < 1e-12 * na);
            }
        }
        CHECK_THROWS_AS(weighted_norm(e, g, std::vector<double>(3, 1.0), NormMode::Sup, inf), ValidationError);
    }

    TEST_CASE("convergence order fit") {
        const std::vector<double> eps{0.2, 0.1, 0.05};
        std::vector<double> v;
        for (double e : eps) v.push_back(3 * e * e);
        const OrderFit fit = convergence_order(eps, v);
        CHECK(fit.slope == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(fit.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
        CHECK(fit.monotone);
        for (double d : fit.deviations) CHECK(std::abs(d) < 1e-12);
        CHECK_FALSE(convergence_order(eps, {1.0, 2.0, 0.5}).monotone);
        CHECK_THROWS_AS(convergence_order({0.2, 0.1}, {1.0, 0.5}), ValidationError);
        CHECK_THROWS_AS(convergence_order({0.05, 0.1, 0.2}, v), ValidationError);
    }

    TEST_CASE("residual orders on the critical circle") {
        const Fixture& f = critical(0.0);
        const ResidualStudy st = residual_study(f.curve, f.V, f.corr, {0.2, 0.1, 0.05}, {0, 1, 2}, TubeOptions{});
        REQUIRE(st.fits.size() == 3);
        CHECK(st.fits[0].slope >= 0.9);
        CHECK(st.fits[1].slope >= 1.8);
        CHECK(st.fits[2].slope >= 1.8);
        CHECK(st.level2_below_level1);
        CHECK(st.rows.size() == 9);
    }

    TEST_CASE("odd residual part is orthogonal to the kernel") {
        // At level 0 the odd part of the residual is eps F_r + O(eps^2), and F_r has no
        // kernel component on a critical curve, so only the higher-order terms project.
        const Fixture& f = critical(0.05);
        std::vector<double> ov;
        for (double eps : {0.1, 0.05}) {
            const TubeGrid g = build_tube_grid(f.curve, f.sf, f.V, eps, TubeOptions{});
            AnsatzParams pa;
            pa.level = 0;
            ov.push_back(parity_overlap(apply_S_eps(assemble_ansatz(g, f.corr, pa), g, p), g, f.corr));
        }
        CHECK(ov[0] < 1e-2);
        CHECK(ov[1] < 0.6 * ov[0]);
    }

    TEST_CASE("z-resolution independence") {
        const Fixture& f = critical(0.05);
        TubeOptions fine;
        fine.points_per_unit = 64;
        for (int level : {1, 2}) {
            const ResidualStudy a = residual_study(f.curve, f.V, f.corr, {0.05}, {level}, TubeOptions{});
            const ResidualStudy b = residual_study(f.curve, f.V, f.corr, {0.05}, {level}, fine);
            CHECK(std::abs(a.rows[0].core / b.rows[0].core - 1) < 0.05);
        }
    }

    TEST_CASE("cutoff is negligible") {
        // Weighted sup of S(cut) - S(open) on the shared nodes, against the weighted
        // residual norm without cutoff; the gap closes like e^{-(1 - varsigma) zeta}.
        const Fixture& f = critical(0.05);
        const double eps = 0.1;
        std::vector<double> rel;
        for (double zeta : {24.0, 32.0, 40.0}) {
            TubeOptions cut;
            cut.core = zeta;
            TubeOptions open = cut;
            open.cutoff = false;
            open.extra_box = 2.5;  // keep the open box edge away from the compared nodes
            const TubeGrid gc = build_tube_grid(f.curve, f.sf, f.V, eps, cut);
            const TubeGrid go = build_tube_grid(f.curve, f.sf, f.V, eps, open);
            REQUIRE(gc.dz == go.dz);
            REQUIRE(gc.Ns == go.Ns);
            AnsatzParams pa;
            pa.level = 2;
            const TubeField sc = apply_S_eps(assemble_ansatz(gc, f.corr, pa), gc, p);
            const TubeField so = apply_S_eps(assemble_ansatz(go, f.corr, pa), go, p);
            const std::vector<double> rate = weight_rates(go, f.corr, 0.5);
            const double norm = weighted_norm(so, go, rate, NormMode::Sup, go.core_radius());
            const std::size_t off = static_cast<std::size_t>((go.Nz - gc.Nz) / 2);
            double worst = 0.0;
            for (int i = 0; i < gc.Ns; ++i)
                for (std::size_t q = 0; q < gc.slice(); ++q) {
                    const double y = std::abs(y_of(gc, q));
                    const cplx d = sc.values[static_cast<std::size_t>(i) * gc.slice() + q] -
                                   so.values[static_cast<std::size_t>(i) * go.slice() + q + off];
                    worst = std::max(worst, std::exp(rate[i] * y) * std::abs(d));
                }
            rel.push_back(worst / norm);
        }
        // Exponential decay in zeta at a rate of at least (1 - varsigma) / 2, and
        // below e^{-c zeta} with c = 0.1 once the cutoff sits far out.
        CHECK(std::log(rel[0] / rel[1]) / 8.0 >= 0.25);
        CHECK(std::log(rel[1] / rel[2]) / 8.0 >= 0.25);
        CHECK(rel[2] <= std::exp(-0.1 * 40.0));
    }

    TEST_CASE("parameter bounds") {
        AnsatzParams a;
        CHECK(check_params(a, 2 * pi, 0.1, 1, 1, 1).ok);
        a.Phi.assign(64, Eigen::VectorXd::Constant(1, 0.05));
        const ParamBounds b = check_params(a, 2 * pi, 0.1, 1, 1, 1);
        CHECK(b.Phi_H2 == doctest::Approx(0.05 * std::sqrt(2 * pi)).epsilon(1e-10));
        CHECK_FALSE(b.ok);
        a.Phi.clear();
        a.b = {0.001, 0.0, 0.002};
        CHECK(check_params(a, 2 * pi, 0.1, 1, 1, 1).b_sharp == doctest::Approx(std::sqrt(4e-6 + 16e-6)));
    }

    TEST_CASE("option and grid validation") {
        TubeOptions o;
        o.fd_order = 3;
        CHECK_THROWS_AS(o.validate(), ValidationError);
        o = TubeOptions{};
        o.points_per_unit = 4;
        CHECK_THROWS_AS(o.validate(), ValidationError);
        const Fixture& f = critical(0.0);
        CHECK_THROWS_AS(build_tube_grid(f.curve, f.sf, f.V, 1.5, TubeOptions{}), ValidationError);
        CHECK_THROWS_AS(build_tube_grid(f.curve, f.sf, Expression::parse("1", 3), 0.1, TubeOptions{}), ValidationError);
    }
}
