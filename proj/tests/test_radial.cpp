#include <doctest.h>

#include <random>

#include "common.hpp"
#include "nlsc/errors.hpp"
#include "nlsc/radial.hpp"

using namespace nlsc;
using testing_support::ground_state;

namespace {

// sqrt(2) sech(x) and its second derivative, written out by hand.
double sech_profile(double x) { return std::sqrt(2.0) / std::cosh(x); }
double sech_profile_dd(double x) {
    const double s = 1.0 / std::cosh(x), t = std::tanh(x);
    return std::sqrt(2.0) * s * (t * t - s * s);
}

RadialProfile gaussian_bump(const RadialGrid& g, int dim, int parity, double centre, double width) {
    return make_profile(g, dim, parity, [&](double r) {
        const double b = std::exp(-(r - centre) * (r - centre) / (width * width));
        return parity == 1 ? r * b : b;
    });
}

double overlap(const RadialProfile& a, const RadialProfile& b) {
    return std::abs(radial_dot(a, b)) / (radial_norm(a) * radial_norm(b));
}

}  // namespace

TEST_SUITE("radial") {
    TEST_CASE("sech oracle satisfies the one-dimensional equation") {
        double worst = 0.0;
        for (double x = 0.0; x <= 20.0; x += 0.01) {
            const double u = sech_profile(x);
            worst = std::max(worst, std::abs(-sech_profile_dd(x) + u - u * u * u));
        }
        CHECK(worst < 1e-10);
    }

    TEST_CASE("ground state for n=2, p=3 matches sqrt(2) sech") {
        const RadialProfile& U = ground_state(2, 3.0);
        CHECK(U.values[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-4));
        double worst = 0.0;
        for (int i = 0; i < U.grid.m; i += 7) worst = std::max(worst, std::abs(U.values[i] - sech_profile(U.grid.r(i))));
        CHECK(worst < 1e-4);
        CHECK(ground_state_residual(U, 3.0) < 1e-8);
        CHECK(fit_decay_rate(U) == doctest::Approx(1.0).epsilon(0.02));
    }

    TEST_CASE("ground state is positive and strictly decreasing") {
        for (auto [n, p] : {std::pair{2, 3.0}, std::pair{3, 2.0}, std::pair{4, 2.0}}) {
            const RadialProfile& U = ground_state(n, p);
            bool ok = true;
            for (int i = 1; i < U.grid.m; ++i) ok = ok && U.values[i] > 0.0 && U.values[i] < U.values[i - 1];
            CHECK_MESSAGE(ok, "n=" << n << " p=" << p);
            CHECK(ground_state_residual(U, p) < 1e-8);
        }
    }

    TEST_CASE("n=4, p=2 peak agrees between shooting and grid relaxation") {
        const double shot = shoot_ground_state_peak(4, 2.0);
        const RadialGrid g{30.0, 4001};
        const double coarse = solve_ground_state(4, 2.0, g).values[0];
        const double fine = solve_ground_state(4, 2.0, g.refined()).values[0];
        CHECK(std::abs((4.0 * fine - coarse) / 3.0 - shot) < 1e-6);
    }

    TEST_CASE("p outside the admissible range is rejected") {
        CHECK_FALSE(admissible_p(5, 3.0));
        CHECK(admissible_p(5, 2.9));
        CHECK(admissible_p(2, 11.0));
        CHECK_FALSE(admissible_p(3, 1.0));
        CHECK_THROWS_AS(solve_ground_state(5, 3.5, RadialGrid{}), ValidationError);
    }

    TEST_CASE("scaled profile arithmetic") {
        const RadialProfile& U = ground_state(2, 3.0);
        const ScaledProfile a = scaled_profile(U, 0.0, 1.0, 3.0);
        CHECK(a.h_hat == doctest::Approx(1.0));
        CHECK(a.k_hat == doctest::Approx(1.0));
        CHECK(a.eval(0.7) == doctest::Approx(U(0.7)).epsilon(1e-12));
        const ScaledProfile b = scaled_profile(U, 0.0, 4.0, 3.0);
        CHECK(b.h_hat == doctest::Approx(2.0));
        CHECK(b.k_hat == doctest::Approx(2.0));
        const ScaledProfile c = scaled_profile(U, 1.0, 3.0, 3.0);
        CHECK(c.h_hat == doctest::Approx(2.0));
        CHECK(c.k_hat == doctest::Approx(2.0));
        // Discrete -u'' + (f^2 + V) u - u^3 on the nodes x_i = r_i / k, where u = h U(k x) samples U exactly.
        const double dx = U.grid.h() / c.k_hat;
        double worst = 0.0;
        for (int i = 1; i < 2000; ++i) {
            auto u = [&](int j) { return c.eval(j * dx); };
            const double upp = (u(i + 1) - 2 * u(i) + u(i - 1)) / (dx * dx);
            worst = std::max(worst, std::abs(-upp + 4.0 * u(i) - std::pow(u(i), 3)));
        }
        CHECK(worst < 1e-7);
    }

    TEST_CASE("sector solves reproduce the closed-form preimages") {
        const RadialProfile& U = ground_state(2, 3.0);
        const RadialProfile dU = differentiate(U);
        const RadialGrid& g = U.grid;
        // Lr (U/(p-1) + r U'/2) = -U
        const SectorSolution s0 = sector_solve({OpKind::Lr, 0, 0.0, 1, 3.0}, U, U);
        double e0 = 0.0;
        for (int i = 0; i < g.m; i += 5) e0 = std::max(e0, std::abs(s0.u.values[i] + U.values[i] / 2 + 0.5 * g.r(i) * dU.values[i]));
        CHECK(e0 < 1e-4);
        // Li (r U) = -2 U' in the l = 1 sector
        RadialProfile rhs = dU;
        for (auto& v : rhs.values) v *= -2.0;
        rhs.parity = 1;
        const SectorSolution s1 = sector_solve({OpKind::Li, 1, 0.0, 1, 3.0}, U, rhs);
        double e1 = 0.0;
        for (int i = 0; i < g.m; i += 5) e1 = std::max(e1, std::abs(s1.u.values[i] - g.r(i) * U.values[i]));
        CHECK(e1 < 1e-4);
        // zero rhs in a sector with a kernel
        RadialProfile zero = U;
        std::fill(zero.values.begin(), zero.values.end(), 0.0);
        const SectorSolution sz = sector_solve({OpKind::Li, 0, 0.0, 1, 3.0}, U, zero);
        CHECK(*std::max_element(sz.u.values.begin(), sz.u.values.end()) == 0.0);
    }

    TEST_CASE("round trip on Gaussian bumps") {
        const RadialProfile& U = ground_state(2, 3.0);
        const RadialProfile& U3 = ground_state(3, 2.0);
        for (int ell : {0, 1, 2}) {
            for (OpKind kind : {OpKind::Lr, OpKind::Li}) {
                for (double c : {0.0, 1.5, 4.0}) {
                    const RadialProfile& G = ell == 2 ? U3 : U;
                    const int dim = ell == 2 ? 2 : 1;
                    const double p = ell == 2 ? 2.0 : 3.0;
                    const RadialProfile rhs = gaussian_bump(G.grid, dim, ell % 2, c, 1.0);
                    SolveOptions o;
                    o.max_kernel_fraction = 1.0;
                    const SectorSolution s = sector_solve({kind, ell, 0.0, dim, p}, G, rhs, o);
                    CHECK_MESSAGE(s.roundtrip_rel < 1e-8, "ell=" << ell << " centre=" << c);
                }
            }
        }
    }

    TEST_CASE("Poeschl-Teller ground eigenvalue and kernels") {
        const RadialProfile& U = ground_state(2, 3.0);
        const auto lr0 = sector_spectrum({OpKind::Lr, 0, 0.0, 1, 3.0}, U, 2);
        CHECK(lr0[0].value == doctest::Approx(-3.0).epsilon(1e-3 / 3));
        const auto lr1 = sector_spectrum({OpKind::Lr, 1, 0.0, 1, 3.0}, U, 1);
        CHECK(std::abs(lr1[0].value) < 1e-4);
        RadialProfile dU = differentiate(U);
        dU.parity = 1;
        CHECK(overlap(lr1[0].vector, dU) > 0.999);
        const auto li0 = sector_spectrum({OpKind::Li, 0, 0.0, 1, 3.0}, U, 1);
        CHECK(std::abs(li0[0].value) < 1e-4);
        CHECK(overlap(li0[0].vector, U) > 0.999);
    }

    TEST_CASE("shift adds alpha squared to every eigenvalue") {
        const RadialProfile& U = ground_state(2, 3.0);
        for (double alpha : {0.3, 1.7}) {
            const auto a = sector_spectrum({OpKind::Lr, 0, 0.0, 1, 3.0}, U, 4);
            const auto b = sector_spectrum({OpKind::Lr, 0, alpha * alpha, 1, 3.0}, U, 4);
            for (int i = 0; i < 4; ++i) CHECK(std::abs(b[i].value - a[i].value - alpha * alpha) < 1e-10);
        }
    }

    TEST_CASE("discrete sector operators are symmetric in the weighted product") {
        const RadialProfile& U = ground_state(3, 2.0);
        std::mt19937 rng(7);
        std::normal_distribution<double> nd;
        for (int ell : {0, 1, 2}) {
            RadialProfile a = gaussian_bump(U.grid, 2, ell % 2, 1.0, 2.0), b = a;
            for (int i = 0; i < U.grid.m; ++i) {
                const double env = std::exp(-U.grid.r(i) / 4);
                a.values[i] *= 1.0 + 0.1 * nd(rng) * env;
                b.values[i] = env * nd(rng) * (ell % 2 ? U.grid.r(i) : 1.0);
            }
            const SectorOperator op{OpKind::Lr, ell, 0.5, 2, 2.0};
            const double ab = radial_dot(sector_apply(op, U, a), b), ba = radial_dot(a, sector_apply(op, U, b));
            CHECK(std::abs(ab - ba) < 1e-10 * (std::abs(ab) + 1.0));
        }
    }

    TEST_CASE("surface area of unit spheres") {
        CHECK(surface_area(1) == doctest::Approx(2.0));
        CHECK(surface_area(2) == doctest::Approx(2 * testing_support::pi));
        CHECK(surface_area(3) == doctest::Approx(4 * testing_support::pi));
    }
}
