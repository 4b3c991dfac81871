#include <doctest.h>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "nlsc/errors.hpp"
#include "nlsc/expression.hpp"

using namespace nlsc;

namespace {
double eval(const std::string& text, std::initializer_list<double> x) {
    const std::vector<double> v(x);
    return Expression::parse(text, static_cast<int>(v.size()))(v);
}
}  // namespace

TEST_SUITE("expression") {
    TEST_CASE("arithmetic and precedence") {
        CHECK(eval("1 + 2*3", {0.0, 0.0}) == doctest::Approx(7.0));
        CHECK(eval("(1 + 2)*3", {0.0, 0.0}) == doctest::Approx(9.0));
        CHECK(eval("2^3^2", {0.0, 0.0}) == doctest::Approx(512.0));
        CHECK(eval("-2^2", {0.0, 0.0}) == doctest::Approx(-4.0));
        CHECK(eval("8/4/2", {0.0, 0.0}) == doctest::Approx(1.0));
        CHECK(eval("1.5e-1 * 2", {0.0, 0.0}) == doctest::Approx(0.3));
    }

    TEST_CASE("coordinates and the Euclidean norm") {
        CHECK(eval("x1 + 10*x2", {3.0, 4.0}) == doctest::Approx(43.0));
        CHECK(eval("x_1 * x_3", {2.0, 0.0, 5.0}) == doctest::Approx(10.0));
        CHECK(eval("r", {3.0, 4.0}) == doctest::Approx(5.0));
        CHECK(eval("|x|^2", {3.0, 4.0}) == doctest::Approx(25.0));
        CHECK(eval("1 + 8/r^2", {4.0, 0.0}) == doctest::Approx(1.5));
    }

    TEST_CASE("functions") {
        CHECK(eval("exp(1)", {0.0, 0.0}) == doctest::Approx(std::exp(1.0)));
        CHECK(eval("log(exp(2))", {0.0, 0.0}) == doctest::Approx(2.0));
        CHECK(eval("sqrt(16) + abs(-3)", {0.0, 0.0}) == doctest::Approx(7.0));
        CHECK(eval("sin(x1)^2 + cos(x1)^2", {0.7, 0.0}) == doctest::Approx(1.0));
    }

    TEST_CASE("malformed input is rejected") {
        for (const char* bad : {"", "1 +", "(1", "1)", "x3", "foo(1)", "system(1)", "1 $ 2", "x0", "2..3"})
            CHECK_THROWS_AS(Expression::parse(bad, 2), ValidationError);
    }

    TEST_CASE("wrong evaluation dimension is rejected") {
        const Expression e = Expression::parse("x1", 2);
        const std::array<double, 3> x{1.0, 2.0, 3.0};
        CHECK_THROWS_AS(e(x), ValidationError);
        CHECK_THROWS_AS(Expression::parse("1", 0), ValidationError);
    }

    TEST_CASE("text and dimension are kept") {
        const Expression e = Expression::parse("1 + r^2", 3);
        CHECK(e.text() == "1 + r^2");
        CHECK(e.dim() == 3);
    }
}
