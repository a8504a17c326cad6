#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/special_functions/hypergeometric_1F1.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>

#include "sbdnet/fo_meanfield.hpp"
#include "sbdnet/numerics.hpp"

using namespace sbd;
using mp = boost::multiprecision::cpp_bin_float_50;

namespace {

// plain power series in 50-digit arithmetic; optionally scaled by e^{-z}
mp series_oracle(double a, double b, double z, int terms, bool scaled = false) {
    mp term = 1, sum = 1;
    for (int j = 0; j < terms; ++j) {
        term *= (mp(a) + j) / (mp(b) + j) * mp(z) / (j + 1);
        sum += term;
    }
    return scaled ? sum * exp(-mp(z)) : sum;
}

double rel(double x, double y) { return std::abs(x - y) / std::max(std::abs(y), 1e-300); }

}  // namespace

TEST_CASE("1F1 trivial values") {
    for (double a : {0.01, 0.5, 2.0})
        for (double b : {0.3, 1.5, 7.0}) CHECK(kummer_1f1(a, b, 0.0) == 1.0);
    CHECK(kummer_1f1(1, 2, 1) == doctest::Approx(std::exp(1.0) - 1).epsilon(1e-14));
    for (double z : {0.5, 3.0, 12.0, 29.0, 35.0, 60.0})
        CHECK(kummer_1f1(1, 2, z) == doctest::Approx(std::expm1(z) / z).epsilon(1e-12));
}

TEST_CASE("1F1(0.5, 1.5, 2) against a 200-term extended-precision series") {
    const double oracle = static_cast<double>(series_oracle(0.5, 1.5, 2.0, 200));
    CHECK(rel(kummer_1f1(0.5, 1.5, 2.0), oracle) < 1e-14);
}

TEST_CASE("1F1 agrees with Boost and the series oracle to 10 digits for z <= 50") {
    for (double a : {0.01, 0.5, 1.0, 2.0, 11.0})
        for (double z : {0.0, 1e-3, 0.7, 5.0, 17.0, 29.9, 30.1, 42.0, 50.0}) {
            const double b = a + 1.0;
            const double got = kummer_1f1(a, b, z);
            const double oracle = static_cast<double>(series_oracle(a, b, z, 400));
            const double boost = boost::math::hypergeometric_1F1(a, b, z);
            CAPTURE(a);
            CAPTURE(z);
            CHECK(rel(got, oracle) < 1e-10);
            CHECK(rel(got, boost) < 1e-10);
        }
    CHECK(rel(kummer_1f1(0.5, 3.25, 20.0), boost::math::hypergeometric_1F1(0.5, 3.25, 20.0)) < 1e-10);
}

TEST_CASE("scaled 1F1 stays bounded and accurate for large z") {
    for (double a : {0.01, 0.5, 1.0, 11.0})
        for (double z : {31.0, 100.0, 700.0, 2500.0}) {
            const double got = kummer_1f1_scaled(a, a + 1, z);
            const double oracle = static_cast<double>(series_oracle(a, a + 1, z, static_cast<int>(z * 2 + 400), true));
            CAPTURE(a);
            CAPTURE(z);
            CHECK(rel(got, oracle) < 1e-10);
            CHECK(got <= 1.0);
        }
    CHECK(kummer_1f1_scaled(0.5, 1.5, 1e6) > 0);
    CHECK(kummer_1f1_scaled(0.5, 1.5, 1e6) <= 1.0);
}

TEST_CASE("unscaled 1F1 signals overflow") {
    CHECK_THROWS_AS(kummer_1f1(0.5, 1.5, 1e4), Error);
    try {
        kummer_1f1(0.5, 1.5, 1e4);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Overflow);
    }
    CHECK_THROWS_AS(kummer_1f1(-1, 1.5, 1), Error);
    CHECK_THROWS_AS(kummer_1f1(1, 1.5, -1), Error);
}

TEST_CASE("1F1 derivative") {
    CHECK(kummer_derivative(0.5, 1.5, 0.0) == doctest::Approx(0.5 / 1.5).epsilon(1e-15));
    CHECK(kummer_derivative(1, 2, 1) == doctest::Approx(1.0).epsilon(1e-13));
    const double h = 1e-5;
    const double fd = (kummer_1f1(0.5, 1.5, 1 + h) - kummer_1f1(0.5, 1.5, 1 - h)) / (2 * h);
    CHECK(rel(kummer_derivative(0.5, 1.5, 1.0), fd) < 1e-6);
}

TEST_CASE("1F1(a, a+1, z) lower bounds") {
    for (double a : {0.01, 0.1, 0.5, 1.0, 3.0})
        for (double z = 0.0; z <= 50.0; z += 0.25) {
            const double v = kummer_1f1(a, a + 1, z);
            CHECK(v >= 1.0);
            if (a <= 1.0 && z > 0) CHECK(v >= a / z * std::expm1(z) * (1 - 1e-13));
        }
}

TEST_CASE("disk integral examples") {
    auto one = [](double) { return 1.0; };
    CHECK(disk_integral(one, 100).value == doctest::Approx(M_PI * 1e4).epsilon(1e-13));
    auto zero = [](double) { return 0.0; };
    CHECK(disk_integral(zero, 100).value == 0.0);
    // int_0^R (1+r)^4 r dr = [u^6/6 - u^5/5]_1^{R+1}
    auto quart = [](double r) { return std::pow(1 + r, 4); };
    const long double u = 101.0L;
    const long double anti = (std::pow(u, 6) / 6 - std::pow(u, 5) / 5) - (1.0L / 6 - 1.0L / 5);
    const double oracle = static_cast<double>(2 * 3.14159265358979323846264338327950288L * anti);
    CHECK(rel(disk_integral(quart, 100).value, oracle) < 1e-12);
}

TEST_CASE("halving the tolerance moves results by less than the reported error") {
    auto f = [](double r) { return -std::expm1(-3.0 * std::pow(1 + r, -4.0)) * std::pow(1 + r, 4.0); };
    QuadratureSpec loose;
    loose.rel_tol = 1e-6;
    QuadratureSpec tight;
    tight.rel_tol = 0.5e-6;
    const auto a = disk_integral(f, 100, loose);
    const auto b = disk_integral(f, 100, tight);
    CHECK(std::abs(a.value - b.value) <= a.error);

    NetworkParams p;
    const auto oa = outer_t_integral(1e-3, p, loose);
    const auto ob = outer_t_integral(1e-3, p, tight);
    CHECK(std::abs(oa.value - ob.value) <= oa.error + 1e-9 * ob.value);
}

TEST_CASE("quadrature reports non-convergence") {
    QuadratureSpec s;
    s.max_subdivisions = 2;
    s.rel_tol = 1e-15;
    auto q = integrate([](double x) { return std::sin(1.0 / (x + 1e-3)); }, 0.0, 1.0, s);
    CHECK_FALSE(q.converged);
    try {
        checked(q, "probe");
        FAIL("expected NoConvergence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoConvergence);
    }
}

TEST_CASE("g_inner limits and monotonicity") {
    NetworkParams p;
    CHECK(g_inner(0.0, p) == 0.0);
    double prev = 0.0;
    for (double t = 1e-6; t < 1e12; t *= 10) {
        const double v = g_inner(t, p);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK(rel(g_inner(saturation_time(p), p), a_infinity(p)) < 1e-9);
    NetworkParams q;
    q.inversion = 1.0;
    CHECK(rel(g_inner(60.0, q), q.area()) < 1e-12);
    CHECK(rel(a_infinity(q), q.area()) < 1e-12);
}

TEST_CASE("g_inner at t=1 against a fixed-grid Riemann sum") {
    NetworkParams p;
    p.inversion = 0.0;
    p.eta = 4.0;
    const int n = 1000000;
    const long double h = 100.0L / n;
    long double s = 0;
    for (int i = 0; i < n; ++i) {
        const long double r = (i + 0.5L) * h;
        const long double inv_g = std::pow(1 + r, 4.0L);
        s += -std::expm1(-1.0L / inv_g) * inv_g * r;
    }
    const double oracle = static_cast<double>(2 * 3.14159265358979323846264338327950288L * s * h);
    CHECK(rel(g_inner(1.0, p), oracle) < 1e-9);
}

TEST_CASE("outer integral limits and monotonicity") {
    NetworkParams p;
    CHECK(rel(outer_t_integral(0.0, p).value, 1.0 / p.sigma2) < 1e-8);
    double prev = outer_t_integral(0.0, p).value;
    for (double Z = 1e-7; Z < 1.0; Z *= 4) {
        const double v = outer_t_integral(Z, p).value;
        CHECK(v < prev);
        prev = v;
    }
    CHECK(prev < 1e-3);
    for (double Z : {1e-5, 1e-3}) {
        double prev_s = std::numeric_limits<double>::infinity();
        for (double s2 : {1e-8, 1e-4, 1e-2, 1.0}) {
            NetworkParams q = p;
            q.sigma2 = s2;
            const double v = outer_t_integral(Z, q).value;
            CHECK(v < prev_s);
            prev_s = v;
        }
    }
    NetworkParams tiny = p;
    tiny.sigma2 = 1e-13;
    CHECK(outer_t_integral(1e-3, tiny).tail_warning);
    CHECK_FALSE(outer_t_integral(1e-3, p).tail_warning);
}

TEST_CASE("outer integral reproduces the 1F1 form under full inversion") {
    for (double s2 : {0.01, 0.5, 1.0, 2.0}) {
        NetworkParams p;
        p.inversion = 1.0;
        p.sigma2 = s2;
        for (double nbar : {0.05, 1.0, 3.0, 20.0}) {
            const double Z = nbar / p.area();
            CAPTURE(s2);
            CAPTURE(nbar);
            CHECK(rel(nbar * outer_t_integral(Z, p).value, f_meanfield(nbar, s2)) < 1e-7);
        }
    }
}

TEST_CASE("fixed rules match the adaptive quadratures") {
    NetworkParams p;
    const RadialRule rr(p);
    CHECK(rel(rr.a_infinity(), a_infinity(p)) < 1e-10);
    for (double t : {1e-3, 1.0, 1e4, 1e8}) CHECK(rel(rr.g_inner(t), g_inner(t, p)) < 1e-9);
    double w = 0;
    for (double x : rr.weight()) w += x;
    CHECK(rel(w, p.area()) < 1e-12);

    // K(t) = c (1 - e^{-t}) has the closed form e^{-c} 1F1(s2, s2+1, c) / s2
    const double s2 = 0.5, c = 4.0;
    const LogTimeRule tr(s2, 40.0);
    const double got = tr.integrate_fn([&](std::size_t i) { return c * -std::expm1(-tr.t()[i]); }, c);
    CHECK(rel(got, kummer_1f1_scaled(s2, s2 + 1, c) / s2) < 1e-8);
}

TEST_CASE("bracketed root examples") {
    CHECK(bracketed_root([](double x) { return x - 2; }, 0, 10, 1e-13) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(bracketed_root([](double x) { return std::cos(x); }, 1, 2, 1e-13) ==
          doctest::Approx(M_PI / 2).epsilon(1e-12));
    CHECK(bracketed_root([](double x) { return -std::expm1(-x) - 0.5; }, 0, 5, 1e-13) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(bracketed_root([](double x) { return x * x + 1; }, -1, 1, 1e-12), Error);
    CHECK_THROWS_AS(bracketed_root([](double x) { return x; }, 1, -1, 1e-12), Error);
}

TEST_CASE("golden-section maximum") {
    const auto [x, fx] = golden_max([](double x) { return -(x - 1.3) * (x - 1.3) + 2; }, 0, 5, 1e-9);
    CHECK(x == doctest::Approx(1.3).epsilon(1e-7));
    CHECK(fx == doctest::Approx(2.0).epsilon(1e-12));
}
