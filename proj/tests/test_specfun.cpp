#include "doctest.h"
#include "oracles.hpp"

#include "qlc/error.hpp"
#include "qlc/specfun.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace qlc;
using doctest::Approx;

TEST_CASE("erf basics and quadrature cross-check") {
    CHECK(specfun::erf(0.0) == 0.0);
    CHECK(specfun::erf(40.0) == 1.0);
    CHECK(specfun::erf(-0.7) == Approx(-specfun::erf(0.7)).epsilon(1e-15));
    const double oracle_val =
        2.0 / std::sqrt(std::numbers::pi) * oracle::finite([](double t) { return std::exp(-t * t); }, 0.0, 1.0);
    CHECK(specfun::erf(1.0) == Approx(oracle_val).epsilon(1e-14));
}

TEST_CASE("standard normal cdf") {
    CHECK(specfun::std_normal_cdf(0.0) == 0.5);
    for (double x : {0.1, 0.9, 2.5, 6.0}) {
        CHECK(specfun::std_normal_cdf(-x) == Approx(1.0 - specfun::std_normal_cdf(x)).epsilon(1e-14));
    }
    const double tail = oracle::to_infinity(
        [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }, 1.0);
    CHECK(specfun::std_normal_cdf(1.0) == Approx(1.0 - tail).epsilon(1e-13));
}

TEST_CASE("incomplete gamma") {
    for (double x : {0.0, 0.3, 1.0, 4.0, 25.0}) {
        CHECK(specfun::incomplete_gamma_P(1.0, x) == Approx(1.0 - std::exp(-x)).epsilon(1e-14));
    }
    CHECK(specfun::incomplete_gamma_P(2.5, 0.0) == 0.0);

    const double quad = oracle::finite([](double t) { return std::sqrt(t) * std::exp(-t); }, 0.0, 2.0) /
                        std::tgamma(1.5);
    CHECK(specfun::incomplete_gamma_P(1.5, 2.0) == Approx(quad).epsilon(1e-12));

    SUBCASE("integer order finite sum") {
        for (int s = 1; s <= 12; ++s) {
            for (double x : {0.2, 3.0, 11.0, 30.0}) {
                double sum = 0.0, term = 1.0;
                for (int j = 0; j < s; ++j) {
                    sum += term;
                    term *= x / (j + 1);
                }
                CHECK(specfun::incomplete_gamma_P(s, x) == Approx(1.0 - std::exp(-x) * sum).epsilon(1e-12));
            }
        }
    }
    SUBCASE("matches Boost across half-integer orders, P + Q = 1, monotone") {
        for (double s = 0.5; s < 80.0; s += 1.0) {
            double prev = -1.0;
            for (double x = 0.0; x < 120.0; x += 0.37) {
                const double p = specfun::incomplete_gamma_P(s, x);
                CHECK(p == Approx(boost::math::gamma_p(s, x)).epsilon(1e-12));
                CHECK(p + specfun::incomplete_gamma_Q(s, x) == Approx(1.0).epsilon(1e-13));
                CHECK(p >= prev);
                prev = p;
            }
        }
    }
    CHECK_THROWS_AS(specfun::incomplete_gamma_P(0.0, 1.0), DomainError);
    CHECK_THROWS_AS(specfun::incomplete_gamma_P(1.0, -1.0), DomainError);
}

TEST_CASE("hermite polynomials") {
    CHECK(specfun::hermite(0, 1.7) == 1.0);
    CHECK(specfun::hermite(1, 1.7) == Approx(3.4));
    CHECK(specfun::hermite(2, 3.0) == Approx(34.0));

    auto explicit_sum = [](unsigned j, double x) {
        double sum = 0.0;
        for (unsigned k = 0; 2 * k <= j; ++k) {
            sum += (k % 2 == 0 ? 1.0 : -1.0) * std::pow(2.0 * x, j - 2 * k) /
                   (std::tgamma(k + 1.0) * std::tgamma(j - 2.0 * k + 1.0));
        }
        return std::tgamma(j + 1.0) * sum;
    };
    for (unsigned j = 0; j <= 20; ++j) {
        for (double x = -3.0; x <= 3.0; x += 0.25) {
            const double h = specfun::hermite(j, x);
            CHECK(h == Approx(explicit_sum(j, x)).epsilon(1e-9).scale(std::tgamma(j / 2.0 + 1.0)));
            if (j >= 1 && j < 20) {
                const double rec = 2.0 * x * h - 2.0 * j * specfun::hermite(j - 1, x);
                CHECK(specfun::hermite(j + 1, x) == Approx(rec).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("integral_L series") {
    SUBCASE("a = 0 reduces to the constant part") {
        const auto r = specfun::integral_L(0.0, 0.0, 1.0);
        CHECK(r.value == Approx(std::erf(1.0) * std::sqrt(std::numbers::pi) / 2.0).epsilon(1e-15));
        CHECK(r.terms_used == 1);
        CHECK(r.converged);
    }
    SUBCASE("p = 0, b = 0 matches quadrature") {
        for (double a : {-0.8, -0.3, 0.25, 0.6, 0.95}) {
            const auto r = specfun::integral_L(0.0, a, 0.0, {1e-8, 400});
            CHECK(r.value == Approx(oracle::integral_L(0.0, a, 0.0)).epsilon(1e-9));
        }
    }
    SUBCASE("random box against quadrature at the default tolerance") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> ua(-0.9, 0.9), ub(-3.0, 3.0);
        const specfun::SeriesOptions opts{};
        for (int i = 0; i < 300; ++i) {
            const double a = ua(rng), p = ub(rng), b = ub(rng);
            const auto r = specfun::integral_L(p, a, b, opts);
            const double ref = oracle::integral_L(p, a, b);
            CHECK(r.converged);
            CHECK(std::abs(r.value - ref) <= std::max(10.0 * opts.tol_percent / 100.0 * std::abs(ref), 1e-8));
        }
    }
    SUBCASE("odd symmetry L(p, a, b) = -L(p, -a, -b)") {
        for (double p : {-1.2, 0.0, 0.7}) {
            for (double a : {-0.6, 0.4}) {
                for (double b : {-1.0, 0.3, 2.0}) {
                    const auto plus = specfun::integral_L(p, a, b, {1e-10, 400});
                    const auto minus = specfun::integral_L(p, -a, -b, {1e-10, 400});
                    CHECK(plus.value == Approx(-minus.value).epsilon(1e-10).scale(1.0));
                }
            }
        }
    }
    SUBCASE("terms_used grows as the tolerance tightens") {
        int prev = 0;
        for (double tol : {1.0, 1e-1, 1e-2, 1e-4, 1e-6, 1e-8}) {
            const auto r = specfun::integral_L(0.4, 0.7, -0.5, {tol, 500});
            CHECK(r.terms_used >= prev);
            CHECK(r.last_relative_change <= tol);
            prev = r.terms_used;
        }
        CHECK(prev > 1);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(specfun::integral_L(0.0, 1.2, 0.0), DomainError);
        CHECK_THROWS_AS(specfun::integral_L(0.0, 0.9, 0.4, {1e-12, 3}), NonConvergence);
        const auto r = specfun::integral_L(0.0, 1.2, 0.0, {1e-3, 50, true});
        CHECK_FALSE(r.converged);
        CHECK(r.terms_used == 50);
    }
    SUBCASE("partial sums end where the truncated series ends") {
        const auto r = specfun::integral_L(0.3, 0.5, 0.2, {1e-6, 200});
        const auto sums = specfun::integral_L_partial_sums(0.3, 0.5, 0.2, r.terms_used);
        REQUIRE(static_cast<int>(sums.size()) == r.terms_used);
        CHECK(sums.back() == Approx(r.value).epsilon(1e-15));
    }
}

TEST_CASE("integral_R closed form") {
    CHECK(specfun::integral_R(0.4, 0.0, 0.7) ==
          Approx(std::exp(-0.49) * std::sqrt(std::numbers::pi) / 2.0 * std::erfc(0.4)).epsilon(1e-14));
    const double ninf = -std::numeric_limits<double>::infinity();
    CHECK(specfun::integral_R(ninf, 0.6, 0.0) == Approx(std::sqrt(std::numbers::pi / 1.36)).epsilon(1e-14));
    CHECK(specfun::integral_R(0.5, 0.8, -0.3) == Approx(oracle::integral_R(0.5, 0.8, -0.3)).epsilon(1e-12));

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ua(-0.99, 0.99), ub(-3.0, 3.0);
    for (int i = 0; i < 200; ++i) {
        const double a = ua(rng), p = ub(rng), b = ub(rng);
        CHECK(std::abs(specfun::integral_R(p, a, b) - oracle::integral_R(p, a, b)) <= 1e-10);
    }
}

TEST_CASE("integral_S closed form") {
    CHECK(specfun::integral_S(0.8, 0.0, -0.4) == Approx(std::erf(-0.4) * std::exp(-0.64) / 2.0).epsilon(1e-14));
    // b chosen so that erf(a p + b) = 0: only the boundary-free addend,
    // (a / sqrt(pi)) R(p, a, b) from integration by parts, survives.
    const double p = 0.6, a = 0.5, b = -a * p;
    const double second = a / std::sqrt(std::numbers::pi) * oracle::integral_R(p, a, b);
    CHECK(specfun::integral_S(p, a, b) == Approx(second).epsilon(1e-14));
    CHECK(specfun::integral_S(0.3, 0.5, 0.2) == Approx(oracle::integral_S(0.3, 0.5, 0.2)).epsilon(1e-12));

    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> ua(-0.99, 0.99), ub(-3.0, 3.0);
    for (int i = 0; i < 200; ++i) {
        const double aa = ua(rng), pp = ub(rng), bb = ub(rng);
        CHECK(std::abs(specfun::integral_S(pp, aa, bb) - oracle::integral_S(pp, aa, bb)) <= 1e-10);
    }
}

TEST_CASE("admissible correlation interval") {
    const auto equal = specfun::rho_admissible(1.0, 1.0);
    CHECK(equal.upper == Approx(0.0));
    CHECK_FALSE(equal.valid);

    const auto narrow = specfun::rho_admissible(1.0, 1e-9);
    CHECK(narrow.upper == Approx(std::numbers::sqrt2 / 2.0).epsilon(1e-8));
    CHECK(narrow.valid);

    const auto fig = specfun::rho_admissible(0.8, 0.7);
    CHECK(fig.upper == Approx(0.118).epsilon(0.01));
    CHECK(fig.lower == -fig.upper);
    CHECK_FALSE(fig.contains(0.25));

    // The interval is exactly where both slopes K1, K3 stay inside (-1, 1).
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ur(0.01, 0.99), unit(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double r = ur(rng);
        const auto iv = specfun::rho_admissible(1.0, r);
        const double rho = iv.lower + (iv.upper - iv.lower) * unit(rng);
        const double root = std::sqrt(1.0 - rho * rho);
        CHECK(std::abs((r + rho) / root) < 1.0);
        CHECK(std::abs((r - rho) / root) < 1.0);
        const double edge = iv.upper;
        CHECK(std::abs((r + edge) / std::sqrt(1.0 - edge * edge)) == Approx(1.0).epsilon(1e-12));
    }
}
