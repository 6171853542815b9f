#include "doctest.h"

#include "qlc/bivariate_sat.hpp"
#include "qlc/error.hpp"
#include "qlc/rng.hpp"

#include <cmath>
#include <random>

using namespace qlc;
using doctest::Approx;

namespace {

const BivariateStats kFigure{1.0, 1.0, 0.8, 0.7, 0.25};
const SatBounds kFigureBounds{-3.0, 2.0};

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

} // namespace

TEST_CASE("saturation evaluation") {
    const SatBounds b{-2.0, 1.0};
    CHECK(sat_eval(0.5, 0.0, b) == 0.5);
    CHECK(sat_eval(5.0, 0.0, b) == 1.0);
    CHECK(sat_eval(-5.0, 0.0, b) == -2.0);
    CHECK(sat_eval(0.5, -1.5, b) == 0.0);
    CHECK(b.zero_threshold() == -1.0);
    // Just above the threshold the window [alpha - u2, beta + u2] is nonempty.
    CHECK(sat_eval(0.1, -0.99, b) == Approx(0.01));
    CHECK(sat_gradient(0.5, 0.0, b) == std::array<double, 2>{1.0, 0.0});
    CHECK(sat_gradient(5.0, 0.0, b) == std::array<double, 2>{0.0, 1.0});
    CHECK(sat_gradient(-5.0, 0.0, b) == std::array<double, 2>{0.0, -1.0});
    CHECK(sat_gradient(0.5, -1.5, b) == std::array<double, 2>{0.0, 0.0});
}

TEST_CASE("whitened limits") {
    const BivariateStats sym{0.0, 0.0, 1.0, 1.0, 0.0};
    const auto t = transform_limits(sym, {-1.0, 1.0}, 0.0);
    CHECK(t.u1min == Approx(-1.0));
    CHECK(t.u1max == Approx(1.0));
    CHECK(t.u2min == Approx(-1.0));
    const auto g = gamma_pair(sym, {-1.0, 1.0}, 0.0);
    CHECK(g.gamma1 == Approx(1.0 / std::sqrt(2.0)));
    CHECK(g.gamma2 == Approx(1.0 / std::sqrt(2.0)));

    // Independent substitution: u2 = mu2 + s2 v, u1 = mu1 + rho s1 v + s1 c w;
    // solve u1 = alpha - u2 and u1 = beta + u2 for w.
    const auto& s = kFigure;
    const auto& b = kFigureBounds;
    const double c = std::sqrt(1.0 - s.rho * s.rho);
    for (double v : {-1.0, 0.5, 1.0, 2.0}) {
        const double u2 = s.mu2 + s.sigma2 * v;
        const double w_lo = (b.alpha - u2 - s.mu1 - s.rho * s.sigma1 * v) / (s.sigma1 * c);
        const double w_hi = (b.beta + u2 - s.mu1 - s.rho * s.sigma1 * v) / (s.sigma1 * c);
        const auto lim = transform_limits(s, b, v);
        CHECK(lim.u1min == Approx(w_lo).epsilon(1e-14));
        CHECK(lim.u1max == Approx(w_hi).epsilon(1e-14));
        CHECK(lim.u2min == Approx((std::max(-b.beta, b.alpha) - s.mu2) / s.sigma2));
        const auto gp = gamma_pair(s, b, v);
        CHECK(gp.gamma1 == Approx(-w_lo / std::sqrt(2.0)).epsilon(1e-14));
        CHECK(gp.gamma2 == Approx(w_hi / std::sqrt(2.0)).epsilon(1e-14));
    }
    // Both gammas grow without bound along u2' when sigma2 > |rho| sigma1.
    const auto far = gamma_pair({0.0, 0.0, 1.0, 0.9, 0.3}, {-1.0, 1.0}, 1e6);
    CHECK(far.gamma1 > 1e5);
    CHECK(far.gamma2 > 1e5);
}

TEST_CASE("reduced quadrature special cases") {
    const SatBounds unit{-1.0, 1.0};
    SUBCASE("vanishing secondary noise approaches the univariate result") {
        const auto g = gains_reduced_quadrature({0.0, 0.0, 1.0, 1e-6, 0.0}, unit);
        CHECK(g.n1 == Approx(2.0 * phi(1.0) - 1.0).epsilon(1e-5));
        CHECK(std::abs(g.n2) < 1e-9);
        CHECK(std::abs(g.m) < 1e-9);
    }
    SUBCASE("large secondary noise drives N1 to one half") {
        const auto g = gains_reduced_quadrature({0.0, 0.0, 1.0, 50.0, 0.0}, unit);
        CHECK(std::abs(g.n1 - 0.5) < 0.02);
        double prev = 1.0;
        for (double s2 : {5.0, 20.0, 50.0}) {
            const double d = std::abs(gains_reduced_quadrature({0.0, 0.0, 1.0, s2, 0.0}, unit).n1 - 0.5);
            CHECK(d < prev);
            prev = d;
        }
    }
    SUBCASE("symmetric inputs give zero N2 and M") {
        for (double s2 : {0.2, 1.0, 3.0}) {
            const auto g = gains_reduced_quadrature({0.0, 0.0, 1.3, s2, 0.0}, {-2.0, 2.0});
            CHECK(std::abs(g.n2) < 1e-9);
            CHECK(std::abs(g.m) < 1e-9);
        }
    }
    SUBCASE("degenerate sigma2 = 0 path") {
        const auto g = gains_reduced_quadrature({0.3, 0.0, 1.0, 0.0, 0.0}, {-2.0, 1.0});
        const auto uni = univariate_sl_saturation(0.3, 1.0, -2.0, 1.0);
        CHECK(g.n1 == Approx(uni.n));
        CHECK(g.m == Approx(uni.m));
        CHECK(g.n2 == Approx((1.0 - phi(0.7)) - phi(-2.3)));
        const auto off = gains_reduced_quadrature({0.3, -5.0, 1.0, 0.0, 0.0}, {-2.0, 1.0});
        CHECK(off.n1 == 0.0);
        CHECK(off.m == 0.0);
    }
}

TEST_CASE("raw quadrature limits and agreement") {
    SUBCASE("inactive saturation") {
        const auto g = gains_raw_quadrature({0.4, 0.0, 1.0, 0.5, 0.3}, {-20.0, 20.0});
        CHECK(g.n1 == Approx(1.0).epsilon(1e-8));
        CHECK(std::abs(g.n2) < 1e-8);
        CHECK(g.m == Approx(0.4).epsilon(1e-8));
    }
    SUBCASE("primary input pinned high") {
        const auto g = gains_raw_quadrature({20.0, 0.0, 1.0, 0.5, 0.0}, {-1.0, 1.0});
        CHECK(std::abs(g.n1) < 1e-8);
        CHECK(g.n2 == Approx(phi(2.0)).epsilon(1e-8));
        CHECK(g.m == Approx(phi(2.0) + 0.5 * pdf(2.0)).epsilon(1e-8));
    }
    SUBCASE("figure parameters: raw, reduced and Monte Carlo") {
        const double tol = 1e-9;
        const auto raw = gains_raw_quadrature(kFigure, kFigureBounds, tol);
        const auto red = gains_reduced_quadrature(kFigure, kFigureBounds, tol);
        CHECK(std::abs(raw.n1 - red.n1) < 10 * tol);
        CHECK(std::abs(raw.n2 - red.n2) < 10 * tol);
        CHECK(std::abs(raw.m - red.m) < 10 * tol);
        const auto mc = gains_monte_carlo(kFigure, kFigureBounds, 300000, 21);
        CHECK(std::abs(mc.gains[0] - red.n1) <= 4 * mc.stderr_gains[0]);
        CHECK(std::abs(mc.gains[1] - red.n2) <= 4 * mc.stderr_gains[1]);
        CHECK(std::abs(mc.bias - red.m) <= 4 * mc.stderr_bias);
    }
}

TEST_CASE("gain invariants over random parameters") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int i = 0; i < 40; ++i) {
        BivariateStats s;
        s.sigma1 = 0.2 + 2.0 * u01(rng);
        s.sigma2 = s.sigma1 * (0.02 + 0.96 * u01(rng));
        s.rho = -0.9 + 1.8 * u01(rng);
        s.mu1 = -3.0 + 6.0 * u01(rng);
        s.mu2 = -3.0 + 6.0 * u01(rng);
        const SatBounds b{-5.0 * u01(rng), 5.0 * u01(rng)};
        const auto g = gains_reduced_quadrature(s, b);
        CHECK(g.n1 >= -1e-12);
        CHECK(g.n1 <= 1.0 + 1e-12);
        CHECK(g.n1 + std::abs(g.n2) <= 1.0 + 1e-9);
        CHECK(prob_not_saturated(s, b) == g.n1);
    }
}

TEST_CASE("non-saturation probability equals N1") {
    const BivariateStats s{0.5, 0.2, 1.1, 0.6, -0.4};
    const SatBounds b{-1.5, 1.0};
    const double n1 = prob_not_saturated(s, b);
    auto eng = make_stream(77, 0);
    std::normal_distribution<double> z;
    const int n = 400000;
    int hits = 0;
    const double c = std::sqrt(1.0 - s.rho * s.rho);
    for (int i = 0; i < n; ++i) {
        const double z1 = z(eng), z2 = z(eng);
        const double u2 = s.mu2 + s.sigma2 * z2;
        const double u1 = s.mu1 + s.sigma1 * (s.rho * z2 + c * z1);
        if (u2 >= b.zero_threshold() && u1 > b.alpha - u2 && u1 < b.beta + u2) ++hits;
    }
    const double freq = static_cast<double>(hits) / n;
    CHECK(std::abs(freq - n1) <= 4.0 * std::sqrt(n1 * (1 - n1) / n));
}

TEST_CASE("series gains") {
    SUBCASE("symmetric case") {
        const BivariateStats s{0.0, 0.0, 1.0, 0.3, 0.0};
        const auto ser = gains_series(s, {-1.0, 1.0}, {1e-8, 200});
        const auto red = gains_reduced_quadrature(s, {-1.0, 1.0}, 1e-11);
        CHECK(ser.gains.n1 == Approx(red.n1).epsilon(1e-6));
        CHECK(std::abs(ser.gains.n2) < 1e-12);
        CHECK(std::abs(ser.gains.m) < 1e-12);
    }
    SUBCASE("asymmetric case inside the admissible interval") {
        const BivariateStats s{0.3, 0.1, 1.0, 0.3, 0.2};
        const SatBounds b{-2.0, 1.0};
        CHECK(specfun::rho_admissible(1.0, 0.3).contains(0.2));
        const auto ser = gains_series(s, b, {1e-8, 200});
        const auto red = gains_reduced_quadrature(s, b, 1e-11);
        CHECK(std::abs(ser.gains.n1 - red.n1) < 1e-6);
        CHECK(std::abs(ser.gains.n2 - red.n2) < 1e-6);
        CHECK(std::abs(ser.gains.m - red.m) < 1e-6);
        CHECK(ser.terms_used() <= 60);
    }
    SUBCASE("outside the admissible interval") {
        CHECK_THROWS_AS(gains_series(kFigure, kFigureBounds), DomainError);
        CHECK_THROWS_AS(gains_series({0, 0, 1.0, 1.2, 0.0}, {-1, 1}), DomainError);
        const auto forced = gains_series(kFigure, kFigureBounds, {0.01, 200, true});
        CHECK(forced.terms_used() >= 1);
        CHECK(std::isfinite(forced.gains.n1));
    }
    SUBCASE("truncation error shrinks with more terms inside the region") {
        const BivariateStats s{0.3, 0.1, 1.0, 0.3, 0.2};
        const SatBounds b{-2.0, 1.0};
        const auto red = gains_reduced_quadrature(s, b, 1e-11);
        const double e2 = std::abs(gains_series_truncated(s, b, 2).n1 - red.n1);
        const double e10 = std::abs(gains_series_truncated(s, b, 10).n1 - red.n1);
        const double e40 = std::abs(gains_series_truncated(s, b, 40).n1 - red.n1);
        CHECK(e10 < e2);
        CHECK(e40 < 1e-6);
    }
}

TEST_CASE("validation") {
    CHECK_THROWS_AS(validate({0, 0, 0.0, 1, 0}, {}), DomainError);
    CHECK_THROWS_AS(validate({0, 0, 1, -1, 0}, {}), DomainError);
    CHECK_THROWS_AS(validate({0, 0, 1, 1, 1.5}, {}), DomainError);
    CHECK_THROWS_AS(validate({0, 0, 1, 0, 0.3}, {}), DomainError);
    CHECK_THROWS_AS(validate({0, 0, 1, 1, 0}, {1.0, -1.0}), DomainError);
    CHECK_THROWS_AS(validate({NAN, 0, 1, 1, 0}, {}), DomainError);
    CHECK_NOTHROW(validate({0, 0, 1, 1, 0.999}, {}));
}
