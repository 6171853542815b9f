#include "qlc/bivariate_sat.hpp"

#include "qlc/error.hpp"
#include "qlc/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace qlc {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;
constexpr double kInvSqrt2 = 0.70710678118654752440;
// exp(-x^2 / 2) underflows to zero beyond this, so integrals stop here.
constexpr double kGaussCut = 38.5;

double weight(double u) { return 0.5 * specfun::std_normal_pdf(u); }

// sigma2 == 0: u2 is the constant mu2, leaving a fixed-bound saturation.
QuasilinearGains degenerate_gains(const BivariateStats& s, const SatBounds& b, GainMethod method) {
    QuasilinearGains g;
    g.method = method;
    if (s.mu2 < b.zero_threshold()) {
        g.n1 = g.n2 = g.m = 0.0;
        return g;
    }
    const double lo = b.alpha - s.mu2;
    const double hi = b.beta + s.mu2;
    const UnivariateGains uni = univariate_sl_saturation(s.mu1, s.sigma1, lo, hi);
    g.n1 = uni.n;
    g.n2 = specfun::std_normal_cdf((s.mu1 - hi) / s.sigma1) - specfun::std_normal_cdf((lo - s.mu1) / s.sigma1);
    g.m = uni.m;
    return g;
}

double conditional_scale(const BivariateStats& s) { return s.sigma1 * std::sqrt(1.0 - s.rho * s.rho); }

} // namespace

std::string_view to_string(GainMethod method) {
    switch (method) {
    case GainMethod::RawQuadrature: return "raw_quadrature";
    case GainMethod::ReducedQuadrature: return "reduced_quadrature";
    case GainMethod::Series: return "series";
    case GainMethod::MonteCarlo: return "monte_carlo";
    case GainMethod::Degenerate: return "degenerate";
    }
    return "unknown";
}

void validate(const BivariateStats& s, const SatBounds& b) {
    const bool finite = std::isfinite(s.mu1) && std::isfinite(s.mu2) && std::isfinite(s.sigma1) &&
                        std::isfinite(s.sigma2) && std::isfinite(s.rho) && !std::isnan(b.alpha) &&
                        !std::isnan(b.beta);
    if (!finite) throw DomainError("bivariate statistics must be finite");
    if (!(s.sigma1 > 0.0)) throw DomainError("sigma1 must be positive");
    if (!(s.sigma2 >= 0.0)) throw DomainError("sigma2 must be nonnegative");
    if (std::abs(s.rho) > kMaxAbsRho) {
        throw DomainError("|rho| must not exceed 0.999 (rho=" + std::to_string(s.rho) + ")");
    }
    if (s.sigma2 == 0.0 && s.rho != 0.0) throw DomainError("rho must be 0 when sigma2 = 0");
    if (b.alpha > b.beta) throw DomainError("saturation bounds need alpha <= beta");
}

double sat_eval(double u1, double u2, const SatBounds& b) {
    if (u2 < b.zero_threshold()) return 0.0;
    const double upper = b.beta + u2;
    const double lower = b.alpha - u2;
    if (u1 > upper) return upper;
    if (u1 < lower) return lower;
    return u1;
}

std::array<double, 2> sat_gradient(double u1, double u2, const SatBounds& b) {
    if (u2 < b.zero_threshold()) return {0.0, 0.0};
    if (u1 > b.beta + u2) return {0.0, 1.0};
    if (u1 < b.alpha - u2) return {0.0, -1.0};
    return {1.0, 0.0};
}

TransformLimits transform_limits(const BivariateStats& s, const SatBounds& b, double u2prime) {
    validate(s, b);
    if (s.sigma2 == 0.0) throw DomainError("transform_limits requires sigma2 > 0");
    const double scale = conditional_scale(s);
    TransformLimits t;
    t.u1min = (b.alpha - s.mu1 - s.mu2 - u2prime * (s.sigma2 + s.rho * s.sigma1)) / scale;
    t.u1max = (b.beta - s.mu1 + s.mu2 + u2prime * (s.sigma2 - s.rho * s.sigma1)) / scale;
    t.u2min = (b.zero_threshold() - s.mu2) / s.sigma2;
    return t;
}

GammaPair gamma_pair(const BivariateStats& s, const SatBounds& b, double u2prime) {
    const TransformLimits t = transform_limits(s, b, u2prime);
    return {-t.u1min * kInvSqrt2, t.u1max * kInvSqrt2};
}

QuasilinearGains gains_reduced_quadrature(const BivariateStats& s, const SatBounds& b, double abs_tol) {
    validate(s, b);
    if (s.sigma2 == 0.0) return degenerate_gains(s, b, GainMethod::ReducedQuadrature);

    const double scale = conditional_scale(s);
    const double denom = std::numbers::sqrt2 * scale;
    const double start = std::max((b.zero_threshold() - s.mu2) / s.sigma2, -kGaussCut);
    auto gammas = [&](double u) {
        return GammaPair{(s.mu1 - b.alpha + s.mu2 + (s.sigma2 + s.rho * s.sigma1) * u) / denom,
                         (b.beta - s.mu1 + s.mu2 + (s.sigma2 - s.rho * s.sigma1) * u) / denom};
    };

    QuasilinearGains out;
    out.method = GainMethod::ReducedQuadrature;
    if (start >= kGaussCut) {
        out.n1 = out.n2 = out.m = 0.0;
        return out;
    }
    const int pieces = static_cast<int>(std::ceil((kGaussCut - start) / 2.0));
    const quad::QuadOptions opts{abs_tol, 0.0, 4000, pieces};
    auto n1_integrand = [&](double u) {
        const GammaPair g = gammas(u);
        return weight(u) * (std::erf(g.gamma1) + std::erf(g.gamma2));
    };
    auto n2_integrand = [&](double u) {
        const GammaPair g = gammas(u);
        return weight(u) * (std::erf(g.gamma1) - std::erf(g.gamma2));
    };
    auto m_integrand = [&](double u) {
        const GammaPair g = gammas(u);
        const double w = weight(u);
        const double lower = -w * std::erfc(g.gamma1) * (s.mu2 - b.alpha + s.sigma2 * u);
        const double middle_spread = scale / (2.0 * std::numbers::pi) * std::exp(-0.5 * u * u) *
                                     (std::exp(-g.gamma1 * g.gamma1) - std::exp(-g.gamma2 * g.gamma2));
        const double middle_mean = w * (s.mu1 + s.rho * s.sigma1 * u) * (std::erf(g.gamma1) + std::erf(g.gamma2));
        const double upper = w * std::erfc(g.gamma2) * (b.beta + s.mu2 + s.sigma2 * u);
        return lower + middle_spread + middle_mean + upper;
    };

    out.n1 = quad::integrate(n1_integrand, start, kGaussCut, opts).value;
    out.n2 = quad::integrate(n2_integrand, start, kGaussCut, opts).value;
    out.m = quad::integrate(m_integrand, start, kGaussCut, opts).value;
    return out;
}

QuasilinearGains gains_raw_quadrature(const BivariateStats& s, const SatBounds& b, double abs_tol) {
    validate(s, b);
    if (s.sigma2 == 0.0) return degenerate_gains(s, b, GainMethod::RawQuadrature);

    constexpr double reach = 12.0;
    const double one_minus = 1.0 - s.rho * s.rho;
    const double norm = 1.0 / (2.0 * std::numbers::pi * s.sigma1 * s.sigma2 * std::sqrt(one_minus));
    auto pdf = [&](double u1, double u2) {
        const double a = (u1 - s.mu1) / s.sigma1;
        const double c = (u2 - s.mu2) / s.sigma2;
        return norm * std::exp(-(a * a + c * c - 2.0 * s.rho * a * c) / (2.0 * one_minus));
    };

    const double outer_lo = std::max(b.zero_threshold(), s.mu2 - reach * s.sigma2);
    const double outer_hi = s.mu2 + reach * s.sigma2;
    QuasilinearGains out;
    out.method = GainMethod::RawQuadrature;
    if (outer_lo >= outer_hi) {
        out.n1 = out.n2 = out.m = 0.0;
        return out;
    }
    const quad::QuadOptions outer_opts{abs_tol / 4.0, 0.0, 4000, 8};
    const quad::QuadOptions inner_opts{0.01 * abs_tol / (outer_hi - outer_lo), 0.0, 4000};
    const double cond_scale = conditional_scale(s);

    // Integral of g(u1) * pdf(u1, u2) over u1 in [lo, hi], with the range
    // clipped to where the conditional density of u1 is representable.
    auto inner = [&](double u2, double lo, double hi, auto&& g) {
        const double cond_mean = s.mu1 + s.rho * s.sigma1 * (u2 - s.mu2) / s.sigma2;
        lo = std::max(lo, cond_mean - reach * cond_scale);
        hi = std::min(hi, cond_mean + reach * cond_scale);
        if (lo >= hi) return 0.0;
        auto f = [&](double u1) { return g(u1) * pdf(u1, u2); };
        return quad::integrate(f, lo, hi, inner_opts).value;
    };
    constexpr double inf = std::numeric_limits<double>::infinity();
    auto one = [](double) { return 1.0; };

    auto n1_outer = [&](double u2) { return inner(u2, b.alpha - u2, b.beta + u2, one); };
    auto n2_outer = [&](double u2) {
        return inner(u2, b.beta + u2, inf, one) - inner(u2, -inf, b.alpha - u2, one);
    };
    auto m_outer = [&](double u2) {
        const double lower = b.alpha - u2;
        const double upper = b.beta + u2;
        return inner(u2, -inf, lower, [&](double) { return lower; }) +
               inner(u2, lower, upper, [](double u1) { return u1; }) +
               inner(u2, upper, inf, [&](double) { return upper; });
    };
    out.n1 = quad::integrate(n1_outer, outer_lo, outer_hi, outer_opts).value;
    out.n2 = quad::integrate(n2_outer, outer_lo, outer_hi, outer_opts).value;
    out.m = quad::integrate(m_outer, outer_lo, outer_hi, outer_opts).value;
    return out;
}

SeriesGains series_coefficients(const BivariateStats& s, const SatBounds& b) {
    validate(s, b);
    if (s.sigma2 == 0.0) throw DomainError("series coefficients require sigma2 > 0");
    const double root = std::sqrt(1.0 - s.rho * s.rho);
    SeriesGains out;
    out.k1 = (s.sigma2 + s.rho * s.sigma1) / (s.sigma1 * root);
    out.k2 = (s.mu1 - b.alpha + s.mu2) / (s.sigma1 * std::numbers::sqrt2 * root);
    out.k3 = (s.sigma2 - s.rho * s.sigma1) / (s.sigma1 * root);
    out.k4 = (b.beta - s.mu1 + s.mu2) / (s.sigma1 * std::numbers::sqrt2 * root);
    out.p = (b.zero_threshold() - s.mu2) / s.sigma2 * kInvSqrt2;
    return out;
}

namespace {

QuasilinearGains assemble_series(const BivariateStats& s, const SatBounds& b, const SeriesGains& c,
                                 double l_upper, double l_lower) {
    const double root = std::sqrt(1.0 - s.rho * s.rho);
    const double sqrt_2pi = std::sqrt(2.0 * std::numbers::pi);
    QuasilinearGains g;
    g.method = GainMethod::Series;
    g.n1 = (l_upper + l_lower) / (2.0 * kSqrtPi);
    g.n2 = (l_upper - l_lower) / (2.0 * kSqrtPi);
    g.m = s.sigma1 * root / (std::numbers::sqrt2 * std::numbers::pi) *
              (specfun::integral_R(c.p, c.k1, c.k2) - specfun::integral_R(c.p, c.k3, c.k4)) +
          (s.mu1 + s.mu2 - b.alpha) / (2.0 * kSqrtPi) * l_upper +
          (s.mu1 - s.mu2 - b.beta) / (2.0 * kSqrtPi) * l_lower +
          (s.rho * s.sigma1 + s.sigma2) / sqrt_2pi * specfun::integral_S(c.p, c.k1, c.k2) +
          (s.rho * s.sigma1 - s.sigma2) / sqrt_2pi * specfun::integral_S(c.p, c.k3, c.k4) +
          0.25 * (b.alpha + b.beta) * std::erfc(c.p);
    return g;
}

} // namespace

SeriesGains gains_series(const BivariateStats& s, const SatBounds& b, const specfun::SeriesOptions& opts) {
    SeriesGains c = series_coefficients(s, b);
    if (!opts.override_convergence) {
        if (!(s.sigma2 < s.sigma1)) {
            throw DomainError("series gains require sigma2 < sigma1 (or the convergence override)");
        }
        const specfun::RhoInterval admissible = specfun::rho_admissible(s.sigma1, s.sigma2);
        if (!admissible.contains(s.rho)) {
            throw DomainError("rho=" + std::to_string(s.rho) + " is outside the admissible interval (" +
                              std::to_string(admissible.lower) + ", " + std::to_string(admissible.upper) +
                              ") for series convergence");
        }
    }
    c.l_upper = specfun::integral_L(c.p, c.k1, c.k2, opts);
    c.l_lower = specfun::integral_L(c.p, c.k3, c.k4, opts);
    c.gains = assemble_series(s, b, c, c.l_upper.value, c.l_lower.value);
    return c;
}

QuasilinearGains gains_series_truncated(const BivariateStats& s, const SatBounds& b, int terms) {
    if (terms < 1) throw DomainError("series truncation needs at least one term");
    const SeriesGains c = series_coefficients(s, b);
    const double l_upper = specfun::integral_L_partial_sums(c.p, c.k1, c.k2, terms).back();
    const double l_lower = specfun::integral_L_partial_sums(c.p, c.k3, c.k4, terms).back();
    return assemble_series(s, b, c, l_upper, l_lower);
}

double prob_not_saturated(const BivariateStats& s, const SatBounds& b, double abs_tol) {
    return gains_reduced_quadrature(s, b, abs_tol).n1;
}

LinearizationResult gains_monte_carlo(const BivariateStats& s, const SatBounds& b, std::size_t samples,
                                      std::uint64_t seed, unsigned threads) {
    validate(s, b);
    if (s.sigma2 == 0.0) throw DomainError("Monte Carlo gains need sigma2 > 0 (covariance must be definite)");
    GaussianVectorSpec spec;
    spec.mean = Eigen::Vector2d(s.mu1, s.mu2);
    spec.covariance.resize(2, 2);
    const double cross = s.rho * s.sigma1 * s.sigma2;
    spec.covariance << s.sigma1 * s.sigma1, cross, cross, s.sigma2 * s.sigma2;
    auto f = [&b](std::span<const double> u, std::span<double> grad) {
        const auto g = sat_gradient(u[0], u[1], b);
        grad[0] = g[0];
        grad[1] = g[1];
        return sat_eval(u[0], u[1], b);
    };
    return mc_linearize(f, spec, {samples, seed, threads});
}

} // namespace qlc
