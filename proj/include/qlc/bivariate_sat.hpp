#pragma once

#include "qlc/linearize.hpp"
#include "qlc/specfun.hpp"

#include <array>
#include <cstdint>
#include <string_view>

namespace qlc {

/// Authority pair of the bivariate saturation: output is clipped to
/// [alpha - u2, beta + u2] and forced to zero once u2 < max(-beta, alpha).
struct SatBounds {
    double alpha = -1.0;
    double beta = 1.0;

    [[nodiscard]] double zero_threshold() const { return alpha > -beta ? alpha : -beta; }
};

/// Joint Gaussian statistics of the primary (u1) and secondary (u2) inputs.
struct BivariateStats {
    double mu1 = 0.0;
    double mu2 = 0.0;
    double sigma1 = 1.0;
    double sigma2 = 0.0;
    double rho = 0.0;
};

enum class GainMethod { RawQuadrature, ReducedQuadrature, Series, MonteCarlo, Degenerate };

std::string_view to_string(GainMethod method);

struct QuasilinearGains {
    double n1 = 1.0;
    double n2 = 0.0;
    double m = 0.0;  // capital M, the expected actuator output
    GainMethod method = GainMethod::ReducedQuadrature;

    /// Additive injection of the linearized actuator, M - N1 mu1 - N2 mu2.
    [[nodiscard]] double injection(double mu1, double mu2) const { return m - n1 * mu1 - n2 * mu2; }
};

/// Largest admissible |rho|; the joint density degenerates at +-1.
inline constexpr double kMaxAbsRho = 0.999;

/// Throws DomainError unless sigma1 > 0, sigma2 >= 0, |rho| <= kMaxAbsRho,
/// rho = 0 whenever sigma2 = 0, alpha <= beta and everything is finite.
void validate(const BivariateStats& stats, const SatBounds& bounds);

double sat_eval(double u1, double u2, const SatBounds& bounds);

/// Piecewise gradient (d/du1, d/du2). Kink lines take the value of the
/// adjacent linear region; the jump across u2 = max(-beta, alpha) is not
/// represented (its gradient is a measure-zero Dirac contribution).
std::array<double, 2> sat_gradient(double u1, double u2, const SatBounds& bounds);

struct TransformLimits {
    double u1min = 0.0;
    double u1max = 0.0;
    double u2min = 0.0;
};

/// Integration limits after whitening (u1', u2'): the linear region is
/// u1min <= u1' <= u1max for u2' >= u2min.
TransformLimits transform_limits(const BivariateStats& stats, const SatBounds& bounds, double u2prime);

struct GammaPair {
    double gamma1 = 0.0;  // -u1min / sqrt 2
    double gamma2 = 0.0;  //  u1max / sqrt 2
};

GammaPair gamma_pair(const BivariateStats& stats, const SatBounds& bounds, double u2prime);

/// N1, N2, M from one-dimensional integrals over u2' after the inner integral
/// is done in closed form with erf. The default path.
QuasilinearGains gains_reduced_quadrature(const BivariateStats& stats, const SatBounds& bounds,
                                          double abs_tol = 1e-9);

/// N1, N2, M from nested adaptive quadrature of the joint density. Slow;
/// exists as an independent check on the reduced path.
QuasilinearGains gains_raw_quadrature(const BivariateStats& stats, const SatBounds& bounds,
                                      double abs_tol = 1e-9);

struct SeriesGains {
    QuasilinearGains gains;
    specfun::SeriesResult l_upper;  // L(p, K1, K2)
    specfun::SeriesResult l_lower;  // L(p, K3, K4)
    double k1 = 0.0, k2 = 0.0, k3 = 0.0, k4 = 0.0;
    double p = 0.0;

    [[nodiscard]] int terms_used() const {
        return l_upper.terms_used > l_lower.terms_used ? l_upper.terms_used : l_lower.terms_used;
    }
};

/// Series coefficients of the reduced integrals: erf arguments K1 u + K2 and
/// K3 u + K4 on u >= p with p = u2min / sqrt 2.
SeriesGains series_coefficients(const BivariateStats& stats, const SatBounds& bounds);

/// Gains assembled from the L/R/S integrals. Requires 0 < sigma2 < sigma1 and
/// rho inside rho_admissible unless opts.override_convergence is set.
SeriesGains gains_series(const BivariateStats& stats, const SatBounds& bounds,
                         const specfun::SeriesOptions& opts = {});

/// Gains after exactly `terms` series terms of each L, without a stopping test.
QuasilinearGains gains_series_truncated(const BivariateStats& stats, const SatBounds& bounds, int terms);

/// P(alpha - U2 < U1 < beta + U2, U2 >= max(-beta, alpha)), which equals N1.
double prob_not_saturated(const BivariateStats& stats, const SatBounds& bounds, double abs_tol = 1e-9);

/// Monte Carlo linearization of the bivariate saturation (gains + stderr).
LinearizationResult gains_monte_carlo(const BivariateStats& stats, const SatBounds& bounds,
                                      std::size_t samples, std::uint64_t seed, unsigned threads = 1);

} // namespace qlc
