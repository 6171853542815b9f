#pragma once

#include <vector>

namespace qlc::specfun {

double erf(double x);

/// Standard normal CDF, Phi(x) = (1 + erf(x / sqrt 2)) / 2.
double std_normal_cdf(double x);

/// Standard normal density.
double std_normal_pdf(double x);

/// Regularized lower incomplete gamma P(s, x) for s > 0, x >= 0.
/// Series below x = s + 1, Lentz continued fraction above.
double incomplete_gamma_P(double s, double x);

/// Regularized upper incomplete gamma Q(s, x) = 1 - P(s, x), evaluated
/// directly so that tails keep full relative precision.
double incomplete_gamma_Q(double s, double x);

/// Physicists' Hermite polynomial H_j(x) by the three-term recurrence.
double hermite(unsigned j, double x);

struct SeriesResult {
    double value = 0.0;
    int terms_used = 0;
    bool converged = false;
    double last_relative_change = 0.0;  // percent
};

struct SeriesOptions {
    double tol_percent = 0.01;
    int max_terms = 200;
    // Allow |a| >= 1. The series may still converge empirically; if not,
    // the result comes back with converged == false instead of throwing.
    bool override_convergence = false;
};

/// L(p, a, b) = int_p^inf exp(-x^2) erf(a x + b) dx as the closed-form part
/// plus a truncated Hermite/incomplete-gamma series. Truncation stops once the
/// newest term changes the running value by less than tol_percent percent.
SeriesResult integral_L(double p, double a, double b, const SeriesOptions& opts = {});

/// Running values of L after 1, 2, ..., n_terms series terms (no truncation
/// test). Used to draw accuracy-versus-terms curves.
std::vector<double> integral_L_partial_sums(double p, double a, double b, int n_terms);

/// R(p, a, b) = int_p^inf exp(-x^2) exp(-(a x + b)^2) dx, closed form.
double integral_R(double p, double a, double b);

/// S(p, a, b) = int_p^inf x exp(-x^2) erf(a x + b) dx, closed form.
double integral_S(double p, double a, double b);

struct RhoInterval {
    double lower = 0.0;
    double upper = 0.0;
    bool valid = false;

    [[nodiscard]] bool contains(double rho) const { return valid && rho > lower && rho < upper; }
};

/// Correlations for which both series slopes K1, K3 stay inside (-1, 1).
RhoInterval rho_admissible(double sigma1, double sigma2);

} // namespace qlc::specfun
