#include "qlc/specfun.hpp"

#include "qlc/error.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace qlc::specfun {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kGammaMaxIter = 100000;

double gamma_series(double s, double x) {
    // P(s, x) = x^s e^-x / Gamma(s+1) * sum_k x^k / ((s+1)...(s+k))
    double term = 1.0 / s;
    double sum = term;
    for (int k = 1; k < kGammaMaxIter; ++k) {
        term *= x / (s + k);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) {
            return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
        }
    }
    throw NonConvergence("incomplete gamma series did not converge");
}

double gamma_continued_fraction(double s, double x) {
    // Modified Lentz on the Legendre continued fraction for Q(s, x).
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - s;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kGammaMaxIter; ++i) {
        const double an = -i * (i - s);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) {
            return std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
        }
    }
    throw NonConvergence("incomplete gamma continued fraction did not converge");
}

void check_gamma_domain(double s, double x) {
    if (!(s > 0.0) || !(x >= 0.0)) {
        throw DomainError("incomplete gamma requires s > 0 and x >= 0 (s=" + std::to_string(s) +
                          ", x=" + std::to_string(x) + ")");
    }
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Generates the terms L2(n, p, a, b) one n at a time. The Hermite values are
// carried as h_j = H_j(b) / sqrt(2^j j!) together with a log scale that also
// absorbs exp(-b^2), so high orders neither overflow nor underflow.
class LSeriesTerms {
public:
    LSeriesTerms(double p, double a, double b)
        : p_(p), a_(a), b_(b), p2_(p * p), sgn_p_(sign(p)), sgn_a_(sign(a)),
          log_half_a_(a != 0.0 ? std::log(std::abs(a) / 2.0) : 0.0), log_scale_(-b * b) {}

    double next() {
        const int n = n_++;
        if (a_ == 0.0) return 0.0;
        const double h_even = hermite_at(2 * n);
        const double h_odd = hermite_at(2 * n + 1);

        const double twice_n = 2.0 * n;
        const double log_first = (twice_n + 1.0) * log_half_a_ - std::lgamma(n + 1.5) +
                                 0.5 * (twice_n * std::numbers::ln2 + std::lgamma(twice_n + 1.0)) +
                                 log_scale_;
        const double first = sgn_a_ * std::exp(log_first) * h_even *
                             incomplete_gamma_Q(n + 1.0, p2_);

        double second = 0.0;
        if (sgn_p_ != 0.0) {
            const double log_second = (twice_n + 2.0) * log_half_a_ - std::lgamma(n + 2.0) +
                                      0.5 * ((twice_n + 1.0) * std::numbers::ln2 +
                                             std::lgamma(twice_n + 2.0)) +
                                      log_scale_;
            second = sgn_p_ * std::exp(log_second) * h_odd * incomplete_gamma_P(n + 1.5, p2_);
        }
        return first + second;
    }

private:
    // Advance the scaled Hermite recurrence to order j (monotone access only).
    double hermite_at(int j) {
        while (j_ < j) {
            const double next = std::sqrt(2.0 / (j_ + 1)) * b_ * h_cur_ -
                                std::sqrt(static_cast<double>(j_) / (j_ + 1)) * h_prev_;
            h_prev_ = h_cur_;
            h_cur_ = next;
            ++j_;
            const double mag = std::abs(h_cur_);
            if (mag > 1e150 || (mag < 1e-150 && mag > 0.0)) {
                const double shift = std::log(mag);
                h_cur_ /= mag;
                h_prev_ /= mag;
                log_scale_ += shift;
            }
        }
        return h_cur_;
    }

    double p_, a_, b_, p2_;
    double sgn_p_, sgn_a_;
    double log_half_a_;
    double log_scale_;
    int n_ = 0;
    int j_ = 0;
    double h_prev_ = 0.0;
    double h_cur_ = 1.0;
};

double integral_L_const(double p, double a, double b) {
    return 0.5 * std::sqrt(std::numbers::pi) *
           (std::erf(b / std::sqrt(1.0 + a * a)) - std::erf(p) * std::erf(b));
}

double relative_change_percent(double term, double reference) {
    if (term == 0.0) return 0.0;
    if (reference == 0.0) return std::numeric_limits<double>::infinity();
    return std::abs(term / reference) * 100.0;
}

} // namespace

double erf(double x) { return std::erf(x); }

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double std_normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double incomplete_gamma_P(double s, double x) {
    check_gamma_domain(s, x);
    if (x == 0.0) return 0.0;
    if (x < s + 1.0) return gamma_series(s, x);
    return 1.0 - gamma_continued_fraction(s, x);
}

double incomplete_gamma_Q(double s, double x) {
    check_gamma_domain(s, x);
    if (x == 0.0) return 1.0;
    if (x < s + 1.0) return 1.0 - gamma_series(s, x);
    return gamma_continued_fraction(s, x);
}

double hermite(unsigned j, double x) {
    double prev = 1.0;
    if (j == 0) return prev;
    double cur = 2.0 * x;
    for (unsigned k = 1; k < j; ++k) {
        const double next = 2.0 * x * cur - 2.0 * k * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

SeriesResult integral_L(double p, double a, double b, const SeriesOptions& opts) {
    if (!std::isfinite(p) || !std::isfinite(b) || !std::isfinite(a)) {
        throw DomainError("integral_L requires finite arguments");
    }
    if (std::abs(a) >= 1.0 && !opts.override_convergence) {
        throw DomainError("integral_L series requires |a| < 1 (a=" + std::to_string(a) + ")");
    }
    if (!(opts.tol_percent > 0.0) || opts.max_terms < 1) {
        throw DomainError("integral_L needs tol_percent > 0 and max_terms >= 1");
    }

    LSeriesTerms terms(p, a, b);
    const double part_const = integral_L_const(p, a, b);
    double part_series = terms.next();
    double p_change = relative_change_percent(part_series, part_const);
    int n = 0;
    bool finite = std::isfinite(part_series);
    // A single small term can be an accident of a Hermite zero, so the
    // stopping test must hold on two consecutive terms. With a = 0 every
    // series term is exactly zero and one term settles it.
    int small_in_a_row = p_change <= opts.tol_percent ? 1 : 0;
    const int needed = a == 0.0 ? 1 : 2;

    while (finite && small_in_a_row < needed && n + 1 < opts.max_terms) {
        ++n;
        const double tn = terms.next();
        if (!std::isfinite(tn)) {
            finite = false;
            break;
        }
        p_change = relative_change_percent(tn, part_series + part_const);
        part_series += tn;
        small_in_a_row = p_change <= opts.tol_percent ? small_in_a_row + 1 : 0;
    }

    SeriesResult out;
    out.value = part_series + part_const;
    out.terms_used = n + 1;
    out.last_relative_change = p_change;
    out.converged = finite && p_change <= opts.tol_percent;
    if (!out.converged && !opts.override_convergence) {
        throw NonConvergence("integral_L series did not reach " + std::to_string(opts.tol_percent) +
                             "% within " + std::to_string(opts.max_terms) + " terms");
    }
    return out;
}

std::vector<double> integral_L_partial_sums(double p, double a, double b, int n_terms) {
    std::vector<double> out;
    if (n_terms <= 0) return out;
    out.reserve(static_cast<std::size_t>(n_terms));
    LSeriesTerms terms(p, a, b);
    double running = integral_L_const(p, a, b);
    for (int n = 0; n < n_terms; ++n) {
        running += terms.next();
        out.push_back(running);
    }
    return out;
}

double integral_R(double p, double a, double b) {
    const double q = a * a + 1.0;
    const double root = std::sqrt(q);
    return std::sqrt(std::numbers::pi) / (2.0 * root) * std::exp(-b * b / q) *
           std::erfc((p * a * a + b * a + p) / root);
}

double integral_S(double p, double a, double b) {
    const double q = a * a + 1.0;
    const double root = std::sqrt(q);
    const double boundary = std::isinf(p) ? 0.0 : 0.5 * std::erf(a * p + b) * std::exp(-p * p);
    return boundary + a / (2.0 * root) * std::exp(-b * b / q) * std::erfc((p * q + b * a) / root);
}

RhoInterval rho_admissible(double sigma1, double sigma2) {
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) {
        throw DomainError("rho_admissible requires positive standard deviations");
    }
    const double r = sigma2 / sigma1;
    const double radicand = 2.0 - r * r;
    RhoInterval out;
    if (radicand < 0.0) return out;
    out.upper = 0.5 * (std::sqrt(radicand) - r);
    out.lower = -out.upper;
    out.valid = sigma2 < sigma1 && out.lower < out.upper;
    return out;
}

} // namespace qlc::specfun
