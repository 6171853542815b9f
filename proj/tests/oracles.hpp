#pragma once

// Test-only reference computations. They go through Boost.Math quadrature and
// special functions so that they share no code with the library under test.

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <limits>

namespace oracle {

template <class F>
double finite(F f, double a, double b) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 30, 1e-14);
}

template <class F>
double to_infinity(F f, double a) {
    boost::math::quadrature::exp_sinh<double> integrator;
    return integrator.integrate(f, a, std::numeric_limits<double>::infinity(), 1e-13);
}

// int_p^inf e^{-x^2} erf(a x + b) dx, split at the erf kink region so the
// double-exponential rule sees a smooth integrand on each piece.
inline double integral_L(double p, double a, double b) {
    auto f = [=](double x) { return std::exp(-x * x) * std::erf(a * x + b); };
    const double hi = std::max(p, 0.0) + 7.0;
    return finite(f, p, hi) + to_infinity(f, hi);
}

inline double integral_R(double p, double a, double b) {
    auto f = [=](double x) { return std::exp(-x * x - (a * x + b) * (a * x + b)); };
    const double hi = std::max(p, 0.0) + 7.0;
    return finite(f, p, hi) + to_infinity(f, hi);
}

inline double integral_S(double p, double a, double b) {
    auto f = [=](double x) { return x * std::exp(-x * x) * std::erf(a * x + b); };
    const double hi = std::max(p, 0.0) + 7.0;
    return finite(f, p, hi) + to_infinity(f, hi);
}

} // namespace oracle
