#pragma once

#include "qlc/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <vector>

namespace qlc::quad {

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    int evaluations = 0;
};

struct QuadOptions {
    double abs_tol = 1e-9;
    double rel_tol = 0.0;
    int max_intervals = 4000;
    // Equal-width segments to start from. More than one keeps narrow peaks
    // in a wide range from slipping between the nodes of a single rule.
    int initial_pieces = 1;
};

namespace detail {

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
inline constexpr std::array<double, 11> kKronrodNodes = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
inline constexpr std::array<double, 11> kKronrodWeights = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208062386910, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5, 7, 9.
inline constexpr std::array<double, 5> kGaussWeights = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

struct Segment {
    double a, b, value, error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment kronrod21(F& f, double a, double b) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double fc = f(center);
    double kronrod = fc * kKronrodWeights[10];
    double gauss = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        const double dx = half * kKronrodNodes[i];
        const double pair = f(center - dx) + f(center + dx);
        kronrod += kKronrodWeights[i] * pair;
        if (i % 2 == 1) gauss += kGaussWeights[i / 2] * pair;
    }
    kronrod *= half;
    gauss *= half;
    return {a, b, kronrod, std::abs(kronrod - gauss)};
}

} // namespace detail

/// Globally adaptive Gauss-Kronrod quadrature on a finite interval. Bisects the
/// worst segment until the summed error estimate is below
/// max(abs_tol, rel_tol * |value|). Throws QuadratureFailure otherwise.
template <class F>
QuadResult integrate(F&& f, double a, double b, const QuadOptions& opts = {}) {
    if (a == b) return {};
    if (!std::isfinite(a) || !std::isfinite(b)) {
        throw QuadratureFailure("integrate() needs finite limits; use the semi-infinite variants");
    }
    std::priority_queue<detail::Segment> heap;
    const int pieces = std::max(1, opts.initial_pieces);
    double value = 0.0;
    double error = 0.0;
    for (int i = 0; i < pieces; ++i) {
        const double lo = a + (b - a) * i / pieces;
        const double hi = i + 1 == pieces ? b : a + (b - a) * (i + 1) / pieces;
        const detail::Segment seg = detail::kronrod21(f, lo, hi);
        value += seg.value;
        error += seg.error;
        heap.push(seg);
    }
    int evaluations = 21 * pieces;
    int intervals = pieces;

    auto target = [&] { return std::max(opts.abs_tol, opts.rel_tol * std::abs(value)); };
    while (error > target()) {
        if (intervals >= opts.max_intervals) {
            throw QuadratureFailure("adaptive quadrature hit " + std::to_string(opts.max_intervals) +
                                    " intervals with error estimate " + std::to_string(error));
        }
        const detail::Segment worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            throw QuadratureFailure("adaptive quadrature cannot subdivide further");
        }
        const detail::Segment left = detail::kronrod21(f, worst.a, mid);
        const detail::Segment right = detail::kronrod21(f, mid, worst.b);
        evaluations += 42;
        ++intervals;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if (!std::isfinite(value)) throw QuadratureFailure("integrand produced a non-finite value");
    }
    // Re-sum to shed the drift of the running updates.
    value = 0.0;
    error = 0.0;
    while (!heap.empty()) {
        value += heap.top().value;
        error += heap.top().error;
        heap.pop();
    }
    return {value, error, evaluations};
}

/// Integral over [a, inf) through x = a + scale * s / (1 - s), s in [0, 1).
template <class F>
QuadResult integrate_to_infinity(F&& f, double a, const QuadOptions& opts = {}, double scale = 1.0) {
    auto mapped = [&](double s) {
        if (s >= 1.0) return 0.0;
        const double one_minus = 1.0 - s;
        const double x = a + scale * s / one_minus;
        const double v = f(x);
        return v == 0.0 ? 0.0 : v * scale / (one_minus * one_minus);
    };
    return integrate(mapped, 0.0, 1.0, opts);
}

/// Integral over (-inf, b] through x = b - scale * s / (1 - s).
template <class F>
QuadResult integrate_from_minus_infinity(F&& f, double b, const QuadOptions& opts = {},
                                         double scale = 1.0) {
    auto reflected = [&](double x) { return f(2.0 * b - x); };
    return integrate_to_infinity(reflected, b, opts, scale);
}

} // namespace qlc::quad
