#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>

namespace qlc {

struct GaussianVectorSpec {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

struct LinearizationResult {
    Eigen::VectorXd gains;         // N = E[grad f]
    double bias = 0.0;             // M = E[f]
    Eigen::VectorXd stderr_gains;
    double stderr_bias = 0.0;
};

/// A piecewise-differentiable scalar function of n inputs. Returns f(u) and
/// writes the gradient into `grad` (same length as u).
using DifferentiableFn = std::function<double(std::span<const double> u, std::span<double> grad)>;

struct MonteCarloOptions {
    std::size_t samples = 100000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Monte Carlo estimate of the mean-square optimal linearization of f under a
/// Gaussian input: gains = sample mean of grad f, bias = sample mean of f.
/// Samples are drawn in fixed blocks, each from its own substream, and reduced
/// in block order, so the result depends only on (seed, samples).
LinearizationResult mc_linearize(const DifferentiableFn& f, const GaussianVectorSpec& spec,
                                 const MonteCarloOptions& opts);

struct UnivariateGains {
    double n = 0.0;
    double m = 0.0;
};

/// Closed-form gain and bias of a fixed-bound saturation clamp(u, alpha, beta)
/// with u ~ Normal(mu, sigma^2). sigma = 0 gives the deterministic limit.
UnivariateGains univariate_sl_saturation(double mu, double sigma, double alpha, double beta);

} // namespace qlc
