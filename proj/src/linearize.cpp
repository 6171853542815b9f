#include "qlc/linearize.hpp"

#include "qlc/error.hpp"
#include "qlc/parallel.hpp"
#include "qlc/rng.hpp"
#include "qlc/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace qlc {

namespace {

constexpr std::size_t kBlockSize = 8192;

struct BlockSums {
    Eigen::VectorXd grad_sum, grad_sq;
    double f_sum = 0.0, f_sq = 0.0;
};

} // namespace

LinearizationResult mc_linearize(const DifferentiableFn& f, const GaussianVectorSpec& spec,
                                 const MonteCarloOptions& opts) {
    const Eigen::Index n = spec.mean.size();
    if (n == 0 || spec.covariance.rows() != n || spec.covariance.cols() != n) {
        throw DomainError("mc_linearize: mean and covariance dimensions disagree");
    }
    if (!spec.covariance.isApprox(spec.covariance.transpose(), 1e-12)) {
        throw DomainError("mc_linearize: covariance is not symmetric");
    }
    if (opts.samples < 1000) throw DomainError("mc_linearize needs at least 1000 samples");
    const Eigen::LLT<Eigen::MatrixXd> llt(spec.covariance);
    if (llt.info() != Eigen::Success) {
        throw DomainError("mc_linearize: covariance is not positive definite");
    }
    const Eigen::MatrixXd chol = llt.matrixL();

    const std::size_t blocks = (opts.samples + kBlockSize - 1) / kBlockSize;
    std::vector<BlockSums> sums(blocks);

    parallel_for(blocks, opts.threads, [&](std::size_t b) {
        auto engine = make_stream(opts.seed, b);
        std::normal_distribution<double> normal;
        BlockSums s{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
        Eigen::VectorXd z(n), u(n), grad(n);
        const std::size_t begin = b * kBlockSize;
        const std::size_t end = std::min(opts.samples, begin + kBlockSize);
        for (std::size_t k = begin; k < end; ++k) {
            for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(engine);
            u.noalias() = spec.mean + chol * z;
            grad.setZero();
            const double v = f(std::span<const double>(u.data(), static_cast<std::size_t>(n)),
                               std::span<double>(grad.data(), static_cast<std::size_t>(n)));
            if (!std::isfinite(v) || !grad.allFinite()) {
                throw NumericalError("mc_linearize: function returned a non-finite value at draw " +
                                     std::to_string(k));
            }
            s.f_sum += v;
            s.f_sq += v * v;
            s.grad_sum += grad;
            s.grad_sq += grad.cwiseProduct(grad);
        }
        sums[b] = std::move(s);
    });

    Eigen::VectorXd grad_sum = Eigen::VectorXd::Zero(n), grad_sq = Eigen::VectorXd::Zero(n);
    double f_sum = 0.0, f_sq = 0.0;
    for (const auto& s : sums) {
        grad_sum += s.grad_sum;
        grad_sq += s.grad_sq;
        f_sum += s.f_sum;
        f_sq += s.f_sq;
    }
    const auto count = static_cast<double>(opts.samples);
    LinearizationResult out;
    out.gains = grad_sum / count;
    out.bias = f_sum / count;
    const auto stderr_of = [count](double mean, double mean_sq) {
        const double var = std::max(0.0, mean_sq - mean * mean) * count / (count - 1.0);
        return std::sqrt(var / count);
    };
    out.stderr_gains.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) out.stderr_gains[i] = stderr_of(out.gains[i], grad_sq[i] / count);
    out.stderr_bias = stderr_of(out.bias, f_sq / count);
    return out;
}

UnivariateGains univariate_sl_saturation(double mu, double sigma, double alpha, double beta) {
    if (alpha > beta) throw DomainError("univariate saturation needs alpha <= beta");
    if (!(sigma >= 0.0) || !std::isfinite(mu)) {
        throw DomainError("univariate saturation needs finite mu and sigma >= 0");
    }
    if (sigma == 0.0) {
        const bool linear = mu > alpha && mu < beta;
        return {linear ? 1.0 : 0.0, std::clamp(mu, alpha, beta)};
    }
    const double lo = (alpha - mu) / sigma;
    const double hi = (beta - mu) / sigma;
    const double cdf_lo = specfun::std_normal_cdf(lo);
    const double sf_hi = specfun::std_normal_cdf(-hi);
    const double inside = std::isinf(lo) && std::isinf(hi) ? 1.0 : 1.0 - cdf_lo - sf_hi;
    UnivariateGains out;
    out.n = std::clamp(inside, 0.0, 1.0);
    // E[clamp(u)] from the Gaussian partial moments of each branch.
    const double lower_part = std::isinf(alpha) ? 0.0 : alpha * cdf_lo;
    const double upper_part = std::isinf(beta) ? 0.0 : beta * sf_hi;
    out.m = lower_part + upper_part + mu * inside +
            sigma * (specfun::std_normal_pdf(lo) - specfun::std_normal_pdf(hi));
    return out;
}

} // namespace qlc
