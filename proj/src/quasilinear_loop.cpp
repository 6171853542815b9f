#include "qlc/quasilinear_loop.hpp"

#include "qlc/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace qlc {

namespace {

struct DcContext {
    DcGain controller;
    DcGain plant;
    [[nodiscard]] bool finite() const { return !controller.infinite && !plant.infinite; }
};

DcContext dc_context(const LoopSpec& spec) { return {dc_gain(spec.controller), dc_gain(spec.plant)}; }

struct Spread {
    double sigma1 = 0.0;
    double rho = 0.0;
};

Spread spread_from(const LoopSpec& spec, const ClosedLoop& cl, const Eigen::MatrixXd& S) {
    Spread out;
    const double var1 = (cl.C1 * S * cl.C1.transpose())(0, 0);
    out.sigma1 = std::sqrt(std::max(0.0, var1));
    const double s2 = spec.bound_noise.sigma;
    if (out.sigma1 > 0.0 && s2 > 0.0) {
        const double rho = (cl.C1 * S * cl.C2.transpose())(0, 0) / (out.sigma1 * s2);
        if (!(std::abs(rho) <= 1.0 + 1e-9)) {
            throw DomainError("implied correlation " + std::to_string(rho) + " is outside (-1, 1)");
        }
        out.rho = std::clamp(rho, -kMaxAbsRho, kMaxAbsRho);
    }
    return out;
}

double mean_from_balance(const LoopSpec& spec, const DcContext& dc, double M) {
    return dc.controller.value * (spec.ref.mu - dc.plant.value * (M + spec.dist.mu));
}

struct Evaluation {
    std::array<double, 3> residual{};
    QuasilinearGains gains;
    Spread spread;
    double mu1 = 0.0;
    [[nodiscard]] double max_abs() const {
        return std::max({std::abs(residual[0]), std::abs(residual[1]), std::abs(residual[2])});
    }
    [[nodiscard]] double norm() const {
        return std::sqrt(residual[0] * residual[0] + residual[1] * residual[1] + residual[2] * residual[2]);
    }
};

class Problem {
public:
    Problem(const LoopSpec& spec, double quad_tol) : spec_(spec), dc_(dc_context(spec)), quad_tol_(quad_tol) {
        if (!dc_.finite()) {
            inv_c_ = dc_.controller.infinite ? 0.0 : 1.0 / dc_.controller.value;
            inv_p_ = dc_.plant.infinite ? 0.0 : 1.0 / dc_.plant.value;
            if (!std::isfinite(inv_c_) || !std::isfinite(inv_p_)) {
                throw IllPosed("an infinite DC gain paired with a zero DC gain leaves the mean undetermined");
            }
        }
    }

    [[nodiscard]] const DcContext& dc() const { return dc_; }

    Evaluation evaluate(double n1, double n2, double mu1) const {
        const ClosedLoop cl = closed_loop_matrices(spec_, n1, n2);
        const Eigen::MatrixXd S = cl.covariance();
        Evaluation ev;
        ev.mu1 = mu1;
        ev.spread = spread_from(spec_, cl, S);
        BivariateStats st;
        st.mu1 = mu1;
        st.mu2 = spec_.bound_noise.mu;
        st.sigma2 = spec_.bound_noise.sigma;
        st.sigma1 = std::max(ev.spread.sigma1, 1e-9 * (1.0 + std::abs(mu1) + st.sigma2));
        st.rho = st.sigma2 > 0.0 ? ev.spread.rho : 0.0;
        ev.gains = gains_reduced_quadrature(st, spec_.bounds, quad_tol_);
        ev.residual[0] = n1 - ev.gains.n1;
        ev.residual[1] = n2 - ev.gains.n2;
        ev.residual[2] = mean_residual(mu1, ev.gains.m);
        if (!std::isfinite(ev.residual[0]) || !std::isfinite(ev.residual[1]) || !std::isfinite(ev.residual[2])) {
            throw NumericalError("fixed-point residual is not finite");
        }
        return ev;
    }

    [[nodiscard]] double mean_residual(double mu1, double M) const {
        if (dc_.finite()) {
            const double cp = dc_.controller.value * dc_.plant.value;
            return (mu1 - mean_from_balance(spec_, dc_, M)) / (1.0 + std::abs(cp));
        }
        return M + spec_.dist.mu - spec_.ref.mu * inv_p_ + mu1 * inv_c_ * inv_p_;
    }

    /// Picard target for the mean given the current evaluation.
    double mean_update(const Evaluation& ev, double n1, double n2) const {
        if (dc_.finite()) return mean_from_balance(spec_, dc_, ev.gains.m);
        // The balance does not involve mu1 directly: take a secant step on it.
        const double h = 1e-6 * std::max(1.0, std::abs(ev.mu1));
        const Evaluation ev2 = evaluate(n1, n2, ev.mu1 + h);
        const double slope = (ev2.residual[2] - ev.residual[2]) / h;
        if (!(std::abs(slope) > 1e-14)) throw NonConvergence("mean balance is insensitive to mu1");
        return ev.mu1 - ev.residual[2] / slope;
    }

private:
    const LoopSpec& spec_;
    DcContext dc_;
    double quad_tol_;
    double inv_c_ = 0.0;
    double inv_p_ = 0.0;
};

constexpr double kMinN1 = 1e-8;

std::array<double, 3> initial_iterate(const LoopSpec& spec) {
    double n1_lin = 1.0;
    for (; n1_lin > 1e-4; n1_lin *= 0.5) {
        try {
            if (is_hurwitz(closed_loop_matrices(spec, n1_lin, 0.0).A)) break;
        } catch (const IllPosed&) {
        }
    }
    LoopStatistics lin;
    try {
        lin = statistics_from_injection(spec, n1_lin, 0.0, 0.0);
    } catch (const Error&) {
        return {0.5, 0.0, 0.0};
    }
    const double lo = spec.bounds.alpha - spec.bound_noise.mu;
    const double hi = spec.bounds.beta + spec.bound_noise.mu;
    double n1 = 0.02;
    if (spec.bound_noise.mu >= spec.bounds.zero_threshold() && lo <= hi) {
        n1 = univariate_sl_saturation(lin.mu1_hat, lin.sigma1_hat, lo, hi).n;
    }
    n1 = std::clamp(n1, 0.02, n1_lin);
    for (int i = 0; i < 20; ++i) {
        try {
            if (is_hurwitz(closed_loop_matrices(spec, n1, 0.0).A)) break;
        } catch (const IllPosed&) {
        }
        n1 *= 0.5;
    }
    return {n1, 0.0, lin.mu1_hat};
}

bool recoverable(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::NotHurwitz:
    case ErrorKind::IllPosed:
    case ErrorKind::SingularSystem:
    case ErrorKind::QuadratureFailure:
    case ErrorKind::Numerical:
    case ErrorKind::Domain:
        return true;
    default:
        return false;
    }
}

struct Outcome {
    std::array<double, 3> x{};
    Evaluation ev;
    int iterations = 0;
    bool converged = false;
    bool evaluated = false;
};

Outcome newton(const Problem& prob, std::array<double, 3> x, const SolverOptions& opts) {
    Outcome out;
    Evaluation ev = prob.evaluate(x[0], x[1], x[2]);
    out.evaluated = true;
    double radius = 0.5;
    for (int it = 0; it < opts.max_iterations; ++it) {
        out.x = x;
        out.ev = ev;
        out.iterations = it;
        if (ev.max_abs() <= opts.tol) {
            out.converged = true;
            return out;
        }
        Eigen::Matrix3d J;
        for (int k = 0; k < 3; ++k) {
            std::array<double, 3> xp = x;
            double h = 1e-6 * std::max(1.0, std::abs(x[k]));
            if (k == 0 && x[0] + h > 1.0) h = -h;
            xp[k] += h;
            const Evaluation evp = prob.evaluate(xp[0], xp[1], xp[2]);
            for (int r = 0; r < 3; ++r) J(r, k) = (evp.residual[r] - ev.residual[r]) / h;
        }
        const Eigen::Vector3d R(ev.residual[0], ev.residual[1], ev.residual[2]);
        const Eigen::FullPivLU<Eigen::Matrix3d> lu(J);
        if (!lu.isInvertible()) return out;
        Eigen::Vector3d step = lu.solve(-R);
        if (!step.allFinite()) return out;
        // Trust region on the gains; the mean is scaled by its own size.
        const double size = std::max({std::abs(step[0]), std::abs(step[1]),
                                      std::abs(step[2]) / (1.0 + std::abs(x[2]))});
        if (size > radius) step *= radius / size;
        double t = 1.0;
        bool accepted = false;
        for (int back = 0; back < 40 && !accepted; ++back, t *= 0.5) {
            std::array<double, 3> xn{x[0] + t * step[0], x[1] + t * step[1], x[2] + t * step[2]};
            if (xn[0] > 1.0) xn[0] = 1.0;
            if (xn[0] < kMinN1) xn[0] = std::max(kMinN1, 0.1 * x[0]);
            try {
                const Evaluation evn = prob.evaluate(xn[0], xn[1], xn[2]);
                if (evn.norm() < (1.0 - 1e-4 * t) * ev.norm() || evn.max_abs() <= opts.tol) {
                    x = xn;
                    ev = evn;
                    accepted = true;
                }
            } catch (const Error& e) {
                if (!recoverable(e)) throw;
            }
        }
        if (!accepted) return out;
        radius = t >= 0.5 ? std::min(1.0, radius * 2.0) : std::max(1e-6, radius * 0.5);
    }
    out.x = x;
    out.ev = ev;
    out.iterations = opts.max_iterations;
    out.converged = ev.max_abs() <= opts.tol;
    return out;
}

Outcome picard(const Problem& prob, std::array<double, 3> x, const SolverOptions& opts) {
    Outcome out;
    Evaluation ev = prob.evaluate(x[0], x[1], x[2]);
    out.evaluated = true;
    double lambda = opts.picard_damping;
    for (int it = 0; it < opts.max_iterations; ++it) {
        out.x = x;
        out.ev = ev;
        out.iterations = it;
        if (ev.max_abs() <= opts.tol) {
            out.converged = true;
            return out;
        }
        const double mu_target = prob.mean_update(ev, x[0], x[1]);
        bool stepped = false;
        while (!stepped) {
            std::array<double, 3> xn{(1 - lambda) * x[0] + lambda * ev.gains.n1,
                                     (1 - lambda) * x[1] + lambda * ev.gains.n2,
                                     (1 - lambda) * x[2] + lambda * mu_target};
            xn[0] = std::clamp(xn[0], kMinN1, 1.0);
            try {
                ev = prob.evaluate(xn[0], xn[1], xn[2]);
                x = xn;
                stepped = true;
            } catch (const Error& e) {
                if (!recoverable(e)) throw;
                lambda *= 0.5;
                if (lambda < 1e-4) throw;
            }
        }
    }
    out.x = x;
    out.ev = ev;
    out.iterations = opts.max_iterations;
    out.converged = ev.max_abs() <= opts.tol;
    return out;
}

} // namespace

LoopStatistics statistics_from_injection(const LoopSpec& spec, double n1, double n2, double m) {
    const ClosedLoop cl = closed_loop_matrices(spec, n1, n2);
    const Eigen::MatrixXd S = cl.covariance();
    const Spread sp = spread_from(spec, cl, S);
    const Eigen::Vector4d q = cl.constants(spec, m);
    const Eigen::VectorXd xbar = cl.mean_state(q);
    LoopStatistics out;
    out.mu1_hat = (cl.C1 * xbar)(0) + cl.H1.dot(q);
    out.sigma1_hat = sp.sigma1;
    out.rho_hat = sp.rho;
    return out;
}

LoopStatistics statistics_from_gains(const LoopSpec& spec, double n1, double n2, double M,
                                     std::optional<double> mu1_hat) {
    const ClosedLoop cl = closed_loop_matrices(spec, n1, n2);
    const Spread sp = spread_from(spec, cl, cl.covariance());
    const DcContext dc = dc_context(spec);
    LoopStatistics out;
    out.sigma1_hat = sp.sigma1;
    out.rho_hat = sp.rho;
    if (dc.finite()) {
        out.mu1_hat = mean_from_balance(spec, dc, M);
    } else if (mu1_hat) {
        out.mu1_hat = *mu1_hat;
    } else {
        throw IllPosed("with an infinite DC gain the actuator-input mean is not determined by M alone");
    }
    return out;
}

std::array<double, 3> fixed_point_residual(const LoopSpec& spec, double n1, double n2, double mu1_hat,
                                           double quad_tol) {
    const Problem prob(spec, quad_tol);
    return prob.evaluate(n1, n2, mu1_hat).residual;
}

LoopSolution fixed_point_solve(const LoopSpec& spec, const SolverOptions& opts) {
    spec.check();
    if (!(opts.tol > 0.0) || opts.max_iterations < 1 || !(opts.picard_damping > 0.0) || opts.picard_damping > 1.0) {
        throw DomainError("solver options out of range");
    }
    const Problem prob(spec, opts.quad_tol);
    const std::array<double, 3> x0 = opts.initial ? *opts.initial : initial_iterate(spec);

    Outcome best;
    std::string method;
    std::string failure;
    auto attempt = [&](auto&& solver, const char* name, const std::array<double, 3>& start) {
        try {
            Outcome o = solver(prob, start, opts);
            if (o.evaluated && (!best.evaluated || o.ev.max_abs() < best.ev.max_abs() || o.converged)) {
                best = o;
                method = name;
            }
        } catch (const Error& e) {
            if (!recoverable(e) && e.kind() != ErrorKind::NonConvergence) throw;
            failure = e.what();
        }
    };
    if (opts.method != SolverMethod::Picard) attempt(newton, "newton", x0);
    if (!best.converged && opts.method != SolverMethod::Newton) {
        attempt(picard, "picard", best.evaluated ? best.x : x0);
        if (!best.converged && best.evaluated) attempt(picard, "picard", x0);
    }
    if (!best.evaluated) {
        throw NotHurwitz("no stable iterate reachable from the initial point" +
                         (failure.empty() ? std::string() : ": " + failure));
    }
    if (!best.converged) {
        throw NonConvergence("fixed point not reached: residual " + std::to_string(best.ev.max_abs()) + " after " +
                             std::to_string(best.iterations) + " iterations (" + method + ")");
    }

    LoopSolution sol;
    sol.gains = best.ev.gains;
    sol.gains.n1 = best.x[0];
    sol.gains.n2 = best.x[1];
    sol.mu1_hat = best.x[2];
    sol.sigma1_hat = best.ev.spread.sigma1;
    sol.rho_hat = best.ev.spread.rho;
    sol.m_injection = sol.gains.injection(sol.mu1_hat, spec.bound_noise.mu);
    sol.iterations = best.iterations;
    sol.residual_norm = best.ev.max_abs();
    sol.converged = true;
    sol.method = method;
    sol.hurwitz_at_solution = is_hurwitz(closed_loop_matrices(spec, sol.gains.n1, sol.gains.n2).A);
    if (sol.hurwitz_at_solution) {
        const ErrorStatistics es = error_statistics(spec, sol);
        sol.mu_e = es.mu_e;
        sol.sigma_e = es.sigma_e;
    }
    return sol;
}

ErrorStatistics error_statistics(const LoopSpec& spec, const LoopSolution& solution) {
    const ClosedLoop cl = closed_loop_matrices(spec, solution.gains.n1, solution.gains.n2);
    const Eigen::MatrixXd S = cl.covariance();
    const Eigen::Vector4d q = cl.constants(spec, solution.m_injection);
    const Eigen::VectorXd xbar = cl.mean_state(q);
    ErrorStatistics out;
    out.mu_e = (cl.Ce * xbar)(0) + cl.He.dot(q);
    out.sigma_e = std::sqrt(std::max(0.0, (cl.Ce * S * cl.Ce.transpose())(0, 0)));
    return out;
}

ExistenceReport existence_assumptions_report(const LoopSpec& spec, int grid_n1, int grid_n2) {
    spec.check();
    ExistenceReport rep;
    const DcContext dc = dc_context(spec);
    rep.plant_dc_infinite = dc.plant.infinite;
    rep.controller_dc_infinite = dc.controller.infinite;
    const double dd = spec.controller.D(0, 0) * spec.plant.D(0, 0);
    rep.well_posed = 1.0 + dd > 0.0;  // 1 + D_C D_P N1 is affine in N1 and equals 1 at N1 = 0
    rep.grid_n1 = std::max(1, grid_n1);
    rep.grid_n2 = std::max(2, grid_n2);
    for (int i = 1; i <= rep.grid_n1; ++i) {
        const double n1 = static_cast<double>(i) / rep.grid_n1;
        for (int j = 0; j < rep.grid_n2; ++j) {
            const double n2 = -1.0 + 2.0 * j / (rep.grid_n2 - 1);
            ++rep.total_points;
            bool ok = false;
            try {
                ok = is_hurwitz(closed_loop_matrices(spec, n1, n2).A);
            } catch (const IllPosed&) {
            }
            if (ok) {
                ++rep.hurwitz_points;
            } else {
                rep.violations.push_back({n1, n2});
            }
        }
    }
    if (!dc.finite()) {
        rep.membership_checked = true;
        const double inv_p = dc.plant.infinite ? 0.0 : 1.0 / dc.plant.value;
        // The balance needs E[v] = mu_r / P_dc - mu_d (plus a mu1 term that
        // vanishes when P_dc is infinite).
        rep.membership_target = spec.ref.mu * inv_p - spec.dist.mu;
        const double thr = spec.bounds.zero_threshold();
        const double mu2 = spec.bound_noise.mu, s2 = spec.bound_noise.sigma;
        double p_on = 0.0, mean_on = 0.0;  // P(u2 >= thr), E[u2 1{u2 >= thr}]
        if (s2 > 0.0) {
            const double z = (thr - mu2) / s2;
            p_on = 1.0 - specfun::std_normal_cdf(z);
            mean_on = mu2 * p_on + s2 * specfun::std_normal_pdf(z);
        } else if (mu2 >= thr) {
            p_on = 1.0;
            mean_on = mu2;
        }
        rep.bias_range_low = spec.bounds.alpha * p_on - mean_on;
        rep.bias_range_high = spec.bounds.beta * p_on + mean_on;
        rep.membership_ok = rep.membership_target > rep.bias_range_low && rep.membership_target < rep.bias_range_high;
    }
    return rep;
}

} // namespace qlc
