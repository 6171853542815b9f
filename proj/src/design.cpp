#include "qlc/design.hpp"

#include "qlc/error.hpp"
#include "qlc/parallel.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace qlc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Probe {
    double cost = kInf;
    LoopSolution solution;
    std::string failure;
};

Probe probe(const DesignProblem& p, double k) {
    Probe out;
    try {
        out.cost = objective(p, k, &out.solution);
    } catch (const Error& e) {
        out.failure = e.what();
    }
    return out;
}

} // namespace

void DesignProblem::check() const {
    if (!(gamma > 0.0)) throw ConfigError("design gamma must be positive");
    if (!(k_min > 0.0) || !(k_min < k_max)) throw ConfigError("design needs 0 < k_min < k_max");
    if (!(k_init >= k_min && k_init <= k_max)) throw ConfigError("design k_init must lie within [k_min, k_max]");
    if (grid_points < 3) throw ConfigError("design grid needs at least 3 points");
    if (!(k_rel_tol > 0.0)) throw ConfigError("design k_rel_tol must be positive");
    design_spec(*this, k_init).check();
}

LoopSpec design_spec(const DesignProblem& problem, double k) {
    LoopSpec spec = problem.spec_template;
    spec.controller = static_gain(k);
    return spec;
}

double design_cost(const LoopSolution& s, double gamma) {
    return s.mu_e * s.mu_e + s.sigma_e * s.sigma_e + gamma * (s.mu1_hat * s.mu1_hat + s.sigma1_hat * s.sigma1_hat);
}

double objective(const DesignProblem& problem, double k, LoopSolution* solution) {
    if (!(k > 0.0)) throw DomainError("design gain must be positive");
    LoopSolution s;
    try {
        s = fixed_point_solve(design_spec(problem, k), problem.solver);
    } catch (const Error& e) {
        throw EvaluationFailed("K=" + std::to_string(k) + ": " + std::string(to_string(e.kind())) + ": " + e.what());
    }
    const double cost = design_cost(s, problem.gamma);
    if (!std::isfinite(cost)) throw EvaluationFailed("K=" + std::to_string(k) + ": non-finite cost");
    if (solution) *solution = s;
    return cost;
}

std::vector<double> log_grid(double lo, double hi, int points) {
    std::vector<double> ks(static_cast<std::size_t>(points));
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < points; ++i) ks[i] = std::exp(a + (b - a) * i / (points - 1));
    ks.front() = lo;
    ks.back() = hi;
    return ks;
}

std::vector<ObjectivePoint> objective_curve(const DesignProblem& problem, const std::vector<double>& ks) {
    std::vector<ObjectivePoint> out(ks.size());
    parallel_for(ks.size(), problem.threads, [&](std::size_t i) {
        const Probe pr = probe(problem, ks[i]);
        out[i] = {ks[i], pr.cost, std::isfinite(pr.cost), pr.failure};
    });
    return out;
}

DesignResult optimize_gain(const DesignProblem& problem) {
    problem.check();
    DesignResult res;
    res.grid = objective_curve(problem, log_grid(problem.k_min, problem.k_max, problem.grid_points));
    res.evaluations = static_cast<int>(res.grid.size());
    std::size_t best = res.grid.size();
    for (std::size_t i = 0; i < res.grid.size(); ++i) {
        const ObjectivePoint& pt = res.grid[i];
        if (!pt.converged) {
            res.failures.emplace_back(pt.k, pt.failure);
            continue;
        }
        if (best == res.grid.size() || pt.cost < res.grid[best].cost) best = i;
    }
    if (best == res.grid.size()) {
        throw AllEvaluationsFailed("no grid gain in [" + std::to_string(problem.k_min) + ", " +
                                   std::to_string(problem.k_max) + "] gave a converged solve");
    }

    // Golden section in log k over the neighbours of the best grid point.
    double lo = std::log(res.grid[best == 0 ? 0 : best - 1].k);
    double hi = std::log(res.grid[std::min(best + 1, res.grid.size() - 1)].k);
    double best_x = std::log(res.grid[best].k);
    double best_cost = res.grid[best].cost;
    auto eval = [&](double x) {
        ++res.evaluations;
        const Probe pr = probe(problem, std::exp(x));
        if (!pr.failure.empty()) res.failures.emplace_back(std::exp(x), pr.failure);
        if (pr.cost < best_cost) {
            best_cost = pr.cost;
            best_x = x;
        }
        return pr.cost;
    };
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - invphi * (hi - lo), x2 = lo + invphi * (hi - lo);
    double f1 = eval(x1), f2 = eval(x2);
    // Relative tolerance in k equals absolute tolerance in log k.
    while (hi - lo > problem.k_rel_tol) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = eval(x2);
        }
    }

    res.k_opt = std::exp(best_x);
    res.cost_opt = objective(problem, res.k_opt, &res.solution_at_opt);
    ++res.evaluations;
    const Probe init = probe(problem, problem.k_init);
    ++res.evaluations;
    res.cost_init = init.cost;
    return res;
}

void write_objective_csv(std::ostream& os, const std::vector<ObjectivePoint>& curve) {
    os.precision(17);
    os << "k,cost,converged\n";
    for (const ObjectivePoint& p : curve) os << p.k << ',' << p.cost << ',' << (p.converged ? 1 : 0) << '\n';
}

} // namespace qlc
