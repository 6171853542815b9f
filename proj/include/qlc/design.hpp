#pragma once

#include "qlc/quasilinear_loop.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace qlc {

/// Tuning of a proportional gain K in front of `spec_template.plant`. The
/// template's controller is replaced by K at every evaluation.
struct DesignProblem {
    LoopSpec spec_template;
    double gamma = 1.0;  // weight on the actuator-input second moment
    double k_min = 1e-3;
    double k_max = 1e3;
    double k_init = 100.0;
    int grid_points = 40;
    double k_rel_tol = 1e-4;
    SolverOptions solver;
    unsigned threads = 1;

    void check() const;
};

struct ObjectivePoint {
    double k = 0.0;
    double cost = 0.0;  // +inf when the evaluation failed
    bool converged = false;
    std::string failure;
};

struct DesignResult {
    double k_opt = 0.0;
    double cost_opt = 0.0;
    double cost_init = 0.0;  // +inf when the solve at k_init fails
    LoopSolution solution_at_opt;
    int evaluations = 0;
    std::vector<ObjectivePoint> grid;
    std::vector<std::pair<double, std::string>> failures;  // (k, reason)
};

/// Loop specification with the controller set to the static gain k.
LoopSpec design_spec(const DesignProblem& problem, double k);

/// Cost of a solved loop: mu_e^2 + sigma_e^2 + gamma (mu1^2 + sigma1^2).
double design_cost(const LoopSolution& solution, double gamma);

/// Throws EvaluationFailed when the fixed point cannot be found at k.
double objective(const DesignProblem& problem, double k, LoopSolution* solution = nullptr);

/// Objective at each k; failures are recorded instead of thrown.
std::vector<ObjectivePoint> objective_curve(const DesignProblem& problem, const std::vector<double>& ks);

/// Log-spaced grid then golden-section refinement of the best bracket.
/// Throws AllEvaluationsFailed when no grid point has a converged solve.
DesignResult optimize_gain(const DesignProblem& problem);

std::vector<double> log_grid(double lo, double hi, int points);

void write_objective_csv(std::ostream& os, const std::vector<ObjectivePoint>& curve);

} // namespace qlc
