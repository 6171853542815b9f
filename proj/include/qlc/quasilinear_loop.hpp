#pragma once

#include "qlc/bivariate_sat.hpp"
#include "qlc/lti.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qlc {

struct LoopStatistics {
    double mu1_hat = 0.0;
    double sigma1_hat = 0.0;
    double rho_hat = 0.0;
};

/// Mean, spread and correlation of the actuator input implied by (n1, n2, M).
/// The mean comes from the DC balance mu1 = C_dc (mu_r - P_dc (M + mu_d)).
/// With an infinite DC gain that balance pins M instead of mu1, so the mean
/// must then be supplied through `mu1_hat` (IllPosed otherwise).
LoopStatistics statistics_from_gains(const LoopSpec& spec, double n1, double n2, double M,
                                     std::optional<double> mu1_hat = std::nullopt);

/// Same statistics for an explicit additive injection m of the linearized
/// actuator. Always determined, since the mean comes from the closed loop.
LoopStatistics statistics_from_injection(const LoopSpec& spec, double n1, double n2, double m);

enum class SolverMethod { Auto, Newton, Picard };

struct SolverOptions {
    double tol = 1e-9;
    int max_iterations = 200;
    double quad_tol = 1e-11;
    double picard_damping = 0.5;
    SolverMethod method = SolverMethod::Auto;
    /// Optional warm start (N1, N2, mu1_hat).
    std::optional<std::array<double, 3>> initial;
};

struct LoopSolution {
    QuasilinearGains gains;
    double mu1_hat = 0.0;
    double sigma1_hat = 0.0;
    double rho_hat = 0.0;
    double m_injection = 0.0;  // M - N1 mu1_hat - N2 mu2
    double mu_e = 0.0;
    double sigma_e = 0.0;
    int iterations = 0;
    double residual_norm = 0.0;  // max-abs of the three residuals
    bool converged = false;
    bool hurwitz_at_solution = false;
    std::string method;
};

/// Finds N1, N2 and M consistent with the statistics they induce in the loop.
/// Throws NonConvergence, NotHurwitz (no stable iterate reachable) or
/// DomainError (implied correlation out of range).
LoopSolution fixed_point_solve(const LoopSpec& spec, const SolverOptions& opts = {});

struct ErrorStatistics {
    double mu_e = 0.0;
    double sigma_e = 0.0;
};
/// Mean and standard deviation of the quasilinear tracking error.
ErrorStatistics error_statistics(const LoopSpec& spec, const LoopSolution& solution);

/// Residuals (N1 - F_N1, N2 - F_N2, mean balance) at (n1, n2, mu1_hat).
std::array<double, 3> fixed_point_residual(const LoopSpec& spec, double n1, double n2, double mu1_hat,
                                           double quad_tol = 1e-11);

struct ExistenceReport {
    bool plant_dc_infinite = false;
    bool controller_dc_infinite = false;
    bool well_posed = true;  // 1 + D_C D_P N1 != 0 on [0, 1]
    int grid_n1 = 0;
    int grid_n2 = 0;
    int hurwitz_points = 0;
    int total_points = 0;
    std::vector<std::array<double, 2>> violations;  // (N1, N2) grid points that are not Hurwitz
    bool membership_checked = false;
    bool membership_ok = true;
    double membership_target = 0.0;
    double bias_range_low = 0.0;
    double bias_range_high = 0.0;
    [[nodiscard]] bool all_hurwitz() const { return hurwitz_points == total_points; }
    [[nodiscard]] bool all_passed() const { return well_posed && all_hurwitz() && membership_ok; }
};

/// Advisory check of the assumptions behind existence of a fixed point:
/// Hurwitz closed loop over an (N1, N2) grid, DC-gain classification, and,
/// with an infinite DC gain, that the required mean actuator output lies in
/// the range of attainable expected outputs.
ExistenceReport existence_assumptions_report(const LoopSpec& spec, int grid_n1 = 20, int grid_n2 = 21);

} // namespace qlc
