#pragma once

#include "qlc/lti.hpp"
#include "qlc/quasilinear_loop.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qlc {

struct SimConfig {
    double dt = 0.0;        // 0 picks a default from the loop and filter bandwidths
    double duration = 0.0;  // 0 picks a default from the slowest closed-loop pole
    double warmup = -1.0;   // negative picks 10% of the duration
    std::uint64_t seed = 0;
    int batches = 40;  // batch means for standard errors
    std::size_t max_steps = 10'000'000;
    bool stationary_start = true;  // draw filter states from their stationary law
    std::size_t trace_stride = 0;  // record every k-th step; 0 records nothing
    // Controller then plant states at t = 0; empty starts from zero.
    Eigen::VectorXd initial_loop_state;
};

/// Fills in the automatic fields and validates dt <= 0.1 / fastest cutoff.
SimConfig resolve_sim_config(const LoopSpec& spec, const SimConfig& config, double n1 = 1.0, double n2 = 0.0);

struct Moments {
    double mean = 0.0;
    double second_moment = 0.0;
    double std = 0.0;
    double mean_stderr = 0.0;
    double second_moment_stderr = 0.0;
    double std_stderr = 0.0;
};

struct TraceSample {
    double t, r, d, u2, e, u1, v, y, lower, upper;
};

struct SimResult {
    Moments e, u1, v, y;
    double non_saturation_frequency = 0.0;
    double non_saturation_stderr = 0.0;
    std::size_t samples = 0;
    double dt = 0.0;
    std::vector<TraceSample> trace;
};

/// Sampled colored signal mu + sigma * F(white noise) after the warmup.
std::vector<double> colored_signal(const SignalSpec& spec, const SimConfig& config);

/// The loop with the bivariate saturation in place. Throws Diverged.
SimResult simulate_nonlinear(const LoopSpec& spec, const SimConfig& config);

/// The loop with v = n1 u1 + n2 u2 + m.
SimResult simulate_quasilinear(const LoopSpec& spec, double n1, double n2, double m, const SimConfig& config);
SimResult simulate_quasilinear(const LoopSpec& spec, const LoopSolution& solution, const SimConfig& config);

struct SimPair {
    SimResult nonlinear;
    SimResult quasilinear;
};
/// Both loops driven by the same exogenous samples, started from the
/// quasilinear mean state.
SimPair simulate_pair(const LoopSpec& spec, const LoopSolution& solution, const SimConfig& config);

struct AccuracyMetrics {
    double error_metric = 0.0;
    double output_metric = 0.0;
};
/// Normalized differences of the RMS tracking error and RMS actuator output.
/// Throws DegenerateMetric when a nonlinear RMS is below 1e-12.
AccuracyMetrics accuracy_metrics(const SimResult& nonlinear, const SimResult& quasilinear);

struct LinearMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd second_moment;
    Eigen::MatrixXd second_moment_stderr;
    std::size_t samples = 0;
};
/// Time averages of x and x x^T for xdot = A x + B w + G q, discretized
/// exactly (Van Loan) and started at x = 0 (warmup discards the transient).
LinearMoments simulate_linear_moments(const ClosedLoop& loop, const Eigen::Vector4d& q, const SimConfig& config);

void write_trace_csv(std::ostream& os, const SimResult& result);
void write_trace_csv(std::ostream& os, const SimPair& pair);

// ---- Monte Carlo accuracy study ------------------------------------------

struct StudyConfig {
    int accepted_target = 100;
    int max_sampled = 2000;
    std::vector<double> sigma2_levels{0.0, 1.25, 2.5, 3.75, 5.0};
    double k_min = 0.01, k_max = 50.0;
    double t_min = 0.01, t_max = 10.0;      // first-order time constant
    double wn_min = 0.01, wn_max = 10.0;    // second-order natural frequency
    double xi_min = 0.05, xi_max = 2.0;     // second-order damping
    double alpha_min = -15.0, alpha_max = 0.0;
    double beta_min = 0.0, beta_max = 15.0;
    double cutoff = 1430.0;
    bool cutoff_in_hz = true;  // multiply by 2 pi
    double pm_threshold_deg = 20.0;
    bool reject_below_threshold = true;
    SimConfig sim;  // dt/duration defaults resolved per system
    double max_duration = 0.0;  // optional cap on simulated seconds (0 = none)
    std::uint64_t seed = 1;
    unsigned threads = 1;
    [[nodiscard]] double cutoff_rad() const;
};

struct StudySystem {
    int index = 0;
    bool second_order = false;
    double k = 0.0, t = 0.0, wn = 0.0, xi = 0.0, alpha = 0.0, beta = 0.0;
    std::optional<double> phase_margin_deg;
    bool stable = false;
    bool rejected = false;
};

struct StudyRecord {
    int system = 0;
    double sigma2 = 0.0;
    bool ok = false;
    std::string failure;
    double error_metric = 0.0;
    double output_metric = 0.0;
    double n1 = 0.0;
    double non_saturation_frequency = 0.0;
};

struct StudyGroup {
    double sigma2 = 0.0;
    int count = 0;
    int failures = 0;
    double error_median = 0.0, error_q25 = 0.0, error_q75 = 0.0;
    double output_median = 0.0, output_q25 = 0.0, output_q75 = 0.0;
};

struct MonteCarloReport {
    int n_sampled = 0;
    int n_rejected = 0;
    std::vector<StudySystem> systems;
    std::vector<StudyRecord> records;
    std::vector<StudyGroup> groups;
    [[nodiscard]] double rejection_fraction() const {
        return n_sampled ? static_cast<double>(n_rejected) / n_sampled : 0.0;
    }
};

/// Draws one random system of the study (no simulation).
StudySystem sample_study_system(const StudyConfig& config, int index);
/// Loop spec of a sampled system at one bound-noise level.
LoopSpec study_loop_spec(const StudyConfig& config, const StudySystem& system, double sigma2);

MonteCarloReport monte_carlo_study(const StudyConfig& config);

double quantile(std::vector<double> values, double q);

} // namespace qlc
