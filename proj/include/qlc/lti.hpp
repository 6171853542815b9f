#pragma once

#include "qlc/bivariate_sat.hpp"

#include <Eigen/Dense>

#include <complex>
#include <optional>
#include <vector>

namespace qlc {

struct StateSpace {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd C;
    Eigen::MatrixXd D;

    [[nodiscard]] Eigen::Index states() const { return A.rows(); }
    [[nodiscard]] Eigen::Index inputs() const { return D.cols(); }
    [[nodiscard]] Eigen::Index outputs() const { return D.rows(); }
    [[nodiscard]] bool is_siso() const { return inputs() == 1 && outputs() == 1; }
    /// Throws DomainError when the block sizes disagree or an entry is not finite.
    void check() const;
    /// Frequency response of input 0 to output 0 at s.
    [[nodiscard]] std::complex<double> response(std::complex<double> s) const;
};

/// Scalar static gain k (no states).
StateSpace static_gain(double k);

/// Controllable canonical realization of num(s)/den(s), coefficients in
/// descending powers. Throws DomainError for improper or empty inputs.
StateSpace tf2ss(const std::vector<double>& num, const std::vector<double>& den);

/// Exogenous signal: mean, standard deviation and coloring filter.
struct SignalSpec {
    double mu = 0.0;
    double sigma = 0.0;
    double cutoff = 48.0;  // rad/s
    int filter_order = 3;
};

/// SISO loop e = r - y, u1 = C e, v = sat(u1, u2), z = v + d, y = P z.
struct LoopSpec {
    StateSpace plant;
    StateSpace controller;
    SatBounds bounds;
    SignalSpec ref;
    SignalSpec dist;
    SignalSpec bound_noise;
    void check() const;
};

/// Butterworth low-pass of the given order with DC gain shape Omega^n/B(s),
/// input matrix rescaled so that the H2 norm is exactly one.
StateSpace butterworth_filter(double cutoff, int order = 3);

/// Factor applied to the input matrix of the unit-DC-gain Butterworth filter
/// to reach unit H2 norm (equals sqrt(3 / cutoff) for order 3).
double butterworth_h2_scale(double cutoff, int order = 3);

bool is_hurwitz(const Eigen::MatrixXd& A);
double spectral_abscissa(const Eigen::MatrixXd& A);

/// Solves A S + S A^T + Q = 0 through the Kronecker-vectorized linear system
/// (I (x) A + A (x) I) vec S = -vec Q. Throws NotHurwitz or SingularSystem.
Eigen::MatrixXd lyap_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);
double lyap_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& S);

/// sqrt(trace(C S C^T)) with S = lyap_solve(A, B B^T). Needs D = 0.
double h2_norm(const StateSpace& sys);

struct DcGain {
    double value = 0.0;
    bool infinite = false;
};
/// D - C A^{-1} B for SISO systems; tagged infinite when A is singular.
DcGain dc_gain(const StateSpace& sys);

struct MarginReport {
    bool stable = false;
    std::optional<double> phase_margin_deg;  // minimum over all unity-gain crossovers
    std::optional<double> crossover;         // rad/s, of the minimizing crossover
};
/// Closed-loop stability with the actuator replaced by a unit gain, and the
/// phase margin of L = C P from a log-frequency sweep refined by bisection.
MarginReport stability_and_margin(const StateSpace& plant, const StateSpace& controller,
                                  int points_per_decade = 200);

/// Index layout of the closed-loop state (ref filter, bound-noise filter,
/// disturbance filter, controller, plant).
struct LoopLayout {
    Eigen::Index ref = 0, bound = 0, dist = 0, ctrl = 0, plant = 0, total = 0;
};

/// Quasilinear closed loop with v = n1 u1 + n2 u2 + m:
///   xdot = A x + B w + G q,   signal = C_s x + H_s q,
/// with w the unit white noises (ref, bound, dist) and q = (mu_r, mu_2, mu_d, m).
struct ClosedLoop {
    LoopLayout layout;
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;  // total x 3
    Eigen::MatrixXd G;  // total x 4
    Eigen::RowVectorXd C1, C2, Ce, Cy, Cv;  // u1, u2, e, y, v
    Eigen::RowVector4d H1, H2, He, Hy, Hv;
    double n1 = 1.0, n2 = 0.0;

    [[nodiscard]] Eigen::Vector4d constants(const LoopSpec& spec, double m) const {
        return {spec.ref.mu, spec.bound_noise.mu, spec.dist.mu, m};
    }
    /// Zero-mean state covariance (Lyapunov solution with Q = B B^T).
    [[nodiscard]] Eigen::MatrixXd covariance() const;
    /// Steady mean state for constants q; needs A Hurwitz.
    [[nodiscard]] Eigen::VectorXd mean_state(const Eigen::Vector4d& q) const;
};

/// Throws IllPosed when 1 + D_C D_P n1 vanishes.
ClosedLoop closed_loop_matrices(const LoopSpec& spec, double n1, double n2);

} // namespace qlc
