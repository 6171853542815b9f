#include "qlc/lti.hpp"

#include "qlc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace qlc {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

bool all_finite(const MatrixXd& m) { return m.size() == 0 || m.allFinite(); }

// Unit-DC-gain Butterworth at cutoff 1 in controllable canonical form.
StateSpace butterworth_prototype(int order) {
    std::vector<std::complex<double>> poly{1.0};
    for (int k = 1; k <= order; ++k) {
        const double angle = std::numbers::pi * (2.0 * k + order - 1.0) / (2.0 * order);
        const std::complex<double> pole = std::polar(1.0, angle);
        std::vector<std::complex<double>> next(poly.size() + 1, 0.0);
        for (std::size_t i = 0; i < poly.size(); ++i) {
            next[i] += poly[i];
            next[i + 1] -= pole * poly[i];
        }
        poly = std::move(next);
    }
    std::vector<double> den(poly.size());
    for (std::size_t i = 0; i < poly.size(); ++i) den[i] = poly[i].real();
    return tf2ss({den.back()}, den);
}

} // namespace

void StateSpace::check() const {
    const Index n = A.rows();
    if (A.cols() != n || B.rows() != n || C.cols() != n || D.rows() != C.rows() || D.cols() != B.cols()) {
        throw DomainError("state-space block sizes are inconsistent");
    }
    if (!all_finite(A) || !all_finite(B) || !all_finite(C) || !all_finite(D)) {
        throw DomainError("state-space matrices must be finite");
    }
}

std::complex<double> StateSpace::response(std::complex<double> s) const {
    std::complex<double> out = D(0, 0);
    if (states() == 0) return out;
    const Eigen::MatrixXcd M = s * Eigen::MatrixXcd::Identity(states(), states()) - A.cast<std::complex<double>>();
    const Eigen::VectorXcd x = M.partialPivLu().solve(B.col(0).cast<std::complex<double>>());
    return out + (C.row(0).cast<std::complex<double>>() * x)(0);
}

StateSpace static_gain(double k) {
    StateSpace s;
    s.A.resize(0, 0);
    s.B.resize(0, 1);
    s.C.resize(1, 0);
    s.D = MatrixXd::Constant(1, 1, k);
    return s;
}

StateSpace tf2ss(const std::vector<double>& num_in, const std::vector<double>& den_in) {
    auto strip = [](const std::vector<double>& v) {
        std::size_t i = 0;
        while (i < v.size() && v[i] == 0.0) ++i;
        return std::vector<double>(v.begin() + static_cast<long>(i), v.end());
    };
    std::vector<double> num = strip(num_in);
    const std::vector<double> den = strip(den_in);
    for (double c : num_in) {
        if (!std::isfinite(c)) throw DomainError("transfer-function coefficients must be finite");
    }
    for (double c : den_in) {
        if (!std::isfinite(c)) throw DomainError("transfer-function coefficients must be finite");
    }
    if (den.empty()) throw DomainError("denominator polynomial is zero");
    if (num.size() > den.size()) throw DomainError("transfer function is improper");
    if (num.empty()) num = {0.0};

    const std::size_t n = den.size() - 1;
    std::vector<double> a(den.size()), b(den.size(), 0.0);
    for (std::size_t i = 0; i < den.size(); ++i) a[i] = den[i] / den[0];
    for (std::size_t i = 0; i < num.size(); ++i) b[den.size() - num.size() + i] = num[i] / den[0];

    StateSpace s;
    s.D = MatrixXd::Constant(1, 1, b[0]);
    s.A = MatrixXd::Zero(static_cast<Index>(n), static_cast<Index>(n));
    s.B = MatrixXd::Zero(static_cast<Index>(n), 1);
    s.C = MatrixXd::Zero(1, static_cast<Index>(n));
    if (n == 0) return s;
    const auto N = static_cast<Index>(n);
    for (Index i = 0; i + 1 < N; ++i) s.A(i, i + 1) = 1.0;
    for (Index j = 0; j < N; ++j) {
        // Last row holds -a_n ... -a_1; state j multiplies s^j.
        s.A(N - 1, j) = -a[n - static_cast<std::size_t>(j)];
        s.C(0, j) = b[n - static_cast<std::size_t>(j)] - b[0] * a[n - static_cast<std::size_t>(j)];
    }
    s.B(N - 1, 0) = 1.0;
    return s;
}

void LoopSpec::check() const {
    plant.check();
    controller.check();
    if (!plant.is_siso() || !controller.is_siso()) throw DomainError("plant and controller must be SISO");
    if (bounds.alpha > bounds.beta) throw DomainError("saturation bounds need alpha <= beta");
    for (const SignalSpec* s : {&ref, &dist, &bound_noise}) {
        if (!std::isfinite(s->mu) || !(s->sigma >= 0.0) || !std::isfinite(s->sigma)) {
            throw DomainError("signal mean must be finite and sigma nonnegative");
        }
        if (!(s->cutoff > 0.0) || !std::isfinite(s->cutoff)) throw DomainError("filter cutoff must be positive");
        if (s->filter_order < 1) throw DomainError("filter order must be positive");
    }
}

double butterworth_h2_scale(double cutoff, int order) {
    if (!(cutoff > 0.0) || order < 1) throw DomainError("Butterworth filter needs cutoff > 0 and order >= 1");
    StateSpace proto = butterworth_prototype(order);
    proto.D.setZero();
    return 1.0 / (h2_norm(proto) * std::sqrt(cutoff));
}

StateSpace butterworth_filter(double cutoff, int order) {
    if (!(cutoff > 0.0) || order < 1) throw DomainError("Butterworth filter needs cutoff > 0 and order >= 1");
    StateSpace s = butterworth_prototype(order);
    s.A *= cutoff;
    s.B *= cutoff;
    // Final correction on the realized system so the norm is 1 to rounding.
    s.B /= h2_norm(s);
    return s;
}

double spectral_abscissa(const MatrixXd& A) {
    if (A.rows() == 0) return -std::numeric_limits<double>::infinity();
    return Eigen::EigenSolver<MatrixXd>(A, false).eigenvalues().real().maxCoeff();
}

bool is_hurwitz(const MatrixXd& A) {
    if (A.rows() == 0) return true;
    if (!A.allFinite()) return false;
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    return spectral_abscissa(A) < -1e-12 * scale;
}

MatrixXd lyap_solve(const MatrixXd& A, const MatrixXd& Q) {
    const Index n = A.rows();
    if (A.cols() != n || Q.rows() != n || Q.cols() != n) throw DomainError("lyap_solve: dimension mismatch");
    if (n == 0) return MatrixXd(0, 0);
    if (!is_hurwitz(A)) {
        throw NotHurwitz("lyap_solve: A has an eigenvalue with real part " + std::to_string(spectral_abscissa(A)));
    }
    const Index nn = n * n;
    MatrixXd K = MatrixXd::Zero(nn, nn);
    // Column-major vec: vec(A S) = (I (x) A) vec S, vec(S A^T) = (A (x) I) vec S.
    for (Index blk = 0; blk < n; ++blk) K.block(blk * n, blk * n, n, n) += A;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (A(i, j) != 0.0) K.block(i * n, j * n, n, n).diagonal().array() += A(i, j);
        }
    }
    const Eigen::PartialPivLU<MatrixXd> lu(K);
    if (!(lu.rcond() > 1e-15)) throw SingularSystem("lyap_solve: Kronecker operator is numerically singular");
    const MatrixXd Qs = 0.5 * (Q + Q.transpose());
    const VectorXd rhs = -Eigen::Map<const VectorXd>(Qs.data(), nn);
    VectorXd x = lu.solve(rhs);
    // One step of iterative refinement.
    x += lu.solve(rhs - K * x);
    const Eigen::Map<MatrixXd> raw(x.data(), n, n);
    const MatrixXd S = 0.5 * (raw + raw.transpose());
    if (!S.allFinite()) throw SingularSystem("lyap_solve produced non-finite entries");
    return S;
}

double lyap_residual(const MatrixXd& A, const MatrixXd& Q, const MatrixXd& S) {
    return (A * S + S * A.transpose() + Q).norm();
}

double h2_norm(const StateSpace& sys) {
    sys.check();
    if (!sys.D.isZero(0.0)) throw NonStrictlyProper("h2_norm needs D = 0");
    if (sys.states() == 0) return 0.0;
    const MatrixXd S = lyap_solve(sys.A, sys.B * sys.B.transpose());
    return std::sqrt(std::max(0.0, (sys.C * S * sys.C.transpose()).trace()));
}

DcGain dc_gain(const StateSpace& sys) {
    sys.check();
    if (sys.states() == 0) return {sys.D(0, 0), false};
    const Eigen::FullPivLU<MatrixXd> lu(sys.A);
    const double scale = std::max(1.0, sys.A.cwiseAbs().maxCoeff());
    if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-13 * std::pow(scale, sys.states())) {
        return {std::numeric_limits<double>::infinity(), true};
    }
    const double v = sys.D(0, 0) - (sys.C * lu.solve(sys.B))(0, 0);
    return {v, false};
}

MarginReport stability_and_margin(const StateSpace& plant, const StateSpace& controller, int points_per_decade) {
    LoopSpec spec;
    spec.plant = plant;
    spec.controller = controller;
    spec.bounds = {-1.0, 1.0};
    MarginReport out;
    try {
        const ClosedLoop cl = closed_loop_matrices(spec, 1.0, 0.0);
        const LoopLayout& L = cl.layout;
        const MatrixXd core = cl.A.block(L.ctrl, L.ctrl, L.total - L.ctrl, L.total - L.ctrl);
        out.stable = is_hurwitz(core);
    } catch (const IllPosed&) {
        out.stable = false;
    }

    auto loop_gain = [&](double w) {
        const std::complex<double> s(0.0, w);
        return controller.response(s) * plant.response(s);
    };
    auto log_mag = [&](double w) { return std::log(std::abs(loop_gain(w))); };

    // Sweep range from the block dynamics, padded by several decades.
    double lo = 1.0, hi = 1.0;
    for (const StateSpace* blk : {&plant, &controller}) {
        if (blk->states() == 0) continue;
        const Eigen::VectorXcd eig = Eigen::EigenSolver<MatrixXd>(blk->A, false).eigenvalues();
        for (Index i = 0; i < eig.size(); ++i) {
            const double m = std::abs(eig[i]);
            if (m > 0.0) {
                lo = std::min(lo, m);
                hi = std::max(hi, m);
            }
        }
    }
    const double gain_scale =
        std::max(1.0, std::abs(controller.D(0, 0)) + std::abs(plant.D(0, 0)) +
                          (controller.states() ? controller.C.cwiseAbs().sum() * controller.B.cwiseAbs().sum() : 0.0) +
                          (plant.states() ? plant.C.cwiseAbs().sum() * plant.B.cwiseAbs().sum() : 0.0));
    const double w_lo = lo * 1e-6;
    const double w_hi = hi * 1e6 * gain_scale;
    const int points = std::max(10, static_cast<int>(std::ceil(std::log10(w_hi / w_lo) * points_per_decade)));

    double prev_w = w_lo;
    double prev_f = log_mag(w_lo);
    for (int i = 1; i <= points; ++i) {
        const double w = w_lo * std::pow(w_hi / w_lo, static_cast<double>(i) / points);
        const double f = log_mag(w);
        if (std::isfinite(f) && std::isfinite(prev_f) && ((prev_f > 0.0) != (f > 0.0))) {
            double a = prev_w, b = w, fa = prev_f;
            for (int it = 0; it < 100 && b / a - 1.0 > 1e-14; ++it) {
                const double mid = std::sqrt(a * b);
                const double fm = log_mag(mid);
                if ((fa > 0.0) == (fm > 0.0)) {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            const double wc = std::sqrt(a * b);
            double pm = 180.0 + std::arg(loop_gain(wc)) * 180.0 / std::numbers::pi;
            if (pm > 180.0) pm -= 360.0;
            if (!out.phase_margin_deg || pm < *out.phase_margin_deg) {
                out.phase_margin_deg = pm;
                out.crossover = wc;
            }
        }
        prev_w = w;
        prev_f = f;
    }
    return out;
}

MatrixXd ClosedLoop::covariance() const { return lyap_solve(A, B * B.transpose()); }

VectorXd ClosedLoop::mean_state(const Eigen::Vector4d& q) const {
    if (!is_hurwitz(A)) throw NotHurwitz("closed loop is not Hurwitz; no steady mean");
    return A.partialPivLu().solve(-(G * q));
}

ClosedLoop closed_loop_matrices(const LoopSpec& spec, double n1, double n2) {
    spec.check();
    const StateSpace rf = butterworth_filter(spec.ref.cutoff, spec.ref.filter_order);
    const StateSpace bf = butterworth_filter(spec.bound_noise.cutoff, spec.bound_noise.filter_order);
    const StateSpace df = butterworth_filter(spec.dist.cutoff, spec.dist.filter_order);
    const StateSpace& C = spec.controller;
    const StateSpace& P = spec.plant;

    ClosedLoop cl;
    cl.n1 = n1;
    cl.n2 = n2;
    LoopLayout& L = cl.layout;
    L.ref = 0;
    L.bound = L.ref + rf.states();
    L.dist = L.bound + bf.states();
    L.ctrl = L.dist + df.states();
    L.plant = L.ctrl + C.states();
    L.total = L.plant + P.states();
    const Index n = L.total;

    const double dc = C.D(0, 0), dp = P.D(0, 0);
    const double den = 1.0 + dc * dp * n1;
    if (std::abs(den) < 1e-12) throw IllPosed("loop is ill-posed: 1 + D_C D_P N1 = 0");

    // Affine rows over the state (x) and constants q = (mu_r, mu_2, mu_d, m).
    struct Row {
        RowVectorXd x;
        Eigen::RowVector4d q;
    };
    auto zero = [&] { return Row{RowVectorXd::Zero(n), Eigen::RowVector4d::Zero()}; };
    auto add = [](Row a, const Row& b, double k) {
        a.x += k * b.x;
        a.q += k * b.q;
        return a;
    };

    Row r = zero(), u2 = zero(), d = zero(), xc = zero(), yp = zero();
    r.x.segment(L.ref, rf.states()) = spec.ref.sigma * rf.C.row(0);
    r.q(0) = 1.0;
    u2.x.segment(L.bound, bf.states()) = spec.bound_noise.sigma * bf.C.row(0);
    u2.q(1) = 1.0;
    d.x.segment(L.dist, df.states()) = spec.dist.sigma * df.C.row(0);
    d.q(2) = 1.0;
    Row m = zero();
    m.q(3) = 1.0;
    if (C.states()) xc.x.segment(L.ctrl, C.states()) = C.C.row(0);  // C_C x_C
    if (P.states()) yp.x.segment(L.plant, P.states()) = P.C.row(0);  // C_P x_P

    // e = [r - C_P x_P - D_P N1 C_C x_C - D_P (N2 u2 + m + d)] / den
    Row e = add(r, yp, -1.0);
    e = add(e, xc, -dp * n1);
    e = add(e, u2, -dp * n2);
    e = add(e, m, -dp);
    e = add(e, d, -dp);
    e.x /= den;
    e.q /= den;
    const Row u1 = add(xc, e, dc);
    Row v = add(add(zero(), u1, n1), u2, n2);
    v = add(v, m, 1.0);
    const Row z = add(v, d, 1.0);
    const Row y = add(yp, z, dp);

    cl.A = MatrixXd::Zero(n, n);
    cl.B = MatrixXd::Zero(n, 3);
    cl.G = MatrixXd::Zero(n, 4);
    cl.A.block(L.ref, L.ref, rf.states(), rf.states()) = rf.A;
    cl.A.block(L.bound, L.bound, bf.states(), bf.states()) = bf.A;
    cl.A.block(L.dist, L.dist, df.states(), df.states()) = df.A;
    cl.B.block(L.ref, 0, rf.states(), 1) = rf.B;
    cl.B.block(L.bound, 1, bf.states(), 1) = bf.B;
    cl.B.block(L.dist, 2, df.states(), 1) = df.B;
    if (C.states()) {
        cl.A.block(L.ctrl, L.ctrl, C.states(), C.states()) += C.A;
        cl.A.middleRows(L.ctrl, C.states()) += C.B.col(0) * e.x;
        cl.G.middleRows(L.ctrl, C.states()) += C.B.col(0) * e.q;
    }
    if (P.states()) {
        cl.A.block(L.plant, L.plant, P.states(), P.states()) += P.A;
        cl.A.middleRows(L.plant, P.states()) += P.B.col(0) * z.x;
        cl.G.middleRows(L.plant, P.states()) += P.B.col(0) * z.q;
    }
    cl.C1 = u1.x;
    cl.H1 = u1.q;
    cl.C2 = u2.x;
    cl.H2 = u2.q;
    cl.Ce = e.x;
    cl.He = e.q;
    cl.Cy = y.x;
    cl.Hy = y.q;
    cl.Cv = v.x;
    cl.Hv = v.q;
    return cl;
}

} // namespace qlc
