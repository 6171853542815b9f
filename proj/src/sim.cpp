#include "qlc/sim.hpp"

#include "qlc/error.hpp"
#include "qlc/parallel.hpp"
#include "qlc/rng.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <string>

namespace qlc {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kDivergence = 1e12;

// Exact discretization of xdot = A x + B w with unit white noise w:
// x+ = Ad x + L xi, L L^T = int_0^dt e^{A s} B B^T e^{A^T s} ds (Van Loan).
struct NoisyBlock {
    MatrixXd Ad;
    MatrixXd L;
};

NoisyBlock discretize_noisy(const MatrixXd& A, const MatrixXd& B, double dt) {
    const Index n = A.rows();
    MatrixXd M = MatrixXd::Zero(2 * n, 2 * n);
    M.topLeftCorner(n, n) = -A * dt;
    M.topRightCorner(n, n) = B * B.transpose() * dt;
    M.bottomRightCorner(n, n) = A.transpose() * dt;
    const MatrixXd E = M.exp();
    NoisyBlock out;
    out.Ad = E.bottomRightCorner(n, n).transpose();
    MatrixXd Qd = out.Ad * E.topRightCorner(n, n);
    Qd = (0.5 * (Qd + Qd.transpose())).eval();
    const Eigen::SelfAdjointEigenSolver<MatrixXd> es(Qd);
    out.L = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    return out;
}

// Zero-order-hold discretization of xdot = A x + B u.
struct HeldBlock {
    MatrixXd Ad;
    VectorXd Bd;
    Eigen::RowVectorXd C;
    double D = 0.0;
};

HeldBlock discretize_held(const StateSpace& s, double dt) {
    HeldBlock out;
    const Index n = s.states();
    out.C = n ? Eigen::RowVectorXd(s.C.row(0)) : Eigen::RowVectorXd(0);
    out.D = s.D(0, 0);
    if (n == 0) return out;
    MatrixXd M = MatrixXd::Zero(n + 1, n + 1);
    M.topLeftCorner(n, n) = s.A * dt;
    M.topRightCorner(n, 1) = s.B * dt;
    const MatrixXd E = M.exp();
    out.Ad = E.topLeftCorner(n, n);
    out.Bd = E.topRightCorner(n, 1);
    return out;
}

class Signal {
public:
    Signal(const SignalSpec& spec, double dt, bool stationary, std::mt19937_64& eng) : spec_(spec) {
        if (spec.sigma == 0.0) return;
        const StateSpace f = butterworth_filter(spec.cutoff, spec.filter_order);
        block_ = discretize_noisy(f.A, f.B, dt);
        C_ = f.C.row(0);
        x_ = VectorXd::Zero(f.states());
        xi_ = VectorXd::Zero(f.states());
        if (stationary) {
            const MatrixXd S = lyap_solve(f.A, f.B * f.B.transpose());
            const Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
            const MatrixXd root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
            for (Index i = 0; i < xi_.size(); ++i) xi_[i] = normal_(eng);
            x_ = root * xi_;
        }
    }
    void set_state(const VectorXd& x) {
        if (spec_.sigma != 0.0) x_ = x;
    }
    [[nodiscard]] double value() const { return spec_.sigma == 0.0 ? spec_.mu : spec_.mu + spec_.sigma * C_.dot(x_); }
    void advance(std::mt19937_64& eng) {
        if (spec_.sigma == 0.0) return;
        for (Index i = 0; i < xi_.size(); ++i) xi_[i] = normal_(eng);
        x_ = block_.Ad * x_ + block_.L * xi_;
    }

private:
    SignalSpec spec_;
    NoisyBlock block_;
    Eigen::RowVectorXd C_;
    VectorXd x_, xi_;
    std::normal_distribution<double> normal_;
};

class Accumulator {
public:
    Accumulator(std::size_t total, int batches) : batch_size_(std::max<std::size_t>(1, total / std::max(1, batches))) {}
    void add(double x) {
        sum_ += x;
        sum2_ += x * x;
        ++count_;
        bsum_ += x;
        bsum2_ += x * x;
        if (++bcount_ == batch_size_) {
            means_.push_back(bsum_ / bcount_);
            seconds_.push_back(bsum2_ / bcount_);
            bsum_ = bsum2_ = 0.0;
            bcount_ = 0;
        }
    }
    [[nodiscard]] Moments moments() const {
        Moments m;
        if (count_ == 0) return m;
        m.mean = sum_ / count_;
        m.second_moment = sum2_ / count_;
        m.std = std::sqrt(std::max(0.0, m.second_moment - m.mean * m.mean));
        m.mean_stderr = batch_stderr(means_);
        m.second_moment_stderr = batch_stderr(seconds_);
        std::vector<double> stds(means_.size());
        for (std::size_t i = 0; i < means_.size(); ++i) {
            stds[i] = std::sqrt(std::max(0.0, seconds_[i] - means_[i] * means_[i]));
        }
        m.std_stderr = batch_stderr(stds);
        return m;
    }
    static double batch_stderr(const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::sqrt(ss / (static_cast<double>(v.size()) - 1.0) / static_cast<double>(v.size()));
    }

private:
    std::size_t batch_size_;
    double sum_ = 0.0, sum2_ = 0.0;
    std::size_t count_ = 0;
    double bsum_ = 0.0, bsum2_ = 0.0;
    std::size_t bcount_ = 0;
    std::vector<double> means_, seconds_;
};

struct Channel {
    bool nonlinear = true;
    double n1 = 1.0, n2 = 0.0, m = 0.0;
    VectorXd xc, xp;
    Accumulator e, u1, v, y, sat;
    std::vector<TraceSample> trace;
    Channel(std::size_t total, int batches) : e(total, batches), u1(total, batches), v(total, batches), y(total, batches), sat(total, batches) {}
};

std::size_t steps_for(double span, double dt) { return static_cast<std::size_t>(std::llround(span / dt)); }

// joint: optional full closed-loop state (filters, controller, plant) to start from.
void run_loop(const LoopSpec& spec, const SimConfig& cfg, std::vector<Channel*>& channels,
              const VectorXd& joint = VectorXd()) {
    const HeldBlock ctrl = discretize_held(spec.controller, cfg.dt);
    const HeldBlock plant = discretize_held(spec.plant, cfg.dt);
    auto eng = make_stream(cfg.seed, 0);
    Signal ref(spec.ref, cfg.dt, cfg.stationary_start, eng);
    Signal bound(spec.bound_noise, cfg.dt, cfg.stationary_start, eng);
    Signal dist(spec.dist, cfg.dt, cfg.stationary_start, eng);

    const Index nc = spec.controller.states(), np = spec.plant.states();
    VectorXd loop_start = cfg.initial_loop_state;
    if (joint.size() > 0) {
        const Index nf = spec.ref.filter_order;
        const Index nb = spec.bound_noise.filter_order;
        const Index nd = spec.dist.filter_order;
        ref.set_state(joint.segment(0, nf));
        bound.set_state(joint.segment(nf, nb));
        dist.set_state(joint.segment(nf + nb, nd));
        loop_start = joint.tail(nc + np);
    }
    for (Channel* ch : channels) {
        ch->xc = VectorXd::Zero(nc);
        ch->xp = VectorXd::Zero(np);
        if (loop_start.size() == nc + np) {
            ch->xc = loop_start.head(nc);
            ch->xp = loop_start.tail(np);
        }
    }
    const std::size_t total = steps_for(cfg.duration, cfg.dt);
    const std::size_t warm = steps_for(cfg.warmup, cfg.dt);
    const SatBounds& b = spec.bounds;
    const double thr = b.zero_threshold();
    const double dcp = ctrl.D * plant.D;

    for (std::size_t k = 0; k < total; ++k) {
        const double r = ref.value(), u2 = bound.value(), d = dist.value();
        const bool record = k >= warm;
        for (Channel* ch : channels) {
            const double cx = nc ? ctrl.C.dot(ch->xc) : 0.0;
            const double py = np ? plant.C.dot(ch->xp) : 0.0;
            auto actuator = [&](double u1) {
                return ch->nonlinear ? sat_eval(u1, u2, b) : ch->n1 * u1 + ch->n2 * u2 + ch->m;
            };
            double e, u1, v, y;
            if (dcp == 0.0) {
                // At least one feedthrough is zero: evaluate in causal order.
                if (plant.D == 0.0) {
                    y = py;
                    e = r - y;
                    u1 = cx + ctrl.D * e;
                    v = actuator(u1);
                } else {
                    u1 = cx;  // ctrl.D == 0
                    v = actuator(u1);
                    y = py + plant.D * (v + d);
                    e = r - y;
                }
            } else if (!ch->nonlinear) {
                e = (r - py - plant.D * ch->n1 * cx - plant.D * (ch->n2 * u2 + ch->m + d)) / (1.0 + dcp * ch->n1);
                u1 = cx + ctrl.D * e;
                v = actuator(u1);
                y = py + plant.D * (v + d);
            } else {
                // Algebraic loop through the saturation: fixed-point sweep on v.
                v = sat_eval(cx + ctrl.D * (r - py - plant.D * d), u2, b);
                bool settled = false;
                for (int it = 0; it < 100 && !settled; ++it) {
                    y = py + plant.D * (v + d);
                    e = r - y;
                    u1 = cx + ctrl.D * e;
                    const double vn = sat_eval(u1, u2, b);
                    settled = std::abs(vn - v) <= 1e-13 * (1.0 + std::abs(v));
                    v = vn;
                }
                if (!settled) throw Diverged("algebraic loop through the saturation does not contract");
                y = py + plant.D * (v + d);
                e = r - y;
                u1 = cx + ctrl.D * e;
            }
            if (record) {
                ch->e.add(e);
                ch->u1.add(u1);
                ch->v.add(v);
                ch->y.add(y);
                ch->sat.add(u2 >= thr && u1 > b.alpha - u2 && u1 < b.beta + u2 ? 1.0 : 0.0);
                if (cfg.trace_stride && (k - warm) % cfg.trace_stride == 0) {
                    ch->trace.push_back({k * cfg.dt, r, d, u2, e, u1, v, y, b.alpha - u2, b.beta + u2});
                }
            }
            if (nc) ch->xc = ctrl.Ad * ch->xc + ctrl.Bd * e;
            if (np) ch->xp = plant.Ad * ch->xp + plant.Bd * (v + d);
            if ((k & 1023) == 0) {
                const double mag = std::max(nc ? ch->xc.cwiseAbs().maxCoeff() : 0.0,
                                            np ? ch->xp.cwiseAbs().maxCoeff() : 0.0);
                if (!(mag < kDivergence)) {
                    throw Diverged("state magnitude exceeded 1e12 at t=" + std::to_string(k * cfg.dt));
                }
            }
        }
        ref.advance(eng);
        bound.advance(eng);
        dist.advance(eng);
    }
}

SimResult collect(Channel& ch, double dt) {
    SimResult r;
    r.e = ch.e.moments();
    r.u1 = ch.u1.moments();
    r.v = ch.v.moments();
    r.y = ch.y.moments();
    const Moments s = ch.sat.moments();
    r.non_saturation_frequency = s.mean;
    r.non_saturation_stderr = s.mean_stderr;
    r.dt = dt;
    r.trace = std::move(ch.trace);
    return r;
}

std::size_t recorded(const SimConfig& cfg) { return steps_for(cfg.duration, cfg.dt) - steps_for(cfg.warmup, cfg.dt); }

double fastest_rate(const LoopSpec& spec, double n1, double n2) {
    double fastest = std::max({spec.ref.cutoff, spec.dist.cutoff, spec.bound_noise.cutoff});
    try {
        const ClosedLoop cl = closed_loop_matrices(spec, n1, n2);
        const Eigen::VectorXcd eig = Eigen::EigenSolver<MatrixXd>(cl.A, false).eigenvalues();
        for (Index i = 0; i < eig.size(); ++i) fastest = std::max(fastest, std::abs(eig[i]));
    } catch (const Error&) {
    }
    for (const StateSpace* s : {&spec.plant, &spec.controller}) {
        if (s->states() == 0) continue;
        const Eigen::VectorXcd eig = Eigen::EigenSolver<MatrixXd>(s->A, false).eigenvalues();
        for (Index i = 0; i < eig.size(); ++i) fastest = std::max(fastest, std::abs(eig[i]));
    }
    return fastest;
}

double slowest_rate(const LoopSpec& spec, double n1, double n2) {
    double slowest = std::numeric_limits<double>::infinity();
    try {
        const ClosedLoop cl = closed_loop_matrices(spec, n1, n2);
        const Eigen::VectorXcd eig = Eigen::EigenSolver<MatrixXd>(cl.A, false).eigenvalues();
        for (Index i = 0; i < eig.size(); ++i) {
            const double re = std::abs(eig[i].real());
            if (re > 0.0) slowest = std::min(slowest, re);
        }
    } catch (const Error&) {
    }
    if (!std::isfinite(slowest)) slowest = 1.0;
    return slowest;
}

// Draw the full quasilinear loop state from its stationary law, or start at
// the mean when that law is unavailable.
VectorXd quasilinear_start(const LoopSpec& spec, double n1, double n2, double m, const SimConfig& cfg) {
    try {
        const ClosedLoop cl = closed_loop_matrices(spec, n1, n2);
        if (!is_hurwitz(cl.A)) return VectorXd();
        VectorXd x = cl.mean_state(cl.constants(spec, m));
        if (!cfg.stationary_start) return x;
        const Eigen::SelfAdjointEigenSolver<MatrixXd> es(cl.covariance());
        const MatrixXd root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        auto eng = make_stream(cfg.seed, 1);
        std::normal_distribution<double> normal;
        VectorXd xi(x.size());
        for (Index i = 0; i < xi.size(); ++i) xi[i] = normal(eng);
        x += root * xi;
        return x;
    } catch (const Error&) {
        return VectorXd();
    }
}

} // namespace

SimConfig resolve_sim_config(const LoopSpec& spec, const SimConfig& config, double n1, double n2) {
    spec.check();
    SimConfig c = config;
    const double max_cutoff = std::max({spec.ref.cutoff, spec.dist.cutoff, spec.bound_noise.cutoff});
    if (c.dt <= 0.0) c.dt = 1.0 / (20.0 * fastest_rate(spec, n1, n2));
    if (c.dt > 0.1 / max_cutoff * (1.0 + 1e-12)) {
        throw ConfigError("dt=" + std::to_string(c.dt) + " exceeds 0.1 / fastest filter cutoff");
    }
    if (c.duration <= 0.0) {
        c.duration = 400.0 / slowest_rate(spec, n1, n2);
        c.duration = std::min(c.duration, c.dt * static_cast<double>(c.max_steps));
    }
    if (steps_for(c.duration, c.dt) > c.max_steps) {
        throw ConfigError("simulation would need more than max_steps=" + std::to_string(c.max_steps) + " steps");
    }
    if (c.warmup < 0.0) c.warmup = 0.1 * c.duration;
    if (!(c.warmup < c.duration)) throw ConfigError("warmup must be shorter than the duration");
    if (c.batches < 2) throw ConfigError("at least two batches are needed for standard errors");
    if (recorded(c) < static_cast<std::size_t>(c.batches)) throw ConfigError("too few recorded steps for the batches");
    return c;
}

std::vector<double> colored_signal(const SignalSpec& spec, const SimConfig& config) {
    if (!(config.dt > 0.0) || !(config.duration > 0.0) || config.warmup < 0.0 || !(config.warmup < config.duration)) {
        throw ConfigError("colored_signal needs dt > 0 and 0 <= warmup < duration");
    }
    if (config.dt > 0.1 / spec.cutoff * (1.0 + 1e-12)) throw ConfigError("dt exceeds 0.1 / cutoff");
    auto eng = make_stream(config.seed, 0);
    Signal sig(spec, config.dt, config.stationary_start, eng);
    const std::size_t total = steps_for(config.duration, config.dt);
    const std::size_t warm = steps_for(config.warmup, config.dt);
    std::vector<double> out;
    out.reserve(total - warm);
    for (std::size_t k = 0; k < total; ++k) {
        if (k >= warm) out.push_back(sig.value());
        sig.advance(eng);
    }
    return out;
}

SimResult simulate_nonlinear(const LoopSpec& spec, const SimConfig& config) {
    const SimConfig cfg = resolve_sim_config(spec, config);
    Channel ch(recorded(cfg), cfg.batches);
    std::vector<Channel*> chans{&ch};
    run_loop(spec, cfg, chans);
    return collect(ch, cfg.dt);
}

SimResult simulate_quasilinear(const LoopSpec& spec, double n1, double n2, double m, const SimConfig& config) {
    const SimConfig cfg = resolve_sim_config(spec, config, n1, n2);
    Channel ch(recorded(cfg), cfg.batches);
    ch.nonlinear = false;
    ch.n1 = n1;
    ch.n2 = n2;
    ch.m = m;
    std::vector<Channel*> chans{&ch};
    const VectorXd joint = cfg.initial_loop_state.size() ? VectorXd() : quasilinear_start(spec, n1, n2, m, cfg);
    run_loop(spec, cfg, chans, joint);
    return collect(ch, cfg.dt);
}

SimResult simulate_quasilinear(const LoopSpec& spec, const LoopSolution& s, const SimConfig& config) {
    return simulate_quasilinear(spec, s.gains.n1, s.gains.n2, s.m_injection, config);
}

SimPair simulate_pair(const LoopSpec& spec, const LoopSolution& s, const SimConfig& config) {
    const SimConfig cfg = resolve_sim_config(spec, config, s.gains.n1, s.gains.n2);
    const VectorXd joint = cfg.initial_loop_state.size()
                               ? VectorXd()
                               : quasilinear_start(spec, s.gains.n1, s.gains.n2, s.m_injection, cfg);
    Channel nl(recorded(cfg), cfg.batches), ql(recorded(cfg), cfg.batches);
    ql.nonlinear = false;
    ql.n1 = s.gains.n1;
    ql.n2 = s.gains.n2;
    ql.m = s.m_injection;
    std::vector<Channel*> chans{&nl, &ql};
    run_loop(spec, cfg, chans, joint);
    return {collect(nl, cfg.dt), collect(ql, cfg.dt)};
}

AccuracyMetrics accuracy_metrics(const SimResult& nl, const SimResult& ql) {
    const double e_nl = std::sqrt(nl.e.second_moment), v_nl = std::sqrt(nl.v.second_moment);
    if (!(e_nl >= 1e-12) || !(v_nl >= 1e-12)) {
        throw DegenerateMetric("nonlinear RMS error or output is below 1e-12");
    }
    AccuracyMetrics out;
    out.error_metric = std::abs(e_nl - std::sqrt(ql.e.second_moment)) / e_nl;
    out.output_metric = std::abs(v_nl - std::sqrt(ql.v.second_moment)) / v_nl;
    return out;
}

LinearMoments simulate_linear_moments(const ClosedLoop& loop, const Eigen::Vector4d& q, const SimConfig& cfg) {
    if (!(cfg.dt > 0.0) || !(cfg.duration > cfg.warmup) || cfg.warmup < 0.0 || cfg.batches < 2) {
        throw ConfigError("simulate_linear_moments needs explicit dt, duration > warmup >= 0 and batches >= 2");
    }
    const Index n = loop.A.rows();
    const NoisyBlock blk = discretize_noisy(loop.A, loop.B, cfg.dt);
    // Constant drive over one step: int_0^dt e^{A s} ds G q.
    MatrixXd M = MatrixXd::Zero(n + 1, n + 1);
    M.topLeftCorner(n, n) = loop.A * cfg.dt;
    M.topRightCorner(n, 1) = loop.G * q * cfg.dt;
    const VectorXd drive = M.exp().topRightCorner(n, 1);

    auto eng = make_stream(cfg.seed, 0);
    std::normal_distribution<double> normal;
    const std::size_t total = steps_for(cfg.duration, cfg.dt);
    const std::size_t warm = steps_for(cfg.warmup, cfg.dt);
    const std::size_t batch = std::max<std::size_t>(1, (total - warm) / cfg.batches);
    VectorXd x = VectorXd::Zero(n), xi(n);
    VectorXd sum = VectorXd::Zero(n);
    MatrixXd sum2 = MatrixXd::Zero(n, n), bsum2 = MatrixXd::Zero(n, n);
    std::vector<MatrixXd> batch_means;
    std::size_t bcount = 0, count = 0;
    for (std::size_t k = 0; k < total; ++k) {
        if (k >= warm) {
            sum += x;
            bsum2.noalias() += x * x.transpose();
            ++count;
            if (++bcount == batch) {
                batch_means.push_back(bsum2 / static_cast<double>(bcount));
                sum2 += bsum2;
                bsum2.setZero();
                bcount = 0;
            }
        }
        for (Index i = 0; i < n; ++i) xi[i] = normal(eng);
        x = blk.Ad * x + blk.L * xi + drive;
    }
    sum2 += bsum2;
    LinearMoments out;
    out.samples = count;
    out.mean = sum / static_cast<double>(count);
    out.second_moment = sum2 / static_cast<double>(count);
    const auto nb = static_cast<double>(batch_means.size());
    MatrixXd mean_b = MatrixXd::Zero(n, n), var_b = MatrixXd::Zero(n, n);
    for (const auto& bm : batch_means) mean_b += bm;
    mean_b /= nb;
    for (const auto& bm : batch_means) var_b += (bm - mean_b).cwiseAbs2();
    out.second_moment_stderr = (var_b / ((nb - 1.0) * nb)).cwiseSqrt();
    return out;
}

void write_trace_csv(std::ostream& os, const SimResult& result) {
    os.precision(17);
    os << "t,r,d,u2,e,u1,v,y,lower,upper\n";
    for (const TraceSample& s : result.trace) {
        os << s.t << ',' << s.r << ',' << s.d << ',' << s.u2 << ',' << s.e << ',' << s.u1 << ',' << s.v << ','
           << s.y << ',' << s.lower << ',' << s.upper << '\n';
    }
}

void write_trace_csv(std::ostream& os, const SimPair& pair) {
    os.precision(17);
    os << "t,r,d,u2,e,u1,v,y,lower,upper,e_hat,u1_hat,v_hat,y_hat\n";
    const auto& a = pair.nonlinear.trace;
    const auto& b = pair.quasilinear.trace;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
        const TraceSample& s = a[i];
        os << s.t << ',' << s.r << ',' << s.d << ',' << s.u2 << ',' << s.e << ',' << s.u1 << ',' << s.v << ','
           << s.y << ',' << s.lower << ',' << s.upper << ',' << b[i].e << ',' << b[i].u1 << ',' << b[i].v << ','
           << b[i].y << '\n';
    }
}

// ---- study -----------------------------------------------------------------

double StudyConfig::cutoff_rad() const { return cutoff_in_hz ? 2.0 * std::numbers::pi * cutoff : cutoff; }

double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const double pos = q * (static_cast<double>(v.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(v.size() - 1, lo + 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

StudySystem sample_study_system(const StudyConfig& c, int index) {
    auto eng = make_stream(c.seed, static_cast<std::uint64_t>(index));
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng); };
    StudySystem s;
    s.index = index;
    s.second_order = index % 2 == 1;
    s.k = uni(c.k_min, c.k_max);
    if (s.second_order) {
        s.wn = uni(c.wn_min, c.wn_max);
        s.xi = uni(c.xi_min, c.xi_max);
    } else {
        s.t = uni(c.t_min, c.t_max);
    }
    s.alpha = uni(c.alpha_min, c.alpha_max);
    s.beta = uni(c.beta_min, c.beta_max);
    const StudyConfig& cc = c;
    const LoopSpec spec = study_loop_spec(cc, s, 0.0);
    const MarginReport mr = stability_and_margin(spec.plant, spec.controller);
    s.stable = mr.stable;
    s.phase_margin_deg = mr.phase_margin_deg;
    bool bad_margin = false;
    if (mr.phase_margin_deg) {
        bad_margin = c.reject_below_threshold ? *mr.phase_margin_deg < c.pm_threshold_deg
                                              : *mr.phase_margin_deg > c.pm_threshold_deg;
    }
    s.rejected = !s.stable || bad_margin;
    return s;
}

LoopSpec study_loop_spec(const StudyConfig& c, const StudySystem& s, double sigma2) {
    LoopSpec spec;
    if (s.second_order) {
        spec.plant = tf2ss({s.wn * s.wn}, {1.0, 2.0 * s.xi * s.wn, s.wn * s.wn});
    } else {
        spec.plant = tf2ss({1.0}, {s.t, 1.0});
    }
    spec.controller = static_gain(s.k);
    spec.bounds = {s.alpha, s.beta};
    const double w = c.cutoff_rad();
    spec.ref = {0.0, 1.0, w, 3};
    spec.dist = {0.0, 1.0, w, 3};
    spec.bound_noise = {0.0, sigma2, w, 3};
    return spec;
}

MonteCarloReport monte_carlo_study(const StudyConfig& c) {
    if (c.accepted_target < 1 || c.max_sampled < 1 || c.sigma2_levels.empty()) {
        throw ConfigError("study needs positive counts and at least one sigma2 level");
    }
    MonteCarloReport rep;
    std::vector<StudySystem> accepted;
    for (int i = 0; i < c.max_sampled && static_cast<int>(accepted.size()) < c.accepted_target; ++i) {
        StudySystem s = sample_study_system(c, i);
        ++rep.n_sampled;
        if (s.rejected) {
            ++rep.n_rejected;
        } else {
            accepted.push_back(s);
        }
        rep.systems.push_back(s);
    }

    const std::size_t levels = c.sigma2_levels.size();
    rep.records.resize(accepted.size() * levels);
    parallel_for(rep.records.size(), c.threads, [&](std::size_t job) {
        const StudySystem& sys = accepted[job / levels];
        const std::size_t level = job % levels;
        StudyRecord& rec = rep.records[job];
        rec.system = sys.index;
        rec.sigma2 = c.sigma2_levels[level];
        try {
            const LoopSpec spec = study_loop_spec(c, sys, rec.sigma2);
            const LoopSolution sol = fixed_point_solve(spec);
            SimConfig sc = c.sim;
            sc.seed = splitmix64_mix(c.seed, static_cast<std::uint64_t>(sys.index), level);
            SimConfig resolved = resolve_sim_config(spec, sc, sol.gains.n1, sol.gains.n2);
            if (c.max_duration > 0.0 && resolved.duration > c.max_duration) {
                sc.dt = resolved.dt;
                sc.duration = c.max_duration;
                sc.warmup = resolved.warmup > 0.0 ? std::min(resolved.warmup, 0.1 * c.max_duration) : sc.warmup;
            }
            const SimPair pair = simulate_pair(spec, sol, sc);
            const AccuracyMetrics am = accuracy_metrics(pair.nonlinear, pair.quasilinear);
            rec.error_metric = am.error_metric;
            rec.output_metric = am.output_metric;
            rec.n1 = sol.gains.n1;
            rec.non_saturation_frequency = pair.nonlinear.non_saturation_frequency;
            rec.ok = std::isfinite(am.error_metric) && std::isfinite(am.output_metric);
            if (!rec.ok) rec.failure = "non-finite metric";
        } catch (const Error& e) {
            rec.ok = false;
            rec.failure = std::string(to_string(e.kind())) + ": " + e.what();
        }
    });

    for (double s2 : c.sigma2_levels) {
        StudyGroup g;
        g.sigma2 = s2;
        std::vector<double> em, om;
        for (const StudyRecord& r : rep.records) {
            if (r.sigma2 != s2) continue;
            if (r.ok) {
                em.push_back(r.error_metric);
                om.push_back(r.output_metric);
            } else {
                ++g.failures;
            }
        }
        g.count = static_cast<int>(em.size());
        g.error_median = quantile(em, 0.5);
        g.error_q25 = quantile(em, 0.25);
        g.error_q75 = quantile(em, 0.75);
        g.output_median = quantile(om, 0.5);
        g.output_q25 = quantile(om, 0.25);
        g.output_q75 = quantile(om, 0.75);
        rep.groups.push_back(g);
    }
    return rep;
}

} // namespace qlc
