// Acceptance checks. One PASS/FAIL line per criterion; exit status counts only
// failures not listed with --expect-fail.
#include "qlc/design.hpp"
#include "qlc/error.hpp"
#include "qlc/rng.hpp"
#include "qlc/sim.hpp"
#include "qlc/specfun.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace qlc;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

double uni(std::mt19937_64& eng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng); }

BivariateStats random_stats(std::mt19937_64& eng) {
    BivariateStats s;
    s.sigma1 = uni(eng, 0.3, 3.0);
    s.sigma2 = s.sigma1 * uni(eng, 0.02, 0.98);
    s.rho = uni(eng, -0.9, 0.9);
    s.mu1 = uni(eng, -3.0, 3.0);
    s.mu2 = uni(eng, -3.0, 3.0);
    return s;
}

SatBounds random_bounds(std::mt19937_64& eng) { return {uni(eng, -5.0, 0.0), uni(eng, 0.0, 5.0)}; }

LoopSpec integrator_spec(double k) {
    LoopSpec s;
    s.plant = tf2ss({10.0}, {1.0, 10.0, 0.0});
    s.controller = static_gain(k);
    s.bounds = {-2.0, 1.0};
    s.ref = {0.0, 1.0, 48.0, 3};
    s.dist = {0.0, 1.0, 48.0, 3};
    s.bound_noise = {0.0, 1.0, 48.0, 3};
    return s;
}

// 1. raw quadrature, reduced quadrature and Monte Carlo agree.
void oracle_triangle(Outcome& o) {
    auto eng = make_stream(101, 0);
    double worst_quad = 0.0, worst_z = 0.0;
    for (int i = 0; i < 50; ++i) {
        const BivariateStats s = random_stats(eng);
        const SatBounds b = random_bounds(eng);
        const QuasilinearGains red = gains_reduced_quadrature(s, b, 1e-11);
        const QuasilinearGains raw = gains_raw_quadrature(s, b, 1e-11);
        const LinearizationResult mc = gains_monte_carlo(s, b, 1000000, 7000 + i);
        const double dq = std::max({std::abs(red.n1 - raw.n1), std::abs(red.n2 - raw.n2), std::abs(red.m - raw.m)});
        worst_quad = std::max(worst_quad, dq);
        const double z = std::max({std::abs(mc.gains[0] - red.n1) / mc.stderr_gains[0],
                                   std::abs(mc.gains[1] - red.n2) / std::max(mc.stderr_gains[1], 1e-300),
                                   std::abs(mc.bias - red.m) / mc.stderr_bias});
        // A gain that is exactly constant over the samples has zero stderr.
        worst_z = std::max(worst_z, std::isfinite(z) ? z : 0.0);
        o.require(dq <= 1e-7, "set " + std::to_string(i) + " quadratures differ by " + std::to_string(dq));
        o.require(std::isfinite(z) ? z <= 4.0 : dq <= 1e-7, "set " + std::to_string(i) + " Monte Carlo z=" + std::to_string(z));
    }
    o.detail << "50 sets; max |raw-reduced| = " << worst_quad << ", max MC z = " << worst_z;
}

// 2. series against reduced quadrature inside the admissible correlation region.
void series_vs_quadrature(Outcome& o) {
    auto eng = make_stream(202, 0);
    specfun::SeriesOptions opts;
    opts.tol_percent = 1e-4;  // relative 1e-6
    opts.max_terms = 60;
    int worst_terms = 0;
    double worst_diff = 0.0;
    for (int i = 0; i < 20; ++i) {
        // The admissible region is |K1| < 1, |K3| < 1; keep a margin of 0.1
        // from its edge, where the partial sums decay like K^(2n).
        BivariateStats s;
        SatBounds b;
        SeriesGains coef;
        do {
            s.sigma1 = uni(eng, 0.5, 2.0);
            s.sigma2 = s.sigma1 * uni(eng, 0.1, 0.9);
            const specfun::RhoInterval iv = specfun::rho_admissible(s.sigma1, s.sigma2);
            s.rho = uni(eng, 0.8 * iv.lower, 0.8 * iv.upper);
            s.mu1 = uni(eng, -2.0, 2.0);
            s.mu2 = uni(eng, -1.0, 1.0);
            b = {uni(eng, -4.0, -0.5), uni(eng, 0.5, 4.0)};
            coef = series_coefficients(s, b);
        } while (std::max(std::abs(coef.k1), std::abs(coef.k3)) > 0.9);
        const QuasilinearGains ref = gains_reduced_quadrature(s, b, 1e-12);
        const std::string tag = "set " + std::to_string(i);
        try {
            const SeriesGains sg = gains_series(s, b, opts);
            const double d = std::max({std::abs(sg.gains.n1 - ref.n1), std::abs(sg.gains.n2 - ref.n2),
                                       std::abs(sg.gains.m - ref.m)});
            worst_diff = std::max(worst_diff, d);
            worst_terms = std::max(worst_terms, sg.terms_used());
            const double tol = std::max(1e-6, 1e-6 * std::max({std::abs(ref.n1), std::abs(ref.n2), std::abs(ref.m)}));
            o.require(d <= tol, tag + " differs by " + std::to_string(d));
            o.require(sg.terms_used() <= 60, tag + " needed " + std::to_string(sg.terms_used()) + " terms");
            // Partial sums approach the quadrature value.
            const QuasilinearGains first = gains_series_truncated(s, b, 1);
            const double e1 = std::abs(first.n1 - ref.n1) + std::abs(first.n2 - ref.n2) + std::abs(first.m - ref.m);
            o.require(d <= e1 || e1 <= 1e-6, tag + " partial sums do not approach the quadrature value");
        } catch (const Error& e) {
            o.require(false, tag + ": " + e.what());
        }
    }
    o.detail << "20 sets; max diff = " << worst_diff << ", max terms = " << worst_terms;
}

// 3. N1 tends to one half as the bound noise grows.
void limit_half(Outcome& o) {
    double prev = 1.0;
    for (double s2 : {5.0, 20.0, 50.0}) {
        const double n1 = gains_reduced_quadrature({0.0, 0.0, 1.0, s2, 0.0}, {-1.0, 1.0}, 1e-12).n1;
        const double gap = std::abs(n1 - 0.5);
        o.detail << "N1(" << s2 << ")=" << n1 << " ";
        o.require(gap < prev, "|N1-0.5| not decreasing at sigma2=" + std::to_string(s2));
        prev = gap;
        if (s2 == 50.0) o.require(gap <= 0.02, "N1 at sigma2=50 is not within 0.02 of 0.5");
    }
}

// 4. empirical non-saturation frequency equals N1.
void saturation_probability(Outcome& o) {
    auto eng = make_stream(404, 0);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        // The binomial tolerance needs both outcomes to occur; redraw sets
        // whose expected count of either outcome is below 100.
        BivariateStats s;
        SatBounds b;
        double n1 = 0.0;
        do {
            s = random_stats(eng);
            b = random_bounds(eng);
            n1 = gains_reduced_quadrature(s, b, 1e-11).n1;
        } while (n1 < 1e-4 || n1 > 1.0 - 1e-4);
        auto draw = make_stream(4040, i);
        std::normal_distribution<double> z;
        const double c = std::sqrt(1.0 - s.rho * s.rho);
        const double thr = std::max(-b.beta, b.alpha);
        const int n = 1000000;
        int inside = 0;
        for (int k = 0; k < n; ++k) {
            const double z1 = z(draw), z2 = z(draw);
            const double u2 = s.mu2 + s.sigma2 * z2;
            const double u1 = s.mu1 + s.sigma1 * (s.rho * z2 + c * z1);
            inside += u2 >= thr && u1 > b.alpha - u2 && u1 < b.beta + u2;
        }
        const double freq = static_cast<double>(inside) / n;
        const double tol = 4.0 * std::sqrt(n1 * (1.0 - n1) / n);
        worst = std::max(worst, std::abs(freq - n1) / std::max(tol, 1e-300));
        o.require(std::abs(freq - n1) <= tol, "set " + std::to_string(i) + " freq " + std::to_string(freq) +
                                                  " vs N1 " + std::to_string(n1));
    }
    o.detail << "10 sets; max |freq-N1| / tolerance = " << worst;
}

// 5. Lyapunov residuals and the mean/zero-mean split of the second moment.
void lyapunov_and_split(Outcome& o) {
    auto eng = make_stream(505, 0);
    std::normal_distribution<double> z;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const int n = 1 + i % 12;
        Eigen::MatrixXd A(n, n), B(n, 2);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) A(r, c) = z(eng);
            B(r, 0) = z(eng);
            B(r, 1) = z(eng);
        }
        const double shift = Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues().real().maxCoeff();
        A -= (shift + uni(eng, 0.2, 2.0)) * Eigen::MatrixXd::Identity(n, n);
        const Eigen::MatrixXd Q = B * B.transpose();
        const double res = lyap_residual(A, Q, lyap_solve(A, Q));
        worst = std::max(worst, res);
        o.require(res <= 1e-8, "system " + std::to_string(i) + " residual " + std::to_string(res));
    }
    o.detail << "100 systems; max residual = " << worst << "; ";

    int loops = 0, entries = 0;
    double worst_z = 0.0;
    for (int i = 0; loops < 5; ++i) {
        LoopSpec spec;
        if (i % 2 == 0) {
            spec.plant = tf2ss({uni(eng, 0.5, 3.0)}, {uni(eng, 0.5, 2.0), 1.0});
        } else {
            const double wn = uni(eng, 1.0, 4.0), xi = uni(eng, 0.3, 1.2);
            spec.plant = tf2ss({wn * wn}, {1.0, 2.0 * xi * wn, wn * wn});
        }
        spec.controller = i % 3 == 2 ? tf2ss({uni(eng, 0.5, 2.0), uni(eng, 0.1, 0.5)}, {1.0, 0.0})
                                     : static_gain(uni(eng, 0.3, 3.0));
        spec.bounds = {-1.0, 1.0};
        const double w = uni(eng, 5.0, 15.0);
        spec.ref = {uni(eng, -1.0, 1.0), uni(eng, 0.5, 1.5), w, 3};
        spec.dist = {uni(eng, -1.0, 1.0), uni(eng, 0.5, 1.5), w, 3};
        spec.bound_noise = {uni(eng, -0.5, 0.5), uni(eng, 0.2, 1.0), w, 3};
        const double n1 = uni(eng, 0.3, 1.0), n2 = uni(eng, -0.4, 0.4), m = uni(eng, -0.5, 0.5);
        const ClosedLoop cl = closed_loop_matrices(spec, n1, n2);
        if (!is_hurwitz(cl.A)) continue;
        const double slow = -Eigen::EigenSolver<Eigen::MatrixXd>(cl.A, false).eigenvalues().real().maxCoeff();
        if (slow < 0.05) continue;
        const Eigen::Vector4d q = cl.constants(spec, m);
        const Eigen::VectorXd xbar = cl.mean_state(q);
        const Eigen::MatrixXd analytic = cl.covariance() + xbar * xbar.transpose();
        SimConfig cfg;
        cfg.dt = 0.05 / w;
        cfg.warmup = 20.0 / slow;
        cfg.duration = cfg.warmup + std::max(1500.0, 1000.0 / slow);
        cfg.batches = 100;
        cfg.seed = 5000 + i;
        const LinearMoments lm = simulate_linear_moments(cl, q, cfg);
        for (Eigen::Index r = 0; r < analytic.rows(); ++r) {
            for (Eigen::Index c = 0; c < analytic.cols(); ++c) {
                const double se = lm.second_moment_stderr(r, c);
                const double zz = std::abs(lm.second_moment(r, c) - analytic(r, c)) / std::max(se, 1e-300);
                worst_z = std::max(worst_z, zz);
                ++entries;
                o.require(zz <= 4.0, "loop " + std::to_string(loops) + " entry (" + std::to_string(r) + "," +
                                         std::to_string(c) + ") z=" + std::to_string(zz));
            }
        }
        ++loops;
    }
    o.detail << loops << " loops, " << entries << " entries; max z = " << worst_z;
}

// 6. unit-H2 coloring filters.
void filter_convention(Outcome& o) {
    for (double w : {1.0, 48.0, 8984.0}) {
        const double h = h2_norm(butterworth_filter(w, 3));
        o.detail << "H2(" << w << ")=" << h << " ";
        o.require(std::abs(h - 1.0) <= 1e-6, "H2 norm at cutoff " + std::to_string(w));
    }
}

// 7. worked proportional-gain design.
void design_example(Outcome& o) {
    DesignProblem p;
    p.spec_template = integrator_spec(1.0);
    p.gamma = 1.0;
    const double base = objective(p, 100.0);
    o.detail << "cost(100)=" << base << " ";
    o.require(std::abs(base - 1244.5) <= 0.10 * 1244.5, "cost at K=100 is " + std::to_string(base) + ", not 1244.5 +-10%");
    const DesignResult r = optimize_gain(p);
    o.detail << "k_opt=" << r.k_opt << " cost(k_opt)=" << r.cost_opt << " ";
    o.require(r.k_opt >= 0.19 && r.k_opt <= 0.29, "k_opt outside [0.19, 0.29]");
    o.require(std::abs(r.cost_opt - 1.2) <= 0.25 * 1.2, "cost at k_opt not within 25% of 1.2");
    SimConfig cfg;
    cfg.seed = 77;
    const SimResult sim = simulate_nonlinear(integrator_spec(r.k_opt), cfg);
    o.detail << "non-saturation frequency at k_opt=" << sim.non_saturation_frequency << " (N1="
             << r.solution_at_opt.gains.n1 << ")";
    o.require(sim.non_saturation_frequency >= 0.99, "non-saturation frequency at k_opt below 0.99");
}

// 8. desk-scale randomized accuracy study.
void accuracy_study(Outcome& o) {
    StudyConfig c;
    c.accepted_target = 100;
    c.sigma2_levels = {0.0, 1.25, 2.5, 3.75, 5.0};
    c.max_duration = 5.0;
    c.seed = 1;
    const MonteCarloReport rep = monte_carlo_study(c);
    auto group = [&](double s2) -> const StudyGroup& {
        for (const StudyGroup& g : rep.groups) {
            if (g.sigma2 == s2) return g;
        }
        throw std::logic_error("missing group");
    };
    const StudyGroup &g0 = group(0.0), &g25 = group(2.5), &g5 = group(5.0);
    int failures = 0;
    for (const StudyGroup& g : rep.groups) failures += g.failures;
    o.detail << "accepted " << rep.n_sampled - rep.n_rejected << " of " << rep.n_sampled << " (rejected "
             << rep.rejection_fraction() * 100.0 << "%), failed runs " << failures << "; error median(0)="
             << g0.error_median << "; output medians " << g0.output_median << ", " << g25.output_median << ", "
             << g5.output_median;
    o.require(rep.n_sampled - rep.n_rejected == 100, "fewer than 100 accepted systems");
    o.require(g0.error_median <= 0.15, "median error metric at sigma2=0 above 0.15");
    o.require(g0.output_median <= g25.output_median && g25.output_median <= g5.output_median,
              "output metric medians not nondecreasing");
    const double rf = rep.rejection_fraction();
    o.require(rf >= 0.05 && rf <= 0.40, "rejection fraction outside [5%, 40%]");
}

// 9. analytic loop statistics against the nonlinear simulation.
void end_to_end(Outcome& o) {
    StudyConfig c;
    c.seed = 909;
    auto eng = make_stream(909, 1);
    int done = 0;
    double worst = 0.0;
    for (int i = 0; done < 10 && i < 200; ++i) {
        const StudySystem sys = sample_study_system(c, i);
        if (sys.rejected) continue;
        const double s2 = uni(eng, 0.0, 5.0);
        const LoopSpec spec = study_loop_spec(c, sys, s2);
        const std::string tag = "system " + std::to_string(i);
        try {
            const LoopSolution sol = fixed_point_solve(spec);
            SimConfig cfg;
            cfg.seed = 9000 + i;
            const SimConfig r = resolve_sim_config(spec, cfg, sol.gains.n1, sol.gains.n2);
            if (r.duration > 10.0) {
                cfg.dt = r.dt;
                cfg.duration = 10.0;
                cfg.warmup = 1.0;
            }
            const SimResult sim = simulate_nonlinear(spec, cfg);
            auto ok = [&](double analytic, double est, double se, const char* what) {
                const double tol = std::max(4.0 * se, 0.10 * std::abs(est));
                worst = std::max(worst, std::abs(analytic - est) / tol);
                o.require(std::abs(analytic - est) <= tol, tag + " " + what + ": analytic " + std::to_string(analytic) +
                                                               " vs simulated " + std::to_string(est));
            };
            ok(sol.mu_e, sim.e.mean, sim.e.mean_stderr, "error mean");
            ok(sol.sigma1_hat, sim.u1.std, sim.u1.std_stderr, "actuator-input std");
            ok(sol.gains.n1, sim.non_saturation_frequency, sim.non_saturation_stderr, "N1");
            ++done;
        } catch (const Error& e) {
            o.require(false, tag + ": " + e.what());
            ++done;
        }
    }
    o.require(done == 10, "fewer than 10 loops checked");
    o.detail << done << " loops; max |analytic-simulated| / tolerance = " << worst;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::vector<int> only, expect_fail;
    app.add_option("--only", only, "run only these criteria");
    app.add_option("--expect-fail", expect_fail, "criteria known to fail; they do not affect the exit status");
    CLI11_PARSE(app, argc, argv);
    const std::set<int> only_set(only.begin(), only.end()), expected(expect_fail.begin(), expect_fail.end());

    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
        {"gain oracle triangle", oracle_triangle},
        {"series against quadrature", series_vs_quadrature},
        {"N1 limit for large bound noise", limit_half},
        {"non-saturation probability equals N1", saturation_probability},
        {"Lyapunov residual and second-moment split", lyapunov_and_split},
        {"unit H2 coloring filters", filter_convention},
        {"proportional gain design example", design_example},
        {"randomized accuracy study", accuracy_study},
        {"analytic statistics against nonlinear simulation", end_to_end},
    };
    int unexpected = 0, failed = 0, passed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only_set.empty() && !only_set.count(id)) continue;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool known = expected.count(id) > 0;
        std::printf("%s criterion %d (%s) [%.1fs]: %s%s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), secs,
                    o.detail.str().c_str(), !o.pass && known ? " (expected failure)" : (o.pass && known ? " (expected to fail but passed)" : ""));
        std::fflush(stdout);
        if (o.pass) {
            ++passed;
        } else {
            ++failed;
            if (!known) ++unexpected;
        }
    }
    std::printf("SUMMARY: %d passed, %d failed (%d unexpected)\n", passed, failed, unexpected);
    return unexpected == 0 ? 0 : 1;
}
