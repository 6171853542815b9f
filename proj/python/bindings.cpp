#include "qlc/config.hpp"
#include "qlc/design.hpp"
#include "qlc/error.hpp"
#include "qlc/sim.hpp"
#include "qlc/sweep.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace qlc;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Quasilinear analysis of loops with a bivariate saturating actuator";

    static py::exception<Error> base(m, "QlcError", PyExc_RuntimeError);
    static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            const std::string msg = std::string(to_string(e.kind())) + ": " + e.what();
            if (e.kind() == ErrorKind::Config || e.kind() == ErrorKind::Domain) {
                config_error(msg.c_str());
            } else {
                base(msg.c_str());
            }
        }
    });

    py::class_<SatBounds>(m, "SatBounds")
        .def(py::init([](double alpha, double beta) { return SatBounds{alpha, beta}; }), py::arg("alpha"), py::arg("beta"))
        .def_readwrite("alpha", &SatBounds::alpha)
        .def_readwrite("beta", &SatBounds::beta);

    py::class_<BivariateStats>(m, "BivariateStats")
        .def(py::init([](double mu1, double sigma1, double mu2, double sigma2, double rho) {
                 return BivariateStats{mu1, mu2, sigma1, sigma2, rho};
             }),
             py::arg("mu1"), py::arg("sigma1"), py::arg("mu2") = 0.0, py::arg("sigma2") = 0.0, py::arg("rho") = 0.0)
        .def_readwrite("mu1", &BivariateStats::mu1)
        .def_readwrite("sigma1", &BivariateStats::sigma1)
        .def_readwrite("mu2", &BivariateStats::mu2)
        .def_readwrite("sigma2", &BivariateStats::sigma2)
        .def_readwrite("rho", &BivariateStats::rho);

    py::class_<QuasilinearGains>(m, "QuasilinearGains")
        .def_readonly("n1", &QuasilinearGains::n1)
        .def_readonly("n2", &QuasilinearGains::n2)
        .def_readonly("m", &QuasilinearGains::m)
        .def_property_readonly("method", [](const QuasilinearGains& g) { return std::string(to_string(g.method)); })
        .def("__repr__", [](const QuasilinearGains& g) {
            return "QuasilinearGains(n1=" + std::to_string(g.n1) + ", n2=" + std::to_string(g.n2) +
                   ", m=" + std::to_string(g.m) + ")";
        });

    m.def("sat_eval", &sat_eval, py::arg("u1"), py::arg("u2"), py::arg("bounds"));
    m.def("gains_reduced_quadrature", &gains_reduced_quadrature, py::arg("stats"), py::arg("bounds"),
          py::arg("abs_tol") = 1e-9);
    m.def("gains_raw_quadrature", &gains_raw_quadrature, py::arg("stats"), py::arg("bounds"), py::arg("abs_tol") = 1e-9);
    m.def(
        "gains_series",
        [](const BivariateStats& s, const SatBounds& b, double tol_percent, int max_terms, bool override_convergence) {
            specfun::SeriesOptions o;
            o.tol_percent = tol_percent;
            o.max_terms = max_terms;
            o.override_convergence = override_convergence;
            const SeriesGains g = gains_series(s, b, o);
            return py::make_tuple(g.gains, g.terms_used());
        },
        py::arg("stats"), py::arg("bounds"), py::arg("tol_percent") = 0.01, py::arg("max_terms") = 200,
        py::arg("override_convergence") = false, "Returns (gains, terms_used).");
    m.def(
        "gains_monte_carlo",
        [](const BivariateStats& s, const SatBounds& b, std::size_t samples, std::uint64_t seed) {
            const LinearizationResult r = gains_monte_carlo(s, b, samples, seed);
            return py::dict(py::arg("n1") = r.gains[0], py::arg("n2") = r.gains[1], py::arg("m") = r.bias,
                            py::arg("stderr_n1") = r.stderr_gains[0], py::arg("stderr_n2") = r.stderr_gains[1],
                            py::arg("stderr_m") = r.stderr_bias);
        },
        py::arg("stats"), py::arg("bounds"), py::arg("samples") = 100000, py::arg("seed") = 0);
    m.def("prob_not_saturated", &prob_not_saturated, py::arg("stats"), py::arg("bounds"), py::arg("abs_tol") = 1e-9);

    py::class_<StateSpace>(m, "StateSpace")
        .def_readwrite("A", &StateSpace::A)
        .def_readwrite("B", &StateSpace::B)
        .def_readwrite("C", &StateSpace::C)
        .def_readwrite("D", &StateSpace::D);
    m.def("tf2ss", &tf2ss, py::arg("num"), py::arg("den"));
    m.def("static_gain", &static_gain, py::arg("k"));
    m.def("butterworth_filter", &butterworth_filter, py::arg("cutoff"), py::arg("order") = 3);
    m.def("h2_norm", &h2_norm, py::arg("system"));
    m.def("lyap_solve", &lyap_solve, py::arg("A"), py::arg("Q"));

    py::class_<SignalSpec>(m, "SignalSpec")
        .def(py::init([](double mu, double sigma, double cutoff, int order) { return SignalSpec{mu, sigma, cutoff, order}; }),
             py::arg("mu") = 0.0, py::arg("sigma") = 0.0, py::arg("cutoff") = 48.0, py::arg("filter_order") = 3)
        .def_readwrite("mu", &SignalSpec::mu)
        .def_readwrite("sigma", &SignalSpec::sigma)
        .def_readwrite("cutoff", &SignalSpec::cutoff)
        .def_readwrite("filter_order", &SignalSpec::filter_order);

    py::class_<LoopSpec>(m, "LoopSpec")
        .def(py::init([](const StateSpace& plant, const StateSpace& controller, const SatBounds& bounds,
                         const SignalSpec& ref, const SignalSpec& dist, const SignalSpec& bound_noise) {
                 LoopSpec s{plant, controller, bounds, ref, dist, bound_noise};
                 s.check();
                 return s;
             }),
             py::arg("plant"), py::arg("controller"), py::arg("bounds"), py::arg("ref"), py::arg("dist"),
             py::arg("bound_noise"))
        .def_readwrite("plant", &LoopSpec::plant)
        .def_readwrite("controller", &LoopSpec::controller)
        .def_readwrite("bounds", &LoopSpec::bounds)
        .def_readwrite("ref", &LoopSpec::ref)
        .def_readwrite("dist", &LoopSpec::dist)
        .def_readwrite("bound_noise", &LoopSpec::bound_noise);

    py::enum_<SolverMethod>(m, "SolverMethod")
        .value("Auto", SolverMethod::Auto)
        .value("Newton", SolverMethod::Newton)
        .value("Picard", SolverMethod::Picard);

    py::class_<SolverOptions>(m, "SolverOptions")
        .def(py::init<>())
        .def_readwrite("tol", &SolverOptions::tol)
        .def_readwrite("max_iterations", &SolverOptions::max_iterations)
        .def_readwrite("quad_tol", &SolverOptions::quad_tol)
        .def_readwrite("picard_damping", &SolverOptions::picard_damping)
        .def_readwrite("method", &SolverOptions::method);

    py::class_<LoopSolution>(m, "LoopSolution")
        .def_readonly("gains", &LoopSolution::gains)
        .def_readonly("mu1_hat", &LoopSolution::mu1_hat)
        .def_readonly("sigma1_hat", &LoopSolution::sigma1_hat)
        .def_readonly("rho_hat", &LoopSolution::rho_hat)
        .def_readonly("m_injection", &LoopSolution::m_injection)
        .def_readonly("mu_e", &LoopSolution::mu_e)
        .def_readonly("sigma_e", &LoopSolution::sigma_e)
        .def_readonly("iterations", &LoopSolution::iterations)
        .def_readonly("residual_norm", &LoopSolution::residual_norm)
        .def_readonly("converged", &LoopSolution::converged)
        .def_readonly("hurwitz_at_solution", &LoopSolution::hurwitz_at_solution)
        .def_readonly("method", &LoopSolution::method);

    m.def("fixed_point_solve", &fixed_point_solve, py::arg("spec"), py::arg("options") = SolverOptions{});
    m.def(
        "existence_report",
        [](const LoopSpec& spec) { return py::module_::import("json").attr("loads")(to_json(existence_assumptions_report(spec)).dump()); },
        py::arg("spec"), "Existence checks as a dict.");

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("dt", &SimConfig::dt)
        .def_readwrite("duration", &SimConfig::duration)
        .def_readwrite("warmup", &SimConfig::warmup)
        .def_readwrite("seed", &SimConfig::seed)
        .def_readwrite("batches", &SimConfig::batches)
        .def_readwrite("max_steps", &SimConfig::max_steps)
        .def_readwrite("stationary_start", &SimConfig::stationary_start);

    py::class_<Moments>(m, "Moments")
        .def_readonly("mean", &Moments::mean)
        .def_readonly("second_moment", &Moments::second_moment)
        .def_readonly("std", &Moments::std)
        .def_readonly("mean_stderr", &Moments::mean_stderr)
        .def_readonly("std_stderr", &Moments::std_stderr);

    py::class_<SimResult>(m, "SimResult")
        .def_readonly("e", &SimResult::e)
        .def_readonly("u1", &SimResult::u1)
        .def_readonly("v", &SimResult::v)
        .def_readonly("y", &SimResult::y)
        .def_readonly("non_saturation_frequency", &SimResult::non_saturation_frequency)
        .def_readonly("non_saturation_stderr", &SimResult::non_saturation_stderr)
        .def_readonly("dt", &SimResult::dt);

    m.def("simulate_nonlinear", &simulate_nonlinear, py::arg("spec"), py::arg("config") = SimConfig{});
    m.def(
        "simulate_pair",
        [](const LoopSpec& spec, const LoopSolution& sol, const SimConfig& cfg) {
            SimPair p = simulate_pair(spec, sol, cfg);
            return py::make_tuple(p.nonlinear, p.quasilinear);
        },
        py::arg("spec"), py::arg("solution"), py::arg("config") = SimConfig{}, "Returns (nonlinear, quasilinear).");
    m.def(
        "accuracy_metrics",
        [](const SimResult& nl, const SimResult& ql) {
            const AccuracyMetrics a = accuracy_metrics(nl, ql);
            return py::make_tuple(a.error_metric, a.output_metric);
        },
        py::arg("nonlinear"), py::arg("quasilinear"));

    py::class_<DesignResult>(m, "DesignResult")
        .def_readonly("k_opt", &DesignResult::k_opt)
        .def_readonly("cost_opt", &DesignResult::cost_opt)
        .def_readonly("cost_init", &DesignResult::cost_init)
        .def_readonly("solution_at_opt", &DesignResult::solution_at_opt)
        .def_readonly("evaluations", &DesignResult::evaluations);

    m.def(
        "optimize_gain",
        [](const LoopSpec& spec, double gamma, double k_min, double k_max, double k_init, int grid_points) {
            DesignProblem p;
            p.spec_template = spec;
            p.gamma = gamma;
            p.k_min = k_min;
            p.k_max = k_max;
            p.k_init = k_init;
            p.grid_points = grid_points;
            return optimize_gain(p);
        },
        py::arg("spec"), py::arg("gamma") = 1.0, py::arg("k_min") = 1e-3, py::arg("k_max") = 1e3,
        py::arg("k_init") = 100.0, py::arg("grid_points") = 40,
        "The controller in `spec` is replaced by the gain being tuned.");
    m.def(
        "design_objective",
        [](const LoopSpec& spec, double k, double gamma) {
            DesignProblem p;
            p.spec_template = spec;
            p.gamma = gamma;
            return objective(p, k);
        },
        py::arg("spec"), py::arg("k"), py::arg("gamma") = 1.0);

    m.def(
        "loop_from_config",
        [](const std::string& text) {
            const RunConfig cfg = parse_run_config(nlohmann::json::parse(text));
            if (!cfg.loop) throw ConfigError("configuration does not describe a complete loop");
            return *cfg.loop;
        },
        py::arg("json_text"), "LoopSpec from a JSON run configuration.");
}
