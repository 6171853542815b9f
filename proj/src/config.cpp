#include "qlc/config.hpp"

#include "qlc/error.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace qlc {

using nlohmann::json;

namespace {

// Wraps one JSON object and checks, on finish(), that every key was read.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return node_.contains(key);
    }

    const json& at(const std::string& key) {
        seen_.insert(key);
        return node_.at(key);
    }

    std::string path(const std::string& key) const { return path_ + "." + key; }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const json& v = node_.at(key);
        if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(path(key) + ": must be finite");
        return x;
    }

    long long integer(const std::string& key, long long fallback) {
        if (!has(key)) return fallback;
        const json& v = node_.at(key);
        if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
        return v.get<long long>();
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = node_.at(key);
        if (!v.is_boolean()) throw ConfigError(path(key) + ": expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        const json& v = node_.at(key);
        if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
        return v.get<std::string>();
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
        if (!has(key)) return fallback;
        const json& v = node_.at(key);
        if (!v.is_array()) throw ConfigError(path(key) + ": expected an array of numbers");
        std::vector<double> out;
        for (const json& x : v) {
            if (!x.is_number()) throw ConfigError(path(key) + ": expected an array of numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }

    void finish() const {
        for (const auto& [key, value] : node_.items()) {
            if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
        }
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

Eigen::MatrixXd matrix(const json& node, const std::string& where) {
    if (!node.is_array()) throw ConfigError(where + ": expected an array of rows");
    const auto rows = static_cast<Eigen::Index>(node.size());
    Eigen::Index cols = -1;
    Eigen::MatrixXd m;
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = node[i];
        if (!row.is_array()) throw ConfigError(where + ": expected an array of rows");
        if (cols < 0) {
            cols = static_cast<Eigen::Index>(row.size());
            m.resize(rows, cols);
        }
        if (static_cast<Eigen::Index>(row.size()) != cols) throw ConfigError(where + ": ragged matrix");
        for (Eigen::Index j = 0; j < cols; ++j) {
            if (!row[j].is_number()) throw ConfigError(where + ": matrix entries must be numbers");
            m(i, j) = row[j].get<double>();
        }
    }
    if (rows == 0) m.resize(0, 0);
    return m;
}

SignalSpec parse_signal(const json& node, const std::string& where) {
    Section s(node, where);
    SignalSpec sig;
    sig.mu = s.number("mu", 0.0);
    sig.sigma = s.number("sigma", 0.0);
    sig.cutoff = s.number("cutoff", sig.cutoff);
    sig.filter_order = static_cast<int>(s.integer("filter_order", sig.filter_order));
    s.finish();
    if (sig.sigma < 0.0) throw ConfigError(where + ".sigma: must be nonnegative");
    if (!(sig.cutoff > 0.0)) throw ConfigError(where + ".cutoff: must be positive");
    if (sig.filter_order < 1) throw ConfigError(where + ".filter_order: must be at least 1");
    return sig;
}

SolverMethod parse_method(const std::string& m, const std::string& where) {
    if (m == "auto") return SolverMethod::Auto;
    if (m == "newton") return SolverMethod::Newton;
    if (m == "picard") return SolverMethod::Picard;
    throw ConfigError(where + ": expected auto, newton or picard");
}

void parse_sim(Section s, SimConfig& c) {
    c.dt = s.number("dt", c.dt);
    c.duration = s.number("duration", c.duration);
    c.warmup = s.number("warmup", c.warmup);
    c.batches = static_cast<int>(s.integer("batches", c.batches));
    c.max_steps = static_cast<std::size_t>(s.integer("max_steps", static_cast<long long>(c.max_steps)));
    c.stationary_start = s.boolean("stationary_start", c.stationary_start);
    c.trace_stride = static_cast<std::size_t>(s.integer("trace_stride", static_cast<long long>(c.trace_stride)));
    s.finish();
    if (c.dt < 0.0 || c.duration < 0.0) throw ConfigError("sim: dt and duration must be nonnegative");
}

} // namespace

StateSpace parse_system(const json& node, const std::string& where) {
    if (node.is_number()) return static_gain(node.get<double>());
    Section s(node, where);
    StateSpace out;
    if (s.has("num") || s.has("den")) {
        const std::vector<double> num = s.numbers("num", {});
        const std::vector<double> den = s.numbers("den", {});
        s.finish();
        try {
            out = tf2ss(num, den);
        } catch (const Error& e) {
            throw ConfigError(where + ": " + e.what());
        }
    } else {
        if (!s.has("D")) throw ConfigError(where + ": expected num/den or A/B/C/D");
        out.D = matrix(s.at("D"), s.path("D"));
        const Eigen::Index n = s.has("A") ? static_cast<Eigen::Index>(s.at("A").size()) : 0;
        out.A = n ? matrix(s.at("A"), s.path("A")) : Eigen::MatrixXd(0, 0);
        out.B = s.has("B") ? matrix(s.at("B"), s.path("B")) : Eigen::MatrixXd(0, out.D.cols());
        out.C = s.has("C") ? matrix(s.at("C"), s.path("C")) : Eigen::MatrixXd(out.D.rows(), 0);
        s.finish();
    }
    try {
        out.check();
    } catch (const Error& e) {
        throw ConfigError(where + ": " + e.what());
    }
    if (!out.is_siso()) throw ConfigError(where + ": system must be single-input single-output");
    return out;
}

RunConfig parse_run_config(const json& doc) {
    RunConfig cfg;
    Section root(doc, "config");
    cfg.seed = static_cast<std::uint64_t>(root.integer("seed", 1));
    cfg.threads = static_cast<unsigned>(std::max(1LL, root.integer("threads", 1)));

    std::optional<StateSpace> plant, controller;
    if (root.has("system")) {
        Section sys(root.at("system"), "config.system");
        if (sys.has("plant")) plant = parse_system(sys.at("plant"), "config.system.plant");
        if (sys.has("controller")) controller = parse_system(sys.at("controller"), "config.system.controller");
        sys.finish();
    }
    std::optional<SatBounds> bounds;
    if (root.has("bounds")) {
        Section b(root.at("bounds"), "config.bounds");
        SatBounds sb;
        sb.alpha = b.number("alpha", sb.alpha);
        sb.beta = b.number("beta", sb.beta);
        b.finish();
        if (!(sb.alpha <= sb.beta)) throw ConfigError("config.bounds: alpha must not exceed beta");
        bounds = sb;
    }
    LoopSpec spec;
    bool have_signals = false;
    if (root.has("signals")) {
        Section s(root.at("signals"), "config.signals");
        if (s.has("ref")) spec.ref = parse_signal(s.at("ref"), "config.signals.ref");
        if (s.has("dist")) spec.dist = parse_signal(s.at("dist"), "config.signals.dist");
        if (s.has("bound_noise")) spec.bound_noise = parse_signal(s.at("bound_noise"), "config.signals.bound_noise");
        s.finish();
        have_signals = true;
    }
    if (plant && controller && bounds) {
        spec.plant = *plant;
        spec.controller = *controller;
        spec.bounds = *bounds;
        if (!have_signals) throw ConfigError("config.signals: required together with system and bounds");
        try {
            spec.check();
        } catch (const Error& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        cfg.loop = spec;
    } else if (plant || controller) {
        if (!plant) throw ConfigError("config.system.plant: required");
    }

    if (root.has("gains")) {
        Section g(root.at("gains"), "config.gains");
        GainsRequest req;
        req.stats.mu1 = g.number("mu1", 0.0);
        req.stats.sigma1 = g.number("sigma1", 1.0);
        req.stats.mu2 = g.number("mu2", 0.0);
        req.stats.sigma2 = g.number("sigma2", 0.0);
        req.stats.rho = g.number("rho", 0.0);
        const std::string m = g.string("method", "all");
        if (m == "reduced") req.method = GainsMethodChoice::Reduced;
        else if (m == "raw") req.method = GainsMethodChoice::Raw;
        else if (m == "series") req.method = GainsMethodChoice::Series;
        else if (m == "montecarlo") req.method = GainsMethodChoice::MonteCarlo;
        else if (m == "all") req.method = GainsMethodChoice::All;
        else throw ConfigError("config.gains.method: expected reduced, raw, series, montecarlo or all");
        req.quad_tol = g.number("quad_tol", req.quad_tol);
        req.series.tol_percent = g.number("series_tol_percent", req.series.tol_percent);
        req.series.max_terms = static_cast<int>(g.integer("series_max_terms", req.series.max_terms));
        req.mc_samples = static_cast<std::size_t>(g.integer("mc_samples", static_cast<long long>(req.mc_samples)));
        g.finish();
        if (!bounds) throw ConfigError("config.bounds: required by config.gains");
        req.bounds = *bounds;
        try {
            validate(req.stats, req.bounds);
        } catch (const Error& e) {
            throw ConfigError(std::string("config.gains: ") + e.what());
        }
        cfg.gains = req;
    }

    if (root.has("solver")) {
        Section s(root.at("solver"), "config.solver");
        cfg.solver.tol = s.number("tol", cfg.solver.tol);
        cfg.solver.max_iterations = static_cast<int>(s.integer("max_iterations", cfg.solver.max_iterations));
        cfg.solver.quad_tol = s.number("quad_tol", cfg.solver.quad_tol);
        cfg.solver.picard_damping = s.number("damping", cfg.solver.picard_damping);
        cfg.solver.method = parse_method(s.string("method", "auto"), "config.solver.method");
        s.finish();
        if (!(cfg.solver.tol > 0.0) || cfg.solver.max_iterations < 1) {
            throw ConfigError("config.solver: tol must be positive and max_iterations at least 1");
        }
        if (!(cfg.solver.picard_damping > 0.0 && cfg.solver.picard_damping <= 1.0)) {
            throw ConfigError("config.solver.damping: must lie in (0, 1]");
        }
    }

    if (root.has("sim")) parse_sim(Section(root.at("sim"), "config.sim"), cfg.sim);
    cfg.sim.seed = cfg.seed;

    if (root.has("study")) {
        cfg.has_study = true;
        Section s(root.at("study"), "config.study");
        StudyConfig& c = cfg.study;
        c.accepted_target = static_cast<int>(s.integer("accepted", c.accepted_target));
        c.max_sampled = static_cast<int>(s.integer("max_sampled", c.max_sampled));
        c.sigma2_levels = s.numbers("sigma2_levels", c.sigma2_levels);
        auto range = [&](const std::string& key, double& lo, double& hi) {
            const std::vector<double> r = s.numbers(key, {lo, hi});
            if (r.size() != 2 || !(r[0] <= r[1])) throw ConfigError(s.path(key) + ": expected [low, high]");
            lo = r[0];
            hi = r[1];
        };
        range("k_range", c.k_min, c.k_max);
        range("t_range", c.t_min, c.t_max);
        range("wn_range", c.wn_min, c.wn_max);
        range("xi_range", c.xi_min, c.xi_max);
        range("alpha_range", c.alpha_min, c.alpha_max);
        range("beta_range", c.beta_min, c.beta_max);
        c.cutoff = s.number("cutoff", c.cutoff);
        c.cutoff_in_hz = s.boolean("cutoff_in_hz", c.cutoff_in_hz);
        c.pm_threshold_deg = s.number("pm_threshold_deg", c.pm_threshold_deg);
        const std::string rule = s.string("reject", "below");
        if (rule != "below" && rule != "above") throw ConfigError("config.study.reject: expected below or above");
        c.reject_below_threshold = rule == "below";
        c.max_duration = s.number("max_duration", c.max_duration);
        if (s.has("sim")) parse_sim(Section(s.at("sim"), "config.study.sim"), c.sim);
        s.finish();
        if (c.accepted_target < 1 || c.max_sampled < 1 || c.sigma2_levels.empty()) {
            throw ConfigError("config.study: counts must be positive and sigma2_levels nonempty");
        }
    }
    cfg.study.seed = cfg.seed;
    cfg.study.threads = cfg.threads;

    if (root.has("sweep")) {
        cfg.has_sweep = true;
        Section s(root.at("sweep"), "config.sweep");
        SweepRequest& w = cfg.sweep;
        const std::string kind = s.string("kind", "n1_vs_sigma2");
        if (kind == "n1_vs_sigma2") w.kind = SweepKind::N1VsSigma2;
        else if (kind == "rho_vs_asymmetry") w.kind = SweepKind::RhoVsAsymmetry;
        else if (kind == "rho_vs_asymmetry_noise") w.kind = SweepKind::RhoVsAsymmetryNoise;
        else if (kind == "series_accuracy") w.kind = SweepKind::SeriesAccuracy;
        else throw ConfigError("config.sweep.kind: unknown sweep '" + kind + "'");
        w.betas = s.numbers("betas", w.betas);
        w.sigma2 = s.numbers("sigma2", w.sigma2);
        w.mu1 = s.number("mu1", w.mu1);
        w.sigma1 = s.number("sigma1", w.sigma1);
        w.mu2 = s.number("mu2", w.mu2);
        w.alpha = s.number("alpha", w.alpha);
        w.max_terms = static_cast<int>(s.integer("max_terms", w.max_terms));
        s.finish();
        if (cfg.gains) {
            w.series_stats = cfg.gains->stats;
            w.series_bounds = cfg.gains->bounds;
        }
        if (w.betas.empty() || w.sigma2.empty()) throw ConfigError("config.sweep: betas and sigma2 must be nonempty");
        for (double x : w.sigma2) {
            if (x < 0.0) throw ConfigError("config.sweep.sigma2: values must be nonnegative");
        }
        if (!(w.sigma1 > 0.0)) throw ConfigError("config.sweep.sigma1: must be positive");
        if (w.max_terms < 1) throw ConfigError("config.sweep.max_terms: must be at least 1");
    }

    if (root.has("design")) {
        cfg.has_design = true;
        Section s(root.at("design"), "config.design");
        DesignProblem& d = cfg.design;
        d.gamma = s.number("gamma", d.gamma);
        d.k_min = s.number("k_min", d.k_min);
        d.k_max = s.number("k_max", d.k_max);
        d.k_init = s.number("k_init", d.k_init);
        d.grid_points = static_cast<int>(s.integer("grid_points", d.grid_points));
        d.k_rel_tol = s.number("k_rel_tol", d.k_rel_tol);
        s.finish();
        if (!plant || !bounds || !have_signals) {
            throw ConfigError("config.design: needs system.plant, bounds and signals");
        }
        d.spec_template = spec;
        d.spec_template.plant = *plant;
        d.spec_template.bounds = *bounds;
        d.spec_template.controller = static_gain(1.0);
        d.solver = cfg.solver;
        d.threads = cfg.threads;
        try {
            d.check();
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }

    if (root.has("output")) {
        Section s(root.at("output"), "config.output");
        cfg.output_directory = s.string("directory", cfg.output_directory);
        if (s.has("formats")) {
            const json& f = s.at("formats");
            if (!f.is_array()) throw ConfigError("config.output.formats: expected an array");
            cfg.formats.clear();
            for (const json& x : f) {
                if (!x.is_string() || (x != "json" && x != "csv")) {
                    throw ConfigError("config.output.formats: entries must be \"json\" or \"csv\"");
                }
                cfg.formats.push_back(x.get<std::string>());
            }
        }
        s.finish();
    }
    root.finish();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(doc);
}

json to_json(const QuasilinearGains& g) {
    return {{"N1", g.n1}, {"N2", g.n2}, {"M", g.m}, {"method", std::string(to_string(g.method))}};
}

json to_json(const LoopSolution& s) {
    return {{"gains", to_json(s.gains)},
            {"mu1_hat", s.mu1_hat},
            {"sigma1_hat", s.sigma1_hat},
            {"rho_hat", s.rho_hat},
            {"m_injection", s.m_injection},
            {"mu_e", s.mu_e},
            {"sigma_e", s.sigma_e},
            {"iterations", s.iterations},
            {"residual_norm", s.residual_norm},
            {"converged", s.converged},
            {"hurwitz_at_solution", s.hurwitz_at_solution},
            {"method", s.method}};
}

json to_json(const ExistenceReport& r) {
    json v = json::array();
    for (const auto& p : r.violations) v.push_back({p[0], p[1]});
    return {{"plant_dc_infinite", r.plant_dc_infinite},
            {"controller_dc_infinite", r.controller_dc_infinite},
            {"well_posed", r.well_posed},
            {"grid", {r.grid_n1, r.grid_n2}},
            {"hurwitz_points", r.hurwitz_points},
            {"total_points", r.total_points},
            {"violations", v},
            {"membership_checked", r.membership_checked},
            {"membership_ok", r.membership_ok},
            {"membership_target", r.membership_target},
            {"bias_range", {r.bias_range_low, r.bias_range_high}},
            {"all_passed", r.all_passed()}};
}

json to_json(const Moments& m) {
    return {{"mean", m.mean},
            {"second_moment", m.second_moment},
            {"std", m.std},
            {"mean_stderr", m.mean_stderr},
            {"second_moment_stderr", m.second_moment_stderr},
            {"std_stderr", m.std_stderr}};
}

json to_json(const SimResult& r) {
    return {{"moments", {{"e", to_json(r.e)}, {"u1", to_json(r.u1)}, {"v", to_json(r.v)}, {"y", to_json(r.y)}}},
            {"non_saturation_frequency", r.non_saturation_frequency},
            {"non_saturation_stderr", r.non_saturation_stderr},
            {"samples", r.samples},
            {"dt", r.dt}};
}

json to_json(const MonteCarloReport& r) {
    json groups = json::array();
    for (const StudyGroup& g : r.groups) {
        groups.push_back({{"sigma2", g.sigma2},
                          {"count", g.count},
                          {"failures", g.failures},
                          {"error_metric", {{"q25", g.error_q25}, {"median", g.error_median}, {"q75", g.error_q75}}},
                          {"output_metric", {{"q25", g.output_q25}, {"median", g.output_median}, {"q75", g.output_q75}}}});
    }
    return {{"n_sampled", r.n_sampled},
            {"n_rejected", r.n_rejected},
            {"rejection_fraction", r.rejection_fraction()},
            {"groups", groups}};
}

json to_json(const DesignResult& r) {
    json failures = json::array();
    for (const auto& [k, why] : r.failures) failures.push_back({{"k", k}, {"reason", why}});
    return {{"k_opt", r.k_opt},
            {"cost_opt", r.cost_opt},
            {"cost_init", std::isfinite(r.cost_init) ? json(r.cost_init) : json(nullptr)},
            {"evaluations", r.evaluations},
            {"solution_at_opt", to_json(r.solution_at_opt)},
            {"failures", failures}};
}

} // namespace qlc
