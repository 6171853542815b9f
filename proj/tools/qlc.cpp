// qlc: quasilinear analysis of loops with a bivariate saturating actuator.
#include "qlc/config.hpp"
#include "qlc/error.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace qlc;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

// nlohmann prints the shortest round-trip form; outputs here use 17 digits.
void dump17(std::ostream& os, const json& j, int indent, int depth) {
    const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
    const std::string close(static_cast<std::size_t>(indent * depth), ' ');
    switch (j.type()) {
    case json::value_t::number_float: {
        const double x = j.get<double>();
        if (!std::isfinite(x)) {
            os << "null";
        } else {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", x);
            os << buf;
        }
        break;
    }
    case json::value_t::object: {
        if (j.empty()) {
            os << "{}";
            break;
        }
        os << "{\n";
        bool first = true;
        for (const auto& [k, v] : j.items()) {
            if (!first) os << ",\n";
            first = false;
            os << pad << json(k).dump() << ": ";
            dump17(os, v, indent, depth + 1);
        }
        os << '\n' << close << '}';
        break;
    }
    case json::value_t::array: {
        if (j.empty()) {
            os << "[]";
            break;
        }
        os << "[\n";
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i) os << ",\n";
            os << pad;
            dump17(os, j[i], indent, depth + 1);
        }
        os << '\n' << close << ']';
        break;
    }
    default:
        os << j.dump();
    }
}

std::string to_text(const json& j) {
    std::ostringstream os;
    dump17(os, j, 2, 0);
    os << '\n';
    return os.str();
}

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
    std::string format;
    bool override_convergence = false;
};

class Output {
public:
    Output(const RunConfig& cfg, const Options& opt) {
        dir_ = opt.out.empty() ? cfg.output_directory : opt.out;
        formats_ = cfg.formats;
        if (!opt.format.empty()) formats_ = {opt.format};
        if (!dir_.empty()) std::filesystem::create_directories(dir_);
    }
    bool wants(const std::string& f) const {
        return !dir_.empty() && std::find(formats_.begin(), formats_.end(), f) != formats_.end();
    }
    void json_file(const std::string& name, const json& j) const {
        if (wants("json")) std::ofstream(path(name)) << to_text(j);
    }
    template <class Writer>
    void csv_file(const std::string& name, Writer&& w) const {
        if (!wants("csv")) return;
        std::ofstream os(path(name));
        os.precision(17);
        w(os);
    }

private:
    std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }
    std::string dir_;
    std::vector<std::string> formats_;
};

const LoopSpec& need_loop(const RunConfig& cfg) {
    if (!cfg.loop) throw ConfigError("this command needs system.plant, system.controller, bounds and signals");
    return *cfg.loop;
}

json gains_entry(const QuasilinearGains& g) { return {{"N1", g.n1}, {"N2", g.n2}, {"M", g.m}}; }

json cmd_gains(const RunConfig& cfg, const Options& opt, const Output& out) {
    if (!cfg.gains) throw ConfigError("config.gains: required by the gains command");
    const GainsRequest& req = *cfg.gains;
    const bool all = req.method == GainsMethodChoice::All;
    json result = {{"stats",
                    {{"mu1", req.stats.mu1},
                     {"sigma1", req.stats.sigma1},
                     {"mu2", req.stats.mu2},
                     {"sigma2", req.stats.sigma2},
                     {"rho", req.stats.rho}}},
                   {"bounds", {{"alpha", req.bounds.alpha}, {"beta", req.bounds.beta}}}};
    json methods = json::object();
    std::vector<std::pair<std::string, QuasilinearGains>> rows;

    if (all || req.method == GainsMethodChoice::Reduced) {
        const QuasilinearGains g = gains_reduced_quadrature(req.stats, req.bounds, req.quad_tol);
        methods["reduced_quadrature"] = gains_entry(g);
        rows.emplace_back("reduced_quadrature", g);
    }
    if (all || req.method == GainsMethodChoice::Raw) {
        const QuasilinearGains g = gains_raw_quadrature(req.stats, req.bounds, req.quad_tol);
        methods["raw_quadrature"] = gains_entry(g);
        rows.emplace_back("raw_quadrature", g);
    }
    if (all || req.method == GainsMethodChoice::Series) {
        specfun::SeriesOptions so = req.series;
        so.override_convergence = opt.override_convergence;
        try {
            const SeriesGains s = gains_series(req.stats, req.bounds, so);
            json e = gains_entry(s.gains);
            e["terms_used"] = s.terms_used();
            e["converged"] = s.l_upper.converged && s.l_lower.converged;
            e["last_relative_change_percent"] = std::max(s.l_upper.last_relative_change, s.l_lower.last_relative_change);
            e["coefficients"] = {{"K1", s.k1}, {"K2", s.k2}, {"K3", s.k3}, {"K4", s.k4}, {"p", s.p}};
            methods["series"] = e;
            rows.emplace_back("series", s.gains);
        } catch (const Error& e) {
            if (!all) throw;
            methods["series"] = {{"error", std::string(to_string(e.kind()))}, {"message", e.what()}};
        }
    }
    if (all || req.method == GainsMethodChoice::MonteCarlo) {
        const LinearizationResult mc = gains_monte_carlo(req.stats, req.bounds, req.mc_samples, cfg.seed,
                                                         opt.threads.value_or(cfg.threads));
        QuasilinearGains g;
        g.n1 = mc.gains[0];
        g.n2 = mc.gains[1];
        g.m = mc.bias;
        json e = gains_entry(g);
        e["stderr"] = {{"N1", mc.stderr_gains[0]}, {"N2", mc.stderr_gains[1]}, {"M", mc.stderr_bias}};
        e["samples"] = req.mc_samples;
        methods["monte_carlo"] = e;
        rows.emplace_back("monte_carlo", g);
    }
    result["methods"] = methods;
    if (rows.size() > 1) {
        json diffs = json::object();
        const QuasilinearGains& base = rows.front().second;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const QuasilinearGains& g = rows[i].second;
            diffs[rows[i].first + "_vs_" + rows.front().first] =
                std::max({std::abs(g.n1 - base.n1), std::abs(g.n2 - base.n2), std::abs(g.m - base.m)});
        }
        result["max_abs_disagreement"] = diffs;
    }
    out.csv_file("gains.csv", [&](std::ostream& os) {
        os << "method,N1,N2,M\n";
        for (const auto& [name, g] : rows) os << name << ',' << g.n1 << ',' << g.n2 << ',' << g.m << '\n';
    });
    return result;
}

json cmd_solve(const RunConfig& cfg, const Options&, const Output& out) {
    const LoopSpec& spec = need_loop(cfg);
    const ExistenceReport rep = existence_assumptions_report(spec);
    const LoopSolution sol = fixed_point_solve(spec, cfg.solver);
    const double gamma = cfg.has_design ? cfg.design.gamma : 1.0;
    json result = {{"solution", to_json(sol)},
                   {"cost", {{"gamma", gamma}, {"value", design_cost(sol, gamma)}}},
                   {"existence", to_json(rep)}};
    out.csv_file("solve.csv", [&](std::ostream& os) {
        os << "N1,N2,M,mu1_hat,sigma1_hat,rho_hat,mu_e,sigma_e,cost\n";
        os << sol.gains.n1 << ',' << sol.gains.n2 << ',' << sol.gains.m << ',' << sol.mu1_hat << ','
           << sol.sigma1_hat << ',' << sol.rho_hat << ',' << sol.mu_e << ',' << sol.sigma_e << ','
           << design_cost(sol, gamma) << '\n';
    });
    return result;
}

json cmd_simulate(const RunConfig& cfg, const Options&, const Output& out) {
    const LoopSpec& spec = need_loop(cfg);
    const LoopSolution sol = fixed_point_solve(spec, cfg.solver);
    SimConfig sc = resolve_sim_config(spec, cfg.sim, sol.gains.n1, sol.gains.n2);
    if (sc.trace_stride == 0) {
        const auto recorded = static_cast<std::size_t>(std::llround((sc.duration - sc.warmup) / sc.dt));
        sc.trace_stride = std::max<std::size_t>(1, recorded / 20000);
    }
    const SimPair pair = simulate_pair(spec, sol, sc);
    json result = {{"solution", to_json(sol)},
                   {"nonlinear", to_json(pair.nonlinear)},
                   {"quasilinear", to_json(pair.quasilinear)},
                   {"config", {{"dt", sc.dt}, {"duration", sc.duration}, {"warmup", sc.warmup}, {"seed", sc.seed}}}};
    try {
        const AccuracyMetrics m = accuracy_metrics(pair.nonlinear, pair.quasilinear);
        result["accuracy"] = {{"error_metric", m.error_metric}, {"output_metric", m.output_metric}};
    } catch (const DegenerateMetric& e) {
        result["accuracy"] = {{"error", "DegenerateMetric"}, {"message", e.what()}};
    }
    out.csv_file("trace.csv", [&](std::ostream& os) { write_trace_csv(os, pair); });
    return result;
}

json cmd_montecarlo(const RunConfig& cfg, const Options&, const Output& out) {
    const MonteCarloReport rep = monte_carlo_study(cfg.study);
    out.csv_file("records.csv", [&](std::ostream& os) {
        os << "system,sigma2,ok,error_metric,output_metric,N1,non_saturation_frequency,failure\n";
        for (const StudyRecord& r : rep.records) {
            os << r.system << ',' << r.sigma2 << ',' << (r.ok ? 1 : 0) << ',' << r.error_metric << ','
               << r.output_metric << ',' << r.n1 << ',' << r.non_saturation_frequency << ",\"" << r.failure
               << "\"\n";
        }
    });
    out.csv_file("systems.csv", [&](std::ostream& os) {
        os << "index,second_order,K,T,wn,xi,alpha,beta,stable,phase_margin_deg,rejected\n";
        for (const StudySystem& s : rep.systems) {
            os << s.index << ',' << (s.second_order ? 1 : 0) << ',' << s.k << ',' << s.t << ',' << s.wn << ','
               << s.xi << ',' << s.alpha << ',' << s.beta << ',' << (s.stable ? 1 : 0) << ',';
            if (s.phase_margin_deg) os << *s.phase_margin_deg;
            os << ',' << (s.rejected ? 1 : 0) << '\n';
        }
    });
    return to_json(rep);
}

json cmd_sweep(const RunConfig& cfg, const Options&, const Output& out) {
    if (!cfg.has_sweep) throw ConfigError("config.sweep: required by the sweep command");
    const SweepTable t = run_sweep(cfg.sweep, cfg.loop, cfg.solver);
    out.csv_file("sweep.csv", [&](std::ostream& os) { write_csv(os, t); });
    json rows = json::array();
    for (const auto& r : t.rows) rows.push_back(r);
    return {{"columns", t.columns}, {"rows", rows}};
}

json cmd_design(const RunConfig& cfg, const Options&, const Output& out) {
    if (!cfg.has_design) throw ConfigError("config.design: required by the design command");
    const DesignResult r = optimize_gain(cfg.design);
    out.csv_file("objective.csv", [&](std::ostream& os) { write_objective_csv(os, r.grid); });
    return to_json(r);
}

void fail(ErrorKind kind, const std::string& message) {
    std::cerr << json{{"error", std::string(to_string(kind))}, {"message", message}}.dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quasilinear analysis of feedback loops with a bivariate saturating actuator"};
    app.require_subcommand(1);
    Options opt;
    app.add_option("--config", opt.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", opt.seed, "override the configured seed");
    app.add_option("--out", opt.out, "directory for CSV/JSON output files");
    app.add_option("--format", opt.format, "write only this file format")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--override-convergence", opt.override_convergence, "evaluate the series outside its convergence region");

    using Command = json (*)(const RunConfig&, const Options&, const Output&);
    const std::vector<std::tuple<std::string, std::string, Command>> commands = {
        {"gains", "quasilinear gains of the bivariate saturation", cmd_gains},
        {"solve", "closed-loop fixed point and existence checks", cmd_solve},
        {"simulate", "nonlinear and quasilinear time-domain simulation", cmd_simulate},
        {"montecarlo", "randomized accuracy study", cmd_montecarlo},
        {"sweep", "parameter sweeps of gains and correlation", cmd_sweep},
        {"design", "optimal proportional gain", cmd_design},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, help, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->fallthrough();
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fail(ErrorKind::Config, e.what());
        return kExitConfig;
    }

    try {
        if (opt.config_path.empty()) throw ConfigError("--config is required");
        RunConfig cfg = load_run_config(opt.config_path);
        if (opt.seed) {
            cfg.seed = *opt.seed;
            cfg.sim.seed = *opt.seed;
            cfg.study.seed = *opt.seed;
        }
        if (opt.threads) {
            cfg.threads = *opt.threads;
            cfg.study.threads = *opt.threads;
            cfg.design.threads = *opt.threads;
        }
        const Output out(cfg, opt);
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (!subs[i]->parsed()) continue;
            const json result = std::get<2>(commands[i])(cfg, opt, out);
            out.json_file(std::get<0>(commands[i]) + ".json", result);
            std::cout << to_text(result);
        }
    } catch (const Error& e) {
        fail(e.kind(), e.what());
        const bool validation = e.kind() == ErrorKind::Config || e.kind() == ErrorKind::Domain;
        return validation ? kExitConfig : kExitNumeric;
    } catch (const std::filesystem::filesystem_error& e) {
        fail(ErrorKind::Config, e.what());
        return kExitConfig;
    }
    return 0;
}
