#pragma once

#include "qlc/design.hpp"
#include "qlc/sim.hpp"
#include "qlc/sweep.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qlc {

enum class GainsMethodChoice { Reduced, Raw, Series, MonteCarlo, All };

struct GainsRequest {
    BivariateStats stats;
    SatBounds bounds;
    GainsMethodChoice method = GainsMethodChoice::All;
    double quad_tol = 1e-10;
    specfun::SeriesOptions series;
    std::size_t mc_samples = 1000000;
};

/// Everything a run may need. Sections absent from the document keep their
/// defaults; `has_*` records which were given.
struct RunConfig {
    std::optional<LoopSpec> loop;  // needs system + bounds + signals
    std::optional<GainsRequest> gains;
    SolverOptions solver;
    SimConfig sim;
    StudyConfig study;
    SweepRequest sweep;
    DesignProblem design;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string output_directory;  // empty: no files written
    std::vector<std::string> formats{"json", "csv"};
    bool has_study = false, has_sweep = false, has_design = false;
};

/// Parses and validates a run configuration. Unknown keys, wrong types and
/// invalid values raise ConfigError naming the offending path.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

/// Transfer function {"num": [...], "den": [...]}, state space
/// {"A", "B", "C", "D"} or a bare number (static gain).
StateSpace parse_system(const nlohmann::json& node, const std::string& where);

nlohmann::json to_json(const QuasilinearGains& g);
nlohmann::json to_json(const LoopSolution& s);
nlohmann::json to_json(const ExistenceReport& r);
nlohmann::json to_json(const Moments& m);
nlohmann::json to_json(const SimResult& r);
nlohmann::json to_json(const MonteCarloReport& r);
nlohmann::json to_json(const DesignResult& r);

} // namespace qlc
