#include "qlc/sweep.hpp"

#include "qlc/error.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace qlc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double loop_rho(LoopSpec spec, double alpha, double beta, double sigma2, const SolverOptions& solver) {
    spec.bounds = {alpha, beta};
    spec.bound_noise.sigma = sigma2;
    try {
        return fixed_point_solve(spec, solver).rho_hat;
    } catch (const Error&) {
        return kNaN;
    }
}

} // namespace

SweepTable run_sweep(const SweepRequest& req, const std::optional<LoopSpec>& loop, const SolverOptions& solver) {
    SweepTable t;
    switch (req.kind) {
    case SweepKind::N1VsSigma2:
        t.columns = {"beta", "sigma2", "N1"};
        for (double beta : req.betas) {
            for (double s2 : req.sigma2) {
                const QuasilinearGains g = gains_reduced_quadrature({req.mu1, req.mu2, req.sigma1, s2, 0.0}, {-beta, beta});
                t.rows.push_back({beta, s2, g.n1});
            }
        }
        break;
    case SweepKind::RhoVsAsymmetry:
    case SweepKind::RhoVsAsymmetryNoise: {
        if (!loop) throw ConfigError("correlation sweeps need a loop (system, bounds, signals)");
        const std::vector<double> levels =
            req.kind == SweepKind::RhoVsAsymmetry ? std::vector<double>{loop->bound_noise.sigma} : req.sigma2;
        t.columns = {"beta", "sigma2", "rho"};
        for (double s2 : levels) {
            for (double beta : req.betas) t.rows.push_back({beta, s2, loop_rho(*loop, req.alpha, beta, s2, solver)});
        }
        break;
    }
    case SweepKind::SeriesAccuracy: {
        t.columns = {"terms", "N1", "N2", "M", "N1_quadrature", "N2_quadrature", "M_quadrature"};
        const QuasilinearGains ref = gains_reduced_quadrature(req.series_stats, req.series_bounds, 1e-12);
        for (int n = 1; n <= req.max_terms; ++n) {
            const QuasilinearGains g = gains_series_truncated(req.series_stats, req.series_bounds, n);
            t.rows.push_back({static_cast<double>(n), g.n1, g.n2, g.m, ref.n1, ref.n2, ref.m});
        }
        break;
    }
    }
    return t;
}

void write_csv(std::ostream& os, const SweepTable& table) {
    os.precision(17);
    for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << table.columns[i];
    os << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << '\n';
    }
}

} // namespace qlc
