#pragma once

#include "qlc/quasilinear_loop.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qlc {

enum class SweepKind { N1VsSigma2, RhoVsAsymmetry, RhoVsAsymmetryNoise, SeriesAccuracy };

struct SweepRequest {
    SweepKind kind = SweepKind::N1VsSigma2;
    std::vector<double> betas{1.0, 2.0, 3.0};
    std::vector<double> sigma2{0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0};
    // N1 vs sigma2: static inputs with bounds (-beta, beta).
    double mu1 = 0.0, sigma1 = 1.0, mu2 = 0.0;
    // Correlation sweeps: loop with lower bound fixed at alpha.
    double alpha = -1.0;
    // Series accuracy: partial sums against quadrature.
    BivariateStats series_stats{1.0, 1.0, 0.8, 0.7, 0.25};
    SatBounds series_bounds{-3.0, 2.0};
    int max_terms = 30;
};

struct SweepTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

/// Correlation sweeps need `loop` (its bounds and bound-noise sigma are
/// overridden per point); failed solves are rows with NaN values.
SweepTable run_sweep(const SweepRequest& request, const std::optional<LoopSpec>& loop = std::nullopt,
                     const SolverOptions& solver = {});

void write_csv(std::ostream& os, const SweepTable& table);

} // namespace qlc
