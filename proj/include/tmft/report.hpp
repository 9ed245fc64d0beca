#pragma once

#include "tmft/cka.hpp"
#include "tmft/sweep.hpp"

#include <string>
#include <vector>

namespace tmft {

// Aggregate table, columns Layer, Params, Val, Test (mean/std per cell).
std::string aggregates_csv(const SweepResult& sweep);

// Best-layer overview rows for a set of sweeps, Markdown.
std::string overview_markdown(const std::vector<SweepResult>& sweeps);

// Per-layer mean line with a +-1 std shaded band.
std::string layer_plot_svg(const SweepResult& sweep);

std::string cka_plot_svg(const CKACurve& curve);

// Best-validation-layer point per sweep plus the designated last-layer point
// when it differs. `exclude` drops points by id (e.g. a known outlier).
std::vector<ParetoPoint> pareto_points(const std::vector<SweepResult>& sweeps,
                                       bool include_last_layer,
                                       const std::vector<std::string>& exclude = {});

// Columns: model, layer, params, test_spearman, on_front.
std::string pareto_csv(const std::vector<ParetoPoint>& points,
                       const std::vector<ParetoPoint>& front);

// Scatter with the front polyline.
std::string pareto_plot_svg(const std::vector<ParetoPoint>& points,
                            const std::vector<ParetoPoint>& front);

}  // namespace tmft
