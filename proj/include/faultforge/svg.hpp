#pragma once

#include <string>

#include "faultforge/analysis.hpp"

namespace ff {

/// Renders sweep curves (fault current, faulted-bus voltage, inverter P/Q
/// versus fault resistance, log-x) as a standalone SVG document. Infeasible
/// points are marked along the top edge of each panel.
std::string sweep_to_svg(const SweepResult& result, const std::string& title);

}  // namespace ff
