#pragma once

#include <string>
#include <vector>

#include "chronotopic/common.hpp"

namespace chronotopic {

/// One polyline of a line chart.
struct ChartSeries {
  std::string label;
  std::vector<Real> values;  // one per x position
};

/// Fixed-geometry SVG line chart. Format contract:
///   - root: width="640" height="360" viewBox="0 0 640 360"
///   - plot area x in [56, 616], y in [20, 318]; y axis from 0 up to the
///     value maximum rounded to a 1/2/5 step, five ticks
///   - one <polyline> per series, palette cycling, legend top-right
///   - all coordinates rendered with two decimals, so output is
///     byte-deterministic for identical input
/// Throws ParameterError when no series are given, a series length differs
/// from the label count, or any value is negative/non-finite.
std::string line_chart(const std::string& title, const std::vector<std::string>& x_labels,
                       const std::vector<ChartSeries>& series);

}  // namespace chronotopic
