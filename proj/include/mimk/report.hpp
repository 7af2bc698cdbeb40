// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mimk/metrics.hpp"

namespace mimk {

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Standalone SVG line chart: one polyline per series over shared x values.
/// Both axes are linear and padded by 5% of their data range; a range of
/// zero is widened to [v - 1, v + 1]. Axis labels and the legend are text
/// elements.
std::string line_plot_svg(const std::vector<double>& x, const std::vector<Series>& series,
                          const std::string& x_label, const std::string& y_label);

/// Column of a metrics table by CSV header name ("val_ssim", ...).
std::vector<double> metrics_column(const std::vector<MetricsRow>& rows, const std::string& column);

/// Plots the named metric columns against epoch. Needs at least two rows.
void emit_plot(const std::vector<MetricsRow>& rows, const std::vector<std::string>& columns,
               const std::filesystem::path& out_svg);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mimk
