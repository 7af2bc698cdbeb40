// SPDX-License-Identifier: Apache-2.0
#include "mimk/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "mimk/errors.hpp"

namespace mimk {

namespace {

constexpr double kWidth = 640.0, kHeight = 400.0;
constexpr double kLeft = 70.0, kRight = 150.0, kTop = 20.0, kBottom = 50.0;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#e377c2"};

struct Range {
  double lo, hi;
};

Range padded_range(double lo, double hi) {
  if (hi == lo) return {lo - 1.0, hi + 1.0};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string line_plot_svg(const std::vector<double>& x, const std::vector<Series>& series,
                          const std::string& x_label, const std::string& y_label) {
  if (x.size() < 2) throw ContractError("a line plot needs at least two points");
  if (series.empty()) throw ContractError("a line plot needs at least one series");
  double ylo = series.front().values.empty() ? 0.0 : series.front().values.front();
  double yhi = ylo;
  for (const auto& s : series) {
    if (s.values.size() != x.size()) {
      throw ShapeError("series '" + s.name + "' has " + std::to_string(s.values.size()) +
                       " values for " + std::to_string(x.size()) + " x positions");
    }
    for (double v : s.values) {
      ylo = std::min(ylo, v);
      yhi = std::max(yhi, v);
    }
  }
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const Range xr = padded_range(*xmin, *xmax), yr = padded_range(ylo, yhi);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double v) { return kTop + (yr.hi - v) / (yr.hi - yr.lo) * ph; };

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" fill=\"white\"/>\n";
  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) +
         "\" height=\"" + num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = xr.lo + (xr.hi - xr.lo) * t / 4.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * t / 4.0;
    svg += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(kTop + ph + 16) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + tick(xv) + "</text>\n";
    svg += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(py(yv) + 4) +
           "\" font-size=\"11\" text-anchor=\"end\">" + tick(yv) + "</text>\n";
  }
  svg += "<text class=\"x-label\" x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 10) +
         "\" font-size=\"13\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  svg += "<text class=\"y-label\" x=\"16\" y=\"" + num(kTop + ph / 2) +
         "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num(kTop + ph / 2) + ")\">" + escape(y_label) + "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (i) svg += ' ';
      svg += num(px(x[i])) + "," + num(py(series[s].values[i]));
    }
    svg += "\"/>\n";
    const double ly = kTop + 14 + 18.0 * static_cast<double>(s);
    svg += "<line x1=\"" + num(kWidth - kRight + 10) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
           num(kWidth - kRight + 30) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text class=\"legend\" x=\"" + num(kWidth - kRight + 36) + "\" y=\"" + num(ly) +
           "\" font-size=\"12\">" + escape(series[s].name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<double> metrics_column(const std::vector<MetricsRow>& rows, const std::string& column) {
  double MetricsRow::*field = nullptr;
  if (column == "train_loss") field = &MetricsRow::train_loss;
  else if (column == "val_loss") field = &MetricsRow::val_loss;
  else if (column == "train_ssim") field = &MetricsRow::train_ssim;
  else if (column == "val_ssim") field = &MetricsRow::val_ssim;
  else if (column == "grad_norm") field = &MetricsRow::grad_norm;
  else if (column == "lr") field = &MetricsRow::lr;
  std::vector<double> out;
  out.reserve(rows.size());
  if (column == "epoch") {
    for (const auto& r : rows) out.push_back(static_cast<double>(r.epoch));
    return out;
  }
  if (!field) throw ContractError("unknown metrics column '" + column + "'");
  for (const auto& r : rows) out.push_back(r.*field);
  return out;
}

void emit_plot(const std::vector<MetricsRow>& rows, const std::vector<std::string>& columns,
               const std::filesystem::path& out_svg) {
  if (rows.size() < 2) {
    throw ContractError("plot needs at least 2 metrics rows, got " + std::to_string(rows.size()));
  }
  if (columns.empty()) throw ContractError("plot needs at least one column");
  std::vector<Series> series;
  for (const auto& c : columns) series.push_back({c, metrics_column(rows, c)});
  write_text_file(out_svg, line_plot_svg(metrics_column(rows, "epoch"), series, "epoch", "value"));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace mimk
