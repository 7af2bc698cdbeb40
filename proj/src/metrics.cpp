// SPDX-License-Identifier: Apache-2.0
#include "mimk/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "mimk/errors.hpp"

namespace mimk {

namespace {

void require_same_dims(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width));
  }
}

// Window sums of `v` over every valid k x k placement, computed with a
// running sum along rows and then along columns.
std::vector<double> box_sums(const std::vector<double>& v, std::size_t h, std::size_t w,
                             std::size_t k) {
  const std::size_t wo = w - k + 1, ho = h - k + 1;
  std::vector<double> rows(h * wo);
  for (std::size_t y = 0; y < h; ++y) {
    double acc = 0.0;
    for (std::size_t x = 0; x < k; ++x) acc += v[y * w + x];
    rows[y * wo] = acc;
    for (std::size_t x = 1; x < wo; ++x) {
      acc += v[y * w + x + k - 1] - v[y * w + x - 1];
      rows[y * wo + x] = acc;
    }
  }
  std::vector<double> out(ho * wo);
  for (std::size_t x = 0; x < wo; ++x) {
    double acc = 0.0;
    for (std::size_t y = 0; y < k; ++y) acc += rows[y * wo + x];
    out[x] = acc;
    for (std::size_t y = 1; y < ho; ++y) {
      acc += rows[(y + k - 1) * wo + x] - rows[(y - 1) * wo + x];
      out[y * wo + x] = acc;
    }
  }
  return out;
}

}  // namespace

void SsimParams::validate() const {
  if (window < 3 || window % 2 == 0) throw ContractError("SSIM window must be odd and >= 3");
  if (!(k1 > 0.0 && k2 > 0.0)) throw ContractError("SSIM k1 and k2 must be positive");
  if (!(data_range > 0.0)) throw ContractError("SSIM data range must be positive");
}

double ssim(const Image& x, const Image& y, const SsimParams& params) {
  params.validate();
  require_same_dims(x, y, "ssim");
  const std::size_t k = params.window;
  if (x.height < k || x.width < k) {
    throw ContractError("ssim: image " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                        " smaller than window " + std::to_string(k));
  }
  // Identical inputs give exactly 1 per window; skip the rounding of the
  // running sums.
  if (x.pixels == y.pixels) return 1.0;
  const std::size_t n = x.size();
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x.pixels[i] * x.pixels[i];
    yy[i] = y.pixels[i] * y.pixels[i];
    xy[i] = x.pixels[i] * y.pixels[i];
  }
  const auto sx = box_sums(x.pixels, x.height, x.width, k);
  const auto sy = box_sums(y.pixels, x.height, x.width, k);
  const auto sxx = box_sums(xx, x.height, x.width, k);
  const auto syy = box_sums(yy, x.height, x.width, k);
  const auto sxy = box_sums(xy, x.height, x.width, k);
  const double inv = 1.0 / static_cast<double>(k * k);
  const double c1 = params.c1(), c2 = params.c2();
  double total = 0.0;
  for (std::size_t i = 0; i < sx.size(); ++i) {
    const double mx = sx[i] * inv, my = sy[i] * inv;
    const double vx = sxx[i] * inv - mx * mx;
    const double vy = syy[i] * inv - my * my;
    const double cov = sxy[i] * inv - mx * my;
    total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(sx.size());
}

double rmse(const Image& pred, const Image& target) {
  require_same_dims(pred, target, "rmse");
  if (pred.size() == 0) throw ContractError("rmse of empty images");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.pixels[i] - target.pixels[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double mean_abs_error(const Image& pred, const Image& target) {
  require_same_dims(pred, target, "mean_abs_error");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred.pixels[i] - target.pixels[i]);
  return acc / static_cast<double>(pred.size());
}

double grad_norm(const ParamList& params) {
  double acc = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw ContractError("grad_norm: parameter '" + p.name + "' has no gradient");
    for (double g : p.tensor.grad()) acc += g * g;
  }
  return std::sqrt(acc);
}

std::string format_g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    os << r.epoch << ',' << format_g6(r.train_loss) << ',' << format_g6(r.val_loss) << ','
       << format_g6(r.train_ssim) << ',' << format_g6(r.val_ssim) << ',' << format_g6(r.grad_norm)
       << ',' << format_g6(r.lr) << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) {
    throw FormatError("metrics CSV must start with '" + std::string(kMetricsHeader) + "'");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    MetricsRow r;
    char c1, c2, c3, c4, c5, c6;
    if (!(ls >> r.epoch >> c1 >> r.train_loss >> c2 >> r.val_loss >> c3 >> r.train_ssim >> c4 >>
          r.val_ssim >> c5 >> r.grad_norm >> c6 >> r.lr)) {
      throw FormatError("bad metrics row: " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace mimk
