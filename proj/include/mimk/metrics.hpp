// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mimk/image.hpp"
#include "mimk/layers.hpp"

namespace mimk {

struct SsimParams {
  std::size_t window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;

  double c1() const { return (k1 * data_range) * (k1 * data_range); }
  double c2() const { return (k2 * data_range) * (k2 * data_range); }
  void validate() const;
};

/// Mean SSIM over every fully contained window position (no padding), with
/// uniform window weights and population statistics.
double ssim(const Image& x, const Image& y, const SsimParams& params = {});

/// sqrt(sum (pred - target)^2 / n)
double rmse(const Image& pred, const Image& target);

/// Mean absolute error over all pixels.
double mean_abs_error(const Image& pred, const Image& target);

/// Global L2 norm over the gradients of every listed parameter. Throws if
/// one of them has no gradient.
double grad_norm(const ParamList& params);

struct MetricsRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_ssim = 0.0;
  double val_ssim = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,train_loss,val_loss,train_ssim,val_ssim,grad_norm,lr";

/// Writes the header and one line per row, numbers with 6 significant digits.
void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& is);

/// %.6g formatting shared by every CSV the tools emit.
std::string format_g6(double v);

}  // namespace mimk
