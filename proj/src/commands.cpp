// SPDX-License-Identifier: Apache-2.0
#include "mimk/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mimk/errors.hpp"
#include "mimk/kspace.hpp"
#include "mimk/report.hpp"
#include "mimk/rng.hpp"

namespace mimk {

namespace fs = std::filesystem;

namespace {

std::string numbered(const char* stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.png", stem, i);
  return buf;
}

std::string g6(double v) { return format_g6(v); }

void write_metrics(const fs::path& path, const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  write_metrics_csv(os, rows);
  write_text_file(path, os.str());
}

void write_run_header(const RunConfig& cfg, const DatasetManifest& data) {
  fs::create_directories(cfg.train.out_dir);
  write_text_file(cfg.train.out_dir / "config.txt", format_run_config(cfg));
  std::ostringstream m;
  write_manifest(m, data);
  write_text_file(cfg.train.out_dir / "manifest.tsv", m.str());
}

}  // namespace

void run_phantom(std::size_t n, std::size_t size, std::uint64_t seed, const fs::path& out_dir,
                 std::ostream& log) {
  if (n < 1) throw UsageError("phantom count must be >= 1");
  if (!is_pow2(size)) throw UsageError("phantom size must be a power of two, got " + std::to_string(size));
  const std::vector<Split> tags =
      n >= 2 ? split_dataset(n, seed) : std::vector<Split>{Split::kTrain};
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "kspace", ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.source = DataSource::kPngDir;
  ItemOptions options;
  options.image_size = size;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t item_seed = derive_seed(seed, 0xDA7A, i);
    const Image phantom = generate_phantom(random_phantom_spec(size, item_seed));
    const Image kspace = load_item({phantom_item(size, item_seed), tags[i]}, options);
    const std::string image_name = "images/" + numbered("phantom", i);
    save_grayscale_png(out_dir / image_name, phantom);
    save_grayscale_png(out_dir / "kspace" / numbered("kspace", i), kspace);
    manifest.items.push_back({image_name, tags[i]});
  }
  std::ostringstream m;
  write_manifest(m, manifest);
  write_text_file(out_dir / "manifest.tsv", m.str());
  log << "wrote " << n << " phantoms to " << out_dir.string() << '\n';
}

TrainResult run_train(const RunConfig& cfg, std::ostream& log) {
  cfg.model.validate();
  cfg.train.validate();
  const DatasetManifest data = cfg.manifest();
  write_run_header(cfg, data);
  std::ofstream run_log(cfg.train.out_dir / "train.log", std::ios::trunc);
  SimMimModel model(cfg.model);
  std::vector<MetricsRow> rows;
  const fs::path csv = cfg.train.out_dir / "metrics.csv";
  TrainResult result;
  try {
    result = train(model, cfg.train, data, [&](const MetricsRow& r) {
      rows.push_back(r);
      write_metrics(csv, rows);
      std::ostringstream line;
      line << "epoch " << r.epoch << "/" << cfg.train.epochs << " train_loss=" << g6(r.train_loss)
           << " val_loss=" << g6(r.val_loss) << " train_ssim=" << g6(r.train_ssim)
           << " val_ssim=" << g6(r.val_ssim) << " grad_norm=" << g6(r.grad_norm)
           << " lr=" << g6(r.lr) << '\n';
      run_log << line.str() << std::flush;
      log << line.str() << std::flush;
    });
  } catch (const TrainingError& e) {
    run_log << "aborted: " << e.what() << '\n';
    throw;
  }
  write_metrics(csv, result.rows);
  if (result.rows.size() >= 2) {
    emit_plot(result.rows, {"train_loss", "val_loss"}, cfg.train.out_dir / "loss.svg");
    emit_plot(result.rows, {"train_ssim", "val_ssim"}, cfg.train.out_dir / "ssim.svg");
    emit_plot(result.rows, {"grad_norm"}, cfg.train.out_dir / "grad_norm.svg");
  }
  return result;
}

EvalReport run_eval(const RunConfig& cfg, const EvalOptions& options, std::ostream& out) {
  cfg.model.validate();
  RunConfig run = cfg;
  if (options.mask_spec) {
    const MaskSpec spec = parse_mask_spec(*options.mask_spec);
    if (const auto* p = std::get_if<PatchMaskSpec>(&spec)) {
      const std::size_t grid = run.model.image_size / run.model.patch_size;
      if (p->grid_h != grid || p->grid_w != grid) {
        throw UsageError("mask grid " + std::to_string(p->grid_h) + "x" +
                         std::to_string(p->grid_w) + " does not match the model patch grid " +
                         std::to_string(grid) + "x" + std::to_string(grid));
      }
      run.train.mask = MaskKind::kPatch;
      run.train.mask_ratio = p->ratio;
      run.train.seed = p->seed;
    } else {
      const auto& l = std::get<LineMaskSpec>(spec);
      if (l.height != run.model.image_size) {
        throw UsageError("line mask height " + std::to_string(l.height) +
                         " does not match image size " + std::to_string(run.model.image_size));
      }
      run.train.mask = MaskKind::kLine;
      run.train.line_acceleration = l.acceleration;
      run.train.line_center_fraction = l.center_fraction;
    }
  }

  const DatasetManifest data = run.manifest();
  std::vector<std::size_t> items;
  if (options.split == "train") {
    items = data.indices(Split::kTrain);
  } else if (options.split == "val") {
    items = data.indices(Split::kVal);
  } else if (options.split == "all") {
    for (std::size_t i = 0; i < data.items.size(); ++i) items.push_back(i);
  } else {
    throw UsageError("split must be train, val or all, got '" + options.split + "'");
  }
  if (items.empty()) throw UsageError("split '" + options.split + "' has no items");

  EvalReport report;
  if (options.predictor == Predictor::kModel) {
    if (!fs::exists(options.checkpoint)) {
      throw UsageError("checkpoint '" + options.checkpoint.string() + "' does not exist");
    }
    SimMimModel model(run.model);
    try {
      restore_parameters(model.parameters(), load_checkpoint(options.checkpoint));
    } catch (const ShapeError& e) {
      throw UsageError("checkpoint '" + options.checkpoint.string() +
                       "' does not fit the configured model: " + e.what());
    } catch (const FormatError& e) {
      throw UsageError("checkpoint '" + options.checkpoint.string() + "' is unreadable: " +
                       e.what());
    }
    for (const ItemScore& s : evaluate(model, run.train, data, items)) {
      report.rows.push_back({s.index, data.items[s.index].path, s.ssim, s.rmse, s.l1});
    }
  } else {
    for (auto idx : items) {
      const Image target = load_item(data.items[idx], run.train.items);
      Image pred = target;
      if (options.predictor == Predictor::kZero) pred = Image(target.height, target.width, 0.0);
      report.rows.push_back({idx, data.items[idx].path, ssim(pred, target), rmse(pred, target),
                             mean_abs_error(pred, target)});
    }
  }

  const double n = static_cast<double>(report.rows.size());
  for (const auto& r : report.rows) {
    report.mean.ssim += r.ssim / n;
    report.mean.rmse += r.rmse / n;
    report.mean.l1 += r.l1 / n;
  }
  for (const auto& r : report.rows) {
    report.stddev.ssim += (r.ssim - report.mean.ssim) * (r.ssim - report.mean.ssim) / n;
    report.stddev.rmse += (r.rmse - report.mean.rmse) * (r.rmse - report.mean.rmse) / n;
    report.stddev.l1 += (r.l1 - report.mean.l1) * (r.l1 - report.mean.l1) / n;
  }
  report.stddev.ssim = std::sqrt(report.stddev.ssim);
  report.stddev.rmse = std::sqrt(report.stddev.rmse);
  report.stddev.l1 = std::sqrt(report.stddev.l1);

  std::ostringstream csv;
  csv << "item,path,ssim,rmse,l1\n";
  for (const auto& r : report.rows) {
    csv << r.item << ',' << r.path << ',' << g6(r.ssim) << ',' << g6(r.rmse) << ',' << g6(r.l1)
        << '\n';
  }
  csv << "mean,," << g6(report.mean.ssim) << ',' << g6(report.mean.rmse) << ','
      << g6(report.mean.l1) << '\n';
  csv << "std,," << g6(report.stddev.ssim) << ',' << g6(report.stddev.rmse) << ','
      << g6(report.stddev.l1) << '\n';
  fs::create_directories(run.train.out_dir);
  write_text_file(run.train.out_dir / "eval.csv", csv.str());
  out << csv.str();
  return report;
}

AblationResult run_ablation(const RunConfig& cfg, std::ostream& log) {
  AblationResult result;
  RunConfig none = cfg, aug = cfg;
  none.train.augment = AugmentPolicy::kNone;
  none.train.out_dir = cfg.train.out_dir / "none";
  aug.train.augment = AugmentPolicy::kFlipCrop;
  aug.train.out_dir = cfg.train.out_dir / "flip_crop";
  log << "policy none\n";
  result.none = run_train(none, log).rows;
  log << "policy flip_crop\n";
  result.flip_crop = run_train(aug, log).rows;

  std::ostringstream csv;
  csv << "epoch,ssim_none,ssim_aug\n";
  std::vector<double> epochs, a, b;
  for (std::size_t i = 0; i < result.none.size(); ++i) {
    csv << result.none[i].epoch << ',' << g6(result.none[i].val_ssim) << ','
        << g6(result.flip_crop[i].val_ssim) << '\n';
    epochs.push_back(static_cast<double>(result.none[i].epoch));
    a.push_back(result.none[i].val_ssim);
    b.push_back(result.flip_crop[i].val_ssim);
  }
  write_text_file(cfg.train.out_dir / "ablation.csv", csv.str());
  if (epochs.size() >= 2) {
    write_text_file(cfg.train.out_dir / "ablation.svg",
                    line_plot_svg(epochs, {{"none", a}, {"flip_crop", b}}, "epoch", "val_ssim"));
  }
  return result;
}

void run_plot(const fs::path& csv, const std::vector<std::string>& columns,
              const fs::path& out_svg) {
  std::ifstream in(csv);
  if (!in) throw UsageError("cannot read metrics file '" + csv.string() + "'");
  emit_plot(read_metrics_csv(in), columns, out_svg);
}

}  // namespace mimk
