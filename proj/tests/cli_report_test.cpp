// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include "mimk/commands.hpp"
#include "mimk/errors.hpp"
#include "mimk/metrics.hpp"
#include "mimk/report.hpp"
#include "mimk/run_config.hpp"
#include "test_util.hpp"

namespace mimk {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

/// (x, y) pairs of every polyline, in document order.
std::vector<std::vector<std::pair<double, double>>> polylines(const std::string& svg) {
  std::vector<std::vector<std::pair<double, double>>> out;
  const std::regex line("<polyline[^>]*points=\"([^\"]*)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), line); it != std::sregex_iterator();
       ++it) {
    std::vector<std::pair<double, double>> pts;
    std::istringstream is((*it)[1].str());
    std::string pair;
    while (is >> pair) {
      const auto comma = pair.find(',');
      pts.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
    }
    out.push_back(pts);
  }
  return out;
}

/// Open and close tags balance as a stack; self-closing and prolog tags skip.
bool tags_balanced(const std::string& xml) {
  std::vector<std::string> stack;
  const std::regex tag("<(/?)([A-Za-z][A-Za-z0-9_-]*)[^>]*?(/?)>");
  for (auto it = std::sregex_iterator(xml.begin(), xml.end(), tag); it != std::sregex_iterator();
       ++it) {
    const auto& m = *it;
    if (m[3].length()) continue;
    if (m[1].length()) {
      if (stack.empty() || stack.back() != m[2].str()) return false;
      stack.pop_back();
    } else {
      stack.push_back(m[2].str());
    }
  }
  return stack.empty();
}

RunConfig tiny(const std::string& name) {
  RunConfig c = preset_config("tiny");
  c.train.out_dir = test::scratch_dir(name);
  return c;
}

TEST(RunConfigFile, ParsesKeysCommentsAndPreset) {
  std::istringstream is(
      "# quick run\n"
      "preset = tiny\n"
      "epochs = 5   # override\n"
      "mask_ratio = 0.75\n"
      "depths = 1,1\n");
  const RunConfig c = parse_run_config(is);
  EXPECT_EQ(c.preset, "tiny");
  EXPECT_EQ(c.model.image_size, 16u);
  EXPECT_EQ(c.train.epochs, 5u);
  EXPECT_EQ(c.train.mask_ratio, 0.75);
}

TEST(RunConfigFile, UnknownDuplicateAndMalformedKeysNameTheKey) {
  const auto expect_usage = [](const std::string& text, const std::string& key) {
    std::istringstream is(text);
    try {
      parse_run_config(is);
      FAIL() << "expected UsageError for " << text;
    } catch (const UsageError& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  };
  expect_usage("learning_rate = 1\n", "learning_rate");
  expect_usage("epochs = 3\nepochs = 4\n", "epochs");
  expect_usage("epochs = three\n", "epochs");
  expect_usage("preset = huge\n", "huge");
}

TEST(RunConfigFile, FormatParseRoundTripForEveryPreset) {
  for (const auto& name : preset_names()) {
    const RunConfig c = preset_config(name);
    const std::string text = format_run_config(c);
    std::istringstream is(text);
    EXPECT_EQ(format_run_config(parse_run_config(is)), text) << name;
    for (const auto& key : config_keys()) {
      EXPECT_NE(text.find(key + " = "), std::string::npos) << name << " " << key;
    }
  }
}

TEST(RunConfigFile, PresetsValidate) {
  for (const auto& name : preset_names()) {
    EXPECT_NO_THROW(preset_config(name).model.validate()) << name;
  }
  EXPECT_EQ(preset_config("paper").model.image_size, 192u);
  EXPECT_EQ(preset_config("desk-vit").model.encoder, EncoderKind::kViT);
}

TEST(Plot, TwoRowsOneColumnGivesOneTwoPointPolyline) {
  const std::vector<MetricsRow> rows{{1, 0.5, 0.4, 0.6, 0.7, 1.0, 1e-3},
                                     {2, 0.3, 0.2, 0.8, 0.9, 0.5, 5e-4}};
  const auto out = test::scratch_dir("plot") / "p.svg";
  emit_plot(rows, {"train_loss"}, out);
  const std::string svg = slurp(out);
  const auto lines = polylines(svg);
  ASSERT_EQ(lines.size(), 1u);
  ASSERT_EQ(lines[0].size(), 2u);
  EXPECT_LT(lines[0][0].first, lines[0][1].first);
  EXPECT_LT(lines[0][0].second, lines[0][1].second);  // loss falls, svg y grows down
  EXPECT_TRUE(tags_balanced(svg));
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
}

TEST(Plot, ConstantSeriesSitsAtMidPlot) {
  const std::string svg = line_plot_svg({1, 2, 3}, {{"flat", {0.5, 0.5, 0.5}}}, "x", "y");
  const auto lines = polylines(svg);
  ASSERT_EQ(lines.size(), 1u);
  // plot area spans y 20..350
  for (const auto& [x, y] : lines[0]) EXPECT_NEAR(y, (20.0 + 350.0) / 2.0, 0.01);
  EXPECT_NE(svg.find(">1.5</text>"), std::string::npos);  // top tick of 0.5 +- 1
}

TEST(Plot, OnePolylineAndLegendEntryPerSeries) {
  for (std::size_t k = 1; k <= 5; ++k) {
    std::vector<Series> series;
    for (std::size_t s = 0; s < k; ++s) {
      series.push_back({"s<" + std::to_string(s) + ">", {0.1 * s, 0.2, 0.3 + s}});
    }
    const std::string svg = line_plot_svg({0, 1, 2}, series, "epoch", "value");
    EXPECT_EQ(polylines(svg).size(), k);
    EXPECT_EQ(count_of(svg, "class=\"legend\""), k);
    EXPECT_NE(svg.find("s&lt;0&gt;"), std::string::npos);
    EXPECT_TRUE(tags_balanced(svg));
  }
}

TEST(Plot, RejectsTooFewRowsAndBadColumns) {
  const auto dir = test::scratch_dir("plot_bad");
  const std::vector<MetricsRow> one{{1, 0.5, 0.4, 0.6, 0.7, 1.0, 1e-3}};
  EXPECT_THROW(emit_plot(one, {"train_loss"}, dir / "a.svg"), ContractError);
  EXPECT_THROW(emit_plot({}, {"train_loss"}, dir / "a.svg"), ContractError);
  const std::vector<MetricsRow> two{one[0], one[0]};
  EXPECT_THROW(emit_plot(two, {"accuracy"}, dir / "a.svg"), ContractError);
  EXPECT_THROW(line_plot_svg({0, 1}, {{"a", {1.0}}}, "x", "y"), ShapeError);
}

TEST(PhantomCommand, WritesImagesKSpaceAndManifest) {
  const auto a = test::scratch_dir("phantom_a"), b = test::scratch_dir("phantom_b");
  std::ostringstream log;
  run_phantom(10, 32, 3, a, log);
  run_phantom(10, 32, 3, b, log);
  std::size_t images = 0, kspace = 0;
  for (const auto& e : fs::directory_iterator(a / "images")) images += e.path().extension() == ".png";
  for (const auto& e : fs::directory_iterator(a / "kspace")) kspace += e.path().extension() == ".png";
  EXPECT_EQ(images, 10u);
  EXPECT_EQ(kspace, 10u);
  const std::string manifest = slurp(a / "manifest.tsv");
  EXPECT_EQ(count_lines(manifest), 10u);
  EXPECT_EQ(manifest.rfind("images/phantom_000.png\t", 0), 0u);
  for (const auto& rel : {"manifest.tsv", "images/phantom_009.png", "kspace/kspace_004.png"}) {
    EXPECT_EQ(slurp(a / rel), slurp(b / rel)) << rel;
  }
  EXPECT_EQ(load_grayscale(a / "images/phantom_000.png").height, 32u);
}

TEST(PhantomCommand, RejectsBadArguments) {
  const auto dir = test::scratch_dir("phantom_bad");
  std::ostringstream log;
  EXPECT_THROW(run_phantom(0, 32, 1, dir, log), UsageError);
  EXPECT_THROW(run_phantom(2, 30, 1, dir, log), UsageError);
}

TEST(TrainCommand, TinyPresetWritesOneRowPerEpochReproducibly) {
  RunConfig a = tiny("train_a"), b = tiny("train_b");
  std::ostringstream log;
  run_train(a, log);
  run_train(b, log);
  const std::string csv = slurp(a.train.out_dir / "metrics.csv");
  EXPECT_EQ(count_lines(csv), 1u + 2u);
  EXPECT_EQ(csv, slurp(b.train.out_dir / "metrics.csv"));
  for (const auto& f : {"config.txt", "manifest.tsv", "loss.svg", "ssim.svg", "grad_norm.svg", "train.log"}) {
    EXPECT_TRUE(fs::exists(a.train.out_dir / f)) << f;
  }
  std::ifstream cfg(a.train.out_dir / "config.txt");
  EXPECT_EQ(format_run_config(parse_run_config(cfg)), format_run_config(a));
}

TEST(EvalCommand, IdentityAndZeroPredictorsMatchOracles) {
  const RunConfig c = tiny("eval_oracle");
  std::ostringstream out;
  EvalOptions identity;
  identity.predictor = Predictor::kIdentity;
  identity.split = "all";
  const EvalReport id = run_eval(c, identity, out);
  ASSERT_EQ(id.rows.size(), c.n_phantoms);
  EXPECT_EQ(id.mean.ssim, 1.0);
  EXPECT_EQ(id.mean.rmse, 0.0);
  EXPECT_EQ(id.stddev.ssim, 0.0);

  EvalOptions zero = identity;
  zero.predictor = Predictor::kZero;
  const EvalReport z = run_eval(c, zero, out);
  const DatasetManifest data = c.manifest();
  double mean = 0.0;
  for (const auto& row : z.rows) {
    const Image target = load_item(data.items[row.item], c.train.items);
    const double oracle = test::brute_force_ssim(Image(target.height, target.width, 0.0), target);
    EXPECT_NEAR(row.ssim, oracle, 1e-10);
    double sq = 0.0;
    for (double v : target.pixels) sq += v * v;
    EXPECT_NEAR(row.rmse, std::sqrt(sq / static_cast<double>(target.pixels.size())), 1e-12);
    mean += oracle / static_cast<double>(z.rows.size());
  }
  EXPECT_NEAR(z.mean.ssim, mean, 1e-10);
  EXPECT_EQ(count_lines(slurp(c.train.out_dir / "eval.csv")), 1u + c.n_phantoms + 2u);  // mean, std
}

TEST(EvalCommand, CheckpointErrorsAreUsageErrors) {
  const RunConfig c = tiny("eval_bad");
  std::ostringstream out;
  EvalOptions opt;
  opt.checkpoint = c.train.out_dir / "nope.ckpt";
  try {
    run_eval(c, opt, out);
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.ckpt"), std::string::npos) << e.what();
  }
  EvalOptions split;
  split.predictor = Predictor::kZero;
  split.split = "test";
  EXPECT_THROW(run_eval(c, split, out), UsageError);
  EvalOptions mask = split;
  mask.split = "val";
  mask.mask_spec = "patch ratio=0.5 seed=1 grid=5x5";
  EXPECT_THROW(run_eval(c, mask, out), UsageError);
}

TEST(EvalCommand, TrainedCheckpointScoresLikeTraining) {
  RunConfig c = tiny("eval_model");
  std::ostringstream log;
  const TrainResult trained = run_train(c, log);
  EvalOptions opt;
  opt.checkpoint = c.train.out_dir / "checkpoints" / "best.ckpt";
  ASSERT_TRUE(fs::exists(opt.checkpoint));
  const EvalReport r = run_eval(c, opt, log);
  EXPECT_FALSE(r.rows.empty());
  // the checkpoint stores f32, so agreement is to float precision
  EXPECT_NEAR(r.mean.ssim, trained.best_val_ssim, 1e-5);
}

TEST(AblationCommand, WritesComparisonAndIsReproducible) {
  RunConfig a = tiny("ablate_a"), b = tiny("ablate_b");
  std::ostringstream log;
  const AblationResult ra = run_ablation(a, log);
  const AblationResult rb = run_ablation(b, log);
  ASSERT_EQ(ra.none.size(), 2u);
  ASSERT_EQ(ra.flip_crop.size(), 2u);
  const std::string csv = slurp(a.train.out_dir / "ablation.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,ssim_none,ssim_aug");
  EXPECT_EQ(count_lines(csv), 1u + a.train.epochs);
  EXPECT_EQ(csv, slurp(b.train.out_dir / "ablation.csv"));
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(ra.none[e].val_ssim, rb.none[e].val_ssim);
    EXPECT_EQ(ra.flip_crop[e].val_ssim, rb.flip_crop[e].val_ssim);
  }
  const std::string svg = slurp(a.train.out_dir / "ablation.svg");
  EXPECT_EQ(polylines(svg).size(), 2u);
  EXPECT_NE(svg.find(">none</text>"), std::string::npos);
  EXPECT_NE(svg.find(">flip_crop</text>"), std::string::npos);
  EXPECT_TRUE(tags_balanced(svg));
}

}  // namespace
}  // namespace mimk
