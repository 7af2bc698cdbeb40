// SPDX-License-Identifier: Apache-2.0
#include "mimk/masking.hpp"

#include <cmath>
#include <sstream>

#include "mimk/errors.hpp"
#include "mimk/ops.hpp"
#include "mimk/rng.hpp"

namespace mimk {

std::size_t PatchMask::masked_count() const {
  std::size_t n = 0;
  for (auto f : flags) n += f ? 1 : 0;
  return n;
}

std::vector<double> PatchMask::pixel_weights(std::size_t height, std::size_t width) const {
  if (grid_h == 0 || grid_w == 0 || height % grid_h != 0 || width % grid_w != 0) {
    throw ContractError("patch grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                        " does not tile a " + std::to_string(height) + "x" +
                        std::to_string(width) + " image");
  }
  const std::size_t ph = height / grid_h, pw = width / grid_w;
  std::vector<double> w(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) w[y * width + x] = masked(y / ph, x / pw) ? 1.0 : 0.0;
  }
  return w;
}

PatchMask random_patch_mask(std::size_t grid_h, std::size_t grid_w, double ratio,
                            std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw ContractError("mask ratio must lie in [0,1], got " + std::to_string(ratio));
  }
  if (grid_h == 0 || grid_w == 0) throw ContractError("mask grid must be nonempty");
  const std::size_t n = grid_h * grid_w;
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  SplitMix64 rng(seed);
  const auto order = shuffled_indices(n, rng);
  PatchMask mask{grid_h, grid_w, std::vector<std::uint8_t>(n, 0), ratio, seed};
  for (std::size_t i = 0; i < count; ++i) mask.flags[order[i]] = 1;
  return mask;
}

Tensor apply_mask_tokens(const Tensor& tokens, const PatchMask& mask, const Tensor& mask_token) {
  if (tokens.rank() != 2 || tokens.dim(0) != mask.grid_h * mask.grid_w) {
    throw ContractError("apply_mask_tokens: tokens " + shape_str(tokens.shape()) +
                        " do not match a " + std::to_string(mask.grid_h) + "x" +
                        std::to_string(mask.grid_w) + " mask");
  }
  return replace_rows(tokens, mask.flags, mask_token);
}

LineMask cartesian_line_mask(std::size_t height, std::size_t acceleration, double center_fraction) {
  if (acceleration < 1) throw ContractError("line mask acceleration must be >= 1");
  if (!(center_fraction >= 0.0 && center_fraction <= 1.0)) {
    throw ContractError("line mask center fraction must lie in [0,1]");
  }
  LineMask mask{height, {}, acceleration, center_fraction};
  const auto band = static_cast<std::size_t>(std::floor(static_cast<double>(height) * center_fraction));
  const std::size_t start = (height - band) / 2;
  for (std::size_t r = start; r < start + band; ++r) mask.kept_rows.insert(r);
  for (std::size_t r = 0; r < height; r += acceleration) mask.kept_rows.insert(r);
  return mask;
}

ComplexGrid apply_line_mask(const ComplexGrid& k, const LineMask& mask) {
  if (k.height != mask.height) {
    throw ContractError("line mask height " + std::to_string(mask.height) +
                        " does not match k-space height " + std::to_string(k.height));
  }
  ComplexGrid out(k.height, k.width);
  for (auto r : mask.kept_rows) {
    for (std::size_t x = 0; x < k.width; ++x) {
      out.re[r * k.width + x] = k.re[r * k.width + x];
      out.im[r * k.width + x] = k.im[r * k.width + x];
    }
  }
  return out;
}

std::string format_mask_spec(const MaskSpec& spec) {
  std::ostringstream os;
  if (const auto* p = std::get_if<PatchMaskSpec>(&spec)) {
    os << "patch ratio=" << p->ratio << " seed=" << p->seed << " grid=" << p->grid_h << 'x'
       << p->grid_w;
  } else {
    const auto& l = std::get<LineMaskSpec>(spec);
    os << "line h=" << l.height << " acc=" << l.acceleration << " cf=" << l.center_fraction;
  }
  return os.str();
}

MaskSpec parse_mask_spec(const std::string& line) {
  std::istringstream is(line);
  std::string kind;
  is >> kind;
  auto bad = [&](const std::string& why) {
    return FormatError("mask spec '" + line + "': " + why);
  };
  auto value_of = [&](const std::string& token, const std::string& key) -> std::string {
    if (token.rfind(key + "=", 0) != 0) throw bad("expected " + key + "=...");
    return token.substr(key.size() + 1);
  };
  std::string a, b, c, extra;
  if (!(is >> a >> b >> c) || (is >> extra)) throw bad("expected exactly three fields");
  try {
    if (kind == "patch") {
      PatchMaskSpec p;
      p.ratio = std::stod(value_of(a, "ratio"));
      p.seed = std::stoull(value_of(b, "seed"));
      const std::string grid = value_of(c, "grid");
      const auto x = grid.find('x');
      if (x == std::string::npos) throw bad("grid must be HxW");
      p.grid_h = std::stoul(grid.substr(0, x));
      p.grid_w = std::stoul(grid.substr(x + 1));
      return p;
    }
    if (kind == "line") {
      LineMaskSpec l;
      l.height = std::stoul(value_of(a, "h"));
      l.acceleration = std::stoul(value_of(b, "acc"));
      l.center_fraction = std::stod(value_of(c, "cf"));
      return l;
    }
  } catch (const std::logic_error&) {
    throw bad("unparseable number");
  }
  throw bad("kind must be 'patch' or 'line'");
}

}  // namespace mimk
