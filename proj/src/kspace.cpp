// SPDX-License-Identifier: Apache-2.0
#include "mimk/kspace.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>

#include "mimk/rng.hpp"

namespace mimk {

namespace {

using cd = std::complex<double>;

// In-place iterative radix-2 transform of n = data.size() points, scaled by
// 1/sqrt(n). sign = -1 forward, +1 inverse.
void fft1d(std::vector<cd>& data, int sign) {
  const std::size_t n = data.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    std::vector<cd> twiddle(half);
    for (std::size_t k = 0; k < half; ++k) {
      twiddle[k] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                                       static_cast<double>(len));
    }
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cd u = data[start + k];
        const cd v = data[start + k + half] * twiddle[k];
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& v : data) v *= norm;
}

ComplexGrid transform(const ComplexGrid& in, int sign) {
  if (!is_pow2(in.height) || !is_pow2(in.width)) {
    throw ContractError("fft2 needs power-of-two dimensions, got " + std::to_string(in.height) +
                        "x" + std::to_string(in.width));
  }
  ComplexGrid out = in;
  const std::size_t h = in.height, w = in.width;
  std::vector<cd> line(w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) line[x] = out.at(y, x);
    fft1d(line, sign);
    for (std::size_t x = 0; x < w; ++x) out.set(y, x, line[x]);
  }
  line.resize(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) line[y] = out.at(y, x);
    fft1d(line, sign);
    for (std::size_t y = 0; y < h; ++y) out.set(y, x, line[y]);
  }
  return out;
}

ComplexGrid roll(const ComplexGrid& g, std::size_t dy, std::size_t dx) {
  ComplexGrid out(g.height, g.width);
  for (std::size_t y = 0; y < g.height; ++y) {
    for (std::size_t x = 0; x < g.width; ++x) {
      const std::size_t ty = (y + dy) % g.height, tx = (x + dx) % g.width;
      out.re[ty * g.width + tx] = g.re[y * g.width + x];
      out.im[ty * g.width + tx] = g.im[y * g.width + x];
    }
  }
  return out;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

ComplexGrid ComplexGrid::from_real(const Image& img) {
  ComplexGrid g(img.height, img.width);
  g.re = img.pixels;
  return g;
}

double ComplexGrid::energy() const {
  double e = 0.0;
  for (std::size_t i = 0; i < re.size(); ++i) e += re[i] * re[i] + im[i] * im[i];
  return e;
}

ComplexGrid fft2(const ComplexGrid& img) { return transform(img, -1); }
ComplexGrid ifft2(const ComplexGrid& k) { return transform(k, +1); }

ComplexGrid fftshift(const ComplexGrid& k) { return roll(k, k.height / 2, k.width / 2); }

ComplexGrid ifftshift(const ComplexGrid& k) {
  return roll(k, (k.height + 1) / 2, (k.width + 1) / 2);
}

Image pad_to_pow2(const Image& img) {
  const std::size_t h = next_pow2(img.height), w = next_pow2(img.width);
  if (h == img.height && w == img.width) return img;
  Image out(h, w, 0.0);
  const std::size_t oy = (h - img.height) / 2, ox = (w - img.width) / 2;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) out(y + oy, x + ox) = img(y, x);
  }
  return out;
}

Image generate_phantom(const PhantomSpec& spec) {
  if (spec.size < 16) throw ContractError("phantom size must be at least 16");
  Image img(spec.size, spec.size, 0.0);
  for (const auto& e : spec.ellipses) {
    const double c = std::cos(e.angle), s = std::sin(e.angle);
    for (std::size_t y = 0; y < spec.size; ++y) {
      for (std::size_t x = 0; x < spec.size; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - e.cx;
        const double dy = static_cast<double>(y) + 0.5 - e.cy;
        const double u = (dx * c + dy * s) / e.a;
        const double v = (-dx * s + dy * c) / e.b;
        if (u * u + v * v <= 1.0) img(y, x) += e.intensity;
      }
    }
  }
  for (auto& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
  return img;
}

PhantomSpec random_phantom_spec(std::size_t size, std::uint64_t seed) {
  SplitMix64 rng(derive_seed(seed, 0x9A4770u));
  const double n = static_cast<double>(size);
  auto jitter = [&](double v, double rel) { return v * (1.0 + rng.uniform(-rel, rel)); };
  PhantomSpec spec;
  spec.size = size;
  spec.seed = seed;
  const double cx = n * rng.uniform(0.46, 0.54);
  const double cy = n * rng.uniform(0.46, 0.54);
  const double tilt = rng.uniform(-0.25, 0.25);
  // soft tissue envelope
  spec.ellipses.push_back({cx, cy, jitter(0.36 * n, 0.1), jitter(0.44 * n, 0.06), tilt,
                           rng.uniform(0.25, 0.4)});
  // upper and lower bone
  const double gap = n * rng.uniform(0.03, 0.06);
  const double bone_b = jitter(0.16 * n, 0.15);
  spec.ellipses.push_back({cx + n * rng.uniform(-0.03, 0.03), cy - gap - bone_b,
                           jitter(0.24 * n, 0.12), bone_b, tilt + rng.uniform(-0.15, 0.15),
                           rng.uniform(0.35, 0.5)});
  spec.ellipses.push_back({cx + n * rng.uniform(-0.03, 0.03), cy + gap + bone_b,
                           jitter(0.22 * n, 0.12), jitter(0.14 * n, 0.15),
                           tilt + rng.uniform(-0.15, 0.15), rng.uniform(0.3, 0.45)});
  // marrow inside each bone
  for (int side : {-1, 1}) {
    const auto& bone = spec.ellipses[side < 0 ? 1 : 2];
    spec.ellipses.push_back({bone.cx, bone.cy, bone.a * 0.7, bone.b * 0.6, bone.angle,
                             rng.uniform(0.1, 0.2)});
  }
  const int inclusions = 2 + static_cast<int>(rng.below(3));
  for (int i = 0; i < inclusions; ++i) {
    spec.ellipses.push_back({cx + n * rng.uniform(-0.25, 0.25), cy + n * rng.uniform(-0.3, 0.3),
                             n * rng.uniform(0.02, 0.06), n * rng.uniform(0.02, 0.06),
                             rng.uniform(0.0, std::numbers::pi), rng.uniform(-0.2, 0.2)});
  }
  return spec;
}

CoilSet simulate_coils(const Image& img, std::size_t n_coils, std::uint64_t seed,
                       const CoilOptions& options) {
  if (n_coils < 1) throw ContractError("simulate_coils needs at least one coil");
  SplitMix64 rng(derive_seed(seed, 0xC011u));
  const double h = static_cast<double>(img.height), w = static_cast<double>(img.width);
  const double sigma = options.width_fraction * std::max(h, w);
  const double offset = rng.uniform(0.0, 2.0 * std::numbers::pi);
  CoilSet coils;
  coils.reserve(n_coils);
  for (std::size_t c = 0; c < n_coils; ++c) {
    const double theta = offset + 2.0 * std::numbers::pi * static_cast<double>(c) /
                                      static_cast<double>(n_coils);
    const double ux = std::cos(theta), uy = std::sin(theta);
    // walk from the center along theta until the border is reached
    const double reach = 0.5 / std::max(std::abs(ux), std::abs(uy));
    const double px = w * (0.5 + ux * reach), py = h * (0.5 + uy * reach);
    const double phase0 = options.random_phase ? rng.uniform(0.0, 2.0 * std::numbers::pi) : 0.0;
    const double ramp = options.random_phase ? rng.uniform(-1.0, 1.0) : 0.0;
    ComplexGrid coil(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - px;
        const double dy = static_cast<double>(y) + 0.5 - py;
        const double mag = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        const double phase = phase0 + ramp * std::numbers::pi * (static_cast<double>(x) / w - 0.5);
        coil.set(y, x, img(y, x) * std::polar(mag, phase));
      }
    }
    coils.push_back(std::move(coil));
  }
  return coils;
}

Image rss_combine(const CoilSet& coils) {
  if (coils.empty()) throw ContractError("rss_combine needs a nonempty coil set");
  const std::size_t h = coils.front().height, w = coils.front().width;
  for (const auto& c : coils) {
    if (c.height != h || c.width != w) throw ShapeError("rss_combine: coil dimensions differ");
  }
  Image out(h, w, 0.0);
  for (std::size_t p = 0; p < h * w; ++p) {
    double acc = 0.0;
    for (const auto& c : coils) acc += c.re[p] * c.re[p] + c.im[p] * c.im[p];
    out.pixels[p] = std::sqrt(acc);
  }
  return out;
}

Image to_log_magnitude(const ComplexGrid& k) {
  Image out(k.height, k.width, 0.0);
  double mx = 0.0;
  for (std::size_t p = 0; p < out.size(); ++p) {
    out.pixels[p] = std::log1p(std::hypot(k.re[p], k.im[p]));
    mx = std::max(mx, out.pixels[p]);
  }
  if (mx > 0.0) {
    for (auto& v : out.pixels) v /= mx;
  }
  return out;
}

void write_grid(std::ostream& os, const ComplexGrid& g) {
  os << g.height << ' ' << g.width << '\n' << std::setprecision(17);
  for (std::size_t p = 0; p < g.re.size(); ++p) os << g.re[p] << ' ' << g.im[p] << '\n';
}

ComplexGrid read_grid(std::istream& is) {
  std::size_t h = 0, w = 0;
  if (!(is >> h >> w) || h == 0 || w == 0) throw FormatError("grid header must be 'H W'");
  ComplexGrid g(h, w);
  for (std::size_t p = 0; p < h * w; ++p) {
    if (!(is >> g.re[p] >> g.im[p])) {
      throw FormatError("grid ends after " + std::to_string(p) + " of " + std::to_string(h * w) +
                        " entries");
    }
  }
  return g;
}

ComplexGrid centered_kspace(const Image& img) {
  return fftshift(fft2(ComplexGrid::from_real(pad_to_pow2(img))));
}

}  // namespace mimk
