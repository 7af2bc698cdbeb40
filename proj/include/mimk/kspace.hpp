// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mimk/image.hpp"

namespace mimk {

/// Complex 2-D grid holding a k-space or a complex image. Real and imaginary
/// parts are stored as separate row-major planes.
struct ComplexGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> re;
  std::vector<double> im;

  ComplexGrid() = default;
  ComplexGrid(std::size_t h, std::size_t w) : height(h), width(w), re(h * w, 0.0), im(h * w, 0.0) {}

  static ComplexGrid from_real(const Image& img);

  std::complex<double> at(std::size_t y, std::size_t x) const {
    return {re[y * width + x], im[y * width + x]};
  }
  void set(std::size_t y, std::size_t x, std::complex<double> v) {
    re[y * width + x] = v.real();
    im[y * width + x] = v.imag();
  }
  double energy() const;

  friend bool operator==(const ComplexGrid&, const ComplexGrid&) = default;
};

/// Unitary 2-D DFT (1/sqrt(N) per direction). Both dimensions must be powers
/// of two.
ComplexGrid fft2(const ComplexGrid& img);
ComplexGrid ifft2(const ComplexGrid& k);

/// Moves the zero frequency to (H/2, W/2); ifftshift undoes it.
ComplexGrid fftshift(const ComplexGrid& k);
ComplexGrid ifftshift(const ComplexGrid& k);

/// Centered zero-fill up to the next power of two in each dimension.
Image pad_to_pow2(const Image& img);

bool is_pow2(std::size_t n);

struct Ellipse {
  double cx = 0.0;  // center, pixel units
  double cy = 0.0;
  double a = 1.0;  // semi-axes, pixel units
  double b = 1.0;
  double angle = 0.0;  // radians
  double intensity = 1.0;
};

struct PhantomSpec {
  std::size_t size = 64;
  std::vector<Ellipse> ellipses;
  std::uint64_t seed = 0;
};

/// Additive ellipse phantom clamped to [0,1]. A pixel belongs to an ellipse
/// when its center satisfies the ellipse inequality.
Image generate_phantom(const PhantomSpec& spec);

/// A randomized knee-like layout (outer tissue, two bone condyles, joint gap,
/// small inclusions), deterministic in (size, seed).
PhantomSpec random_phantom_spec(std::size_t size, std::uint64_t seed);

using CoilSet = std::vector<ComplexGrid>;

struct CoilOptions {
  /// Gaussian width as a fraction of the image size; infinity gives uniform
  /// sensitivity.
  double width_fraction = 0.6;
  bool random_phase = true;
};

/// Multiplies `img` by one smooth complex sensitivity per coil. Coil centers
/// sit at equally spaced positions on the image border; each map has unit
/// peak magnitude.
CoilSet simulate_coils(const Image& img, std::size_t n_coils, std::uint64_t seed,
                       const CoilOptions& options = {});

/// out = sqrt(sum_c |coil_c|^2) per pixel.
Image rss_combine(const CoilSet& coils);

/// log(1 + |k|) scaled so the maximum is 1; an all-zero grid stays zero.
Image to_log_magnitude(const ComplexGrid& k);

/// Text form: "H W" then H*W lines "re im" with 17 significant digits.
void write_grid(std::ostream& os, const ComplexGrid& g);
ComplexGrid read_grid(std::istream& is);

/// Fully sampled k-space of an image, zero frequency centered.
ComplexGrid centered_kspace(const Image& img);

}  // namespace mimk
