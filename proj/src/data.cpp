// SPDX-License-Identifier: Apache-2.0
#include "mimk/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "mimk/errors.hpp"
#include "mimk/kspace.hpp"
#include "mimk/rng.hpp"

namespace mimk {

namespace fs = std::filesystem;

Image load_grayscale(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw IoError("unsupported bit depth in '" + path.string() + "' (only 8-bit PNG)");
  }
  const bool color = (image.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_COLORMAP)) != 0;
  // Reading with an alpha channel keeps libpng from compositing.
  image.format = color ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
  const std::size_t channels = color ? 4 : 2;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  Image out(image.height, image.width, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = buffer[i * channels] / 255.0;
  return out;
}

void save_png_bytes(const fs::path& path, std::size_t height, std::size_t width, int channels,
                    const std::vector<std::uint8_t>& bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  switch (channels) {
    case 1: image.format = PNG_FORMAT_GRAY; break;
    case 3: image.format = PNG_FORMAT_RGB; break;
    case 4: image.format = PNG_FORMAT_RGBA; break;
    default: throw ContractError("PNG channels must be 1, 3 or 4");
  }
  if (bytes.size() != height * width * static_cast<std::size_t>(channels)) {
    throw ShapeError("PNG byte buffer does not match dimensions");
  }
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
  }
}

void save_grayscale_png(const fs::path& path, const Image& img) {
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  }
  save_png_bytes(path, img.height, img.width, 1, bytes);
}

Image center_crop(const Image& img, std::size_t size) {
  if (img.height < size || img.width < size) {
    throw ContractError("center_crop: " + std::to_string(img.height) + "x" +
                        std::to_string(img.width) + " is smaller than " + std::to_string(size));
  }
  const std::size_t oy = (img.height - size) / 2, ox = (img.width - size) / 2;
  Image out(size, size, 0.0);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) out(y, x) = img(y + oy, x + ox);
  }
  return out;
}

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
  Image out(height, width, 0.0);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double tx = fx - static_cast<double>(x0);
      const double top = img(y0, x0) * (1.0 - tx) + img(y0, x1) * tx;
      const double bottom = img(y1, x0) * (1.0 - tx) + img(y1, x1) * tx;
      out(y, x) = top * (1.0 - ty) + bottom * ty;
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width, 0.0);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) out(y, x) = img(y, img.width - 1 - x);
  }
  return out;
}

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "val"; }

std::vector<Split> split_dataset(std::size_t n_items, std::uint64_t seed) {
  if (n_items < 2) throw ContractError("split_dataset needs at least 2 items");
  SplitMix64 rng(seed);
  const auto order = shuffled_indices(n_items, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n_items)));
  std::vector<Split> tags(n_items, Split::kVal);
  for (std::size_t i = 0; i < n_train; ++i) tags[order[i]] = Split::kTrain;
  return tags;
}

AugmentPolicy parse_augment_policy(const std::string& name) {
  if (name == "none") return AugmentPolicy::kNone;
  if (name == "flip_crop") return AugmentPolicy::kFlipCrop;
  if (name == "normalize") return AugmentPolicy::kNormalize;
  throw ContractError("unknown augmentation policy '" + name + "'");
}

const char* augment_policy_name(AugmentPolicy p) {
  switch (p) {
    case AugmentPolicy::kNone: return "none";
    case AugmentPolicy::kFlipCrop: return "flip_crop";
    case AugmentPolicy::kNormalize: return "normalize";
  }
  return "none";
}

Image augment(const Image& img, AugmentPolicy policy, std::uint64_t seed) {
  switch (policy) {
    case AugmentPolicy::kNone:
      return img;
    case AugmentPolicy::kFlipCrop: {
      SplitMix64 rng(seed);
      Image out = rng.uniform() < 0.5 ? flip_horizontal(img) : img;
      const auto ch = static_cast<std::size_t>(std::llround(0.875 * static_cast<double>(img.height)));
      const auto cw = static_cast<std::size_t>(std::llround(0.875 * static_cast<double>(img.width)));
      const auto oy = static_cast<std::size_t>(rng.below(img.height - ch + 1));
      const auto ox = static_cast<std::size_t>(rng.below(img.width - cw + 1));
      Image crop(ch, cw, 0.0);
      for (std::size_t y = 0; y < ch; ++y) {
        for (std::size_t x = 0; x < cw; ++x) crop(y, x) = out(y + oy, x + ox);
      }
      return resize_bilinear(crop, img.height, img.width);
    }
    case AugmentPolicy::kNormalize: {
      const double n = static_cast<double>(img.size());
      double mu = 0.0;
      for (double v : img.pixels) mu += v;
      mu /= n;
      double var = 0.0;
      for (double v : img.pixels) var += (v - mu) * (v - mu);
      const double sd = std::sqrt(var / n);
      if (sd == 0.0) return Image(img.height, img.width, 0.0);
      Image out = img;
      for (auto& v : out.pixels) v = (v - mu) / sd;
      const auto [lo, hi] = std::minmax_element(out.pixels.begin(), out.pixels.end());
      const double a = *lo, b = *hi;
      for (auto& v : out.pixels) v = (v - a) / (b - a);
      return out;
    }
  }
  return img;
}

std::vector<std::size_t> DatasetManifest::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].split == s) out.push_back(i);
  }
  return out;
}

std::string phantom_item(std::size_t size, std::uint64_t seed) {
  return "phantom:size=" + std::to_string(size) + ":seed=" + std::to_string(seed);
}

DatasetManifest phantom_manifest(std::size_t n, std::size_t size, std::uint64_t seed) {
  DatasetManifest m;
  m.seed = seed;
  m.source = DataSource::kPhantom;
  const auto tags = split_dataset(n, seed);
  for (std::size_t i = 0; i < n; ++i) {
    m.items.push_back({phantom_item(size, derive_seed(seed, 0xDA7A, i)), tags[i]});
  }
  return m;
}

DatasetManifest png_dir_manifest(const fs::path& dir, std::uint64_t seed) {
  if (!fs::is_directory(dir)) throw IoError("data directory '" + dir.string() + "' not found");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  DatasetManifest m;
  m.seed = seed;
  m.source = DataSource::kPngDir;
  const auto tags = split_dataset(files.size(), seed);
  for (std::size_t i = 0; i < files.size(); ++i) m.items.push_back({files[i], tags[i]});
  return m;
}

void write_manifest(std::ostream& os, const DatasetManifest& m) {
  for (const auto& item : m.items) os << item.path << '\t' << split_name(item.split) << '\n';
}

DatasetManifest read_manifest(std::istream& is, std::uint64_t seed) {
  DatasetManifest m;
  m.seed = seed;
  std::string line;
  bool all_phantom = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("manifest line lacks a tab: " + line);
    const std::string tag = line.substr(tab + 1);
    ManifestItem item{line.substr(0, tab), Split::kTrain};
    if (tag == "val") {
      item.split = Split::kVal;
    } else if (tag != "train") {
      throw FormatError("manifest split must be train or val: " + line);
    }
    all_phantom = all_phantom && item.path.rfind("phantom:", 0) == 0;
    m.items.push_back(std::move(item));
  }
  m.source = all_phantom ? DataSource::kPhantom : DataSource::kPngDir;
  return m;
}

std::vector<std::size_t> epoch_order(const DatasetManifest& m, std::size_t epoch) {
  const auto train = m.indices(Split::kTrain);
  SplitMix64 rng(m.seed ^ static_cast<std::uint64_t>(epoch));
  const auto perm = shuffled_indices(train.size(), rng);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < perm.size(); ++i) order[i] = train[perm[i]];
  return order;
}

Image load_item(const ManifestItem& item, const ItemOptions& options) {
  if (item.path.rfind("phantom:", 0) != 0) {
    Image img = load_grayscale(item.path);
    if (img.height == options.image_size && img.width == options.image_size) return img;
    return center_crop(img, options.image_size);
  }
  std::size_t size = 0;
  std::uint64_t seed = 0;
  {
    std::istringstream is(item.path.substr(8));
    std::string field;
    while (std::getline(is, field, ':')) {
      if (field.rfind("size=", 0) == 0) {
        size = std::stoul(field.substr(5));
      } else if (field.rfind("seed=", 0) == 0) {
        seed = std::stoull(field.substr(5));
      } else {
        throw FormatError("bad phantom item '" + item.path + "'");
      }
    }
  }
  if (size != options.image_size) {
    throw ContractError("phantom item size " + std::to_string(size) +
                        " differs from model image size " + std::to_string(options.image_size));
  }
  const Image phantom = generate_phantom(random_phantom_spec(size, seed));
  const CoilSet coils = simulate_coils(phantom, options.n_coils, seed);
  if (options.target == TargetKind::kImage) {
    Image rss = rss_combine(coils);
    const double mx = *std::max_element(rss.pixels.begin(), rss.pixels.end());
    if (mx > 0.0) {
      for (auto& v : rss.pixels) v /= mx;
    }
    return rss;
  }
  CoilSet kspaces;
  kspaces.reserve(coils.size());
  for (const auto& coil : coils) {
    ComplexGrid padded = coil;
    if (!is_pow2(size)) {
      // FFT sizes must be powers of two; pad each plane, transform, crop back.
      Image re(size, size, coil.re), im(size, size, coil.im);
      const Image pre = pad_to_pow2(re), pim = pad_to_pow2(im);
      padded = ComplexGrid(pre.height, pre.width);
      padded.re = pre.pixels;
      padded.im = pim.pixels;
    }
    kspaces.push_back(fftshift(fft2(padded)));
  }
  const Image magnitude = rss_combine(kspaces);
  ComplexGrid combined(magnitude.height, magnitude.width);
  combined.re = magnitude.pixels;
  Image rendered = to_log_magnitude(combined);
  if (rendered.height != size) rendered = center_crop(rendered, size);
  return rendered;
}

}  // namespace mimk
