// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mimk/image.hpp"

namespace mimk {

/// Reads an 8-bit PNG. Gray images map to value/255; RGB and RGBA images
/// take the red channel (the inputs are gray content saved with colour
/// channels) and ignore alpha.
Image load_grayscale(const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG; values are clamped to [0,1] and rounded.
void save_grayscale_png(const std::filesystem::path& path, const Image& img);

/// Writes an 8-bit PNG with 1 (gray), 3 (RGB) or 4 (RGBA) channels from raw
/// interleaved bytes. Used by tests and fixtures.
void save_png_bytes(const std::filesystem::path& path, std::size_t height, std::size_t width,
                    int channels, const std::vector<std::uint8_t>& bytes);

/// Crop window starts at floor((dim - size) / 2) on each axis.
Image center_crop(const Image& img, std::size_t size);

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width);
Image flip_horizontal(const Image& img);

enum class Split { kTrain, kVal };
const char* split_name(Split s);

/// Seeded shuffle of [0, n); the first round(0.8 n) indices are train.
std::vector<Split> split_dataset(std::size_t n_items, std::uint64_t seed);

enum class AugmentPolicy { kNone, kFlipCrop, kNormalize };
AugmentPolicy parse_augment_policy(const std::string& name);
const char* augment_policy_name(AugmentPolicy p);

/// kNone: identity. kFlipCrop: horizontal flip with p = 0.5, random crop to
/// 87.5% of each side, bilinear resize back. kNormalize: per-image
/// (x - mean) / std remapped affinely to [0,1].
Image augment(const Image& img, AugmentPolicy policy, std::uint64_t seed);

enum class DataSource { kPhantom, kPngDir };

struct ManifestItem {
  std::string path;  // file path, or "phantom:size=S:seed=N"
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::vector<ManifestItem> items;
  std::uint64_t seed = 0;
  DataSource source = DataSource::kPhantom;

  std::vector<std::size_t> indices(Split s) const;
};

std::string phantom_item(std::size_t size, std::uint64_t seed);

/// n phantoms whose per-item seeds derive from `seed`, split 80/20.
DatasetManifest phantom_manifest(std::size_t n, std::size_t size, std::uint64_t seed);
/// Every *.png directly inside `dir`, sorted by name, split 80/20.
DatasetManifest png_dir_manifest(const std::filesystem::path& dir, std::uint64_t seed);

/// One "path<TAB>split" line per item.
void write_manifest(std::ostream& os, const DatasetManifest& m);
DatasetManifest read_manifest(std::istream& is, std::uint64_t seed = 0);

/// Train order for one epoch: shuffle of the train indices seeded by
/// seed XOR epoch.
std::vector<std::size_t> epoch_order(const DatasetManifest& m, std::size_t epoch);

enum class TargetKind { kKSpace, kImage };

struct ItemOptions {
  std::size_t image_size = 64;
  TargetKind target = TargetKind::kKSpace;
  std::size_t n_coils = 4;
};

/// Materializes one manifest item as a training target in [0,1].
/// Phantom items run the coil simulation: kKSpace renders the root-sum-of-
/// squares over coil k-space magnitudes (centered, log-compressed); kImage
/// is the max-normalized RSS coil image. PNG items are loaded and center
/// cropped.
Image load_item(const ManifestItem& item, const ItemOptions& options);

}  // namespace mimk
