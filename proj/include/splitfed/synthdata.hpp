#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "splitfed/bytes.hpp"
#include "splitfed/tensor.hpp"

namespace splitfed {

// Acquisition characteristics of one synthetic centre. Images are
//   clamp(background + contrast * field * blob_delta + N(0, noise_std)) * channel_gain
// where `field` is the 0/1 rasterisation of a union of random ellipses,
// which is also the ground-truth mask.
struct DomainSpec {
  std::string domain_id;
  double background_level = 0.2;
  double contrast = 1.0;
  double noise_std = 0.05;
  std::pair<int, int> blob_count_range{1, 2};
  std::pair<double, double> blob_radius_range{4.0, 8.0};
  double blob_intensity_delta = 0.5;
  double channel_gain = 1.0;

  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

void validate(const DomainSpec& spec);

struct ImageGeometry {
  std::size_t channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;
};

struct Sample {
  Tensor image;  // [C,H,W] in [0,1]
  Tensor mask;   // [1,H,W] in {0,1}
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetSplit {
  std::string domain_id;
  std::vector<Sample> train;
  std::vector<Sample> test;
  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

// Sample i of the train (test) part is drawn from stream (seed, "<id>/train", i)
// ("<id>/test"), so the two parts never share random draws and any single
// sample can be regenerated on its own.
Sample generate_sample(const DomainSpec& spec, std::uint64_t seed, std::string_view part,
                       std::uint64_t index, ImageGeometry geometry = {});
DatasetSplit generate_domain(const DomainSpec& spec, std::size_t n_train, std::size_t n_test,
                             std::uint64_t seed, ImageGeometry geometry = {});

std::vector<DomainSpec> default_domain_specs();
// Train/test sizes of the four default centres; the first is the source.
std::vector<std::pair<std::size_t, std::size_t>> default_centre_sizes();
std::vector<DatasetSplit> default_centres(std::uint64_t seed, ImageGeometry geometry = {});

// SFDS container: "SFDS", u8 version 0x01, 16-bit-length domain id, u32 train
// count, u32 test count, then (image, mask) pairs in the wire tensor encoding.
inline constexpr std::uint8_t kDatasetVersion = 0x01;
Bytes serialize_split(const DatasetSplit& split);
DatasetSplit parse_split(std::span<const std::uint8_t> bytes);
void save_split(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_split(const std::filesystem::path& path);

// Writes "<stem>_image.pgm" and "<stem>_mask.pgm" (binary P5, 8-bit) into dir.
std::pair<std::filesystem::path, std::filesystem::path> export_pgm(const Sample& sample,
                                                                   const std::filesystem::path& dir,
                                                                   std::string_view stem);
// Reads a P5 PGM back as a [1,H,W] tensor scaled to [0,1].
Tensor read_pgm(const std::filesystem::path& path);

}  // namespace splitfed
