#include "splitfed/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "splitfed/rng.hpp"
#include "splitfed/serialize.hpp"

namespace splitfed {

namespace {

constexpr std::array<std::uint8_t, 4> kDatasetMagic{'S', 'F', 'D', 'S'};
constexpr int kMaxMaskAttempts = 1000;
constexpr double kMaxForeground = 0.6;

struct Ellipse {
  double cx, cy, rx, ry, angle;
};

// Rasterises the union of ellipses at pixel centres. Returns the foreground count.
std::size_t rasterise(const std::vector<Ellipse>& blobs, Tensor& mask) {
  const std::size_t h = mask.dim(1), w = mask.dim(2);
  std::size_t count = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      bool inside = false;
      for (const auto& e : blobs) {
        const double dx = px - e.cx, dy = py - e.cy;
        const double c = std::cos(e.angle), s = std::sin(e.angle);
        const double u = (c * dx + s * dy) / e.rx;
        const double v = (-s * dx + c * dy) / e.ry;
        if (u * u + v * v <= 1.0) {
          inside = true;
          break;
        }
      }
      mask.at(0, y, x) = inside ? 1.0f : 0.0f;
      count += inside;
    }
  }
  return count;
}

}  // namespace

void validate(const DomainSpec& spec) {
  auto fail = [&](const std::string& why) {
    throw ValidationError("domain '" + spec.domain_id + "': " + why);
  };
  if (spec.background_level < 0.0 || spec.background_level > 1.0) fail("background_level outside [0,1]");
  if (!(spec.contrast > 0.0)) fail("contrast must be > 0");
  if (!(spec.noise_std >= 0.0)) fail("noise_std must be >= 0");
  if (spec.blob_count_range.first < 1) fail("blob count minimum must be >= 1");
  if (spec.blob_count_range.second < spec.blob_count_range.first) fail("blob count max < min");
  if (!(spec.blob_radius_range.first > 0.0)) fail("blob radius minimum must be > 0");
  if (spec.blob_radius_range.second < spec.blob_radius_range.first) fail("blob radius max < min");
  if (spec.blob_intensity_delta == 0.0) fail("blob_intensity_delta must be non-zero");
  if (!(spec.channel_gain > 0.0)) fail("channel_gain must be > 0");
}

Sample generate_sample(const DomainSpec& spec, std::uint64_t seed, std::string_view part,
                       std::uint64_t index, ImageGeometry geometry) {
  const std::size_t h = geometry.height, w = geometry.width, c = geometry.channels;
  Rng rng = Rng::stream(seed, spec.domain_id + "/" + std::string(part), index);

  Tensor mask({1, h, w});
  const double pixels = static_cast<double>(h * w);
  bool ok = false;
  for (int attempt = 0; attempt < kMaxMaskAttempts && !ok; ++attempt) {
    const auto n = rng.between(spec.blob_count_range.first, spec.blob_count_range.second);
    std::vector<Ellipse> blobs;
    for (std::int64_t b = 0; b < n; ++b) {
      Ellipse e;
      e.cx = rng.uniform(0.0, static_cast<double>(w));
      e.cy = rng.uniform(0.0, static_cast<double>(h));
      e.rx = rng.uniform(spec.blob_radius_range.first, spec.blob_radius_range.second);
      e.ry = rng.uniform(spec.blob_radius_range.first, spec.blob_radius_range.second);
      e.angle = rng.uniform(0.0, std::numbers::pi);
      blobs.push_back(e);
    }
    const auto fg = static_cast<double>(rasterise(blobs, mask));
    ok = fg > 0.0 && fg / pixels < kMaxForeground;
  }
  if (!ok) {
    throw ValidationError("domain '" + spec.domain_id +
                          "': could not draw a mask with foreground fraction in (0, 0.6)");
  }

  Tensor image({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double field = mask.at(0, y, x);
        double v = spec.background_level + spec.contrast * field * spec.blob_intensity_delta;
        if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
        v = std::clamp(v, 0.0, 1.0) * spec.channel_gain;
        image.at(ch, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return {std::move(image), std::move(mask)};
}

DatasetSplit generate_domain(const DomainSpec& spec, std::size_t n_train, std::size_t n_test,
                             std::uint64_t seed, ImageGeometry geometry) {
  validate(spec);
  if (n_train == 0 || n_test == 0) throw ValidationError("train and test sizes must be positive");
  DatasetSplit split{spec.domain_id, {}, {}};
  split.train.reserve(n_train);
  split.test.reserve(n_test);
  for (std::size_t i = 0; i < n_train; ++i) split.train.push_back(generate_sample(spec, seed, "train", i, geometry));
  for (std::size_t i = 0; i < n_test; ++i) split.test.push_back(generate_sample(spec, seed, "test", i, geometry));
  return split;
}

std::vector<DomainSpec> default_domain_specs() {
  return {
      {"D1", 0.20, 1.0, 0.05, {1, 2}, {4.0, 8.0}, 0.50, 1.00},
      {"D2", 0.55, 0.7, 0.10, {1, 2}, {5.0, 9.0}, 0.40, 0.90},
      {"D3", 0.30, 0.9, 0.07, {1, 3}, {3.0, 7.0}, 0.50, 1.00},
      {"D4", 0.10, 1.2, 0.12, {1, 2}, {4.0, 8.0}, 0.35, 0.85},
  };
}

std::vector<std::pair<std::size_t, std::size_t>> default_centre_sizes() {
  return {{400, 100}, {10, 10}, {260, 46}, {83, 15}};
}

std::vector<DatasetSplit> default_centres(std::uint64_t seed, ImageGeometry geometry) {
  const auto specs = default_domain_specs();
  const auto sizes = default_centre_sizes();
  std::vector<DatasetSplit> out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    out.push_back(generate_domain(specs[i], sizes[i].first, sizes[i].second, seed, geometry));
  }
  return out;
}

Bytes serialize_split(const DatasetSplit& split) {
  ByteWriter w;
  w.raw(kDatasetMagic);
  w.u8(kDatasetVersion);
  w.string16(split.domain_id);
  w.u32(static_cast<std::uint32_t>(split.train.size()));
  w.u32(static_cast<std::uint32_t>(split.test.size()));
  for (const auto* part : {&split.train, &split.test}) {
    for (const auto& s : *part) {
      write_tensor(w, s.image);
      write_tensor(w, s.mask);
    }
  }
  return std::move(w).take();
}

DatasetSplit parse_split(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.raw(kDatasetMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kDatasetMagic.begin())) throw FormatError("bad SFDS magic", 0);
  const auto version = r.u8();
  if (version != kDatasetVersion) {
    throw UnsupportedVersionError("unsupported SFDS version " + std::to_string(version), 4);
  }
  DatasetSplit split;
  split.domain_id = r.string16();
  const std::uint32_t n_train = r.u32();
  const std::uint32_t n_test = r.u32();
  auto read_part = [&](std::uint32_t n, std::vector<Sample>& out) {
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto at = r.offset();
      Sample s{read_tensor(r), read_tensor(r)};
      if (s.image.rank() != 3 || s.mask.rank() != 3 || s.mask.dim(0) != 1 ||
          s.mask.dim(1) != s.image.dim(1) || s.mask.dim(2) != s.image.dim(2)) {
        throw FormatError("sample image/mask dims inconsistent", at);
      }
      out.push_back(std::move(s));
    }
  };
  read_part(n_train, split.train);
  read_part(n_test, split.test);
  if (!r.done()) throw FormatError("trailing bytes after last sample", r.offset());
  return split;
}

void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
  write_file(path, serialize_split(split));
}

DatasetSplit load_split(const std::filesystem::path& path) { return parse_split(read_file(path)); }

namespace {

void write_pgm(const std::filesystem::path& path, const Tensor& plane, bool binary_mask) {
  const std::size_t h = plane.dim(1), w = plane.dim(2);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<char> raster(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const float v = plane[i];
    const auto byte = binary_mask ? (v >= 0.5f ? 255 : 0)
                                  : static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    raster[i] = static_cast<char>(static_cast<unsigned char>(byte));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
}

}  // namespace

std::pair<std::filesystem::path, std::filesystem::path> export_pgm(const Sample& sample,
                                                                   const std::filesystem::path& dir,
                                                                   std::string_view stem) {
  if (sample.image.rank() != 3 || sample.image.dim(0) != 1) {
    throw ValidationError("export_pgm supports single-channel images only, got " +
                          dims_to_string(sample.image.dims()));
  }
  std::filesystem::create_directories(dir);
  auto image_path = dir / (std::string(stem) + "_image.pgm");
  auto mask_path = dir / (std::string(stem) + "_mask.pgm");
  write_pgm(image_path, sample.image, false);
  write_pgm(mask_path, sample.mask, true);
  return {image_path, mask_path};
}

Tensor read_pgm(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "P5") throw FormatError("not a binary PGM", 0);
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw FormatError("bad PGM header", pos);
  }
  if (maxval != 255) throw FormatError("only 8-bit PGM supported", pos);
  ++pos;  // single whitespace after maxval
  if (bytes.size() - pos < w * h) throw TruncatedError(pos, w * h - (bytes.size() - pos));
  Tensor t({1, h, w});
  for (std::size_t i = 0; i < w * h; ++i) t[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  return t;
}

}  // namespace splitfed
