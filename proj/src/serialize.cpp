#include "splitfed/serialize.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <limits>

namespace splitfed {

void write_tensor(ByteWriter& w, const Tensor& t) {
  if (t.rank() == 0 || t.rank() > 0xFF) throw ShapeError("tensor rank must be in [1,255]");
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("extent exceeds 32 bits");
    w.u32(static_cast<std::uint32_t>(d));
  }
  w.f32_array(t.values());
}

Tensor read_tensor(ByteReader& r) {
  const std::size_t start = r.offset();
  const std::size_t rank = r.u8();
  if (rank == 0) throw FormatError("tensor rank 0", start);
  Dims dims(rank);
  for (auto& d : dims) {
    d = r.u32();
    if (d == 0) throw FormatError("tensor axis with extent 0", r.offset() - 4);
  }
  const std::size_t limit = r.remaining() / sizeof(float);
  std::size_t count = 1;
  for (auto d : dims) {
    if (count > limit / d) {
      throw FormatError("tensor size mismatch: dims " + dims_to_string(dims) +
                            " exceed the " + std::to_string(r.remaining()) + " bytes remaining",
                        r.offset());
    }
    count *= d;
  }
  std::vector<float> data(count);
  r.f32_array(data);
  return Tensor(std::move(dims), std::move(data));
}

Bytes serialize_paramset(const ParamSet& params) {
  ByteWriter w;
  w.raw(kParamSetMagic);
  w.u8(kParamSetVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params) {
    w.string16(e.name);
    write_tensor(w, e.value);
  }
  return std::move(w).take();
}

ParamSet parse_paramset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.raw(kParamSetMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kParamSetMagic.begin())) {
    throw FormatError("bad SFPS magic", 0);
  }
  const auto version = r.u8();
  if (version != kParamSetVersion) {
    throw UnsupportedVersionError("unsupported SFPS version " + std::to_string(version), 4);
  }
  const std::uint32_t count = r.u32();
  ParamSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto at = r.offset();
    std::string name = r.string16();
    if (out.contains(name)) throw FormatError("duplicate entry '" + name + "'", at);
    out.add(std::move(name), read_tensor(r));
  }
  if (!r.done()) throw FormatError("trailing bytes after last entry", r.offset());
  return out;
}

void save_paramset(const ParamSet& params, const std::filesystem::path& path) {
  write_file(path, serialize_paramset(params));
}

ParamSet load_paramset(const std::filesystem::path& path) { return parse_paramset(read_file(path)); }

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string() + " for reading");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to " + path.string() + " failed");
}

}  // namespace splitfed
