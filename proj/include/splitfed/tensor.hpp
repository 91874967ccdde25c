#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "splitfed/errors.hpp"

namespace splitfed {

using Dims = std::vector<std::size_t>;

// Product of dims. Throws ShapeError on an empty list or a zero extent.
std::size_t element_count(const Dims& dims);
std::string dims_to_string(const Dims& dims);

// Dense row-major float32 array. Equality is bitwise on the payload so that
// "bit-identical" checks are a plain ==.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Dims dims, float fill = 0.0f);
  Tensor(Dims dims, std::vector<float> data);

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // [C,H,W] element access.
  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * dims_[1] + y) * dims_[2] + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * dims_[1] + y) * dims_[2] + x];
  }

  Tensor reshaped(Dims dims) const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Dims dims_;
  std::vector<float> data_;
};

// Stacks equally-shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);
// Inverse of stack: splits along axis 0.
std::vector<Tensor> unstack(const Tensor& batch);

void add_inplace(Tensor& acc, const Tensor& other);
void scale_inplace(Tensor& t, float factor);
double max_abs_diff(const Tensor& a, const Tensor& b);

void require_dims(const Tensor& t, const Dims& expected, std::string_view what);
void require_rank(const Tensor& t, std::size_t rank, std::string_view what);

struct ParamEntry {
  std::string name;
  Tensor value;
  friend bool operator==(const ParamEntry&, const ParamEntry&) = default;
};

// Ordered, uniquely named parameter tensors. Iteration order is insertion
// order and is preserved by the SFPS format.
class ParamSet {
 public:
  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  const ParamEntry& entry(std::size_t i) const { return entries_.at(i); }
  ParamEntry& entry(std::size_t i) { return entries_.at(i); }

  std::size_t parameter_count() const;
  ParamSet zeros_like() const;
  // Entries whose names start with `prefix`, in order.
  ParamSet with_prefix(std::string_view prefix) const;
  std::vector<std::string> names() const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<ParamEntry> entries_;
};

// Throws ShapeError naming the first entry whose name or dims differ.
void require_aligned(const ParamSet& a, const ParamSet& b, std::string_view what);
// Appends every entry of `tail` to `head`.
ParamSet concat(const ParamSet& head, const ParamSet& tail);
// Accumulates `other` into `acc`; both must be aligned.
void add_inplace(ParamSet& acc, const ParamSet& other);
void scale_inplace(ParamSet& p, float factor);
double max_abs_diff(const ParamSet& a, const ParamSet& b);

}  // namespace splitfed
