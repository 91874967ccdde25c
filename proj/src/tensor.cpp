#include "splitfed/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace splitfed {

std::size_t element_count(const Dims& dims) {
  if (dims.empty()) throw ShapeError("tensor must have rank >= 1");
  std::size_t n = 1;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0) throw ShapeError("axis " + std::to_string(i) + " has extent 0");
    if (n > std::numeric_limits<std::size_t>::max() / dims[i]) {
      throw ShapeError("element count overflows");
    }
    n *= dims[i];
  }
  return n;
}

std::string dims_to_string(const Dims& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

Tensor::Tensor(Dims dims, float fill)
    : dims_(std::move(dims)), data_(element_count(dims_), fill) {}

Tensor::Tensor(Dims dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (data_.size() != element_count(dims_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match dims " + dims_to_string(dims_));
  }
}

Tensor Tensor::reshaped(Dims dims) const {
  if (element_count(dims) != data_.size()) {
    throw ShapeError("cannot reshape " + dims_to_string(dims_) + " to " +
                     dims_to_string(dims));
  }
  return Tensor(std::move(dims), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.dims_ == b.dims_ &&
         (a.data_.empty() ||
          std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0);
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("cannot stack an empty list");
  const Dims& inner = items.front().dims();
  Dims dims{items.size()};
  dims.insert(dims.end(), inner.begin(), inner.end());
  Tensor out(dims);
  const std::size_t stride = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].dims() != inner) {
      throw ShapeError("stack: item " + std::to_string(i) + " has dims " +
                       dims_to_string(items[i].dims()) + ", expected " +
                       dims_to_string(inner));
    }
    std::copy(items[i].values().begin(), items[i].values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

std::vector<Tensor> unstack(const Tensor& batch) {
  if (batch.rank() < 2) throw ShapeError("unstack needs rank >= 2");
  Dims inner(batch.dims().begin() + 1, batch.dims().end());
  const std::size_t stride = element_count(inner);
  std::vector<Tensor> out;
  out.reserve(batch.dim(0));
  for (std::size_t i = 0; i < batch.dim(0); ++i) {
    auto first = batch.values().begin() + static_cast<std::ptrdiff_t>(i * stride);
    out.emplace_back(inner, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(stride)));
  }
  return out;
}

void add_inplace(Tensor& acc, const Tensor& other) {
  require_dims(other, acc.dims(), "add");
  float* a = acc.data();
  const float* b = other.data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += b[i];
}

void scale_inplace(Tensor& t, float factor) {
  for (auto& v : t.values()) v *= factor;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_dims(b, a.dims(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

void require_dims(const Tensor& t, const Dims& expected, std::string_view what) {
  if (t.dims() == expected) return;
  std::string msg(what);
  if (t.rank() != expected.size()) {
    msg += ": expected rank " + std::to_string(expected.size()) + ", got " +
           std::to_string(t.rank());
  } else {
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (t.dim(i) != expected[i]) {
        msg += ": axis " + std::to_string(i) + " has extent " + std::to_string(t.dim(i)) +
               ", expected " + std::to_string(expected[i]);
        break;
      }
    }
  }
  throw ShapeError(msg);
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got " + std::to_string(t.rank()) + " " + dims_to_string(t.dims()));
  }
}

void ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ValidationError("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(value)});
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const ParamEntry& e) { return e.name == name; });
}

const Tensor& ParamSet::at(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw ValidationError("no parameter named '" + std::string(name) + "'");
}

Tensor& ParamSet::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& e : entries_) out.add(e.name, Tensor(e.value.dims()));
  return out;
}

ParamSet ParamSet::with_prefix(std::string_view prefix) const {
  ParamSet out;
  for (const auto& e : entries_) {
    if (e.name.starts_with(prefix)) out.add(e.name, e.value);
  }
  return out;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

void require_aligned(const ParamSet& a, const ParamSet& b, std::string_view what) {
  const std::size_t n = std::max(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= a.size() || i >= b.size()) {
      const auto& name = i < a.size() ? a.entry(i).name : b.entry(i).name;
      throw ShapeError(std::string(what) + ": entry count differs, first unmatched '" +
                       name + "'");
    }
    const auto& ea = a.entry(i);
    const auto& eb = b.entry(i);
    if (ea.name != eb.name || ea.value.dims() != eb.value.dims()) {
      throw ShapeError(std::string(what) + ": mismatch at '" + ea.name + "' " +
                       dims_to_string(ea.value.dims()) + " vs '" + eb.name + "' " +
                       dims_to_string(eb.value.dims()));
    }
  }
}

ParamSet concat(const ParamSet& head, const ParamSet& tail) {
  ParamSet out = head;
  for (const auto& e : tail) out.add(e.name, e.value);
  return out;
}

void add_inplace(ParamSet& acc, const ParamSet& other) {
  require_aligned(acc, other, "add");
  for (std::size_t i = 0; i < acc.size(); ++i) add_inplace(acc.entry(i).value, other.entry(i).value);
}

void scale_inplace(ParamSet& p, float factor) {
  for (auto& e : p) scale_inplace(e.value, factor);
}

double max_abs_diff(const ParamSet& a, const ParamSet& b) {
  require_aligned(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, max_abs_diff(a.entry(i).value, b.entry(i).value));
  }
  return m;
}

}  // namespace splitfed
