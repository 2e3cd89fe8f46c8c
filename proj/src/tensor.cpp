#include "geoflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "geoflow/errors.hpp"

namespace geoflow {

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw ShapeError("tensor dims must be non-empty");
  for (auto d : dims) {
    if (d == 0) throw ShapeError("tensor dims must be >= 1");
  }
}

}  // namespace

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
    case DType::kU8: return "u8";
  }
  return "?";
}

TensorGrid::TensorGrid() : dims_{1}, storage_(std::vector<double>(1, 0.0)) {}

TensorGrid::TensorGrid(DType dtype, std::vector<std::size_t> dims)
    : dims_(std::move(dims)) {
  check_dims(dims_);
  const std::size_t n = product(dims_);
  switch (dtype) {
    case DType::kF32: storage_ = std::vector<float>(n, 0.0f); break;
    case DType::kF64: storage_ = std::vector<double>(n, 0.0); break;
    case DType::kU8: storage_ = std::vector<std::uint8_t>(n, 0); break;
    default: throw TypeError("unknown dtype");
  }
}

TensorGrid TensorGrid::from_f64(std::vector<std::size_t> dims,
                                std::vector<double> values) {
  check_dims(dims);
  if (values.size() != product(dims)) throw ShapeError("buffer length does not match dims");
  TensorGrid g;
  g.dims_ = std::move(dims);
  g.storage_ = std::move(values);
  return g;
}

TensorGrid TensorGrid::from_f32(std::vector<std::size_t> dims,
                                std::vector<float> values) {
  check_dims(dims);
  if (values.size() != product(dims)) throw ShapeError("buffer length does not match dims");
  TensorGrid g;
  g.dims_ = std::move(dims);
  g.storage_ = std::move(values);
  return g;
}

TensorGrid TensorGrid::from_u8(std::vector<std::size_t> dims,
                               std::vector<std::uint8_t> values) {
  check_dims(dims);
  if (values.size() != product(dims)) throw ShapeError("buffer length does not match dims");
  TensorGrid g;
  g.dims_ = std::move(dims);
  g.storage_ = std::move(values);
  return g;
}

std::size_t TensorGrid::size() const { return product(dims_); }

std::size_t TensorGrid::height() const {
  if (rank() < 2) throw ShapeError("grid is not an image (rank < 2)");
  return dims_[0];
}

std::size_t TensorGrid::width() const {
  if (rank() < 2) throw ShapeError("grid is not an image (rank < 2)");
  return dims_[1];
}

std::size_t TensorGrid::channels() const {
  if (rank() < 2) throw ShapeError("grid is not an image (rank < 2)");
  return rank() == 2 ? 1 : dims_[2];
}

double TensorGrid::get(std::size_t flat) const {
  return std::visit([flat](const auto& v) { return static_cast<double>(v[flat]); },
                    storage_);
}

void TensorGrid::set(std::size_t flat, double value) {
  std::visit(
      [flat, value](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        v[flat] = static_cast<T>(value);
      },
      storage_);
}

std::span<const double> TensorGrid::f64() const {
  const auto* v = std::get_if<std::vector<double>>(&storage_);
  if (v == nullptr) throw TypeError("expected f64 grid, got " + std::string(dtype_name(dtype())));
  return *v;
}

std::span<double> TensorGrid::f64() {
  auto* v = std::get_if<std::vector<double>>(&storage_);
  if (v == nullptr) throw TypeError("expected f64 grid, got " + std::string(dtype_name(dtype())));
  return *v;
}

std::span<const float> TensorGrid::f32() const {
  const auto* v = std::get_if<std::vector<float>>(&storage_);
  if (v == nullptr) throw TypeError("expected f32 grid, got " + std::string(dtype_name(dtype())));
  return *v;
}

std::span<const std::uint8_t> TensorGrid::u8() const {
  const auto* v = std::get_if<std::vector<std::uint8_t>>(&storage_);
  if (v == nullptr) throw TypeError("expected u8 grid, got " + std::string(dtype_name(dtype())));
  return *v;
}

TensorGrid TensorGrid::cast(DType target) const {
  TensorGrid out(target, dims_);
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) out.set(i, get(i));
  return out;
}

TensorGrid TensorGrid::to_unit_f64() const {
  if (dtype() == DType::kF64) return *this;
  TensorGrid out(DType::kF64, dims_);
  auto dst = out.f64();
  const double scale = dtype() == DType::kU8 ? 1.0 / 255.0 : 1.0;
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = get(i) * scale;
  return out;
}

const void* TensorGrid::raw_data() const {
  return std::visit([](const auto& v) -> const void* { return v.data(); }, storage_);
}

void* TensorGrid::raw_data() {
  return std::visit([](auto& v) -> void* { return v.data(); }, storage_);
}

std::size_t TensorGrid::element_bytes() const {
  switch (dtype()) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU8: return 1;
  }
  return 0;
}

bool TensorGrid::operator==(const TensorGrid& other) const {
  return dims_ == other.dims_ && storage_ == other.storage_;
}

void check_finite(const TensorGrid& grid, std::string_view what) {
  if (!grid.is_float()) return;
  const std::size_t n = grid.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grid.get(i))) {
      throw NumericError(std::string(what) + ": non-finite value at index " +
                         std::to_string(i));
    }
  }
}

void check_image_shape(const TensorGrid& grid, std::size_t channels,
                       std::string_view what) {
  const bool ok = (grid.rank() == 3 && grid.dims()[2] == channels) ||
                  (channels == 1 && grid.rank() == 2);
  if (!ok) {
    throw ShapeError(std::string(what) + ": expected H x W x " +
                     std::to_string(channels) + " grid");
  }
}

std::size_t ValidityMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

ValidityMask ValidityMask::operator&(const ValidityMask& other) const {
  if (height_ != other.height_ || width_ != other.width_) {
    throw ShapeError("mask dims differ");
  }
  ValidityMask out(height_, width_);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    out.bits_[i] = bits_[i] & other.bits_[i];
  }
  return out;
}

TensorGrid ValidityMask::to_grid() const {
  return TensorGrid::from_u8({height_, width_}, bits_);
}

ValidityMask ValidityMask::from_grid(const TensorGrid& grid) {
  check_image_shape(grid, 1, "mask");
  ValidityMask out(grid.height(), grid.width());
  for (std::size_t i = 0; i < out.size(); ++i) out.set(i, grid.get(i) != 0.0);
  return out;
}

}  // namespace geoflow
