#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace geoflow {

enum class DType : std::uint8_t { kF32 = 1, kF64 = 2, kU8 = 3 };

std::string_view dtype_name(DType dtype);

// Dense row-major array. The last dimension holds channels when the rank is
// three; rank-2 grids are single-channel images (depth, confidence, maps).
class TensorGrid {
 public:
  TensorGrid();
  TensorGrid(DType dtype, std::vector<std::size_t> dims);

  static TensorGrid from_f64(std::vector<std::size_t> dims,
                             std::vector<double> values);
  static TensorGrid from_f32(std::vector<std::size_t> dims,
                             std::vector<float> values);
  static TensorGrid from_u8(std::vector<std::size_t> dims,
                            std::vector<std::uint8_t> values);

  DType dtype() const { return static_cast<DType>(storage_.index() + 1); }
  bool is_float() const { return dtype() != DType::kU8; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const;

  // Image-style accessors; require rank >= 2.
  std::size_t height() const;
  std::size_t width() const;
  std::size_t channels() const;

  double get(std::size_t flat) const;
  void set(std::size_t flat, double value);
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return get((y * width() + x) * channels() + c);
  }
  void set(std::size_t y, std::size_t x, std::size_t c, double value) {
    set((y * width() + x) * channels() + c, value);
  }

  std::span<const double> f64() const;
  std::span<double> f64();
  std::span<const float> f32() const;
  std::span<const std::uint8_t> u8() const;

  TensorGrid cast(DType target) const;
  // Float copy with u8 values mapped to [0, 1]; float grids are widened.
  TensorGrid to_unit_f64() const;

  // Raw little-endian payload, used by the GFT writer.
  const void* raw_data() const;
  void* raw_data();
  std::size_t element_bytes() const;

  bool operator==(const TensorGrid& other) const;

 private:
  std::vector<std::size_t> dims_;
  std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint8_t>>
      storage_;
};

// Throws NumericError naming `what` when a float grid holds NaN or Inf.
void check_finite(const TensorGrid& grid, std::string_view what);

// Throws ShapeError unless the grid is H x W x `channels` (channels == 1
// also accepts H x W).
void check_image_shape(const TensorGrid& grid, std::size_t channels,
                       std::string_view what);

class ValidityMask {
 public:
  ValidityMask() = default;
  ValidityMask(std::size_t height, std::size_t width, bool value = false)
      : height_(height), width_(width), bits_(height * width, value ? 1 : 0) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return bits_.size(); }

  bool get(std::size_t flat) const { return bits_[flat] != 0; }
  bool get(std::size_t y, std::size_t x) const { return get(y * width_ + x); }
  void set(std::size_t flat, bool value) { bits_[flat] = value ? 1 : 0; }
  void set(std::size_t y, std::size_t x, bool value) { set(y * width_ + x, value); }

  std::size_t count() const;
  ValidityMask operator&(const ValidityMask& other) const;
  bool operator==(const ValidityMask& other) const = default;

  TensorGrid to_grid() const;  // H x W u8, 1 where valid
  static ValidityMask from_grid(const TensorGrid& grid);

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace geoflow
