#include "geoflow/warp.hpp"

#include <cmath>

#include "geoflow/errors.hpp"
#include "geoflow/parallel.hpp"

namespace geoflow {

namespace {

template <typename T>
bool sample_impl(std::span<const T> data, std::size_t height, std::size_t width,
                 std::size_t channels, double x, double y, double scale,
                 std::span<double> out) {
  const double max_x = static_cast<double>(width - 1);
  const double max_y = static_cast<double>(height - 1);
  if (!(x >= 0.0 && x <= max_x && y >= 0.0 && y <= max_y)) {
    std::fill(out.begin(), out.end(), 0.0);
    return false;
  }
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, width - 1);
  const std::size_t y1 = std::min(y0 + 1, height - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double w00 = (1.0 - fx) * (1.0 - fy);
  const double w10 = fx * (1.0 - fy);
  const double w01 = (1.0 - fx) * fy;
  const double w11 = fx * fy;
  const std::size_t i00 = (y0 * width + x0) * channels;
  const std::size_t i10 = (y0 * width + x1) * channels;
  const std::size_t i01 = (y1 * width + x0) * channels;
  const std::size_t i11 = (y1 * width + x1) * channels;
  for (std::size_t c = 0; c < channels; ++c) {
    out[c] = scale * (w00 * static_cast<double>(data[i00 + c]) +
                      w10 * static_cast<double>(data[i10 + c]) +
                      w01 * static_cast<double>(data[i01 + c]) +
                      w11 * static_cast<double>(data[i11 + c]));
  }
  return true;
}

}  // namespace

bool bilinear_sample_into(const TensorGrid& grid, double x, double y,
                          std::span<double> out) {
  if (!grid.is_float()) throw TypeError("bilinear_sample requires a float grid");
  const std::size_t h = grid.height();
  const std::size_t w = grid.width();
  const std::size_t c = grid.channels();
  if (out.size() != c) throw ShapeError("bilinear_sample: output span size != channels");
  if (grid.dtype() == DType::kF64) {
    return sample_impl(grid.f64(), h, w, c, x, y, 1.0, out);
  }
  return sample_impl(grid.f32(), h, w, c, x, y, 1.0, out);
}

BilinearSample bilinear_sample(const TensorGrid& grid, double x, double y) {
  if (!grid.is_float()) throw TypeError("bilinear_sample requires a float grid");
  BilinearSample s;
  s.value.assign(grid.channels(), 0.0);
  s.in_bounds = bilinear_sample_into(grid, x, y, s.value);
  return s;
}

WarpResult backward_warp(const TensorGrid& source, const TensorGrid& backward_flow) {
  if (!source.is_float()) throw TypeError("backward_warp requires a float source");
  check_image_shape(backward_flow, 2, "backward_flow");
  if (source.rank() < 2 || source.height() != backward_flow.height() ||
      source.width() != backward_flow.width()) {
    throw ShapeError("backward_warp: source and flow dims differ");
  }
  const std::size_t h = source.height();
  const std::size_t w = source.width();
  const std::size_t c = source.channels();
  WarpResult r{TensorGrid(DType::kF64, source.dims()), ValidityMask(h, w)};
  auto dst = r.warped.f64();
  parallel_for(h, [&](std::size_t y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      const double sx = static_cast<double>(x) + backward_flow.get(2 * p);
      const double sy = static_cast<double>(y) + backward_flow.get(2 * p + 1);
      const bool ok = bilinear_sample_into(source, sx, sy, dst.subspan(p * c, c));
      r.mask.set(p, ok);
    }
  });
  return r;
}

FlowComposition compose_flow(const TensorGrid& first, const TensorGrid& second) {
  check_image_shape(first, 2, "first flow");
  check_image_shape(second, 2, "second flow");
  if (first.dims() != second.dims()) throw ShapeError("compose_flow: dims differ");
  const std::size_t h = first.height();
  const std::size_t w = first.width();
  FlowComposition r{TensorGrid(DType::kF64, {h, w, 2}), ValidityMask(h, w)};
  auto dst = r.flow.f64();
  parallel_for(h, [&](std::size_t y) {
    double tail[2];
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      const double dx = first.get(2 * p);
      const double dy = first.get(2 * p + 1);
      const bool ok = bilinear_sample_into(second, static_cast<double>(x) + dx,
                                           static_cast<double>(y) + dy, tail);
      r.valid.set(p, ok);
      dst[2 * p] = ok ? dx + tail[0] : 0.0;
      dst[2 * p + 1] = ok ? dy + tail[1] : 0.0;
    }
  });
  return r;
}

}  // namespace geoflow
