#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "geoflow/errors.hpp"
#include "geoflow/gft_io.hpp"
#include "geoflow/warp.hpp"

using namespace geoflow;

namespace {

TensorGrid ramp_image(std::size_t h, std::size_t w) {
  TensorGrid g(DType::kF64, {h, w, 1});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) g.set(y, x, 0, static_cast<double>(x));
  return g;
}

TensorGrid uniform_flow(std::size_t h, std::size_t w, double dx, double dy) {
  TensorGrid f(DType::kF64, {h, w, 2});
  for (std::size_t p = 0; p < h * w; ++p) {
    f.set(2 * p, dx);
    f.set(2 * p + 1, dy);
  }
  return f;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("geoflow_test_" + name);
}

}  // namespace

TEST_CASE("bilinear_sample on a constant field returns the constant") {
  TensorGrid g(DType::kF32, {4, 5, 1});
  for (std::size_t i = 0; i < g.size(); ++i) g.set(i, 7.0);
  const auto s = bilinear_sample(g, 2.3, 1.7);
  CHECK(s.in_bounds);
  CHECK(s.value[0] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("bilinear_sample blends neighbours") {
  const auto g = TensorGrid::from_f64({1, 2}, {0.0, 10.0});
  const auto s = bilinear_sample(g, 0.5, 0.0);
  CHECK(s.in_bounds);
  CHECK(s.value[0] == 5.0);
}

TEST_CASE("bilinear_sample outside the pixel-centre box is zero and out of bounds") {
  const auto g = TensorGrid::from_f64({2, 2}, {1.0, 2.0, 3.0, 4.0});
  const auto s = bilinear_sample(g, -0.01, 0.0);
  CHECK_FALSE(s.in_bounds);
  CHECK(s.value[0] == 0.0);
  CHECK(bilinear_sample(g, 1.0, 1.0).in_bounds);
  CHECK_FALSE(bilinear_sample(g, 1.0 + 1e-12, 0.0).in_bounds);
}

TEST_CASE("bilinear_sample rejects integer grids") {
  TensorGrid g(DType::kU8, {2, 2});
  CHECK_THROWS_AS(bilinear_sample(g, 0.0, 0.0), TypeError);
}

TEST_CASE("backward_warp with zero flow is the identity") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TensorGrid src(DType::kF64, {6, 7, 3});
  for (auto& v : src.f64()) v = u(rng);
  const auto r = backward_warp(src, uniform_flow(6, 7, 0.0, 0.0));
  CHECK(r.warped == src);
  CHECK(r.mask.count() == 42);
}

TEST_CASE("backward_warp shifts a ramp by one column and masks the last column") {
  const std::size_t h = 4, w = 6;
  const auto src = ramp_image(h, w);
  const auto r = backward_warp(src, uniform_flow(h, w, 1.0, 0.0));
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (x + 1 < w) {
        CHECK(r.mask.get(y, x));
        // Per-pixel oracle: the sample lands exactly on column x + 1.
        CHECK(r.warped.at(y, x) == src.at(y, x + 1));
      } else {
        CHECK_FALSE(r.mask.get(y, x));
        CHECK(r.warped.at(y, x) == 0.0);
      }
    }
  }
}

TEST_CASE("backward_warp sending every pixel off-grid gives an empty mask") {
  const std::size_t h = 5, w = 5;
  TensorGrid flow(DType::kF64, {h, w, 2});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      flow.set(y, x, 0, -5.0 - static_cast<double>(x));
      flow.set(y, x, 1, -5.0 - static_cast<double>(y));
    }
  const auto r = backward_warp(ramp_image(h, w), flow);
  CHECK(r.mask.count() == 0);
  for (double v : r.warped.f64()) CHECK(v == 0.0);
}

TEST_CASE("backward_warp rejects mismatched dims") {
  CHECK_THROWS_AS(backward_warp(ramp_image(4, 4), uniform_flow(4, 5, 0, 0)), ShapeError);
}

TEST_CASE("mask soundness over random flows") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-6.0, 6.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 9, w = 11;
    TensorGrid src(DType::kF64, {h, w, 2});
    for (auto& v : src.f64()) v = 1.0 + std::abs(u(rng));
    TensorGrid flow(DType::kF64, {h, w, 2});
    for (auto& v : flow.f64()) v = u(rng);
    const auto r = backward_warp(src, flow);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double sx = static_cast<double>(x) + flow.at(y, x, 0);
        const double sy = static_cast<double>(y) + flow.at(y, x, 1);
        const bool inside = sx >= 0 && sx <= double(w - 1) && sy >= 0 && sy <= double(h - 1);
        CHECK(r.mask.get(y, x) == inside);
        if (!r.mask.get(y, x)) {
          CHECK(r.warped.at(y, x, 0) == 0.0);
          CHECK(r.warped.at(y, x, 1) == 0.0);
        }
      }
  }
}

TEST_CASE("two successive warps agree with one warp by the composed flow") {
  const std::size_t h = 24, w = 28;
  TensorGrid src(DType::kF64, {h, w, 1});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      src.set(y, x, 0, std::sin(0.21 * double(x)) + std::cos(0.17 * double(y)));
  TensorGrid f(DType::kF64, {h, w, 2}), g(DType::kF64, {h, w, 2});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      f.set(y, x, 0, 0.7 + 0.3 * std::sin(0.1 * double(y)));
      f.set(y, x, 1, -0.4 + 0.2 * std::cos(0.13 * double(x)));
      g.set(y, x, 0, 1.3 + 0.25 * std::cos(0.09 * double(x + y)));
      g.set(y, x, 1, 0.6);
    }
  // Inner warp by g then outer by f samples src at u + f(u) + g(u + f(u)).
  const auto inner = backward_warp(src, g);
  const auto twice = backward_warp(inner.warped, f);
  const auto composed = compose_flow(f, g);
  const auto once = backward_warp(src, composed.flow);

  double bound = 0.0;
  for (std::size_t y = 1; y + 1 < h; ++y)
    for (std::size_t x = 1; x + 1 < w; ++x) {
      const double dxx = src.at(y, x + 1) - 2 * src.at(y, x) + src.at(y, x - 1);
      const double dyy = src.at(y + 1, x) - 2 * src.at(y, x) + src.at(y - 1, x);
      const double dxy = src.at(y + 1, x + 1) - src.at(y + 1, x) - src.at(y, x + 1) + src.at(y, x);
      bound = std::max({bound, std::abs(dxx), std::abs(dyy), std::abs(dxy)});
    }
  std::size_t checked = 0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double sx = double(x) + f.at(y, x, 0), sy = double(y) + f.at(y, x, 1);
      bool inner_ok = sx >= 0 && sy >= 0 && sx <= double(w - 1) && sy <= double(h - 1);
      for (double cy : {std::floor(sy), std::ceil(sy)})
        for (double cx : {std::floor(sx), std::ceil(sx)})
          inner_ok = inner_ok && inner.mask.get(std::size_t(cy), std::size_t(cx));
      if (!twice.mask.get(y, x) || !once.mask.get(y, x) || !composed.valid.get(y, x) || !inner_ok) continue;
      CHECK(std::abs(twice.warped.at(y, x) - once.warped.at(y, x)) <= bound);
      ++checked;
    }
  CHECK(checked > 200);
}

TEST_CASE("GFT round-trip of a 2x3 f64 grid is bit-identical") {
  const auto g = TensorGrid::from_f64({2, 3}, {1.5, -2.25, 3.0, 1e-300, 0.1, -0.0});
  const auto path = temp_file("roundtrip.gft");
  save_tensor(g, path);
  const auto back = load_tensor(path);
  CHECK(back == g);
  CHECK(std::memcmp(back.raw_data(), g.raw_data(), 6 * sizeof(double)) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("GFT round-trip holds for random grids of every dtype") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> rank_d(1, 4), dim_d(1, 5), type_d(1, 3);
  std::normal_distribution<double> val(0.0, 100.0);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<std::size_t> dims(static_cast<std::size_t>(rank_d(rng)));
    for (auto& d : dims) d = static_cast<std::size_t>(dim_d(rng));
    TensorGrid g(static_cast<DType>(type_d(rng)), dims);
    for (std::size_t i = 0; i < g.size(); ++i) g.set(i, g.is_float() ? val(rng) : double(rng() % 256));
    const auto bytes = encode_tensor(g);
    CHECK(decode_tensor(bytes) == g);
    CHECK(encode_tensor(decode_tensor(bytes)) == bytes);
  }
}

TEST_CASE("GFT decoding reports the offending field") {
  const auto g = TensorGrid::from_f32({4}, {1, 2, 3, 4});
  auto good = encode_tensor(g);

  auto expect_field = [](const std::vector<char>& bytes, const std::string& field) {
    try {
      decode_tensor(bytes);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find(field) != std::string::npos);
    }
  };

  auto bad = good;
  bad[3] = '2';  // "GFT2"
  expect_field(bad, "magic");

  bad = good;
  bad[4] = 9;
  expect_field(bad, "dtype");

  bad = good;
  bad[5] = 0;
  expect_field(bad, "rank");

  bad = good;
  bad[6] = 1;
  expect_field(bad, "reserved");

  bad = good;
  bad.resize(bad.size() - 4);  // 12 payload bytes for 4 f32 values
  expect_field(bad, "payload length");

  bad = good;
  bad.push_back(0);
  expect_field(bad, "payload length");

  // Two dims of 2^40 overflow the element count.
  std::vector<char> overflow = {'G', 'F', 'T', '1', 2, 2, 0, 0};
  for (int d = 0; d < 2; ++d) {
    std::uint64_t v = 1ull << 40;
    const char* p = reinterpret_cast<const char*>(&v);
    overflow.insert(overflow.end(), p, p + 8);
  }
  expect_field(overflow, "dims");
}

TEST_CASE("ValidityMask bookkeeping") {
  ValidityMask a(2, 3, true), b(2, 3);
  b.set(1, 2, true);
  CHECK(a.count() == 6);
  CHECK((a & b).count() == 1);
  CHECK(ValidityMask::from_grid(b.to_grid()) == b);
  CHECK_THROWS_AS(a & ValidityMask(3, 2), ShapeError);
}
