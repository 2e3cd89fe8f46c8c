#include "geoflow/adapter.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "geoflow/errors.hpp"
#include "geoflow/gft_io.hpp"

namespace geoflow::adapter {

namespace fs = std::filesystem;

std::string frame_file(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.gft", index);
  return buf;
}

namespace {

std::vector<TensorGrid> read_seq(const fs::path& dir, const std::string& sub, std::size_t count,
                                 bool required) {
  const fs::path d = dir / sub;
  if (!fs::is_directory(d)) {
    if (required) throw InputError("missing " + sub + "/ in " + dir.string());
    return {};
  }
  std::vector<TensorGrid> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const fs::path f = d / frame_file(k);
    if (!fs::exists(f)) throw InputError("missing " + sub + "/" + frame_file(k) + " in " + dir.string());
    out.push_back(load_tensor(f));
  }
  return out;
}

std::vector<ValidityMask> read_masks(const fs::path& dir, const std::string& sub, std::size_t count) {
  std::vector<ValidityMask> out;
  for (const auto& g : read_seq(dir, sub, count, false)) out.push_back(ValidityMask::from_grid(g));
  return out;
}

TensorGrid as_f32(const TensorGrid& g) { return g.cast(DType::kF32); }

}  // namespace

AdapterData read_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("input directory not found: " + dir.string());
  const fs::path frames_dir = dir / "frames";
  if (!fs::is_directory(frames_dir)) throw InputError("missing frames/ in " + dir.string());
  std::size_t n = 0;
  while (fs::exists(frames_dir / frame_file(n))) ++n;
  if (n == 0) throw InputError("frames/ holds no " + frame_file(0));

  AdapterData data;
  auto& v = data.video;
  v.frames = read_seq(dir, "frames", n, true);
  v.depths = read_seq(dir, "depth", n, true);
  v.flow_fwd = read_seq(dir, "flow_fwd", n - 1, true);
  v.flow_bwd = read_seq(dir, "flow_bwd", n - 1, true);
  v.features = read_seq(dir, "features", n, false);
  v.confidence = read_seq(dir, "confidence", n, false);
  v.flow_fwd_valid = read_masks(dir, "valid_fwd", n - 1);
  v.flow_bwd_valid = read_masks(dir, "valid_bwd", n - 1);
  data.dynamic_masks = read_masks(dir, "masks", n);

  const fs::path cams = dir / "cameras.json";
  if (!fs::exists(cams)) throw InputError("missing cameras.json in " + dir.string());
  std::ifstream in(cams);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("cameras.json: " + std::string(e.what()));
  }
  const auto intr = j.at("intrinsics").get<std::vector<std::vector<double>>>();
  const auto extr = j.at("extrinsics").get<std::vector<std::vector<double>>>();
  if (intr.size() != n || extr.size() != n) {
    throw InputError("cameras.json: expected " + std::to_string(n) + " intrinsics and extrinsics");
  }
  for (std::size_t k = 0; k < n; ++k) {
    v.intrinsics.push_back(Intrinsics::from_span(intr[k]));
    v.extrinsics.push_back(PoseSE3::from_row_major(extr[k]));
  }
  return data;
}

void write_dir(const synth::RenderedVideo& video, const fs::path& dir) {
  for (const char* sub : {"frames", "depth", "flow_fwd", "flow_bwd", "valid_fwd", "valid_bwd", "masks"}) {
    fs::create_directories(dir / sub);
  }
  const std::size_t n = video.frames.size();
  nlohmann::json intr = nlohmann::json::array(), extr = nlohmann::json::array();
  for (std::size_t k = 0; k < n; ++k) {
    save_tensor(as_f32(video.frames[k]), dir / "frames" / frame_file(k));
    save_tensor(as_f32(video.depths[k]), dir / "depth" / frame_file(k));
    save_tensor(video.object_masks[k].to_grid(), dir / "masks" / frame_file(k));
    const auto a = video.K.to_array();
    intr.push_back(std::vector<double>(a.begin(), a.end()));
    const auto e = video.poses[k].to_row_major();
    extr.push_back(std::vector<double>(e.begin(), e.end()));
  }
  for (std::size_t k = 0; k + 1 < n; ++k) {
    save_tensor(as_f32(video.flow_fwd[k]), dir / "flow_fwd" / frame_file(k));
    save_tensor(as_f32(video.flow_bwd[k]), dir / "flow_bwd" / frame_file(k));
    save_tensor(video.valid_fwd[k].to_grid(), dir / "valid_fwd" / frame_file(k));
    save_tensor(video.valid_bwd[k].to_grid(), dir / "valid_bwd" / frame_file(k));
  }
  std::ofstream out(dir / "cameras.json");
  out << nlohmann::json{{"intrinsics", intr}, {"extrinsics", extr}}.dump(2) << "\n";
}

}  // namespace geoflow::adapter
