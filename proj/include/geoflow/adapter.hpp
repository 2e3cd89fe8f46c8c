#pragma once

#include <filesystem>
#include <vector>

#include "geoflow/reward.hpp"
#include "geoflow/synthetic.hpp"

namespace geoflow::adapter {

// Predictor-dump directory layout, shared by synthetic and real inputs:
//
//   frames/NNNNNN.gft      H x W x 3, u8 or float in [0, 1]
//   depth/NNNNNN.gft       H x W float, metres
//   flow_fwd/NNNNNN.gft    H x W x 2 float, frame k -> k+1, (dx, dy) pixels
//   flow_bwd/NNNNNN.gft    H x W x 2 float, frame k+1 -> k
//   cameras.json           {"intrinsics": [[fx, fy, cx, cy], ...],
//                           "extrinsics": [[3x4 row-major world-to-camera], ...]}
//
// Optional: features/ (h x w x C), confidence/ (H x W), valid_fwd/ and
// valid_bwd/ (H x W u8 flow validity, per pair), masks/ (H x W u8, 1 on
// dynamic objects, per frame).
struct AdapterData {
  reward::VideoInputs video;
  std::vector<ValidityMask> dynamic_masks;  // empty when masks/ is absent
};

// Throws InputError naming the missing path ("depth/", "cameras.json", ...).
AdapterData read_dir(const std::filesystem::path& dir);

// Frames, depth and flow are written as f32.
void write_dir(const synth::RenderedVideo& video, const std::filesystem::path& dir);

std::string frame_file(std::size_t index);  // "000042.gft"

}  // namespace geoflow::adapter
