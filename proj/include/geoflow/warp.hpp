#pragma once

#include <span>
#include <vector>

#include "geoflow/tensor.hpp"

namespace geoflow {

// Pixel centers sit at integer coordinates, origin top-left, x right, y down.
// A coordinate is in bounds iff it lies in [0, W-1] x [0, H-1]; outside that
// box the sample is all-zero and flagged out of bounds (no clamping).
struct BilinearSample {
  std::vector<double> value;
  bool in_bounds = false;
};

BilinearSample bilinear_sample(const TensorGrid& grid, double x, double y);

// Writes grid.channels() values into `out`; returns the in-bounds flag.
bool bilinear_sample_into(const TensorGrid& grid, double x, double y,
                          std::span<double> out);

struct WarpResult {
  TensorGrid warped;  // f64, same dims as the source
  ValidityMask mask;
};

// warped(u) = source(u + flow(u)); mask(u) is the in-bounds flag.
WarpResult backward_warp(const TensorGrid& source, const TensorGrid& backward_flow);

struct FlowComposition {
  TensorGrid flow;  // f64 H x W x 2
  ValidityMask valid;
};

// Chains displacement fields: out(u) = first(u) + second(u + first(u)).
// Pixels whose intermediate location leaves the grid are invalid (flow 0).
FlowComposition compose_flow(const TensorGrid& first, const TensorGrid& second);

}  // namespace geoflow
