#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace geoflow {

// AdamW with decoupled weight decay and global-norm gradient clipping.
struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double max_grad_norm = 1.0;  // <= 0 disables clipping
};

void to_json(nlohmann::json& j, const AdamWConfig& c);
void from_json(const nlohmann::json& j, AdamWConfig& c);

class AdamW {
 public:
  AdamW(std::size_t n, AdamWConfig config);

  // Applies one update in place and returns the pre-clipping gradient norm.
  // `lr_scale` multiplies the configured learning rate (schedules).
  double step(std::span<double> params, std::span<const double> grad, double lr_scale = 1.0);

  const AdamWConfig& config() const { return config_; }
  long steps() const { return t_; }

 private:
  AdamWConfig config_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace geoflow
