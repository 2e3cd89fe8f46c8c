#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoflow/optim.hpp"
#include "geoflow/rng.hpp"

namespace geoflow::flow {

// v(x, t) for t in [0, 1]. t = 1 is pure noise, t = 0 is data.
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual std::size_t dim() const = 0;
  virtual void velocity_into(std::span<const double> x, double t, std::span<double> out) const = 0;

  std::vector<double> velocity(std::span<const double> x, double t) const;
};

// Exact conditional-expectation velocity for N(0, I) data under the linear
// interpolant: (2t - 1) x / ((1 - t)^2 + t^2).
class GaussianVelocity final : public VelocityField {
 public:
  explicit GaussianVelocity(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  void velocity_into(std::span<const double> x, double t, std::span<double> out) const override;

 private:
  std::size_t dim_;
};

// (d+1) -> h -> h -> d tanh MLP; time is appended to the input. Parameters
// live in one flat vector, layer by layer, weight (row-major out x in) then
// bias.
class MlpPolicy final : public VelocityField {
 public:
  MlpPolicy(std::size_t dim, std::size_t hidden);

  // Scaled-uniform (Glorot) weights, zero biases.
  static MlpPolicy random(std::size_t dim, std::size_t hidden, std::uint64_t seed);

  std::size_t dim() const override { return dim_; }
  std::size_t hidden() const { return hidden_; }
  std::vector<std::size_t> layer_dims() const { return {dim_ + 1, hidden_, hidden_, dim_}; }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  void set_params(std::span<const double> p);

  void velocity_into(std::span<const double> x, double t, std::span<double> out) const override;

  // Exact gradient of upstream . v(x, t) with respect to the parameters.
  std::vector<double> velocity_grad(std::span<const double> x, double t,
                                    std::span<const double> upstream) const;
  // Accumulates scale * gradient into `grad` without allocating the result.
  void accumulate_velocity_grad(std::span<const double> x, double t,
                                std::span<const double> upstream, double scale,
                                std::span<double> grad) const;

  struct Block {
    std::string name;
    std::vector<std::size_t> dims;
    std::size_t offset;
  };
  std::vector<Block> blocks() const;

  bool operator==(const MlpPolicy& other) const {
    return dim_ == other.dim_ && hidden_ == other.hidden_ && params_ == other.params_;
  }

 private:
  std::size_t dim_;
  std::size_t hidden_;
  std::vector<double> params_;
};

// x_t = (1 - t) x0 + t noise.
std::vector<double> interpolate(std::span<const double> x0, std::span<const double> noise,
                                double t);

// ---- sampler ---------------------------------------------------------------

struct SamplerConfig {
  int steps = 10;            // K
  double noise_scale = 0.7;  // a

  void validate() const;
};

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

// sigma_t = a sqrt(t / (1 - t)), evaluated at the interval midpoint t - dt/2.
double step_sigma(double noise_scale, double t, double dt);

// Deterministic part of the SDE step given the velocity v at (x, t).
void sde_mean_into(std::span<const double> x, std::span<const double> v, double t, double dt,
                   double sigma, std::span<double> mean);
// d mean / d v (a scalar multiple of the identity).
double sde_mean_velocity_coeff(double t, double dt, double sigma);

struct StepResult {
  std::vector<double> x_next;
  std::vector<double> mean;
  double sigma_step = 0.0;
};

StepResult sde_step(const VelocityField& field, std::span<const double> x, double t, double dt,
                    double noise_scale, std::span<const double> z);

double transition_logprob(std::span<const double> x_next, std::span<const double> mean,
                          double sigma_step);

struct TrajectoryStep {
  double t = 0.0;
  double dt = 0.0;
  std::vector<double> x_t;
  std::vector<double> mean;
  double sigma = 0.0;       // sigma_t at the interval midpoint
  double sigma_step = 0.0;  // sigma * sqrt(dt)
  std::vector<double> z;
  std::vector<double> x_next;
  double logp = 0.0;  // 0 for deterministic (sigma_step = 0) steps, which have no density
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  std::vector<double> x0;
};

// K steps from t = 1 to t = 0 on a uniform grid, noise drawn from `rng`.
Trajectory rollout(const VelocityField& field, std::span<const double> eps_init,
                   const SamplerConfig& config, Rng& rng);

// Euler ODE sample (a = 0) without recording the trajectory.
std::vector<double> ode_sample(const VelocityField& field, std::span<const double> eps_init,
                               int steps);

// ---- pretraining -------------------------------------------------------------

using DataSampler = std::function<void(Rng&, std::span<double>)>;

struct PretrainConfig {
  int iterations = 3000;
  int batch = 64;
  std::uint64_t seed = 0;
  AdamWConfig optimizer{.lr = 3e-3, .weight_decay = 0.0, .max_grad_norm = 0.0};
  double lr_final_fraction = 0.1;  // cosine decay to this fraction of lr

  void validate() const;
};

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

struct PretrainResult {
  std::vector<double> loss_curve;  // minibatch flow-matching loss per iteration
};

// Flow-matching regression of v onto (noise - x0) with t ~ U(0, 1).
// Throws TrainingError when the loss exceeds 1e6 or turns non-finite.
PretrainResult fm_pretrain(MlpPolicy& policy, const DataSampler& data,
                           const PretrainConfig& config);

// ---- checkpoints ---------------------------------------------------------------

// Writes <dir>/<name>.<block>.gft per parameter block and <dir>/<name>.json.
void save_checkpoint(const MlpPolicy& policy, const std::filesystem::path& dir,
                     const std::string& name, const nlohmann::json& metadata = {});
MlpPolicy load_checkpoint(const std::filesystem::path& manifest);

}  // namespace geoflow::flow
