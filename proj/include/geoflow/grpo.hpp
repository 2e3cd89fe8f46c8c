#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoflow/flow_policy.hpp"
#include "geoflow/optim.hpp"
#include "geoflow/reward.hpp"
#include "geoflow/synthetic.hpp"

namespace geoflow::grpo {

struct TrainerConfig {
  int group_size = 4;            // G
  int groups_per_iteration = 1;  // groups sampled before each optimizer step
  flow::SamplerConfig sampler;   // K and a
  int grad_window = 5;           // M: first M of K steps carry gradient
  double clip_eps = 1e-3;
  double kl_beta = 0.004;
  AdamWConfig optimizer{.lr = 1e-3};
  double ema_decay = 0.99;
  int iterations = 200;
  std::uint64_t seed = 0;
  bool sync_noise = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainerConfig& c);
void from_json(const nlohmann::json& j, TrainerConfig& c);

// Terminal reward of a generated latent.
using RewardFn = std::function<double(std::span<const double>)>;

// decode_latent + score_pair with a fixed decode seed, so the reward is a
// deterministic function of z.
RewardFn scene_reward(const synth::SceneSpec& scene_template,
                      const reward::RewardConfig& config = {},
                      const synth::LatentRanges& ranges = {}, std::uint64_t decode_seed = 0);

struct GroupRollout {
  std::vector<std::vector<double>> eps_init;  // per member; identical under sync_noise
  std::vector<flow::Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

// (r - mean) / population std; all zeros when the std is below 1e-9.
std::vector<double> group_advantages(std::span<const double> rewards);

// Rollouts under `behavior` with noise streams derived from
// (seed, iteration, group, member). Reward empty-mask errors are rethrown as
// TrainingError naming the member (degenerate decode).
GroupRollout sample_group(const flow::MlpPolicy& behavior, const RewardFn& reward,
                          const TrainerConfig& config, int iteration, int group);

// pi_theta(x_next | x_t) / pi_old(x_next | x_t) for a recorded step.
double importance_ratio(const flow::MlpPolicy& theta, const flow::TrajectoryStep& step);

struct SurrogateResult {
  double loss = 0.0;            // -surrogate + kl_beta * kl
  double surrogate = 0.0;       // mean clipped objective over (member, window step)
  double kl = 0.0;              // window-mean KL to the reference
  double kl_trajectory = 0.0;   // KL summed over the window, averaged over members
  double clip_fraction = 0.0;   // share of terms where the clipped branch is active
  std::vector<double> grad;     // d loss / d theta
};

SurrogateResult surrogate_loss(const flow::MlpPolicy& theta, const flow::MlpPolicy& reference,
                               std::span<const GroupRollout> groups, const TrainerConfig& config);

struct IterationMetrics {
  int iter = 0;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  double kl = 0.0;
  double kl_trajectory = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  double loss = 0.0;
  int skipped_groups = 0;
};

void to_json(nlohmann::json& j, const IterationMetrics& m);

struct TrainResult {
  flow::MlpPolicy policy;      // last good parameters
  flow::MlpPolicy ema_policy;
  std::vector<IterationMetrics> metrics;
  bool aborted = false;
  std::string failure;
};

// Per-iteration callback (e.g. to stream JSON lines).
using MetricsSink = std::function<void(const IterationMetrics&)>;

TrainResult train(const TrainerConfig& config, const flow::MlpPolicy& pretrained,
                  const RewardFn& reward, const MetricsSink& sink = {});

// ---- toy setup ---------------------------------------------------------------

// Pretraining distribution for the toy generator: an even mixture of latents
// decoding to near-consistent scenes and latents decoding to visibly
// perturbed ones, both with a slow camera.
flow::DataSampler toy_latent_mixture();

// Hidden-32 MLP fit to toy_latent_mixture; the GRPO starting point.
flow::MlpPolicy toy_pretrained_policy(std::uint64_t seed = 0, int iterations = 2000);

struct GridOptimum {
  std::vector<double> z;
  double reward = 0.0;
  std::size_t evaluated = 0;
};

// Exhaustive search over [lo, hi]^d with `points` values per axis.
GridOptimum grid_search(const RewardFn& reward, std::size_t dim, double lo, double hi,
                        int points);

// Mean reward of `samples` SDE draws from the policy.
double mean_policy_reward(const flow::MlpPolicy& policy, const RewardFn& reward,
                          const flow::SamplerConfig& sampler, int samples, std::uint64_t seed);

}  // namespace geoflow::grpo
