#include "geoflow/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geoflow/errors.hpp"
#include "geoflow/parallel.hpp"
#include "geoflow/rng.hpp"

namespace geoflow::grpo {

void TrainerConfig::validate() const {
  sampler.validate();
  if (group_size < 2) throw ConfigError("group_size must be >= 2");
  if (groups_per_iteration < 1) throw ConfigError("groups_per_iteration must be >= 1");
  if (grad_window < 1) throw ConfigError("grad_window must be >= 1");
  if (grad_window > sampler.steps) throw ConfigError("grad_window exceeds steps");
  if (!(clip_eps > 0.0) || !std::isfinite(clip_eps)) throw ConfigError("clip_eps must be > 0");
  if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta)) throw ConfigError("kl_beta must be >= 0");
  if (!(optimizer.lr >= 0.0) || !std::isfinite(optimizer.lr)) throw ConfigError("lr must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("ema_decay must lie in [0, 1]");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
}

void to_json(nlohmann::json& j, const TrainerConfig& c) {
  j = {{"group_size", c.group_size},
       {"groups_per_iteration", c.groups_per_iteration},
       {"steps", c.sampler.steps},
       {"noise_scale", c.sampler.noise_scale},
       {"grad_window", c.grad_window},
       {"clip_eps", c.clip_eps},
       {"kl_beta", c.kl_beta},
       {"optimizer", c.optimizer},
       {"ema_decay", c.ema_decay},
       {"iterations", c.iterations},
       {"seed", c.seed},
       {"sync_noise", c.sync_noise}};
}

void from_json(const nlohmann::json& j, TrainerConfig& c) {
  c.group_size = j.value("group_size", c.group_size);
  c.groups_per_iteration = j.value("groups_per_iteration", c.groups_per_iteration);
  c.sampler.steps = j.value("steps", c.sampler.steps);
  c.sampler.noise_scale = j.value("noise_scale", c.sampler.noise_scale);
  c.grad_window = j.value("grad_window", c.grad_window);
  c.clip_eps = j.value("clip_eps", c.clip_eps);
  c.kl_beta = j.value("kl_beta", c.kl_beta);
  if (j.contains("optimizer")) j.at("optimizer").get_to(c.optimizer);
  c.optimizer.lr = j.value("lr", c.optimizer.lr);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
  c.iterations = j.value("iterations", c.iterations);
  c.seed = j.value("seed", c.seed);
  c.sync_noise = j.value("sync_noise", c.sync_noise);
}

RewardFn scene_reward(const synth::SceneSpec& scene_template, const reward::RewardConfig& config,
                      const synth::LatentRanges& ranges, std::uint64_t decode_seed) {
  config.validate();
  return [scene_template, config, ranges, decode_seed](std::span<const double> z) {
    const auto pair = synth::decode_latent(z, scene_template, decode_seed, ranges);
    return reward::score_pair(synth::to_pair_inputs(pair), config).r_pair;
  };
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  const double n = static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size(), 0.0);
  if (rewards.empty()) return adv;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  if (sd < 1e-9) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

namespace {

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = normal(rng);
  return v;
}

// Policy mean and log-density of a recorded transition under `policy`.
double step_logprob(const flow::MlpPolicy& policy, const flow::TrajectoryStep& step,
                    std::span<double> mean) {
  const auto v = policy.velocity(step.x_t, step.t);
  flow::sde_mean_into(step.x_t, v, step.t, step.dt, step.sigma, mean);
  return flow::transition_logprob(step.x_next, mean, step.sigma_step);
}

}  // namespace

GroupRollout sample_group(const flow::MlpPolicy& behavior, const RewardFn& reward,
                          const TrainerConfig& config, int iteration, int group) {
  config.validate();
  const auto g = static_cast<std::size_t>(config.group_size);
  const auto it = static_cast<std::uint64_t>(iteration);
  const auto gr = static_cast<std::uint64_t>(group);
  GroupRollout out;
  out.eps_init.resize(g);
  for (std::size_t i = 0; i < g; ++i) {
    Rng init = config.sync_noise ? make_rng(config.seed, {it, gr, 0x1A17})
                                 : make_rng(config.seed, {it, gr, i, 0x1A17});
    out.eps_init[i] = gaussian_vector(init, behavior.dim());
  }
  out.trajectories.resize(g);
  out.rewards.assign(g, 0.0);
  std::vector<std::string> errors(g);
  parallel_for(g, [&](std::size_t i) {
    Rng noise = make_rng(config.seed, {it, gr, i, 0x5DE});
    out.trajectories[i] = flow::rollout(behavior, out.eps_init[i], config.sampler, noise);
    try {
      out.rewards[i] = reward(out.trajectories[i].x0);
    } catch (const EmptyMaskError& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < g; ++i) {
    if (!errors[i].empty()) {
      throw TrainingError("degenerate decode in group " + std::to_string(group) + " member " +
                          std::to_string(i) + ": " + errors[i]);
    }
  }
  out.advantages = group_advantages(out.rewards);
  return out;
}

double importance_ratio(const flow::MlpPolicy& theta, const flow::TrajectoryStep& step) {
  std::vector<double> mean(step.x_t.size());
  return std::exp(step_logprob(theta, step, mean) - step.logp);
}

SurrogateResult surrogate_loss(const flow::MlpPolicy& theta, const flow::MlpPolicy& reference,
                               std::span<const GroupRollout> groups,
                               const TrainerConfig& config) {
  const auto window = static_cast<std::size_t>(config.grad_window);
  const std::size_t np = theta.param_count();

  // One slot per (group, member); reduced in index order afterwards.
  std::vector<std::pair<std::size_t, std::size_t>> members;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t i = 0; i < groups[g].trajectories.size(); ++i) members.emplace_back(g, i);
  }
  if (members.empty()) throw InputError("surrogate_loss: no trajectories");
  struct Slot {
    double surrogate = 0.0, kl = 0.0;
    std::size_t clipped = 0;
    std::vector<double> grad;
  };
  std::vector<Slot> slots(members.size());
  const double n_terms = static_cast<double>(members.size() * window);

  parallel_for(members.size(), [&](std::size_t m) {
    const auto [g, i] = members[m];
    const auto& traj = groups[g].trajectories[i];
    const double adv = groups[g].advantages[i];
    if (traj.steps.size() < window) throw InputError("surrogate_loss: trajectory shorter than window");
    Slot& slot = slots[m];
    slot.grad.assign(np, 0.0);
    const std::size_t d = theta.dim();
    std::vector<double> mean(d), mean_ref(d), upstream(d);
    for (std::size_t k = 0; k < window; ++k) {
      const auto& s = traj.steps[k];
      const double logp = step_logprob(theta, s, mean);
      const double ratio = std::exp(logp - s.logp);
      const double unclipped = ratio * adv;
      const double clipped =
          std::clamp(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps) * adv;
      const double coeff = flow::sde_mean_velocity_coeff(s.t, s.dt, s.sigma);
      const double var = s.sigma_step * s.sigma_step;
      // The min picks the unclipped branch (and its gradient) unless the
      // clipped one is strictly smaller.
      if (unclipped <= clipped) {
        slot.surrogate += unclipped;
        if (unclipped != 0.0) {
          for (std::size_t j = 0; j < d; ++j) upstream[j] = coeff * (s.x_next[j] - mean[j]) / var;
          theta.accumulate_velocity_grad(s.x_t, s.t, upstream, -unclipped / n_terms, slot.grad);
        }
      } else {
        slot.surrogate += clipped;
        ++slot.clipped;
      }
      if (config.kl_beta > 0.0) {
        const auto v_ref = reference.velocity(s.x_t, s.t);
        flow::sde_mean_into(s.x_t, v_ref, s.t, s.dt, s.sigma, mean_ref);
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = mean[j] - mean_ref[j];
          sq += diff * diff;
          upstream[j] = coeff * diff / var;
        }
        slot.kl += sq / (2.0 * var);
        theta.accumulate_velocity_grad(s.x_t, s.t, upstream, config.kl_beta / n_terms, slot.grad);
      }
    }
  });

  SurrogateResult r;
  r.grad.assign(np, 0.0);
  std::size_t clipped = 0;
  for (const auto& slot : slots) {
    r.surrogate += slot.surrogate;
    r.kl += slot.kl;
    clipped += slot.clipped;
    for (std::size_t j = 0; j < np; ++j) r.grad[j] += slot.grad[j];
  }
  r.kl_trajectory = r.kl / static_cast<double>(members.size());
  r.surrogate /= n_terms;
  r.kl /= n_terms;
  r.clip_fraction = static_cast<double>(clipped) / n_terms;
  r.loss = -r.surrogate + config.kl_beta * r.kl;
  return r;
}

void to_json(nlohmann::json& j, const IterationMetrics& m) {
  j = {{"iter", m.iter},
       {"reward_mean", m.reward_mean},
       {"reward_std", m.reward_std},
       {"kl", m.kl},
       {"kl_trajectory", m.kl_trajectory},
       {"clip_fraction", m.clip_fraction},
       {"grad_norm", m.grad_norm},
       {"loss", m.loss},
       {"skipped_groups", m.skipped_groups}};
}

TrainResult train(const TrainerConfig& config, const flow::MlpPolicy& pretrained,
                  const RewardFn& reward, const MetricsSink& sink) {
  config.validate();
  // Deterministic steps have no density, so there is nothing to differentiate.
  if (!(config.sampler.noise_scale > 0.0)) {
    throw ConfigError("noise_scale must be > 0 for policy-gradient training");
  }
  TrainResult result{pretrained, pretrained, {}, false, {}};
  const flow::MlpPolicy reference = pretrained;
  flow::MlpPolicy theta = pretrained;
  AdamW opt(theta.param_count(), config.optimizer);

  for (int iter = 0; iter < config.iterations; ++iter) {
    // Rollouts come from the parameters before this update (theta_old).
    std::vector<GroupRollout> groups;
    IterationMetrics m;
    m.iter = iter;
    for (int g = 0; g < config.groups_per_iteration; ++g) {
      try {
        groups.push_back(sample_group(theta, reward, config, iter, g));
      } catch (const TrainingError&) {
        ++m.skipped_groups;
      }
    }
    std::vector<double> all_rewards;
    for (const auto& g : groups) all_rewards.insert(all_rewards.end(), g.rewards.begin(), g.rewards.end());
    if (!all_rewards.empty()) {
      double mean = 0.0;
      for (double r : all_rewards) mean += r;
      mean /= static_cast<double>(all_rewards.size());
      double var = 0.0;
      for (double r : all_rewards) var += (r - mean) * (r - mean);
      m.reward_mean = mean;
      m.reward_std = std::sqrt(var / static_cast<double>(all_rewards.size()));
    }

    if (!groups.empty()) {
      const auto s = surrogate_loss(theta, reference, groups, config);
      bool finite = std::isfinite(s.loss);
      for (double v : s.grad) finite = finite && std::isfinite(v);
      if (!finite) {
        result.aborted = true;
        result.failure = "non-finite loss at iteration " + std::to_string(iter);
        break;
      }
      m.loss = s.loss;
      m.kl = s.kl;
      m.kl_trajectory = s.kl_trajectory;
      m.clip_fraction = s.clip_fraction;
      m.grad_norm = opt.step(theta.params(), s.grad);
      bool params_ok = true;
      for (double v : theta.params()) params_ok = params_ok && std::isfinite(v);
      if (!params_ok) {
        result.aborted = true;
        result.failure = "non-finite parameters after iteration " + std::to_string(iter);
        break;
      }
      auto ema = result.ema_policy.params();
      const auto cur = theta.params();
      for (std::size_t j = 0; j < ema.size(); ++j) {
        ema[j] = config.ema_decay * ema[j] + (1.0 - config.ema_decay) * cur[j];
      }
      result.policy = theta;
    }
    result.metrics.push_back(m);
    if (sink) sink(m);
  }
  return result;
}

flow::DataSampler toy_latent_mixture() {
  return [](Rng& rng, std::span<double> x) {
    static constexpr double kConsistent[4] = {-2.0, -2.0, -2.0, -1.5};
    static constexpr double kPerturbed[4] = {0.5, 0.5, 0.5, -1.5};
    static constexpr double kSpread = 0.5;
    std::bernoulli_distribution pick(0.5);
    std::normal_distribution<double> normal(0.0, kSpread);
    const double* c = pick(rng) ? kConsistent : kPerturbed;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = c[i % 4] + normal(rng);
  };
}

flow::MlpPolicy toy_pretrained_policy(std::uint64_t seed, int iterations) {
  auto policy = flow::MlpPolicy::random(synth::kLatentDim, 32, derive_seed(seed, {0x7E1}));
  flow::PretrainConfig cfg;
  cfg.iterations = iterations;
  cfg.seed = seed;
  flow::fm_pretrain(policy, toy_latent_mixture(), cfg);
  return policy;
}

GridOptimum grid_search(const RewardFn& reward, std::size_t dim, double lo, double hi,
                        int points) {
  if (points < 2 || dim == 0) throw ConfigError("grid_search: need >= 2 points and dim >= 1");
  std::size_t total = 1;
  for (std::size_t i = 0; i < dim; ++i) total *= static_cast<std::size_t>(points);
  const auto coord = [&](std::size_t index, std::vector<double>& z) {
    for (std::size_t i = 0; i < dim; ++i) {
      const auto k = index % static_cast<std::size_t>(points);
      index /= static_cast<std::size_t>(points);
      z[i] = lo + (hi - lo) * static_cast<double>(k) / (points - 1);
    }
  };
  std::vector<double> values(total);
  parallel_for(total, [&](std::size_t idx) {
    std::vector<double> z(dim);
    coord(idx, z);
    try {
      values[idx] = reward(z);
    } catch (const EmptyMaskError&) {
      values[idx] = -std::numeric_limits<double>::infinity();
    }
  });
  const auto best = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
  GridOptimum out;
  out.z.resize(dim);
  coord(best, out.z);
  out.reward = values[best];
  out.evaluated = total;
  return out;
}

double mean_policy_reward(const flow::MlpPolicy& policy, const RewardFn& reward,
                          const flow::SamplerConfig& sampler, int samples, std::uint64_t seed) {
  if (samples < 1) throw ConfigError("mean_policy_reward: samples must be >= 1");
  std::vector<double> r(static_cast<std::size_t>(samples));
  parallel_for(r.size(), [&](std::size_t i) {
    Rng rng = make_rng(seed, {i, 0xE7A1});
    const auto eps = gaussian_vector(rng, policy.dim());
    r[i] = reward(flow::rollout(policy, eps, sampler, rng).x0);
  });
  double s = 0.0;
  for (double v : r) s += v;
  return s / samples;
}

}  // namespace geoflow::grpo
