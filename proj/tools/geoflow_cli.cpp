// geoflow command-line tool: score, synth, pretrain, grpo, metrics.
//
// Exit codes: 0 success, 2 input/config error, 3 numeric/training error.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "geoflow/adapter.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/flow_policy.hpp"
#include "geoflow/gft_io.hpp"
#include "geoflow/grpo.hpp"
#include "geoflow/manifest.hpp"
#include "geoflow/metrics.hpp"
#include "geoflow/parallel.hpp"
#include "geoflow/reward.hpp"
#include "geoflow/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace geoflow;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// Output directory with its writer lock held for the lifetime of the object.
struct OutputDir {
  explicit OutputDir(const fs::path& dir) : path(dir) {
    fs::create_directories(dir);
    lock.emplace(dir / ".geoflow.lock");
  }
  fs::path path;
  std::optional<FileLock> lock;
};

// ---- score -----------------------------------------------------------------

struct ScoreArgs {
  std::string input, config, out, dump_maps;
};

int cmd_score(const ScoreArgs& a) {
  const auto t0 = Clock::now();
  reward::RewardConfig cfg;
  if (!a.config.empty()) cfg = load_json(a.config).get<reward::RewardConfig>();
  cfg.validate();
  const auto data = adapter::read_dir(a.input);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  FileLock lock(a.out + ".lock");
  const auto score = reward::score_video(data.video, cfg);

  RunManifest m{"score", cfg, 0, {a.input}, {a.out}};
  if (!a.dump_maps.empty()) {
    fs::create_directories(a.dump_maps);
    for (std::size_t i = 0; i < score.pairs.size(); ++i) {
      const auto name = adapter::frame_file(static_cast<std::size_t>(score.taus[i]));
      const fs::path d(a.dump_maps);
      save_tensor(score.pairs[i].quality_map, d / ("q_geo_" + name));
      save_tensor(score.pairs[i].weight_map, d / ("weight_" + name));
      save_tensor(score.pairs[i].epe_map, d / ("epe_" + name));
      save_tensor(score.pairs[i].depth_error_map, d / ("depth_error_" + name));
    }
    m.outputs.push_back(a.dump_maps);
  }
  json report = reward::video_report(score, cfg);
  m.duration_s = seconds_since(t0);
  report["manifest"] = to_json(m);
  write_json(a.out, report);
  return 0;
}

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string spec, out;
  std::vector<std::string> perturb;
  std::uint64_t seed = 0;
};

synth::PerturbationSpec parse_perturbations(const std::vector<std::string>& items) {
  json j = json::object();
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("--perturb expects key=value, got " + item);
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (value == "true" || value == "false") {
      j[key] = value == "true";
      continue;
    }
    try {
      std::size_t used = 0;
      j[key] = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::logic_error&) {
      throw InputError("--perturb " + key + ": not a number: " + value);
    }
  }
  static const char* known[] = {"wobble_px", "texture_drift_px", "object_morph", "depth_noise_rel",
                                "corrupt_flow"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(std::begin(known), std::end(known), k) == std::end(known)) {
      throw InputError("--perturb: unknown key " + k);
    }
  }
  auto p = j.get<synth::PerturbationSpec>();
  p.validate();
  return p;
}

int cmd_synth(const SynthArgs& a) {
  const auto t0 = Clock::now();
  synth::SceneSpec spec = synth::default_scene();
  if (!a.spec.empty()) spec = load_json(a.spec).get<synth::SceneSpec>();
  spec.validate();
  const auto p = parse_perturbations(a.perturb);
  OutputDir out(a.out);
  const auto video = synth::render_video(spec, p, a.seed);
  adapter::write_dir(video, out.path);
  RunManifest m{"synth", {{"spec", spec}, {"perturbation", p}}, a.seed, {}, {a.out}};
  if (!a.spec.empty()) m.inputs.push_back(a.spec);
  m.duration_s = seconds_since(t0);
  write_json(out.path / "manifest.json", to_json(m));
  return 0;
}

// ---- pretrain --------------------------------------------------------------

struct TrainArgs {
  std::string config, out, policy;
  std::optional<int> iterations, grad_window;
  std::optional<std::uint64_t> seed;
  std::optional<double> clip_eps;
  std::optional<bool> sync_noise;
};

struct PretrainSetup {
  flow::PretrainConfig train;
  std::size_t hidden = 32;

  json to_json() const {
    json j = train;
    j["hidden"] = hidden;
    j["data"] = "toy_latent_mixture";
    return j;
  }
};

PretrainSetup pretrain_setup(const json& j) {
  PretrainSetup s;
  s.train.iterations = 2000;
  if (!j.is_null()) {
    j.get_to(s.train);
    s.hidden = j.value("hidden", s.hidden);
    if (j.value("data", std::string("toy_latent_mixture")) != "toy_latent_mixture") {
      throw ConfigError("pretrain: only the toy_latent_mixture data source is built in");
    }
  }
  s.train.validate();
  if (s.hidden == 0) throw ConfigError("pretrain: hidden must be positive");
  return s;
}

int cmd_pretrain(const TrainArgs& a) {
  const auto t0 = Clock::now();
  auto setup = pretrain_setup(a.config.empty() ? json() : load_json(a.config));
  if (a.iterations) setup.train.iterations = *a.iterations;
  if (a.seed) setup.train.seed = *a.seed;
  OutputDir out(a.out);
  auto policy = flow::MlpPolicy::random(synth::kLatentDim, setup.hidden,
                                        derive_seed(setup.train.seed, {0x7E1}));
  const auto result = flow::fm_pretrain(policy, grpo::toy_latent_mixture(), setup.train);
  std::ofstream metrics(out.path / "metrics.jsonl");
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
    metrics << json{{"iter", i}, {"loss", result.loss_curve[i]}}.dump() << "\n";
  }
  flow::save_checkpoint(policy, out.path, "policy", {{"stage", "pretrain"}});
  RunManifest m{"pretrain", setup.to_json(), setup.train.seed, {}, {a.out}};
  if (!a.config.empty()) m.inputs.push_back(a.config);
  m.duration_s = seconds_since(t0);
  write_json(out.path / "manifest.json", to_json(m));
  return 0;
}

// ---- grpo ------------------------------------------------------------------

int cmd_grpo(const TrainArgs& a) {
  const auto t0 = Clock::now();
  const json j = a.config.empty() ? json::object() : load_json(a.config);
  auto cfg = j.get<grpo::TrainerConfig>();
  if (a.iterations) cfg.iterations = *a.iterations;
  if (a.seed) cfg.seed = *a.seed;
  if (a.grad_window) cfg.grad_window = *a.grad_window;
  if (a.clip_eps) cfg.clip_eps = *a.clip_eps;
  if (a.sync_noise) cfg.sync_noise = *a.sync_noise;
  cfg.validate();
  if (!(cfg.sampler.noise_scale > 0.0)) throw ConfigError("noise_scale must be > 0 for training");

  reward::RewardConfig rcfg;
  if (j.contains("reward")) rcfg = j.at("reward").get<reward::RewardConfig>();
  synth::SceneSpec scene = synth::grpo_template();
  if (j.contains("template")) scene = j.at("template").get<synth::SceneSpec>();
  const std::uint64_t decode_seed = j.value("decode_seed", std::uint64_t{0});
  const auto setup = pretrain_setup(j.contains("pretrain") ? j.at("pretrain") : json());

  OutputDir out(a.out);
  flow::MlpPolicy pretrained(synth::kLatentDim, setup.hidden);
  std::vector<std::string> inputs;
  if (!a.config.empty()) inputs.push_back(a.config);
  if (!a.policy.empty()) {
    pretrained = flow::load_checkpoint(a.policy);
    inputs.push_back(a.policy);
  } else {
    pretrained = flow::MlpPolicy::random(synth::kLatentDim, setup.hidden,
                                         derive_seed(setup.train.seed, {0x7E1}));
    flow::fm_pretrain(pretrained, grpo::toy_latent_mixture(), setup.train);
  }
  if (pretrained.dim() != synth::kLatentDim) throw InputError("policy dimension must be 4");

  const auto reward_fn = grpo::scene_reward(scene, rcfg, {}, decode_seed);
  std::ofstream metrics(out.path / "metrics.jsonl");
  const auto result = grpo::train(cfg, pretrained, reward_fn, [&](const grpo::IterationMetrics& it) {
    metrics << json(it).dump() << "\n";
    metrics.flush();
  });

  const json meta = {{"stage", "grpo"}, {"iterations_completed", result.metrics.size()}};
  flow::save_checkpoint(result.policy, out.path, "policy", meta);
  flow::save_checkpoint(result.ema_policy, out.path, "policy_ema", meta);

  json config = cfg;
  config["reward"] = rcfg;
  config["template"] = scene;
  config["decode_seed"] = decode_seed;
  if (a.policy.empty()) config["pretrain"] = setup.to_json();
  RunManifest m{"grpo", config, cfg.seed, inputs, {a.out}};
  m.extra["ablation"] = {{"sync_noise", cfg.sync_noise},
                         {"grad_window", cfg.grad_window},
                         {"clip_eps", cfg.clip_eps}};
  m.extra["status"] = result.aborted ? "aborted" : "completed";
  if (result.aborted) m.extra["failure"] = result.failure;
  m.duration_s = seconds_since(t0);
  write_json(out.path / "manifest.json", to_json(m));
  if (result.aborted) {
    std::cerr << "error: " << result.failure << " (last good checkpoint kept)\n";
    return kExitNumeric;
  }
  return 0;
}

// ---- metrics ---------------------------------------------------------------

struct MetricsArgs {
  std::string input, out;
  int stride = 4;
  std::size_t grid_step = 4;
};

int cmd_metrics(const MetricsArgs& a) {
  const auto t0 = Clock::now();
  const auto data = adapter::read_dir(a.input);
  const auto& video = data.video;
  const int n = static_cast<int>(video.frame_count());
  if (a.stride < 1 || a.stride > n - 1) {
    throw InputError("stride " + std::to_string(a.stride) + " needs at least " +
                     std::to_string(a.stride + 1) + " frames, input has " + std::to_string(n));
  }
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  FileLock lock(a.out + ".lock");

  json per_pair = json::array(), warnings = json::array();
  double sum = 0.0;
  std::size_t scored = 0, skipped = 0;
  for (int tau = 0; tau + a.stride < n; ++tau) {
    auto in = reward::pair_inputs(video, tau, a.stride);
    TensorGrid flow = in.flow_fwd.cast(DType::kF64);
    if (in.fwd_valid) {
      auto f = flow.f64();
      for (std::size_t p = 0; p < in.fwd_valid->size(); ++p) {
        if (!in.fwd_valid->get(p)) f[2 * p] = f[2 * p + 1] = std::nan("");
      }
    }
    std::optional<ValidityMask> still;
    if (!data.dynamic_masks.empty()) {
      const auto& da = data.dynamic_masks.at(static_cast<std::size_t>(tau));
      const auto& db = data.dynamic_masks.at(static_cast<std::size_t>(tau + a.stride));
      still = ValidityMask(da.height(), da.width(), true);
      for (std::size_t p = 0; p < da.size(); ++p) still->set(p, !da.get(p) && !db.get(p));
    }
    try {
      const auto corr = metrics::sample_correspondences(flow, a.grid_step, still ? &*still : nullptr);
      const auto F = metrics::eight_point(corr);
      const auto s = metrics::sampson_error(F, corr);
      for (double e : s.per_pair) {
        if (!std::isnan(e)) sum += e;
      }
      scored += s.scored;
      skipped += s.skipped;
      per_pair.push_back({{"tau", tau}, {"sampson_mean", s.mean}, {"pairs", s.scored},
                          {"skipped", s.skipped}});
    } catch (const DegeneracyError& e) {
      warnings.push_back("tau " + std::to_string(tau) + ": " + e.what());
    } catch (const InsufficientDataError& e) {
      warnings.push_back("tau " + std::to_string(tau) + ": " + e.what());
    }
  }
  json report = {{"sampson_mean", scored > 0 ? json(sum / static_cast<double>(scored)) : json(nullptr)},
                 {"pairs", scored},
                 {"skipped", skipped},
                 {"dynamic_degree", metrics::dynamic_degree(video.flow_fwd)},
                 {"stride", a.stride},
                 {"grid_step", a.grid_step},
                 {"coordinates", "pixels"},
                 {"intrinsics", video.intrinsics.front().to_array()},
                 {"per_pair", per_pair},
                 {"warnings", warnings}};
  RunManifest m{"metrics", {{"stride", a.stride}, {"grid_step", a.grid_step}}, 0, {a.input}, {a.out}};
  m.duration_s = seconds_since(t0);
  report["manifest"] = to_json(m);
  write_json(a.out, report);
  return 0;
}

int exit_code(const Error& e) {
  const auto& k = e.kind();
  if (k == "numeric" || k == "training" || k == "empty_mask" || k == "degeneracy") return kExitNumeric;
  return kExitInput;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geoflow: geometry-consistency reward, Flow-GRPO toy and epipolar metrics"};
  app.require_subcommand(1);
  int threads = -1;
  app.add_option("--threads", threads, "Worker threads (0 = auto; default: GEOFLOW_THREADS)");

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "Score an adapter-layout directory");
  sc->add_option("--input", score.input, "Adapter directory")->required();
  sc->add_option("--config", score.config, "Reward config JSON");
  sc->add_option("--out", score.out, "Report JSON")->required();
  sc->add_option("--dump-maps", score.dump_maps, "Directory for per-pair diagnostic maps");

  SynthArgs synth_args;
  auto* sy = app.add_subcommand("synth", "Render a synthetic scene into the adapter layout");
  sy->add_option("--spec", synth_args.spec, "Scene spec JSON");
  sy->add_option("--perturb", synth_args.perturb, "Perturbation key=value (repeatable)");
  sy->add_option("--seed", synth_args.seed, "Perturbation seed");
  sy->add_option("--out", synth_args.out, "Output directory")->required();

  TrainArgs pre, gr;
  auto* pt = app.add_subcommand("pretrain", "Flow-matching pretraining of the toy generator");
  pt->add_option("--config", pre.config, "Pretrain config JSON");
  pt->add_option("--out", pre.out, "Output directory")->required();
  pt->add_option("--iterations", pre.iterations);
  pt->add_option("--seed", pre.seed);

  auto* gp = app.add_subcommand("grpo", "GRPO fine-tuning of the toy generator");
  gp->add_option("--config", gr.config, "Trainer config JSON");
  gp->add_option("--out", gr.out, "Output directory")->required();
  gp->add_option("--policy", gr.policy, "Pretrained checkpoint manifest (default: pretrain in-process)");
  gp->add_option("--iterations", gr.iterations);
  gp->add_option("--seed", gr.seed);
  gp->add_option("--grad-window", gr.grad_window, "M");
  gp->add_option("--clip-eps", gr.clip_eps);
  gp->add_option("--sync-noise", gr.sync_noise, "Share the initial noise within a group (true/false)");

  MetricsArgs met;
  auto* mt = app.add_subcommand("metrics", "Sampson error and dynamic degree of an adapter directory");
  mt->add_option("--input", met.input, "Adapter directory")->required();
  mt->add_option("--stride", met.stride, "Frame stride")->capture_default_str();
  mt->add_option("--grid-step", met.grid_step, "Correspondence grid step in pixels")->capture_default_str();
  mt->add_option("--out", met.out, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }
  if (threads >= 0) set_num_threads(threads);

  try {
    if (sc->parsed()) return cmd_score(score);
    if (sy->parsed()) return cmd_synth(synth_args);
    if (pt->parsed()) return cmd_pretrain(pre);
    if (gp->parsed()) return cmd_grpo(gr);
    if (mt->parsed()) return cmd_metrics(met);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
