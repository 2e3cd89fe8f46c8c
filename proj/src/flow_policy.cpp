#include "geoflow/flow_policy.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "geoflow/errors.hpp"
#include "geoflow/gft_io.hpp"

namespace geoflow::flow {

namespace {

void check_input(std::span<const double> x, double t, std::size_t dim) {
  if (x.size() != dim) {
    throw ShapeError("velocity: expected a " + std::to_string(dim) + "-vector, got " +
                     std::to_string(x.size()));
  }
  if (!std::isfinite(t)) throw NumericError("velocity: non-finite time");
  if (t < 0.0 || t > 1.0) throw DomainError("velocity: t must lie in [0, 1]");
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericError("velocity: non-finite state");
  }
}

// Hidden activations of one forward pass.
struct Activations {
  std::vector<double> input, h1, h2;
};

}  // namespace

std::vector<double> VelocityField::velocity(std::span<const double> x, double t) const {
  std::vector<double> out(dim());
  velocity_into(x, t, out);
  return out;
}

void GaussianVelocity::velocity_into(std::span<const double> x, double t,
                                     std::span<double> out) const {
  check_input(x, t, dim_);
  const double scale = (2.0 * t - 1.0) / ((1.0 - t) * (1.0 - t) + t * t);
  for (std::size_t i = 0; i < dim_; ++i) out[i] = scale * x[i];
}

MlpPolicy::MlpPolicy(std::size_t dim, std::size_t hidden) : dim_(dim), hidden_(hidden) {
  if (dim == 0 || hidden == 0) throw ConfigError("MlpPolicy: dims must be positive");
  const std::size_t in = dim + 1;
  params_.assign(hidden * in + hidden + hidden * hidden + hidden + dim * hidden + dim, 0.0);
}

MlpPolicy MlpPolicy::random(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
  MlpPolicy p(dim, hidden);
  Rng rng = make_rng(seed, {0x4D4C50});
  for (const auto& b : p.blocks()) {
    if (b.dims.size() != 2) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(b.dims[0] + b.dims[1]));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (std::size_t i = 0; i < b.dims[0] * b.dims[1]; ++i) p.params_[b.offset + i] = u(rng);
  }
  return p;
}

void MlpPolicy::set_params(std::span<const double> p) {
  if (p.size() != params_.size()) throw ShapeError("MlpPolicy: parameter count mismatch");
  for (double v : p) {
    if (!std::isfinite(v)) throw NumericError("MlpPolicy: non-finite parameter");
  }
  params_.assign(p.begin(), p.end());
}

std::vector<MlpPolicy::Block> MlpPolicy::blocks() const {
  const auto dims = layer_dims();
  std::vector<Block> out;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    out.push_back({"l" + std::to_string(l) + ".weight", {dims[l + 1], dims[l]}, offset});
    offset += dims[l + 1] * dims[l];
    out.push_back({"l" + std::to_string(l) + ".bias", {dims[l + 1]}, offset});
    offset += dims[l + 1];
  }
  return out;
}

namespace {

// y = W a + b for a layer stored at `offset` in `p`.
void affine(const double* p, std::size_t out_dim, std::span<const double> a, double* y) {
  const std::size_t in_dim = a.size();
  const double* bias = p + out_dim * in_dim;
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double* row = p + o * in_dim;
    double s = bias[o];
    for (std::size_t i = 0; i < in_dim; ++i) s += row[i] * a[i];
    y[o] = s;
  }
}

}  // namespace

void MlpPolicy::velocity_into(std::span<const double> x, double t, std::span<double> out) const {
  check_input(x, t, dim_);
  if (out.size() != dim_) throw ShapeError("velocity: output size mismatch");
  const std::size_t in = dim_ + 1;
  std::vector<double> a(in), h1(hidden_), h2(hidden_);
  std::copy(x.begin(), x.end(), a.begin());
  a[dim_] = t;
  const double* p = params_.data();
  affine(p, hidden_, a, h1.data());
  for (auto& v : h1) v = std::tanh(v);
  p += hidden_ * in + hidden_;
  affine(p, hidden_, h1, h2.data());
  for (auto& v : h2) v = std::tanh(v);
  p += hidden_ * hidden_ + hidden_;
  affine(p, dim_, h2, out.data());
}

std::vector<double> MlpPolicy::velocity_grad(std::span<const double> x, double t,
                                             std::span<const double> upstream) const {
  std::vector<double> grad(params_.size(), 0.0);
  accumulate_velocity_grad(x, t, upstream, 1.0, grad);
  return grad;
}

void MlpPolicy::accumulate_velocity_grad(std::span<const double> x, double t,
                                         std::span<const double> upstream, double scale,
                                         std::span<double> grad) const {
  check_input(x, t, dim_);
  if (upstream.size() != dim_) throw ShapeError("velocity_grad: upstream size mismatch");
  if (grad.size() != params_.size()) throw ShapeError("velocity_grad: gradient size mismatch");
  const std::size_t in = dim_ + 1;
  const std::size_t h = hidden_;
  std::vector<double> a(in), h1(h), h2(h);
  std::copy(x.begin(), x.end(), a.begin());
  a[dim_] = t;
  const double* p0 = params_.data();
  const double* p1 = p0 + h * in + h;
  const double* p2 = p1 + h * h + h;
  affine(p0, h, a, h1.data());
  for (auto& v : h1) v = std::tanh(v);
  affine(p1, h, h1, h2.data());
  for (auto& v : h2) v = std::tanh(v);

  double* g0 = grad.data();
  double* g1 = g0 + h * in + h;
  double* g2 = g1 + h * h + h;

  // output layer
  std::vector<double> dh2(h, 0.0);
  for (std::size_t o = 0; o < dim_; ++o) {
    const double g = scale * upstream[o];
    if (g == 0.0) continue;
    for (std::size_t i = 0; i < h; ++i) {
      g2[o * h + i] += g * h2[i];
      dh2[i] += p2[o * h + i] * g;
    }
    g2[dim_ * h + o] += g;
  }
  // second hidden layer
  std::vector<double> dh1(h, 0.0);
  for (std::size_t o = 0; o < h; ++o) {
    const double dz = dh2[o] * (1.0 - h2[o] * h2[o]);
    if (dz == 0.0) continue;
    for (std::size_t i = 0; i < h; ++i) {
      g1[o * h + i] += dz * h1[i];
      dh1[i] += p1[o * h + i] * dz;
    }
    g1[h * h + o] += dz;
  }
  // first hidden layer
  for (std::size_t o = 0; o < h; ++o) {
    const double dz = dh1[o] * (1.0 - h1[o] * h1[o]);
    if (dz == 0.0) continue;
    for (std::size_t i = 0; i < in; ++i) g0[o * in + i] += dz * a[i];
    g0[h * in + o] += dz;
  }
}

std::vector<double> interpolate(std::span<const double> x0, std::span<const double> noise,
                                double t) {
  if (x0.size() != noise.size()) throw ShapeError("interpolate: size mismatch");
  std::vector<double> out(x0.size());
  // the endpoints are returned untouched so t = 0 and t = 1 are exact
  for (std::size_t i = 0; i < x0.size(); ++i) {
    out[i] = t == 0.0 ? x0[i] : t == 1.0 ? noise[i] : (1.0 - t) * x0[i] + t * noise[i];
  }
  return out;
}

// ---- sampler ---------------------------------------------------------------

void SamplerConfig::validate() const {
  if (steps < 2) throw ConfigError("sampler steps must be >= 2");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw ConfigError("noise_scale must be finite and >= 0");
  }
}

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = {{"steps", c.steps}, {"noise_scale", c.noise_scale}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  c.steps = j.value("steps", c.steps);
  c.noise_scale = j.value("noise_scale", c.noise_scale);
}

double step_sigma(double noise_scale, double t, double dt) {
  const double tm = t - 0.5 * dt;
  return noise_scale * std::sqrt(tm / (1.0 - tm));
}

void sde_mean_into(std::span<const double> x, std::span<const double> v, double t, double dt,
                   double sigma, std::span<double> mean) {
  const double k = sigma * sigma / (2.0 * t);
  for (std::size_t i = 0; i < x.size(); ++i) {
    mean[i] = x[i] - (v[i] + k * (x[i] + (1.0 - t) * v[i])) * dt;
  }
}

double sde_mean_velocity_coeff(double t, double dt, double sigma) {
  return -dt * (1.0 + sigma * sigma * (1.0 - t) / (2.0 * t));
}

StepResult sde_step(const VelocityField& field, std::span<const double> x, double t, double dt,
                    double noise_scale, std::span<const double> z) {
  if (!(t > 0.0)) throw DomainError("sde_step: t must be > 0");
  if (!(dt > 0.0) || dt > t + 1e-12) throw DomainError("sde_step: dt must lie in (0, t]");
  if (z.size() != x.size()) throw ShapeError("sde_step: noise size mismatch");
  const auto v = field.velocity(x, t);
  StepResult r;
  const double sigma = step_sigma(noise_scale, t, dt);
  r.sigma_step = sigma * std::sqrt(dt);
  r.mean.resize(x.size());
  sde_mean_into(x, v, t, dt, sigma, r.mean);
  r.x_next.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r.x_next[i] = r.mean[i] + r.sigma_step * z[i];
  for (double value : r.x_next) {
    if (!std::isfinite(value)) throw NumericError("sde_step: non-finite state");
  }
  return r;
}

double transition_logprob(std::span<const double> x_next, std::span<const double> mean,
                          double sigma_step) {
  if (!(sigma_step > 0.0)) throw DomainError("transition_logprob: sigma_step must be > 0");
  if (x_next.size() != mean.size()) throw ShapeError("transition_logprob: size mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double r = x_next[i] - mean[i];
    sq += r * r;
  }
  const double d = static_cast<double>(mean.size());
  const double var = sigma_step * sigma_step;
  return -0.5 * d * std::log(2.0 * std::numbers::pi * var) - sq / (2.0 * var);
}

Trajectory rollout(const VelocityField& field, std::span<const double> eps_init,
                   const SamplerConfig& config, Rng& rng) {
  config.validate();
  if (eps_init.size() != field.dim()) throw ShapeError("rollout: eps_init size mismatch");
  std::normal_distribution<double> normal(0.0, 1.0);
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(config.steps));
  std::vector<double> x(eps_init.begin(), eps_init.end());
  const double dt = 1.0 / config.steps;
  for (int k = 0; k < config.steps; ++k) {
    TrajectoryStep s;
    s.t = 1.0 - static_cast<double>(k) / config.steps;
    s.dt = (k + 1 == config.steps) ? s.t : dt;  // land exactly on t = 0
    s.x_t = x;
    s.z.resize(x.size());
    for (auto& v : s.z) v = normal(rng);
    auto r = sde_step(field, x, s.t, s.dt, config.noise_scale, s.z);
    s.mean = std::move(r.mean);
    s.sigma = step_sigma(config.noise_scale, s.t, s.dt);
    s.sigma_step = r.sigma_step;
    s.x_next = std::move(r.x_next);
    s.logp = s.sigma_step > 0.0 ? transition_logprob(s.x_next, s.mean, s.sigma_step) : 0.0;
    x = s.x_next;
    traj.steps.push_back(std::move(s));
  }
  traj.x0 = std::move(x);
  return traj;
}

std::vector<double> ode_sample(const VelocityField& field, std::span<const double> eps_init,
                               int steps) {
  if (steps < 1) throw ConfigError("ode_sample: steps must be >= 1");
  std::vector<double> x(eps_init.begin(), eps_init.end());
  std::vector<double> v(x.size());
  for (int k = 0; k < steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) / steps;
    const double dt = (k + 1 == steps) ? t : 1.0 / steps;
    field.velocity_into(x, t, v);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= v[i] * dt;
  }
  return x;
}

// ---- pretraining -------------------------------------------------------------

void PretrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("pretrain iterations must be >= 1");
  if (batch < 1) throw ConfigError("pretrain batch must be >= 1");
  if (!(lr_final_fraction >= 0.0 && lr_final_fraction <= 1.0)) {
    throw ConfigError("lr_final_fraction must lie in [0, 1]");
  }
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"iterations", c.iterations},
       {"batch", c.batch},
       {"seed", c.seed},
       {"optimizer", c.optimizer},
       {"lr_final_fraction", c.lr_final_fraction}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  c.iterations = j.value("iterations", c.iterations);
  c.batch = j.value("batch", c.batch);
  c.seed = j.value("seed", c.seed);
  if (j.contains("optimizer")) {
    AdamWConfig o = c.optimizer;
    from_json(j.at("optimizer"), o);
    c.optimizer = o;
  }
  if (j.contains("lr")) c.optimizer.lr = j.at("lr").get<double>();
  c.lr_final_fraction = j.value("lr_final_fraction", c.lr_final_fraction);
}

PretrainResult fm_pretrain(MlpPolicy& policy, const DataSampler& data,
                           const PretrainConfig& config) {
  config.validate();
  const std::size_t d = policy.dim();
  AdamW opt(policy.param_count(), config.optimizer);
  Rng rng = make_rng(config.seed, {0xF1A7});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> grad(policy.param_count());
  std::vector<double> x0(d), noise(d), xt(d), v(d), upstream(d);
  PretrainResult result;
  result.loss_curve.reserve(static_cast<std::size_t>(config.iterations));
  const double inv_b = 1.0 / config.batch;
  for (int it = 0; it < config.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (int b = 0; b < config.batch; ++b) {
      data(rng, x0);
      for (auto& e : noise) e = normal(rng);
      const double t = unit(rng);
      for (std::size_t i = 0; i < d; ++i) xt[i] = (1.0 - t) * x0[i] + t * noise[i];
      policy.velocity_into(xt, t, v);
      for (std::size_t i = 0; i < d; ++i) {
        const double r = v[i] - (noise[i] - x0[i]);
        loss += r * r * inv_b;
        upstream[i] = 2.0 * r * inv_b;
      }
      policy.accumulate_velocity_grad(xt, t, upstream, 1.0, grad);
    }
    if (!std::isfinite(loss) || loss > 1e6) {
      throw TrainingError("fm_pretrain diverged at iteration " + std::to_string(it) +
                          " (loss " + std::to_string(loss) + ")");
    }
    result.loss_curve.push_back(loss);
    const double progress = static_cast<double>(it) / config.iterations;
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    const double scale = config.lr_final_fraction + (1.0 - config.lr_final_fraction) * cosine;
    opt.step(policy.params(), grad, scale);
  }
  return result;
}

// ---- checkpoints ---------------------------------------------------------------

void save_checkpoint(const MlpPolicy& policy, const std::filesystem::path& dir,
                     const std::string& name, const nlohmann::json& metadata) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "geoflow-mlp";
  manifest["layer_dims"] = policy.layer_dims();
  manifest["activation"] = "tanh";
  manifest["blocks"] = nlohmann::json::array();
  for (const auto& b : policy.blocks()) {
    std::size_t n = 1;
    for (auto v : b.dims) n *= v;
    const auto p = policy.params().subspan(b.offset, n);
    const std::string file = name + "." + b.name + ".gft";
    save_tensor(TensorGrid::from_f64(b.dims, std::vector<double>(p.begin(), p.end())), dir / file);
    manifest["blocks"].push_back({{"name", b.name}, {"file", file}, {"dims", b.dims}});
  }
  manifest["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
  std::ofstream out(dir / (name + ".json"));
  if (!out) throw InputError("cannot write checkpoint manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

MlpPolicy load_checkpoint(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw InputError("cannot open checkpoint manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("activation", "") != "tanh") {
    throw FormatError("checkpoint manifest: unsupported activation");
  }
  const auto dims = manifest.at("layer_dims").get<std::vector<std::size_t>>();
  if (dims.size() != 4 || dims[0] != dims[3] + 1 || dims[1] != dims[2]) {
    throw FormatError("checkpoint manifest: layer_dims must be (d+1, h, h, d)");
  }
  MlpPolicy policy(dims[3], dims[1]);
  const auto expected = policy.blocks();
  const auto& blocks = manifest.at("blocks");
  if (blocks.size() != expected.size()) throw FormatError("checkpoint manifest: block count");
  std::vector<double> params(policy.param_count());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& b = blocks[i];
    if (b.at("name").get<std::string>() != expected[i].name) {
      throw FormatError("checkpoint manifest: unexpected block " + b.at("name").dump());
    }
    const TensorGrid g = load_tensor(manifest_path.parent_path() / b.at("file").get<std::string>());
    if (g.dims() != expected[i].dims) {
      throw FormatError("checkpoint block " + expected[i].name + ": dims mismatch");
    }
    const auto values = g.cast(DType::kF64);
    const auto src = values.f64();
    std::copy(src.begin(), src.end(), params.begin() + static_cast<std::ptrdiff_t>(expected[i].offset));
  }
  policy.set_params(params);
  return policy;
}

}  // namespace geoflow::flow
