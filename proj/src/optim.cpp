#include "geoflow/optim.hpp"

#include <cmath>

#include "geoflow/errors.hpp"

namespace geoflow {

void to_json(nlohmann::json& j, const AdamWConfig& c) {
  j = {{"lr", c.lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"eps", c.eps},
       {"weight_decay", c.weight_decay},
       {"max_grad_norm", c.max_grad_norm}};
}

void from_json(const nlohmann::json& j, AdamWConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
}

AdamW::AdamW(std::size_t n, AdamWConfig config) : config_(config), m_(n, 0.0), v_(n, 0.0) {
  if (!(config_.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 &&
        config_.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(config_.eps > 0.0)) throw ConfigError("adam eps must be positive");
  if (!(config_.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

double AdamW::step(std::span<double> params, std::span<const double> grad, double lr_scale) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ShapeError("AdamW: parameter/gradient size mismatch");
  }
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("AdamW: non-finite gradient");
  const double clip =
      (config_.max_grad_norm > 0.0 && norm > config_.max_grad_norm) ? config_.max_grad_norm / norm
                                                                    : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double lr = config_.lr * lr_scale;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] * clip;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * params[i]);
  }
  return norm;
}

}  // namespace geoflow
