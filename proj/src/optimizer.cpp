#include "pep/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pep {

std::string_view to_string(DecayShape shape) {
  return shape == DecayShape::kLinear ? "linear" : "constant";
}

DecayShape parse_decay_shape(std::string_view s) {
  if (s == "linear") return DecayShape::kLinear;
  if (s == "constant") return DecayShape::kConstant;
  throw std::invalid_argument("unknown decay shape '" + std::string(s) + "'");
}

std::size_t StageSchedule::warmup_steps() const {
  return static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(steps)));
}

void StageSchedule::validate() const {
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
    throw std::invalid_argument("schedule: warmup fraction outside [0, 1]");
  if (batch_size == 0) throw std::invalid_argument("schedule: batch size must be >= 1");
  if (!(peak_lr >= 0.0) || !std::isfinite(peak_lr))
    throw std::invalid_argument("schedule: peak learning rate must be finite and >= 0");
}

double lr_at(std::size_t step, const StageSchedule& s) {
  if (step == 0) throw std::invalid_argument("lr_at: steps are 1-based");
  const std::size_t total = s.steps;
  const std::size_t warm = s.warmup_steps();
  if (step <= warm) return s.peak_lr * static_cast<double>(step) / static_cast<double>(warm);
  if (s.decay == DecayShape::kConstant) return s.peak_lr;
  if (step >= total) return 0.0;
  // Without warmup the decay starts from the peak at step 1.
  const std::size_t start = warm == 0 ? 1 : warm;
  return s.peak_lr * static_cast<double>(total - step) / static_cast<double>(total - start);
}

AdamW::AdamW(std::size_t size, AdamWConfig config)
    : config_(config), m_(size, 0.0), v_(size, 0.0) {}

void AdamW::restore(std::vector<double> m, std::vector<double> v, std::size_t t) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw std::invalid_argument("AdamW::restore: moment size mismatch");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("AdamW::step: size mismatch");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const bool masked = !decay_mask_.empty();
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double update = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.eps);
    const double decay = (!masked || decay_mask_[i]) ? config_.weight_decay * params[i] : 0.0;
    params[i] -= lr * (update + decay);
  }
}

}  // namespace pep
