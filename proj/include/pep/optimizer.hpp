#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace pep {

enum class DecayShape { kLinear, kConstant };

std::string_view to_string(DecayShape shape);
DecayShape parse_decay_shape(std::string_view s);

/// One training stage: step count, warmup share, peak rate, batch size.
struct StageSchedule {
  std::size_t steps = 0;
  double warmup_fraction = 0.1;
  double peak_lr = 1e-3;
  std::size_t batch_size = 32;
  DecayShape decay = DecayShape::kLinear;

  std::size_t warmup_steps() const;
  void validate() const;
  bool operator==(const StageSchedule&) const = default;
};

/// Linear ramp 0 -> peak over the warmup steps, then linear decay to 0 at the
/// final step (or held at peak for DecayShape::kConstant). `step` is 1-based.
double lr_at(std::size_t step, const StageSchedule& schedule);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  bool operator==(const AdamWConfig&) const = default;
};

/// Adam with decoupled weight decay. `decay_mask` (optional, same length as the
/// parameters) selects which coordinates are decayed.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::size_t size, AdamWConfig config);

  void step(std::span<double> params, std::span<const double> grad, double lr);

  void set_decay_mask(std::vector<std::uint8_t> mask) { decay_mask_ = std::move(mask); }
  const AdamWConfig& config() const { return config_; }
  std::size_t steps_taken() const { return t_; }

  std::vector<double>& first_moment() { return m_; }
  std::vector<double>& second_moment() { return v_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  void restore(std::vector<double> m, std::vector<double> v, std::size_t t);

 private:
  AdamWConfig config_;
  std::vector<double> m_, v_;
  std::vector<std::uint8_t> decay_mask_;
  std::size_t t_ = 0;
};

}  // namespace pep
