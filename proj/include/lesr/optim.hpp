#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace lesr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled (AdamW) decay, applied as p -= lr * weight_decay * p.
  double weight_decay = 0.0;
};

// Adam moments for a flat parameter vector. Slices can be updated
// independently, which gives lazy (row-sparse) updates when only touched
// rows are stepped.
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  std::size_t size() const noexcept { return m_.size(); }
  std::vector<double>& first_moment() noexcept { return m_; }
  std::vector<double>& second_moment() noexcept { return v_; }
  const std::vector<double>& first_moment() const noexcept { return m_; }
  const std::vector<double>& second_moment() const noexcept { return v_; }

  // step is the 1-based global step used for bias correction.
  void update(std::span<double> params, std::span<const double> grad, std::size_t offset,
              std::size_t step, double lr, const AdamConfig& cfg) {
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const std::size_t k = offset + i;
      double& p = params[i];
      p -= lr * cfg.weight_decay * p;
      m_[k] = cfg.beta1 * m_[k] + (1.0 - cfg.beta1) * grad[i];
      v_[k] = cfg.beta2 * v_[k] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      p -= lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + cfg.eps);
    }
  }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace lesr
