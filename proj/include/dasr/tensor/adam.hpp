#pragma once

#include <cmath>
#include <map>
#include <string>

#include "dasr/tensor/params.hpp"
#include "dasr/tensor/tensor.hpp"

namespace dasr {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are created on first use per
/// parameter; one shared step counter drives the bias correction.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, g] : grads) {
      Tensor& p = params.at(name);
      check_same_shape(p, g, "adam_step");
      Tensor& m = buffer(m_, name, p);
      Tensor& v = buffer(v_, name, p);
      for (int64_t i = 0; i < p.numel(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Checkpoint access.
  std::map<std::string, Tensor>& first_moments() { return m_; }
  std::map<std::string, Tensor>& second_moments() { return v_; }
  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }
  void restore(int64_t t, std::map<std::string, Tensor> m, std::map<std::string, Tensor> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  static Tensor& buffer(std::map<std::string, Tensor>& buf, const std::string& name,
                        const Tensor& like) {
    auto it = buf.find(name);
    if (it == buf.end()) it = buf.emplace(name, Tensor::zeros(like.shape)).first;
    return it->second;
  }

  AdamConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace dasr
