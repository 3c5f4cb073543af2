#include "trafficdiff/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace trafficdiff::nn {

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), T(0));
    v_.emplace_back(p->value.size(), T(0));
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (auto* p : params_)
      for (T g : p->grad) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double lr = cfg_.learning_rate * std::sqrt(bc2) / bc1;
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = static_cast<T>(p.grad[i] * scale);
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      p.value[i] -= static_cast<T>(lr * m[i] / (std::sqrt(static_cast<double>(v[i])) + cfg_.epsilon));
    }
    p.zero_grad();
  }
}

template <typename T>
void ema_update(const ParamList<T>& target, const ParamList<T>& source, double decay) {
  if (target.size() != source.size()) throw std::invalid_argument("ema_update: parameter lists differ");
  const T d = static_cast<T>(decay);
  for (std::size_t k = 0; k < target.size(); ++k) {
    auto& t = target[k]->value;
    const auto& s = source[k]->value;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = d * t[i] + (T(1) - d) * s[i];
  }
}

template <typename T>
void copy_values(const ParamList<T>& target, const ParamList<T>& source) {
  if (target.size() != source.size()) throw std::invalid_argument("copy_values: parameter lists differ");
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k]->value.size() != source[k]->value.size())
      throw std::invalid_argument("copy_values: size mismatch at " + source[k]->name);
    target[k]->value = source[k]->value;
  }
}

template class Adam<float>;
template class Adam<double>;
template void ema_update(const ParamList<float>&, const ParamList<float>&, double);
template void ema_update(const ParamList<double>&, const ParamList<double>&, double);
template void copy_values(const ParamList<float>&, const ParamList<float>&);
template void copy_values(const ParamList<double>&, const ParamList<double>&);

}  // namespace trafficdiff::nn
