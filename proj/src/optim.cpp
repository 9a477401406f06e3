#include "sedn/optim.hpp"

#include <cmath>

SEDN_BEGIN_NAMESPACE

Adam::Adam(const TensorList& params, const AdamOptions& options) : options_(options) {
  for (const NamedTensor& p : params) {
    if (!p.trainable) continue;
    params_.push_back(p);
    m_.emplace_back(p.tensor->numel(), 0.0);
    v_.emplace_back(p.tensor->numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i].tensor;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      m[j] = b1 * m[j] + (1 - b1) * gj;
      v[j] = b2 * v[j] + (1 - b2) * gj * gj;
      const double mhat = m[j] / c1, vhat = v[j] / c2;
      w[j] = static_cast<Real>(w[j] - options_.lr * mhat / (std::sqrt(vhat) + options_.eps));
    }
  }
}

void Adam::zero_grad() {
  for (NamedTensor& p : params_) p.tensor->zero_grad();
}

double poly_lr(double lr0, std::uint64_t t, std::uint64_t t_max, double power) {
  if (t_max == 0 || t >= t_max) return 0.0;
  return lr0 * std::pow(1.0 - static_cast<double>(t) / static_cast<double>(t_max), power);
}

double grad_norm(const TensorList& params) {
  double s = 0;
  for (const NamedTensor& p : params) {
    if (!p.tensor->has_grad()) continue;
    for (Real g : p.tensor->grad()) s += static_cast<double>(g) * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(const TensorList& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (const NamedTensor& p : params) {
      if (!p.tensor->has_grad()) continue;
      for (Real& g : p.tensor->mutable_grad()) g = static_cast<Real>(g * f);
    }
  }
  return norm;
}

SEDN_END_NAMESPACE
