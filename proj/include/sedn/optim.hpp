#pragma once

// Adam and the poly learning-rate schedule.

#include <cstdint>
#include <vector>

#include "sedn/layers.hpp"

SEDN_BEGIN_NAMESPACE

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over the trainable entries of a tensor list. Tensors without a
/// gradient are skipped for that step (their moments stay untouched).
class Adam {
 public:
  Adam(const TensorList& params, const AdamOptions& options = {});

  void step();
  void zero_grad();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  std::uint64_t steps() const { return t_; }
  const TensorList& params() const { return params_; }

  /// First and second moments, for checkpointing.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  TensorList params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

/// lr0 * (1 - t / t_max)^power, clamped at 0 for t >= t_max.
double poly_lr(double lr0, std::uint64_t t, std::uint64_t t_max, double power);

/// L2 norm of all gradients in `params` (missing gradients count as zero).
double grad_norm(const TensorList& params);
/// Rescales gradients so their joint norm is at most `max_norm`; returns the norm before clipping.
double clip_grad_norm(const TensorList& params, double max_norm);

SEDN_END_NAMESPACE
