#include "sedn/neuron.hpp"

#include <algorithm>
#include <cmath>
#include <string>

SEDN_BEGIN_NAMESPACE

Real SurrogateSpec::derivative(Real v) const {
  const Real w = temperature;
  return std::max(Real(0), w - std::fabs(v)) / (w * w);
}

NeuronConfig NeuronConfig::lif(Real u_th) {
  NeuronConfig c;
  c.u_th = u_th;
  return c;
}

NeuronConfig NeuronConfig::ailif(Real u_th, Real beta, Real tau_a) {
  NeuronConfig c;
  c.u_th = u_th;
  c.adaptive = true;
  c.beta = beta;
  c.tau_a = tau_a;
  return c;
}

void NeuronConfig::validate() const {
  if (!(tau > 0 && tau < 1)) throw DomainError("membrane decay tau must lie in (0,1), got " + std::to_string(tau));
  if (!(surrogate.temperature > 0)) throw DomainError("surrogate temperature must be positive");
  if (surrogate.family != "triangle") throw DomainError("unknown surrogate family '" + surrogate.family + "'");
  if (!std::isfinite(u_th)) throw DomainError("threshold must be finite");
  if (!adaptive) return;
  if (!(beta >= 0)) throw DomainError("beta must be >= 0, got " + std::to_string(beta));
  if (!(tau_a > 0 && tau_a < 1)) throw DomainError("tau_a must lie in (0,1), got " + std::to_string(tau_a));
  if (!(tau_a_min > 0 && tau_a_max < 1 && tau_a_min <= tau_a_max)) {
    throw DomainError("tau_a clamp range must satisfy 0 < min <= max < 1");
  }
}

ThresholdBound adaptation_bound(double u_th, double beta, double tau_a) {
  if (!(tau_a > 0 && tau_a < 1)) throw DomainError("tau_a must lie in (0,1), got " + std::to_string(tau_a));
  return {u_th, u_th + beta / (1.0 - tau_a)};
}

ThresholdBound adaptation_bound(const NeuronConfig& cfg) {
  if (!cfg.adaptive) return {cfg.u_th, cfg.u_th};
  return adaptation_bound(cfg.u_th, cfg.beta, cfg.tau_a);
}

NeuronState NeuronState::rest(const Shape& shape) {
  return {Tensor::zeros(shape), Tensor::zeros(shape), Tensor::zeros(shape)};
}

NeuronState NeuronState::detached() const {
  if (empty()) return {};
  return {u.detach(), a.detach(), y.detach()};
}

NeuronState lif_step(const NeuronState& prev_in, const Tensor& current, const NeuronConfig& cfg,
                     const Tensor* tau_a_param, SpikeFn fn, std::string_view layer) {
  const NeuronState prev = prev_in.empty() ? NeuronState::rest(current.shape()) : prev_in;
  if (prev.u.shape() != current.shape() || prev.a.shape() != current.shape() || prev.y.shape() != current.shape()) {
    throw ShapeError(std::string(layer) + ": neuron state " + shape_string(prev.u.shape()) +
                     " does not match input current " + shape_string(current.shape()));
  }
  const std::size_t n = current.numel();
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(current[i])) {
      throw NumericError(std::string(layer) + ": non-finite input current at element " + std::to_string(i));
    }
  }
  const Real tau_a = (cfg.adaptive && tau_a_param != nullptr && tau_a_param->defined()) ? (*tau_a_param)[0] : cfg.tau_a;
  const simd::NeuronCoeffs<Real> k{cfg.tau, tau_a, cfg.u_th, cfg.beta, cfg.surrogate.temperature, cfg.adaptive, fn};

  std::vector<Real> u(n), a, y(n);
  if (cfg.adaptive) {
    a.resize(n);
    simd::neuron_forward(n, k, current.ptr(), prev.u.ptr(), prev.y.ptr(), prev.a.ptr(), u.data(), a.data(), y.data());
  } else {
    simd::neuron_forward(n, k, current.ptr(), prev.u.ptr(), prev.y.ptr(), prev.a.ptr(), u.data(), nullptr, y.data());
  }

  const Tensor* tau_in = (cfg.adaptive && tau_a_param != nullptr && tau_a_param->defined()) ? tau_a_param : nullptr;
  const bool track = detail::should_record({&current, &prev.u, &prev.a, &prev.y, tau_in});
  NeuronState next;
  next.u = detail::make_result(current.shape(), std::move(u), track);
  next.y = detail::make_result(current.shape(), std::move(y), track);
  if (cfg.adaptive) {
    next.a = detail::make_result(current.shape(), std::move(a), track);
  } else {
    next.a = track ? detail::make_result(current.shape(), std::vector<Real>(n, Real(0)), true) : prev.a;
  }

  if (track) {
    auto ti = tau_in ? tau_in->impl() : nullptr;
    Graph::active()->record([k, n, ci = current.impl(), up = prev.u.impl(), ap = prev.a.impl(), yp = prev.y.impl(), ti,
                             uo = next.u.impl(), ao = next.a.impl(), yo = next.y.impl()]() {
      if (uo->grad.empty() && ao->grad.empty() && yo->grad.empty()) return;
      const std::vector<Real> zeros(n, Real(0));
      const Real* gu = uo->grad.empty() ? zeros.data() : uo->grad.data();
      const Real* ga = ao->grad.empty() ? zeros.data() : ao->grad.data();
      const Real* gy = yo->grad.empty() ? zeros.data() : yo->grad.data();
      // Inputs that need no gradient write into scratch space.
      std::vector<Real> scratch;
      auto sink = [&](TensorImpl& t) -> Real* {
        if (t.requires_grad) {
          t.ensure_grad();
          return t.grad.data();
        }
        if (scratch.empty()) scratch.assign(n, Real(0));
        return scratch.data();
      };
      Real* gc = sink(*ci);
      Real* gup = sink(*up);
      Real* gyp = sink(*yp);
      Real* gap = sink(*ap);
      const Real tg = simd::neuron_backward(n, k, up->data.data(), yp->data.data(), ap->data.data(), uo->data.data(),
                                            ao->data.data(), gu, ga, gy, gc, gup, gyp, gap);
      if (ti && ti->requires_grad) {
        ti->ensure_grad();
        ti->grad[0] += tg;
      }
    });
  }
  return next;
}

Tensor effective_threshold(const NeuronState& state, const NeuronConfig& cfg) {
  std::vector<Real> out(state.a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cfg.u_th + (cfg.adaptive ? cfg.beta * state.a[i] : Real(0));
  return Tensor(state.a.shape(), std::move(out));
}

double firing_rate(const Tensor& spikes) {
  if (spikes.numel() == 0) return 0.0;
  std::size_t on = 0;
  for (Real v : spikes.data()) on += v != Real(0);
  return static_cast<double>(on) / static_cast<double>(spikes.numel());
}

std::string_view placement_name(Placement p) {
  switch (p) {
    case Placement::first_layer: return "first";
    case Placement::all: return "all";
    case Placement::none: return "none";
  }
  return "?";
}

Placement parse_placement(std::string_view text) {
  if (text == "first") return Placement::first_layer;
  if (text == "all") return Placement::all;
  if (text == "none") return Placement::none;
  throw ConfigError("unknown AiLIF placement '" + std::string(text) + "' (expected first, all or none)");
}

NeuronLayer::NeuronLayer(std::string name, NeuronConfig cfg) : name_(std::move(name)), cfg_(cfg) {
  cfg_.validate();
  if (cfg_.adaptive) tau_a_ = Tensor::scalar(cfg_.tau_a, cfg_.train_tau_a);
}

NeuronState NeuronLayer::step(const NeuronState& prev, const Tensor& current, SpikeFn fn) const {
  return lif_step(prev, current, cfg_, tau_a_.defined() ? &tau_a_ : nullptr, fn, name_);
}

Real NeuronLayer::tau_a() const { return tau_a_.defined() ? tau_a_[0] : cfg_.tau_a; }

void NeuronLayer::project() {
  if (!tau_a_.defined()) return;
  Real& v = tau_a_.mutable_data()[0];
  v = std::clamp(v, cfg_.tau_a_min, cfg_.tau_a_max);
  cfg_.tau_a = v;
}

SequenceResult run_sequence(const NeuronLayer& layer, std::span<const Tensor> inputs,
                            const std::function<void(std::size_t, double)>& on_step) {
  if (inputs.empty()) throw ShapeError(layer.name() + ": cannot run a sequence of length 0");
  SequenceResult r;
  NeuronState state;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    state = layer.step(state, inputs[t]);
    const double rate = firing_rate(state.y);
    r.spikes.push_back(state.y);
    r.rates.push_back(rate);
    if (on_step) on_step(t, rate);
  }
  r.final_state = state;
  return r;
}

SEDN_END_NAMESPACE
