#include "sedn/layers.hpp"

#include <cmath>

SEDN_BEGIN_NAMESPACE

Tensor fan_in_uniform(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<Real> v(shape_numel(shape));
  for (Real& x : v) x = static_cast<Real>(dist(rng));
  return Tensor(shape, std::move(v), true);
}

std::pair<Tensor, Tensor> fold_bn_into_conv(const Tensor& weight, const Tensor& bias, const BatchNormParams& bn) {
  if (bn.training) throw StateError("cannot fold batch norm that is still in training mode");
  const std::size_t cout = weight.size(0);
  if (bn.running_mean.numel() != cout || bn.running_var.numel() != cout) {
    throw ShapeError("batch norm statistics do not match " + std::to_string(cout) + " output channels");
  }
  if (bias.defined() && bias.numel() != cout) throw ShapeError("conv bias does not match output channels");
  const std::size_t per = weight.numel() / cout;
  std::vector<Real> w(weight.data().begin(), weight.data().end());
  std::vector<Real> b(cout);
  for (std::size_t o = 0; o < cout; ++o) {
    const Real g = bn.gamma.defined() ? bn.gamma[o] : Real(1);
    const Real sh = bn.beta.defined() ? bn.beta[o] : Real(0);
    const Real s = static_cast<Real>(g / std::sqrt(static_cast<double>(bn.running_var[o]) + bn.eps));
    for (std::size_t i = 0; i < per; ++i) w[o * per + i] *= s;
    const Real b0 = bias.defined() ? bias[o] : Real(0);
    b[o] = (b0 - bn.running_mean[o]) * s + sh;
  }
  return {Tensor(weight.shape(), std::move(w), weight.requires_grad()), Tensor({cout}, std::move(b), true)};
}

ConvBn::ConvBn(std::string name, const ConvSpec& spec, std::mt19937_64& rng) : name_(std::move(name)), spec_(spec) {
  if (spec.in == 0 || spec.out == 0 || spec.kernel == 0 || spec.stride == 0 || spec.dilation == 0) {
    throw ShapeError(name_ + ": convolution extents must be positive");
  }
  weight_ = fan_in_uniform({spec.out, spec.in, spec.kernel, spec.kernel}, spec.in * spec.kernel * spec.kernel, rng);
  if (spec.bias) bias_ = Tensor::zeros({spec.out}, true);
  has_bn_ = spec.batch_norm;
  if (has_bn_) {
    if (spec.affine) {
      bn_.gamma = Tensor::full({spec.out}, Real(1), true);
      bn_.beta = Tensor::zeros({spec.out}, true);
    }
    bn_.running_mean = Tensor::zeros({spec.out});
    bn_.running_var = Tensor::full({spec.out}, Real(1));
  }
}

Tensor ConvBn::forward(const Tensor& x, Profiler* profiler) const {
  if (x.dim() != 4 || x.size(1) != spec_.in) {
    throw ShapeError(name_ + ": expected [B," + std::to_string(spec_.in) + ",H,W] input, got " +
                     shape_string(x.shape()));
  }
  const ConvGeometry g{spec_.stride, spec_.dilation, same_padding(spec_.kernel, spec_.dilation)};
  Tensor y = conv2d(x, weight_, g);
  if (profiler) profiler->conv(name_, x, spec_.kernel, y.shape(), spec_.real_input);
  if (bias_.defined()) y = add_channel_bias(y, bias_);
  if (has_bn_) {
    BatchNormOptions opt;
    opt.training = bn_.training;
    opt.momentum = bn_.momentum;
    opt.eps = bn_.eps;
    y = batch_norm(y, bn_.gamma.defined() ? &bn_.gamma : nullptr, bn_.beta.defined() ? &bn_.beta : nullptr,
                   bn_.running_mean, bn_.running_var, opt);
    // One scale per output element; the shift is an addition.
    if (profiler) profiler->multiplications(name_ + ".bn", y.numel());
  }
  return y;
}

void ConvBn::fold() {
  if (!has_bn_) return;
  auto [w, b] = fold_bn_into_conv(weight_, bias_, bn_);
  weight_ = std::move(w);
  bias_ = std::move(b);
  has_bn_ = false;
  bn_ = BatchNormParams{};
  bn_.training = false;
  spec_.batch_norm = false;
  spec_.bias = true;
}

void ConvBn::collect(TensorList& out) {
  out.push_back({name_ + ".weight", &weight_, true});
  if (bias_.defined()) out.push_back({name_ + ".bias", &bias_, true});
  if (!has_bn_) return;
  if (bn_.gamma.defined()) {
    out.push_back({name_ + ".bn.gamma", &bn_.gamma, true});
    out.push_back({name_ + ".bn.beta", &bn_.beta, true});
  }
  out.push_back({name_ + ".bn.running_mean", &bn_.running_mean, false});
  out.push_back({name_ + ".bn.running_var", &bn_.running_var, false});
}

std::size_t ConvBn::parameter_count() const {
  std::size_t n = weight_.numel();
  if (bias_.defined()) n += bias_.numel();
  if (has_bn_ && bn_.gamma.defined()) n += bn_.gamma.numel() + bn_.beta.numel();
  return n;
}

SpikingConv::SpikingConv(std::string name, const ConvSpec& spec, const NeuronConfig& neuron, std::mt19937_64& rng)
    : conv_(name, spec, rng), neuron_(name + ".neuron", neuron) {}

Tensor fire(const NeuronLayer& neuron, const Tensor& current, NeuronState& state, const ForwardContext& ctx) {
  state = neuron.step(state, current, ctx.spike_fn);
  if (ctx.profiler) ctx.profiler->spikes(neuron.name(), state.y);
  return state.y;
}

Tensor SpikingConv::forward(const Tensor& x, NeuronState& state, const ForwardContext& ctx) const {
  return fire(neuron_, conv_.forward(x, ctx.profiler), state, ctx);
}

void SpikingConv::collect(TensorList& out) {
  conv_.collect(out);
  if (neuron_.tau_a_param().defined()) {
    out.push_back({neuron_.name() + ".tau_a", &neuron_.tau_a_param(), neuron_.config().train_tau_a});
  }
}

std::size_t count_trainable(const TensorList& list) {
  std::size_t n = 0;
  for (const NamedTensor& t : list) n += t.trainable ? t.tensor->numel() : 0;
  return n;
}

SEDN_END_NAMESPACE
