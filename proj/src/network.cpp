#include "sedn/network.hpp"

#include <array>
#include <random>
#include <sstream>

SEDN_BEGIN_NAMESPACE

std::string_view ssam_variant_name(SsamVariant v) {
  switch (v) {
    case SsamVariant::s1: return "s1";
    case SsamVariant::s2: return "s2";
    case SsamVariant::s3: return "s3";
  }
  return "?";
}

SsamVariant parse_ssam_variant(std::string_view s) {
  if (s == "s1" || s == "S1") return SsamVariant::s1;
  if (s == "s2" || s == "S2") return SsamVariant::s2;
  if (s == "s3" || s == "S3") return SsamVariant::s3;
  throw ConfigError("unknown SSAM variant '" + std::string(s) + "' (expected s1, s2 or s3)");
}

std::string_view aug_source_name(AugSource a) {
  switch (a) {
    case AugSource::none: return "none";
    case AugSource::image: return "image";
    case AugSource::events: return "events";
  }
  return "?";
}

AugSource parse_aug_source(std::string_view s) {
  if (s == "none") return AugSource::none;
  if (s == "image") return AugSource::image;
  if (s == "events") return AugSource::events;
  throw ConfigError("unknown augmented input '" + std::string(s) + "' (expected none, image or events)");
}

void ModelConfig::validate() const {
  if (event_channels == 0 || num_classes < 2 || stem_channels == 0 || node_channels == 0 || aspp_channels == 0 ||
      decoder_channels == 0) {
    throw ConfigError("model widths must be positive and there must be at least two classes");
  }
  if (ssam && aug == AugSource::none) throw ConfigError("SSAM needs an augmented input (image or events)");
  if (ssam && stem_channels % 4 != 0) throw ConfigError("SSAM needs a stem width divisible by 4");
  try {
    genotype.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid genotype: ") + e.what());
  }
  try {
    neuron.validate();
    if (placement != Placement::none) adaptation_bound(neuron.u_th, ailif_beta, ailif_tau_a);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid neuron settings: ") + e.what());
  }
}

std::string ModelConfig::describe() const {
  std::ostringstream os;
  os << "classes=" << num_classes << " stem=" << stem_channels << " node=" << node_channels
     << " aspp=" << aspp_channels << " decoder=" << decoder_channels << " layers=" << genotype.layers()
     << " ssam=" << (ssam ? std::string(ssam_variant_name(ssam_variant)) : std::string("off"))
     << " aug=" << aug_source_name(aug) << " placement=" << placement_name(placement);
  return os.str();
}

ModelState ModelState::detached() const {
  ModelState s;
  s.neurons.reserve(neurons.size());
  for (const NeuronState& n : neurons) s.neurons.push_back(n.detached());
  return s;
}

bool ModelState::empty() const {
  for (const NeuronState& n : neurons) {
    if (!n.empty()) return false;
  }
  return true;
}

namespace {

struct Unit {
  SpikingConv sc;
  std::size_t slot = 0;

  Tensor run(const Tensor& x, ModelState& st, const ForwardContext& ctx) const {
    return sc.forward(x, st.neurons[slot], ctx);
  }
};

struct Resample {
  enum class Kind { same, down, up } kind = Kind::same;
  std::size_t factor = 1;
  Unit unit;

  Tensor run(const Tensor& x, ModelState& st, const ForwardContext& ctx) const {
    Tensor y = unit.run(x, st, ctx);
    return kind == Kind::up ? upsample(y, factor, UpsampleMode::nearest) : y;
  }
};

struct Edge {
  CellEdge edge;
  ConvBn conv;  // unused for skip
};

struct Cell {
  std::size_t factor = 4;
  Resample pre0;
  Resample pre1;
  std::vector<Edge> edges;
  std::array<NeuronLayer, kNodesPerCell> nodes;
  std::array<std::size_t, kNodesPerCell> slots{};
};

struct Ssam {
  ConvBn lower;
  ConvBn upper_conv;           // S1: the whole upper path; S2: the final conv
  Unit upper_unit;             // S3: conv + BN + spike before the parallel convs
  std::vector<ConvBn> parallel;
  NeuronLayer parallel_neuron;  // S2: spike after the parallel convs
  std::size_t parallel_slot = 0;
  ConvBn gamma_conv;            // multiplicative fusion only
  NeuronLayer fusion;
  std::size_t fusion_slot = 0;
};

}  // namespace

struct SpikingEdn::Impl {
  ModelConfig cfg;
  std::size_t slots = 0;
  bool training = true;
  bool folded = false;

  Unit stem1;
  Ssam ssam;
  Unit stem2;
  std::vector<Cell> cells;
  std::vector<Unit> aspp;
  Unit aspp_pool;
  std::array<Unit, 3> decoder;
  ConvBn classifier;

  std::string first_layer;

  NeuronConfig neuron_for(bool first) const {
    const bool adaptive = cfg.placement == Placement::all || (first && cfg.placement == Placement::first_layer);
    NeuronConfig n = cfg.neuron;
    n.adaptive = adaptive;
    if (adaptive) {
      n.beta = cfg.ailif_beta;
      n.tau_a = cfg.ailif_tau_a;
    } else {
      n.beta = 0;
    }
    if (first && cfg.first_layer_threshold >= 0) n.u_th = cfg.first_layer_threshold;
    return n;
  }

  Unit make_unit(const std::string& name, const ConvSpec& spec, bool first, std::mt19937_64& rng) {
    return Unit{SpikingConv(name, spec, neuron_for(first), rng), slots++};
  }

  Resample make_resample(const std::string& name, std::size_t cin, std::size_t from, std::size_t to,
                         std::mt19937_64& rng) {
    Resample r;
    ConvSpec spec{cin, cfg.node_channels, 1};
    if (to > from) {
      r.kind = Resample::Kind::down;
      r.factor = to / from;
      spec.kernel = 3;
      spec.stride = r.factor;
    } else if (to < from) {
      r.kind = Resample::Kind::up;
      r.factor = from / to;
    }
    r.unit = make_unit(name, spec, false, rng);
    return r;
  }

  void build() {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const std::size_t S = cfg.stem_channels;
    const std::size_t n = cfg.event_channels;

    if (cfg.ssam) {
      ConvSpec lower{n, S, 1};
      lower.affine = false;
      lower.real_input = true;
      ssam.lower = ConvBn("ssam.lower", lower, rng);
      const std::size_t quarter = S / 4;
      switch (cfg.ssam_variant) {
        case SsamVariant::s1: {
          ConvSpec up{1, S, 3};
          up.batch_norm = false;
          up.bias = true;
          up.real_input = true;
          ssam.upper_conv = ConvBn("ssam.upper", up, rng);
          break;
        }
        case SsamVariant::s2: {
          for (std::size_t d = 1; d <= 4; ++d) {
            ConvSpec p{1, quarter, 3, 1, d};
            p.real_input = true;
            ssam.parallel.emplace_back("ssam.parallel" + std::to_string(d), p, rng);
          }
          ssam.parallel_neuron = NeuronLayer("ssam.parallel.neuron", neuron_for(false));
          ssam.parallel_slot = slots++;
          ConvSpec post{quarter * 4, S, 3};
          post.batch_norm = false;
          post.bias = true;
          ssam.upper_conv = ConvBn("ssam.upper", post, rng);
          break;
        }
        case SsamVariant::s3: {
          ConvSpec up{1, S, 3};
          up.real_input = true;
          ssam.upper_unit = make_unit("ssam.upper", up, false, rng);
          for (std::size_t d = 1; d <= 4; ++d) {
            ConvSpec p{S, quarter, 3, 1, d};
            p.batch_norm = false;
            p.bias = true;
            ssam.parallel.emplace_back("ssam.parallel" + std::to_string(d), p, rng);
          }
          break;
        }
      }
      if (cfg.ssam_fusion == SsamFusion::multiplicative) {
        const std::size_t hidden = cfg.ssam_variant == SsamVariant::s1 ? 1 : S;
        ConvSpec g{hidden, S, 3};
        g.batch_norm = false;
        g.bias = true;
        g.real_input = cfg.ssam_variant == SsamVariant::s1;
        ssam.gamma_conv = ConvBn("ssam.gamma", g, rng);
      }
      ssam.fusion = NeuronLayer("ssam.fusion.neuron", neuron_for(true));
      ssam.fusion_slot = slots++;
      first_layer = ssam.fusion.name();
    } else {
      const std::size_t cin = n + (cfg.aug != AugSource::none ? 1 : 0);
      ConvSpec s1{cin, S, 3};
      s1.real_input = true;
      stem1 = make_unit("stem1", s1, true, rng);
      first_layer = stem1.sc.neuron().name();
    }
    stem2 = make_unit("stem2", ConvSpec{S, S, 5, 4}, false, rng);

    const Genotype& g = cfg.genotype;
    const std::size_t C = cfg.node_channels;
    std::size_t pp_factor = 4, p_factor = 4, pp_ch = S, p_ch = S;
    for (std::size_t l = 0; l < g.layers(); ++l) {
      Cell cell;
      cell.factor = g.path[l];
      const std::string base = "cell" + std::to_string(l);
      cell.pre0 = make_resample(base + ".pre0", pp_ch, pp_factor, cell.factor, rng);
      cell.pre1 = make_resample(base + ".pre1", p_ch, p_factor, cell.factor, rng);
      for (const CellEdge& e : g.cells[l]) {
        Edge edge{e, {}};
        if (e.op != EdgeOp::skip) {
          const std::size_t k = e.op == EdgeOp::conv3x3 ? 3 : 5;
          edge.conv = ConvBn(base + ".edge" + std::to_string(e.node) + "." + tap_name(e.tap), ConvSpec{C, C, k}, rng);
        }
        cell.edges.push_back(std::move(edge));
      }
      for (std::size_t nd = 0; nd < kNodesPerCell; ++nd) {
        cell.nodes[nd] = NeuronLayer(base + ".node" + std::to_string(nd), neuron_for(false));
        cell.slots[nd] = slots++;
      }
      cells.push_back(std::move(cell));
      pp_factor = p_factor;
      pp_ch = p_ch;
      p_factor = g.path[l];
      p_ch = kNodesPerCell * C;
    }

    const std::size_t A = cfg.aspp_channels;
    aspp.push_back(make_unit("aspp.b0", ConvSpec{p_ch, A, 1}, false, rng));
    for (std::size_t i = 0; i < cfg.aspp_dilations.size(); ++i) {
      aspp.push_back(
          make_unit("aspp.b" + std::to_string(i + 1), ConvSpec{p_ch, A, 3, 1, cfg.aspp_dilations[i]}, false, rng));
    }
    aspp_pool = make_unit("aspp.pool", ConvSpec{p_ch, A, 1}, false, rng);

    const std::size_t D = cfg.decoder_channels;
    const std::size_t aspp_out = A * (aspp.size() + 1);
    decoder[0] = make_unit("dec1", ConvSpec{aspp_out + S, D, 3}, false, rng);
    decoder[1] = make_unit("dec2", ConvSpec{D, D, 3}, false, rng);
    decoder[2] = make_unit("dec3", ConvSpec{D, D, 3}, false, rng);
    ConvSpec cls{D, cfg.num_classes, 1};
    cls.batch_norm = false;
    cls.bias = true;
    classifier = ConvBn("classifier", cls, rng);
  }

  template <class F>
  void for_each_conv(F&& f) {
    auto unit = [&](Unit& u) { f(u.sc.conv()); };
    if (cfg.ssam) {
      f(ssam.lower);
      if (ssam.upper_unit.sc.conv().weight().defined()) unit(ssam.upper_unit);
      for (ConvBn& c : ssam.parallel) f(c);
      if (ssam.upper_conv.weight().defined()) f(ssam.upper_conv);
      if (ssam.gamma_conv.weight().defined()) f(ssam.gamma_conv);
    } else {
      unit(stem1);
    }
    unit(stem2);
    for (Cell& c : cells) {
      unit(c.pre0.unit);
      unit(c.pre1.unit);
      for (Edge& e : c.edges) {
        if (e.edge.op != EdgeOp::skip) f(e.conv);
      }
    }
    for (Unit& u : aspp) unit(u);
    unit(aspp_pool);
    for (Unit& u : decoder) unit(u);
    f(classifier);
  }

  template <class F>
  void for_each_neuron(F&& f) {
    if (cfg.ssam) {
      if (ssam.upper_unit.sc.conv().weight().defined()) f(ssam.upper_unit.sc.neuron());
      if (cfg.ssam_variant == SsamVariant::s2) f(ssam.parallel_neuron);
      f(ssam.fusion);
    } else {
      f(stem1.sc.neuron());
    }
    f(stem2.sc.neuron());
    for (Cell& c : cells) {
      f(c.pre0.unit.sc.neuron());
      f(c.pre1.unit.sc.neuron());
      for (NeuronLayer& nl : c.nodes) f(nl);
    }
    for (Unit& u : aspp) f(u.sc.neuron());
    f(aspp_pool.sc.neuron());
    for (Unit& u : decoder) f(u.sc.neuron());
  }

  TensorList tensors() {
    TensorList out;
    for_each_conv([&](ConvBn& c) { c.collect(out); });
    for_each_neuron([&](NeuronLayer& n) {
      if (n.tau_a_param().defined()) out.push_back({n.name() + ".tau_a", &n.tau_a_param(), n.config().train_tau_a});
    });
    return out;
  }

  Tensor ssam_forward(const Tensor& events, const Tensor& aug, ModelState& st, const ForwardContext& ctx) const {
    Profiler* prof = ctx.profiler;
    const Tensor norm_h = ssam.lower.forward(events, prof);
    Tensor f_a;
    Tensor hidden;
    switch (cfg.ssam_variant) {
      case SsamVariant::s1:
        f_a = ssam.upper_conv.forward(aug, prof);
        hidden = aug;
        break;
      case SsamVariant::s2: {
        std::vector<Tensor> parts;
        for (const ConvBn& c : ssam.parallel) parts.push_back(c.forward(aug, prof));
        hidden = fire(ssam.parallel_neuron, concat(parts), st.neurons[ssam.parallel_slot], ctx);
        f_a = ssam.upper_conv.forward(hidden, prof);
        break;
      }
      case SsamVariant::s3: {
        hidden = ssam.upper_unit.run(aug, st, ctx);
        std::vector<Tensor> parts;
        for (const ConvBn& c : ssam.parallel) parts.push_back(c.forward(hidden, prof));
        f_a = concat(parts);
        break;
      }
    }
    Tensor modulated = norm_h;
    if (cfg.ssam_fusion == SsamFusion::multiplicative) {
      const Tensor gamma = add_scalar(ssam.gamma_conv.forward(hidden, prof), Real(1));
      modulated = mul(gamma, norm_h);
      if (prof) prof->multiplications("ssam.gamma", modulated.numel());
    }
    return fire(ssam.fusion, add(modulated, f_a), st.neurons[ssam.fusion_slot], ctx);
  }

  Tensor forward(const Tensor& events, const Tensor* aug_in, ModelState& st, const ForwardOptions& opt) const {
    if (events.dim() != 4 || events.size(1) != cfg.event_channels) {
      throw ShapeError("model expects [B," + std::to_string(cfg.event_channels) + ",H,W] event input, got " +
                       shape_string(events.dim() ? events.shape() : Shape{}));
    }
    const std::size_t B = events.size(0), H = events.size(2), W = events.size(3);
    std::size_t max_factor = 4;
    for (std::size_t f : cfg.genotype.path) max_factor = std::max(max_factor, f);
    if (H % max_factor != 0 || W % max_factor != 0) {
      throw ShapeError("input " + std::to_string(H) + "x" + std::to_string(W) + " is not divisible by the deepest factor " +
                       std::to_string(max_factor));
    }
    if (st.neurons.size() != slots) throw StateError("model state does not belong to this model");

    Tensor aug;
    if (cfg.aug == AugSource::events) {
      aug = channel_sum(events);
    } else if (cfg.aug == AugSource::image) {
      if (aug_in == nullptr || !aug_in->defined()) throw ConfigError("model configured for an image input but none was given");
      if (aug_in->shape() != Shape{B, 1, H, W}) {
        throw ShapeError("augmented input must be [B,1,H,W], got " + shape_string(aug_in->shape()));
      }
      aug = *aug_in;
    }

    ForwardContext ctx{opt.spike_fn, opt.profiler};
    Tensor s;
    if (cfg.ssam) {
      s = ssam_forward(events, aug, st, ctx);
    } else if (aug.defined()) {
      const std::array<Tensor, 2> parts{events, aug};
      s = stem1.run(concat(parts), st, ctx);
    } else {
      s = stem1.run(events, st, ctx);
    }
    const Tensor low = stem2.run(s, st, ctx);

    Tensor prev_prev = low, prev = low;
    for (const Cell& cell : cells) {
      std::vector<Tensor> taps;
      taps.push_back(cell.pre0.run(prev_prev, st, ctx));
      taps.push_back(cell.pre1.run(prev, st, ctx));
      std::array<Tensor, kNodesPerCell> outs;
      for (std::size_t nd = 0; nd < kNodesPerCell; ++nd) {
        std::vector<Tensor> inputs;
        for (const Edge& e : cell.edges) {
          if (e.edge.node != nd) continue;
          const Tensor& x = taps[e.edge.tap];
          inputs.push_back(e.edge.op == EdgeOp::skip ? x : e.conv.forward(x, opt.profiler));
        }
        const Tensor current = inputs.size() == 1 ? inputs[0] : add_n(inputs);
        outs[nd] = fire(cell.nodes[nd], current, st.neurons[cell.slots[nd]], ctx);
        taps.push_back(outs[nd]);
      }
      prev_prev = prev;
      prev = concat(outs);
    }

    std::vector<Tensor> branches;
    for (const Unit& u : aspp) branches.push_back(u.run(prev, st, ctx));
    {
      // The pooled branch is costed as accumulating weights over the spike
      // map and scaling once, so it stays addition-only.
      const Tensor pooled = global_avg_pool(prev);
      const ConvBn& pc = aspp_pool.sc.conv();
      if (opt.profiler) {
        opt.profiler->synaptic(pc.name(), prev,
                               static_cast<std::uint64_t>(prev.size(1)) * pc.spec().out * prev.size(2) * prev.size(3),
                               false);
      }
      const Tensor current = pc.forward(pooled, nullptr);
      if (opt.profiler && pc.has_batch_norm()) opt.profiler->multiplications(pc.name() + ".bn", current.numel());
      const Tensor spikes = fire(aspp_pool.sc.neuron(), current, st.neurons[aspp_pool.slot], ctx);
      branches.push_back(broadcast_spatial(spikes, prev.size(2), prev.size(3)));
    }
    Tensor context = concat(branches);
    const std::size_t up = cfg.genotype.path.back() / 4;
    if (up > 1) context = upsample(context, up, UpsampleMode::nearest);
    const std::array<Tensor, 2> dec_in{context, low};
    Tensor d = concat(dec_in);
    for (const Unit& u : decoder) d = u.run(d, st, ctx);
    const Tensor coarse = classifier.forward(d, opt.profiler);
    Tensor scores = upsample(coarse, 4, UpsampleMode::average);
    if (opt.profiler) opt.profiler->multiplications("upsample", 4 * static_cast<std::uint64_t>(scores.numel()));
    return scores;
  }
};

SpikingEdn::SpikingEdn(const ModelConfig& config) : impl_(std::make_unique<Impl>()) {
  impl_->cfg = config;
  impl_->build();
}

SpikingEdn::SpikingEdn(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
SpikingEdn::~SpikingEdn() = default;
SpikingEdn::SpikingEdn(SpikingEdn&&) noexcept = default;
SpikingEdn& SpikingEdn::operator=(SpikingEdn&&) noexcept = default;

SpikingEdn SpikingEdn::clone() const {
  SpikingEdn copy(impl_->cfg);
  if (impl_->folded) {
    copy.set_training(false);
    copy.fold();
  }
  copy.set_training(impl_->training);
  TensorList src = impl_->tensors();
  TensorList dst = copy.impl_->tensors();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto d = dst[i].tensor->mutable_data();
    const auto s = src[i].tensor->data();
    std::copy(s.begin(), s.end(), d.begin());
  }
  copy.project();
  return copy;
}

Tensor SpikingEdn::forward_step(const Tensor& events, const Tensor* aug, ModelState& state,
                                const ForwardOptions& options) const {
  return impl_->forward(events, aug, state, options);
}

ModelState SpikingEdn::initial_state() const {
  ModelState s;
  s.neurons.resize(impl_->slots);
  return s;
}

const ModelConfig& SpikingEdn::config() const { return impl_->cfg; }

void SpikingEdn::set_training(bool on) {
  impl_->training = on;
  impl_->for_each_conv([&](ConvBn& c) { c.set_training(on); });
}

bool SpikingEdn::training() const { return impl_->training; }

void SpikingEdn::fold() {
  if (impl_->training) throw StateError("cannot fold batch norm while the model is in training mode");
  impl_->for_each_conv([](ConvBn& c) { c.fold(); });
  impl_->folded = true;
}

bool SpikingEdn::folded() const { return impl_->folded; }

TensorList SpikingEdn::tensors() { return impl_->tensors(); }

TensorList SpikingEdn::parameters() {
  TensorList all = impl_->tensors();
  TensorList out;
  for (const NamedTensor& t : all) {
    if (t.trainable) out.push_back(t);
  }
  return out;
}

std::size_t SpikingEdn::parameter_count() const { return count_trainable(impl_->tensors()); }

void SpikingEdn::project() {
  impl_->for_each_neuron([](NeuronLayer& n) { n.project(); });
}

std::vector<const NeuronLayer*> SpikingEdn::neuron_layers() const {
  std::vector<const NeuronLayer*> out;
  impl_->for_each_neuron([&](NeuronLayer& n) { out.push_back(&n); });
  return out;
}

std::string SpikingEdn::first_layer_name() const { return impl_->first_layer; }

SpikingEdn build_from_genotype(const Genotype& genotype, const ModelConfig& base) {
  ModelConfig cfg = base;
  cfg.genotype = genotype;
  return SpikingEdn(cfg);
}

SEDN_END_NAMESPACE
