#include "sedn/search.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "sedn/log.hpp"

SEDN_BEGIN_NAMESPACE

Tensor mixed_edge_forward(const Tensor& alpha, std::span<const Tensor> outputs) {
  if (alpha.dim() != 1 || alpha.numel() != outputs.size() || outputs.empty()) {
    throw ShapeError("mixed edge needs one logit per candidate output");
  }
  if (outputs.size() == 1) return outputs[0];
  const Tensor w = softmax(alpha);
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < outputs.size(); ++i) terms.push_back(scale_by(outputs[i], select(w, i)));
  return add_n(terms);
}

MixedEdge::MixedEdge(const std::string& name, std::size_t channels, std::span<const EdgeOp> candidates,
                     std::mt19937_64& rng)
    : ops_(candidates.begin(), candidates.end()) {
  if (ops_.empty()) throw ShapeError("mixed edge without candidates");
  for (EdgeOp op : ops_) {
    if (op == EdgeOp::skip) {
      convs_.emplace_back();
    } else {
      const std::size_t k = op == EdgeOp::conv3x3 ? 3 : 5;
      ConvSpec spec{channels, channels, k};
      spec.affine = false;
      convs_.emplace_back(name + "." + std::string(edge_op_name(op)), spec, rng);
    }
  }
}

Tensor MixedEdge::forward(const Tensor& x, const Tensor& alpha, Profiler* profiler) const {
  std::vector<Tensor> outs;
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    outs.push_back(ops_[i] == EdgeOp::skip ? x : convs_[i].forward(x, profiler));
  }
  return mixed_edge_forward(alpha, outs);
}

void MixedEdge::set_training(bool on) {
  for (ConvBn& c : convs_) c.set_training(on);
}

void MixedEdge::collect(TensorList& out) {
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    if (ops_[i] != EdgeOp::skip) convs_[i].collect(out);
  }
}

std::vector<std::pair<std::size_t, std::size_t>> cell_edge_slots() {
  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t n = 0; n < kNodesPerCell; ++n) {
    for (std::size_t t = 0; t < taps_for_node(n); ++t) slots.emplace_back(n, t);
  }
  return slots;
}

TransitionWeights::TransitionWeights(std::size_t layers_, std::size_t levels_)
    : layers(layers_), levels(levels_), w(layers_ * levels_ * 3, 0.0) {}

double TransitionWeights::at(std::size_t layer, std::size_t from, std::size_t to) const {
  if (layer >= layers || from >= levels || to >= levels || to + 1 < from || to > from + 1) return 0.0;
  return w[(layer * levels + from) * 3 + (to + 1 - from)];
}

double& TransitionWeights::at(std::size_t layer, std::size_t from, std::size_t to) {
  if (layer >= layers || from >= levels || to >= levels || to + 1 < from || to > from + 1) {
    throw ShapeError(fmt::format("no transition {} -> {} at layer {}", from, to, layer));
  }
  return w[(layer * levels + from) * 3 + (to + 1 - from)];
}

std::vector<std::size_t> TransitionWeights::moves(std::size_t from) const {
  std::vector<std::size_t> m;
  if (from > 0) m.push_back(from - 1);
  m.push_back(from);
  if (from + 1 < levels) m.push_back(from + 1);
  return m;
}

TrellisPath decode_trellis(const TransitionWeights& tw) {
  if (tw.layers == 0 || tw.levels == 0) throw ShapeError("empty trellis");
  constexpr double kNeg = -std::numeric_limits<double>::infinity();
  auto lg = [](double v) { return v > 0 ? std::log(v) : kNeg; };
  std::vector<double> score(tw.levels, kNeg);
  std::vector<std::vector<std::size_t>> back(tw.layers, std::vector<std::size_t>(tw.levels, 0));
  for (std::size_t k = 0; k < tw.levels; ++k) score[k] = lg(tw.at(0, 0, k));
  for (std::size_t l = 1; l < tw.layers; ++l) {
    std::vector<double> next(tw.levels, kNeg);
    for (std::size_t k = 0; k < tw.levels; ++k) {
      for (std::size_t j = 0; j < tw.levels; ++j) {
        const double s = score[j] + lg(tw.at(l, j, k));
        if (s > next[k]) {
          next[k] = s;
          back[l][k] = j;
        }
      }
    }
    score = std::move(next);
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < tw.levels; ++k) {
    if (score[k] > score[best]) best = k;
  }
  if (score[best] == kNeg) throw DomainError("no trellis path has positive weight");
  TrellisPath p;
  p.log_weight = score[best];
  p.levels.assign(tw.layers, 0);
  p.levels.back() = best;
  for (std::size_t l = tw.layers - 1; l > 0; --l) p.levels[l - 1] = back[l][p.levels[l]];
  return p;
}

Genotype extract_genotype(const ArchWeights& arch, std::uint64_t seed, std::uint64_t epoch) {
  const auto slots = cell_edge_slots();
  if (arch.edge_alphas.size() != slots.size()) {
    throw ShapeError(fmt::format("expected {} edge logit rows, got {}", slots.size(), arch.edge_alphas.size()));
  }
  std::vector<CellEdge> cell;
  for (std::size_t e = 0; e < slots.size(); ++e) {
    const auto& a = arch.edge_alphas[e];
    if (a.size() != arch.candidates.size() || a.empty()) throw ShapeError("edge logits do not match the candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < a.size(); ++i) {
      if (a[i] > a[best]) best = i;
    }
    const auto ties = std::count(a.begin(), a.end(), a[best]);
    if (ties > 1) {
      warn(fmt::format("edge node {} tap {}: {} candidates tie, choosing {}", slots[e].first, tap_name(slots[e].second),
                       ties, edge_op_name(arch.candidates[best])));
    }
    cell.push_back({slots[e].first, slots[e].second, arch.candidates[best]});
  }
  const TrellisPath path = decode_trellis(arch.transitions);
  Genotype g;
  for (std::size_t level : path.levels) g.path.push_back(kLevelFactors[level]);
  g.cells.assign(g.path.size(), cell);
  g.seed = seed;
  g.epoch = epoch;
  g.validate();
  return g;
}

void SearchConfig::validate() const {
  if (layers == 0 || layers > 6) throw ConfigError("search layers must lie in 1..6");
  if (candidates.empty()) throw ConfigError("search needs at least one candidate operation");
  if (warmup_epochs > epochs) throw ConfigError("warm-up epochs exceed the search epochs");
  if (batch_size == 0) throw ConfigError("search batch size must be positive");
}

namespace {

struct SUnit {
  SpikingConv sc;
  std::size_t slot = 0;
};

struct SResample {
  bool up = false;
  SUnit unit;
};

struct SCell {
  std::size_t level = 0;
  std::map<std::size_t, SResample> inputs;  // by source level
  std::vector<MixedEdge> edges;
  std::array<NeuronLayer, kNodesPerCell> nodes;
  std::array<std::size_t, kNodesPerCell> slots{};
};

}  // namespace

struct SuperNet::Impl {
  ModelConfig cfg;
  SearchConfig sc;
  std::size_t slots = 0;
  SUnit stem1;
  SUnit stem2;
  std::vector<std::vector<SCell>> cells;  // [layer][level]
  std::vector<Tensor> alphas;             // per canonical edge
  std::vector<std::vector<Tensor>> betas; // [layer][from level], one logit per move
  std::vector<SUnit> heads;               // per final level
  SUnit dec;
  ConvBn classifier;

  NeuronConfig neuron(bool first) const {
    NeuronConfig n = cfg.neuron;
    n.adaptive = cfg.placement == Placement::all || (first && cfg.placement == Placement::first_layer);
    n.beta = n.adaptive ? cfg.ailif_beta : Real(0);
    if (n.adaptive) n.tau_a = cfg.ailif_tau_a;
    if (first && cfg.first_layer_threshold >= 0) n.u_th = cfg.first_layer_threshold;
    return n;
  }

  SUnit unit(const std::string& name, const ConvSpec& spec, bool first, std::mt19937_64& rng) {
    return SUnit{SpikingConv(name, spec, neuron(first), rng), slots++};
  }

  static std::size_t reachable(std::size_t layer) { return std::min<std::size_t>(layer + 2, kLevelFactors.size()); }

  void build() {
    sc.validate();
    std::mt19937_64 rng(sc.seed);
    const std::size_t S = cfg.stem_channels, C = cfg.node_channels, D = cfg.decoder_channels;
    ConvSpec s1{cfg.event_channels, S, 3};
    s1.real_input = true;
    stem1 = unit("stem1", s1, true, rng);
    stem2 = unit("stem2", ConvSpec{S, S, 5, 4}, false, rng);

    std::normal_distribution<double> nd(0.0, 1e-3);
    for (std::size_t e = 0; e < cell_edge_slots().size(); ++e) {
      std::vector<Real> v(sc.candidates.size());
      for (Real& x : v) x = static_cast<Real>(nd(rng));
      alphas.emplace_back(Shape{v.size()}, std::move(v), true);
    }
    const TransitionWeights shape(sc.layers, kLevelFactors.size());
    for (std::size_t l = 0; l < sc.layers; ++l) {
      std::vector<Tensor> row;
      const std::size_t sources = l == 0 ? 1 : reachable(l - 1);
      for (std::size_t j = 0; j < sources; ++j) row.push_back(Tensor::zeros({shape.moves(j).size()}, true));
      betas.push_back(std::move(row));
    }

    for (std::size_t l = 0; l < sc.layers; ++l) {
      std::vector<SCell> layer;
      const std::size_t cin = l == 0 ? S : kNodesPerCell * C;
      const std::size_t sources = l == 0 ? 1 : reachable(l - 1);
      for (std::size_t k = 0; k < reachable(l); ++k) {
        SCell cell;
        cell.level = k;
        const std::string base = fmt::format("super{}.{}", l, k);
        for (std::size_t j = 0; j < sources; ++j) {
          if (k + 1 < j || k > j + 1) continue;
          SResample r;
          ConvSpec spec{cin, C, 1};
          if (k > j) {
            spec.kernel = 3;
            spec.stride = 2;
          }
          r.up = k < j;
          r.unit = unit(fmt::format("{}.from{}", base, j), spec, false, rng);
          cell.inputs.emplace(j, std::move(r));
        }
        for (auto [n, t] : cell_edge_slots()) {
          cell.edges.emplace_back(fmt::format("{}.edge{}.{}", base, n, tap_name(t)), C, sc.candidates, rng);
        }
        for (std::size_t n = 0; n < kNodesPerCell; ++n) {
          cell.nodes[n] = NeuronLayer(fmt::format("{}.node{}", base, n), neuron(false));
          cell.slots[n] = slots++;
        }
        layer.push_back(std::move(cell));
      }
      cells.push_back(std::move(layer));
    }
    for (std::size_t k = 0; k < cells.back().size(); ++k) {
      heads.push_back(unit(fmt::format("head{}", k), ConvSpec{kNodesPerCell * C, D, 1}, false, rng));
    }
    dec = unit("dec1", ConvSpec{D + S, D, 3}, false, rng);
    ConvSpec cls{D, cfg.num_classes, 1};
    cls.batch_norm = false;
    cls.bias = true;
    classifier = ConvBn("classifier", cls, rng);
  }

  Tensor forward(const Tensor& events, std::vector<NeuronState>& st, const ForwardOptions& opt) const {
    if (events.dim() != 4 || events.size(1) != cfg.event_channels) throw ShapeError("supernet expects [B,n,H,W] events");
    const std::size_t max_factor = kLevelFactors[cells.back().size() - 1];
    if (events.size(2) % max_factor || events.size(3) % max_factor) {
      throw ShapeError(fmt::format("input size must be divisible by {}", max_factor));
    }
    if (st.size() != slots) throw StateError("supernet state does not match");
    ForwardContext ctx{opt.spike_fn, opt.profiler};
    auto run = [&](const SUnit& u, const Tensor& x) { return u.sc.forward(x, st[u.slot], ctx); };
    const Tensor low = run(stem2, run(stem1, events));
    std::vector<Tensor> prev{low};
    for (std::size_t l = 0; l < cells.size(); ++l) {
      std::vector<Tensor> probs;
      for (const Tensor& b : betas[l]) probs.push_back(softmax(b));
      std::vector<Tensor> outs;
      for (const SCell& cell : cells[l]) {
        std::vector<Tensor> terms;
        for (const auto& [j, r] : cell.inputs) {
          Tensor y = run(r.unit, prev[j]);
          if (r.up) y = upsample(y, 2, UpsampleMode::nearest);
          const std::size_t move = cell.level + 1 - j - (j == 0 ? 1 : 0);
          terms.push_back(scale_by(y, select(probs[j], move)));
        }
        const Tensor in = terms.size() == 1 ? terms[0] : add_n(terms);
        std::vector<Tensor> taps{in, in};
        std::array<Tensor, kNodesPerCell> nodes;
        std::size_t e = 0;
        for (std::size_t n = 0; n < kNodesPerCell; ++n) {
          std::vector<Tensor> currents;
          for (std::size_t t = 0; t < taps_for_node(n); ++t, ++e) {
            currents.push_back(cell.edges[e].forward(taps[t], alphas[e], opt.profiler));
          }
          nodes[n] = fire(cell.nodes[n], add_n(currents), st[cell.slots[n]], ctx);
          taps.push_back(nodes[n]);
        }
        outs.push_back(concat(nodes));
      }
      prev = std::move(outs);
    }
    std::vector<Tensor> feats;
    for (std::size_t k = 0; k < prev.size(); ++k) {
      Tensor h = run(heads[k], prev[k]);
      if (k > 0) h = upsample(h, kLevelFactors[k] / kLevelFactors[0], UpsampleMode::nearest);
      feats.push_back(h);
    }
    const std::array<Tensor, 2> parts{add_n(feats), low};
    const Tensor d = run(dec, concat(parts));
    return upsample(classifier.forward(d, opt.profiler), 4, UpsampleMode::average);
  }

  template <class F>
  void for_each_conv(F&& f) {
    f(stem1.sc.conv());
    f(stem2.sc.conv());
    for (auto& layer : cells) {
      for (SCell& c : layer) {
        for (auto& [j, r] : c.inputs) f(r.unit.sc.conv());
      }
    }
    for (SUnit& h : heads) f(h.sc.conv());
    f(dec.sc.conv());
    f(classifier);
  }
};

SuperNet::SuperNet(const ModelConfig& base, const SearchConfig& search) : impl_(std::make_unique<Impl>()) {
  impl_->cfg = base;
  impl_->sc = search;
  impl_->build();
}

SuperNet::~SuperNet() = default;
SuperNet::SuperNet(SuperNet&&) noexcept = default;
SuperNet& SuperNet::operator=(SuperNet&&) noexcept = default;

Tensor SuperNet::forward_step(const Tensor& events, std::vector<NeuronState>& state, const ForwardOptions& opt) const {
  return impl_->forward(events, state, opt);
}

std::vector<NeuronState> SuperNet::initial_state() const { return std::vector<NeuronState>(impl_->slots); }

Tensor SuperNet::loss(const SequenceBatch& batch) const {
  std::vector<NeuronState> st = initial_state();
  std::vector<Tensor> losses;
  for (std::size_t t = 0; t < batch.events.size(); ++t) {
    const Tensor scores = forward_step(batch.events[t], st);
    if (t >= batch.warmup) losses.push_back(pixel_cross_entropy(scores, batch.labels[t - batch.warmup], kIgnoreLabel));
  }
  if (losses.empty()) throw DomainError("sequence has no supervised steps");
  return scale(add_n(losses), Real(1) / static_cast<Real>(losses.size()));
}

TensorList SuperNet::weight_parameters() {
  TensorList out;
  impl_->for_each_conv([&](ConvBn& c) { c.collect(out); });
  for (auto& layer : impl_->cells) {
    for (SCell& c : layer) {
      for (MixedEdge& e : c.edges) e.collect(out);
    }
  }
  TensorList trainable;
  for (const NamedTensor& t : out) {
    if (t.trainable) trainable.push_back(t);
  }
  return trainable;
}

TensorList SuperNet::arch_parameters() {
  TensorList out;
  for (std::size_t e = 0; e < impl_->alphas.size(); ++e) out.push_back({fmt::format("alpha{}", e), &impl_->alphas[e], true});
  for (std::size_t l = 0; l < impl_->betas.size(); ++l) {
    for (std::size_t j = 0; j < impl_->betas[l].size(); ++j) {
      out.push_back({fmt::format("beta{}.{}", l, j), &impl_->betas[l][j], true});
    }
  }
  return out;
}

void SuperNet::set_training(bool on) {
  impl_->for_each_conv([&](ConvBn& c) { c.set_training(on); });
  for (auto& layer : impl_->cells) {
    for (SCell& c : layer) {
      for (MixedEdge& e : c.edges) e.set_training(on);
    }
  }
}

std::vector<double> SuperNet::edge_weights(std::size_t edge) const {
  const Tensor w = softmax(impl_->alphas.at(edge).detach());
  return {w.data().begin(), w.data().end()};
}

ArchWeights SuperNet::arch_weights() const {
  ArchWeights a;
  a.candidates = impl_->sc.candidates;
  for (const Tensor& t : impl_->alphas) a.edge_alphas.emplace_back(t.data().begin(), t.data().end());
  a.transitions = TransitionWeights(impl_->sc.layers, kLevelFactors.size());
  for (std::size_t l = 0; l < impl_->betas.size(); ++l) {
    for (std::size_t j = 0; j < impl_->betas[l].size(); ++j) {
      const Tensor p = softmax(impl_->betas[l][j].detach());
      const auto moves = a.transitions.moves(j);
      for (std::size_t m = 0; m < moves.size(); ++m) a.transitions.at(l, j, moves[m]) = p[m];
    }
  }
  return a;
}

SearchResult run_search(SuperNet& net, std::span<const StackSequence> weight_split,
                        std::span<const StackSequence> arch_split, const SearchConfig& cfg,
                        const std::function<void(const SearchEpoch&)>& on_epoch) {
  cfg.validate();
  if (weight_split.empty() || arch_split.empty()) throw DomainError("architecture search needs two non-empty splits");
  AdamOptions wo;
  wo.lr = cfg.weight_lr;
  AdamOptions ao;
  ao.lr = cfg.arch_lr;
  Adam wopt(net.weight_parameters(), wo);
  Adam aopt(net.arch_parameters(), ao);
  auto batches = [&](std::span<const StackSequence> split, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(split.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<SequenceBatch> out;
    for (std::size_t b = 0; b < idx.size(); b += cfg.batch_size) {
      std::vector<const StackSequence*> ptrs;
      for (std::size_t i = b; i < std::min(idx.size(), b + cfg.batch_size); ++i) ptrs.push_back(&split[idx[i]]);
      out.push_back(make_batch(ptrs));
    }
    return out;
  };
  SearchResult res;
  net.set_training(true);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(cfg.seed * 7919ULL + epoch);
    const auto wb = batches(weight_split, rng);
    SearchEpoch se;
    se.epoch = epoch;
    se.warmup = epoch <= cfg.warmup_epochs;
    if (se.warmup) {
      for (const SequenceBatch& b : wb) {
        wopt.zero_grad();
        Graph g;
        const Tensor loss = net.loss(b);
        se.train_loss += loss.item();
        g.backward(loss);
        wopt.step();
      }
      wopt.zero_grad();
      aopt.zero_grad();
    } else {
      const auto ab = batches(arch_split, rng);
      for (std::size_t i = 0; i < wb.size(); ++i) {
        const BilevelLosses l = bilevel_step(net, wb[i], ab[i % ab.size()], &wopt, &aopt);
        se.train_loss += l.train;
        se.val_loss += l.val;
      }
      se.val_loss /= static_cast<double>(wb.size());
    }
    se.train_loss /= static_cast<double>(wb.size());
    res.epochs.push_back(se);
    if (on_epoch) on_epoch(se);
  }
  net.set_training(false);
  res.genotype = extract_genotype(net.arch_weights(), cfg.seed, cfg.epochs);
  return res;
}

EdgeRegressionTask::EdgeRegressionTask(std::size_t channels, std::size_t extent, std::uint64_t seed)
    : channels_(channels), extent_(extent), rng_(seed) {
  target_kernel_ = fan_in_uniform({channels, channels, 3, 3}, channels * 9, rng_);
  const std::array<EdgeOp, 2> ops{EdgeOp::skip, EdgeOp::conv3x3};
  edge_ = MixedEdge("edge", channels, ops, rng_);
  alpha_ = Tensor::zeros({2}, true);
}

EdgeRegressionTask::Batch EdgeRegressionTask::sample(std::size_t batch) {
  Batch b;
  b.size = batch;
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Real> v(batch * channels_ * extent_ * extent_);
  for (Real& x : v) x = static_cast<Real>(nd(rng_));
  b.input = Tensor({batch, channels_, extent_, extent_}, std::move(v));
  NoGradScope ng;
  Tensor rm = Tensor::zeros({channels_}), rv = Tensor::full({channels_}, Real(1));
  const Tensor raw = conv2d(b.input, target_kernel_, ConvGeometry{1, 1, 1});
  b.target = batch_norm(raw, nullptr, nullptr, rm, rv, BatchNormOptions{}).detach();
  return b;
}

Tensor EdgeRegressionTask::loss(const Batch& b) const { return mse_loss(edge_.forward(b.input, alpha_), b.target); }

TensorList EdgeRegressionTask::weight_parameters() {
  TensorList out, trainable;
  edge_.collect(out);
  for (const NamedTensor& t : out) {
    if (t.trainable) trainable.push_back(t);
  }
  return trainable;
}

TensorList EdgeRegressionTask::arch_parameters() { return {{"alpha", &alpha_, true}}; }

std::vector<double> EdgeRegressionTask::weights() const {
  const Tensor w = softmax(alpha_.detach());
  return {w.data().begin(), w.data().end()};
}

SEDN_END_NAMESPACE
