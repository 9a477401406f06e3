#include "sedn/eval.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <fmt/ostream.h>

SEDN_BEGIN_NAMESPACE

ConfusionAccumulator::ConfusionAccumulator(std::size_t classes, std::uint8_t ignore)
    : classes_(classes), ignore_(ignore), counts_(classes * classes, 0) {
  if (classes == 0 || classes > 255) throw DomainError("class count must lie in 1..255");
}

void ConfusionAccumulator::add(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> pred) {
  if (truth.size() != pred.size()) {
    throw ShapeError(std::to_string(truth.size()) + " labels vs " + std::to_string(pred.size()) + " predictions");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == ignore_) continue;
    if (truth[i] >= classes_ || pred[i] >= classes_) {
      throw ShapeError("label " + std::to_string(std::max(truth[i], pred[i])) + " outside " +
                       std::to_string(classes_) + " classes at pixel " + std::to_string(i));
    }
    ++counts_[truth[i] * classes_ + pred[i]];
    ++total_;
  }
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  if (other.classes_ != classes_) throw ShapeError("cannot merge accumulators with different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  total_ += other.total_;
}

MiouResult miou(const ConfusionAccumulator& acc) {
  if (acc.total() == 0) throw DomainError("MIoU of an empty confusion matrix");
  const std::size_t c = acc.classes();
  MiouResult r;
  r.per_class.resize(c);
  double sum = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::uint64_t tp = acc.at(k, k), fp = 0, fn = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == k) continue;
      fp += acc.at(j, k);
      fn += acc.at(k, j);
    }
    r.per_class[k] = static_cast<double>(tp) / static_cast<double>(std::max<std::uint64_t>(1, tp + fp + fn));
    sum += r.per_class[k];
  }
  r.miou = sum / static_cast<double>(c);
  return r;
}

std::vector<std::uint8_t> argmax_labels(const Tensor& scores) {
  if (scores.dim() != 4) throw ShapeError("argmax_labels expects [B,C,H,W] scores");
  const std::size_t B = scores.size(0), C = scores.size(1), hw = scores.size(2) * scores.size(3);
  std::vector<std::uint8_t> out(B * hw);
  for (std::size_t b = 0; b < B; ++b) {
    const Real* p = scores.ptr() + b * C * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < C; ++k) {
        if (p[k * hw + i] > p[best * hw + i]) best = k;
      }
      out[b * hw + i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

SequenceBatch make_batch(std::span<const StackSequence* const> seqs) {
  if (seqs.empty()) throw ShapeError("empty batch");
  const StackSequence& first = *seqs[0];
  const std::size_t T = first.stacks.size();
  if (T == 0) throw ShapeError("sequence without stacks");
  const bool images = !first.aug.empty();
  SequenceBatch b;
  b.size = seqs.size();
  b.warmup = first.warmup;
  const std::size_t n = first.stacks[0].frames_per_stack;
  const std::size_t H = first.stacks[0].height, W = first.stacks[0].width;
  const std::size_t hw = H * W;
  for (const StackSequence* s : seqs) {
    if (s->stacks.size() != T || s->warmup != b.warmup || s->aug.empty() != !images ||
        s->labels.size() != T - b.warmup) {
      throw ShapeError("sequences in a batch must share length, warm-up and image channel");
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<Real> ev;
    ev.reserve(b.size * n * hw);
    std::vector<Real> im;
    for (const StackSequence* s : seqs) {
      const SbtStack& st = s->stacks[t];
      if (st.height != H || st.width != W || st.frames_per_stack != n) throw ShapeError("stack sizes differ in a batch");
      ev.insert(ev.end(), st.frames.begin(), st.frames.end());
      if (images) im.insert(im.end(), s->aug[t].values.begin(), s->aug[t].values.end());
    }
    b.events.emplace_back(Shape{b.size, n, H, W}, std::move(ev));
    if (images) b.aug.emplace_back(Shape{b.size, 1, H, W}, std::move(im));
  }
  for (std::size_t t = b.warmup; t < T; ++t) {
    std::vector<std::uint8_t> lab;
    lab.reserve(b.size * hw);
    for (const StackSequence* s : seqs) {
      const LabelGrid& g = s->labels[t - b.warmup];
      lab.insert(lab.end(), g.labels.begin(), g.labels.end());
    }
    b.labels.push_back(std::move(lab));
  }
  return b;
}

double mean_spike_rate(const Profiler& profiler) {
  double spikes = 0, slots = 0;
  for (const auto& [name, rec] : profiler.spike_records()) {
    for (double v : rec.per_neuron) spikes += v;
    slots += static_cast<double>(rec.per_neuron.size()) * static_cast<double>(rec.sample_steps);
  }
  return slots > 0 ? spikes / slots : 0.0;
}

EvalResult evaluate(const SpikingEdn& model, std::span<const StackSequence> sequences, std::size_t batch_size,
                    Profiler* profiler) {
  if (sequences.empty()) throw DomainError("evaluation over zero sequences");
  NoGradScope no_grad;
  const std::size_t classes = model.config().num_classes;
  EvalResult r;
  r.confusion = ConfusionAccumulator(classes);
  Profiler local;
  Profiler* prof = profiler ? profiler : &local;
  double loss_sum = 0;
  std::size_t loss_terms = 0;
  const bool wants_image = model.config().aug == AugSource::image;
  for (std::size_t begin = 0; begin < sequences.size(); begin += batch_size) {
    std::vector<const StackSequence*> ptrs;
    for (std::size_t i = begin; i < std::min(sequences.size(), begin + batch_size); ++i) ptrs.push_back(&sequences[i]);
    const SequenceBatch b = make_batch(ptrs);
    if (wants_image && b.aug.empty()) throw ConfigError("model takes an image input but the sequences carry none");
    ModelState st = model.initial_state();
    for (std::size_t t = 0; t < b.events.size(); ++t) {
      const bool supervised = t >= b.warmup;
      ForwardOptions opt;
      opt.profiler = supervised ? prof : nullptr;
      const Tensor scores = model.forward_step(b.events[t], b.aug.empty() ? nullptr : &b.aug[t], st, opt);
      if (!supervised) continue;
      const auto& truth = b.labels[t - b.warmup];
      r.confusion.add(truth, argmax_labels(scores));
      try {
        loss_sum += pixel_cross_entropy(scores, truth, kIgnoreLabel).item();
        ++loss_terms;
      } catch (const DomainError&) {
        // every pixel ignored in this step
      }
    }
  }
  r.metrics = miou(r.confusion);
  r.loss = loss_terms ? loss_sum / static_cast<double>(loss_terms) : 0.0;
  r.mean_firing_rate = mean_spike_rate(*prof);
  return r;
}

StreamSession::StreamSession(const SpikingEdn& model, std::size_t reset_every, Profiler* profiler)
    : model_(&model),
      reset_every_(reset_every),
      profiler_(profiler),
      state_(model.initial_state()),
      confusion_(model.config().num_classes) {}

StreamSession::Step StreamSession::step(const SbtStack& stack, const Image* image, const LabelGrid* label) {
  if (width_ == 0) {
    width_ = stack.width;
    height_ = stack.height;
  } else if (stack.width != width_ || stack.height != height_) {
    throw ShapeError("stream resolution changed from " + std::to_string(width_) + "x" + std::to_string(height_) +
                     " to " + std::to_string(stack.width) + "x" + std::to_string(stack.height));
  }
  if (reset_every_ > 0 && steps_ % reset_every_ == 0) {
    state_ = model_->initial_state();
    since_reset_ = 0;
  }
  NoGradScope no_grad;
  Tensor img;
  if (image) img = image_tensor(*image);
  if (model_->config().aug == AugSource::image && !image) {
    throw ConfigError("model takes an image input but the stream step carries none");
  }
  const bool warm = since_reset_ == 0;
  ForwardOptions opt;
  opt.profiler = warm ? nullptr : profiler_;
  const Tensor scores = model_->forward_step(stack.to_tensor(), image ? &img : nullptr, state_, opt);
  Step out;
  out.prediction = argmax_labels(scores);
  if (label && !warm) {
    confusion_.add(label->labels, out.prediction);
    out.scored = true;
  }
  ++steps_;
  ++since_reset_;
  return out;
}

void StreamSession::set_state(ModelState state, std::size_t steps_done) {
  if (state.neurons.size() != state_.neurons.size()) throw StateError("state belongs to a different model");
  state_ = std::move(state);
  steps_ = steps_done;
  since_reset_ = reset_every_ > 0 ? steps_done % reset_every_ : steps_done;
}

OpLedger ledger_from_profile(const Profiler& profiler, const EnergyModel& energy) {
  OpLedger L;
  L.energy = energy;
  std::set<std::string> real_layers;
  double weighted_rate = 0, weight = 0;
  for (const std::string& name : profiler.synaptic_order()) {
    const SynapticRecord& rec = profiler.synaptic_records().find(name)->second;
    LayerOps op;
    op.name = name;
    op.macs_per_step = rec.macs_per_step;
    op.real_input = rec.real_input;
    op.steps = static_cast<double>(rec.sample_steps);
    op.input_rate = rec.sample_steps ? rec.active_fraction_sum / static_cast<double>(rec.sample_steps) : 0.0;
    const double dense = op.steps * static_cast<double>(op.macs_per_step);
    if (op.real_input) {
      op.mults = dense;
      real_layers.insert(name);
    } else {
      op.adds = op.input_rate * dense;
      weighted_rate += op.adds;
      weight += dense;
    }
    L.ann_macs += dense;
    L.total_adds += op.adds;
    L.layers.push_back(op);
  }
  double mults = 0;
  for (const LayerOps& op : L.layers) mults += op.mults;
  for (const auto& [name, count] : profiler.multiplication_records()) {
    if (real_layers.count(name)) continue;
    L.elementwise.emplace_back(name, count);
    mults += static_cast<double>(count);
    const bool first_layer = name.starts_with("stem1") || name.starts_with("ssam.");
    if (name != "upsample" && !first_layer) L.spiking_multiplications += count;
  }
  L.total_mults = mults;
  L.mean_rate = weight > 0 ? weighted_rate / weight : 0.0;
  return L;
}

OpLedger count_ops(const SpikingEdn& model, std::span<const StackSequence> sequences, std::size_t batch_size,
                   const EnergyModel& energy) {
  if (!model.folded()) throw StateError("operation counting needs a folded model (batch norm would be miscounted)");
  Profiler prof;
  evaluate(model, sequences, batch_size, &prof);
  return ledger_from_profile(prof, energy);
}

void write_ledger(std::ostream& os, const OpLedger& L) {
  fmt::print(os, "{:<28} {:>14} {:>6} {:>10} {:>10} {:>16} {:>16}\n", "layer", "A", "input", "rate", "T", "adds",
             "mults");
  for (const LayerOps& op : L.layers) {
    fmt::print(os, "{:<28} {:>14} {:>6} {:>10.6f} {:>10.0f} {:>16.1f} {:>16.1f}\n", op.name, op.macs_per_step,
               op.real_input ? "real" : "spike", op.input_rate, op.steps, op.adds, op.mults);
  }
  for (const auto& [name, count] : L.elementwise) fmt::print(os, "elementwise {:<16} mults {}\n", name, count);
  fmt::print(os, "total_adds {:.1f}\ntotal_mults {:.1f}\nann_macs {:.1f}\nmean_rate {:.6f}\n", L.total_adds,
             L.total_mults, L.ann_macs, L.mean_rate);
  fmt::print(os, "spiking_layer_mults {}\n", L.spiking_multiplications);
  fmt::print(os, "energy_pj {:.3f}\nann_energy_pj {:.3f}\n", L.energy_pj(), L.ann_energy_pj());
}

const LayerRates* FiringRateReport::find(const std::string& name) const {
  for (const LayerRates& l : layers) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

FiringRateReport firing_rate_report(const Profiler& profiler) {
  FiringRateReport rep;
  for (const std::string& name : profiler.spike_order()) {
    const SpikeRecord& rec = profiler.spike_records().find(name)->second;
    LayerRates lr;
    lr.name = name;
    lr.histogram.assign(rep.edges.size() - 1, 0);
    double sum = 0;
    for (double count : rec.per_neuron) {
      const double rate = rec.sample_steps ? count / static_cast<double>(rec.sample_steps) : 0.0;
      sum += rate;
      std::size_t bucket = static_cast<std::size_t>(
          std::upper_bound(rep.edges.begin(), rep.edges.end(), rate) - rep.edges.begin());
      bucket = bucket == 0 ? 0 : bucket - 1;
      bucket = std::min(bucket, lr.histogram.size() - 1);
      ++lr.histogram[bucket];
    }
    lr.mean = rec.per_neuron.empty() ? 0.0 : sum / static_cast<double>(rec.per_neuron.size());
    rep.layers.push_back(std::move(lr));
  }
  return rep;
}

void write_histogram_csv(std::ostream& os, const FiringRateReport& rep) {
  os << "layer,mean,bucket_lo,bucket_hi,count\n";
  for (const LayerRates& l : rep.layers) {
    for (std::size_t i = 0; i < l.histogram.size(); ++i) {
      fmt::print(os, "{},{:.6f},{},{},{}\n", l.name, l.mean, rep.edges[i], rep.edges[i + 1], l.histogram[i]);
    }
  }
}

SEDN_END_NAMESPACE
