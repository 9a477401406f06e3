#include "sedn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include "json.hpp"

SEDN_BEGIN_NAMESPACE

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0 || eval_batch == 0 || eval_every == 0) {
    throw ConfigError("epochs, batch sizes and eval_every must be positive");
  }
  if (start_epoch == 0) throw ConfigError("start_epoch counts from 1");
  if (!(lr >= 0) || !(poly_power > 0)) throw ConfigError("learning rate must be >= 0 and poly power > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must lie in [0, 1)");
  if (grad_clip < 0 || time_budget_s < 0) throw ConfigError("grad_clip and time budget must be >= 0");
}

Tensor sequence_loss(const SpikingEdn& model, const SequenceBatch& batch, SpikeFn fn) {
  ModelState st = model.initial_state();
  ForwardOptions opt;
  opt.spike_fn = fn;
  std::vector<Tensor> losses;
  for (std::size_t t = 0; t < batch.events.size(); ++t) {
    const Tensor scores = model.forward_step(batch.events[t], batch.aug.empty() ? nullptr : &batch.aug[t], st, opt);
    if (t < batch.warmup) continue;
    losses.push_back(pixel_cross_entropy(scores, batch.labels[t - batch.warmup], kIgnoreLabel));
  }
  if (losses.empty()) throw DomainError("sequence has no supervised steps");
  return scale(add_n(losses), Real(1) / static_cast<Real>(losses.size()));
}

namespace {

std::string rate_diagnostics(const SpikingEdn& model, const SequenceBatch& batch) {
  Profiler prof;
  {
    NoGradScope ng;
    ModelState st = model.initial_state();
    ForwardOptions opt;
    opt.profiler = &prof;
    for (std::size_t t = 0; t < batch.events.size(); ++t) {
      model.forward_step(batch.events[t], batch.aug.empty() ? nullptr : &batch.aug[t], st, opt);
    }
  }
  std::string out;
  for (const LayerRates& l : firing_rate_report(prof).layers) out += fmt::format("  {} rate {:.4f}\n", l.name, l.mean);
  return out;
}

}  // namespace

double train_step(SpikingEdn& model, const SequenceBatch& batch, Adam& optimizer, double grad_clip) {
  optimizer.zero_grad();
  double value = 0;
  double norm = 0;
  {
    Graph graph;
    const Tensor loss = sequence_loss(model, batch);
    value = loss.item();
    if (std::isfinite(value)) graph.backward(loss);
  }
  if (std::isfinite(value)) norm = clip_grad_norm(optimizer.params(), grad_clip);
  if (!std::isfinite(value) || !std::isfinite(norm)) {
    std::string msg = fmt::format("non-finite training loss {} (gradient norm {})\nfiring rates:\n", value, norm);
    try {
      msg += rate_diagnostics(model, batch);
    } catch (const std::exception& e) {
      msg += std::string("  unavailable: ") + e.what() + "\n";
    }
    for (const NamedTensor& p : optimizer.params()) {
      if (!p.tensor->has_grad()) continue;
      double s = 0;
      for (Real g : p.tensor->grad()) s += static_cast<double>(g) * g;
      msg += fmt::format("  grad {} {:.4g}\n", p.name, std::sqrt(s));
    }
    throw NumericError(msg);
  }
  optimizer.step();
  model.project();
  return value;
}

TrainHistory train(SpikingEdn& model, std::span<const StackSequence> train_split,
                   std::span<const StackSequence> val_split, const TrainConfig& cfg, const TrainHooks& hooks,
                   Adam* optimizer) {
  cfg.validate();
  if (train_split.empty()) throw DomainError("empty training split");
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  AdamOptions ao;
  ao.lr = cfg.lr;
  ao.beta1 = cfg.beta1;
  ao.beta2 = cfg.beta2;
  std::optional<Adam> own;
  if (!optimizer) own.emplace(model.parameters(), ao);
  Adam& opt = optimizer ? *optimizer : *own;
  const std::size_t batches = (train_split.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::uint64_t t_max = static_cast<std::uint64_t>(batches) * cfg.epochs;

  std::vector<std::size_t> order(train_split.size());
  TrainHistory hist;
  hist.steps = opt.steps();
  auto log = [&](const EpochStats& e, const char* split, double loss, double miou, double fr) {
    if (!hooks.metrics) return;
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["split"] = split;
    j["loss"] = loss;
    if (miou >= 0) j["miou"] = miou;
    if (fr >= 0) j["mean_fr"] = fr;
    j["lr"] = e.lr;
    j["seed"] = cfg.seed;
    *hooks.metrics << j.dump() << '\n';
    hooks.metrics->flush();
  };

  for (std::size_t epoch = cfg.start_epoch; epoch <= cfg.epochs; ++epoch) {
    model.set_training(true);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed * 1000003ULL + epoch);
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats es;
    es.epoch = epoch;
    double loss_sum = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<const StackSequence*> ptrs;
      for (std::size_t i = b * cfg.batch_size; i < std::min(order.size(), (b + 1) * cfg.batch_size); ++i) {
        ptrs.push_back(&train_split[order[i]]);
      }
      const double lr = poly_lr(cfg.lr, hist.steps, t_max, cfg.poly_power);
      opt.set_lr(lr);
      es.lr = lr;
      loss_sum += train_step(model, make_batch(ptrs), opt, cfg.grad_clip);
      ++hist.steps;
    }
    es.train_loss = loss_sum / static_cast<double>(batches);
    const bool out_of_time = cfg.time_budget_s > 0 && elapsed() > cfg.time_budget_s;
    const bool last = epoch == cfg.epochs || out_of_time;
    log(es, "train", es.train_loss, -1, -1);
    if (!val_split.empty() && (epoch % cfg.eval_every == 0 || last)) {
      model.set_training(false);
      const EvalResult r = evaluate(model, val_split, cfg.eval_batch);
      es.evaluated = true;
      es.val_loss = r.loss;
      es.val_miou = r.metrics.miou;
      es.mean_fr = r.mean_firing_rate;
      log(es, "val", r.loss, r.metrics.miou, r.mean_firing_rate);
    }
    es.seconds = elapsed();
    hist.epochs.push_back(es);
    if (hooks.on_epoch) hooks.on_epoch(es);
    if (out_of_time && epoch < cfg.epochs) {
      hist.stopped_early = true;
      break;
    }
  }
  model.set_training(false);
  hist.seconds = elapsed();
  return hist;
}

SEDN_END_NAMESPACE
