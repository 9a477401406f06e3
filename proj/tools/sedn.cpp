// sedn: synthesize data, search, train, evaluate, stream and count operations.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "json.hpp"
#include "sedn/config.hpp"
#include "sedn/io.hpp"

namespace fs = std::filesystem;
using namespace sedn;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  std::vector<std::string> sets;
  std::string data;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, Common& c, bool needs_data, bool needs_checkpoint) {
  cmd->add_option("--config", c.config, "INI configuration file");
  cmd->add_option("--seed", c.seed, "Seed override");
  cmd->add_option("--out", c.out, "Output directory")->required();
  cmd->add_flag("--force", c.force, "Overwrite an existing output directory");
  cmd->add_option("--set", c.sets, "Override as section.key=value (repeatable)");
  if (needs_data) cmd->add_option("--data", c.data, "Dataset directory written by synth")->required();
  if (needs_checkpoint) cmd->add_option("--checkpoint", c.checkpoint, "Model checkpoint")->required();
}

RunConfig resolve(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  for (const std::string& s : c.sets) rc.apply_override(s);
  return rc;
}

fs::path prepare_out(const Common& c) {
  const fs::path out(c.out);
  if (fs::exists(out) && !fs::is_directory(out)) throw ConfigError(out.string() + " exists and is not a directory");
  if (fs::exists(out) && !fs::is_empty(out) && !c.force) {
    throw ConfigError("output directory " + out.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(out);
  return out;
}

void snapshot(const fs::path& out, const RunConfig& rc) { write_file_atomic(out / "resolved_config.ini", rc.to_text()); }

fs::path config_dir(const Common& c) { return c.config.empty() ? fs::path{} : fs::path(c.config).parent_path(); }

/// Dataset options stored with the data, with stacking and sequence keys
/// from the run configuration layered on top.
ToyDatasetOptions dataset_options(const Common& c, const RunConfig& rc) {
  RunConfig merged = RunConfig::load(fs::path(c.data) / "dataset.ini");
  for (const auto& [k, v] : rc.section("data")) merged.set("data." + k, v);
  return dataset_options_from(merged);
}


void check_model_data(const ModelConfig& m, const ToyDatasetOptions& o) {
  if (m.event_channels != o.stacking.frames) {
    throw ConfigError(fmt::format("model.event_channels = {} but the data stacks {} frames", m.event_channels,
                                  o.stacking.frames));
  }
  if (m.num_classes != o.scene.num_classes) {
    throw ConfigError(fmt::format("model.num_classes = {} but the data has {} classes", m.num_classes,
                                  static_cast<int>(o.scene.num_classes)));
  }
}

int cmd_synth(const Common& c) {
  RunConfig rc = resolve(c);
  if (c.seed) rc.set("data.seed", std::to_string(*c.seed));
  const ToyDatasetOptions o = dataset_options_from(rc);
  if (o.scene.width == 0 || o.scene.height == 0 || o.scene.duration_us == 0) {
    throw ConfigError("scene width, height and duration must be positive");
  }
  const fs::path out = prepare_out(c);
  const auto stats = write_dataset(out, o);
  RunConfig manifest;
  for (const auto& [k, v] : rc.section("data")) manifest.set("data." + k, v);
  manifest.set("data.seed", std::to_string(o.seed));
  manifest.set("data.train_scenes", std::to_string(o.train_scenes));
  manifest.set("data.test_scenes", std::to_string(o.test_scenes));
  write_file_atomic(out / "dataset.ini", manifest.to_text());
  snapshot(out, rc);

  std::ostringstream csv;
  csv << "scene,bin_start_us,events\n";
  std::uint64_t total = 0;
  for (const SceneStats& s : stats) {
    total += s.events;
    for (std::size_t b = 0; b < s.density.size(); ++b) {
      fmt::print(csv, "{},{},{}\n", s.stem, b * o.stacking.delta_t_us, s.density[b]);
    }
    const auto [lo, hi] = std::minmax_element(s.density.begin(), s.density.end());
    fmt::print("{}: {} events, per {} us bin min {} max {}\n", s.stem, s.events, o.stacking.delta_t_us,
               lo == s.density.end() ? 0 : *lo, hi == s.density.end() ? 0 : *hi);
  }
  write_file_atomic(out / "density.csv", csv.str());
  fmt::print("{} scenes, {} events\n", stats.size(), total);
  return 0;
}

int cmd_search(const Common& c) {
  RunConfig rc = resolve(c);
  if (c.seed) rc.set("search.seed", std::to_string(*c.seed));
  const ModelConfig base = model_config_from(rc, config_dir(c));
  const SearchConfig sc = search_config_from(rc);
  const ToyDatasetOptions o = dataset_options(c, rc);
  check_model_data(base, o);
  const fs::path out = prepare_out(c);
  snapshot(out, rc);
  const ToyDataset ds = read_dataset(c.data, o);
  // The training split is halved: one half trains weights, the other the architecture.
  const std::size_t half = ds.train.size() / 2;
  const std::span<const StackSequence> all(ds.train);
  SuperNet net(base, sc);
  std::ofstream log(out / "search.ndjson");
  const SearchResult res = run_search(net, all.first(half), all.subspan(half), sc, [&](const SearchEpoch& e) {
    nlohmann::json j{{"epoch", e.epoch}, {"warmup", e.warmup}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}};
    log << j.dump() << '\n';
    log.flush();
    fmt::print("epoch {} {} train {:.4f} val {:.4f}\n", e.epoch, e.warmup ? "warm-up" : "bilevel", e.train_loss,
               e.val_loss);
  });
  write_file_atomic(out / "genotype.txt", res.genotype.to_text());
  fmt::print("{}", res.genotype.to_text());
  return 0;
}

int cmd_train(const Common& c, const std::string& resume, bool init_only) {
  RunConfig rc = resolve(c);
  if (c.seed) {
    rc.set("train.seed", std::to_string(*c.seed));
    rc.set("model.seed", std::to_string(*c.seed));
  }
  const ModelConfig mc = model_config_from(rc, config_dir(c));
  const TrainConfig tc = train_config_from(rc);
  const ToyDatasetOptions o = dataset_options(c, rc);
  check_model_data(mc, o);
  std::optional<LoadedCheckpoint> loaded;
  SpikingEdn model(mc);
  TrainConfig run_cfg = tc;
  if (!resume.empty()) {
    loaded.emplace(load_checkpoint(resume));
    if (loaded->meta.folded) throw ConfigError("cannot resume training from a folded checkpoint");
    model = std::move(loaded->model);
    run_cfg.start_epoch = loaded->meta.epoch + 1;
  }
  const fs::path out = prepare_out(c);
  snapshot(out, rc);
  const ToyDataset ds = read_dataset(c.data, o);
  if (mc.aug == AugSource::image && !ds.train.empty() && ds.train[0].aug.empty()) {
    throw ConfigError("model.aug = image but the dataset has no intensity images");
  }

  Adam opt(model.parameters(), AdamOptions{tc.lr, tc.beta1, tc.beta2});
  if (loaded && loaded->meta.has_optimizer) restore_optimizer(*loaded, opt);

  std::ofstream metrics(out / "metrics.ndjson");
  TrainHooks hooks;
  hooks.metrics = &metrics;
  hooks.on_epoch = [](const EpochStats& e) {
    if (e.evaluated) {
      fmt::print("epoch {} loss {:.4f} lr {:.6f} val miou {:.4f} mean fr {:.4f} ({:.0f} s)\n", e.epoch, e.train_loss,
                 e.lr, e.val_miou, e.mean_fr, e.seconds);
    } else {
      fmt::print("epoch {} loss {:.4f} lr {:.6f} ({:.0f} s)\n", e.epoch, e.train_loss, e.lr, e.seconds);
    }
    std::fflush(stdout);
  };
  CheckpointMeta meta;
  meta.model = mc;
  meta.seed = tc.seed;
  meta.epoch = run_cfg.start_epoch - 1;
  if (!init_only) {
    const TrainHistory h = train(model, ds.train, ds.test, run_cfg, hooks, &opt);
    if (!h.epochs.empty()) {
      meta.epoch = h.epochs.back().epoch;
      meta.metrics["train_loss"] = h.epochs.back().train_loss;
      if (h.epochs.back().evaluated) meta.metrics["val_miou"] = h.epochs.back().val_miou;
    }
  }
  model.set_training(false);
  save_checkpoint(out / "final.sedn", model, meta, &opt);
  model.fold();
  meta.folded = true;
  save_checkpoint(out / "final_folded.sedn", model, meta);
  fmt::print("wrote {} and {}\n", (out / "final.sedn").string(), (out / "final_folded.sedn").string());
  return 0;
}

int cmd_eval(const Common& c) {
  RunConfig rc = resolve(c);
  LoadedCheckpoint ck = load_checkpoint(c.checkpoint);
  const ToyDatasetOptions o = dataset_options(c, rc);
  check_model_data(ck.meta.model, o);
  const fs::path out = prepare_out(c);
  snapshot(out, rc);
  const ToyDataset ds = read_dataset(c.data, o);
  Profiler prof;
  const EvalResult r = evaluate(ck.model, ds.test, 8, &prof);
  nlohmann::json j{{"miou", r.metrics.miou},
                   {"per_class_iou", r.metrics.per_class},
                   {"loss", r.loss},
                   {"mean_firing_rate", r.mean_firing_rate},
                   {"sequences", ds.test.size()},
                   {"checkpoint", c.checkpoint}};
  write_file_atomic(out / "report.json", j.dump(2) + "\n");
  std::ostringstream csv;
  write_histogram_csv(csv, firing_rate_report(prof));
  write_file_atomic(out / "firing_rates.csv", csv.str());
  fmt::print("miou {:.4f}", r.metrics.miou);
  for (std::size_t k = 0; k < r.metrics.per_class.size(); ++k) fmt::print(" class{} {:.4f}", k, r.metrics.per_class[k]);
  fmt::print(" mean_fr {:.4f}\n", r.mean_firing_rate);
  return 0;
}

int cmd_stream(const Common& c, std::optional<std::size_t> reset_cli, std::size_t report_every) {
  RunConfig rc = resolve(c);
  if (reset_cli) rc.set("stream.reset_every", std::to_string(*reset_cli));
  std::size_t reset_every = 0;
  try {
    reset_every = std::stoul(rc.get("stream.reset_every", "0"));
  } catch (const std::exception&) {
    throw ConfigError("stream.reset_every must be a non-negative integer");
  }
  LoadedCheckpoint ck = load_checkpoint(c.checkpoint);
  const ToyDatasetOptions o = dataset_options(c, rc);
  check_model_data(ck.meta.model, o);
  const fs::path out = prepare_out(c);
  snapshot(out, rc);
  const ToyDataset ds = read_dataset(c.data, o);
  const StreamData& sd = ds.test_stream;
  const bool images = ck.meta.model.aug == AugSource::image;
  if (images && sd.images.size() != sd.stacks.size()) throw ConfigError("model needs images the stream does not carry");
  StreamSession session(ck.model, reset_every);
  std::ofstream log(out / "stream.ndjson");
  std::vector<LabelGrid> preds;
  for (std::size_t i = 0; i < sd.stacks.size(); ++i) {
    const auto step = session.step(sd.stacks[i], images ? &sd.images[i] : nullptr, &sd.labels[i]);
    preds.push_back(LabelGrid{sd.stacks[i].width, sd.stacks[i].height, step.prediction});
    const bool last = i + 1 == sd.stacks.size();
    if (session.confusion().total() > 0 && ((i + 1) % report_every == 0 || last)) {
      const MiouResult m = miou(session.confusion());
      nlohmann::json j{{"step", i + 1}, {"miou", m.miou}, {"reset_every", reset_every}};
      log << j.dump() << '\n';
    }
  }
  write_file_atomic(out / "predictions.lbl", encode_label_grids(preds));
  const MiouResult m = miou(session.confusion());
  fmt::print("{} steps, reset every {}, miou {:.4f}\n", sd.stacks.size(), reset_every, m.miou);
  return 0;
}

int cmd_count_ops(const Common& c) {
  RunConfig rc = resolve(c);
  LoadedCheckpoint ck = load_checkpoint(c.checkpoint);
  if (!ck.meta.folded) {
    throw StateError("count-ops needs a folded checkpoint (batch norm would be counted as multiplications)");
  }
  const ToyDatasetOptions o = dataset_options(c, rc);
  check_model_data(ck.meta.model, o);
  const fs::path out = prepare_out(c);
  snapshot(out, rc);
  const ToyDataset ds = read_dataset(c.data, o);
  const OpLedger L = count_ops(ck.model, ds.test);
  std::ostringstream os;
  write_ledger(os, L);
  write_file_atomic(out / "ops.txt", os.str());
  nlohmann::json j{{"total_adds", L.total_adds},
                   {"total_mults", L.total_mults},
                   {"ann_macs", L.ann_macs},
                   {"mean_rate", L.mean_rate},
                   {"spiking_layer_mults", L.spiking_multiplications},
                   {"energy_pj", L.energy_pj()},
                   {"ann_energy_pj", L.ann_energy_pj()},
                   {"add_pj", L.energy.add_pj},
                   {"mult_pj", L.energy.mult_pj}};
  write_file_atomic(out / "energy.json", j.dump(2) + "\n");
  std::cout << os.str();
  return 0;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking encoder-decoder segmentation toolkit"};
  app.require_subcommand(1);
  Common c;
  std::string resume;
  bool init_only = false;
  std::optional<std::size_t> reset_every;
  std::size_t report_every = 10;

  auto* synth = app.add_subcommand("synth", "Synthesize a moving-shapes event dataset");
  add_common(synth, c, false, false);
  auto* search = app.add_subcommand("search", "Architecture search; writes genotype.txt");
  add_common(search, c, true, false);
  auto* trn = app.add_subcommand("train", "Train a model; writes checkpoints and metrics");
  add_common(trn, c, true, false);
  trn->add_option("--resume", resume, "Continue from an unfolded checkpoint");
  trn->add_flag("--init-only", init_only, "Write the initialized model without training");
  auto* ev = app.add_subcommand("eval", "MIoU and firing rates on the test split");
  add_common(ev, c, true, true);
  auto* st = app.add_subcommand("stream", "Continuous inference over the concatenated test stream");
  add_common(st, c, true, true);
  st->add_option("--reset-every", reset_every, "Reset period in steps (0 = never)");
  st->add_option("--report-every", report_every, "Steps between rolling metric records")->check(CLI::PositiveNumber);
  auto* ops = app.add_subcommand("count-ops", "Operation ledger and energy estimate of a folded model");
  add_common(ops, c, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (synth->parsed()) return cmd_synth(c);
    if (search->parsed()) return cmd_search(c);
    if (trn->parsed()) return cmd_train(c, resume, init_only);
    if (ev->parsed()) return cmd_eval(c);
    if (st->parsed()) return cmd_stream(c, reset_every, report_every);
    if (ops->parsed()) return cmd_count_ops(c);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << first_line(e.what()) << '\n';
    return 1;
  }
  return 1;
}
