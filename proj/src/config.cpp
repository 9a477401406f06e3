#include "sedn/config.hpp"

#include <charconv>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "sedn/io.hpp"

SEDN_BEGIN_NAMESPACE

namespace pt = boost::property_tree;

RunConfig RunConfig::parse(std::string_view text) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError("configuration: " + e.message(), e.line());
  }
  RunConfig rc;
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      rc.values_[key] = node.data();
      continue;
    }
    for (const auto& [sub, leaf] : node) rc.values_[key + "." + sub] = leaf.data();
  }
  return rc;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  try {
    return parse(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

void RunConfig::apply_override(std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form section.key=value");
  }
  set(std::string(assignment.substr(0, eq)), std::string(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (std::count(key.begin(), key.end(), '.') != 1) throw ConfigError("setting '" + key + "' must be section.key");
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::map<std::string, std::string> RunConfig::section(const std::string& name) const {
  std::map<std::string, std::string> out;
  const std::string prefix = name + ".";
  for (const auto& [k, v] : values_) {
    if (k.starts_with(prefix)) out[k.substr(prefix.size())] = v;
  }
  return out;
}

std::string RunConfig::to_text() const {
  pt::ptree tree;
  for (const auto& [k, v] : values_) tree.put(pt::ptree::path_type(k, '.'), v);
  std::ostringstream os;
  pt::write_ini(os, tree);
  return os.str();
}

namespace {

template <class T>
T number(const std::string& section, const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}.{}: expected a number, got '{}'", section, key, v));
  return out;
}

[[noreturn]] void unknown(const std::string& section, const std::string& key) {
  throw ConfigError(fmt::format("unknown setting {}.{}", section, key));
}

}  // namespace

ModelConfig model_config_from(const RunConfig& run, const std::filesystem::path& base_dir) {
  auto entries = run.section("model");
  std::string genotype_file;
  if (auto it = entries.find("genotype_file"); it != entries.end()) {
    genotype_file = it->second;
    entries.erase(it);
  }
  ModelConfig c = model_config_from_entries(entries);
  if (!genotype_file.empty()) {
    std::filesystem::path p(genotype_file);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    const Bytes b = read_file(p);
    try {
      c.genotype = Genotype::parse(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
    } catch (const ParseError& e) {
      throw ParseError(p.string() + " line " + std::to_string(e.offset()) + ": " + e.detail(), e.offset());
    }
  }
  c.validate();
  return c;
}

ToyDatasetOptions dataset_options_from(const RunConfig& run) {
  ToyDatasetOptions o;
  const std::string s = "data";
  for (const auto& [k, v] : run.section(s)) {
    if (k == "train_scenes") o.train_scenes = number<std::size_t>(s, k, v);
    else if (k == "test_scenes") o.test_scenes = number<std::size_t>(s, k, v);
    else if (k == "seq_len") o.seq_len = number<std::size_t>(s, k, v);
    else if (k == "warmup") o.warmup = number<std::size_t>(s, k, v);
    else if (k == "seed") o.seed = number<std::uint64_t>(s, k, v);
    else if (k == "width") o.scene.width = number<std::uint16_t>(s, k, v);
    else if (k == "height") o.scene.height = number<std::uint16_t>(s, k, v);
    else if (k == "duration_us") o.scene.duration_us = number<std::uint64_t>(s, k, v);
    else if (k == "num_classes") o.scene.num_classes = number<std::uint8_t>(s, k, v);
    else if (k == "min_shapes") o.scene.min_shapes = number<std::size_t>(s, k, v);
    else if (k == "max_shapes") o.scene.max_shapes = number<std::size_t>(s, k, v);
    else if (k == "min_size") o.scene.min_size = number<double>(s, k, v);
    else if (k == "max_size") o.scene.max_size = number<double>(s, k, v);
    else if (k == "min_speed") o.scene.min_speed = number<double>(s, k, v);
    else if (k == "max_speed") o.scene.max_speed = number<double>(s, k, v);
    else if (k == "contrast") o.scene.contrast = number<double>(s, k, v);
    else if (k == "delta_t_us") o.stacking.delta_t_us = number<std::uint32_t>(s, k, v);
    else if (k == "frames") o.stacking.frames = number<std::uint32_t>(s, k, v);
    else if (k == "dir") continue;
    else unknown(s, k);
  }
  if (o.seq_len <= o.warmup) throw ConfigError("data.seq_len must exceed data.warmup");
  return o;
}

TrainConfig train_config_from(const RunConfig& run) {
  TrainConfig c;
  const std::string s = "train";
  for (const auto& [k, v] : run.section(s)) {
    if (k == "epochs") c.epochs = number<std::size_t>(s, k, v);
    else if (k == "batch_size") c.batch_size = number<std::size_t>(s, k, v);
    else if (k == "lr") c.lr = number<double>(s, k, v);
    else if (k == "beta1") c.beta1 = number<double>(s, k, v);
    else if (k == "beta2") c.beta2 = number<double>(s, k, v);
    else if (k == "poly_power") c.poly_power = number<double>(s, k, v);
    else if (k == "seed") c.seed = number<std::uint64_t>(s, k, v);
    else if (k == "grad_clip") c.grad_clip = number<double>(s, k, v);
    else if (k == "eval_batch") c.eval_batch = number<std::size_t>(s, k, v);
    else if (k == "eval_every") c.eval_every = number<std::size_t>(s, k, v);
    else if (k == "time_budget_s") c.time_budget_s = number<double>(s, k, v);
    else if (k == "resume") continue;
    else unknown(s, k);
  }
  c.validate();
  return c;
}

SearchConfig search_config_from(const RunConfig& run) {
  SearchConfig c;
  const std::string s = "search";
  for (const auto& [k, v] : run.section(s)) {
    if (k == "layers") c.layers = number<std::size_t>(s, k, v);
    else if (k == "epochs") c.epochs = number<std::size_t>(s, k, v);
    else if (k == "warmup_epochs") c.warmup_epochs = number<std::size_t>(s, k, v);
    else if (k == "batch_size") c.batch_size = number<std::size_t>(s, k, v);
    else if (k == "weight_lr") c.weight_lr = number<double>(s, k, v);
    else if (k == "arch_lr") c.arch_lr = number<double>(s, k, v);
    else if (k == "seed") c.seed = number<std::uint64_t>(s, k, v);
    else if (k == "candidates") {
      c.candidates.clear();
      std::size_t start = 0;
      while (start <= v.size()) {
        const std::size_t comma = std::min(v.find(',', start), v.size());
        std::string name = v.substr(start, comma - start);
        std::erase(name, ' ');
        try {
          c.candidates.push_back(parse_edge_op(name));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(fmt::format("search.candidates: {}", e.what()));
        }
        start = comma + 1;
      }
    } else {
      unknown(s, k);
    }
  }
  c.validate();
  return c;
}

SEDN_END_NAMESPACE
