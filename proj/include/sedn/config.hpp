#pragma once

// Sectioned key=value run configuration with command-line overrides, and its
// mapping onto the model, dataset, training, search and streaming settings.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "sedn/search.hpp"
#include "sedn/synth.hpp"
#include "sedn/train.hpp"

SEDN_BEGIN_NAMESPACE

class RunConfig {
 public:
  RunConfig() = default;
  /// INI text: "[section]" headers, "key = value" lines, ';' or '#' comments.
  /// ParseError carries the line number.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  /// `section.key=value`; a later override wins over file values.
  void apply_override(std::string_view assignment);
  void set(const std::string& dotted_key, const std::string& value);
  bool has(const std::string& dotted_key) const;
  std::string get(const std::string& dotted_key, const std::string& fallback) const;
  /// Keys of one section without the prefix.
  std::map<std::string, std::string> section(const std::string& name) const;
  /// Every key, dotted.
  std::map<std::string, std::string> entries() const { return values_; }

  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

/// [model]; `genotype_file` (resolved against `base_dir`) replaces the default genotype.
ModelConfig model_config_from(const RunConfig& run, const std::filesystem::path& base_dir = {});
/// [data]: scene counts, shapes, stacking and sequence settings.
ToyDatasetOptions dataset_options_from(const RunConfig& run);
/// [train]
TrainConfig train_config_from(const RunConfig& run);
/// [search]
SearchConfig search_config_from(const RunConfig& run);

SEDN_END_NAMESPACE
