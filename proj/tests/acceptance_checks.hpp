#pragma once

// Criteria evaluated in the 64-bit build, callable from the acceptance runner.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// Finite differences against backpropagation through time on a toy network.
Outcome gradient_suite();
/// Adaptive threshold stays inside its closed-form range.
Outcome threshold_bound_suite();

/// A trained model in precision-neutral form: configuration entries and
/// every named tensor (parameters and normalization statistics).
struct ModelDump {
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, std::vector<double>>> tensors;
};

struct FoldReport {
  double max_diff = 0;
  std::size_t steps = 0;
};

/// Loads `model` into the 64-bit build and compares folded and unfolded
/// inference over the held-out sequences of the toy dataset with `seed`.
FoldReport fold_difference(const ModelDump& model, std::size_t train_scenes, std::size_t test_scenes,
                           std::uint64_t seed);

}  // namespace acceptance
