#pragma once

// Discrete encoder description: per-cell edge operations plus the resolution
// of every encoder layer.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sedn {

enum class EdgeOp : std::uint8_t { skip = 0, conv3x3 = 1, conv5x5 = 2 };
inline constexpr std::size_t kNumEdgeOps = 3;
inline constexpr std::array<EdgeOp, kNumEdgeOps> kAllEdgeOps = {EdgeOp::skip, EdgeOp::conv3x3, EdgeOp::conv5x5};

std::string_view edge_op_name(EdgeOp op);
EdgeOp parse_edge_op(std::string_view name);

inline constexpr std::size_t kNodesPerCell = 3;
/// Cell inputs are the previous two layers (s0 = two back, s1 = one back)
/// followed by the cell's own earlier nodes n0, n1.
inline constexpr std::size_t kCellInputs = 2;

/// Tap index: 0 = s0, 1 = s1, 2 + j = node j.
std::string tap_name(std::size_t tap);
std::size_t parse_tap(std::string_view name);
/// Number of taps node `node` may read: 2 + node.
inline constexpr std::size_t taps_for_node(std::size_t node) { return kCellInputs + node; }

struct CellEdge {
  std::size_t node = 0;
  std::size_t tap = 0;
  EdgeOp op = EdgeOp::skip;

  friend bool operator==(const CellEdge&, const CellEdge&) = default;
};

/// Downsampling factors available to encoder layers (trellis levels).
inline constexpr std::array<std::size_t, 4> kLevelFactors = {4, 8, 16, 32};
std::size_t level_of_factor(std::size_t factor);

struct Genotype {
  /// cells[l] lists the edges of layer l.
  std::vector<std::vector<CellEdge>> cells;
  /// Cumulative downsampling factor of every layer's output (4, 8, 16 or 32).
  std::vector<std::size_t> path;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;

  std::size_t layers() const { return path.size(); }
  /// Throws std::invalid_argument describing the first violation: layer count
  /// mismatch, a node without inputs, an illegal tap or duplicate edge, a path
  /// step other than halve/keep/double, or a level outside the trellis.
  void validate() const;
  std::string to_text() const;
  /// Parses `to_text()` output; errors are ParseError with the line number.
  static Genotype parse(std::string_view text);
  /// FNV-1a of the canonical text.
  std::uint64_t hash() const;

  friend bool operator==(const Genotype&, const Genotype&) = default;
};

/// Every cell: node0 <- s1 conv3x3 + s0 skip, node1 <- n0 conv3x3 + s1 skip,
/// node2 <- n1 conv3x3 + n0 skip.
std::vector<CellEdge> default_cell();
Genotype default_genotype(const std::vector<std::size_t>& path);

}  // namespace sedn
