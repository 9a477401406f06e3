#include "sedn/genotype.hpp"

#include <charconv>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sedn/common.hpp"

namespace sedn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::uint64_t parse_uint(std::string_view s, std::size_t line) {
  s = trim(s);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError("expected an unsigned integer, got '" + std::string(s) + "'", line);
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

std::string_view edge_op_name(EdgeOp op) {
  switch (op) {
    case EdgeOp::skip: return "skip";
    case EdgeOp::conv3x3: return "conv3x3";
    case EdgeOp::conv5x5: return "conv5x5";
  }
  return "?";
}

EdgeOp parse_edge_op(std::string_view name) {
  for (EdgeOp op : kAllEdgeOps) {
    if (edge_op_name(op) == name) return op;
  }
  throw std::invalid_argument("unknown edge operation '" + std::string(name) + "'");
}

std::string tap_name(std::size_t tap) {
  if (tap < kCellInputs) return "s" + std::to_string(tap);
  return "n" + std::to_string(tap - kCellInputs);
}

std::size_t parse_tap(std::string_view name) {
  if (name.size() >= 2 && (name[0] == 's' || name[0] == 'n')) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), v);
    if (ec == std::errc() && ptr == name.data() + name.size()) {
      if (name[0] == 's' && v < kCellInputs) return v;
      if (name[0] == 'n' && v < kNodesPerCell) return kCellInputs + v;
    }
  }
  throw std::invalid_argument("unknown cell tap '" + std::string(name) + "'");
}

std::size_t level_of_factor(std::size_t factor) {
  for (std::size_t i = 0; i < kLevelFactors.size(); ++i) {
    if (kLevelFactors[i] == factor) return i;
  }
  throw std::invalid_argument("downsampling factor " + std::to_string(factor) + " is not one of 4, 8, 16, 32");
}

void Genotype::validate() const {
  if (path.empty()) throw std::invalid_argument("genotype has no layers");
  if (cells.size() != path.size()) {
    throw std::invalid_argument("genotype lists " + std::to_string(cells.size()) + " cells but a path of " +
                                std::to_string(path.size()) + " layers");
  }
  std::size_t prev = 0;  // the stem output sits at level 0
  for (std::size_t l = 0; l < path.size(); ++l) {
    const std::size_t level = level_of_factor(path[l]);
    const std::size_t step = level > prev ? level - prev : prev - level;
    if (step > 1) {
      throw std::invalid_argument("layer " + std::to_string(l) + " jumps from factor " +
                                  std::to_string(kLevelFactors[prev]) + " to " + std::to_string(path[l]));
    }
    prev = level;
  }
  for (std::size_t l = 0; l < cells.size(); ++l) {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::array<std::size_t, kNodesPerCell> inputs{};
    for (const CellEdge& e : cells[l]) {
      const std::string where = "cell " + std::to_string(l) + " node " + std::to_string(e.node);
      if (e.node >= kNodesPerCell) throw std::invalid_argument(where + ": node index out of range");
      if (e.tap >= taps_for_node(e.node)) throw std::invalid_argument(where + ": cannot read tap " + tap_name(e.tap));
      if (!seen.emplace(e.node, e.tap).second) throw std::invalid_argument(where + ": duplicate edge");
      ++inputs[e.node];
    }
    for (std::size_t n = 0; n < kNodesPerCell; ++n) {
      if (inputs[n] == 0) {
        throw std::invalid_argument("cell " + std::to_string(l) + " node " + std::to_string(n) + " has no inputs");
      }
    }
  }
}

std::string Genotype::to_text() const {
  std::ostringstream os;
  for (std::size_t l = 0; l < cells.size(); ++l) {
    for (const CellEdge& e : cells[l]) {
      os << "cell/" << l << '/' << e.node << '/' << tap_name(e.tap) << ": " << edge_op_name(e.op) << '\n';
    }
  }
  os << "path: ";
  for (std::size_t i = 0; i < path.size(); ++i) os << (i ? "," : "") << path[i];
  os << "\nseed=" << seed << "\nepoch=" << epoch << '\n';
  return os.str();
}

Genotype Genotype::parse(std::string_view text) {
  Genotype g;
  bool have_path = false;
  std::size_t line_no = 0;
  for (std::string_view raw : split(text, '\n')) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    try {
      if (line.starts_with("cell/")) {
        const std::size_t colon = line.find(':');
        if (colon == std::string_view::npos) throw ParseError("missing ':' in edge line", line_no);
        const auto parts = split(line.substr(5, colon - 5), '/');
        if (parts.size() != 3) throw ParseError("edge key must be cell/<layer>/<node>/<tap>", line_no);
        const std::size_t layer = parse_uint(parts[0], line_no);
        CellEdge e;
        e.node = parse_uint(parts[1], line_no);
        e.tap = parse_tap(trim(parts[2]));
        e.op = parse_edge_op(trim(line.substr(colon + 1)));
        if (layer > 64) throw ParseError("layer index too large", line_no);
        if (g.cells.size() <= layer) g.cells.resize(layer + 1);
        g.cells[layer].push_back(e);
      } else if (line.starts_with("path:")) {
        g.path.clear();
        for (std::string_view f : split(line.substr(5), ',')) g.path.push_back(parse_uint(f, line_no));
        have_path = true;
      } else if (line.starts_with("seed=")) {
        g.seed = parse_uint(line.substr(5), line_no);
      } else if (line.starts_with("epoch=")) {
        g.epoch = parse_uint(line.substr(6), line_no);
      } else {
        throw ParseError("unrecognized genotype line '" + std::string(line) + "'", line_no);
      }
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (!have_path) throw ParseError("genotype has no path line", line_no);
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), line_no);
  }
  return g;
}

std::uint64_t Genotype::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<CellEdge> default_cell() {
  return {{0, 1, EdgeOp::conv3x3}, {0, 0, EdgeOp::skip},    {1, 2, EdgeOp::conv3x3},
          {1, 1, EdgeOp::skip},    {2, 3, EdgeOp::conv3x3}, {2, 2, EdgeOp::skip}};
}

Genotype default_genotype(const std::vector<std::size_t>& path) {
  Genotype g;
  g.path = path;
  g.cells.assign(path.size(), default_cell());
  g.validate();
  return g;
}

}  // namespace sedn
