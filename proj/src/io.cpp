#include "sedn/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include <fmt/format.h>
#include <zlib.h>

#include "json.hpp"

SEDN_BEGIN_NAMESPACE

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
 public:
  Bytes out;

  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  void magic(const char* m) { raw(m, 4); }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : b_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw ParseError(fmt::format("truncated input while reading {}", what), pos_);
  }
  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_magic(const char* m) {
    const std::size_t at = pos_;
    auto s = take(4, "magic");
    if (std::memcmp(s.data(), m, 4) != 0) throw ParseError(fmt::format("bad magic, expected \"{}\"", m), at);
  }
  void expect_end() const {
    if (!done()) throw ParseError(fmt::format("{} trailing bytes", remaining()), pos_);
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::string to_text(double v) { return fmt::format("{}", v); }

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::random_device rd;
  std::filesystem::path tmp = path;
  tmp += fmt::format(".tmp{:08x}", rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Bytes encode_events(const EventStream& s) {
  Writer w;
  w.magic("EVS1");
  w.put<std::uint16_t>(s.width);
  w.put<std::uint16_t>(s.height);
  w.put<std::uint64_t>(s.events.size());
  w.out.reserve(16 + 9 * s.events.size());
  for (const EventRecord& e : s.events) {
    w.put(e.x);
    w.put(e.y);
    w.put(e.t);
    w.put(e.p);
  }
  return std::move(w.out);
}

EventStream decode_events(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("EVS1");
  EventStream s;
  s.width = r.get<std::uint16_t>("width");
  s.height = r.get<std::uint16_t>("height");
  const std::size_t count_at = r.offset();
  const auto count = r.get<std::uint64_t>("event count");
  if (count > r.remaining() / 9) {
    throw ParseError(fmt::format("header announces {} events but only {} bytes follow", count, r.remaining()), count_at);
  }
  s.events.resize(count);
  for (EventRecord& e : s.events) {
    const std::size_t at = r.offset();
    e.x = r.get<std::uint16_t>("x");
    e.y = r.get<std::uint16_t>("y");
    e.t = r.get<std::uint32_t>("t");
    e.p = r.get<std::int8_t>("p");
    if (e.x >= s.width || e.y >= s.height || (e.p != 1 && e.p != -1)) {
      throw ParseError(fmt::format("invalid event ({}, {}, {}, {})", e.x, e.y, e.t, e.p), at);
    }
    if (&e != s.events.data() && e.t < (&e - 1)->t) throw ParseError("event timestamps go backwards", at);
  }
  r.expect_end();
  return s;
}

Bytes encode_label_grids(std::span<const LabelGrid> grids) {
  Writer w;
  for (const LabelGrid& g : grids) {
    if (g.labels.size() != static_cast<std::size_t>(g.width) * g.height) throw ShapeError("label grid size mismatch");
    w.magic("LBL1");
    w.put<std::uint16_t>(g.width);
    w.put<std::uint16_t>(g.height);
    w.raw(g.labels.data(), g.labels.size());
  }
  return std::move(w.out);
}

std::vector<LabelGrid> decode_label_grids(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  std::vector<LabelGrid> out;
  if (bytes.empty()) throw ParseError("empty label file", 0);
  while (!r.done()) {
    r.expect_magic("LBL1");
    LabelGrid g;
    g.width = r.get<std::uint16_t>("width");
    g.height = r.get<std::uint16_t>("height");
    const auto s = r.take(static_cast<std::size_t>(g.width) * g.height, "labels");
    g.labels.assign(s.begin(), s.end());
    out.push_back(std::move(g));
  }
  return out;
}

Bytes encode_images(std::span<const Image> images) {
  Writer w;
  for (const Image& im : images) {
    if (im.values.size() != static_cast<std::size_t>(im.width) * im.height) throw ShapeError("image size mismatch");
    w.magic("IMG1");
    w.put<std::uint16_t>(im.width);
    w.put<std::uint16_t>(im.height);
    w.raw(im.values.data(), im.values.size() * sizeof(float));
  }
  return std::move(w.out);
}

std::vector<Image> decode_images(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  std::vector<Image> out;
  if (bytes.empty()) throw ParseError("empty image file", 0);
  while (!r.done()) {
    r.expect_magic("IMG1");
    Image im;
    im.width = r.get<std::uint16_t>("width");
    im.height = r.get<std::uint16_t>("height");
    const std::size_t n = static_cast<std::size_t>(im.width) * im.height;
    const auto s = r.take(n * sizeof(float), "image values");
    im.values.resize(n);
    std::memcpy(im.values.data(), s.data(), s.size());
    out.push_back(std::move(im));
  }
  return out;
}

void save_scene(const std::filesystem::path& dir, const std::string& stem, const Scene& scene) {
  write_file_atomic(dir / (stem + ".evs"), encode_events(scene.stream));
  write_file_atomic(dir / (stem + ".lbl"), encode_label_grids(scene.labels));
  if (!scene.images.empty()) write_file_atomic(dir / (stem + ".img"), encode_images(scene.images));
}

Scene load_scene(const std::filesystem::path& dir, const std::string& stem) {
  auto load = [&](const std::string& ext, auto&& decode) {
    const auto path = dir / (stem + ext);
    try {
      return decode(read_file(path));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.detail(), e.offset());
    }
  };
  Scene s;
  s.stream = load(".evs", [](const Bytes& b) { return decode_events(b); });
  s.labels = load(".lbl", [](const Bytes& b) { return decode_label_grids(b); });
  if (std::filesystem::exists(dir / (stem + ".img"))) {
    s.images = load(".img", [](const Bytes& b) { return decode_images(b); });
  }
  for (const LabelGrid& g : s.labels) {
    if (g.width != s.stream.width || g.height != s.stream.height) throw ShapeError(stem + ": label and event sizes differ");
  }
  return s;
}

std::string scene_stem(bool test, std::size_t index) {
  return fmt::format("{}_{:03}", test ? "test" : "train", index);
}

std::vector<std::uint64_t> event_density(const EventStream& stream, std::uint64_t bin_us, std::uint64_t duration_us) {
  if (bin_us == 0) throw DomainError("density bin must be positive");
  std::vector<std::uint64_t> bins((duration_us + bin_us - 1) / bin_us, 0);
  for (const EventRecord& e : stream.events) {
    const std::size_t b = e.t / bin_us;
    if (b >= bins.size()) bins.resize(b + 1, 0);
    ++bins[b];
  }
  return bins;
}

std::vector<SceneStats> write_dataset(const std::filesystem::path& dir, const ToyDatasetOptions& o) {
  std::vector<SceneStats> stats;
  const std::size_t total = o.train_scenes + o.test_scenes;
  for (std::size_t i = 0; i < total; ++i) {
    const bool test = i >= o.train_scenes;
    const std::string stem = scene_stem(test, test ? i - o.train_scenes : i);
    const Scene scene = toy_scene(o, i);
    save_scene(dir, stem, scene);
    stats.push_back({stem, scene.stream.events.size(),
                     event_density(scene.stream, o.stacking.delta_t_us, o.scene.duration_us)});
  }
  return stats;
}

ToyDataset read_dataset(const std::filesystem::path& dir, const ToyDatasetOptions& o) {
  ToyDataset ds;
  for (std::size_t i = 0; i < o.train_scenes; ++i) add_scene(ds, load_scene(dir, scene_stem(false, i)), false, o);
  for (std::size_t i = 0; i < o.test_scenes; ++i) add_scene(ds, load_scene(dir, scene_stem(true, i)), true, o);
  return ds;
}

std::map<std::string, std::string> model_config_entries(const ModelConfig& c) {
  std::map<std::string, std::string> m;
  m["event_channels"] = std::to_string(c.event_channels);
  m["num_classes"] = std::to_string(c.num_classes);
  m["stem_channels"] = std::to_string(c.stem_channels);
  m["node_channels"] = std::to_string(c.node_channels);
  m["aspp_channels"] = std::to_string(c.aspp_channels);
  m["decoder_channels"] = std::to_string(c.decoder_channels);
  m["aspp_dilations"] = join(c.aspp_dilations);
  m["ssam"] = c.ssam ? "true" : "false";
  m["ssam_variant"] = std::string(ssam_variant_name(c.ssam_variant));
  m["ssam_fusion"] = c.ssam_fusion == SsamFusion::additive ? "additive" : "multiplicative";
  m["aug"] = std::string(aug_source_name(c.aug));
  m["placement"] = std::string(placement_name(c.placement));
  m["u_th"] = to_text(c.neuron.u_th);
  m["tau"] = to_text(c.neuron.tau);
  m["beta"] = to_text(c.ailif_beta);
  m["tau_a"] = to_text(c.ailif_tau_a);
  m["tau_a_min"] = to_text(c.neuron.tau_a_min);
  m["tau_a_max"] = to_text(c.neuron.tau_a_max);
  m["train_tau_a"] = c.neuron.train_tau_a ? "true" : "false";
  m["surrogate"] = c.neuron.surrogate.family;
  m["surrogate_width"] = to_text(c.neuron.surrogate.temperature);
  m["first_layer_threshold"] = to_text(c.first_layer_threshold);
  m["seed"] = std::to_string(c.seed);
  return m;
}

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(fmt::format("{}: expected a boolean, got '{}'", key, v));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, v));
  return out;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const std::size_t comma = std::min(v.find(',', start), v.size());
    std::string part = v.substr(start, comma - start);
    while (!part.empty() && part.front() == ' ') part.erase(part.begin());
    while (!part.empty() && part.back() == ' ') part.pop_back();
    out.push_back(parse_number<std::size_t>(key, part));
    start = comma + 1;
  }
  return out;
}

}  // namespace

ModelConfig model_config_from_entries(const std::map<std::string, std::string>& entries, ModelConfig c) {
  for (const auto& [k, v] : entries) {
    try {
      if (k == "event_channels") c.event_channels = parse_number<std::size_t>(k, v);
      else if (k == "num_classes") c.num_classes = parse_number<std::size_t>(k, v);
      else if (k == "stem_channels") c.stem_channels = parse_number<std::size_t>(k, v);
      else if (k == "node_channels") c.node_channels = parse_number<std::size_t>(k, v);
      else if (k == "aspp_channels") c.aspp_channels = parse_number<std::size_t>(k, v);
      else if (k == "decoder_channels") c.decoder_channels = parse_number<std::size_t>(k, v);
      else if (k == "aspp_dilations") c.aspp_dilations = parse_list(k, v);
      else if (k == "ssam") c.ssam = parse_bool(k, v);
      else if (k == "ssam_variant") c.ssam_variant = parse_ssam_variant(v);
      else if (k == "ssam_fusion") {
        if (v == "additive") c.ssam_fusion = SsamFusion::additive;
        else if (v == "multiplicative") c.ssam_fusion = SsamFusion::multiplicative;
        else throw ConfigError(k + ": expected additive or multiplicative, got '" + v + "'");
      } else if (k == "aug") c.aug = parse_aug_source(v);
      else if (k == "placement") c.placement = parse_placement(v);
      else if (k == "u_th") c.neuron.u_th = parse_number<Real>(k, v);
      else if (k == "tau") c.neuron.tau = parse_number<Real>(k, v);
      else if (k == "beta") c.ailif_beta = parse_number<Real>(k, v);
      else if (k == "tau_a") c.ailif_tau_a = parse_number<Real>(k, v);
      else if (k == "tau_a_min") c.neuron.tau_a_min = parse_number<Real>(k, v);
      else if (k == "tau_a_max") c.neuron.tau_a_max = parse_number<Real>(k, v);
      else if (k == "train_tau_a") c.neuron.train_tau_a = parse_bool(k, v);
      else if (k == "surrogate") c.neuron.surrogate.family = v;
      else if (k == "surrogate_width") c.neuron.surrogate.temperature = parse_number<Real>(k, v);
      else if (k == "first_layer_threshold") c.first_layer_threshold = parse_number<Real>(k, v);
      else if (k == "seed") c.seed = parse_number<std::uint64_t>(k, v);
      else if (k == "path") c.genotype.path = parse_list(k, v);
      else throw ConfigError("unknown model setting '" + k + "'");
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("model.{}: {}", k, e.what()));
    } catch (const std::domain_error& e) {
      throw ConfigError(fmt::format("model.{}: {}", k, e.what()));
    }
  }
  if (entries.count("path") && c.genotype.cells.size() != c.genotype.path.size()) {
    c.genotype = default_genotype(c.genotype.path);
  }
  return c;
}

Bytes encode_checkpoint(SpikingEdn& model, const CheckpointMeta& meta, Adam* optimizer) {
  nlohmann::json j;
  j["model"] = model_config_entries(meta.model);
  j["genotype"] = meta.model.genotype.to_text();
  j["folded"] = meta.folded;
  j["epoch"] = meta.epoch;
  j["seed"] = meta.seed;
  j["metrics"] = meta.metrics;
  j["optimizer_steps"] = optimizer ? optimizer->steps() : 0;
  j["has_optimizer"] = optimizer != nullptr;
  const std::string text = j.dump();

  Writer w;
  w.magic("SEDN");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(kRealDType));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.raw(text.data(), text.size());

  struct Entry {
    std::string name;
    DType dtype;
    Shape shape;
    const void* data;
    std::size_t bytes;
  };
  std::vector<Entry> entries;
  for (const NamedTensor& t : model.tensors()) {
    entries.push_back({t.name, kRealDType, t.tensor->shape(), t.tensor->ptr(), t.tensor->numel() * sizeof(Real)});
  }
  if (optimizer) {
    auto& m = optimizer->first_moments();
    auto& v = optimizer->second_moments();
    for (std::size_t i = 0; i < optimizer->params().size(); ++i) {
      const std::string& name = optimizer->params()[i].name;
      entries.push_back({"adam.m." + name, DType::f64, {m[i].size()}, m[i].data(), m[i].size() * sizeof(double)});
      entries.push_back({"adam.v." + name, DType::f64, {v[i].size()}, v[i].data(), v[i].size() * sizeof(double)});
    }
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const Entry& e : entries) {
    const std::size_t start = w.out.size();
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.raw(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (std::size_t d : e.shape) w.put<std::uint64_t>(d);
    w.raw(e.data, e.bytes);
    const uLong crc = crc32(0L, w.out.data() + start, static_cast<uInt>(w.out.size() - start));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(crc));
  }
  return std::move(w.out);
}

LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("SEDN");
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError(fmt::format("unsupported checkpoint version {} (expected {})", version, kCheckpointVersion),
                     version_at);
  }
  const std::size_t dtype_at = r.offset();
  const auto dtype = r.get<std::uint8_t>("dtype");
  if (dtype > 1) throw ParseError("unknown precision tag", dtype_at);
  if (static_cast<DType>(dtype) != kRealDType) {
    throw ParseError(fmt::format("checkpoint stores {} parameters but this build uses {}",
                                 dtype_name(static_cast<DType>(dtype)), dtype_name(kRealDType)),
                     dtype_at);
  }
  const auto meta_len = r.get<std::uint32_t>("metadata length");
  const std::size_t meta_at = r.offset();
  const auto meta_bytes = r.take(meta_len, "metadata");
  CheckpointMeta meta;
  try {
    const auto j = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
    meta.model = model_config_from_entries(j.at("model").get<std::map<std::string, std::string>>());
    meta.model.genotype = Genotype::parse(j.at("genotype").get<std::string>());
    meta.folded = j.at("folded").get<bool>();
    meta.epoch = j.at("epoch").get<std::uint64_t>();
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.metrics = j.at("metrics").get<std::map<std::string, double>>();
    meta.has_optimizer = j.at("has_optimizer").get<bool>();
    meta.optimizer_steps = j.at("optimizer_steps").get<std::uint64_t>();
  } catch (const ParseError& e) {
    throw ParseError("checkpoint genotype line " + std::to_string(e.offset()) + ": " + e.detail(), meta_at);
  } catch (const std::exception& e) {
    throw ParseError(std::string("bad checkpoint metadata: ") + e.what(), meta_at);
  }

  LoadedCheckpoint ck{meta, SpikingEdn(meta.model), {}};
  ck.model.set_training(false);
  if (meta.folded) ck.model.fold();
  TensorList list = ck.model.tensors();
  std::map<std::string, Tensor*> by_name;
  for (const NamedTensor& t : list) by_name[t.name] = t.tensor;
  std::set<std::string> seen;

  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t start = r.offset();
    const auto name_len = r.get<std::uint16_t>("name length");
    const auto name_bytes = r.take(name_len, "tensor name");
    const std::string name(name_bytes.begin(), name_bytes.end());
    const std::size_t tdtype_at = r.offset();
    const auto tdtype = r.get<std::uint8_t>("tensor dtype");
    if (tdtype > 1) throw ParseError("unknown tensor precision for " + name, tdtype_at);
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      shape.push_back(r.get<std::uint64_t>("dimension"));
      if (shape.back() > (std::size_t{1} << 40) || numel > (std::size_t{1} << 40) / std::max<std::size_t>(1, shape.back())) {
        throw ParseError("implausible dimension for " + name, r.offset() - 8);
      }
      numel *= shape.back();
    }
    const std::size_t elem = tdtype == 0 ? 4 : 8;
    const std::size_t data_at = r.offset();
    const auto data = r.take(numel * elem, "tensor data");
    const std::size_t crc_at = r.offset();
    const auto stored = r.get<std::uint32_t>("checksum");
    const uLong crc = crc32(0L, bytes.data() + start, static_cast<uInt>(crc_at - start));
    if (stored != static_cast<std::uint32_t>(crc)) throw ParseError("checksum mismatch in tensor " + name, start);

    if (name.starts_with("adam.")) {
      if (tdtype != 1 || rank != 1) throw ParseError("optimizer moments must be 1-D f64: " + name, tdtype_at);
      std::vector<double> v(numel);
      std::memcpy(v.data(), data.data(), data.size());
      const bool first = name.starts_with("adam.m.");
      auto& slot = ck.moments[name.substr(7)];
      (first ? slot.first : slot.second) = std::move(v);
      continue;
    }
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ParseError("checkpoint tensor '" + name + "' does not belong to the model", start);
    if (static_cast<DType>(tdtype) != kRealDType) throw ParseError("precision mismatch for " + name, tdtype_at);
    if (it->second->shape() != shape) {
      throw ParseError(fmt::format("{} has shape {}, model expects {}", name, shape_string(shape),
                                   shape_string(it->second->shape())),
                       data_at);
    }
    std::memcpy(it->second->mutable_data().data(), data.data(), data.size());
    seen.insert(name);
  }
  r.expect_end();
  for (const auto& [name, t] : by_name) {
    if (!seen.count(name)) throw ParseError("checkpoint lacks tensor '" + name + "'", r.offset());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, SpikingEdn& model, const CheckpointMeta& meta, Adam* optimizer) {
  write_file_atomic(path, encode_checkpoint(model, meta, optimizer));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  try {
    return decode_checkpoint(b);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

void restore_optimizer(const LoadedCheckpoint& ck, Adam& opt) {
  if (!ck.meta.has_optimizer) throw StateError("checkpoint carries no optimizer state");
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    const auto it = ck.moments.find(opt.params()[i].name);
    if (it == ck.moments.end()) throw StateError("no optimizer moments for " + opt.params()[i].name);
    if (it->second.first.size() != opt.first_moments()[i].size() ||
        it->second.second.size() != opt.second_moments()[i].size()) {
      throw StateError("optimizer moments for " + opt.params()[i].name + " have the wrong size");
    }
    opt.first_moments()[i] = it->second.first;
    opt.second_moments()[i] = it->second.second;
  }
  opt.set_steps(ck.meta.optimizer_steps);
}

SEDN_END_NAMESPACE
