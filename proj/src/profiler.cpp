#include "sedn/profiler.hpp"

#include <algorithm>

SEDN_BEGIN_NAMESPACE

namespace {

template <class Map>
std::vector<std::string> ordered_keys(const Map& m) {
  std::vector<std::pair<std::size_t, std::string>> v;
  for (const auto& [k, rec] : m) v.emplace_back(rec.order, k);
  std::sort(v.begin(), v.end());
  std::vector<std::string> out;
  for (auto& [o, k] : v) out.push_back(std::move(k));
  return out;
}

}  // namespace

void Profiler::synaptic(std::string_view layer, const Tensor& input, std::uint64_t macs_per_step, bool real_input) {
  auto it = synaptic_.find(layer);
  if (it == synaptic_.end()) {
    it = synaptic_.emplace(std::string(layer), SynapticRecord{}).first;
    it->second.order = synaptic_.size() - 1;
    it->second.macs_per_step = macs_per_step;
    it->second.real_input = real_input;
  }
  SynapticRecord& r = it->second;
  const std::size_t batch = input.size(0);
  const std::size_t per = input.numel() / batch;
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t active = 0;
    const Real* p = input.ptr() + b * per;
    for (std::size_t i = 0; i < per; ++i) {
      if (p[i] != Real(0)) {
        ++active;
        if (p[i] != Real(1)) r.nonbinary_input = true;
      }
    }
    r.active_fraction_sum += per ? static_cast<double>(active) / static_cast<double>(per) : 0.0;
  }
  r.sample_steps += batch;
  if (real_input) mults_[std::string(layer)] += macs_per_step * batch;
}

void Profiler::conv(std::string_view layer, const Tensor& input, std::size_t kernel, const Shape& out,
                    bool real_input) {
  const std::uint64_t macs = static_cast<std::uint64_t>(kernel) * kernel * out[2] * out[3] * input.size(1) * out[1];
  synaptic(layer, input, macs, real_input);
}

void Profiler::multiplications(std::string_view layer, std::uint64_t count) {
  auto it = mults_.find(layer);
  if (it == mults_.end()) it = mults_.emplace(std::string(layer), 0).first;
  it->second += count;
}

void Profiler::spikes(std::string_view layer, const Tensor& y) {
  auto it = spikes_.find(layer);
  const std::size_t batch = y.size(0);
  const std::size_t per = y.numel() / batch;
  if (it == spikes_.end()) {
    it = spikes_.emplace(std::string(layer), SpikeRecord{}).first;
    it->second.order = spikes_.size() - 1;
    it->second.per_neuron.assign(per, 0.0);
  }
  SpikeRecord& r = it->second;
  for (std::size_t b = 0; b < batch; ++b) {
    const Real* p = y.ptr() + b * per;
    for (std::size_t i = 0; i < per; ++i) r.per_neuron[i] += static_cast<double>(p[i]);
  }
  r.sample_steps += batch;
}

std::vector<std::string> Profiler::synaptic_order() const { return ordered_keys(synaptic_); }
std::vector<std::string> Profiler::spike_order() const { return ordered_keys(spikes_); }

void Profiler::clear() {
  synaptic_.clear();
  mults_.clear();
  spikes_.clear();
}

SEDN_END_NAMESPACE
