#include "sedn/events.hpp"

#include <string>

#include "sedn/log.hpp"

SEDN_BEGIN_NAMESPACE

void validate_stream(const EventStream& stream) {
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const EventRecord& e = stream.events[i];
    if (e.x >= stream.width || e.y >= stream.height) {
      throw DomainError("event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                        ") lies outside the " + std::to_string(stream.width) + "x" +
                        std::to_string(stream.height) + " sensor");
    }
    if (e.p != 1 && e.p != -1) {
      throw DomainError("event " + std::to_string(i) + " has polarity " + std::to_string(e.p));
    }
    if (i > 0 && e.t < stream.events[i - 1].t) {
      throw DomainError("event stream not sorted by time at index " + std::to_string(i));
    }
  }
}

Tensor SbtStack::to_tensor() const {
  std::vector<Real> v(frames.begin(), frames.end());
  return Tensor({1, frames_per_stack, height, width}, std::move(v));
}

Tensor SbtStack::collapsed() const {
  const std::size_t hw = static_cast<std::size_t>(width) * height;
  std::vector<Real> v(hw, Real(0));
  for (std::size_t f = 0; f < frames_per_stack; ++f)
    for (std::size_t i = 0; i < hw; ++i) v[i] += static_cast<Real>(frames[f * hw + i]);
  return Tensor({1, 1, height, width}, std::move(v));
}

std::vector<SbtStack> stack_events(const EventStream& stream, const StackingOptions& opt) {
  if (opt.frames == 0 || opt.delta_t_us == 0) throw DomainError("stacking needs a positive window and frame count");
  if (opt.delta_t_us % opt.frames != 0) {
    throw DomainError("stack window " + std::to_string(opt.delta_t_us) + " us is not divisible by " +
                      std::to_string(opt.frames) + " frames");
  }
  if (stream.width == 0 || stream.height == 0) throw DomainError("event stream has an empty sensor size");
  validate_stream(stream);
  if (!stream.events.empty() && stream.events.front().t < opt.start_us) {
    throw DomainError("event 0 precedes the stacking start time");
  }

  std::size_t count = 1;
  if (opt.count) {
    count = *opt.count;
  } else if (!stream.events.empty()) {
    count = static_cast<std::size_t>((stream.events.back().t - opt.start_us) / opt.delta_t_us) + 1;
  }

  const std::uint64_t sub = opt.delta_t_us / opt.frames;
  const std::size_t hw = static_cast<std::size_t>(stream.width) * stream.height;
  std::vector<SbtStack> stacks(count);
  for (std::size_t k = 0; k < count; ++k) {
    SbtStack& s = stacks[k];
    s.width = stream.width;
    s.height = stream.height;
    s.frames_per_stack = opt.frames;
    s.start_us = opt.start_us + k * opt.delta_t_us;
    s.end_us = s.start_us + opt.delta_t_us;
    s.frames.assign(opt.frames * hw, 0);
  }
  for (const EventRecord& e : stream.events) {
    const std::uint64_t rel = e.t - opt.start_us;
    const std::uint64_t k = rel / opt.delta_t_us;
    if (k >= count) break;
    const std::uint64_t f = (rel % opt.delta_t_us) / sub;
    stacks[k].frames[f * hw + static_cast<std::size_t>(e.y) * stream.width + e.x] += e.p;
  }
  return stacks;
}

std::vector<StackSequence> make_sequences(std::span<const SbtStack> stacks, std::span<const LabelGrid> labels,
                                          std::size_t seq_len, std::size_t warmup) {
  if (seq_len <= warmup) {
    throw DomainError("sequence length " + std::to_string(seq_len) + " must exceed warm-up " + std::to_string(warmup));
  }
  if (labels.size() != stacks.size()) {
    throw ShapeError(std::to_string(labels.size()) + " label grids for " + std::to_string(stacks.size()) + " stacks");
  }
  std::vector<StackSequence> out;
  if (stacks.size() < seq_len) {
    warn("only " + std::to_string(stacks.size()) + " stacks, fewer than one sequence of " + std::to_string(seq_len));
    return out;
  }
  for (std::size_t begin = 0; begin + seq_len <= stacks.size(); begin += seq_len) {
    StackSequence seq;
    seq.warmup = warmup;
    seq.stacks.assign(stacks.begin() + begin, stacks.begin() + begin + seq_len);
    seq.labels.assign(labels.begin() + begin + warmup, labels.begin() + begin + seq_len);
    for (const LabelGrid& l : seq.labels) {
      if (l.width != seq.stacks[0].width || l.height != seq.stacks[0].height) {
        throw ShapeError("label grid size does not match the event stacks");
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

StackSequence fuse_image_channel(StackSequence seq, std::span<const Image> images) {
  if (images.empty()) return seq;
  if (images.size() != seq.stacks.size()) {
    throw ShapeError(std::to_string(images.size()) + " images for " + std::to_string(seq.stacks.size()) + " stacks");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width != seq.stacks[i].width || images[i].height != seq.stacks[i].height ||
        images[i].values.size() != static_cast<std::size_t>(images[i].width) * images[i].height) {
      throw ShapeError("image " + std::to_string(i) + " resolution does not match its event stack");
    }
  }
  seq.aug.assign(images.begin(), images.end());
  return seq;
}

Tensor image_tensor(const Image& image) {
  std::vector<Real> v(image.values.begin(), image.values.end());
  return Tensor({1, 1, image.height, image.width}, std::move(v));
}

SEDN_END_NAMESPACE
