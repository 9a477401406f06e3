#pragma once

// Differentiable primitives. Images are [batch, channel, height, width].

#include <cstddef>
#include <cstdint>
#include <span>

#include "sedn/tensor.hpp"

SEDN_BEGIN_NAMESPACE

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;
};

/// floor((in + 2*padding - dilation*(k-1) - 1) / stride) + 1
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const ConvGeometry& g);
/// Padding that keeps the spatial size for stride 1: dilation*(k-1)/2.
std::size_t same_padding(std::size_t kernel, std::size_t dilation);

Tensor conv2d(const Tensor& input, const Tensor& weight, const ConvGeometry& geometry);
/// x[b, c, :, :] + bias[c]
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

struct BatchNormOptions {
  bool training = true;
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);
};

/// Per-channel normalization. In training mode it normalizes with the batch
/// statistics (biased variance) and blends them into the running estimates
/// (unbiased variance); in inference mode only the running estimates are
/// used. `gamma`/`beta` may be null for a non-affine normalization.
Tensor batch_norm(const Tensor& x, const Tensor* gamma, const Tensor* beta, Tensor& running_mean,
                  Tensor& running_var, const BatchNormOptions& options);

enum class UpsampleMode { nearest, average };

/// Integer-factor upsampling. `nearest` replicates pixels (binary stays
/// binary); `average` interpolates bilinearly with half-pixel centers.
Tensor upsample(const Tensor& x, std::size_t factor, UpsampleMode mode);

/// Concatenation along the channel axis.
Tensor concat(std::span<const Tensor> inputs);
Tensor global_avg_pool(const Tensor& x);
/// Repeats a [B, C, 1, 1] map over an h x w grid.
Tensor broadcast_spatial(const Tensor& x, std::size_t h, std::size_t w);
/// Sum over the channel axis: [B, C, H, W] -> [B, 1, H, W].
Tensor channel_sum(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_n(std::span<const Tensor> inputs);
Tensor scale(const Tensor& x, Real factor);
Tensor add_scalar(const Tensor& x, Real offset);
/// x * s where s holds one element; the gradient also flows into s.
Tensor scale_by(const Tensor& x, const Tensor& s);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Softmax over a 1-D tensor.
Tensor softmax(const Tensor& logits);
/// Element i of a 1-D tensor as a one-element tensor.
Tensor select(const Tensor& x, std::size_t i);

Tensor mse_loss(const Tensor& prediction, const Tensor& target);

/// Mean over non-ignored pixels of -log softmax(scores)[label], using the
/// log-sum-exp form. `labels` is [B*H*W] row-major. Throws DomainError when
/// every pixel is ignored.
Tensor pixel_cross_entropy(const Tensor& scores, std::span<const std::uint8_t> labels, std::uint8_t ignore_label);

SEDN_END_NAMESPACE
