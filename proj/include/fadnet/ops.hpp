#pragma once

#include <cstddef>
#include <vector>

#include "fadnet/tensor.hpp"

// Differentiable primitives. Every function takes the tape first; when no
// operand requires grad (or the tape is not recording) nothing is recorded.
// Image tensors are CHW.
namespace fadnet::ops {

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride = 1, std::size_t padding = 0);

/// Learned transposed convolution, weight [C_in, C_out, k, k]; output extent
/// (H - 1) * stride + k.
Tensor conv_transpose2d(Tape& tape, const Tensor& input, const Tensor& weight,
                        const Tensor& bias, std::size_t stride);

/// Fixed bilinear resize by an integer factor (half-pixel centers, edge clamp).
Tensor upsample_bilinear(Tape& tape, const Tensor& input, int factor);

Tensor group_norm(Tape& tape, const Tensor& input, std::size_t groups, const Tensor& gamma,
                  const Tensor& beta, double eps = 1e-5);

enum class Pointwise { relu, sigmoid, tanh };
Tensor pointwise(Tape& tape, const Tensor& input, Pointwise kind);
inline Tensor relu(Tape& t, const Tensor& x) { return pointwise(t, x, Pointwise::relu); }
inline Tensor sigmoid(Tape& t, const Tensor& x) { return pointwise(t, x, Pointwise::sigmoid); }
inline Tensor tanh(Tape& t, const Tensor& x) { return pointwise(t, x, Pointwise::tanh); }

Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b);
/// Channels [begin, end) of a CHW tensor.
Tensor slice_channels(Tape& tape, const Tensor& input, std::size_t begin, std::size_t end);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double s);
Tensor add_scalar(Tape& tape, const Tensor& a, double s);
/// Multiplies channel c of a [C,H,W] tensor by the constant s[c].
Tensor scale_channels(Tape& tape, const Tensor& a, const std::vector<double>& s);

Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
/// sum_i weights[i] * parts[i] over scalar tensors.
Tensor weighted_sum(Tape& tape, const std::vector<Tensor>& parts, const std::vector<double>& weights);

Tensor reshape(Tape& tape, const Tensor& input, Shape shape);
/// Flat-index gather into a rank-1 tensor.
Tensor gather(Tape& tape, const Tensor& input, const std::vector<std::size_t>& flat_indices);

/// [C, H, W] -> [W, H, C]: moves the width axis onto the channel axis.
Tensor swap_channel_width(Tape& tape, const Tensor& input);

/// Rank-1 [n] -> [1, n * rows_per_entry, width]; row i reads entry i / rows_per_entry.
Tensor replicate_rows(Tape& tape, const Tensor& vec, std::size_t rows_per_entry, std::size_t width);

}  // namespace fadnet::ops
