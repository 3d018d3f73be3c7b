#pragma once

#include <span>
#include <vector>

#include "reach/nn/tape.hpp"

namespace reach::nn {

enum class UpsampleMode { linear, nearest };

// Elementwise arithmetic on equally shaped values.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> x, T factor);

template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> mean(Var<T> x);

template <typename T> Var<T> reshape(Var<T> x, Shape shape);

template <typename T> Var<T> leaky_relu(Var<T> x, T slope);

/// y[b] = W x[b] + bias, with x [B x C_in], W [C_out x C_in], bias [C_out].
template <typename T> Var<T> dense(Var<T> x, Var<T> w, Var<T> b);

/// Temporal cross-correlation with zero same-padding.
/// x [B x C_in x T], w [C_out x C_in x K] (K odd), b [C_out] -> [B x C_out x T/stride].
template <typename T> Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride);

/// Doubles the time axis of [B x C x T]. Linear mode samples the input at
/// half-step offsets and replicates the endpoints.
template <typename T> Var<T> upsample(Var<T> x, UpsampleMode mode = UpsampleMode::linear);

template <typename T> Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);
template <typename T> Var<T> concat(std::initializer_list<Var<T>> parts, std::size_t axis) {
  return concat(std::span<const Var<T>>(parts.begin(), parts.size()), axis);
}

/// [B x C] -> [B x C x frames], repeating every value over time.
template <typename T> Var<T> tile_time(Var<T> x, std::size_t frames);

/// y[b,c,t] = x[b,c,t] * gain[c] + offset[c] with constant gain and offset.
template <typename T> Var<T> channel_affine(Var<T> x, std::span<const T> gain, std::span<const T> offset);

}  // namespace reach::nn
