#pragma once

#include "reach/nn/tape.hpp"

namespace reach {

/// Time-code channels appended in front of temporal convolutions: an
/// optional linear ramp over [0, 1] plus `octaves` sinusoids, where octave k
/// completes 2^(k-1) periods across the clip.
struct CoordCodeConfig {
  int octaves = 2;
  bool include_ramp = true;

  int extra_channels() const { return (include_ramp ? 1 : 0) + octaves; }
};

/// The appended channels alone, [extra_channels x frames].
nn::Tensor<double> time_code(std::size_t frames, const CoordCodeConfig& cfg);

/// [C x T] -> [(C + extra) x T]; the input channels come first, unchanged.
nn::Tensor<double> coord_code(const nn::Tensor<double>& x, const CoordCodeConfig& cfg);

/// Batched differentiable form, [B x C x T] -> [B x (C + extra) x T].
/// No gradient flows into the appended channels.
template <typename T>
nn::Var<T> coord_code(nn::Var<T> x, const CoordCodeConfig& cfg);

}  // namespace reach
