#include "reach/coord_encoding.hpp"

#include <cmath>
#include <numbers>

#include "reach/errors.hpp"
#include "reach/nn/ops.hpp"

namespace reach {

nn::Tensor<double> time_code(std::size_t frames, const CoordCodeConfig& cfg) {
  if (cfg.octaves < 0) throw std::invalid_argument("coord_code: octaves must be >= 0");
  if (frames == 0) throw ShapeError("coord_code: no frames");
  const auto extra = static_cast<std::size_t>(cfg.extra_channels());
  nn::Tensor<double> code({extra, frames});
  for (std::size_t j = 0; j < frames; ++j) {
    const double t = frames == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(frames - 1);
    std::size_t row = 0;
    if (cfg.include_ramp) code[row++ * frames + j] = t;
    for (int k = 1; k <= cfg.octaves; ++k) {
      code[row++ * frames + j] = std::sin(2.0 * std::numbers::pi * std::ldexp(1.0, k - 1) * t);
    }
  }
  return code;
}

nn::Tensor<double> coord_code(const nn::Tensor<double>& x, const CoordCodeConfig& cfg) {
  if (x.rank() != 2) throw ShapeError("coord_code: expected [C x T], got " + nn::to_string(x.shape()));
  const std::size_t channels = x.dim(0), frames = x.dim(1);
  const auto code = time_code(frames, cfg);
  nn::Tensor<double> y({channels + code.dim(0), frames});
  std::copy(x.values().begin(), x.values().end(), y.data());
  std::copy(code.values().begin(), code.values().end(), y.data() + x.size());
  return y;
}

template <typename T>
nn::Var<T> coord_code(nn::Var<T> x, const CoordCodeConfig& cfg) {
  if (x.value().rank() != 3) throw ShapeError("coord_code: expected [B x C x T], got " + nn::to_string(x.shape()));
  if (cfg.extra_channels() == 0) return x;
  const std::size_t batch = x.dim(0), frames = x.dim(2);
  const auto code = time_code(frames, cfg);
  nn::Tensor<T> tiled({batch, code.dim(0), frames});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < code.size(); ++i) tiled[b * code.size() + i] = static_cast<T>(code[i]);
  return nn::concat<T>({x, x.tape->constant(std::move(tiled))}, 1);
}

template nn::Var<float> coord_code(nn::Var<float>, const CoordCodeConfig&);
template nn::Var<double> coord_code(nn::Var<double>, const CoordCodeConfig&);

}  // namespace reach
