#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "reach/nn/tape.hpp"

namespace reach::nn {

template <typename T>
using ParameterRefs = std::vector<Parameter<T>*>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
template <typename T>
void init_fan_in_uniform(Parameter<T>& p, std::size_t fan_in, std::mt19937_64& rng, T gain = T{1});

template <typename T>
void zero_grads(const ParameterRefs<T>& params);

/// Clamps every weight into [-limit, limit].
template <typename T>
void clip_weights(const ParameterRefs<T>& params, T limit);

template <typename T>
double grad_norm(const ParameterRefs<T>& params);

/// acc <- decay * acc + (1 - decay) * g^2;  p <- p - lr * g / sqrt(acc + eps)
template <typename T>
class RmsProp {
 public:
  RmsProp(T learning_rate, T decay, T epsilon = T(1e-8))
      : lr_(learning_rate), decay_(decay), eps_(epsilon) {}

  void step(const ParameterRefs<T>& params);

  T learning_rate() const { return lr_; }

 private:
  T lr_, decay_, eps_;
  std::vector<std::vector<T>> acc_;
};

template <typename T>
class Adam {
 public:
  Adam(T learning_rate, T beta1, T beta2, T epsilon = T(1e-8))
      : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon) {}

  void step(const ParameterRefs<T>& params);

 private:
  T lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// Parameter checkpoint: "RGCK", u32 version, u32 count, then per parameter
// u32-length-prefixed name, u32 rank, u32 dims, float32 values. Little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_parameters(std::ostream& os, std::span<const Parameter<float>* const> params);
std::vector<Parameter<float>> read_parameters(std::istream& is);

extern template class RmsProp<float>;
extern template class RmsProp<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace reach::nn
