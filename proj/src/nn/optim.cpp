#include "reach/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "reach/binary_io.hpp"

namespace reach::nn {

template <typename T>
void init_fan_in_uniform(Parameter<T>& p, std::size_t fan_in, std::mt19937_64& rng, T gain) {
  const T bound = gain / std::sqrt(static_cast<T>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : p.value.values()) v = static_cast<T>(dist(rng)) * bound;
  p.zero_grad();
}

template <typename T>
void zero_grads(const ParameterRefs<T>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename T>
void clip_weights(const ParameterRefs<T>& params, T limit) {
  for (auto* p : params)
    for (auto& v : p->value.values()) v = std::clamp(v, -limit, limit);
}

template <typename T>
double grad_norm(const ParameterRefs<T>& params) {
  double s = 0;
  for (const auto* p : params)
    for (T g : p->grad.values()) s += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(s);
}

template <typename T>
void RmsProp<T>::step(const ParameterRefs<T>& params) {
  if (acc_.size() != params.size()) {
    acc_.clear();
    for (const auto* p : params) acc_.emplace_back(p->value.size(), T{0});
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& acc = acc_[k];
    T* w = p.value.data();
    const T* g = p.grad.data();
    for (std::size_t i = 0; i < acc.size(); ++i) {
      acc[i] = decay_ * acc[i] + (T{1} - decay_) * g[i] * g[i];
      w[i] -= lr_ * g[i] / std::sqrt(acc[i] + eps_);
    }
  }
}

template <typename T>
void Adam<T>::step(const ParameterRefs<T>& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto* p : params) {
      m_.emplace_back(p->value.size(), T{0});
      v_.emplace_back(p->value.size(), T{0});
    }
  }
  ++t_;
  const T c1 = T{1} - std::pow(b1_, static_cast<T>(t_));
  const T c2 = T{1} - std::pow(b2_, static_cast<T>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    T* w = p.value.data();
    const T* g = p.grad.data();
    for (std::size_t i = 0; i < m_[k].size(); ++i) {
      m_[k][i] = b1_ * m_[k][i] + (T{1} - b1_) * g[i];
      v_[k][i] = b2_ * v_[k][i] + (T{1} - b2_) * g[i] * g[i];
      w[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
    }
  }
}

namespace {
constexpr char kMagic[4] = {'R', 'G', 'C', 'K'};
}

void write_parameters(std::ostream& os, std::span<const Parameter<float>* const> params) {
  io::Writer w(os);
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.str(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(p->value.values());
  }
}

std::vector<Parameter<float>> read_parameters(std::istream& is) {
  io::Reader r(is, "checkpoint");
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw HeaderError("checkpoint: bad magic bytes");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.u32();
  std::vector<Parameter<float>> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.str();
    const auto rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint: parameter '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<float> values(element_count(shape));
    for (auto& v : values) v = r.f32();
    out.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(values)));
  }
  return out;
}

#define REACH_INSTANTIATE_OPTIM(T)                                                     \
  template void init_fan_in_uniform(Parameter<T>&, std::size_t, std::mt19937_64&, T); \
  template void zero_grads(const ParameterRefs<T>&);                                   \
  template void clip_weights(const ParameterRefs<T>&, T);                              \
  template double grad_norm(const ParameterRefs<T>&);                                  \
  template class RmsProp<T>;                                                           \
  template class Adam<T>;

REACH_INSTANTIATE_OPTIM(float)
REACH_INSTANTIATE_OPTIM(double)

}  // namespace reach::nn
