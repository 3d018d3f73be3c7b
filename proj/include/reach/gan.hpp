#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "reach/coord_encoding.hpp"
#include "reach/motion.hpp"
#include "reach/nn/ops.hpp"
#include "reach/nn/optim.hpp"

namespace reach {

/// Pick-up and placement points in world space (meters).
struct Goals {
  Vec3 pick = Vec3::Zero();
  Vec3 place = Vec3::Zero();
};

/// Axis-aligned box goals must lie in.
struct Workspace {
  Vec3 lo{-1.0, 0.3, 0.1};
  Vec3 hi{1.0, 2.3, 2.1};

  bool contains(const Vec3& p) const;
  Vec3 center() const { return 0.5 * (lo + hi); }
};

/// Maps each goal coordinate affinely onto [-1, 1]. Throws WorkspaceError
/// naming the offending goal and axis when a point lies outside the box.
std::array<double, 6> scale_goals(const Goals& g, const Workspace& ws);
Goals unscale_goals(const std::array<double, 6>& scaled, const Workspace& ws);

inline constexpr std::size_t kLatentSize = 200;
inline constexpr double kLatentMean = 1.0;
inline constexpr double kLatentStd = 100.0;

struct LatentCode {
  std::array<double, kLatentSize> z{};
};

/// 200 i.i.d. draws from N(1, 100^2).
LatentCode sample_latent(std::mt19937_64& rng);

enum class RootMode { differential, absolute };
enum class MotionSpace { relative, absolute };

/// Switches for the three ablations. The default is the full method.
struct AblationFlags {
  bool coord_encoding = true;
  RootMode root_mode = RootMode::differential;
  MotionSpace motion_space = MotionSpace::relative;

  std::string describe() const;
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

/// Layer widths of both networks. standard() reproduces the published tables;
/// smaller instances are used for gradient checks.
struct Architecture {
  std::size_t latent = kLatentSize;
  std::size_t goal_dims = 6;
  std::size_t nodes = 25;
  std::size_t frames = 32;
  int root_index = 0;

  // Generator: dense to gen_channels[0] x gen_base_frames, then one
  // (coordCode, upsample x2, conv) level per further entry.
  std::size_t gen_base_frames = 4;
  std::vector<std::size_t> gen_channels{600, 300, 150, 75};

  // Discriminator conv stack, then dense(disc_hidden), dense(1).
  std::vector<std::size_t> disc_channels{84, 162, 162, 324, 324};
  std::vector<std::size_t> disc_strides{2, 1, 2, 1, 2};
  std::size_t disc_hidden = 1200;

  std::size_t kernel = 3;
  double leaky_slope = 0.2;
  nn::UpsampleMode upsample = nn::UpsampleMode::linear;
  CoordCodeConfig coord{};
  // Feed (z - mean) / std to the first dense layer.
  bool standardize_latent = true;

  static Architecture standard() { return {}; }
  std::size_t motion_channels() const { return 3 * nodes; }
  /// Throws std::invalid_argument if the widths cannot produce [3N x frames].
  void validate() const;
};

/// One row of the layer-by-layer shape ledger.
struct LayerShape {
  std::string layer;
  std::size_t features = 0;
  std::size_t size = 0;
  std::size_t stride = 1;
};

enum class Binding { trainable, frozen };

template <typename T>
class Generator {
 public:
  Generator(const Architecture& arch, const AblationFlags& flags, std::mt19937_64& rng);

  /// z [B x latent], goals [B x 6] (scaled) -> motion channels [B x 3N x frames].
  /// Non-root direction vectors are normalized unless the motion space is absolute.
  nn::Var<T> forward(nn::Tape<T>& tape, nn::Var<T> z, nn::Var<T> goals, Binding binding,
                     std::vector<LayerShape>* ledger = nullptr);

  /// Per-channel output map applied before direction normalization, typically the data
  /// whitening inverse (gain = std, offset = mean). Empty means identity.
  void set_output_affine(std::vector<T> gain, std::vector<T> offset);

  nn::ParameterRefs<T> parameters();
  const Architecture& architecture() const { return arch_; }
  const AblationFlags& flags() const { return flags_; }

 private:
  Architecture arch_;
  AblationFlags flags_;
  std::vector<T> out_gain_, out_offset_;
  nn::Parameter<T> dense_w_, dense_b_;
  std::vector<nn::Parameter<T>> conv_w_, conv_b_;
};

template <typename T>
class Discriminator {
 public:
  Discriminator(const Architecture& arch, const AblationFlags& flags, std::mt19937_64& rng);

  /// motion [B x 3N x frames], goals [B x 6] -> unbounded scores [B x 1].
  nn::Var<T> forward(nn::Tape<T>& tape, nn::Var<T> motion, nn::Var<T> goals, Binding binding,
                     std::vector<LayerShape>* ledger = nullptr);

  /// Forward pass with each leaky ReLU applied as a fixed slope pattern. An empty `masks`
  /// records the pattern of this input; a filled one is replayed, which makes the score
  /// affine in `motion`.
  nn::Var<T> forward_masked(nn::Tape<T>& tape, nn::Var<T> motion, nn::Var<T> goals, Binding binding,
                            std::vector<nn::Tensor<T>>& masks);

  nn::ParameterRefs<T> parameters();
  const Architecture& architecture() const { return arch_; }

 private:
  nn::Var<T> run(nn::Tape<T>& tape, nn::Var<T> motion, nn::Var<T> goals, Binding binding,
                 std::vector<LayerShape>* ledger, std::vector<nn::Tensor<T>>* masks);

  Architecture arch_;
  AblationFlags flags_;
  std::vector<nn::Parameter<T>> conv_w_, conv_b_;
  nn::Parameter<T> hidden_w_, hidden_b_, out_w_, out_b_;
};

/// Copies values between parameter lists matched by name.
template <typename T, typename U>
void copy_parameter_values(const nn::ParameterRefs<T>& from, const nn::ParameterRefs<U>& to);

extern template class Generator<float>;
extern template class Generator<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace reach
