#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <span>
#include <utility>
#include <vector>

#include "reach/nn/tape.hpp"
#include "reach/skeleton.hpp"

namespace reach {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// World-space marker positions, frame-major: positions[frame * node_count + node].
struct AbsoluteMotion {
  int node_count = 0;
  int frame_count = 0;
  double frame_rate = 30.0;
  std::vector<Vec3> positions;

  AbsoluteMotion() = default;
  AbsoluteMotion(int nodes, int frames, double rate = 30.0)
      : node_count(nodes), frame_count(frames), frame_rate(rate), positions(static_cast<std::size_t>(nodes) * frames, Vec3::Zero()) {}

  Vec3& at(int node, int frame) { return positions[static_cast<std::size_t>(frame) * node_count + node]; }
  const Vec3& at(int node, int frame) const { return positions[static_cast<std::size_t>(frame) * node_count + node]; }

  /// Throws DataError on non-finite entries or fewer than two frames.
  void validate() const;
  void translate(const Vec3& offset);
};

/// Per-node unit directions in parent-anchored frames.
///
/// Non-root entries are unit vectors expressed in the node's alignment frame.
/// The root entry holds zeros at frame 0 and the world-space displacement
/// p(j) - p(j-1) at frame j > 0. `frames[i]` maps local to world coordinates
/// and takes +z to node i's bone direction (parent to node) at frame 0.
struct RelativeMotion {
  int node_count = 0;
  int frame_count = 0;
  double frame_rate = 30.0;
  std::vector<Vec3> directions;
  std::vector<Mat3> frames;

  Vec3& at(int node, int frame) { return directions[static_cast<std::size_t>(frame) * node_count + node]; }
  const Vec3& at(int node, int frame) const { return directions[static_cast<std::size_t>(frame) * node_count + node]; }
};

struct WhitenStats {
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kStdFloor = 1e-6;
inline constexpr double kNormFloor = 1e-8;

/// Minimal rotation taking +z onto `direction` (normalized internally).
/// Identity for +z, a half turn about x for -z.
Mat3 alignment_frame(const Vec3& direction);

/// Alignment frames from the bone directions of frame 0; identity at the root.
std::vector<Mat3> alignment_frames(const AbsoluteMotion& m, const SkeletonTopology& topo);

RelativeMotion a_to_r(const AbsoluteMotion& m, const Shape& s, const SkeletonTopology& topo);
/// Same conversion with externally fixed alignment frames.
RelativeMotion a_to_r(const AbsoluteMotion& m, const Shape& s, const SkeletonTopology& topo, std::vector<Mat3> frames);

/// Rebuilds positions from the root origin by accumulating differentials and
/// stepping down the hierarchy by bone_length along each direction.
/// Directions are renormalized, so the output is bone-rigid.
AbsoluteMotion r_to_a(const RelativeMotion& r, const Shape& s, const SkeletonTopology& topo);

struct NormalizeReport {
  std::size_t degenerate = 0;  // vectors shorter than kNormFloor
};

/// Normalizes every non-root 3-vector of a channel tensor [3N x T] (or
/// [B x 3N x T]) by max(norm, kNormFloor). Root channels pass through.
NormalizeReport normalize_directions(nn::Tensor<double>& raw, int root_index);

// Channel layout used by the networks: channel 3 * node + axis, time last.
nn::Tensor<double> to_channels(const AbsoluteMotion& m);
nn::Tensor<double> to_channels(const RelativeMotion& r);
AbsoluteMotion absolute_from_channels(const nn::Tensor<double>& x, double frame_rate = 30.0);
RelativeMotion relative_from_channels(const nn::Tensor<double>& x, std::vector<Mat3> frames, double frame_rate = 30.0);

/// Per-channel population mean and standard deviation over frames of one
/// [C x T] tensor, or pooled over every frame of several.
WhitenStats whiten_stats(const nn::Tensor<double>& x);
WhitenStats whiten_stats(std::span<const nn::Tensor<double>> sequences);

std::pair<nn::Tensor<double>, WhitenStats> whiten(const nn::Tensor<double>& x);
nn::Tensor<double> whiten(const nn::Tensor<double>& x, const WhitenStats& stats);
nn::Tensor<double> dewhiten(const nn::Tensor<double>& x, const WhitenStats& stats);

/// Uniform-in-time linear resampling; first and last frames are kept exactly.
AbsoluteMotion resample_time(const AbsoluteMotion& m, int target_frames);
/// Resamples the root position and unit bone directions, then rebuilds every
/// bone at its length in `s`. Output is rigid wherever no interpolated
/// direction degenerates.
AbsoluteMotion resample_rigid(const AbsoluteMotion& m, int target_frames, const Shape& s,
                              const SkeletonTopology& topo);

struct RigidityStats {
  double max = 0;
  double mean = 0;
};

/// Deviation of | p_i - p_parent(i) | from bone_length[i] over all frames.
RigidityStats bone_length_violation(const AbsoluteMotion& m, const Shape& s, const SkeletonTopology& topo);

double max_position_error(const AbsoluteMotion& a, const AbsoluteMotion& b);

// Differentiable forms over batched channel tensors [B x 3N x T].
namespace ops {

template <typename T>
nn::Var<T> normalize_directions(nn::Var<T> x, int root_index, T eps = T(kNormFloor));

/// Positions from relative channels with fixed frames. Expects unit directions.
template <typename T>
nn::Var<T> relative_to_absolute(nn::Var<T> r, std::span<const Mat3> frames, const Shape& s,
                                const SkeletonTopology& topo);

/// Relative channels from positions with fixed frames.
template <typename T>
nn::Var<T> absolute_to_relative(nn::Var<T> p, std::span<const Mat3> frames, const SkeletonTopology& topo);

}  // namespace ops

}  // namespace reach
