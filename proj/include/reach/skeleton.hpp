#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace reach {

struct AbsoluteMotion;

/// Joint hierarchy of the stick figure. parent[root_index] == root_index.
struct SkeletonTopology {
  std::vector<int> parent;
  int root_index = 0;
  std::array<int, 2> hand_indices{};  // left, right hand tips
  std::vector<std::string> node_names;

  int node_count() const { return static_cast<int>(parent.size()); }
  bool is_root(int node) const { return node == root_index; }

  /// Throws TopologyError unless the parents form one tree rooted at root_index.
  void validate() const;

  /// Nodes ordered so every parent precedes its children.
  std::vector<int> parent_first_order() const;

  std::uint64_t hash() const;

  friend bool operator==(const SkeletonTopology&, const SkeletonTopology&) = default;
};

/// Per-node bone lengths in meters; the root entry is zero.
struct Shape {
  std::vector<double> bone_length;

  /// Throws DataError on negative entries, zero non-root entries or a size mismatch.
  void validate(const SkeletonTopology& topo) const;
};

// Kinect v2 joint indices.
namespace joint {
enum : int {
  spine_base = 0,
  spine_mid = 1,
  neck = 2,
  head = 3,
  shoulder_left = 4,
  elbow_left = 5,
  wrist_left = 6,
  hand_left = 7,
  shoulder_right = 8,
  elbow_right = 9,
  wrist_right = 10,
  hand_right = 11,
  hip_left = 12,
  knee_left = 13,
  ankle_left = 14,
  foot_left = 15,
  hip_right = 16,
  knee_right = 17,
  ankle_right = 18,
  foot_right = 19,
  spine_shoulder = 20,
  hand_tip_left = 21,
  thumb_left = 22,
  hand_tip_right = 23,
  thumb_right = 24,
};
}

inline constexpr int kStandardNodeCount = 25;

/// The 25-joint Kinect v2 body: spine-base root, spine and head, both arms
/// through hand tips and thumbs, both legs through the feet.
SkeletonTopology standard_topology();

/// Mean node-to-parent distance over every frame of every sequence.
Shape estimate_shape(std::span<const AbsoluteMotion> corpus, const SkeletonTopology& topo);

}  // namespace reach
