#include "reach/skeleton.hpp"

#include <algorithm>
#include <cmath>

#include "reach/errors.hpp"
#include "reach/motion.hpp"

namespace reach {

void SkeletonTopology::validate() const {
  const int n = node_count();
  if (n == 0) throw TopologyError("topology has no nodes");
  if (root_index < 0 || root_index >= n) throw TopologyError("root index out of range");
  if (parent[root_index] != root_index) throw TopologyError("root must be its own parent");
  if (!node_names.empty() && static_cast<int>(node_names.size()) != n) {
    throw TopologyError("node name count does not match node count");
  }
  for (int h : hand_indices) {
    if (h < 0 || h >= n) throw TopologyError("hand index out of range");
  }
  for (int i = 0; i < n; ++i) {
    if (parent[i] < 0 || parent[i] >= n) throw TopologyError("parent of node " + std::to_string(i) + " out of range");
    if (i != root_index && parent[i] == i) throw TopologyError("node " + std::to_string(i) + " is a second root");
    // Every chain must hit the root within n steps, otherwise it cycles.
    int cur = i;
    int steps = 0;
    while (cur != root_index) {
      cur = parent[cur];
      if (++steps > n) throw TopologyError("parent chain of node " + std::to_string(i) + " contains a cycle");
    }
  }
}

std::vector<int> SkeletonTopology::parent_first_order() const {
  const int n = node_count();
  std::vector<int> depth(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int cur = i; cur != root_index; cur = parent[cur]) ++depth[i];
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return depth[a] < depth[b]; });
  return order;
}

std::uint64_t SkeletonTopology::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::int64_t v) {
    for (int k = 0; k < 8; ++k) {
      h ^= static_cast<std::uint64_t>((v >> (8 * k)) & 0xff);
      h *= 1099511628211ull;
    }
  };
  mix(node_count());
  for (int p : parent) mix(p);
  mix(root_index);
  mix(hand_indices[0]);
  mix(hand_indices[1]);
  return h;
}

void Shape::validate(const SkeletonTopology& topo) const {
  if (static_cast<int>(bone_length.size()) != topo.node_count()) {
    throw DataError("shape has " + std::to_string(bone_length.size()) + " entries for " +
                    std::to_string(topo.node_count()) + " nodes");
  }
  for (int i = 0; i < topo.node_count(); ++i) {
    const double len = bone_length[i];
    if (!std::isfinite(len) || len < 0) throw DataError("bone length of node " + std::to_string(i) + " is invalid");
    if (i != topo.root_index && len == 0) throw DataError("bone length of node " + std::to_string(i) + " is zero");
  }
}

SkeletonTopology standard_topology() {
  using namespace joint;
  SkeletonTopology t;
  t.parent = {
      spine_base,      // spine_base
      spine_base,      // spine_mid
      spine_shoulder,  // neck
      neck,            // head
      spine_shoulder,  // shoulder_left
      shoulder_left,   // elbow_left
      elbow_left,      // wrist_left
      wrist_left,      // hand_left
      spine_shoulder,  // shoulder_right
      shoulder_right,  // elbow_right
      elbow_right,     // wrist_right
      wrist_right,     // hand_right
      spine_base,      // hip_left
      hip_left,        // knee_left
      knee_left,       // ankle_left
      ankle_left,      // foot_left
      spine_base,      // hip_right
      hip_right,       // knee_right
      knee_right,      // ankle_right
      ankle_right,     // foot_right
      spine_mid,       // spine_shoulder
      hand_left,       // hand_tip_left
      hand_left,       // thumb_left
      hand_right,      // hand_tip_right
      hand_right,      // thumb_right
  };
  t.root_index = spine_base;
  t.hand_indices = {hand_tip_left, hand_tip_right};
  t.node_names = {"SpineBase",     "SpineMid",   "Neck",      "Head",       "ShoulderLeft",  "ElbowLeft",
                  "WristLeft",     "HandLeft",   "ShoulderRight", "ElbowRight", "WristRight", "HandRight",
                  "HipLeft",       "KneeLeft",   "AnkleLeft", "FootLeft",   "HipRight",      "KneeRight",
                  "AnkleRight",    "FootRight",  "SpineShoulder", "HandTipLeft", "ThumbLeft", "HandTipRight",
                  "ThumbRight"};
  return t;
}

Shape estimate_shape(std::span<const AbsoluteMotion> corpus, const SkeletonTopology& topo) {
  if (corpus.empty()) throw DataError("estimate_shape: empty corpus");
  const int n = topo.node_count();
  std::vector<double> total(n, 0.0);
  std::size_t samples = 0;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto& m = corpus[s];
    if (m.node_count != n) {
      throw TopologyError("estimate_shape: sequence " + std::to_string(s) + " has " + std::to_string(m.node_count) +
                          " nodes, topology has " + std::to_string(n));
    }
    for (int j = 0; j < m.frame_count; ++j) {
      for (int i = 0; i < n; ++i) {
        if (i == topo.root_index) continue;
        total[i] += (m.at(i, j) - m.at(topo.parent[i], j)).norm();
      }
    }
    samples += static_cast<std::size_t>(m.frame_count);
  }
  Shape s;
  s.bone_length.resize(n, 0.0);
  if (samples == 0) throw DataError("estimate_shape: corpus has no frames");
  for (int i = 0; i < n; ++i) s.bone_length[i] = i == topo.root_index ? 0.0 : total[i] / static_cast<double>(samples);
  return s;
}

}  // namespace reach
