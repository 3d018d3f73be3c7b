#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "reach/gan.hpp"
#include "reach/motion.hpp"
#include "reach/skeleton.hpp"

namespace reach {

/// Bone lengths of the oracle figure (about 1.75 m tall).
Shape default_shape();

/// Root height of the oracle figure standing upright.
double standing_root_height(const Shape& s);

struct OracleConfig {
  double noise_sigma = 0.01;        // marker jitter, meters
  int frame_count = 100;
  int frame_jitter = 0;             // frame_count drawn from [n - jitter, n + jitter]
  double frame_rate = 30.0;
  double step_probability = 0.25;   // extra unforced step toward the goals
  double flip_probability = 0.02;   // per sequence, a limb flipped for a few frames
  double max_root_travel = 2.5;     // meters
  std::uint64_t seed = 1;
  Shape shape = default_shape();
};

struct SequenceMeta {
  std::uint64_t seed = 0;
  bool left_hand = false;
  bool flipped = false;
};

struct Sequence {
  AbsoluteMotion motion;
  Goals goals;
  SequenceMeta meta;
};

/// Relative-representation twin of a sequence as stored by `convert`.
struct RelativeSequence {
  RelativeMotion motion;
  Goals goals;
  SequenceMeta meta;
  Vec3 origin = Vec3::Zero();  // world root position at frame 0
};

struct MotionDataset {
  SkeletonTopology topology = standard_topology();
  Shape shape = default_shape();
  Workspace workspace{};
  std::vector<Sequence> sequences;

  /// Throws on topology mismatches or goals outside the workspace.
  void validate() const;
  std::vector<AbsoluteMotion> motions() const;
};

/// Procedural reach-and-place animation: the hand tip travels on minimum-jerk
/// paths through the pick goal (first half) and the place goal (second half)
/// while the torso leans, the knees bend and the feet step as needed. Bone
/// lengths are exact before noise. Deterministic in (goals, cfg).
/// Throws WorkspaceError if a goal cannot be reached within max_root_travel.
Sequence generate_sequence(const Goals& g, const OracleConfig& cfg);

/// n sequences with goals uniform in the workspace, pick and place heights
/// stratified over low, middle and high thirds.
MotionDataset build_dataset(int n, const OracleConfig& cfg, const Workspace& ws, std::mt19937_64& rng);

/// Uniform random goal pair inside the workspace.
Goals random_goals(const Workspace& ws, std::mt19937_64& rng);

// Binary dataset file, little-endian, version 1 (layout in docs/formats.md).
inline constexpr std::uint32_t kDatasetVersion = 1;
enum class Representation : std::uint32_t { absolute = 0, relative = 1 };

void write_dataset(const MotionDataset& ds, const std::filesystem::path& path);
MotionDataset read_dataset(const std::filesystem::path& path);
/// Also checks the stored topology against `expected`.
MotionDataset read_dataset(const std::filesystem::path& path, const SkeletonTopology& expected);

struct RelativeDataset {
  SkeletonTopology topology = standard_topology();
  Shape shape = default_shape();
  Workspace workspace{};
  std::vector<RelativeSequence> sequences;
};

void write_relative_dataset(const RelativeDataset& ds, const std::filesystem::path& path);
RelativeDataset read_relative_dataset(const std::filesystem::path& path);
Representation peek_representation(const std::filesystem::path& path);

/// Exact byte size of an absolute dataset file with the given frame counts.
std::size_t dataset_file_size(int node_count, const std::vector<int>& frame_counts);

}  // namespace reach
