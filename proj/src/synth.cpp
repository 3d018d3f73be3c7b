#include "reach/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>

#include "reach/errors.hpp"

namespace reach {
namespace {

using namespace joint;
constexpr int kNodes = kStandardNodeCount;
using Pose = std::array<Vec3, kNodes>;

// Bone directions of the upright figure in its body frame: x right, y forward, z up.
const Pose& rest_directions() {
  static const Pose dirs = [] {
    Pose d;
    d.fill(Vec3(0, 0, -1));
    d[spine_base] = Vec3::Zero();
    d[spine_mid] = d[spine_shoulder] = d[neck] = d[head] = Vec3(0, 0, 1);
    d[shoulder_left] = Vec3(-1, 0, -0.15).normalized();
    d[shoulder_right] = Vec3(1, 0, -0.15).normalized();
    d[elbow_left] = Vec3(-0.12, 0, -1).normalized();
    d[elbow_right] = Vec3(0.12, 0, -1).normalized();
    d[thumb_left] = Vec3(0, 0.6, -0.8);
    d[thumb_right] = Vec3(0, 0.6, -0.8);
    d[hip_left] = Vec3(-1, 0, -0.5).normalized();
    d[hip_right] = Vec3(1, 0, -0.5).normalized();
    d[foot_left] = d[foot_right] = Vec3(0, 1, -0.4).normalized();
    return d;
  }();
  return dirs;
}

Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

double min_jerk(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
}

// Whole-body placement: root position, heading about z, forward lean of the torso.
struct BodyConfig {
  Vec3 root = Vec3::Zero();
  double yaw = 0;
  double pitch = 0;
};

BodyConfig blend(const BodyConfig& a, const BodyConfig& b, double s) {
  return {a.root + s * (b.root - a.root), a.yaw + s * (b.yaw - a.yaw), a.pitch + s * (b.pitch - a.pitch)};
}

Mat3 torso_rotation(const BodyConfig& c, double fraction) { return rot_z(c.yaw) * rot_x(-c.pitch * fraction); }

struct ArmChain {
  int shoulder, elbow, wrist, hand, tip, thumb;
};
constexpr ArmChain kArms[2] = {{shoulder_left, elbow_left, wrist_left, hand_left, hand_tip_left, thumb_left},
                               {shoulder_right, elbow_right, wrist_right, hand_right, hand_tip_right, thumb_right}};
struct LegChain {
  int hip, knee, ankle, foot;
};
constexpr LegChain kLegs[2] = {{hip_left, knee_left, ankle_left, foot_left},
                               {hip_right, knee_right, ankle_right, foot_right}};

// Two-bone inverse kinematics. Returns the directions of both links; the end
// point lands on `target` whenever it is within reach.
std::pair<Vec3, Vec3> two_bone(const Vec3& base, const Vec3& target, double l1, double l2, const Vec3& pole) {
  Vec3 d = target - base;
  double dist = d.norm();
  const Vec3 u = dist > 1e-9 ? Vec3(d / dist) : Vec3(0, 0, -1);
  dist = std::clamp(dist, std::abs(l1 - l2) + 1e-6, l1 + l2 - 1e-9);
  const double along = (l1 * l1 - l2 * l2 + dist * dist) / (2.0 * dist);
  const double h = std::sqrt(std::max(l1 * l1 - along * along, 0.0));
  Vec3 v = pole - u * u.dot(pole);
  if (v.norm() < 1e-9) v = u.unitOrthogonal();
  v.normalize();
  const Vec3 joint_pos = base + along * u + h * v;
  const Vec3 end = base + dist * u;
  return {(joint_pos - base).normalized(), (end - joint_pos).normalized()};
}

struct FrameSpec {
  BodyConfig body;
  int active_side = 1;  // arm driven toward tip_target; -1 for none
  Vec3 tip_target = Vec3::Zero();
  double elbow_roll = 0;
  double swing = 0;
  std::array<Vec3, 2> ankles{};  // planted ankle targets
};

class Figure {
 public:
  explicit Figure(const Shape& s) : len_(s.bone_length), topo_(standard_topology()) {}

  Pose build(const FrameSpec& f) const {
    const Pose& rest = rest_directions();
    Pose dir;
    dir.fill(Vec3::Zero());
    const Mat3 body = rot_z(f.body.yaw);
    const Mat3 chest = torso_rotation(f.body, 1.0);
    dir[spine_mid] = torso_rotation(f.body, 0.5) * rest[spine_mid];
    dir[spine_shoulder] = chest * rest[spine_shoulder];
    dir[neck] = torso_rotation(f.body, 0.9) * rest[neck];
    dir[head] = torso_rotation(f.body, 0.8) * rest[head];
    dir[shoulder_left] = chest * rest[shoulder_left];
    dir[shoulder_right] = chest * rest[shoulder_right];
    dir[hip_left] = body * rest[hip_left];
    dir[hip_right] = body * rest[hip_right];

    Pose p;
    p.fill(Vec3::Zero());
    p[spine_base] = f.body.root;
    for (int i : {spine_mid, spine_shoulder, neck, head, shoulder_left, shoulder_right, hip_left, hip_right}) {
      p[i] = p[topo_.parent[i]] + len_[i] * dir[i];
    }

    for (int side = 0; side < 2; ++side) {
      const ArmChain& a = kArms[side];
      if (side == f.active_side) {
        const double lower = len_[a.wrist] + len_[a.hand] + len_[a.tip];
        const double outward = side == 0 ? -0.5 : 0.5;
        Vec3 pole = body * Vec3(outward, -0.2, -1.0);
        const Vec3 axis = (f.tip_target - p[a.shoulder]).normalized();
        pole = Eigen::AngleAxisd(f.elbow_roll, axis).toRotationMatrix() * pole;
        auto [upper_dir, lower_dir] = two_bone(p[a.shoulder], f.tip_target, len_[a.elbow], lower, pole);
        dir[a.elbow] = upper_dir;
        dir[a.wrist] = dir[a.hand] = dir[a.tip] = lower_dir;
        Vec3 side_dir = pole - lower_dir * lower_dir.dot(pole);
        if (side_dir.norm() < 1e-9) side_dir = lower_dir.unitOrthogonal();
        dir[a.thumb] = (0.8 * lower_dir + 0.6 * side_dir.normalized()).normalized();
      } else {
        const Mat3 hang = body * rot_x(f.swing);
        for (int i : {a.elbow, a.wrist, a.hand, a.tip, a.thumb}) dir[i] = hang * rest[i];
      }
      for (int i : {a.elbow, a.wrist, a.hand, a.tip, a.thumb}) p[i] = p[topo_.parent[i]] + len_[i] * dir[i];
    }

    for (int side = 0; side < 2; ++side) {
      const LegChain& l = kLegs[side];
      auto [thigh, shin] = two_bone(p[l.hip], f.ankles[side], len_[l.knee], len_[l.ankle], body * Vec3(0, 1, 0));
      dir[l.knee] = thigh;
      dir[l.ankle] = shin;
      dir[l.foot] = body * rest[l.foot];
      for (int i : {l.knee, l.ankle, l.foot}) p[i] = p[topo_.parent[i]] + len_[i] * dir[i];
    }
    return p;
  }

  Vec3 shoulder(const BodyConfig& c, int side) const {
    const Pose& rest = rest_directions();
    const int s = kArms[side].shoulder;
    return c.root + len_[spine_mid] * (torso_rotation(c, 0.5) * rest[spine_mid]) +
           len_[spine_shoulder] * (torso_rotation(c, 1.0) * rest[spine_shoulder]) +
           len_[s] * (torso_rotation(c, 1.0) * rest[s]);
  }

  double arm_reach(int side) const {
    const ArmChain& a = kArms[side];
    return len_[a.elbow] + len_[a.wrist] + len_[a.hand] + len_[a.tip];
  }

  // Ankle rest offset from the root in the body frame (z is absolute height).
  Vec3 ankle_offset(int side) const {
    const Pose& rest = rest_directions();
    const LegChain& l = kLegs[side];
    Vec3 off = len_[l.hip] * rest[l.hip] + len_[l.knee] * rest[l.knee] + len_[l.ankle] * rest[l.ankle];
    return off;
  }

  std::array<Vec3, 2> planted_ankles(const BodyConfig& c, double standing_height) const {
    std::array<Vec3, 2> out;
    for (int side = 0; side < 2; ++side) {
      Vec3 off = rot_z(c.yaw) * ankle_offset(side);
      out[side] = Vec3(c.root.x() + off.x(), c.root.y() + off.y(), standing_height + ankle_offset(side).z());
    }
    return out;
  }

 private:
  std::vector<double> len_;
  SkeletonTopology topo_;
};

struct CostWeights {
  double step = 2.5, pitch = 1.0, crouch = 2.0;
  double preferred_step = 0.0;
};

// Body placement that brings the shoulder within comfortable reach of the goal.
std::optional<BodyConfig> solve_reach(const Figure& fig, double standing_height, const Vec3& start_root,
                                      const Vec3& goal, int side, double yaw_factor, double max_travel,
                                      const CostWeights& w) {
  Vec3 horiz(goal.x() - start_root.x(), goal.y() - start_root.y(), 0.0);
  const double heading = std::atan2(-horiz.x(), horiz.y());
  const double yaw = std::clamp(heading, -1.3, 1.3) * yaw_factor;
  const Vec3 step_dir = horiz.norm() > 1e-6 ? Vec3(horiz.normalized()) : Vec3(0, 1, 0);
  const double reach = fig.arm_reach(side);

  std::optional<BodyConfig> best;
  double best_cost = 0;
  for (double step = -0.6; step <= max_travel + 1e-9; step += 0.05) {
    for (int pi = 0; pi <= 18; ++pi) {
      const double pitch = pi * (5.0 * std::numbers::pi / 180.0);
      for (int ci = 0; ci <= 11; ++ci) {
        const double crouch = 0.05 * ci;
        BodyConfig c;
        c.root = Vec3(start_root.x(), start_root.y(), standing_height - crouch) + step * step_dir;
        c.yaw = yaw;
        c.pitch = pitch;
        const double d = (goal - fig.shoulder(c, side)).norm();
        if (d > 0.93 * reach || d < 0.3 * reach) continue;
        const double cost = w.step * std::abs(step - w.preferred_step) + w.pitch * pitch + w.crouch * crouch;
        if (!best || cost < best_cost) {
          best = c;
          best_cost = cost;
        }
      }
    }
  }
  return best;
}

void flip_limb(AbsoluteMotion& m, const SkeletonTopology& topo, std::mt19937_64& rng) {
  static constexpr std::array<std::array<int, 5>, 4> kLimbs = {{
      {elbow_left, wrist_left, hand_left, hand_tip_left, thumb_left},
      {elbow_right, wrist_right, hand_right, hand_tip_right, thumb_right},
      {knee_left, ankle_left, foot_left, -1, -1},
      {knee_right, ankle_right, foot_right, -1, -1},
  }};
  const auto& limb = kLimbs[std::uniform_int_distribution<int>(0, 3)(rng)];
  const int width = std::uniform_int_distribution<int>(3, 6)(rng);
  const int start = std::uniform_int_distribution<int>(0, std::max(0, m.frame_count - width))(rng);
  for (int j = start; j < std::min(m.frame_count, start + width); ++j) {
    // Mirror the limb's bones through the horizontal plane at its attachment.
    std::array<Vec3, kNodes> bones;
    for (int i : limb) {
      if (i >= 0) bones[i] = m.at(i, j) - m.at(topo.parent[i], j);
    }
    for (int i : limb) {
      if (i < 0) continue;
      Vec3 b = bones[i];
      b.z() = -b.z();
      m.at(i, j) = m.at(topo.parent[i], j) + b;
    }
  }
}

}  // namespace

Shape default_shape() {
  Shape s;
  s.bone_length.assign(kNodes, 0.0);
  auto& l = s.bone_length;
  l[spine_mid] = 0.25;
  l[spine_shoulder] = 0.25;
  l[neck] = 0.07;
  l[head] = 0.15;
  l[shoulder_left] = l[shoulder_right] = 0.18;
  l[elbow_left] = l[elbow_right] = 0.30;
  l[wrist_left] = l[wrist_right] = 0.26;
  l[hand_left] = l[hand_right] = 0.08;
  l[hand_tip_left] = l[hand_tip_right] = 0.08;
  l[thumb_left] = l[thumb_right] = 0.05;
  l[hip_left] = l[hip_right] = 0.10;
  l[knee_left] = l[knee_right] = 0.44;
  l[ankle_left] = l[ankle_right] = 0.42;
  l[foot_left] = l[foot_right] = 0.14;
  return s;
}

double standing_root_height(const Shape& s) {
  const Pose& rest = rest_directions();
  // Root height that puts the ankles 9 cm above the floor.
  const double drop = -(s.bone_length[hip_left] * rest[hip_left].z() + s.bone_length[knee_left] * rest[knee_left].z() +
                        s.bone_length[ankle_left] * rest[ankle_left].z());
  return drop + 0.09;
}

Goals random_goals(const Workspace& ws, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Goals g;
  for (int a = 0; a < 3; ++a) g.pick[a] = ws.lo[a] + u(rng) * (ws.hi[a] - ws.lo[a]);
  for (int a = 0; a < 3; ++a) g.place[a] = ws.lo[a] + u(rng) * (ws.hi[a] - ws.lo[a]);
  return g;
}

Sequence generate_sequence(const Goals& g, const OracleConfig& cfg) {
  const SkeletonTopology topo = standard_topology();
  cfg.shape.validate(topo);
  if (cfg.noise_sigma < 0) throw std::invalid_argument("oracle: noise_sigma must be >= 0");
  if (cfg.frame_count - cfg.frame_jitter < 2) throw std::invalid_argument("oracle: frame_count too small");

  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 noise_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  const Figure fig(cfg.shape);
  const double stand = standing_root_height(cfg.shape);
  const Vec3 start_root(0, 0, stand);

  const int frames =
      cfg.frame_count + (cfg.frame_jitter > 0 ? std::uniform_int_distribution<int>(-cfg.frame_jitter, cfg.frame_jitter)(rng) : 0);

  int side;
  if (g.pick.x() < -0.15) {
    side = 0;
  } else if (g.pick.x() > 0.15) {
    side = 1;
  } else {
    side = u01(rng) < 0.5 ? 0 : 1;
  }

  CostWeights w;
  w.step = uniform(2.0, 3.5);
  w.pitch = uniform(0.7, 1.3);
  w.crouch = uniform(1.5, 2.5);
  if (u01(rng) < cfg.step_probability) w.preferred_step = uniform(0.1, 0.35);
  const double yaw_factor = uniform(0.5, 0.8);

  auto pick_cfg = solve_reach(fig, stand, start_root, g.pick, side, yaw_factor, cfg.max_root_travel, w);
  if (!pick_cfg) throw WorkspaceError("oracle: pick goal unreachable within maximum root travel");
  CostWeights w_place = w;
  w_place.preferred_step = 0.0;
  const Vec3 pick_floor(pick_cfg->root.x(), pick_cfg->root.y(), stand);
  auto place_cfg = solve_reach(fig, stand, pick_floor, g.place, side, yaw_factor, cfg.max_root_travel, w_place);
  if (!place_cfg) throw WorkspaceError("oracle: place goal unreachable within maximum root travel");

  BodyConfig rest_cfg{start_root, 0.0, 0.0};
  BodyConfig end_cfg{Vec3(place_cfg->root.x(), place_cfg->root.y(), stand), 0.5 * place_cfg->yaw, 0.0};

  const double t_start = uniform(0.02, 0.08);
  const double t_pick = uniform(0.30, 0.40);
  const double t_pick_release = t_pick + uniform(0.04, 0.07);
  const double t_place = uniform(0.66, 0.76);
  const double t_place_release = t_place + uniform(0.04, 0.07);
  const double t_settle = uniform(0.90, 0.98);
  const double elbow_roll = uniform(-0.3, 0.3);
  const double swing_amp = uniform(0.0, 0.15);
  const double swing_freq = uniform(0.5, 1.5);

  auto rest_tip = [&](const BodyConfig& c) {
    FrameSpec f;
    f.body = c;
    f.active_side = -1;
    f.ankles = fig.planted_ankles(c, stand);
    return fig.build(f)[kArms[side].tip];
  };
  const Vec3 tip_start = rest_tip(rest_cfg);
  const Vec3 tip_end = rest_tip(end_cfg);

  struct Key {
    double t;
    BodyConfig body;
    Vec3 tip;
  };
  const std::array<Key, 7> keys = {{{0.0, rest_cfg, tip_start},
                                    {t_start, rest_cfg, tip_start},
                                    {t_pick, *pick_cfg, g.pick},
                                    {t_pick_release, *pick_cfg, g.pick},
                                    {t_place, *place_cfg, g.place},
                                    {t_place_release, *place_cfg, g.place},
                                    {t_settle, end_cfg, tip_end}}};

  Sequence seq;
  seq.goals = g;
  seq.meta.seed = cfg.seed;
  seq.meta.left_hand = side == 0;
  seq.motion = AbsoluteMotion(kNodes, frames, cfg.frame_rate);

  for (int j = 0; j < frames; ++j) {
    const double t = static_cast<double>(j) / (frames - 1);
    FrameSpec f;
    std::size_t k = 0;
    while (k + 1 < keys.size() && t >= keys[k + 1].t) ++k;
    if (k + 1 == keys.size()) {
      f.body = keys.back().body;
      f.tip_target = keys.back().tip;
      f.ankles = fig.planted_ankles(f.body, stand);
    } else {
      const Key& a = keys[k];
      const Key& b = keys[k + 1];
      const double tau = (t - a.t) / (b.t - a.t);
      const double s = min_jerk(tau);
      f.body = blend(a.body, b.body, s);
      f.tip_target = a.tip + s * (b.tip - a.tip);
      const auto from = fig.planted_ankles(a.body, stand);
      const auto to = fig.planted_ankles(b.body, stand);
      for (int leg = 0; leg < 2; ++leg) {
        // Staggered steps: the left foot leads, the right foot follows.
        const double lo = leg == 0 ? 0.0 : 0.4;
        const double local = std::clamp((tau - lo) / 0.6, 0.0, 1.0);
        const double sl = min_jerk(local);
        f.ankles[leg] = from[leg] + sl * (to[leg] - from[leg]);
        const double travel = (to[leg] - from[leg]).head<2>().norm();
        if (travel > 0.03) f.ankles[leg].z() += std::min(0.1, 0.5 * travel) * std::sin(std::numbers::pi * local);
      }
    }
    f.active_side = side;
    f.elbow_roll = elbow_roll;
    f.swing = swing_amp * std::sin(2.0 * std::numbers::pi * swing_freq * t);
    const Pose p = fig.build(f);
    for (int i = 0; i < kNodes; ++i) seq.motion.at(i, j) = p[i];
  }

  if (u01(rng) < cfg.flip_probability) {
    flip_limb(seq.motion, topo, rng);
    seq.meta.flipped = true;
  }
  if (cfg.noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (auto& p : seq.motion.positions)
      for (int a = 0; a < 3; ++a) p[a] += noise(noise_rng);
  }
  return seq;
}

MotionDataset build_dataset(int n, const OracleConfig& cfg, const Workspace& ws, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("build_dataset: n must be >= 1");
  MotionDataset ds;
  ds.shape = cfg.shape;
  ds.workspace = ws;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double band = (ws.hi.z() - ws.lo.z()) / 3.0;
  for (int k = 0; k < n; ++k) {
    const int pick_band = k % 3;
    const int place_band = (k / 3) % 3;
    for (int attempt = 0;; ++attempt) {
      Goals g = random_goals(ws, rng);
      g.pick.z() = ws.lo.z() + band * (pick_band + u(rng));
      g.place.z() = ws.lo.z() + band * (place_band + u(rng));
      OracleConfig c = cfg;
      c.seed = rng();
      try {
        ds.sequences.push_back(generate_sequence(g, c));
        break;
      } catch (const WorkspaceError&) {
        if (attempt > 50) throw;
      }
    }
  }
  return ds;
}

void MotionDataset::validate() const {
  topology.validate();
  shape.validate(topology);
  for (std::size_t k = 0; k < sequences.size(); ++k) {
    const auto& s = sequences[k];
    if (s.motion.node_count != topology.node_count()) {
      throw TopologyError("sequence " + std::to_string(k) + " does not match the dataset topology");
    }
    s.motion.validate();
    if (!workspace.contains(s.goals.pick) || !workspace.contains(s.goals.place)) {
      throw WorkspaceError("sequence " + std::to_string(k) + " has a goal outside the workspace");
    }
  }
}

std::vector<AbsoluteMotion> MotionDataset::motions() const {
  std::vector<AbsoluteMotion> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(s.motion);
  return out;
}

}  // namespace reach
