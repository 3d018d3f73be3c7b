#include "reach/motion.hpp"

#include <algorithm>
#include <cmath>

#include "reach/errors.hpp"

namespace reach {

namespace {

Vec3 unit_or_throw(const Vec3& v) {
  const double n = v.norm();
  if (n < 1e-12) throw DegenerateInputError("resample_rigid: zero-length bone direction");
  return v / n;
}

}  // namespace

void AbsoluteMotion::validate() const {
  if (frame_count < 2) throw DataError("motion needs at least 2 frames, has " + std::to_string(frame_count));
  if (positions.size() != static_cast<std::size_t>(node_count) * frame_count) {
    throw DataError("motion position count does not match nodes x frames");
  }
  for (const auto& p : positions) {
    if (!p.allFinite()) throw DataError("motion contains non-finite positions");
  }
}

void AbsoluteMotion::translate(const Vec3& offset) {
  for (auto& p : positions) p += offset;
}

Mat3 alignment_frame(const Vec3& direction) {
  const Vec3 d = direction.normalized();
  const Vec3 z = Vec3::UnitZ();
  const double c = z.dot(d);
  if (c > 1.0 - 1e-12) return Mat3::Identity();
  if (c < -1.0 + 1e-12) return Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();
  const Vec3 axis = z.cross(d).normalized();
  return Eigen::AngleAxisd(std::acos(std::clamp(c, -1.0, 1.0)), axis).toRotationMatrix();
}

std::vector<Mat3> alignment_frames(const AbsoluteMotion& m, const SkeletonTopology& topo) {
  std::vector<Mat3> frames(topo.node_count(), Mat3::Identity());
  for (int i = 0; i < topo.node_count(); ++i) {
    if (topo.is_root(i)) continue;
    const Vec3 bone = m.at(i, 0) - m.at(topo.parent[i], 0);
    if (bone.norm() < 1e-12) {
      throw DegenerateInputError("node " + std::to_string(i) + " coincides with its parent at frame 0");
    }
    frames[i] = alignment_frame(bone);
  }
  return frames;
}

namespace {

void check_compatible(const AbsoluteMotion& m, const Shape& s, const SkeletonTopology& topo) {
  if (m.node_count != topo.node_count()) {
    throw TopologyError("motion has " + std::to_string(m.node_count) + " nodes, topology " +
                        std::to_string(topo.node_count()));
  }
  s.validate(topo);
  m.validate();
}

}  // namespace

RelativeMotion a_to_r(const AbsoluteMotion& m, const Shape& s, const SkeletonTopology& topo) {
  check_compatible(m, s, topo);
  return a_to_r(m, s, topo, alignment_frames(m, topo));
}

RelativeMotion a_to_r(const AbsoluteMotion& m, const Shape& s, const SkeletonTopology& topo, std::vector<Mat3> frames) {
  check_compatible(m, s, topo);
  if (static_cast<int>(frames.size()) != topo.node_count()) throw ShapeError("a_to_r: one frame per node required");
  RelativeMotion r;
  r.node_count = m.node_count;
  r.frame_count = m.frame_count;
  r.frame_rate = m.frame_rate;
  r.directions.assign(m.positions.size(), Vec3::Zero());
  r.frames = std::move(frames);
  const int root = topo.root_index;
  for (int j = 0; j < m.frame_count; ++j) {
    r.at(root, j) = j == 0 ? Vec3::Zero() : Vec3(m.at(root, j) - m.at(root, j - 1));
    for (int i = 0; i < m.node_count; ++i) {
      if (i == root) continue;
      const Vec3 bone = m.at(i, j) - m.at(topo.parent[i], j);
      const double len = bone.norm();
      if (len < 1e-12) {
        throw DegenerateInputError("a_to_r: node " + std::to_string(i) + " coincides with its parent at frame " +
                                   std::to_string(j));
      }
      r.at(i, j) = r.frames[i].transpose() * (bone / len);
    }
  }
  return r;
}

AbsoluteMotion r_to_a(const RelativeMotion& r, const Shape& s, const SkeletonTopology& topo) {
  if (r.node_count != topo.node_count()) throw TopologyError("r_to_a: node count does not match topology");
  if (static_cast<int>(r.frames.size()) != r.node_count) throw ShapeError("r_to_a: one frame per node required");
  s.validate(topo);
  AbsoluteMotion m(r.node_count, r.frame_count, r.frame_rate);
  const int root = topo.root_index;
  const auto order = topo.parent_first_order();
  Vec3 root_pos = Vec3::Zero();
  for (int j = 0; j < r.frame_count; ++j) {
    if (j > 0) root_pos += r.at(root, j);
    m.at(root, j) = root_pos;
    for (int i : order) {
      if (i == root) continue;
      const Vec3& w = r.at(i, j);
      const double n = std::max(w.norm(), kNormFloor);
      m.at(i, j) = m.at(topo.parent[i], j) + s.bone_length[i] * (r.frames[i] * (w / n));
    }
  }
  return m;
}

NormalizeReport normalize_directions(nn::Tensor<double>& raw, int root_index) {
  const bool batched = raw.rank() == 3;
  if (raw.rank() != 2 && !batched) throw ShapeError("normalize_directions: expected [3N x T] or [B x 3N x T]");
  const std::size_t batch = batched ? raw.dim(0) : 1;
  const std::size_t channels = raw.dim(batched ? 1 : 0), frames = raw.dim(batched ? 2 : 1);
  if (channels % 3 != 0) throw ShapeError("normalize_directions: channel count not a multiple of 3");
  NormalizeReport report;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t node = 0; node < channels / 3; ++node) {
      if (static_cast<int>(node) == root_index) continue;
      for (std::size_t t = 0; t < frames; ++t) {
        double* v[3];
        for (std::size_t a = 0; a < 3; ++a) v[a] = raw.data() + (b * channels + 3 * node + a) * frames + t;
        const double n = std::sqrt(*v[0] * *v[0] + *v[1] * *v[1] + *v[2] * *v[2]);
        if (n < kNormFloor) ++report.degenerate;
        const double d = std::max(n, kNormFloor);
        for (auto* p : v) *p /= d;
      }
    }
  return report;
}

namespace {

template <typename Points>
nn::Tensor<double> channels_of(const Points& pts, int nodes, int frames) {
  nn::Tensor<double> x({static_cast<std::size_t>(3 * nodes), static_cast<std::size_t>(frames)});
  for (int j = 0; j < frames; ++j)
    for (int i = 0; i < nodes; ++i)
      for (int a = 0; a < 3; ++a) x[(3 * i + a) * frames + j] = pts[static_cast<std::size_t>(j) * nodes + i][a];
  return x;
}

template <typename Points>
void fill_from_channels(const nn::Tensor<double>& x, Points& pts, int nodes, int frames) {
  for (int j = 0; j < frames; ++j)
    for (int i = 0; i < nodes; ++i)
      for (int a = 0; a < 3; ++a) pts[static_cast<std::size_t>(j) * nodes + i][a] = x[(3 * i + a) * frames + j];
}

void check_channel_tensor(const nn::Tensor<double>& x) {
  if (x.rank() != 2 || x.dim(0) % 3 != 0) throw ShapeError("expected a [3N x T] channel tensor, got " + nn::to_string(x.shape()));
}

void check_matrix(const nn::Tensor<double>& x) {
  if (x.rank() != 2) throw ShapeError("expected a [C x T] tensor, got " + nn::to_string(x.shape()));
}

}  // namespace

nn::Tensor<double> to_channels(const AbsoluteMotion& m) { return channels_of(m.positions, m.node_count, m.frame_count); }

nn::Tensor<double> to_channels(const RelativeMotion& r) {
  return channels_of(r.directions, r.node_count, r.frame_count);
}

AbsoluteMotion absolute_from_channels(const nn::Tensor<double>& x, double frame_rate) {
  check_channel_tensor(x);
  AbsoluteMotion m(static_cast<int>(x.dim(0) / 3), static_cast<int>(x.dim(1)), frame_rate);
  fill_from_channels(x, m.positions, m.node_count, m.frame_count);
  return m;
}

RelativeMotion relative_from_channels(const nn::Tensor<double>& x, std::vector<Mat3> frames, double frame_rate) {
  check_channel_tensor(x);
  RelativeMotion r;
  r.node_count = static_cast<int>(x.dim(0) / 3);
  r.frame_count = static_cast<int>(x.dim(1));
  r.frame_rate = frame_rate;
  r.directions.assign(static_cast<std::size_t>(r.node_count) * r.frame_count, Vec3::Zero());
  fill_from_channels(x, r.directions, r.node_count, r.frame_count);
  if (static_cast<int>(frames.size()) != r.node_count) throw ShapeError("relative_from_channels: one frame per node");
  r.frames = std::move(frames);
  return r;
}

WhitenStats whiten_stats(const nn::Tensor<double>& x) { return whiten_stats(std::span<const nn::Tensor<double>>(&x, 1)); }

WhitenStats whiten_stats(std::span<const nn::Tensor<double>> sequences) {
  if (sequences.empty()) throw DataError("whiten_stats: no sequences");
  const std::size_t channels = sequences.front().dim(0);
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
  std::size_t count = 0;
  for (const auto& x : sequences) {
    check_matrix(x);
    if (x.dim(0) != channels) throw ShapeError("whiten_stats: channel counts differ");
    if (x.dim(1) < 2) throw DataError("whiten_stats: at least 2 frames required");
    const std::size_t frames = x.dim(1);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < frames; ++t) sum[c] += x[c * frames + t];
    count += frames;
  }
  WhitenStats st;
  st.mean.resize(channels);
  st.std.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) st.mean[c] = sum[c] / static_cast<double>(count);
  // Second pass keeps the variance accurate for channels with a large mean.
  for (const auto& x : sequences) {
    const std::size_t frames = x.dim(1);
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < frames; ++t) {
        const double d = x[c * frames + t] - st.mean[c];
        sq[c] += d * d;
      }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    st.std[c] = std::max(std::sqrt(sq[c] / static_cast<double>(count)), kStdFloor);
  }
  return st;
}

std::pair<nn::Tensor<double>, WhitenStats> whiten(const nn::Tensor<double>& x) {
  auto st = whiten_stats(x);
  return {whiten(x, st), std::move(st)};
}

nn::Tensor<double> whiten(const nn::Tensor<double>& x, const WhitenStats& stats) {
  check_matrix(x);
  if (stats.mean.size() != x.dim(0)) throw ShapeError("whiten: stats do not match channel count");
  nn::Tensor<double> y = x;
  const std::size_t frames = x.dim(1);
  for (std::size_t c = 0; c < x.dim(0); ++c)
    for (std::size_t t = 0; t < frames; ++t) y[c * frames + t] = (x[c * frames + t] - stats.mean[c]) / stats.std[c];
  return y;
}

nn::Tensor<double> dewhiten(const nn::Tensor<double>& x, const WhitenStats& stats) {
  check_matrix(x);
  if (stats.mean.size() != x.dim(0)) throw ShapeError("dewhiten: stats do not match channel count");
  nn::Tensor<double> y = x;
  const std::size_t frames = x.dim(1);
  for (std::size_t c = 0; c < x.dim(0); ++c)
    for (std::size_t t = 0; t < frames; ++t) y[c * frames + t] = x[c * frames + t] * stats.std[c] + stats.mean[c];
  return y;
}

AbsoluteMotion resample_time(const AbsoluteMotion& m, int target_frames) {
  if (target_frames < 2) throw DataError("resample_time: target must be at least 2 frames");
  m.validate();
  if (target_frames == m.frame_count) return m;
  const double duration = (m.frame_count - 1) / m.frame_rate;
  AbsoluteMotion out(m.node_count, target_frames, (target_frames - 1) / duration);
  for (int k = 0; k < target_frames; ++k) {
    int lo;
    double frac;
    if (k == target_frames - 1) {
      lo = m.frame_count - 2;
      frac = 1.0;
    } else {
      const double src = static_cast<double>(k) * (m.frame_count - 1) / (target_frames - 1);
      lo = std::min(static_cast<int>(src), m.frame_count - 2);
      frac = src - lo;
    }
    for (int i = 0; i < m.node_count; ++i) {
      out.at(i, k) = frac == 1.0 ? m.at(i, lo + 1) : Vec3((1.0 - frac) * m.at(i, lo) + frac * m.at(i, lo + 1));
    }
  }
  return out;
}

AbsoluteMotion resample_rigid(const AbsoluteMotion& m, int target_frames, const Shape& s,
                              const SkeletonTopology& topo) {
  if (m.node_count != topo.node_count()) throw TopologyError("resample_rigid: node count differs from topology");
  s.validate(topo);
  AbsoluteMotion dirs = m;
  for (int j = 0; j < m.frame_count; ++j)
    for (int i = 0; i < m.node_count; ++i) {
      if (!topo.is_root(i)) dirs.at(i, j) = unit_or_throw(m.at(i, j) - m.at(topo.parent[i], j));
    }
  dirs = resample_time(dirs, target_frames);
  AbsoluteMotion out(m.node_count, dirs.frame_count, dirs.frame_rate);
  const auto order = topo.parent_first_order();
  for (int j = 0; j < out.frame_count; ++j)
    for (int i : order) {
      out.at(i, j) = topo.is_root(i) ? dirs.at(i, j)
                                     : Vec3(out.at(topo.parent[i], j) + s.bone_length[i] * unit_or_throw(dirs.at(i, j)));
    }
  return out;
}

RigidityStats bone_length_violation(const AbsoluteMotion& m, const Shape& s, const SkeletonTopology& topo) {
  RigidityStats st;
  std::size_t n = 0;
  for (int j = 0; j < m.frame_count; ++j)
    for (int i = 0; i < m.node_count; ++i) {
      if (topo.is_root(i)) continue;
      const double dev = std::abs((m.at(i, j) - m.at(topo.parent[i], j)).norm() - s.bone_length[i]);
      st.max = std::max(st.max, dev);
      st.mean += dev;
      ++n;
    }
  if (n) st.mean /= static_cast<double>(n);
  return st;
}

double max_position_error(const AbsoluteMotion& a, const AbsoluteMotion& b) {
  if (a.positions.size() != b.positions.size()) throw ShapeError("max_position_error: motions differ in size");
  double e = 0;
  for (std::size_t k = 0; k < a.positions.size(); ++k) e = std::max(e, (a.positions[k] - b.positions[k]).norm());
  return e;
}

namespace ops {

namespace {

template <typename T>
void require_motion_var(nn::Var<T> x, int nodes, const char* op) {
  const auto& s = x.shape();
  if (s.size() != 3 || s[1] != static_cast<std::size_t>(3 * nodes)) {
    throw ShapeError(std::string(op) + ": expected [B x " + std::to_string(3 * nodes) + " x T], got " + nn::to_string(s));
  }
}

}  // namespace

template <typename T>
nn::Var<T> normalize_directions(nn::Var<T> x, int root_index, T eps) {
  const auto& s = x.shape();
  if (s.size() != 3 || s[1] % 3 != 0) throw ShapeError("normalize_directions: expected [B x 3N x T]");
  const std::size_t batch = s[0], channels = s[1], frames = s[2];
  nn::Tensor<T> y = x.value();
  auto idx = [=](std::size_t b, std::size_t node, std::size_t a, std::size_t t) {
    return (b * channels + 3 * node + a) * frames + t;
  };
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t node = 0; node < channels / 3; ++node) {
      if (static_cast<int>(node) == root_index) continue;
      for (std::size_t t = 0; t < frames; ++t) {
        T n2 = 0;
        for (std::size_t a = 0; a < 3; ++a) n2 += y[idx(b, node, a, t)] * y[idx(b, node, a, t)];
        const T d = std::max(std::sqrt(n2), eps);
        for (std::size_t a = 0; a < 3; ++a) y[idx(b, node, a, t)] /= d;
      }
    }
  const auto ix = x.id;
  return x.tape->record(std::move(y), {x}, [=](nn::Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    const auto& xv = tape.value(ix);
    const auto& yv = tape.value(self);
    auto dx = tape.grad_buffer(ix);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t node = 0; node < channels / 3; ++node)
        for (std::size_t t = 0; t < frames; ++t) {
          if (static_cast<int>(node) == root_index) {
            for (std::size_t a = 0; a < 3; ++a) dx[idx(b, node, a, t)] += g[idx(b, node, a, t)];
            continue;
          }
          T n2 = 0;
          for (std::size_t a = 0; a < 3; ++a) n2 += xv[idx(b, node, a, t)] * xv[idx(b, node, a, t)];
          const T n = std::sqrt(n2);
          if (n <= eps) {
            for (std::size_t a = 0; a < 3; ++a) dx[idx(b, node, a, t)] += g[idx(b, node, a, t)] / eps;
            continue;
          }
          // d(x/|x|) = (I - y y^T) / |x|
          T gy = 0;
          for (std::size_t a = 0; a < 3; ++a) gy += g[idx(b, node, a, t)] * yv[idx(b, node, a, t)];
          for (std::size_t a = 0; a < 3; ++a) {
            dx[idx(b, node, a, t)] += (g[idx(b, node, a, t)] - gy * yv[idx(b, node, a, t)]) / n;
          }
        }
  });
}

template <typename T>
nn::Var<T> relative_to_absolute(nn::Var<T> r, std::span<const Mat3> frames, const Shape& s,
                                const SkeletonTopology& topo) {
  const int nodes = topo.node_count();
  require_motion_var(r, nodes, "relative_to_absolute");
  if (static_cast<int>(frames.size()) != nodes) throw ShapeError("relative_to_absolute: one frame per node required");
  s.validate(topo);
  const std::size_t batch = r.dim(0), channels = r.dim(1), len = r.dim(2);
  const int root = topo.root_index;
  const auto order = topo.parent_first_order();
  std::vector<Mat3> rot(frames.begin(), frames.end());
  std::vector<double> bone = s.bone_length;
  std::vector<int> parent = topo.parent;

  auto idx = [=](std::size_t b, int node, int a, std::size_t t) {
    return (b * channels + 3 * static_cast<std::size_t>(node) + a) * len + t;
  };
  const auto& rv = r.value();
  nn::Tensor<T> p(r.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    Vec3 acc = Vec3::Zero();
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0)
        for (int a = 0; a < 3; ++a) acc[a] += rv[idx(b, root, a, t)];
      for (int a = 0; a < 3; ++a) p[idx(b, root, a, t)] = static_cast<T>(acc[a]);
      for (int i : order) {
        if (i == root) continue;
        Vec3 w(rv[idx(b, i, 0, t)], rv[idx(b, i, 1, t)], rv[idx(b, i, 2, t)]);
        const Vec3 world = bone[i] * (rot[i] * w);
        for (int a = 0; a < 3; ++a) p[idx(b, i, a, t)] = p[idx(b, parent[i], a, t)] + static_cast<T>(world[a]);
      }
    }
  }
  const auto ir = r.id;
  return r.tape->record(std::move(p), {r}, [=](nn::Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    std::vector<T> gp(g.begin(), g.end());
    auto dr = tape.grad_buffer(ir);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < len; ++t)
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
          const int i = *it;
          if (i == root) continue;
          const Vec3 gi(gp[idx(b, i, 0, t)], gp[idx(b, i, 1, t)], gp[idx(b, i, 2, t)]);
          const Vec3 gw = bone[i] * (rot[i].transpose() * gi);
          for (int a = 0; a < 3; ++a) {
            dr[idx(b, i, a, t)] += static_cast<T>(gw[a]);
            gp[idx(b, parent[i], a, t)] += gp[idx(b, i, a, t)];
          }
        }
    // Root position at t is the sum of differentials 1..t.
    for (std::size_t b = 0; b < batch; ++b)
      for (int a = 0; a < 3; ++a) {
        T suffix = 0;
        for (std::size_t t = len; t-- > 1;) {
          suffix += gp[idx(b, root, a, t)];
          dr[idx(b, root, a, t)] += suffix;
        }
      }
  });
}

template <typename T>
nn::Var<T> absolute_to_relative(nn::Var<T> p, std::span<const Mat3> frames, const SkeletonTopology& topo) {
  const int nodes = topo.node_count();
  require_motion_var(p, nodes, "absolute_to_relative");
  if (static_cast<int>(frames.size()) != nodes) throw ShapeError("absolute_to_relative: one frame per node required");
  const std::size_t batch = p.dim(0), channels = p.dim(1), len = p.dim(2);
  const int root = topo.root_index;
  std::vector<Mat3> rot(frames.begin(), frames.end());
  std::vector<int> parent = topo.parent;
  auto idx = [=](std::size_t b, int node, int a, std::size_t t) {
    return (b * channels + 3 * static_cast<std::size_t>(node) + a) * len + t;
  };
  auto bone_at = [=](const nn::Tensor<T>& v, std::size_t b, int i, std::size_t t) {
    Vec3 d;
    for (int a = 0; a < 3; ++a) d[a] = v[idx(b, i, a, t)] - v[idx(b, parent[i], a, t)];
    return d;
  };
  const auto& pv = p.value();
  nn::Tensor<T> out(p.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < len; ++t) {
      for (int a = 0; a < 3; ++a) out[idx(b, root, a, t)] = t == 0 ? T{0} : pv[idx(b, root, a, t)] - pv[idx(b, root, a, t - 1)];
      for (int i = 0; i < nodes; ++i) {
        if (i == root) continue;
        const Vec3 d = bone_at(pv, b, i, t);
        const double n = d.norm();
        if (n < 1e-12) throw DegenerateInputError("absolute_to_relative: zero-length bone");
        const Vec3 w = rot[i].transpose() * (d / n);
        for (int a = 0; a < 3; ++a) out[idx(b, i, a, t)] = static_cast<T>(w[a]);
      }
    }
  const auto ip = p.id;
  return p.tape->record(std::move(out), {p}, [=](nn::Tape<T>& tape, std::uint32_t self) {
    auto g = tape.out_grad(self);
    const auto& pv = tape.value(ip);
    auto dp = tape.grad_buffer(ip);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < len; ++t) {
        if (t > 0)
          for (int a = 0; a < 3; ++a) {
            dp[idx(b, root, a, t)] += g[idx(b, root, a, t)];
            dp[idx(b, root, a, t - 1)] -= g[idx(b, root, a, t)];
          }
        for (int i = 0; i < nodes; ++i) {
          if (i == root) continue;
          const Vec3 d = bone_at(pv, b, i, t);
          const double n = d.norm();
          const Vec3 u = d / n;
          const Vec3 gw(g[idx(b, i, 0, t)], g[idx(b, i, 1, t)], g[idx(b, i, 2, t)]);
          const Vec3 gu = rot[i] * gw;
          const Vec3 gd = (gu - u * u.dot(gu)) / n;
          for (int a = 0; a < 3; ++a) {
            dp[idx(b, i, a, t)] += static_cast<T>(gd[a]);
            dp[idx(b, parent[i], a, t)] -= static_cast<T>(gd[a]);
          }
        }
      }
  });
}

template nn::Var<float> normalize_directions(nn::Var<float>, int, float);
template nn::Var<double> normalize_directions(nn::Var<double>, int, double);
template nn::Var<float> relative_to_absolute(nn::Var<float>, std::span<const Mat3>, const Shape&, const SkeletonTopology&);
template nn::Var<double> relative_to_absolute(nn::Var<double>, std::span<const Mat3>, const Shape&,
                                              const SkeletonTopology&);
template nn::Var<float> absolute_to_relative(nn::Var<float>, std::span<const Mat3>, const SkeletonTopology&);
template nn::Var<double> absolute_to_relative(nn::Var<double>, std::span<const Mat3>, const SkeletonTopology&);

}  // namespace ops

}  // namespace reach
