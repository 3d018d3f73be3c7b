#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gradcheck.hpp"
#include "reach/errors.hpp"
#include "reach/motion.hpp"
#include "reach/synth.hpp"

using namespace reach;
using reach::testing::grad_check;
using reach::testing::random_tensor;
using reach::testing::TensorD;

namespace {

SkeletonTopology chain(int n) {
  SkeletonTopology t;
  for (int i = 0; i < n; ++i) t.parent.push_back(i == 0 ? 0 : i - 1);
  t.hand_indices = {n - 1, n - 1};
  for (int i = 0; i < n; ++i) t.node_names.push_back("n" + std::to_string(i));
  return t;
}

AbsoluteMotion oracle_motion(std::uint64_t seed, int frames = 60) {
  OracleConfig cfg;
  cfg.noise_sigma = 0;
  cfg.flip_probability = 0;
  cfg.frame_count = frames;
  cfg.seed = seed;
  std::mt19937_64 rng(seed);
  return generate_sequence(random_goals(Workspace{}, rng), cfg).motion;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

RelativeMotion random_relative(std::mt19937_64& rng, const SkeletonTopology& topo, int frames) {
  RelativeMotion r;
  r.node_count = topo.node_count();
  r.frame_count = frames;
  r.directions.assign(static_cast<std::size_t>(r.node_count) * frames, Vec3::Zero());
  for (int i = 0; i < r.node_count; ++i) r.frames.push_back(alignment_frame(random_unit(rng)));
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int j = 0; j < frames; ++j)
    for (int i = 0; i < r.node_count; ++i) {
      if (i == topo.root_index) {
        r.at(i, j) = j == 0 ? Vec3::Zero() : Vec3(u(rng), u(rng), u(rng));
      } else {
        r.at(i, j) = random_unit(rng);
      }
    }
  return r;
}

}  // namespace

TEST_CASE("alignment frame construction") {
  CHECK(alignment_frame(Vec3(0, 0, 1)).isApprox(Mat3::Identity()));
  const Mat3 flip = alignment_frame(Vec3(0, 0, -1));
  CHECK((flip * Vec3(0, 0, 1) - Vec3(0, 0, -1)).norm() < 1e-12);
  CHECK((flip * Vec3(0, 1, 0) - Vec3(0, -1, 0)).norm() < 1e-12);  // half turn about x
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    const Vec3 d = random_unit(rng);
    const Mat3 r = alignment_frame(2.5 * d);
    CHECK((r * Vec3(0, 0, 1) - d).norm() < 1e-12);
    CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0));
    // Minimal rotation: the axis z x d is left fixed.
    const Vec3 axis = Vec3(0, 0, 1).cross(d);
    if (axis.norm() > 1e-6) CHECK((r * axis - axis).norm() < 1e-12);
  }
}

TEST_CASE("a_to_r on simple inputs") {
  const auto topo = chain(2);
  Shape s{{0.0, 0.5}};
  AbsoluteMotion m(2, 4);
  for (int j = 0; j < 4; ++j) m.at(1, j) = Vec3(0, 0, 0.5);
  const auto r = a_to_r(m, s, topo);
  for (int j = 0; j < 4; ++j) {
    CHECK((r.at(1, j) - Vec3(0, 0, 1)).norm() < 1e-12);
    CHECK(r.at(0, j).norm() == 0.0);
  }

  AbsoluteMotion bad(2, 2);
  CHECK_THROWS_AS(a_to_r(bad, s, topo), DegenerateInputError);
}

TEST_CASE("a_to_r on a static pose") {
  const auto topo = standard_topology();
  auto m = oracle_motion(4, 10);
  for (int j = 1; j < m.frame_count; ++j)
    for (int i = 0; i < 25; ++i) m.at(i, j) = m.at(i, 0);
  const auto r = a_to_r(m, default_shape(), topo);
  for (int j = 1; j < m.frame_count; ++j)
    for (int i = 0; i < 25; ++i) {
      if (i == 0) {
        CHECK(r.at(i, j).norm() == 0.0);
      } else {
        CHECK((r.at(i, j) - r.at(i, 0)).norm() < 1e-12);
        CHECK((r.at(i, j) - Vec3(0, 0, 1)).norm() < 1e-9);  // frame 0 defines the frames
      }
    }
}

TEST_CASE("r_to_a on simple inputs") {
  const auto topo = chain(3);
  Shape s{{0.0, 0.4, 0.3}};
  RelativeMotion r;
  r.node_count = 3;
  r.frame_count = 4;
  r.frames.assign(3, Mat3::Identity());
  r.directions.assign(12, Vec3(0, 0, 1));
  for (int j = 0; j < 4; ++j) r.at(0, j) = j == 0 ? Vec3::Zero() : Vec3(0.1, 0, 0);
  const auto a = r_to_a(r, s, topo);
  for (int j = 0; j < 4; ++j) {
    CHECK(a.at(0, j).x() == doctest::Approx(0.1 * j));
    CHECK((a.at(1, j) - a.at(0, j) - Vec3(0, 0, 0.4)).norm() < 1e-12);
    CHECK((a.at(2, j) - a.at(1, j) - Vec3(0, 0, 0.3)).norm() < 1e-12);
  }
  for (int j = 0; j < 4; ++j) r.at(0, j) = Vec3::Zero();
  const auto still = r_to_a(r, s, topo);
  for (int j = 0; j < 4; ++j) CHECK(still.at(0, j).norm() == 0.0);
}

TEST_CASE("representation round trips and rigidity") {
  const auto topo = standard_topology();
  const Shape s = default_shape();
  std::mt19937_64 rng(7);
  for (std::uint64_t k = 0; k < 20; ++k) {
    auto m = oracle_motion(100 + k);
    const auto back = r_to_a(a_to_r(m, s, topo), s, topo);
    const Vec3 start = m.at(topo.root_index, 0);
    m.translate(-start);
    CHECK(max_position_error(m, back) < 1e-4);
    CHECK(bone_length_violation(back, s, topo).max < 1e-5);
  }
  for (int k = 0; k < 50; ++k) {
    const auto r = random_relative(rng, topo, 8);
    const auto a = r_to_a(r, s, topo);
    CHECK(bone_length_violation(a, s, topo).max < 1e-5);
    const auto r2 = a_to_r(a, s, topo, r.frames);
    double worst = 0;
    for (std::size_t q = 0; q < r.directions.size(); ++q) worst = std::max(worst, (r.directions[q] - r2.directions[q]).norm());
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("relative representation is translation invariant") {
  const auto topo = standard_topology();
  auto m = oracle_motion(9);
  const auto r1 = a_to_r(m, default_shape(), topo);
  m.translate(Vec3(3, -2, 1));
  const auto r2 = a_to_r(m, default_shape(), topo);
  for (std::size_t q = 0; q < r1.directions.size(); ++q) CHECK((r1.directions[q] - r2.directions[q]).norm() < 1e-12);
  const auto a = r_to_a(r2, default_shape(), topo);
  CHECK(a.at(topo.root_index, 0).norm() == 0.0);
}

TEST_CASE("normalize_directions") {
  TensorD x({6, 2});
  // node 0 (root) keeps its raw values; node 1 is normalized per frame
  x.at(0, 0, 0) = 5;
  for (std::size_t t = 0; t < 2; ++t) x[(3 + 2) * 2 + t] = 2.0;
  x[(3 + 0) * 2 + 1] = 0;
  auto y = x;
  const auto report = normalize_directions(y, 0);
  CHECK(report.degenerate == 0);
  CHECK(y[0] == 5);
  CHECK(y[(3 + 2) * 2 + 0] == doctest::Approx(1.0));

  TensorD zero({6, 1});
  const auto rep0 = normalize_directions(zero, 0);
  CHECK(rep0.degenerate == 1);
  for (double v : zero.values()) CHECK(v == 0.0);

  std::mt19937_64 rng(3);
  for (int k = 0; k < 10; ++k) {
    CHECK(grad_check({random_tensor({2, 9, 4}, rng)}, [](nn::Tape<double>&, const std::vector<nn::Var<double>>& v) {
            return ops::normalize_directions(v[0], 1);
          }) < 1e-4);
  }
}

TEST_CASE("differentiable conversions match the plain ones and finite differences") {
  const auto topo = standard_topology();
  const Shape s = default_shape();
  auto m = oracle_motion(21, 12);
  const auto frames = alignment_frames(m, topo);
  const auto r = a_to_r(m, s, topo);

  auto x = to_channels(m);
  x.reshape({1, 75, 12});
  nn::Tape<double> tape;
  auto rv = ops::absolute_to_relative(tape.constant(x), frames, topo);
  auto plain = to_channels(r);
  for (std::size_t q = 0; q < plain.size(); ++q) CHECK(rv.value()[q] == doctest::Approx(plain[q]).epsilon(1e-12));

  auto back = ops::relative_to_absolute(rv, frames, s, topo);
  auto ref = to_channels(r_to_a(r, s, topo));
  for (std::size_t q = 0; q < ref.size(); ++q) CHECK(back.value()[q] == doctest::Approx(ref[q]).epsilon(1e-12));

  std::mt19937_64 rng(5);
  auto small = resample_time(m, 4);
  auto xs = to_channels(small);
  xs.reshape({1, 75, 4});
  for (int k = 0; k < 10; ++k) {
    TensorD jittered = xs;
    for (auto& v : jittered.values()) v += std::uniform_real_distribution<double>(-0.01, 0.01)(rng);
    CHECK(grad_check({jittered}, [&](nn::Tape<double>&, const std::vector<nn::Var<double>>& v) {
            return ops::absolute_to_relative(v[0], frames, topo);
          }) < 1e-4);
    auto dirs = random_tensor({1, 75, 4}, rng);
    CHECK(grad_check({dirs}, [&](nn::Tape<double>&, const std::vector<nn::Var<double>>& v) {
            return ops::relative_to_absolute(v[0], frames, s, topo);
          }) < 1e-4);
  }
}

TEST_CASE("whitening") {
  TensorD x({2, 4}, std::vector<double>{3, 3, 3, 3, -1, 1, -1, 1});
  auto [w, stats] = whiten(x);
  for (int t = 0; t < 4; ++t) CHECK(w[t] == 0.0);
  CHECK(stats.std[0] == kStdFloor);
  CHECK(w[4] == doctest::Approx(-1));
  CHECK(w[5] == doctest::Approx(1));
  CHECK(stats.mean[1] == doctest::Approx(0));
  CHECK(stats.std[1] == doctest::Approx(1));

  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    auto r = random_tensor({5, 32}, rng, -3, 7);
    auto [wr, st] = whiten(r);
    for (std::size_t c = 0; c < 5; ++c) {
      double mean = 0, var = 0;
      for (std::size_t t = 0; t < 32; ++t) mean += wr[c * 32 + t] / 32;
      for (std::size_t t = 0; t < 32; ++t) var += (wr[c * 32 + t] - mean) * (wr[c * 32 + t] - mean) / 32;
      CHECK(std::abs(mean) < 1e-12);
      CHECK(var == doctest::Approx(1.0));
    }
    auto back = dewhiten(wr, st);
    for (std::size_t q = 0; q < r.size(); ++q) CHECK(std::abs(back[q] - r[q]) < 1e-5);
  }

  // pooled statistics equal the statistics of the concatenation
  std::vector<TensorD> parts{random_tensor({3, 10}, rng), random_tensor({3, 6}, rng)};
  auto pooled = whiten_stats(parts);
  TensorD joined({3, 16});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < 10; ++t) joined[c * 16 + t] = parts[0][c * 10 + t];
    for (std::size_t t = 0; t < 6; ++t) joined[c * 16 + 10 + t] = parts[1][c * 6 + t];
  }
  auto single = whiten_stats(joined);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(pooled.mean[c] == doctest::Approx(single.mean[c]));
    CHECK(pooled.std[c] == doctest::Approx(single.std[c]));
  }
}

TEST_CASE("resample_time") {
  AbsoluteMotion lin(1, 100);
  for (int j = 0; j < 100; ++j) lin.at(0, j) = Vec3(0.5 * j, -j, 2.0);
  const auto r = resample_time(lin, 32);
  CHECK(r.frame_count == 32);
  CHECK(r.at(0, 0) == lin.at(0, 0));
  CHECK(r.at(0, 31) == lin.at(0, 99));
  for (int j = 0; j < 32; ++j) {
    const double src = j * 99.0 / 31.0;
    CHECK(r.at(0, j).x() == doctest::Approx(0.5 * src));
    CHECK(r.at(0, j).y() == doctest::Approx(-src));
  }
  CHECK(max_position_error(resample_time(lin, 100), lin) == 0.0);

  AbsoluteMotion wave(1, 100);
  auto f = [](double u) { return std::sin(2 * std::numbers::pi * u); };
  for (int j = 0; j < 100; ++j) wave.at(0, j) = Vec3(f(j / 99.0), 0, 0);
  const auto down = resample_time(wave, 32);
  const auto up = resample_time(down, 100);
  // Direct evaluation: piecewise-linear interpolation of the 100 samples,
  // sampled at 32 points, then interpolated back.
  auto interp = [](const std::vector<double>& v, double u) {
    const double pos = u * (v.size() - 1);
    const auto k = std::min(static_cast<std::size_t>(pos), v.size() - 2);
    const double a = pos - k;
    return (1 - a) * v[k] + a * v[k + 1];
  };
  std::vector<double> fine(100), coarse(32);
  for (int j = 0; j < 100; ++j) fine[j] = f(j / 99.0);
  for (int k = 0; k < 32; ++k) coarse[k] = interp(fine, k / 31.0);
  double worst = 0;
  for (int j = 0; j < 100; ++j) {
    const double u = j / 99.0;
    CHECK(up.at(0, j).x() == doctest::Approx(interp(coarse, u)).epsilon(1e-9));
    worst = std::max(worst, std::abs(up.at(0, j).x() - f(u)));
  }
  const double h32 = 1.0 / 31.0, h100 = 1.0 / 99.0;
  CHECK(worst <= std::pow(2 * std::numbers::pi, 2) * (h32 * h32 + h100 * h100) / 8);
}

TEST_CASE("resample_rigid keeps bone lengths") {
  const auto topo = standard_topology();
  const auto shape = default_shape();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto m = oracle_motion(seed, 100);
    const auto linear = resample_time(m, 32);
    const auto rigid = resample_rigid(m, 32, shape, topo);
    CHECK(rigid.frame_count == 32);
    CHECK(rigid.frame_rate == doctest::Approx(linear.frame_rate));
    CHECK(bone_length_violation(rigid, shape, topo).max < 1e-9);
    CHECK(bone_length_violation(linear, shape, topo).max > 1e-4);
    for (int i = 0; i < 25; ++i) {
      CHECK((rigid.at(i, 0) - m.at(i, 0)).norm() < 1e-9);
      CHECK((rigid.at(i, 31) - m.at(i, 99)).norm() < 1e-9);
    }
    CHECK(max_position_error(rigid, linear) < 0.2);
  }
  // A rigidly translating pose resamples exactly like the linear path.
  const auto c = chain(3);
  Shape s;
  s.bone_length = {0, 1, 1};
  AbsoluteMotion t(3, 5);
  for (int j = 0; j < 5; ++j) {
    t.at(0, j) = Vec3(0.3 * j, 0, 0);
    t.at(1, j) = t.at(0, j) + Vec3(0, 0, 1);
    t.at(2, j) = t.at(1, j) + Vec3(0, 1, 0);
  }
  CHECK(max_position_error(resample_rigid(t, 9, s, c), resample_time(t, 9)) < 1e-12);
  AbsoluteMotion bad = t;
  bad.at(2, 1) = bad.at(1, 1);
  CHECK_THROWS_AS(resample_rigid(bad, 9, s, c), DegenerateInputError);
}

TEST_CASE("motion validation") {
  AbsoluteMotion one(2, 1);
  CHECK_THROWS_AS(one.validate(), DataError);
  AbsoluteMotion nan(2, 3);
  nan.at(1, 1).x() = std::nan("");
  CHECK_THROWS_AS(nan.validate(), DataError);
}
