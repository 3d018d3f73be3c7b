#include "reach/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "reach/errors.hpp"

namespace reach {

using json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what + " must be positive");
  };
  positive(batch_size > 0, "batch_size");
  positive(critic_iters_per_gen > 0, "critic_iters_per_gen");
  positive(weight_clip > 0, "weight_clip");
  positive(gp_lambda > 0, "gp_lambda");
  if (!(generator_ema >= 0 && generator_ema < 1)) throw std::invalid_argument("train config: generator_ema must be in [0, 1)");
  positive(learning_rate > 0, "learning_rate");
  positive(rmsprop_decay > 0 && rmsprop_decay < 1, "rmsprop_decay (below 1)");
  positive(epochs > 0, "epochs");
  positive(frames >= 2, "frames");
  if (iters_per_epoch < 0 || probe_goals < 0 || probe_samples < 0) {
    throw std::invalid_argument("train config: iteration and probe counts must be non-negative");
  }
}

nn::Tensor<double> encode_motion(const AbsoluteMotion& m, const DecodeContext& ctx) {
  if (ctx.flags.motion_space == MotionSpace::absolute) return to_channels(m);
  auto x = to_channels(ctx.frames.empty() ? a_to_r(m, ctx.shape, ctx.topology)
                                           : a_to_r(m, ctx.shape, ctx.topology, ctx.frames));
  if (ctx.flags.root_mode == RootMode::absolute) {
    const auto frames = static_cast<std::size_t>(m.frame_count);
    const auto root = static_cast<std::size_t>(ctx.topology.root_index);
    for (std::size_t j = 0; j < frames; ++j)
      for (std::size_t a = 0; a < 3; ++a) x[(3 * root + a) * frames + j] = m.at(ctx.topology.root_index, static_cast<int>(j))[a];
  }
  return x;
}

AbsoluteMotion decode_motion(const nn::Tensor<double>& channels, const DecodeContext& ctx) {
  if (ctx.flags.motion_space == MotionSpace::absolute) return absolute_from_channels(channels, ctx.frame_rate);
  nn::Tensor<double> x = channels;
  const std::size_t frames = x.dim(1);
  const auto root = static_cast<std::size_t>(ctx.topology.root_index);
  Vec3 start = ctx.anchor;
  if (ctx.flags.root_mode == RootMode::absolute) {
    // Absolute root positions become differentials anchored at their first frame.
    for (std::size_t a = 0; a < 3; ++a) {
      double* row = x.data() + (3 * root + a) * frames;
      start[a] = row[0];
      for (std::size_t j = frames - 1; j > 0; --j) row[j] -= row[j - 1];
      row[0] = 0;
    }
  }
  auto r = relative_from_channels(x, ctx.frames, ctx.frame_rate);
  auto m = r_to_a(r, ctx.shape, ctx.topology);
  m.translate(start);
  m.frame_rate = ctx.frame_rate;
  return m;
}

// Model bundle.

TrainedModel TrainedModel::untrained(const Architecture& arch, const AblationFlags& flags, const Workspace& ws,
                                     WhitenStats stats, DecodeContext ctx, std::uint64_t seed) {
  TrainedModel m;
  m.arch = arch;
  m.workspace = ws;
  m.stats = std::move(stats);
  m.decode = std::move(ctx);
  m.decode.flags = flags;
  std::mt19937_64 rng(seed);
  m.generator = std::make_unique<Generator<float>>(arch, flags, rng);
  if (!m.stats.std.empty()) {
    m.generator->set_output_affine(std::vector<float>(m.stats.std.begin(), m.stats.std.end()),
                                   std::vector<float>(m.stats.mean.begin(), m.stats.mean.end()));
  }
  m.discriminator = std::make_unique<Discriminator<float>>(arch, flags, rng);
  return m;
}

nn::Tensor<float> TrainedModel::sample_channels(const Goals& g, int n, std::mt19937_64& rng) const {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  const auto scaled = scale_goals(g, workspace);
  const auto batch = static_cast<std::size_t>(n);
  nn::Tensor<float> z({batch, arch.latent});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto code = sample_latent(rng);
    for (std::size_t k = 0; k < arch.latent; ++k) z[b * arch.latent + k] = static_cast<float>(code.z[k]);
  }
  nn::Tensor<float> goals({batch, arch.goal_dims});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t k = 0; k < 6; ++k) goals[b * 6 + k] = static_cast<float>(scaled[k]);
  nn::Tape<float> tape;
  auto out = generator->forward(tape, tape.constant(std::move(z)), tape.constant(std::move(goals)), Binding::frozen);
  return out.value();
}

std::vector<AbsoluteMotion> TrainedModel::sample(const Goals& g, int n, std::mt19937_64& rng) const {
  const auto y = sample_channels(g, n, rng);
  const std::size_t c = y.dim(1), t = y.dim(2);
  std::vector<AbsoluteMotion> out;
  for (int b = 0; b < n; ++b) {
    nn::Tensor<double> x({c, t});
    for (std::size_t q = 0; q < c * t; ++q) x[q] = y[static_cast<std::size_t>(b) * c * t + q];
    out.push_back(decode_motion(x, decode));
  }
  return out;
}

namespace {

constexpr const char* kCheckpointFile = "model.rgck";
constexpr const char* kManifestFile = "model.json";

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 json_vec(const json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

const char* upsample_name(nn::UpsampleMode m) { return m == nn::UpsampleMode::linear ? "linear" : "nearest"; }

}  // namespace

void TrainedModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<const nn::Parameter<float>*> params;
  for (auto* p : generator->parameters()) params.push_back(p);
  for (auto* p : discriminator->parameters()) params.push_back(p);
  {
    std::ofstream os(dir / kCheckpointFile, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + (dir / kCheckpointFile).string());
    nn::write_parameters(os, params);
  }
  json j;
  j["format"] = "reachgen-model";
  j["version"] = 1;
  j["flags"] = {{"coord_encoding", decode.flags.coord_encoding},
                {"root_mode", decode.flags.root_mode == RootMode::differential ? "differential" : "absolute"},
                {"motion_space", decode.flags.motion_space == MotionSpace::relative ? "relative" : "absolute"}};
  j["architecture"] = {{"latent", arch.latent},
                       {"goal_dims", arch.goal_dims},
                       {"nodes", arch.nodes},
                       {"frames", arch.frames},
                       {"root_index", arch.root_index},
                       {"gen_base_frames", arch.gen_base_frames},
                       {"gen_channels", arch.gen_channels},
                       {"disc_channels", arch.disc_channels},
                       {"disc_strides", arch.disc_strides},
                       {"disc_hidden", arch.disc_hidden},
                       {"kernel", arch.kernel},
                       {"leaky_slope", arch.leaky_slope},
                       {"upsample", upsample_name(arch.upsample)},
                       {"coord_octaves", arch.coord.octaves},
                       {"coord_ramp", arch.coord.include_ramp},
                       {"standardize_latent", arch.standardize_latent}};
  j["workspace"] = {{"lo", vec_json(workspace.lo)}, {"hi", vec_json(workspace.hi)}};
  j["whitening"] = {{"scope", "global per-channel"}, {"mean", stats.mean}, {"std", stats.std}};
  j["topology"] = {{"parent", decode.topology.parent},
                   {"root_index", decode.topology.root_index},
                   {"hand_indices", decode.topology.hand_indices},
                   {"node_names", decode.topology.node_names},
                   {"hash", decode.topology.hash()}};
  j["shape"] = decode.shape.bone_length;
  json frames = json::array();
  for (const auto& f : decode.frames) {
    json rows = json::array();
    for (int r = 0; r < 3; ++r) rows.push_back(json::array({f(r, 0), f(r, 1), f(r, 2)}));
    frames.push_back(rows);
  }
  j["alignment_frames"] = frames;
  j["anchor"] = vec_json(decode.anchor);
  j["frame_rate"] = decode.frame_rate;
  std::ofstream os(dir / kManifestFile);
  if (!os) throw DataError("cannot write " + (dir / kManifestFile).string());
  os << j.dump(2) << '\n';
}

TrainedModel TrainedModel::load(const std::filesystem::path& dir) {
  std::ifstream is(dir / kManifestFile);
  if (!is) throw DataError("cannot open " + (dir / kManifestFile).string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError((dir / kManifestFile).string() + ": " + e.what());
  }
  try {
    if (j.at("format") != "reachgen-model") throw HeaderError("model manifest: unknown format");
    if (j.at("version") != 1) throw VersionError("model manifest: unsupported version");
    const auto& a = j.at("architecture");
    Architecture arch;
    arch.latent = a.at("latent");
    arch.goal_dims = a.at("goal_dims");
    arch.nodes = a.at("nodes");
    arch.frames = a.at("frames");
    arch.root_index = a.at("root_index");
    arch.gen_base_frames = a.at("gen_base_frames");
    arch.gen_channels = a.at("gen_channels").get<std::vector<std::size_t>>();
    arch.disc_channels = a.at("disc_channels").get<std::vector<std::size_t>>();
    arch.disc_strides = a.at("disc_strides").get<std::vector<std::size_t>>();
    arch.disc_hidden = a.at("disc_hidden");
    arch.kernel = a.at("kernel");
    arch.leaky_slope = a.at("leaky_slope");
    arch.upsample = a.at("upsample") == "linear" ? nn::UpsampleMode::linear : nn::UpsampleMode::nearest;
    arch.coord.octaves = a.at("coord_octaves");
    arch.coord.include_ramp = a.at("coord_ramp");
    arch.standardize_latent = a.at("standardize_latent");

    AblationFlags flags;
    const auto& f = j.at("flags");
    flags.coord_encoding = f.at("coord_encoding");
    flags.root_mode = f.at("root_mode") == "absolute" ? RootMode::absolute : RootMode::differential;
    flags.motion_space = f.at("motion_space") == "absolute" ? MotionSpace::absolute : MotionSpace::relative;

    Workspace ws{json_vec(j.at("workspace").at("lo")), json_vec(j.at("workspace").at("hi"))};
    WhitenStats stats{j.at("whitening").at("mean").get<std::vector<double>>(),
                      j.at("whitening").at("std").get<std::vector<double>>()};
    DecodeContext ctx;
    const auto& t = j.at("topology");
    ctx.topology.parent = t.at("parent").get<std::vector<int>>();
    ctx.topology.root_index = t.at("root_index");
    ctx.topology.hand_indices = t.at("hand_indices").get<std::array<int, 2>>();
    ctx.topology.node_names = t.at("node_names").get<std::vector<std::string>>();
    ctx.topology.validate();
    ctx.shape.bone_length = j.at("shape").get<std::vector<double>>();
    for (const auto& fr : j.at("alignment_frames")) {
      Mat3 m;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = fr.at(r).at(c).get<double>();
      ctx.frames.push_back(m);
    }
    ctx.anchor = json_vec(j.at("anchor"));
    ctx.frame_rate = j.at("frame_rate");

    TrainedModel model = untrained(arch, flags, ws, std::move(stats), std::move(ctx), 0);
    std::ifstream ck(dir / kCheckpointFile, std::ios::binary);
    if (!ck) throw DataError("cannot open " + (dir / kCheckpointFile).string());
    auto params = nn::read_parameters(ck);
    nn::ParameterRefs<float> refs;
    for (auto& p : params) refs.push_back(&p);
    copy_parameter_values(refs, model.generator->parameters());
    copy_parameter_values(refs, model.discriminator->parameters());
    return model;
  } catch (const json::exception& e) {
    throw FormatError((dir / kManifestFile).string() + ": " + e.what());
  }
}

// Data preparation.

TrainingData prepare_training_data(const MotionDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  if (ds.sequences.empty()) throw DataError("training: dataset is empty");
  const auto& topo = ds.topology;
  const int nodes = topo.node_count();

  TrainingData out;
  out.workspace = ds.workspace;
  out.decode.topology = topo;
  out.decode.flags = cfg.flags;
  out.decode.shape = estimate_shape(ds.motions(), topo);

  // Canonical frames from the mean frame-0 bone directions; anchor and rate likewise averaged.
  std::vector<Vec3> mean_dir(nodes, Vec3::Zero());
  double duration = 0;
  for (const auto& s : ds.sequences) {
    const auto& m = s.motion;
    for (int i = 0; i < nodes; ++i) {
      if (i == topo.root_index) continue;
      mean_dir[i] += (m.at(i, 0) - m.at(topo.parent[i], 0)).normalized();
    }
    out.decode.anchor += m.at(topo.root_index, 0);
    duration += (m.frame_count - 1) / m.frame_rate;
  }
  const double n = static_cast<double>(ds.sequences.size());
  out.decode.anchor /= n;
  out.decode.frame_rate = (cfg.frames - 1) / (duration / n);
  out.decode.frames.assign(nodes, Mat3::Identity());
  for (int i = 0; i < nodes; ++i) {
    if (i != topo.root_index) out.decode.frames[i] = alignment_frame(mean_dir[i]);
  }

  std::vector<nn::Tensor<double>> encoded;
  encoded.reserve(ds.sequences.size());
  for (const auto& s : ds.sequences) {
    encoded.push_back(encode_motion(resample_rigid(s.motion, cfg.frames, out.decode.shape, topo), out.decode));
    out.raw_goals.push_back(s.goals);
  }
  out.stats = whiten_stats(encoded);

  const std::size_t count = encoded.size(), channels = encoded.front().dim(0), frames = encoded.front().dim(1);
  out.motions = nn::Tensor<float>({count, channels, frames});
  out.goals = nn::Tensor<float>({count, 6});
  for (std::size_t k = 0; k < count; ++k) {
    const auto w = whiten(encoded[k], out.stats);
    for (std::size_t q = 0; q < channels * frames; ++q) out.motions[k * channels * frames + q] = static_cast<float>(w[q]);
    const auto g = scale_goals(out.raw_goals[k], out.workspace);
    for (std::size_t a = 0; a < 6; ++a) out.goals[k * 6 + a] = static_cast<float>(g[a]);
  }
  return out;
}

// Trainer.

namespace {

Architecture architecture_for(const TrainingData& data, const TrainConfig& cfg) {
  Architecture arch = Architecture::standard();
  arch.nodes = static_cast<std::size_t>(data.decode.topology.node_count());
  arch.root_index = data.decode.topology.root_index;
  arch.frames = static_cast<std::size_t>(cfg.frames);
  arch.gen_channels.back() = arch.motion_channels();
  arch.validate();
  return arch;
}

template <typename Opt>
void step_with(Opt& opt, const nn::ParameterRefs<float>& params) {
  opt.step(params);
}

}  // namespace

nn::Var<float> critic_objective(nn::Tape<float>& tape, Discriminator<float>& critic, nn::Var<float> real,
                                nn::Var<float> fake, nn::Var<float> goals, Binding binding) {
  const std::size_t b = real.dim(0);
  if (fake.dim(0) != b || goals.dim(0) != b) throw ShapeError("critic_objective: batch sizes differ");
  auto scores = critic.forward(tape, nn::concat<float>({real, fake}, 0), nn::concat<float>({goals, goals}, 0), binding);
  nn::Tensor<float> weights({2 * b, 1});
  for (std::size_t k = 0; k < b; ++k) {
    weights[k] = -1.0f / static_cast<float>(b);
    weights[b + k] = 1.0f / static_cast<float>(b);
  }
  return nn::sum(nn::mul(scores, tape.constant(std::move(weights))));
}

template <typename T>
PenaltyTerm<T> gradient_penalty(nn::Tape<T>& tape, Discriminator<T>& critic, const nn::Tensor<T>& x,
                                const nn::Tensor<T>& goals, double lambda, double step) {
  const std::size_t b = x.dim(0), per = x.size() / b;
  if (goals.dim(0) != b) throw ShapeError("gradient_penalty: batch sizes differ");
  std::vector<nn::Tensor<T>> masks;
  nn::Tensor<T> g;
  {
    nn::Tape<T> inner;
    auto xv = inner.variable(x);
    inner.backward(nn::sum(critic.forward_masked(inner, xv, inner.constant(goals), Binding::frozen, masks)));
    g = inner.grad(xv);
  }
  // v_i = d penalty / d g_i.
  PenaltyTerm<T> out;
  nn::Tensor<T> v(x.shape());
  double largest = 0;
  for (std::size_t i = 0; i < b; ++i) {
    double sq = 0;
    for (std::size_t k = 0; k < per; ++k) sq += double(g[i * per + k]) * g[i * per + k];
    const double n = std::sqrt(sq);
    out.value += lambda * (n - 1) * (n - 1) / static_cast<double>(b);
    const double coef = n > 0 ? 2 * lambda * (n - 1) / (n * static_cast<double>(b)) : 0.0;
    for (std::size_t k = 0; k < per; ++k) v[i * per + k] = static_cast<T>(coef * g[i * per + k]);
    largest = std::max(largest, std::abs(coef) * n);
  }
  if (largest == 0) {
    out.surrogate = nn::scale(nn::sum(tape.constant(nn::Tensor<T>({1}))), T(0));
    return out;
  }
  // With the slope pattern held, the score is affine in x, so the difference is exact for any shift.
  double scale = 0;
  for (std::size_t q = 0; q < x.size(); ++q) scale += double(x[q]) * x[q];
  scale = std::sqrt(scale / static_cast<double>(b));
  const double h = step * std::max(scale, 1e-6) / largest;
  nn::Tensor<T> up(x.shape()), down(x.shape());
  for (std::size_t q = 0; q < x.size(); ++q) {
    up[q] = static_cast<T>(x[q] + h * v[q]);
    down[q] = static_cast<T>(x[q] - h * v[q]);
  }
  auto gv = tape.constant(goals);
  auto hi = critic.forward_masked(tape, tape.constant(std::move(up)), gv, Binding::trainable, masks);
  auto lo = critic.forward_masked(tape, tape.constant(std::move(down)), gv, Binding::trainable, masks);
  out.surrogate = nn::scale(nn::sub(nn::sum(hi), nn::sum(lo)), static_cast<T>(0.5 / h));
  return out;
}

template PenaltyTerm<float> gradient_penalty(nn::Tape<float>&, Discriminator<float>&, const nn::Tensor<float>&,
                                             const nn::Tensor<float>&, double, double);
template PenaltyTerm<double> gradient_penalty(nn::Tape<double>&, Discriminator<double>&, const nn::Tensor<double>&,
                                              const nn::Tensor<double>&, double, double);

Trainer::Trainer(const TrainingData& data, const TrainConfig& cfg)
    : data_(data),
      cfg_(cfg),
      model_(TrainedModel::untrained(architecture_for(data, cfg), cfg.flags, data.workspace, data.stats, data.decode,
                                     cfg.seed)),
      rng_(cfg.seed ^ 0x5bd1e995u) {
  cfg_.validate();
  if (data_.size() < static_cast<std::size_t>(cfg_.batch_size)) {
    throw DataError("training: dataset has " + std::to_string(data_.size()) + " sequences, fewer than batch size " +
                    std::to_string(cfg_.batch_size));
  }
  for (std::size_t c = 0; c < data_.stats.mean.size(); ++c) {
    gain_.push_back(static_cast<float>(1.0 / data_.stats.std[c]));
    offset_.push_back(static_cast<float>(-data_.stats.mean[c] / data_.stats.std[c]));
  }
  const auto lr = static_cast<float>(cfg_.learning_rate);
  if (cfg_.optimizer == OptimizerKind::rmsprop) {
    rms_critic_ = std::make_unique<nn::RmsProp<float>>(lr, static_cast<float>(cfg_.rmsprop_decay));
    rms_gen_ = std::make_unique<nn::RmsProp<float>>(lr, static_cast<float>(cfg_.rmsprop_decay));
  } else {
    const auto b1 = static_cast<float>(cfg_.adam_beta1), b2 = static_cast<float>(cfg_.adam_beta2);
    adam_critic_ = std::make_unique<nn::Adam<float>>(lr, b1, b2);
    adam_gen_ = std::make_unique<nn::Adam<float>>(lr, b1, b2);
  }
  order_.resize(data_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  cursor_ = order_.size();
}

std::vector<std::size_t> Trainer::next_batch() {
  std::vector<std::size_t> batch;
  while (batch.size() < static_cast<std::size_t>(cfg_.batch_size)) {
    if (cursor_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

nn::Tensor<float> Trainer::gather_motions(const std::vector<std::size_t>& batch) const {
  const std::size_t c = data_.motions.dim(1), t = data_.motions.dim(2), stride = c * t;
  nn::Tensor<float> out({batch.size(), c, t});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::copy_n(data_.motions.data() + batch[b] * stride, stride, out.data() + b * stride);
  }
  return out;
}

nn::Tensor<float> Trainer::gather_goals(const std::vector<std::size_t>& batch) const {
  nn::Tensor<float> out({batch.size(), 6});
  for (std::size_t b = 0; b < batch.size(); ++b) std::copy_n(data_.goals.data() + batch[b] * 6, 6, out.data() + b * 6);
  return out;
}

nn::Tensor<float> Trainer::draw_latent(std::size_t batch) {
  const std::size_t latent = model_.arch.latent;
  nn::Tensor<float> z({batch, latent});
  std::normal_distribution<double> dist(kLatentMean, kLatentStd);
  for (auto& v : z.values()) v = static_cast<float>(dist(rng_));
  return z;
}

nn::Var<float> Trainer::whiten_var(nn::Var<float> x) const {
  return nn::channel_affine<float>(x, gain_, offset_);
}

double Trainer::critic_step(const std::vector<std::size_t>& batch) {
  if (batch.empty()) throw DataError("critic_step: empty batch");
  const std::size_t b = batch.size();
  nn::Tape<float> tape;
  auto goals = tape.constant(gather_goals(batch));
  auto fake = whiten_var(model_.generator->forward(tape, tape.constant(draw_latent(b)), goals, Binding::frozen));
  auto real = tape.constant(gather_motions(batch));
  auto loss = critic_objective(tape, *model_.discriminator, real, fake, goals, Binding::trainable);
  const double value = loss.value()[0];
  const bool penalized = cfg_.regularizer == Regularizer::gradient_penalty;
  if (penalized) {
    // Random interpolates between each real and fake pair.
    nn::Tensor<float> mix = real.value();
    const std::size_t per = mix.size() / b;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < b; ++i) {
      const auto e = static_cast<float>(u(rng_));
      for (std::size_t k = i * per; k < (i + 1) * per; ++k) mix[k] = e * mix[k] + (1 - e) * fake.value()[k];
    }
    auto penalty = gradient_penalty(tape, *model_.discriminator, mix, goals.value(), cfg_.gp_lambda);
    last_penalty_ = penalty.value;
    loss = nn::add(loss, penalty.surrogate);
  }
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "critic loss is not finite; batch sequences:";
    for (auto k : batch) os << ' ' << k;
    throw NumericalError(os.str());
  }
  const auto params = model_.discriminator->parameters();
  nn::zero_grads(params);
  tape.backward(loss);
  if (rms_critic_) {
    rms_critic_->step(params);
  } else {
    adam_critic_->step(params);
  }
  if (!penalized) nn::clip_weights(params, static_cast<float>(cfg_.weight_clip));
  return value;
}

double Trainer::generator_step(const std::vector<std::size_t>& batch) {
  if (batch.empty()) throw DataError("generator_step: empty batch");
  nn::Tape<float> tape;
  auto goals = tape.constant(gather_goals(batch));
  auto fake = whiten_var(
      model_.generator->forward(tape, tape.constant(draw_latent(batch.size())), goals, Binding::trainable));
  auto scores = model_.discriminator->forward(tape, fake, goals, Binding::frozen);
  auto loss = nn::scale(nn::mean(scores), -1.0f);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) throw NumericalError("generator loss is not finite");
  const auto params = model_.generator->parameters();
  nn::zero_grads(params);
  tape.backward(loss);
  if (rms_gen_) {
    rms_gen_->step(params);
  } else {
    adam_gen_->step(params);
  }
  ++gen_steps_;
  if (cfg_.generator_ema > 0) {
    if (average_.empty()) {
      for (const auto* p : params) average_.push_back(p->value);
    } else {
      // Shorter memory early on so the initial weights wash out.
      const double t = static_cast<double>(gen_steps_);
      const auto d = static_cast<float>(std::min(cfg_.generator_ema, (1 + t) / (10 + t)));
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto avg = average_[k].values();
        const auto cur = params[k]->value.values();
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = d * avg[i] + (1 - d) * cur[i];
      }
    }
  }
  return value;
}

void Trainer::swap_average() {
  const auto params = model_.generator->parameters();
  for (std::size_t k = 0; k < average_.size(); ++k) std::swap(params[k]->value, average_[k]);
}

TrainReport Trainer::run(const std::function<void(const EpochRecord&)>& on_epoch) {
  TrainReport report;
  const auto start = std::chrono::steady_clock::now();
  const int iters = cfg_.iters_per_epoch > 0
                        ? cfg_.iters_per_epoch
                        : static_cast<int>((data_.size() + cfg_.batch_size - 1) / cfg_.batch_size);
  std::vector<Goals> probe(data_.raw_goals.begin(),
                           data_.raw_goals.begin() + std::min<std::size_t>(cfg_.probe_goals, data_.size()));
  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    double critic_sum = 0, gen_sum = 0;
    for (int it = 0; it < iters; ++it) {
      for (int c = 0; c < cfg_.critic_iters_per_gen; ++c) critic_sum += critic_step(next_batch());
      gen_sum += generator_step(next_batch());
    }
    rec.critic_loss = critic_sum / (iters * cfg_.critic_iters_per_gen);
    rec.generator_loss = gen_sum / iters;
    rec.wasserstein = -rec.critic_loss;
    if (!probe.empty() && cfg_.probe_samples > 0) {
      swap_average();
      std::mt19937_64 probe_rng(cfg_.seed + static_cast<std::uint64_t>(epoch));
      const auto stats = eval_goal_reach(model_, probe, cfg_.probe_samples, probe_rng);
      rec.pick_median = stats.pick.median;
      rec.place_median = stats.place.median;
      rec.diversity = eval_diversity(model_, probe.front(), std::max(2, cfg_.probe_samples), probe_rng);
      swap_average();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  swap_average();
  average_.clear();
  return report;
}

void TrainReport::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& e : epochs) {
    json j = {{"epoch", e.epoch},           {"critic_loss", e.critic_loss},   {"generator_loss", e.generator_loss},
              {"wasserstein", e.wasserstein}, {"pick_median", e.pick_median}, {"place_median", e.place_median},
              {"diversity", e.diversity},   {"seconds", e.seconds}};
    os << j.dump() << '\n';
  }
}

std::pair<TrainedModel, TrainReport> train(const MotionDataset& ds, const TrainConfig& cfg,
                                           const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (ds.sequences.size() < static_cast<std::size_t>(cfg.batch_size)) {
    throw DataError("training: dataset has " + std::to_string(ds.sequences.size()) +
                    " sequences, fewer than batch size " + std::to_string(cfg.batch_size));
  }
  const TrainingData data = prepare_training_data(ds, cfg);
  Trainer trainer(data, cfg);
  TrainReport report = trainer.run(on_epoch);
  return {std::move(trainer.model()), std::move(report)};
}

// Evaluation.

Quartiles quartiles(std::vector<double> values) {
  if (values.empty()) return {};
  std::sort(values.begin(), values.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

std::pair<double, double> goal_reach_error(const AbsoluteMotion& m, const Goals& g, const SkeletonTopology& topo) {
  const int half = m.frame_count / 2;
  double pick = std::numeric_limits<double>::infinity(), place = pick;
  for (int hand : topo.hand_indices) {
    for (int j = 0; j < half; ++j) pick = std::min(pick, (m.at(hand, j) - g.pick).norm());
    for (int j = half; j < m.frame_count; ++j) place = std::min(place, (m.at(hand, j) - g.place).norm());
  }
  return {pick, place};
}

GoalReachStats eval_goal_reach(const TrainedModel& model, const std::vector<Goals>& goals, int samples_per_goal,
                               std::mt19937_64& rng) {
  GoalReachStats out;
  for (const auto& g : goals) {
    for (const auto& m : model.sample(g, samples_per_goal, rng)) {
      const auto [pick, place] = goal_reach_error(m, g, model.decode.topology);
      out.pick_errors.push_back(pick);
      out.place_errors.push_back(place);
    }
  }
  out.pick = quartiles(out.pick_errors);
  out.place = quartiles(out.place_errors);
  return out;
}

double trajectory_distance(const AbsoluteMotion& a, const AbsoluteMotion& b, int root_index) {
  if (a.node_count != b.node_count || a.frame_count != b.frame_count) {
    throw ShapeError("trajectory_distance: motions differ in size");
  }
  const Vec3 oa = a.at(root_index, 0), ob = b.at(root_index, 0);
  double total = 0;
  for (std::size_t q = 0; q < a.positions.size(); ++q) total += ((a.positions[q] - oa) - (b.positions[q] - ob)).norm();
  return total / static_cast<double>(a.positions.size());
}

double mean_pairwise_distance(const std::vector<AbsoluteMotion>& motions, int root_index) {
  if (motions.size() < 2) return 0.0;
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < motions.size(); ++i)
    for (std::size_t j = i + 1; j < motions.size(); ++j, ++pairs) {
      total += trajectory_distance(motions[i], motions[j], root_index);
    }
  return total / static_cast<double>(pairs);
}

double eval_diversity(const TrainedModel& model, const Goals& g, int n_samples, std::mt19937_64& rng) {
  if (n_samples < 2) return 0.0;
  return mean_pairwise_distance(model.sample(g, n_samples, rng), model.decode.topology.root_index);
}

double high_frequency_power(const AbsoluteMotion& m, double cutoff_hz) {
  const int len = m.frame_count - 1;
  if (len < 2) return 0.0;
  const double pi = std::acos(-1.0);
  double total = 0;
  for (int i = 0; i < m.node_count; ++i)
    for (int a = 0; a < 3; ++a) {
      std::vector<double> v(len);
      for (int j = 0; j < len; ++j) v[j] = (m.at(i, j + 1)[a] - m.at(i, j)[a]) * m.frame_rate;
      for (int k = 1; k <= len / 2; ++k) {
        if (k * m.frame_rate / len <= cutoff_hz) continue;
        double re = 0, im = 0;
        for (int n = 0; n < len; ++n) {
          re += v[n] * std::cos(2 * pi * k * n / len);
          im -= v[n] * std::sin(2 * pi * k * n / len);
        }
        total += (re * re + im * im) / len;
      }
    }
  return total / (3.0 * m.node_count);
}

double root_drift_variance(const AbsoluteMotion& m, int root_index) {
  const int len = m.frame_count - 1;
  if (len < 1) return 0.0;
  Vec3 mean = Vec3::Zero();
  for (int j = 1; j <= len; ++j) mean += m.at(root_index, j) - m.at(root_index, j - 1);
  mean /= len;
  double var = 0;
  for (int j = 1; j <= len; ++j) var += (m.at(root_index, j) - m.at(root_index, j - 1) - mean).squaredNorm();
  return var / len;
}

}  // namespace reach
