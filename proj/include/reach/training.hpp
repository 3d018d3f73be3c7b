#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "reach/gan.hpp"
#include "reach/synth.hpp"

namespace reach {

enum class OptimizerKind { rmsprop, adam };
// Critic Lipschitz control: weight clipping or a gradient penalty at real/fake interpolates.
enum class Regularizer { clip, gradient_penalty };

struct TrainConfig {
  int batch_size = 32;
  int critic_iters_per_gen = 5;
  Regularizer regularizer = Regularizer::clip;
  double weight_clip = 0.01;
  double gp_lambda = 10.0;
  double learning_rate = 5e-5;
  double rmsprop_decay = 0.99;
  OptimizerKind optimizer = OptimizerKind::rmsprop;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  int epochs = 300;
  // Decay of an exponential average of generator weights used for probes and the final
  // model; 0 disables it.
  double generator_ema = 0.0;
  // Generator iterations per epoch; 0 means ceil(dataset size / batch size).
  int iters_per_epoch = 0;
  std::uint64_t seed = 1;
  AblationFlags flags{};
  int frames = 32;
  // Goal pairs and samples per pair for the per-epoch probe; 0 disables it.
  int probe_goals = 4;
  int probe_samples = 2;

  /// Throws std::invalid_argument on non-positive or inconsistent values.
  void validate() const;
};

/// Everything needed to turn network channels back into world-space motion.
struct DecodeContext {
  SkeletonTopology topology = standard_topology();
  Shape shape;
  AblationFlags flags{};
  std::vector<Mat3> frames;     // canonical alignment frames
  Vec3 anchor = Vec3::Zero();   // mean frame-0 root position of the corpus
  double frame_rate = 30.0;     // effective rate of the resampled clips
};

/// Network channels [3N x T] of a motion under the configured representation.
/// Relative encodings use ctx.frames when set, else the motion's own frame-0 frames.
nn::Tensor<double> encode_motion(const AbsoluteMotion& m, const DecodeContext& ctx);

/// World-space motion from generator channels [3N x T].
AbsoluteMotion decode_motion(const nn::Tensor<double>& channels, const DecodeContext& ctx);

/// Frozen generator plus the data conventions it was trained with.
struct TrainedModel {
  Architecture arch = Architecture::standard();
  Workspace workspace{};
  WhitenStats stats;
  DecodeContext decode;
  std::unique_ptr<Generator<float>> generator;
  std::unique_ptr<Discriminator<float>> discriminator;

  /// Fresh, untrained networks for the given conventions.
  static TrainedModel untrained(const Architecture& arch, const AblationFlags& flags, const Workspace& ws,
                                WhitenStats stats, DecodeContext ctx, std::uint64_t seed);

  /// Samples motions for one goal pair; latent codes are drawn from rng.
  std::vector<AbsoluteMotion> sample(const Goals& g, int n, std::mt19937_64& rng) const;
  /// Raw generator channels [n x 3N x T] for one goal pair.
  nn::Tensor<float> sample_channels(const Goals& g, int n, std::mt19937_64& rng) const;

  void save(const std::filesystem::path& dir) const;
  static TrainedModel load(const std::filesystem::path& dir);
};

/// Real data in network form: resampled, encoded and globally whitened.
struct TrainingData {
  nn::Tensor<float> motions;  // [N x 3N x T], whitened
  nn::Tensor<float> goals;    // [N x 6], scaled to [-1, 1]
  std::vector<Goals> raw_goals;
  WhitenStats stats;
  DecodeContext decode;
  Workspace workspace;

  std::size_t size() const { return raw_goals.size(); }
};

TrainingData prepare_training_data(const MotionDataset& ds, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double critic_loss = 0;       // mean over the epoch's critic steps
  double generator_loss = 0;
  double wasserstein = 0;       // -critic_loss
  double pick_median = 0;       // probe goal-reach errors (meters)
  double place_median = 0;
  double diversity = 0;
  double seconds = 0;           // wall clock since training started
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  /// One JSON object per line.
  void write_jsonl(const std::filesystem::path& path) const;
};

/// mean D(fake) - mean D(real), scored in one pass over the stacked batch.
nn::Var<float> critic_objective(nn::Tape<float>& tape, Discriminator<float>& critic, nn::Var<float> real,
                                nn::Var<float> fake, nn::Var<float> goals, Binding binding);

template <typename T>
struct PenaltyTerm {
  double value = 0;
  nn::Var<T> surrogate;
};

/// lambda * mean_i (|grad_x D(x_i)| - 1)^2 over the motion inputs x. backward() on
/// `surrogate` adds the penalty's parameter gradient: with the critic's slope pattern held
/// at x the score is affine in x, so a difference of two masked passes along grad_x D
/// gives the mixed second derivative exactly. `step` sets the shift relative to the rms
/// input norm and only affects rounding.
template <typename T>
PenaltyTerm<T> gradient_penalty(nn::Tape<T>& tape, Discriminator<T>& critic, const nn::Tensor<T>& x,
                                const nn::Tensor<T>& goals, double lambda, double step = 0.1);

/// Single WGAN critic update: loss = mean D(fake) - mean D(real), one optimizer
/// step, then weights clipped into [-clip, clip]. Returns the pre-step loss.
/// Throws NumericalError if the loss is not finite.
class Trainer {
 public:
  Trainer(const TrainingData& data, const TrainConfig& cfg);

  double critic_step(const std::vector<std::size_t>& batch);
  double generator_step(const std::vector<std::size_t>& batch);
  /// Next batch indices from a seeded shuffle of the dataset.
  std::vector<std::size_t> next_batch();

  /// Runs cfg.epochs epochs. With generator_ema set, the model is left holding the averaged
  /// generator weights.
  TrainReport run(const std::function<void(const EpochRecord&)>& on_epoch = {});

  TrainedModel& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  /// Gradient penalty of the latest critic step; 0 under weight clipping.
  double last_penalty() const { return last_penalty_; }

 private:
  nn::Tensor<float> gather_motions(const std::vector<std::size_t>& batch) const;
  nn::Tensor<float> gather_goals(const std::vector<std::size_t>& batch) const;
  nn::Tensor<float> draw_latent(std::size_t batch);
  nn::Var<float> whiten_var(nn::Var<float> x) const;
  void swap_average();

  const TrainingData& data_;
  TrainConfig cfg_;
  TrainedModel model_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  double last_penalty_ = 0;
  std::vector<nn::Tensor<float>> average_;
  std::size_t gen_steps_ = 0;
  std::vector<float> gain_, offset_;
  std::unique_ptr<nn::RmsProp<float>> rms_critic_, rms_gen_;
  std::unique_ptr<nn::Adam<float>> adam_critic_, adam_gen_;
};

/// Trains on a dataset; throws DataError if it has fewer sequences than a batch.
std::pair<TrainedModel, TrainReport> train(const MotionDataset& ds, const TrainConfig& cfg,
                                           const std::function<void(const EpochRecord&)>& on_epoch = {});

// Evaluation.

struct Quartiles {
  double q1 = 0, median = 0, q3 = 0;
};
Quartiles quartiles(std::vector<double> values);

struct GoalReachStats {
  Quartiles pick, place;
  std::vector<double> pick_errors, place_errors;
};

/// Smallest hand-to-goal distance over either hand: the pick goal over the
/// first half of the frames, the place goal over the second half.
std::pair<double, double> goal_reach_error(const AbsoluteMotion& m, const Goals& g, const SkeletonTopology& topo);

GoalReachStats eval_goal_reach(const TrainedModel& model, const std::vector<Goals>& goals, int samples_per_goal,
                               std::mt19937_64& rng);

/// Mean per-marker distance between two motions after moving both frame-0
/// roots to the origin.
double trajectory_distance(const AbsoluteMotion& a, const AbsoluteMotion& b, int root_index);
double mean_pairwise_distance(const std::vector<AbsoluteMotion>& motions, int root_index);
double eval_diversity(const TrainedModel& model, const Goals& g, int n_samples, std::mt19937_64& rng);

/// Mean spectral power of joint velocities above `cutoff_hz`.
double high_frequency_power(const AbsoluteMotion& m, double cutoff_hz);
/// Variance over frames of the per-frame root displacement (summed over axes).
double root_drift_variance(const AbsoluteMotion& m, int root_index);

}  // namespace reach
