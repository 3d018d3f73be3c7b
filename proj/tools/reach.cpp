// reach: synthesize data, train, sample, evaluate and convert reach-and-place motions.

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "reach/errors.hpp"
#include "reach/export.hpp"
#include "reach/synth.hpp"
#include "reach/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace reach;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Git blob id: sha1("blob <size>\0" + content).
std::string git_blob_sha1(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  const std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config;
  std::uint64_t seed = 0;
  std::vector<fs::path> inputs, outputs;

  void write(const fs::path& path) const {
    json j;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    j["seed"] = seed;
    json in = json::array();
    for (const auto& p : inputs) {
      // Directories hash each regular file inside, sorted by name.
      if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(p))
          if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) in.push_back({{"path", f.string()}, {"git_sha1", git_blob_sha1(f)}});
      } else {
        in.push_back({{"path", p.string()}, {"git_sha1", git_blob_sha1(p)}});
      }
    }
    j["inputs"] = in;
    json out = json::array();
    for (const auto& p : outputs) out.push_back(p.string());
    j["outputs"] = out;
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    os << j.dump(2) << '\n';
  }
};

fs::path default_out_dir() {
  const char* env = std::getenv("REACH_OUT_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

fs::path resolve_out(const std::string& given, const std::string& fallback) {
  return given.empty() ? default_out_dir() / fallback : fs::path(given);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

Vec3 to_vec3(const std::vector<double>& v) { return Vec3(v[0], v[1], v[2]); }

json quartiles_json(const Quartiles& q) { return {{"q1", q.q1}, {"median", q.median}, {"q3", q.q3}}; }

struct SynthOptions {
  int n = 200;
  std::uint64_t seed = 7;
  OracleConfig oracle;
  std::string out;
};

struct TrainOptions {
  std::string data, out;
  TrainConfig cfg;
  std::string optimizer = "rmsprop", regularizer = "clip";
  bool no_coordcode = false;
  std::string root = "differential", space = "relative";
};

struct SampleOptions {
  std::string model, out, format = "csv";
  std::vector<double> pick, place;
  int n = 4;
  std::uint64_t seed = 1;
};

struct EvalOptions {
  std::string model, data, out;
  int goals = 16, samples = 4, diversity_samples = 32;
  std::uint64_t seed = 1;
};

struct ConvertOptions {
  std::string in, out, direction;
};

int cmd_synth(const SynthOptions& o, RunManifest& run) {
  if (o.n < 1) throw UsageError("synth: --n must be at least 1");
  const fs::path out = resolve_out(o.out, "dataset.rgmd");
  ensure_parent(out);
  OracleConfig cfg = o.oracle;
  cfg.seed = o.seed;
  std::mt19937_64 rng(o.seed);
  const auto ds = build_dataset(o.n, cfg, Workspace{}, rng);
  write_dataset(ds, out);
  run.seed = o.seed;
  run.outputs = {out, fs::path(out.string() + ".json")};
  run.write(out.string() + ".run.json");
  std::cout << "wrote " << ds.sequences.size() << " sequences to " << out << '\n';
  return kOk;
}

int cmd_train(TrainOptions o, RunManifest& run) {
  if (o.data.empty()) throw UsageError("train: --data is required");
  if (!fs::exists(o.data)) throw DataError("train: dataset not found: " + o.data);
  auto& cfg = o.cfg;
  cfg.flags.coord_encoding = !o.no_coordcode;
  cfg.flags.root_mode = o.root == "absolute" ? RootMode::absolute : RootMode::differential;
  cfg.flags.motion_space = o.space == "absolute" ? MotionSpace::absolute : MotionSpace::relative;
  cfg.optimizer = o.optimizer == "adam" ? OptimizerKind::adam : OptimizerKind::rmsprop;
  cfg.regularizer = o.regularizer == "gp" ? Regularizer::gradient_penalty : Regularizer::clip;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path dir = resolve_out(o.out, "model");
  fs::create_directories(dir);
  const auto ds = read_dataset(o.data);
  std::cout << "training " << cfg.flags.describe() << " on " << ds.sequences.size() << " sequences\n";
  auto [model, report] = train(ds, cfg, [](const EpochRecord& e) {
    std::cout << "epoch " << e.epoch << "  W " << e.wasserstein << "  G " << e.generator_loss << "  pick "
              << e.pick_median << "  place " << e.place_median << "  " << e.seconds << " s\n";
  });
  model.save(dir);
  report.write_jsonl(dir / "report.jsonl");
  run.seed = cfg.seed;
  run.inputs = {o.data};
  run.outputs = {dir / "model.rgck", dir / "model.json", dir / "report.jsonl"};
  run.write(dir / "run.json");
  return kOk;
}

int cmd_sample(const SampleOptions& o, RunManifest& run) {
  if (o.n < 1) throw UsageError("sample: --n must be at least 1");
  const auto model = TrainedModel::load(o.model);
  const Goals goals{to_vec3(o.pick), to_vec3(o.place)};
  scale_goals(goals, model.workspace);  // throws WorkspaceError naming the goal and axis
  const fs::path dir = resolve_out(o.out, "samples");
  fs::create_directories(dir);
  std::mt19937_64 rng(o.seed);
  const auto motions = model.sample(goals, o.n, rng);
  run.seed = o.seed;
  run.inputs = {o.model};
  for (std::size_t k = 0; k < motions.size(); ++k) {
    std::ostringstream name;
    name << "sample_" << std::setw(3) << std::setfill('0') << k << '.' << o.format;
    export_motion(dir / name.str(), motions[k], model.decode.topology, goals);
    run.outputs.push_back(dir / name.str());
  }
  run.write(dir / "run.json");
  std::cout << "wrote " << motions.size() << " samples to " << dir << '\n';
  return kOk;
}

int cmd_eval(const EvalOptions& o, RunManifest& run) {
  if (o.goals < 1 || o.samples < 1) throw UsageError("eval: --goals and --samples must be positive");
  const auto model = TrainedModel::load(o.model);
  const auto ds = read_dataset(o.data, model.decode.topology);
  if (ds.sequences.empty()) throw DataError("eval: dataset is empty");
  std::vector<Goals> goals;
  for (std::size_t k = 0; k < std::min<std::size_t>(o.goals, ds.sequences.size()); ++k) {
    goals.push_back(ds.sequences[k].goals);
  }
  std::mt19937_64 rng(o.seed);
  const auto reach = eval_goal_reach(model, goals, o.samples, rng);
  const double diversity = eval_diversity(model, goals.front(), o.diversity_samples, rng);

  const auto& topo = model.decode.topology;
  double hf = 0, drift = 0, bone_mean = 0, bone_max = 0;
  int count = 0;
  for (const auto& g : goals)
    for (const auto& m : model.sample(g, o.samples, rng)) {
      const auto v = bone_length_violation(m, model.decode.shape, topo);
      hf += high_frequency_power(m, 3.0);
      drift += root_drift_variance(m, topo.root_index);
      bone_mean += v.mean;
      bone_max = std::max(bone_max, v.max);
      ++count;
    }
  double real_hf = 0, real_drift = 0;
  for (const auto& s : ds.sequences) {
    const auto m = resample_time(s.motion, static_cast<int>(model.arch.frames));
    real_hf += high_frequency_power(m, 3.0);
    real_drift += root_drift_variance(m, topo.root_index);
  }
  const double n_real = static_cast<double>(ds.sequences.size());

  json j;
  j["model"] = o.model;
  j["dataset"] = o.data;
  j["flags"] = model.decode.flags.describe();
  j["goal_pairs"] = goals.size();
  j["samples_per_goal"] = o.samples;
  j["pick_error_m"] = quartiles_json(reach.pick);
  j["place_error_m"] = quartiles_json(reach.place);
  j["diversity_m"] = diversity;
  j["bone_violation_mean_m"] = bone_mean / count;
  j["bone_violation_max_m"] = bone_max;
  j["hf_power_above_3hz"] = hf / count;
  j["root_drift_variance"] = drift / count;
  j["data_hf_power_above_3hz"] = real_hf / n_real;
  j["data_root_drift_variance"] = real_drift / n_real;
  j["seed"] = o.seed;

  const fs::path out = resolve_out(o.out, "eval.json");
  ensure_parent(out);
  std::ofstream os(out);
  if (!os) throw DataError("cannot write " + out.string());
  os << j.dump(2) << '\n';
  run.seed = o.seed;
  run.inputs = {o.model, o.data};
  run.outputs = {out};
  run.write(out.string() + ".run.json");
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int cmd_convert(const ConvertOptions& o, RunManifest& run) {
  const auto rep = peek_representation(o.in);
  const fs::path out = resolve_out(o.out, o.direction == "a2r" ? "relative.rgmd" : "absolute.rgmd");
  ensure_parent(out);
  if (o.direction == "a2r") {
    if (rep != Representation::absolute) throw FormatError("convert a2r: input is not an absolute dataset");
    const auto ds = read_dataset(o.in);
    RelativeDataset r{ds.topology, ds.shape, ds.workspace, {}};
    for (const auto& s : ds.sequences) {
      r.sequences.push_back({a_to_r(s.motion, ds.shape, ds.topology), s.goals, s.meta, s.motion.at(ds.topology.root_index, 0)});
    }
    write_relative_dataset(r, out);
  } else {
    if (rep != Representation::relative) throw FormatError("convert r2a: input is not a relative dataset");
    const auto r = read_relative_dataset(o.in);
    MotionDataset ds{r.topology, r.shape, r.workspace, {}};
    for (const auto& s : r.sequences) {
      auto m = r_to_a(s.motion, r.shape, r.topology);
      m.translate(s.origin);
      ds.sequences.push_back({std::move(m), s.goals, s.meta});
    }
    write_dataset(ds, out);
  }
  run.inputs = {o.in};
  run.outputs = {out};
  run.write(out.string() + ".run.json");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goal-conditioned reach-and-place motion generator"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value file with option defaults");

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Generate a procedural reach-and-place dataset");
  synth->add_option("--n", so.n, "Number of sequences")->capture_default_str();
  synth->add_option("--seed", so.seed, "Master seed")->capture_default_str();
  synth->add_option("--frames", so.oracle.frame_count, "Frames per sequence")->capture_default_str();
  synth->add_option("--frame-jitter", so.oracle.frame_jitter, "Frame count spread")->capture_default_str();
  synth->add_option("--rate", so.oracle.frame_rate, "Frame rate (Hz)")->capture_default_str();
  synth->add_option("--noise", so.oracle.noise_sigma, "Marker noise sigma (m)")->capture_default_str();
  synth->add_option("--step-probability", so.oracle.step_probability)->capture_default_str();
  synth->add_option("--flip-probability", so.oracle.flip_probability)->capture_default_str();
  synth->add_option("--max-root-travel", so.oracle.max_root_travel)->capture_default_str();
  synth->add_option("--out", so.out, "Dataset file (default $REACH_OUT_DIR/dataset.rgmd)");

  TrainOptions to;
  auto* trainc = app.add_subcommand("train", "Train the generator and critic");
  trainc->add_option("--data", to.data, "Dataset file")->required();
  trainc->add_option("--out", to.out, "Model directory (default $REACH_OUT_DIR/model)");
  trainc->add_option("--epochs", to.cfg.epochs)->capture_default_str();
  trainc->add_option("--iters-per-epoch", to.cfg.iters_per_epoch, "0 means one pass over the data")
      ->capture_default_str();
  trainc->add_option("--batch", to.cfg.batch_size)->capture_default_str();
  trainc->add_option("--critic-iters", to.cfg.critic_iters_per_gen)->capture_default_str();
  trainc->add_option("--lr", to.cfg.learning_rate)->capture_default_str();
  trainc->add_option("--regularizer", to.regularizer, "Critic constraint: weight clipping or gradient penalty")
      ->check(CLI::IsMember({"clip", "gp"}))
      ->capture_default_str();
  trainc->add_option("--clip", to.cfg.weight_clip)->capture_default_str();
  trainc->add_option("--gp-lambda", to.cfg.gp_lambda)->capture_default_str();
  trainc->add_option("--generator-ema", to.cfg.generator_ema, "Weight-average decay for the saved generator, 0 off")
      ->capture_default_str();
  trainc->add_option("--optimizer", to.optimizer)->check(CLI::IsMember({"rmsprop", "adam"}))->capture_default_str();
  trainc->add_option("--seed", to.cfg.seed)->capture_default_str();
  trainc->add_option("--probe-goals", to.cfg.probe_goals)->capture_default_str();
  trainc->add_flag("--no-coordcode", to.no_coordcode, "Disable coordinate encoding");
  trainc->add_option("--root", to.root, "Root channel encoding")
      ->check(CLI::IsMember({"differential", "absolute"}))
      ->capture_default_str();
  trainc->add_option("--space", to.space, "Motion space")
      ->check(CLI::IsMember({"relative", "absolute"}))
      ->capture_default_str();

  SampleOptions sa;
  auto* sample = app.add_subcommand("sample", "Sample motions for a goal pair");
  sample->add_option("--model", sa.model, "Model directory")->required();
  sample->add_option("--pick", sa.pick, "Pick goal x,y,z")->required()->expected(3)->delimiter(',');
  sample->add_option("--place", sa.place, "Place goal x,y,z")->required()->expected(3)->delimiter(',');
  sample->add_option("--n", sa.n)->capture_default_str();
  sample->add_option("--seed", sa.seed)->capture_default_str();
  sample->add_option("--format", sa.format)->check(CLI::IsMember({"csv", "bvh", "svg"}))->capture_default_str();
  sample->add_option("--out", sa.out, "Output directory (default $REACH_OUT_DIR/samples)");

  EvalOptions eo;
  auto* evalc = app.add_subcommand("eval", "Goal-reach, diversity and smoothness metrics");
  evalc->add_option("--model", eo.model)->required();
  evalc->add_option("--data", eo.data, "Dataset whose goal pairs are evaluated")->required();
  evalc->add_option("--goals", eo.goals)->capture_default_str();
  evalc->add_option("--samples", eo.samples)->capture_default_str();
  evalc->add_option("--diversity-samples", eo.diversity_samples)->capture_default_str();
  evalc->add_option("--seed", eo.seed)->capture_default_str();
  evalc->add_option("--out", eo.out, "Metrics file (default $REACH_OUT_DIR/eval.json)");

  ConvertOptions co;
  auto* convert = app.add_subcommand("convert", "Convert a dataset between absolute and relative form");
  convert->add_option("--in", co.in)->required();
  convert->add_option("--direction", co.direction)->required()->check(CLI::IsMember({"a2r", "r2a"}));
  convert->add_option("--out", co.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  RunManifest run;
  run.argv.assign(argv, argv + argc);
  for (auto* sub : app.get_subcommands()) run.config = sub->config_to_str(true, false);
  try {
    if (*synth) return run.command = "synth", cmd_synth(so, run);
    if (*trainc) return run.command = "train", cmd_train(to, run);
    if (*sample) return run.command = "sample", cmd_sample(sa, run);
    if (*evalc) return run.command = "eval", cmd_eval(eo, run);
    if (*convert) return run.command = "convert", cmd_convert(co, run);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
