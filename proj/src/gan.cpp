#include "reach/gan.hpp"

#include <map>
#include <sstream>
#include <stdexcept>

#include "reach/errors.hpp"

namespace reach {

bool Workspace::contains(const Vec3& p) const {
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= lo[a] && p[a] <= hi[a])) return false;
  }
  return true;
}

std::array<double, 6> scale_goals(const Goals& g, const Workspace& ws) {
  static constexpr const char* kAxis = "xyz";
  std::array<double, 6> out{};
  const Vec3* pts[2] = {&g.pick, &g.place};
  for (int k = 0; k < 2; ++k)
    for (int a = 0; a < 3; ++a) {
      const double v = (*pts[k])[a];
      if (!(v >= ws.lo[a] && v <= ws.hi[a])) {
        std::ostringstream os;
        os << (k == 0 ? "pick" : "place") << " goal " << kAxis[a] << " = " << v << " outside workspace ["
           << ws.lo[a] << ", " << ws.hi[a] << "]";
        throw WorkspaceError(os.str());
      }
      out[3 * k + a] = 2.0 * (v - ws.lo[a]) / (ws.hi[a] - ws.lo[a]) - 1.0;
    }
  return out;
}

Goals unscale_goals(const std::array<double, 6>& scaled, const Workspace& ws) {
  Goals g;
  Vec3* pts[2] = {&g.pick, &g.place};
  for (int k = 0; k < 2; ++k)
    for (int a = 0; a < 3; ++a) (*pts[k])[a] = ws.lo[a] + (scaled[3 * k + a] + 1.0) * 0.5 * (ws.hi[a] - ws.lo[a]);
  return g;
}

LatentCode sample_latent(std::mt19937_64& rng) {
  std::normal_distribution<double> dist(kLatentMean, kLatentStd);
  LatentCode c;
  for (auto& v : c.z) v = dist(rng);
  return c;
}

std::string AblationFlags::describe() const {
  std::ostringstream os;
  os << "coordcode=" << (coord_encoding ? "on" : "off")
     << " root=" << (root_mode == RootMode::differential ? "differential" : "absolute")
     << " space=" << (motion_space == MotionSpace::relative ? "relative" : "absolute");
  return os.str();
}

void Architecture::validate() const {
  if (gen_channels.size() < 2) throw std::invalid_argument("architecture: generator needs at least one level");
  if (gen_channels.back() != motion_channels()) {
    throw std::invalid_argument("architecture: last generator width must be 3 x nodes");
  }
  const std::size_t levels = gen_channels.size() - 1;
  if (gen_base_frames << levels != frames) {
    throw std::invalid_argument("architecture: base frames x 2^levels must equal frames");
  }
  if (disc_channels.size() != disc_strides.size() || disc_channels.empty()) {
    throw std::invalid_argument("architecture: one stride per discriminator conv");
  }
  std::size_t t = frames;
  for (auto s : disc_strides) {
    if (s == 0 || t % s != 0) throw std::invalid_argument("architecture: discriminator strides do not divide frames");
    t /= s;
  }
  if (kernel % 2 == 0) throw std::invalid_argument("architecture: kernel must be odd");
}

namespace {

template <typename T>
nn::Var<T> bind(nn::Tape<T>& tape, nn::Parameter<T>& p, Binding binding) {
  return binding == Binding::trainable ? tape.parameter(p) : tape.frozen(p);
}

void note(std::vector<LayerShape>* ledger, std::string layer, std::size_t features, std::size_t size,
          std::size_t stride = 1) {
  if (ledger) ledger->push_back({std::move(layer), features, size, stride});
}

template <typename T>
nn::Parameter<T> make_param(std::string name, nn::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  nn::Parameter<T> p(std::move(name), nn::Tensor<T>(std::move(shape)));
  nn::init_fan_in_uniform(p, fan_in, rng);
  return p;
}

}  // namespace

template <typename T>
Generator<T>::Generator(const Architecture& arch, const AblationFlags& flags, std::mt19937_64& rng)
    : arch_(arch), flags_(flags) {
  arch_.validate();
  const std::size_t in = arch_.latent + arch_.goal_dims;
  const std::size_t dense_out = arch_.gen_channels[0] * arch_.gen_base_frames;
  dense_w_ = make_param<T>("gen.dense.w", {dense_out, in}, in, rng);
  dense_b_ = make_param<T>("gen.dense.b", {dense_out}, in, rng);
  const std::size_t extra = flags_.coord_encoding ? static_cast<std::size_t>(arch_.coord.extra_channels()) : 0;
  for (std::size_t l = 1; l < arch_.gen_channels.size(); ++l) {
    const std::size_t cin = arch_.gen_channels[l - 1] + extra, cout = arch_.gen_channels[l];
    const std::string name = "gen.conv" + std::to_string(l - 1);
    conv_w_.push_back(make_param<T>(name + ".w", {cout, cin, arch_.kernel}, cin * arch_.kernel, rng));
    conv_b_.push_back(make_param<T>(name + ".b", {cout}, cin * arch_.kernel, rng));
  }
}

template <typename T>
nn::Var<T> Generator<T>::forward(nn::Tape<T>& tape, nn::Var<T> z, nn::Var<T> goals, Binding binding,
                                 std::vector<LayerShape>* ledger) {
  const std::size_t batch = z.dim(0);
  if (z.shape() != nn::Shape{batch, arch_.latent} || goals.shape() != nn::Shape{batch, arch_.goal_dims}) {
    throw ShapeError("generator: expected z [B x " + std::to_string(arch_.latent) + "] and goals [B x " +
                     std::to_string(arch_.goal_dims) + "], got " + nn::to_string(z.shape()) + " and " +
                     nn::to_string(goals.shape()));
  }
  note(ledger, "goal", arch_.goal_dims, 0);
  note(ledger, "latent", arch_.latent, 0);
  if (arch_.standardize_latent) {
    nn::Tensor<T> shift(z.shape(), static_cast<T>(-kLatentMean / kLatentStd));
    z = nn::add(nn::scale(z, static_cast<T>(1.0 / kLatentStd)), tape.constant(std::move(shift)));
  }
  auto h = nn::concat<T>({z, goals}, 1);
  note(ledger, "concat", h.dim(1), 0);
  h = nn::dense(h, bind(tape, dense_w_, binding), bind(tape, dense_b_, binding));
  h = nn::reshape(h, {batch, arch_.gen_channels[0], arch_.gen_base_frames});
  h = nn::leaky_relu(h, static_cast<T>(arch_.leaky_slope));
  note(ledger, "dense", h.dim(1), h.dim(2));
  for (std::size_t l = 0; l < conv_w_.size(); ++l) {
    if (flags_.coord_encoding) {
      h = coord_code(h, arch_.coord);
      note(ledger, "coordCode", h.dim(1), h.dim(2));
    }
    h = nn::upsample(h, arch_.upsample);
    note(ledger, "upsample", h.dim(1), h.dim(2), 2);
    h = nn::conv1d(h, bind(tape, conv_w_[l], binding), bind(tape, conv_b_[l], binding), 1);
    note(ledger, "conv", h.dim(1), h.dim(2), 1);
    if (l + 1 < conv_w_.size()) h = nn::leaky_relu(h, static_cast<T>(arch_.leaky_slope));
  }
  if (!out_gain_.empty()) h = nn::channel_affine<T>(h, out_gain_, out_offset_);
  if (flags_.motion_space == MotionSpace::relative) h = ops::normalize_directions(h, arch_.root_index);
  return h;
}

template <typename T>
void Generator<T>::set_output_affine(std::vector<T> gain, std::vector<T> offset) {
  if (gain.size() != offset.size() || (!gain.empty() && gain.size() != arch_.motion_channels())) {
    throw ShapeError("generator output affine: expected " + std::to_string(arch_.motion_channels()) +
                     " gains and offsets");
  }
  out_gain_ = std::move(gain);
  out_offset_ = std::move(offset);
}

template <typename T>
nn::ParameterRefs<T> Generator<T>::parameters() {
  nn::ParameterRefs<T> out{&dense_w_, &dense_b_};
  for (std::size_t l = 0; l < conv_w_.size(); ++l) {
    out.push_back(&conv_w_[l]);
    out.push_back(&conv_b_[l]);
  }
  return out;
}

template <typename T>
Discriminator<T>::Discriminator(const Architecture& arch, const AblationFlags& flags, std::mt19937_64& rng)
    : arch_(arch), flags_(flags) {
  arch_.validate();
  std::size_t cin = arch_.motion_channels() + arch_.goal_dims +
                    (flags_.coord_encoding ? static_cast<std::size_t>(arch_.coord.extra_channels()) : 0);
  std::size_t t = arch_.frames;
  for (std::size_t l = 0; l < arch_.disc_channels.size(); ++l) {
    const std::size_t cout = arch_.disc_channels[l];
    const std::string name = "disc.conv" + std::to_string(l);
    conv_w_.push_back(make_param<T>(name + ".w", {cout, cin, arch_.kernel}, cin * arch_.kernel, rng));
    conv_b_.push_back(make_param<T>(name + ".b", {cout}, cin * arch_.kernel, rng));
    cin = cout;
    t /= arch_.disc_strides[l];
  }
  const std::size_t flat = cin * t;
  hidden_w_ = make_param<T>("disc.hidden.w", {arch_.disc_hidden, flat}, flat, rng);
  hidden_b_ = make_param<T>("disc.hidden.b", {arch_.disc_hidden}, flat, rng);
  out_w_ = make_param<T>("disc.out.w", {1, arch_.disc_hidden}, arch_.disc_hidden, rng);
  out_b_ = make_param<T>("disc.out.b", {1}, arch_.disc_hidden, rng);
}

template <typename T>
nn::Var<T> Discriminator<T>::forward(nn::Tape<T>& tape, nn::Var<T> motion, nn::Var<T> goals, Binding binding,
                                     std::vector<LayerShape>* ledger) {
  return run(tape, motion, goals, binding, ledger, nullptr);
}

template <typename T>
nn::Var<T> Discriminator<T>::forward_masked(nn::Tape<T>& tape, nn::Var<T> motion, nn::Var<T> goals,
                                            Binding binding, std::vector<nn::Tensor<T>>& masks) {
  return run(tape, motion, goals, binding, nullptr, &masks);
}

template <typename T>
nn::Var<T> Discriminator<T>::run(nn::Tape<T>& tape, nn::Var<T> motion, nn::Var<T> goals, Binding binding,
                                 std::vector<LayerShape>* ledger, std::vector<nn::Tensor<T>>* masks) {
  const std::size_t batch = motion.dim(0);
  if (motion.shape() != nn::Shape{batch, arch_.motion_channels(), arch_.frames} ||
      goals.shape() != nn::Shape{batch, arch_.goal_dims}) {
    throw ShapeError("discriminator: expected motion [B x " + std::to_string(arch_.motion_channels()) + " x " +
                     std::to_string(arch_.frames) + "] and goals [B x " + std::to_string(arch_.goal_dims) +
                     "], got " + nn::to_string(motion.shape()) + " and " + nn::to_string(goals.shape()));
  }
  const T slope = static_cast<T>(arch_.leaky_slope);
  const bool replay = masks && !masks->empty();
  std::size_t site = 0;
  auto activate = [&](nn::Var<T> x) {
    if (!masks) return nn::leaky_relu(x, slope);
    if (!replay) {
      nn::Tensor<T> m(x.shape());
      for (std::size_t q = 0; q < m.size(); ++q) m[q] = x.value()[q] > 0 ? T(1) : slope;
      masks->push_back(std::move(m));
    } else if (site >= masks->size() || (*masks)[site].shape() != x.shape()) {
      throw ShapeError("discriminator: activation mask does not match input " + nn::to_string(x.shape()));
    }
    return nn::mul(x, tape.constant((*masks)[site++]));
  };
  note(ledger, "position", motion.dim(1), motion.dim(2));
  note(ledger, "goal", goals.dim(1), arch_.frames);
  auto h = nn::concat<T>({motion, nn::tile_time(goals, arch_.frames)}, 1);
  note(ledger, "concat", h.dim(1), h.dim(2));
  if (flags_.coord_encoding) {
    h = coord_code(h, arch_.coord);
    note(ledger, "coordCode", h.dim(1), h.dim(2));
  }
  for (std::size_t l = 0; l < conv_w_.size(); ++l) {
    h = nn::conv1d(h, bind(tape, conv_w_[l], binding), bind(tape, conv_b_[l], binding), arch_.disc_strides[l]);
    note(ledger, "conv", h.dim(1), h.dim(2), arch_.disc_strides[l]);
    h = activate(h);
  }
  h = nn::reshape(h, {batch, h.dim(1) * h.dim(2)});
  h = nn::dense(h, bind(tape, hidden_w_, binding), bind(tape, hidden_b_, binding));
  note(ledger, "dense", h.dim(1), 1);
  h = activate(h);
  h = nn::dense(h, bind(tape, out_w_, binding), bind(tape, out_b_, binding));
  note(ledger, "dense", h.dim(1), 1);
  return h;
}

template <typename T>
nn::ParameterRefs<T> Discriminator<T>::parameters() {
  nn::ParameterRefs<T> out;
  for (std::size_t l = 0; l < conv_w_.size(); ++l) {
    out.push_back(&conv_w_[l]);
    out.push_back(&conv_b_[l]);
  }
  for (auto* p : {&hidden_w_, &hidden_b_, &out_w_, &out_b_}) out.push_back(p);
  return out;
}

template <typename T, typename U>
void copy_parameter_values(const nn::ParameterRefs<T>& from, const nn::ParameterRefs<U>& to) {
  std::map<std::string, const nn::Parameter<T>*> by_name;
  for (const auto* p : from) by_name[p->name] = p;
  for (auto* q : to) {
    auto it = by_name.find(q->name);
    if (it == by_name.end()) throw DataError("parameter '" + q->name + "' missing from source");
    if (it->second->value.shape() != q->value.shape()) {
      throw ShapeError("parameter '" + q->name + "' has shape " + nn::to_string(it->second->value.shape()) +
                       ", expected " + nn::to_string(q->value.shape()));
    }
    const auto& src = it->second->value;
    for (std::size_t i = 0; i < src.size(); ++i) q->value[i] = static_cast<U>(src[i]);
  }
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template void copy_parameter_values(const nn::ParameterRefs<float>&, const nn::ParameterRefs<float>&);
template void copy_parameter_values(const nn::ParameterRefs<float>&, const nn::ParameterRefs<double>&);
template void copy_parameter_values(const nn::ParameterRefs<double>&, const nn::ParameterRefs<float>&);
template void copy_parameter_values(const nn::ParameterRefs<double>&, const nn::ParameterRefs<double>&);

}  // namespace reach
