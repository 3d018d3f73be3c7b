#include <array>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "reach/binary_io.hpp"
#include "reach/errors.hpp"
#include "reach/synth.hpp"

namespace reach {
namespace {

constexpr std::array<char, 4> kMagic = {'R', 'G', 'M', 'D'};
constexpr std::uint32_t kFlagLeftHand = 1;
constexpr std::uint32_t kFlagFlipped = 2;
constexpr std::uint32_t kMaxNodes = 1024;
constexpr std::uint32_t kMaxFrames = 1 << 20;

struct Header {
  Representation rep = Representation::absolute;
  SkeletonTopology topology;
  Shape shape;
  Workspace workspace;
  std::uint32_t count = 0;
};

void write_header(io::Writer& w, const Header& h) {
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(h.rep));
  const auto n = static_cast<std::uint32_t>(h.topology.node_count());
  w.u32(n);
  w.u32(static_cast<std::uint32_t>(h.topology.root_index));
  w.u32(static_cast<std::uint32_t>(h.topology.hand_indices[0]));
  w.u32(static_cast<std::uint32_t>(h.topology.hand_indices[1]));
  for (int p : h.topology.parent) w.u32(static_cast<std::uint32_t>(p));
  w.f32s(h.shape.bone_length);
  for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(h.workspace.lo[a]));
  for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(h.workspace.hi[a]));
  w.u32(h.count);
}

SkeletonTopology topology_from(std::vector<int> parent, int root, std::array<int, 2> hands) {
  SkeletonTopology t;
  t.parent = std::move(parent);
  t.root_index = root;
  t.hand_indices = hands;
  const SkeletonTopology standard = standard_topology();
  if (t.parent == standard.parent && root == standard.root_index && hands == standard.hand_indices) {
    t.node_names = standard.node_names;
  } else {
    for (int i = 0; i < t.node_count(); ++i) t.node_names.push_back("node" + std::to_string(i));
  }
  return t;
}

Header read_header(io::Reader& r, const std::string& what) {
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw HeaderError(what + ": not a motion dataset (bad magic)");
  const auto version = r.u32();
  if (version != kDatasetVersion) {
    throw VersionError(what + ": unsupported dataset version " + std::to_string(version) + " (expected " +
                       std::to_string(kDatasetVersion) + ")");
  }
  Header h;
  const auto rep = r.u32();
  if (rep > 1) throw HeaderError(what + ": unknown representation " + std::to_string(rep));
  h.rep = static_cast<Representation>(rep);
  const auto n = r.u32();
  if (n == 0 || n > kMaxNodes) throw HeaderError(what + ": implausible node count " + std::to_string(n));
  const auto root = r.u32();
  const auto hand_l = r.u32();
  const auto hand_r = r.u32();
  if (root >= n || hand_l >= n || hand_r >= n) throw HeaderError(what + ": node index out of range");
  std::vector<int> parent(n);
  for (auto& p : parent) {
    p = static_cast<int>(r.u32());
    if (p < 0 || static_cast<std::uint32_t>(p) >= n) throw HeaderError(what + ": parent index out of range");
  }
  h.topology = topology_from(std::move(parent), static_cast<int>(root),
                             {static_cast<int>(hand_l), static_cast<int>(hand_r)});
  try {
    h.topology.validate();
  } catch (const TopologyError& e) {
    throw HeaderError(what + ": " + e.what());
  }
  h.shape.bone_length.resize(n);
  for (auto& l : h.shape.bone_length) l = r.f32();
  for (int a = 0; a < 3; ++a) h.workspace.lo[a] = r.f32();
  for (int a = 0; a < 3; ++a) h.workspace.hi[a] = r.f32();
  h.count = r.u32();
  return h;
}

void write_meta(io::Writer& w, int frames, double rate, const Goals& g, const SequenceMeta& m) {
  w.u32(static_cast<std::uint32_t>(frames));
  w.f32(static_cast<float>(rate));
  for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(g.pick[a]));
  for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(g.place[a]));
  w.u64(m.seed);
  w.u32((m.left_hand ? kFlagLeftHand : 0u) | (m.flipped ? kFlagFlipped : 0u));
}

struct MetaRecord {
  int frames = 0;
  double rate = 0;
  Goals goals;
  SequenceMeta meta;
};

MetaRecord read_meta(io::Reader& r, const std::string& what, std::size_t k) {
  MetaRecord out;
  const auto frames = r.u32();
  if (frames < 2 || frames > kMaxFrames) {
    throw FormatError(what + ": sequence " + std::to_string(k) + " has invalid frame count " + std::to_string(frames));
  }
  out.frames = static_cast<int>(frames);
  out.rate = r.f32();
  for (int a = 0; a < 3; ++a) out.goals.pick[a] = r.f32();
  for (int a = 0; a < 3; ++a) out.goals.place[a] = r.f32();
  out.meta.seed = r.u64();
  const auto flags = r.u32();
  out.meta.left_hand = (flags & kFlagLeftHand) != 0;
  out.meta.flipped = (flags & kFlagFlipped) != 0;
  return out;
}

void write_vec3s(io::Writer& w, const std::vector<Vec3>& v) {
  for (const auto& p : v)
    for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(p[a]));
}

void read_vec3s(io::Reader& r, std::vector<Vec3>& v) {
  for (auto& p : v)
    for (int a = 0; a < 3; ++a) p[a] = r.f32();
}

void write_sidecar(const std::filesystem::path& path, const Header& h, const std::vector<int>& frame_counts) {
  nlohmann::ordered_json j;
  j["format"] = "RGMD";
  j["version"] = kDatasetVersion;
  j["representation"] = h.rep == Representation::absolute ? "absolute" : "relative";
  j["node_count"] = h.topology.node_count();
  j["root_index"] = h.topology.root_index;
  j["hand_indices"] = h.topology.hand_indices;
  j["node_names"] = h.topology.node_names;
  j["parent"] = h.topology.parent;
  j["bone_length"] = h.shape.bone_length;
  j["workspace"] = {{"lo", {h.workspace.lo.x(), h.workspace.lo.y(), h.workspace.lo.z()}},
                    {"hi", {h.workspace.hi.x(), h.workspace.hi.y(), h.workspace.hi.z()}}};
  j["sequence_count"] = h.count;
  j["frame_counts"] = frame_counts;
  j["topology_hash"] = h.topology.hash();
  std::ofstream os(path.string() + ".json");
  if (!os) throw DataError("cannot write " + path.string() + ".json");
  os << j.dump(2) << '\n';
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return is;
}

void check_trailing(io::Reader& r, const std::string& what) {
  if (!r.at_end()) throw FormatError(what + ": trailing bytes after the last sequence");
}

bool same_structure(const SkeletonTopology& a, const SkeletonTopology& b) {
  return a.parent == b.parent && a.root_index == b.root_index && a.hand_indices == b.hand_indices;
}

}  // namespace

void write_dataset(const MotionDataset& ds, const std::filesystem::path& path) {
  ds.topology.validate();
  std::ofstream os = open_out(path);
  io::Writer w(os);
  Header h{Representation::absolute, ds.topology, ds.shape, ds.workspace, static_cast<std::uint32_t>(ds.sequences.size())};
  write_header(w, h);
  std::vector<int> frame_counts;
  for (const auto& s : ds.sequences) {
    if (s.motion.node_count != ds.topology.node_count()) throw TopologyError("write_dataset: node count mismatch");
    write_meta(w, s.motion.frame_count, s.motion.frame_rate, s.goals, s.meta);
    write_vec3s(w, s.motion.positions);
    frame_counts.push_back(s.motion.frame_count);
  }
  os.flush();
  if (!os) throw DataError("write failed: " + path.string());
  write_sidecar(path, h, frame_counts);
}

MotionDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is = open_in(path);
  const std::string what = path.string();
  io::Reader r(is, what);
  Header h = read_header(r, what);
  if (h.rep != Representation::absolute) throw FormatError(what + ": holds relative motion, expected absolute");
  MotionDataset ds;
  ds.topology = h.topology;
  ds.shape = h.shape;
  ds.workspace = h.workspace;
  ds.sequences.reserve(h.count);
  for (std::uint32_t k = 0; k < h.count; ++k) {
    MetaRecord m = read_meta(r, what, k);
    Sequence s;
    s.goals = m.goals;
    s.meta = m.meta;
    s.motion = AbsoluteMotion(h.topology.node_count(), m.frames, m.rate);
    read_vec3s(r, s.motion.positions);
    ds.sequences.push_back(std::move(s));
  }
  check_trailing(r, what);
  return ds;
}

MotionDataset read_dataset(const std::filesystem::path& path, const SkeletonTopology& expected) {
  MotionDataset ds = read_dataset(path);
  if (!same_structure(ds.topology, expected)) {
    throw TopologyError(path.string() + ": stored topology does not match the expected skeleton");
  }
  return ds;
}

void write_relative_dataset(const RelativeDataset& ds, const std::filesystem::path& path) {
  ds.topology.validate();
  std::ofstream os = open_out(path);
  io::Writer w(os);
  Header h{Representation::relative, ds.topology, ds.shape, ds.workspace, static_cast<std::uint32_t>(ds.sequences.size())};
  write_header(w, h);
  std::vector<int> frame_counts;
  const auto n = static_cast<std::size_t>(ds.topology.node_count());
  for (const auto& s : ds.sequences) {
    if (static_cast<std::size_t>(s.motion.node_count) != n || s.motion.frames.size() != n) {
      throw TopologyError("write_relative_dataset: node count mismatch");
    }
    write_meta(w, s.motion.frame_count, s.motion.frame_rate, s.goals, s.meta);
    for (const auto& f : s.motion.frames)
      for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) w.f32(static_cast<float>(f(row, col)));
    for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(s.origin[a]));
    write_vec3s(w, s.motion.directions);
    frame_counts.push_back(s.motion.frame_count);
  }
  os.flush();
  if (!os) throw DataError("write failed: " + path.string());
  write_sidecar(path, h, frame_counts);
}

RelativeDataset read_relative_dataset(const std::filesystem::path& path) {
  std::ifstream is = open_in(path);
  const std::string what = path.string();
  io::Reader r(is, what);
  Header h = read_header(r, what);
  if (h.rep != Representation::relative) throw FormatError(what + ": holds absolute motion, expected relative");
  RelativeDataset ds;
  ds.topology = h.topology;
  ds.shape = h.shape;
  ds.workspace = h.workspace;
  const int n = h.topology.node_count();
  for (std::uint32_t k = 0; k < h.count; ++k) {
    MetaRecord m = read_meta(r, what, k);
    RelativeSequence s;
    s.goals = m.goals;
    s.meta = m.meta;
    s.motion.node_count = n;
    s.motion.frame_count = m.frames;
    s.motion.frame_rate = m.rate;
    s.motion.frames.resize(n);
    for (auto& f : s.motion.frames)
      for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) f(row, col) = r.f32();
    for (int a = 0; a < 3; ++a) s.origin[a] = r.f32();
    s.motion.directions.assign(static_cast<std::size_t>(n) * m.frames, Vec3::Zero());
    read_vec3s(r, s.motion.directions);
    ds.sequences.push_back(std::move(s));
  }
  check_trailing(r, what);
  return ds;
}

Representation peek_representation(const std::filesystem::path& path) {
  std::ifstream is = open_in(path);
  io::Reader r(is, path.string());
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw HeaderError(path.string() + ": not a motion dataset (bad magic)");
  const auto version = r.u32();
  if (version != kDatasetVersion) throw VersionError(path.string() + ": unsupported dataset version " + std::to_string(version));
  const auto rep = r.u32();
  if (rep > 1) throw HeaderError(path.string() + ": unknown representation " + std::to_string(rep));
  return static_cast<Representation>(rep);
}

std::size_t dataset_file_size(int node_count, const std::vector<int>& frame_counts) {
  const auto n = static_cast<std::size_t>(node_count);
  std::size_t size = 56 + 8 * n;
  for (int f : frame_counts) size += 44 + 12 * n * static_cast<std::size_t>(f);
  return size;
}

}  // namespace reach
