#include "reach/export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "reach/errors.hpp"

namespace reach {

namespace {

std::vector<std::vector<int>> children_of(const SkeletonTopology& topo) {
  std::vector<std::vector<int>> kids(topo.node_count());
  for (int i = 0; i < topo.node_count(); ++i) {
    if (i != topo.root_index) kids[topo.parent[i]].push_back(i);
  }
  return kids;
}

std::string joint_name(const SkeletonTopology& topo, int i) {
  if (i < static_cast<int>(topo.node_names.size()) && !topo.node_names[i].empty()) {
    std::string n = topo.node_names[i];
    std::replace_if(n.begin(), n.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }, '_');
    return n;
  }
  return "joint" + std::to_string(i);
}

void check_topology(const AbsoluteMotion& m, const SkeletonTopology& topo) {
  if (m.node_count != topo.node_count()) {
    throw TopologyError("motion has " + std::to_string(m.node_count) + " nodes, topology has " +
                        std::to_string(topo.node_count()));
  }
}

}  // namespace

void write_csv(std::ostream& os, const AbsoluteMotion& m) {
  os << "frame,node,x,y,z\n" << std::setprecision(9);
  for (int j = 0; j < m.frame_count; ++j)
    for (int i = 0; i < m.node_count; ++i) {
      const auto& p = m.at(i, j);
      os << j << ',' << i << ',' << p.x() << ',' << p.y() << ',' << p.z() << '\n';
    }
}

AbsoluteMotion read_csv(std::istream& is, double frame_rate) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("frame,node,x,y,z", 0) != 0) throw HeaderError("csv: missing header");
  struct Row {
    int frame, node;
    Vec3 p;
  };
  std::vector<Row> rows;
  int frames = 0, nodes = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Row r;
    if (!(ls >> r.frame >> r.node >> r.p.x() >> r.p.y() >> r.p.z()) || r.frame < 0 || r.node < 0) {
      throw FormatError("csv: malformed row '" + line + "'");
    }
    frames = std::max(frames, r.frame + 1);
    nodes = std::max(nodes, r.node + 1);
    rows.push_back(r);
  }
  if (rows.size() != static_cast<std::size_t>(frames) * nodes) throw TruncatedError("csv: missing rows");
  AbsoluteMotion m(nodes, frames, frame_rate);
  for (const auto& r : rows) m.at(r.node, r.frame) = r.p;
  return m;
}

void write_bvh(std::ostream& os, const AbsoluteMotion& m, const SkeletonTopology& topo) {
  check_topology(m, topo);
  const auto kids = children_of(topo);
  std::vector<int> order;
  os << std::setprecision(9) << "HIERARCHY\n";
  auto emit = [&](auto&& self, int i, int depth) -> void {
    const std::string pad(2 * depth, ' ');
    order.push_back(i);
    const Vec3 offset = i == topo.root_index ? Vec3::Zero() : Vec3(m.at(i, 0) - m.at(topo.parent[i], 0));
    os << pad << (i == topo.root_index ? "ROOT " : "JOINT ") << joint_name(topo, i) << '\n' << pad << "{\n";
    os << pad << "  OFFSET " << offset.x() << ' ' << offset.y() << ' ' << offset.z() << '\n';
    os << pad << "  CHANNELS 3 Xposition Yposition Zposition\n";
    if (kids[i].empty()) {
      os << pad << "  End Site\n" << pad << "  {\n" << pad << "    OFFSET 0 0 0\n" << pad << "  }\n";
    }
    for (int c : kids[i]) self(self, c, depth + 1);
    os << pad << "}\n";
  };
  emit(emit, topo.root_index, 0);
  os << "MOTION\nFrames: " << m.frame_count << "\nFrame Time: " << 1.0 / m.frame_rate << '\n';
  for (int j = 0; j < m.frame_count; ++j) {
    for (std::size_t k = 0; k < order.size(); ++k) {
      const int i = order[k];
      const Vec3 v = i == topo.root_index ? m.at(i, j) : Vec3(m.at(i, j) - m.at(topo.parent[i], j));
      os << (k ? " " : "") << v.x() << ' ' << v.y() << ' ' << v.z();
    }
    os << '\n';
  }
}

AbsoluteMotion read_bvh(std::istream& is, const SkeletonTopology& topo) {
  std::map<std::string, int> by_name;
  for (int i = 0; i < topo.node_count(); ++i) by_name[joint_name(topo, i)] = i;

  auto expect = [&](const std::string& want) {
    std::string tok;
    if (!(is >> tok)) throw TruncatedError("bvh: expected '" + want + "'");
    if (tok != want) throw FormatError("bvh: expected '" + want + "', found '" + tok + "'");
  };
  auto number = [&]() {
    double v;
    if (!(is >> v)) throw TruncatedError("bvh: expected a number");
    return v;
  };

  std::string tok;
  if (!(is >> tok) || tok != "HIERARCHY") throw HeaderError("bvh: missing HIERARCHY");
  std::vector<int> order;
  std::vector<int> stack;
  std::vector<int> parent(topo.node_count(), -2);
  while (is >> tok && tok != "MOTION") {
    if (tok == "ROOT" || tok == "JOINT") {
      std::string name;
      is >> name;
      const auto it = by_name.find(name);
      if (it == by_name.end()) throw TopologyError("bvh: unknown joint '" + name + "'");
      const int i = it->second;
      parent[i] = stack.empty() ? -1 : stack.back();
      order.push_back(i);
      expect("{");
      expect("OFFSET");
      number(), number(), number();
      expect("CHANNELS");
      if (number() != 3) throw FormatError("bvh: only positional channels are supported");
      expect("Xposition"), expect("Yposition"), expect("Zposition");
      stack.push_back(i);
    } else if (tok == "End") {
      expect("Site"), expect("{"), expect("OFFSET");
      number(), number(), number();
      expect("}");
    } else if (tok == "}") {
      if (stack.empty()) throw FormatError("bvh: unbalanced braces");
      stack.pop_back();
    } else {
      throw FormatError("bvh: unexpected token '" + tok + "'");
    }
  }
  if (tok != "MOTION") throw TruncatedError("bvh: missing MOTION");
  for (int i = 0; i < topo.node_count(); ++i) {
    const int want = i == topo.root_index ? -1 : topo.parent[i];
    if (parent[i] != want) throw TopologyError("bvh: hierarchy differs from topology at " + joint_name(topo, i));
  }
  expect("Frames:");
  const double frames = number();
  expect("Frame"), expect("Time:");
  const double dt = number();
  if (frames < 1 || frames != std::floor(frames) || !(dt > 0)) throw FormatError("bvh: bad frame header");

  AbsoluteMotion m(topo.node_count(), static_cast<int>(frames), 1.0 / dt);
  // Parents precede children in `order`, so one pass accumulates world positions.
  for (int j = 0; j < m.frame_count; ++j)
    for (int i : order) {
      Vec3 v;
      v.x() = number(), v.y() = number(), v.z() = number();
      m.at(i, j) = i == topo.root_index ? v : Vec3(m.at(topo.parent[i], j) + v);
    }
  if (is >> tok) throw FormatError("bvh: trailing data");
  return m;
}

void write_svg(std::ostream& os, const AbsoluteMotion& m, const SkeletonTopology& topo,
               const std::optional<Goals>& goals) {
  check_topology(m, topo);
  constexpr double panel = 400, margin = 20;
  // Panel 0: side view (y right, z up). Panel 1: top view (x right, y up).
  const std::array<std::array<int, 2>, 2> axes{{{1, 2}, {0, 1}}};
  const std::array<const char*, 2> titles{"side (y, z)", "top (x, y)"};

  std::array<Vec3, 2> box{Vec3::Constant(std::numeric_limits<double>::infinity()),
                          Vec3::Constant(-std::numeric_limits<double>::infinity())};
  auto grow = [&](const Vec3& p) {
    box[0] = box[0].cwiseMin(p);
    box[1] = box[1].cwiseMax(p);
  };
  for (const auto& p : m.positions) grow(p);
  if (goals) grow(goals->pick), grow(goals->place);
  const double span = std::max((box[1] - box[0]).maxCoeff(), 1e-6);
  const double unit = (panel - 2 * margin) / span;

  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * panel << "\" height=\"" << panel + 20
     << "\" viewBox=\"0 0 " << 2 * panel << ' ' << panel + 20 << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int v = 0; v < 2; ++v) {
    const int ax = axes[v][0], ay = axes[v][1];
    const double x0 = v * panel;
    auto px = [&](const Vec3& p) { return x0 + margin + (p[ax] - box[0][ax]) * unit; };
    auto py = [&](const Vec3& p) { return 20 + panel - margin - (p[ay] - box[0][ay]) * unit; };
    os << "<text x=\"" << x0 + margin << "\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">" << titles[v]
       << "</text>\n";
    os << "<g stroke-width=\"1\" fill=\"none\">\n";
    for (int j = 0; j < m.frame_count; ++j) {
      const double shade = m.frame_count > 1 ? 0.85 * (1.0 - static_cast<double>(j) / (m.frame_count - 1)) : 0.0;
      const int g = static_cast<int>(255 * shade);
      os << "<path stroke=\"rgb(" << g << ',' << g << ',' << 255 << ")\" d=\"";
      for (int i = 0; i < m.node_count; ++i) {
        if (i == topo.root_index) continue;
        const auto& a = m.at(topo.parent[i], j);
        const auto& b = m.at(i, j);
        os << 'M' << px(a) << ' ' << py(a) << 'L' << px(b) << ' ' << py(b);
      }
      os << "\"/>\n";
    }
    for (int hand : topo.hand_indices) {
      os << "<polyline stroke=\"black\" points=\"";
      for (int j = 0; j < m.frame_count; ++j) os << px(m.at(hand, j)) << ',' << py(m.at(hand, j)) << ' ';
      os << "\"/>\n";
    }
    os << "</g>\n";
    if (goals) {
      os << "<circle cx=\"" << px(goals->pick) << "\" cy=\"" << py(goals->pick)
         << "\" r=\"5\" fill=\"green\"><title>pick</title></circle>\n";
      os << "<circle cx=\"" << px(goals->place) << "\" cy=\"" << py(goals->place)
         << "\" r=\"5\" fill=\"red\"><title>place</title></circle>\n";
    }
  }
  os << "</svg>\n";
}

ExportFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return ExportFormat::csv;
  if (ext == ".bvh") return ExportFormat::bvh;
  if (ext == ".svg") return ExportFormat::svg;
  throw std::invalid_argument("unknown export format '" + ext + "' (expected .csv, .bvh or .svg)");
}

void export_motion(const std::filesystem::path& path, const AbsoluteMotion& m, const SkeletonTopology& topo,
                   const std::optional<Goals>& goals) {
  const auto fmt = format_from_path(path);
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  switch (fmt) {
    case ExportFormat::csv: write_csv(os, m); break;
    case ExportFormat::bvh: write_bvh(os, m, topo); break;
    case ExportFormat::svg: write_svg(os, m, topo, goals); break;
  }
  if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace reach
