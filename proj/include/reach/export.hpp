#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "reach/gan.hpp"
#include "reach/motion.hpp"
#include "reach/skeleton.hpp"

namespace reach {

/// Rows of `frame,node,x,y,z` after a header line.
void write_csv(std::ostream& os, const AbsoluteMotion& m);
AbsoluteMotion read_csv(std::istream& is, double frame_rate = 30.0);

/// BVH with one positional channel triple per joint and identity rotations.
/// Offsets come from the first frame; motion lines carry world positions
/// relative to each joint's parent.
void write_bvh(std::ostream& os, const AbsoluteMotion& m, const SkeletonTopology& topo);
/// Reads files produced by write_bvh. Throws FormatError on anything else.
AbsoluteMotion read_bvh(std::istream& is, const SkeletonTopology& topo);

/// Side (y-z) and top (x-y) projections of every frame, with optional goal markers.
void write_svg(std::ostream& os, const AbsoluteMotion& m, const SkeletonTopology& topo,
               const std::optional<Goals>& goals = std::nullopt);

enum class ExportFormat { csv, bvh, svg };
/// Picks the format from the file extension; throws std::invalid_argument otherwise.
ExportFormat format_from_path(const std::filesystem::path& path);
void export_motion(const std::filesystem::path& path, const AbsoluteMotion& m, const SkeletonTopology& topo,
                   const std::optional<Goals>& goals = std::nullopt);

}  // namespace reach
