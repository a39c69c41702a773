#pragma once

#include <filesystem>
#include <string>

#include "semtraj/geometry.hpp"

namespace semtraj {

/// Serializes a rig to the versioned JSON document described in
/// docs/file-formats.md (format_version, frame_rate, cameras[] with id,
/// fx, fy, cx, cy, rotation row-major[9], center[3], width, height).
std::string rig_to_json(const Rig& rig);

/// Parses and validates a rig document. Throws std::invalid_argument on a
/// missing/unknown format_version, absent fields, or an invalid rig.
Rig rig_from_json(const std::string& text);

void save_rig(const Rig& rig, const std::filesystem::path& path);
Rig load_rig(const std::filesystem::path& path);

}  // namespace semtraj
