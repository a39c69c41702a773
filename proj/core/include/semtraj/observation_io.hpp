#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "semtraj/synthesis.hpp"

namespace semtraj {

struct ObservationSetMeta {
  int format_version = 1;
  int frames = 0;
  int cameras = 0;
  std::uint64_t count = 0;
};

/// Writes the little-endian record stream (frame u32, trajectory_id u32,
/// camera u16, x f32, y f32) plus a JSON sidecar header at
/// "<bin_path>.json" carrying the meta fields.
void save_observations(const std::vector<ObservationRecord>& records,
                       const ObservationSetMeta& meta,
                       const std::filesystem::path& bin_path);

/// Loads the record stream; validates record size against the sidecar count.
std::vector<ObservationRecord> load_observations(
    const std::filesystem::path& bin_path, ObservationSetMeta* meta = nullptr);

/// Debug emitter: frame,trajectory_id,camera,x,y rows with a header line.
void write_observations_csv(const std::vector<ObservationRecord>& records,
                            const std::filesystem::path& csv_path);

}  // namespace semtraj
