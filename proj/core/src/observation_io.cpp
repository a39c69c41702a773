#include "semtraj/observation_io.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace semtraj {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "observation record IO assumes a little-endian host");

constexpr size_t kRecordBytes = 4 + 4 + 2 + 4 + 4;

void pack(const ObservationRecord& r, char* out) {
  std::memcpy(out + 0, &r.frame, 4);
  std::memcpy(out + 4, &r.trajectory_id, 4);
  std::memcpy(out + 8, &r.camera, 2);
  std::memcpy(out + 10, &r.x, 4);
  std::memcpy(out + 14, &r.y, 4);
}

ObservationRecord unpack(const char* in) {
  ObservationRecord r;
  std::memcpy(&r.frame, in + 0, 4);
  std::memcpy(&r.trajectory_id, in + 4, 4);
  std::memcpy(&r.camera, in + 8, 2);
  std::memcpy(&r.x, in + 10, 4);
  std::memcpy(&r.y, in + 14, 4);
  return r;
}

std::filesystem::path sidecar_path(const std::filesystem::path& bin_path) {
  std::filesystem::path p = bin_path;
  p += ".json";
  return p;
}

}  // namespace

void save_observations(const std::vector<ObservationRecord>& records,
                       const ObservationSetMeta& meta,
                       const std::filesystem::path& bin_path) {
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write observations to " +
                             bin_path.string());
  }
  std::vector<char> buf(kRecordBytes * 4096);
  size_t in_buf = 0;
  for (const ObservationRecord& r : records) {
    pack(r, buf.data() + in_buf * kRecordBytes);
    if (++in_buf == 4096) {
      out.write(buf.data(), static_cast<std::streamsize>(in_buf * kRecordBytes));
      in_buf = 0;
    }
  }
  if (in_buf > 0) {
    out.write(buf.data(), static_cast<std::streamsize>(in_buf * kRecordBytes));
  }
  if (!out) {
    throw std::runtime_error("short write to " + bin_path.string());
  }

  json side;
  side["format_version"] = meta.format_version;
  side["frames"] = meta.frames;
  side["cameras"] = meta.cameras;
  side["count"] = records.size();
  std::ofstream sout(sidecar_path(bin_path));
  if (!sout) {
    throw std::runtime_error("cannot write observation sidecar for " +
                             bin_path.string());
  }
  sout << side.dump(2) << '\n';
}

std::vector<ObservationRecord> load_observations(
    const std::filesystem::path& bin_path, ObservationSetMeta* meta) {
  std::ifstream side_in(sidecar_path(bin_path));
  if (!side_in) {
    throw std::runtime_error("missing observation sidecar for " +
                             bin_path.string());
  }
  json side;
  side_in >> side;
  ObservationSetMeta m;
  m.format_version = side.at("format_version").get<int>();
  if (m.format_version != 1) {
    throw std::runtime_error("unsupported observation format_version");
  }
  m.frames = side.at("frames").get<int>();
  m.cameras = side.at("cameras").get<int>();
  m.count = side.at("count").get<std::uint64_t>();

  std::ifstream in(bin_path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read observations from " +
                             bin_path.string());
  }
  std::vector<ObservationRecord> records;
  records.reserve(m.count);
  std::vector<char> buf(kRecordBytes * 4096);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const std::streamsize got = in.gcount();
    if (got % static_cast<std::streamsize>(kRecordBytes) != 0) {
      throw std::runtime_error("truncated observation record in " +
                               bin_path.string());
    }
    for (std::streamsize off = 0; off < got;
         off += static_cast<std::streamsize>(kRecordBytes)) {
      records.push_back(unpack(buf.data() + off));
    }
  }
  if (records.size() != m.count) {
    throw std::runtime_error("observation count mismatch against sidecar in " +
                             bin_path.string());
  }
  if (meta) *meta = m;
  return records;
}

void write_observations_csv(const std::vector<ObservationRecord>& records,
                            const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) {
    throw std::runtime_error("cannot write csv to " + csv_path.string());
  }
  out << "frame,trajectory_id,camera,x,y\n";
  for (const ObservationRecord& r : records) {
    out << r.frame << ',' << r.trajectory_id << ',' << r.camera << ',' << r.x
        << ',' << r.y << '\n';
  }
}

}  // namespace semtraj
