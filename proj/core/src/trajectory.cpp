#include "semtraj/trajectory.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace semtraj {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "trajectory stream IO assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'T', 'R', 'J'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr float kVisibilityFloor = 1e-3f;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

double Trajectory::visibility_of(int frame, int camera) const {
  if (!alive_at(frame)) return 0.0;
  for (const auto& [cam, prob] : visibility[frame - emerge]) {
    if (cam == camera) return prob;
    if (cam > camera) break;
  }
  return 0.0;
}

void save_trajectories(const std::vector<Trajectory>& trajectories,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write trajectory stream to " +
                             path.string());
  }
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(trajectories.size()));
  for (const Trajectory& tr : trajectories) {
    put<std::uint32_t>(out, tr.id);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tr.emerge));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tr.dissolve));
    for (const auto& p : tr.points) {
      put<float>(out, static_cast<float>(p.x()));
      put<float>(out, static_cast<float>(p.y()));
      put<float>(out, static_cast<float>(p.z()));
    }
    for (const auto& frame_vis : tr.visibility) {
      std::uint16_t kept = 0;
      for (const auto& [cam, prob] : frame_vis) {
        if (prob >= kVisibilityFloor) ++kept;
      }
      put<std::uint16_t>(out, kept);
      for (const auto& [cam, prob] : frame_vis) {
        if (prob < kVisibilityFloor) continue;
        put<std::uint16_t>(out, cam);
        put<float>(out, prob);
      }
    }
  }
  if (!out) {
    throw std::runtime_error("short write to " + path.string());
  }
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read trajectory stream from " +
                             path.string());
  }
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("not a trajectory stream: " + path.string());
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw std::runtime_error("unsupported trajectory stream version");
  }
  const auto count = get<std::uint32_t>(in);
  std::vector<Trajectory> trajectories;
  trajectories.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Trajectory tr;
    tr.id = get<std::uint32_t>(in);
    tr.emerge = static_cast<int>(get<std::uint32_t>(in));
    tr.dissolve = static_cast<int>(get<std::uint32_t>(in));
    if (!in || tr.dissolve < tr.emerge) {
      throw std::runtime_error("corrupt trajectory header in " + path.string());
    }
    const int len = tr.dissolve - tr.emerge + 1;
    tr.points.resize(len);
    for (auto& p : tr.points) {
      const float x = get<float>(in);
      const float y = get<float>(in);
      const float z = get<float>(in);
      p = Eigen::Vector3d(x, y, z);
    }
    tr.visibility.resize(len);
    for (auto& frame_vis : tr.visibility) {
      const auto pairs = get<std::uint16_t>(in);
      frame_vis.reserve(pairs);
      for (std::uint16_t k = 0; k < pairs; ++k) {
        const auto cam = get<std::uint16_t>(in);
        const float prob = get<float>(in);
        frame_vis.emplace_back(cam, prob);
      }
    }
    if (!in) {
      throw std::runtime_error("truncated trajectory stream: " + path.string());
    }
    trajectories.push_back(std::move(tr));
  }
  return trajectories;
}

void export_trajectories_json(const std::vector<Trajectory>& trajectories,
                              const std::filesystem::path& path) {
  json doc;
  doc["format_version"] = kFormatVersion;
  json arr = json::array();
  for (const Trajectory& tr : trajectories) {
    json jt;
    jt["id"] = tr.id;
    jt["emerge"] = tr.emerge;
    jt["dissolve"] = tr.dissolve;
    json pts = json::array();
    for (const auto& p : tr.points) {
      pts.push_back(json::array({p.x(), p.y(), p.z()}));
    }
    jt["points"] = std::move(pts);
    json vis = json::array();
    for (const auto& frame_vis : tr.visibility) {
      json fv = json::array();
      for (const auto& [cam, prob] : frame_vis) {
        if (prob >= kVisibilityFloor) fv.push_back(json::array({cam, prob}));
      }
      vis.push_back(std::move(fv));
    }
    jt["visibility"] = std::move(vis);
    arr.push_back(std::move(jt));
  }
  doc["trajectories"] = std::move(arr);
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write trajectory json to " + path.string());
  }
  out << doc.dump() << '\n';
}

}  // namespace semtraj
