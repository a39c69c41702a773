#include "semtraj/rig_io.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace semtraj {

using nlohmann::json;

namespace {
constexpr int kRigFormatVersion = 1;
}

std::string rig_to_json(const Rig& rig) {
  json doc;
  doc["format_version"] = kRigFormatVersion;
  doc["frame_rate"] = rig.frame_rate;
  json cams = json::array();
  for (const Camera& c : rig.cameras) {
    json jc;
    jc["id"] = c.id;
    jc["fx"] = c.intrinsics.fx;
    jc["fy"] = c.intrinsics.fy;
    jc["cx"] = c.intrinsics.cx;
    jc["cy"] = c.intrinsics.cy;
    json rot = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) rot.push_back(c.rotation(r, k));
    }
    jc["rotation"] = rot;
    jc["center"] = {c.center.x(), c.center.y(), c.center.z()};
    jc["width"] = c.width;
    jc["height"] = c.height;
    cams.push_back(std::move(jc));
  }
  doc["cameras"] = std::move(cams);
  return doc.dump(2);
}

Rig rig_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("rig json: ") + e.what());
  }
  if (!doc.contains("format_version") ||
      doc["format_version"].get<int>() != kRigFormatVersion) {
    throw std::invalid_argument("rig json: missing or unsupported format_version");
  }
  Rig rig;
  if (!doc.contains("frame_rate") || !doc.contains("cameras")) {
    throw std::invalid_argument("rig json: frame_rate and cameras are required");
  }
  rig.frame_rate = doc["frame_rate"].get<double>();
  for (const json& jc : doc["cameras"]) {
    Camera c;
    try {
      c.id = jc.at("id").get<int>();
      c.intrinsics.fx = jc.at("fx").get<double>();
      c.intrinsics.fy = jc.at("fy").get<double>();
      c.intrinsics.cx = jc.at("cx").get<double>();
      c.intrinsics.cy = jc.at("cy").get<double>();
      const auto& rot = jc.at("rotation");
      if (rot.size() != 9) {
        throw std::invalid_argument("rotation must have 9 entries");
      }
      for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) {
          c.rotation(r, k) = rot[3 * r + k].get<double>();
        }
      }
      const auto& ctr = jc.at("center");
      if (ctr.size() != 3) {
        throw std::invalid_argument("center must have 3 entries");
      }
      c.center = Eigen::Vector3d(ctr[0].get<double>(), ctr[1].get<double>(),
                                 ctr[2].get<double>());
      c.width = jc.at("width").get<int>();
      c.height = jc.at("height").get<int>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(std::string("rig json camera: ") + e.what());
    }
    rig.cameras.push_back(std::move(c));
  }
  rig.validate();
  return rig;
}

void save_rig(const Rig& rig, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write rig file " + path.string());
  }
  out << rig_to_json(rig) << '\n';
}

Rig load_rig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read rig file " + path.string());
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return rig_from_json(text);
}

}  // namespace semtraj
