#include "semtraj/scene.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "semtraj/seeding.hpp"

namespace semtraj {

using nlohmann::json;

namespace {

Eigen::Vector3d vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw std::invalid_argument(std::string(what) + " must be a 3-array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_array(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

void check_rotation(const Eigen::Matrix3d& R, const std::string& what) {
  if ((R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
      1e-9) {
    throw std::invalid_argument(what + ": rotation is not orthonormal");
  }
  if (std::abs(R.determinant() - 1.0) > 1e-9) {
    throw std::invalid_argument(what + ": rotation determinant is not +1");
  }
}

}  // namespace

void RigidBody::validate(int expected_frames) const {
  if (label < 1) {
    throw std::invalid_argument("body label must be >= 1");
  }
  if (points.size() < 4) {
    throw std::invalid_argument("body needs at least 4 points");
  }
  // Non-coplanarity: the centered cloud must span 3 dimensions.
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Eigen::MatrixXd centered(points.size(), 3);
  for (size_t i = 0; i < points.size(); ++i) {
    centered.row(i) = (points[i] - mean).transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto& sv = svd.singularValues();
  if (sv(2) <= 1e-9 * std::max(1.0, sv(0))) {
    throw std::invalid_argument("body points are coplanar");
  }
  if (static_cast<int>(motion.size()) != expected_frames) {
    throw std::invalid_argument("body motion must cover every frame");
  }
  for (size_t t = 0; t < motion.size(); ++t) {
    check_rotation(motion[t].rotation, "pose at frame " + std::to_string(t));
  }
}

void SceneSpec::validate() const {
  if (frames < 2) throw std::invalid_argument("frames must be >= 2");
  const RigLayout& rl = rig_layout;
  if (rl.radius <= 0.0) throw std::invalid_argument("rig radius must be positive");
  if (rl.row_heights.empty() ||
      rl.row_heights.size() != rl.cameras_per_row.size()) {
    throw std::invalid_argument(
        "row_heights and cameras_per_row must be equal-length and non-empty");
  }
  for (double h : rl.row_heights) {
    if (h <= 0.0) throw std::invalid_argument("row heights must be positive");
  }
  int total = 0;
  for (int n : rl.cameras_per_row) {
    if (n < 1) throw std::invalid_argument("cameras_per_row entries must be >= 1");
    total += n;
  }
  if (total < 2) throw std::invalid_argument("rig needs at least 2 cameras");
  if (rl.frame_rate <= 0.0) throw std::invalid_argument("frame_rate must be positive");
  if (rl.focal_px <= 0.0) throw std::invalid_argument("focal_px must be positive");
  if (rl.width <= 0 || rl.height <= 0) {
    throw std::invalid_argument("image size must be positive");
  }
  if (rl.arc_degrees <= 0.0 || rl.arc_degrees > 360.0) {
    throw std::invalid_argument("arc_degrees must be in (0, 360]");
  }
  if (noise.sigma_obs < 0.0) throw std::invalid_argument("sigma_obs must be >= 0");
  if (noise.confusion_rate < 0.0 || noise.confusion_rate >= 1.0) {
    throw std::invalid_argument("confusion_rate must be in [0, 1)");
  }
  if (noise.false_detection_rate < 0.0) {
    throw std::invalid_argument("false_detection_rate must be >= 0");
  }
  if (noise.bleed_radius_px < 0.0) {
    throw std::invalid_argument("bleed_radius_px must be >= 0");
  }
  if (noise.deterministic_confidence &&
      (noise.confusion_rate > 0.0 || noise.false_detection_rate > 0.0)) {
    throw std::invalid_argument(
        "deterministic_confidence excludes confusion and false detections");
  }
  if (occlusion_radius_px <= 0.0) {
    throw std::invalid_argument("occlusion_radius_px must be positive");
  }
  if (bodies.empty()) throw std::invalid_argument("scene needs at least one body");
  int max_label = 0;
  for (const RigidBody& b : bodies) {
    b.validate(frames);
    max_label = std::max(max_label, b.label);
  }
  if (num_classes < 0) throw std::invalid_argument("num_classes must be >= 0");
  if (num_classes > 0 && num_classes < max_label) {
    throw std::invalid_argument("num_classes smaller than largest body label");
  }
  if (noise.confusion_rate > 0.0 && label_count() < 2) {
    throw std::invalid_argument("confusion requires at least 2 classes");
  }
}

int SceneSpec::label_count() const {
  if (num_classes > 0) return num_classes;
  int max_label = 0;
  for (const RigidBody& b : bodies) max_label = std::max(max_label, b.label);
  return max_label;
}

int SceneSpec::camera_count() const {
  int total = 0;
  for (int n : rig_layout.cameras_per_row) total += n;
  return total;
}

std::vector<Eigen::Vector3d> ball_points(double radius, int count,
                                         std::uint64_t seed) {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(count);
  SplitMix64 rng(seed);
  while (static_cast<int>(pts.size()) < count) {
    const Eigen::Vector3d p(2.0 * rng.unit() - 1.0, 2.0 * rng.unit() - 1.0,
                            2.0 * rng.unit() - 1.0);
    if (p.squaredNorm() <= 1.0) pts.push_back(radius * p);
  }
  return pts;
}

std::vector<Eigen::Vector3d> box_points(const Eigen::Vector3d& half_extents,
                                        int count, std::uint64_t seed) {
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(count);
  SplitMix64 rng(seed);
  for (int i = 0; i < count; ++i) {
    pts.emplace_back(half_extents.x() * (2.0 * rng.unit() - 1.0),
                     half_extents.y() * (2.0 * rng.unit() - 1.0),
                     half_extents.z() * (2.0 * rng.unit() - 1.0));
  }
  return pts;
}

std::vector<Eigen::Vector3d> grid_points(const Eigen::Vector3d& half_extents,
                                         const Eigen::Vector3i& dims) {
  if (dims.minCoeff() < 1) {
    throw std::invalid_argument("grid dims must be >= 1");
  }
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(static_cast<size_t>(dims.x()) * dims.y() * dims.z());
  auto coord = [](double he, int n, int i) {
    return n == 1 ? 0.0 : -he + 2.0 * he * i / (n - 1);
  };
  for (int ix = 0; ix < dims.x(); ++ix) {
    for (int iy = 0; iy < dims.y(); ++iy) {
      for (int iz = 0; iz < dims.z(); ++iz) {
        pts.emplace_back(coord(half_extents.x(), dims.x(), ix),
                         coord(half_extents.y(), dims.y(), iy),
                         coord(half_extents.z(), dims.z(), iz));
      }
    }
  }
  return pts;
}

std::vector<Pose> static_motion(int frames, const Eigen::Vector3d& position) {
  std::vector<Pose> poses(frames);
  for (Pose& p : poses) p.translation = position;
  return poses;
}

std::vector<Pose> linear_motion(int frames, const Eigen::Vector3d& start,
                                const Eigen::Vector3d& velocity, double dt) {
  std::vector<Pose> poses(frames);
  for (int t = 0; t < frames; ++t) {
    poses[t].translation = start + velocity * (t * dt);
  }
  return poses;
}

std::vector<Pose> orbit_motion(int frames, const Eigen::Vector3d& center,
                               double radius, double angular_speed,
                               double phase, double dt) {
  std::vector<Pose> poses(frames);
  for (int t = 0; t < frames; ++t) {
    const double a = phase + angular_speed * t * dt;
    poses[t].rotation =
        Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    poses[t].translation =
        center + radius * Eigen::Vector3d(std::cos(a), std::sin(a), 0.0);
  }
  return poses;
}

std::vector<Pose> spin_motion(int frames, const Eigen::Vector3d& position,
                              const Eigen::Vector3d& axis,
                              double angular_speed, double dt) {
  if (axis.norm() < 1e-12) {
    throw std::invalid_argument("spin axis must be nonzero");
  }
  const Eigen::Vector3d ax = axis.normalized();
  std::vector<Pose> poses(frames);
  for (int t = 0; t < frames; ++t) {
    poses[t].rotation =
        Eigen::AngleAxisd(angular_speed * t * dt, ax).toRotationMatrix();
    poses[t].translation = position;
  }
  return poses;
}

namespace {

std::vector<Eigen::Vector3d> shape_from_json(const json& j,
                                             std::uint64_t shape_seed) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "ball") {
    return ball_points(j.at("radius").get<double>(), j.at("count").get<int>(),
                       shape_seed);
  }
  if (kind == "box") {
    return box_points(vec3(j.at("half_extents"), "half_extents"),
                      j.at("count").get<int>(), shape_seed);
  }
  if (kind == "grid") {
    const auto& d = j.at("dims");
    if (!d.is_array() || d.size() != 3) {
      throw std::invalid_argument("grid dims must be a 3-array");
    }
    return grid_points(
        vec3(j.at("half_extents"), "half_extents"),
        Eigen::Vector3i(d[0].get<int>(), d[1].get<int>(), d[2].get<int>()));
  }
  if (kind == "points") {
    std::vector<Eigen::Vector3d> pts;
    for (const json& p : j.at("points")) pts.push_back(vec3(p, "point"));
    return pts;
  }
  throw std::invalid_argument("unknown shape kind: " + kind);
}

std::vector<Pose> motion_from_json(const json& j, int frames, double dt) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "static") {
    return static_motion(frames, vec3(j.at("position"), "position"));
  }
  if (kind == "linear") {
    return linear_motion(frames, vec3(j.at("start"), "start"),
                         vec3(j.at("velocity"), "velocity"), dt);
  }
  if (kind == "orbit") {
    return orbit_motion(frames, vec3(j.at("center"), "center"),
                        j.at("radius").get<double>(),
                        j.at("angular_speed").get<double>(),
                        j.value("phase", 0.0), dt);
  }
  if (kind == "spin") {
    return spin_motion(frames, vec3(j.at("position"), "position"),
                       vec3(j.at("axis"), "axis"),
                       j.at("angular_speed").get<double>(), dt);
  }
  if (kind == "poses") {
    std::vector<Pose> poses;
    for (const json& jp : j.at("poses")) {
      Pose p;
      const auto& rot = jp.at("rotation");
      if (rot.size() != 9) {
        throw std::invalid_argument("pose rotation must have 9 entries");
      }
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) p.rotation(r, c) = rot[3 * r + c].get<double>();
      }
      p.translation = vec3(jp.at("translation"), "translation");
      poses.push_back(p);
    }
    return poses;
  }
  throw std::invalid_argument("unknown motion kind: " + kind);
}

}  // namespace

SceneSpec scene_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("scene json: ") + e.what());
  }
  SceneSpec spec;
  try {
    spec.frames = doc.at("frames").get<int>();
    spec.seed = doc.value("seed", 0ull);
    spec.num_classes = doc.value("num_classes", 0);
    spec.occlusion_radius_px = doc.value("occlusion_radius_px", 1.0);
    if (doc.contains("rig")) {
      const json& r = doc["rig"];
      RigLayout& rl = spec.rig_layout;
      rl.radius = r.value("radius", rl.radius);
      if (r.contains("row_heights")) {
        rl.row_heights = r["row_heights"].get<std::vector<double>>();
      }
      if (r.contains("cameras_per_row")) {
        rl.cameras_per_row = r["cameras_per_row"].get<std::vector<int>>();
      }
      rl.frame_rate = r.value("frame_rate", rl.frame_rate);
      rl.focal_px = r.value("focal_px", rl.focal_px);
      rl.width = r.value("width", rl.width);
      rl.height = r.value("height", rl.height);
      rl.arc_degrees = r.value("arc_degrees", rl.arc_degrees);
    }
    if (doc.contains("noise")) {
      const json& n = doc["noise"];
      NoiseSpec& ns = spec.noise;
      ns.sigma_obs = n.value("sigma_obs", ns.sigma_obs);
      ns.confusion_rate = n.value("confusion_rate", ns.confusion_rate);
      ns.false_detection_rate =
          n.value("false_detection_rate", ns.false_detection_rate);
      ns.bleed_radius_px = n.value("bleed_radius_px", ns.bleed_radius_px);
      ns.deterministic_confidence =
          n.value("deterministic_confidence", ns.deterministic_confidence);
    }
    const double dt = 1.0 / spec.rig_layout.frame_rate;
    int body_index = 0;
    for (const json& jb : doc.at("bodies")) {
      RigidBody body;
      body.label = jb.at("label").get<int>();
      if (jb.contains("shape")) {
        body.points = shape_from_json(
            jb["shape"], derive_seed(spec.seed, "shape", body_index));
      } else {
        for (const json& p : jb.at("points")) {
          body.points.push_back(vec3(p, "point"));
        }
      }
      if (jb.contains("motion")) {
        body.motion = motion_from_json(jb["motion"], spec.frames, dt);
      } else {
        body.motion = motion_from_json(json{{"kind", "poses"},
                                            {"poses", jb.at("poses")}},
                                       spec.frames, dt);
      }
      spec.bodies.push_back(std::move(body));
      ++body_index;
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scene json: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string scene_to_json(const SceneSpec& spec) {
  json doc;
  doc["frames"] = spec.frames;
  doc["seed"] = spec.seed;
  doc["num_classes"] = spec.num_classes;
  doc["occlusion_radius_px"] = spec.occlusion_radius_px;
  doc["rig"] = {{"radius", spec.rig_layout.radius},
                {"row_heights", spec.rig_layout.row_heights},
                {"cameras_per_row", spec.rig_layout.cameras_per_row},
                {"frame_rate", spec.rig_layout.frame_rate},
                {"focal_px", spec.rig_layout.focal_px},
                {"width", spec.rig_layout.width},
                {"height", spec.rig_layout.height},
                {"arc_degrees", spec.rig_layout.arc_degrees}};
  doc["noise"] = {{"sigma_obs", spec.noise.sigma_obs},
                  {"confusion_rate", spec.noise.confusion_rate},
                  {"false_detection_rate", spec.noise.false_detection_rate},
                  {"bleed_radius_px", spec.noise.bleed_radius_px},
                  {"deterministic_confidence", spec.noise.deterministic_confidence}};
  json bodies = json::array();
  for (const RigidBody& b : spec.bodies) {
    json jb;
    jb["label"] = b.label;
    json pts = json::array();
    for (const auto& p : b.points) pts.push_back(to_array(p));
    jb["points"] = std::move(pts);
    json poses = json::array();
    for (const Pose& p : b.motion) {
      json rot = json::array();
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) rot.push_back(p.rotation(r, c));
      }
      poses.push_back({{"rotation", rot}, {"translation", to_array(p.translation)}});
    }
    jb["poses"] = std::move(poses);
    bodies.push_back(std::move(jb));
  }
  doc["bodies"] = std::move(bodies);
  return doc.dump();
}

SceneSpec load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scene file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return scene_from_json(text);
}

void save_scene(const SceneSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scene file " + path.string());
  out << scene_to_json(spec) << '\n';
}

}  // namespace semtraj
