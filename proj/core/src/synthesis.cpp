#include "semtraj/synthesis.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "semtraj/parallel.hpp"
#include "semtraj/seeding.hpp"

namespace semtraj {
namespace {

Eigen::Matrix3d look_at(const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
  const Eigen::Vector3d fwd = (to - from).normalized();
  Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitZ());
  if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
  right.normalize();
  const Eigen::Vector3d down = fwd.cross(right).normalized();
  Eigen::Matrix3d R;
  R.row(0) = right.transpose();
  R.row(1) = down.transpose();
  R.row(2) = fwd.transpose();
  return R;
}

std::int64_t grid_key(int cx, int cy) {
  return (static_cast<std::int64_t>(cx) << 32) ^
         static_cast<std::int64_t>(static_cast<std::uint32_t>(cy));
}

double beta_draw(std::mt19937_64& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  const double s = x + y;
  return s > 0.0 ? x / s : 0.0;
}

}  // namespace

Rig build_rig(const SceneSpec& spec) {
  spec.validate();
  const RigLayout& rl = spec.rig_layout;
  const double mid_h =
      0.5 * (*std::min_element(rl.row_heights.begin(), rl.row_heights.end()) +
             *std::max_element(rl.row_heights.begin(), rl.row_heights.end()));
  const Eigen::Vector3d target(0.0, 0.0, mid_h);

  Rig rig;
  rig.frame_rate = rl.frame_rate;
  int id = 0;
  const bool full_circle = rl.arc_degrees >= 360.0;
  const double arc = rl.arc_degrees * std::numbers::pi / 180.0;
  for (size_t row = 0; row < rl.row_heights.size(); ++row) {
    const int n = rl.cameras_per_row[row];
    for (int i = 0; i < n; ++i) {
      double angle;
      if (full_circle) {
        // Stagger alternate rows by half a step so columns interleave.
        const double offset = (row % 2 == 1) ? std::numbers::pi / n : 0.0;
        angle = 2.0 * std::numbers::pi * i / n + offset;
      } else {
        angle = (n == 1) ? 0.0 : -arc / 2.0 + arc * i / (n - 1);
      }
      Camera c;
      c.id = id++;
      c.center = Eigen::Vector3d(rl.radius * std::cos(angle),
                                 rl.radius * std::sin(angle),
                                 rl.row_heights[row]);
      c.rotation = look_at(c.center, target);
      c.intrinsics = {rl.focal_px, rl.focal_px, rl.width / 2.0, rl.height / 2.0};
      c.width = rl.width;
      c.height = rl.height;
      rig.cameras.push_back(std::move(c));
    }
  }
  rig.validate();
  return rig;
}

RenderResult render_observations(const SceneSpec& spec, const Rig& rig) {
  spec.validate();
  const int T = spec.frames;
  const int C = static_cast<int>(rig.cameras.size());

  RenderResult out;
  std::vector<int> body_of_point;
  for (size_t b = 0; b < spec.bodies.size(); ++b) {
    const RigidBody& body = spec.bodies[b];
    for (size_t k = 0; k < body.points.size(); ++k) {
      GroundTruthPoint gt;
      gt.corr_id = static_cast<std::uint32_t>(out.truth.size());
      gt.body_index = static_cast<int>(b);
      gt.label = body.label;
      gt.positions.resize(T);
      gt.visible.assign(static_cast<size_t>(T) * C, false);
      out.truth.push_back(std::move(gt));
      body_of_point.push_back(static_cast<int>(b));
    }
  }
  const size_t P = out.truth.size();

  // World positions per frame.
  for (int t = 0; t < T; ++t) {
    size_t pid = 0;
    for (const RigidBody& body : spec.bodies) {
      const Pose& pose = body.motion[t];
      for (const auto& p : body.points) {
        out.truth[pid].positions[t] = pose.rotation * p + pose.translation;
        ++pid;
      }
    }
  }

  const double occ_r = spec.occlusion_radius_px;
  const double occ_r2 = occ_r * occ_r;
  std::vector<std::vector<ObservationRecord>> per_frame(T);

  parallel_for(0, static_cast<size_t>(T), [&](std::size_t tf) {
    const int t = static_cast<int>(tf);
    std::mt19937_64 rng(derive_seed(spec.seed, "render", t));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<ObservationRecord>& frame_obs = per_frame[t];

    std::vector<Eigen::Vector2d> pix(P);
    std::vector<double> depth(P);
    std::vector<char> front(P);
    std::unordered_map<std::int64_t, std::vector<std::uint32_t>> grid;

    for (int c = 0; c < C; ++c) {
      const Camera& cam = rig.cameras[c];
      grid.clear();
      for (size_t i = 0; i < P; ++i) {
        const Eigen::Vector3d& X = out.truth[i].positions[t];
        const auto proj = cam.project(X);
        front[i] = proj.has_value();
        if (!front[i]) continue;
        pix[i] = *proj;
        depth[i] = cam.depth(X);
        const int cx = static_cast<int>(std::floor(pix[i].x() / occ_r));
        const int cy = static_cast<int>(std::floor(pix[i].y() / occ_r));
        grid[grid_key(cx, cy)].push_back(static_cast<std::uint32_t>(i));
      }
      for (size_t i = 0; i < P; ++i) {
        if (!front[i]) continue;
        // Point z-buffer: another body's point in front within occ_r blocks
        // this one.
        bool occluded = false;
        const int cx = static_cast<int>(std::floor(pix[i].x() / occ_r));
        const int cy = static_cast<int>(std::floor(pix[i].y() / occ_r));
        for (int dx = -1; dx <= 1 && !occluded; ++dx) {
          for (int dy = -1; dy <= 1 && !occluded; ++dy) {
            const auto it = grid.find(grid_key(cx + dx, cy + dy));
            if (it == grid.end()) continue;
            for (std::uint32_t j : it->second) {
              if (body_of_point[j] == body_of_point[i]) continue;
              if (depth[j] < depth[i] &&
                  (pix[j] - pix[i]).squaredNorm() <= occ_r2) {
                occluded = true;
                break;
              }
            }
          }
        }
        if (occluded || !cam.in_bounds(pix[i])) continue;
        out.truth[i].visible[static_cast<size_t>(t) * C + c] = true;
        Eigen::Vector2d noisy = pix[i];
        if (spec.noise.sigma_obs > 0.0) {
          noisy.x() += spec.noise.sigma_obs * gauss(rng);
          noisy.y() += spec.noise.sigma_obs * gauss(rng);
        }
        if (!cam.in_bounds(noisy)) continue;
        frame_obs.push_back({static_cast<std::uint32_t>(t),
                             static_cast<std::uint32_t>(i),
                             static_cast<std::uint16_t>(c),
                             static_cast<float>(noisy.x()),
                             static_cast<float>(noisy.y())});
      }
    }
    std::sort(frame_obs.begin(), frame_obs.end(),
              [](const ObservationRecord& a, const ObservationRecord& b) {
                if (a.trajectory_id != b.trajectory_id) {
                  return a.trajectory_id < b.trajectory_id;
                }
                return a.camera < b.camera;
              });
  });

  size_t total = 0;
  for (const auto& f : per_frame) total += f.size();
  out.observations.reserve(total);
  for (auto& f : per_frame) {
    out.observations.insert(out.observations.end(), f.begin(), f.end());
    f.clear();
    f.shrink_to_fit();
  }
  return out;
}

ConfidenceField::ConfidenceField(int camera_id, int frame, int num_classes,
                                 double bleed_radius_px,
                                 Eigen::VectorXf background,
                                 std::vector<Detection> detections)
    : camera_id_(camera_id),
      frame_(frame),
      num_classes_(num_classes),
      bleed_(bleed_radius_px),
      cell_px_(std::max(bleed_radius_px, 1.0)),
      background_(std::move(background)),
      detections_(std::move(detections)) {
  std::sort(detections_.begin(), detections_.end(),
            [this](const Detection& a, const Detection& b) {
              return cell_key(a.x, a.y) < cell_key(b.x, b.y);
            });
  for (size_t i = 0; i < detections_.size(); ++i) {
    const std::int64_t key = cell_key(detections_[i].x, detections_[i].y);
    if (cell_keys_.empty() || cell_keys_.back() != key) {
      cell_keys_.push_back(key);
      cell_starts_.push_back(static_cast<std::uint32_t>(i));
    }
  }
  cell_starts_.push_back(static_cast<std::uint32_t>(detections_.size()));
}

std::int64_t ConfidenceField::cell_key(double x, double y) const {
  return grid_key(static_cast<int>(std::floor(x / cell_px_)),
                  static_cast<int>(std::floor(y / cell_px_)));
}

Eigen::VectorXf ConfidenceField::query(const Eigen::Vector2d& pixel) const {
  Eigen::VectorXf out = background_;
  const int cx = static_cast<int>(std::floor(pixel.x() / cell_px_));
  const int cy = static_cast<int>(std::floor(pixel.y() / cell_px_));
  const double r2 = bleed_ * bleed_;
  for (int dx = -1; dx <= 1; ++dx) {
    for (int dy = -1; dy <= 1; ++dy) {
      const std::int64_t key = grid_key(cx + dx, cy + dy);
      const auto it =
          std::lower_bound(cell_keys_.begin(), cell_keys_.end(), key);
      if (it == cell_keys_.end() || *it != key) continue;
      const size_t slot = static_cast<size_t>(it - cell_keys_.begin());
      for (std::uint32_t i = cell_starts_[slot]; i < cell_starts_[slot + 1];
           ++i) {
        const Detection& d = detections_[i];
        const double ddx = d.x - pixel.x();
        const double ddy = d.y - pixel.y();
        if (ddx * ddx + ddy * ddy <= r2) {
          float& slot_val = out[d.label - 1];
          slot_val = std::max(slot_val, d.conf);
        }
      }
    }
  }
  return out;
}

ConfidenceSim::ConfidenceSim(int cameras, int frames, int num_classes)
    : cameras_(cameras), frames_(frames), num_classes_(num_classes) {
  fields_.reserve(static_cast<size_t>(cameras) * frames);
}

const ConfidenceField& ConfidenceSim::field(int camera, int frame) const {
  return fields_[static_cast<size_t>(frame) * cameras_ + camera];
}

ConfidenceField& ConfidenceSim::field(int camera, int frame) {
  return fields_[static_cast<size_t>(frame) * cameras_ + camera];
}

ConfidenceSim simulate_confidence(const SceneSpec& spec, const Rig& rig,
                                  const RenderResult& rendered) {
  const int T = spec.frames;
  const int C = static_cast<int>(rig.cameras.size());
  const int N = spec.label_count();
  const size_t P = rendered.truth.size();
  const bool det_mode = spec.noise.deterministic_confidence;

  ConfidenceSim sim(C, T, N);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < C; ++c) {
      const std::uint64_t stream = static_cast<std::uint64_t>(t) * C + c;
      std::mt19937_64 rng(derive_seed(spec.seed, "confidence", stream));
      const Camera& cam = rig.cameras[c];

      Eigen::VectorXf background = Eigen::VectorXf::Zero(N);
      if (!det_mode) {
        for (int k = 0; k < N; ++k) {
          background[k] = static_cast<float>(beta_draw(rng, 1.0, 20.0));
        }
      }

      std::vector<ConfidenceField::Detection> dets;
      for (size_t i = 0; i < P; ++i) {
        const GroundTruthPoint& gt = rendered.truth[i];
        if (!gt.visible_at(t, c, C)) continue;
        const auto proj = cam.project(gt.positions[t]);
        // Visible implies a valid in-bounds projection.
        int label = gt.label;
        double conf = 0.9;
        if (!det_mode) {
          conf = beta_draw(rng, 8.0, 2.0);
          if (spec.noise.confusion_rate > 0.0) {
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            if (unit(rng) < spec.noise.confusion_rate) {
              std::uniform_int_distribution<int> wrong(1, N - 1);
              const int shift = wrong(rng);
              label = 1 + (label - 1 + shift) % N;
            }
          }
        }
        dets.push_back({proj->x(), proj->y(), static_cast<float>(conf),
                        static_cast<std::uint16_t>(label)});
      }
      if (!det_mode && spec.noise.false_detection_rate > 0.0) {
        std::poisson_distribution<int> count(spec.noise.false_detection_rate);
        std::uniform_real_distribution<double> ux(0.0, cam.width);
        std::uniform_real_distribution<double> uy(0.0, cam.height);
        std::uniform_int_distribution<int> any_label(1, N);
        const int k = count(rng);
        for (int f = 0; f < k; ++f) {
          const double x = ux(rng);
          const double y = uy(rng);
          const int label = any_label(rng);
          const double conf = beta_draw(rng, 8.0, 2.0);
          dets.push_back({x, y, static_cast<float>(conf),
                          static_cast<std::uint16_t>(label)});
        }
      }
      sim.fields().emplace_back(c, t, N, spec.noise.bleed_radius_px,
                                std::move(background), std::move(dets));
    }
  }
  return sim;
}

}  // namespace semtraj
