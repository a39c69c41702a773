#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "semtraj/geometry.hpp"
#include "semtraj/scene.hpp"

namespace semtraj {

/// One projected point measurement, matching the binary record layout
/// (frame u32, trajectory_id u32, camera u16, x f32, y f32).
/// trajectory_id is the synthetic correspondence id shared by every
/// observation of the same physical point.
struct ObservationRecord {
  std::uint32_t frame = 0;
  std::uint32_t trajectory_id = 0;
  std::uint16_t camera = 0;
  float x = 0.0f;
  float y = 0.0f;
};

/// Ground truth for one physical point across the whole scene.
struct GroundTruthPoint {
  std::uint32_t corr_id = 0;
  int body_index = -1;
  int label = 0;
  std::vector<Eigen::Vector3d> positions;  // length = frames
  /// visible[t * cameras + c]: in front, inside the image, unoccluded.
  std::vector<bool> visible;

  bool visible_at(int frame, int camera, int camera_count) const {
    return visible[static_cast<size_t>(frame) * camera_count + camera];
  }
};

struct RenderResult {
  /// Sorted by (frame, trajectory_id, camera).
  std::vector<ObservationRecord> observations;
  std::vector<GroundTruthPoint> truth;
};

/// Places cameras evenly on the layout cylinder, row by row, every camera
/// aimed at the axis midpoint. Rows after the first are staggered by half a
/// step so columns do not align. arc_degrees < 360 spreads each row over a
/// centered arc instead of the full ring.
Rig build_rig(const SceneSpec& spec);

/// Projects every body point into every camera per frame, applies the point
/// z-buffer occlusion test against other bodies, adds Gaussian pixel noise,
/// and drops observations that fall outside the image. Deterministic for a
/// fixed spec; frame t consumes its own RNG stream.
RenderResult render_observations(const SceneSpec& spec, const Rig& rig);

/// Per-camera, per-frame semantic confidence surrogate. Detections sit at
/// the true projections of visible points; query() returns, per class, the
/// max confidence among detections of that class within the bleed radius,
/// over a per-field constant background.
class ConfidenceField {
 public:
  struct Detection {
    // Exact projection coordinates. Kept as doubles so a query at the
    // projected pixel matches the detection even with bleed radius zero.
    double x;
    double y;
    float conf;
    std::uint16_t label;  // 1-based
  };

  ConfidenceField(int camera_id, int frame, int num_classes,
                  double bleed_radius_px, Eigen::VectorXf background,
                  std::vector<Detection> detections);

  int camera_id() const { return camera_id_; }
  int frame() const { return frame_; }
  int num_classes() const { return num_classes_; }

  /// N-vector of class confidences at a pixel, entries in [0,1].
  Eigen::VectorXf query(const Eigen::Vector2d& pixel) const;

  const std::vector<Detection>& detections() const { return detections_; }

 private:
  std::int64_t cell_key(double x, double y) const;

  int camera_id_;
  int frame_;
  int num_classes_;
  double bleed_;
  double cell_px_;
  Eigen::VectorXf background_;
  std::vector<Detection> detections_;       // sorted by cell key
  std::vector<std::int64_t> cell_keys_;     // one per cell, sorted
  std::vector<std::uint32_t> cell_starts_;  // parallel, offsets into detections_
};

/// All confidence fields of a scene, indexed by (camera, frame).
class ConfidenceSim {
 public:
  ConfidenceSim(int cameras, int frames, int num_classes);

  const ConfidenceField& field(int camera, int frame) const;
  ConfidenceField& field(int camera, int frame);
  int cameras() const { return cameras_; }
  int frames() const { return frames_; }
  int num_classes() const { return num_classes_; }

  std::vector<ConfidenceField>& fields() { return fields_; }

 private:
  int cameras_;
  int frames_;
  int num_classes_;
  std::vector<ConfidenceField> fields_;
};

/// Builds every ConfidenceField from the rendered ground truth. Detection
/// confidences draw from Beta(8,2), backgrounds from Beta(1,20) (constant
/// per field and class), a detection's label flips to a uniformly random
/// wrong class with probability confusion_rate, and Poisson-many false
/// detections appear at random pixels. deterministic_confidence replaces
/// all of that with constant 0.9 confidences and zero background.
ConfidenceSim simulate_confidence(const SceneSpec& spec, const Rig& rig,
                                  const RenderResult& rendered);

}  // namespace semtraj
