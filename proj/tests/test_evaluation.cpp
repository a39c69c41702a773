#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "semtraj/evaluation.hpp"
#include "semtraj/scene.hpp"
#include "semtraj/seeding.hpp"
#include "semtraj/tracking.hpp"

using namespace semtraj;

namespace {

// Two balls stacked on the z axis so no ring camera ever sees them
// overlap: label bleed stays within a body and occlusion never triggers.
SceneSpec stacked_spec(int frames, unsigned seed, bool deterministic,
                       double confusion, double false_rate) {
  SceneSpec spec;
  spec.frames = frames;
  spec.seed = seed;
  spec.rig_layout.row_heights = {1.25};
  spec.rig_layout.cameras_per_row = {8};
  spec.num_classes = 3;
  spec.noise.sigma_obs = 0.0;
  spec.noise.confusion_rate = confusion;
  spec.noise.false_detection_rate = false_rate;
  spec.noise.deterministic_confidence = deterministic;

  RigidBody a;
  a.label = 1;
  a.points = ball_points(0.15, 20, 3);
  a.motion = static_motion(frames, {0.0, 0.0, 1.0});
  spec.bodies.push_back(a);

  RigidBody b;
  b.label = 2;
  b.points = ball_points(0.15, 20, 4);
  b.motion = static_motion(frames, {0.0, 0.0, 1.6});
  spec.bodies.push_back(b);
  return spec;
}

// Four labeled balls circling inside two concentric shells of dense
// label-striped wall arcs that spin at different rates. At any frame each
// wall blocks a minority of cameras, so tracks survive, but the blocked
// views' pixels land on wall detections. The unweighted average ingests
// that junk; the visibility-gated medoid rejects it. Stripe labels churn
// and the two shell speeds differ so the junk decorrelates across lags
// instead of following the carousel.
SceneSpec wall_spec(int frames, unsigned seed, int cams) {
  SceneSpec spec;
  spec.frames = frames;
  spec.seed = seed;
  spec.rig_layout.row_heights = {1.9};
  spec.rig_layout.cameras_per_row = {cams};
  spec.rig_layout.frame_rate = 10.0;
  spec.num_classes = 4;
  spec.noise.sigma_obs = 0.0;
  spec.noise.confusion_rate = 0.3;
  spec.noise.false_detection_rate = 2.0;
  spec.noise.bleed_radius_px = 8.0;
  spec.occlusion_radius_px = 8.0;

  const double dt = 1.0 / spec.rig_layout.frame_rate;
  for (int b = 0; b < 4; ++b) {
    RigidBody body;
    body.label = static_cast<std::uint16_t>(b + 1);
    body.points = ball_points(0.12, 24, 10 + b);
    body.motion =
        orbit_motion(frames, {0.0, 0.0, 1.55}, 0.45, 0.45, b * 1.5707963, dt);
    spec.bodies.push_back(body);
  }

  SplitMix64 rng(derive_seed(seed, "walls", 0));
  const double arc = 58.0;
  const double stripe_deg = 18.0;
  struct Shell {
    double radius, z_lo, z_hi, omega, density;
  };
  const Shell shells[2] = {{0.9, 1.63, 1.77, -0.3, 50.0},
                           {1.1, 1.70, 1.85, -0.15, 60.0}};
  std::uint16_t prev = 0;
  for (const Shell& sh : shells) {
    // Three arcs per shell at random azimuths, kept a full arc apart so
    // they never merge into one long occluder.
    std::vector<double> bases;
    while (bases.size() < 3) {
      const double cand = 360.0 * rng.unit();
      bool ok = true;
      for (double b : bases) {
        if (std::abs(std::remainder(cand - b, 360.0)) < arc + stripe_deg) {
          ok = false;
          break;
        }
      }
      if (ok) bases.push_back(cand);
    }
    for (double base : bases) {
      const int stripes = static_cast<int>(arc / stripe_deg + 0.5);
      const int per_stripe = static_cast<int>(sh.density * arc) / stripes;
      for (int s = 0; s < stripes; ++s) {
        std::uint16_t label;
        do {
          label = static_cast<std::uint16_t>(1 + rng.next() % 4);
        } while (label == prev);
        prev = label;
        RigidBody stripe;
        stripe.label = label;
        const double lo = (base + s * stripe_deg) * M_PI / 180.0;
        const double hi = lo + stripe_deg * M_PI / 180.0;
        for (int k = 0; k < per_stripe; ++k) {
          const double theta = lo + (hi - lo) * rng.unit();
          const double z = sh.z_lo + (sh.z_hi - sh.z_lo) * rng.unit();
          stripe.points.push_back(
              {sh.radius * std::cos(theta), sh.radius * std::sin(theta), z});
        }
        stripe.motion = spin_motion(frames, {0.0, 0.0, 0.0},
                                    Eigen::Vector3d::UnitZ(), sh.omega, dt);
        spec.bodies.push_back(stripe);
      }
    }
  }
  return spec;
}

struct EvalFixture {
  SceneSpec spec;
  Rig rig;
  RenderResult rendered;
  ConfidenceSim sim;
  StreamResult stream;

  explicit EvalFixture(SceneSpec s)
      : spec(std::move(s)),
        rig(build_rig(spec)),
        rendered(render_observations(spec, rig)),
        sim(simulate_confidence(spec, rig, rendered)),
        stream(build_stream(rendered.observations, spec.frames, rig,
                            TrackerParams{})) {}
};

Trajectory raw_track(std::uint32_t id, int emerge,
                     std::vector<Eigen::Vector3d> points) {
  Trajectory t;
  t.id = id;
  t.emerge = emerge;
  t.dissolve = emerge + static_cast<int>(points.size()) - 1;
  t.points = std::move(points);
  t.visibility.resize(t.points.size());
  return t;
}

// Static cluster and a second cluster drifting along x, far enough apart
// that every cross pair lands in the last distance bin.
std::vector<Trajectory> two_cluster_tracks(int per_body, int frames,
                                           std::vector<int>* body_of) {
  SplitMix64 rng(derive_seed(7, "eval-clusters", 0));
  std::vector<Trajectory> tracks;
  const auto jitter = [&]() -> Eigen::Vector3d {
    return Eigen::Vector3d(rng.unit() * 2 - 1, rng.unit() * 2 - 1,
                           rng.unit() * 2 - 1) *
           0.012;
  };
  for (int k = 0; k < per_body; ++k) {
    const Eigen::Vector3d base = jitter();
    std::vector<Eigen::Vector3d> pts(frames, base);
    tracks.push_back(raw_track(static_cast<std::uint32_t>(k), 0, pts));
    body_of->push_back(0);
  }
  for (int k = 0; k < per_body; ++k) {
    const Eigen::Vector3d base = Eigen::Vector3d(0.8, 0.0, 0.0) + jitter();
    std::vector<Eigen::Vector3d> pts;
    for (int t = 0; t < frames; ++t) {
      pts.push_back(base + Eigen::Vector3d(0.05 * t, 0.0, 0.0));
    }
    tracks.push_back(
        raw_track(static_cast<std::uint32_t>(per_body + k), 0, pts));
    body_of->push_back(1);
  }
  return tracks;
}

const MetricRow& row_at(const MetricReport& report, double condition,
                        const std::string& method) {
  for (const MetricRow& row : report.rows) {
    if (row.condition == condition && row.method == method) return row;
  }
  throw std::runtime_error("row not found: " + method);
}

}  // namespace

TEST_CASE("normalized correlation behaves like a cosine") {
  SplitMix64 rng(derive_seed(7, "eval-nc", 0));
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd v(5);
    for (int k = 0; k < 5; ++k) v[k] = rng.unit() + 0.1;
    CHECK(normalized_correlation(v, v) == doctest::Approx(1.0).epsilon(1e-12));
    // Positive rescaling never changes the value.
    Eigen::VectorXd w(5);
    for (int k = 0; k < 5; ++k) w[k] = rng.unit() + 0.1;
    CHECK(normalized_correlation(v, w) ==
          doctest::Approx(normalized_correlation(v, 3.7 * w)).epsilon(1e-12));
  }
  Eigen::VectorXd x(2), y(2);
  x << 1.0, 0.0;
  y << 0.0, 2.0;
  CHECK(normalized_correlation(x, y) == doctest::Approx(0.0));
  CHECK(std::isnan(normalized_correlation(x, Eigen::VectorXd::Zero(2))));
  // A constant vector has zero norm once its mean is removed.
  Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 0.7);
  CHECK(std::isnan(normalized_correlation(flat, flat, true)));
  CHECK(normalized_correlation(flat, flat, false) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(normalized_correlation(x, Eigen::VectorXd::Zero(3)),
                  std::invalid_argument);
}

TEST_CASE("temporal consistency is perfect for a noiseless recognizer") {
  const EvalFixture f(stacked_spec(50, 21, true, 0.0, 0.0));
  REQUIRE(f.stream.trajectories.size() >= 30);
  TemporalConsistencyParams params;
  params.lags = {0, 10, 25, 49};
  for (const PoolMethod method :
       {PoolMethod::ViewPool, PoolMethod::AveragePool}) {
    const MetricReport report =
        temporal_consistency(f.stream.trajectories, f.sim, f.rig, params,
                             method);
    REQUIRE(report.rows.size() == params.lags.size());
    for (const MetricRow& row : report.rows) {
      CHECK(row.n >= 30);
      CHECK(row.mean == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(row.std_dev <= 1e-9);
    }
  }
}

TEST_CASE("view pooling holds up under recognizer noise where averaging fades") {
  SceneSpec spec = wall_spec(51, 5, 12);
  const Rig rig = build_rig(spec);
  const RenderResult rendered = render_observations(spec, rig);
  // Track only the carousel points; the walls exist to pollute pixels, not
  // to be reconstructed.
  std::vector<ObservationRecord> obs;
  for (const ObservationRecord& o : rendered.observations) {
    if (o.trajectory_id < 96) obs.push_back(o);
  }
  const StreamResult stream = build_stream(obs, spec.frames, rig,
                                           TrackerParams{});
  REQUIRE(stream.trajectories.size() >= 90);

  spec.seed = derive_seed(5, "recognizer", 0);
  const ConfidenceSim sim = simulate_confidence(spec, rig, rendered);
  TemporalConsistencyParams params;
  params.lags = {10, 30, 50};
  params.mean_subtract = true;
  const MetricReport vp = temporal_consistency(stream.trajectories, sim, rig,
                                               params, PoolMethod::ViewPool);
  const MetricReport ap = temporal_consistency(stream.trajectories, sim, rig,
                                               params, PoolMethod::AveragePool);
  for (std::size_t k = 0; k < params.lags.size(); ++k) {
    // Long lags drop re-seeded fragments, so the count shrinks with k.
    CHECK(vp.rows[k].n >= 60);
    CHECK(ap.rows[k].n == vp.rows[k].n);
    // The medoid's edge over the average is large here (0.19 or more at
    // every lag); 0.1 leaves room for platform-to-platform wobble.
    CHECK(vp.rows[k].mean > ap.rows[k].mean + 0.1);
    CHECK(vp.rows[k].mean <= 1.0 + 1e-12);
  }
}

TEST_CASE("position matching recovers the tracker's own provenance") {
  const EvalFixture f(stacked_spec(30, 23, true, 0.0, 0.0));
  const TruthMatch match =
      match_to_truth(f.stream.trajectories, f.rendered.truth);
  REQUIRE(match.point_index.size() == f.stream.trajectories.size());
  bool saw_label_1 = false;
  bool saw_label_2 = false;
  for (std::size_t i = 0; i < f.stream.trajectories.size(); ++i) {
    CHECK(match.point_index[i] == f.stream.origin_corr[i]);
    const GroundTruthPoint& gt = f.rendered.truth[match.point_index[i]];
    CHECK(match.body[i] == gt.body_index);
    CHECK(match.label[i] == gt.label);
    saw_label_1 = saw_label_1 || match.label[i] == 1;
    saw_label_2 = saw_label_2 || match.label[i] == 2;
  }
  CHECK(saw_label_1);
  CHECK(saw_label_2);
}

TEST_CASE("rigid affinity outperforms proximity claims at long range") {
  std::vector<int> body_of;
  const std::vector<Trajectory> tracks = two_cluster_tracks(12, 4, &body_of);
  AffinityEffectivenessParams params;
  params.bin_edges = {0.0, 0.3, 0.6, 1.0};
  params.pairs_per_bin = 500;
  params.seed = 11;

  const MetricReport eps = affinity_effectiveness(
      tracks, body_of, params, AffinityMethod::EpsNeighbors);
  const MetricReport rigid = affinity_effectiveness(
      tracks, body_of, params, AffinityMethod::RigidAffinity);

  // Same-body pairs live in [0, 0.3), cross pairs in [0.6, 1.0); nothing
  // falls in between.
  const MetricRow& eps_near = row_at(eps, 0.3, "eps_neighbors");
  const MetricRow& eps_mid = row_at(eps, 0.6, "eps_neighbors");
  const MetricRow& eps_far = row_at(eps, 1.0, "eps_neighbors");
  CHECK(eps_near.n > 0);
  CHECK(eps_near.mean == 0.0);
  CHECK(eps_mid.n == 0);
  CHECK(eps_far.n > 0);
  CHECK(eps_far.mean == doctest::Approx(1.0));

  const MetricRow& rigid_near = row_at(rigid, 0.3, "rigid_affinity");
  const MetricRow& rigid_far = row_at(rigid, 1.0, "rigid_affinity");
  CHECK(rigid_near.n > 0);
  CHECK(rigid_near.mean == 0.0);
  CHECK(rigid_far.n == eps_far.n);
  CHECK(rigid_far.mean < eps_far.mean);
  CHECK(rigid_far.mean == 0.0);
}

TEST_CASE("the projection proxy agrees with ground truth on a clean scene") {
  const EvalFixture f(stacked_spec(20, 24, true, 0.0, 0.0));
  const TruthMatch match =
      match_to_truth(f.stream.trajectories, f.rendered.truth);
  AffinityEffectivenessParams params;
  params.bin_edges = {0.0, 0.3, 1.0};
  params.pairs_per_bin = 300;
  params.seed = 12;
  const MetricReport report =
      affinity_effectiveness(f.stream.trajectories, match.body, params,
                             AffinityMethod::EpsNeighbors, &f.sim, &f.rig);
  // Ground-truth rows first, then the projection-proxy rows.
  REQUIRE(report.rows.size() == 4);
  const MetricRow& gt_near = row_at(report, 0.3, "eps_neighbors");
  const MetricRow& gt_far = row_at(report, 1.0, "eps_neighbors");
  const MetricRow& px_near = row_at(report, 0.3, "eps_neighbors_2d");
  const MetricRow& px_far = row_at(report, 1.0, "eps_neighbors_2d");
  // Every pair is co-visible here, so the proxy scores the same pair set
  // and, with a noiseless recognizer, the same outcomes.
  CHECK(px_near.n == gt_near.n);
  CHECK(px_far.n == gt_far.n);
  CHECK(px_near.mean == doctest::Approx(gt_near.mean));
  CHECK(px_far.mean == doctest::Approx(gt_far.mean));
  CHECK(gt_near.mean == 0.0);
  CHECK(gt_far.n > 0);
}

TEST_CASE("held-out cameras agree perfectly on a noiseless scene") {
  const EvalFixture f(stacked_spec(25, 25, true, 0.0, 0.0));
  PredictiveValidityParams params;
  params.subset_sizes = {1, 7};
  params.trials = 3;
  params.seed = 5;
  const MetricReport report = predictive_validity(
      f.stream.trajectories, f.sim, f.rig, 3, AffinityGraph{}, params);
  REQUIRE(report.rows.size() == 4);
  for (const MetricRow& row : report.rows) {
    CHECK(row.n == 3);
    CHECK(row.mean == doctest::Approx(1.0));
    CHECK(row.std_dev <= 1e-12);
  }
}

TEST_CASE("accuracy summary counts hits and confusion") {
  const std::vector<std::uint16_t> truth = {1, 1, 2, 2, 3};
  const std::vector<std::uint16_t> argmax = {1, 2, 2, 2, 3};
  const std::vector<std::uint16_t> inferred = {1, 1, 2, 2, 3};

  const AccuracySummary summary = accuracy_against_truth(argmax, truth, 3);
  CHECK(summary.overall == doctest::Approx(0.8));
  CHECK(summary.per_class[0] == doctest::Approx(0.5));
  CHECK(summary.per_class[1] == doctest::Approx(1.0));
  CHECK(summary.per_class[2] == doctest::Approx(1.0));
  CHECK(summary.confusion[0][1] == 1);
  CHECK(summary.confusion[0][0] == 1);
  CHECK(summary.confusion[1][1] == 2);
  CHECK(summary.total == 5);

  const AccuracySummary perfect = accuracy_against_truth(truth, truth, 3);
  CHECK(perfect.overall == doctest::Approx(1.0));
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 3; ++p) {
      if (t != p) CHECK(perfect.confusion[t][p] == 0);
    }
  }

  const MetricReport report =
      ground_truth_accuracy(argmax, inferred, truth, 3);
  CHECK(row_at(report, 0.0, "argmax").mean == doctest::Approx(0.8));
  CHECK(row_at(report, 0.0, "inference").mean == doctest::Approx(1.0));
  CHECK(row_at(report, 1.0, "argmax").mean == doctest::Approx(0.5));
  CHECK(row_at(report, 1.0, "argmax").n == 2);
  CHECK(row_at(report, 3.0, "inference").n == 1);
}

TEST_CASE("uniformly shuffled labels score at chance level") {
  SplitMix64 rng(derive_seed(7, "eval-chance", 0));
  std::vector<std::uint16_t> truth;
  std::vector<std::uint16_t> predicted;
  for (int i = 0; i < 2000; ++i) {
    truth.push_back(static_cast<std::uint16_t>(1 + rng.next() % 4));
    predicted.push_back(static_cast<std::uint16_t>(1 + rng.next() % 4));
  }
  const AccuracySummary summary = accuracy_against_truth(predicted, truth, 4);
  CHECK(summary.overall == doctest::Approx(0.25).epsilon(0.15));
}

TEST_CASE("metric reports write long-format csv and combined json") {
  MetricReport report;
  report.name = "demo";
  report.seed = 42;
  report.scene_digest = "abc123";
  report.params = "k=1";
  report.rows.push_back({1.0, "m", 0.5, 0.1, 4});
  report.rows.push_back({2.0, "m", 0.75, 0.0, 1});

  const auto dir = std::filesystem::temp_directory_path();
  const auto csv = dir / "semtraj_test_metric.csv";
  const auto json_path = dir / "semtraj_test_metrics.json";
  save_metric_csv(csv, report);
  save_reports_json(json_path, {report});

  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "condition,method,mean,std,n");
  std::getline(in, line);
  CHECK(line == "1,m,0.5,0.1,4");

  std::ifstream jin(json_path);
  const nlohmann::json doc = nlohmann::json::parse(jin);
  REQUIRE(doc.is_array());
  REQUIRE(doc.size() == 1);
  CHECK(doc[0]["name"] == "demo");
  CHECK(doc[0]["seed"] == 42);
  CHECK(doc[0]["scene_digest"] == "abc123");
  REQUIRE(doc[0]["rows"].size() == 2);
  CHECK(doc[0]["rows"][1]["mean"] == doctest::Approx(0.75));

  const AccuracySummary summary = accuracy_against_truth({1, 2}, {1, 1}, 2);
  const auto confusion_csv = dir / "semtraj_test_confusion.csv";
  save_confusion_csv(confusion_csv, summary);
  std::ifstream cin_file(confusion_csv);
  std::getline(cin_file, line);
  CHECK(line == "true_label,predicted_label,count");
  std::getline(cin_file, line);
  CHECK(line == "1,1,1");
  std::getline(cin_file, line);
  CHECK(line == "1,2,1");

  std::filesystem::remove(csv);
  std::filesystem::remove(json_path);
  std::filesystem::remove(confusion_csv);
}

TEST_CASE("evaluation inputs are validated") {
  const EvalFixture f(stacked_spec(4, 26, true, 0.0, 0.0));

  TemporalConsistencyParams tc;
  tc.lags = {};
  CHECK_THROWS_AS(temporal_consistency(f.stream.trajectories, f.sim, f.rig,
                                       tc, PoolMethod::ViewPool),
                  std::invalid_argument);
  tc.lags = {-1};
  CHECK_THROWS_AS(temporal_consistency(f.stream.trajectories, f.sim, f.rig,
                                       tc, PoolMethod::ViewPool),
                  std::invalid_argument);

  AffinityEffectivenessParams ae;
  ae.bin_edges = {0.5};
  std::vector<int> body(f.stream.trajectories.size(), 0);
  CHECK_THROWS_AS(affinity_effectiveness(f.stream.trajectories, body, ae,
                                         AffinityMethod::EpsNeighbors),
                  std::invalid_argument);
  ae = {};
  ae.pairs_per_bin = 0;
  CHECK_THROWS_AS(affinity_effectiveness(f.stream.trajectories, body, ae,
                                         AffinityMethod::EpsNeighbors),
                  std::invalid_argument);
  ae = {};
  CHECK_THROWS_AS(affinity_effectiveness(f.stream.trajectories, {0}, ae,
                                         AffinityMethod::EpsNeighbors),
                  std::invalid_argument);

  PredictiveValidityParams pv;
  pv.subset_sizes = {8};  // needs a held-out camera
  CHECK_THROWS_AS(predictive_validity(f.stream.trajectories, f.sim, f.rig, 3,
                                      AffinityGraph{}, pv),
                  std::invalid_argument);
  pv = {};
  pv.subset_sizes = {2};
  pv.trials = 0;
  CHECK_THROWS_AS(predictive_validity(f.stream.trajectories, f.sim, f.rig, 3,
                                      AffinityGraph{}, pv),
                  std::invalid_argument);

  CHECK_THROWS_AS(accuracy_against_truth({1}, {1, 2}, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS(accuracy_against_truth({0}, {1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(match_to_truth(f.stream.trajectories, {}),
                  std::invalid_argument);
}
