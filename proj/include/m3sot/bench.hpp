#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "m3sot/tracker.hpp"
#include "m3sot/tracklet.hpp"

namespace m3sot {

// ---------------------------------------------------------------------------
// Tracklet JSONL

/// Header line {"id","category"}, then one frame per line.
void save_tracklet(const Tracklet& t, const std::filesystem::path& path);
Tracklet load_tracklet(const std::filesystem::path& path);
std::string tracklet_to_jsonl(const Tracklet& t);
Tracklet tracklet_from_jsonl(const std::string& text);

/// Every *.jsonl in a directory, sorted by file name.
std::vector<Tracklet> load_tracklet_dir(const std::filesystem::path& dir);
void save_tracklet_dir(const std::vector<Tracklet>& ts, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// KITTI tracking format

/// Rigid camera→lidar transform, row-major 3×4 [R | t].
using Calibration = std::array<double, 12>;

Calibration load_calibration(const std::filesystem::path& path);
void save_calibration(const Calibration& c, const std::filesystem::path& path);
/// Rotation taking the KITTI camera axes to the lidar axes, zero offset.
Calibration default_calibration();

/// Little-endian f32 quadruples (x, y, z, reflectance); reflectance dropped.
PointCloud read_kitti_scan(const std::filesystem::path& path);
void write_kitti_scan(const PointCloud& cloud, const std::filesystem::path& path);

/// One label row in camera coordinates.
struct KittiLabel {
  int frame = 0;
  int track_id = 0;
  std::string type;
  double h = 0, w = 0, l = 0, x = 0, y = 0, z = 0, ry = 0;
};

std::vector<KittiLabel> read_kitti_labels(const std::filesystem::path& path);
Box3D kitti_label_to_box(const KittiLabel& label, const Calibration& calib);
KittiLabel box_to_kitti_label(const Box3D& box, const Calibration& calib);

/// Scans are <velodyne_dir>/NNNNNN.bin. Missing calibration → ConfigError.
Tracklet import_kitti(const std::filesystem::path& velodyne_dir, const std::filesystem::path& label_file,
                      const std::filesystem::path& calib_file, int track_id);

/// Writes velodyne/NNNNNN.bin, label.txt and calib.txt under dir.
void export_kitti(const Tracklet& t, const std::filesystem::path& dir, int track_id,
                  const Calibration& calib = default_calibration());

// ---------------------------------------------------------------------------
// Synthetic scenes

struct Interval {
  double lo = 0.0, hi = 0.0;
};

struct SyntheticSceneConfig {
  std::string category = "Car";
  Size3 size{1.6, 3.9, 1.5};
  double size_jitter = 0.1;  // relative, per tracklet
  std::size_t object_points = 256;
  std::size_t clutter_points = 256;
  double clutter_extent = 6.0;  // half-width of the clutter square around the object
  // per-step motion in the object frame (x lateral, y forward)
  Interval step_x{-0.1, 0.1};
  Interval step_y{0.2, 0.8};
  Interval step_z{-0.02, 0.02};
  Interval step_yaw{-0.08, 0.08};
  double occlusion_prob = 0.2;
  double drop_fraction = 0.25;  // of the full circle
  double sparsity_ramp = 0.3;   // fraction of object points gone by the last frame
  std::size_t frames = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

Tracklet generate_synthetic_tracklet(const SyntheticSceneConfig& cfg);

struct SyntheticSplit {
  std::vector<Tracklet> train;
  std::vector<Tracklet> test;
};

/// `n_train + n_test` tracklets; tracklet i uses its own derived seed.
SyntheticSplit synthetic_split(std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                               SyntheticSceneConfig base = {});
/// 64 train / 16 test, 20 frames, seed 7.
SyntheticSplit standard_benchmark();

// ---------------------------------------------------------------------------
// One pass evaluation

/// Mean over τ ∈ {0, 0.05, …, 1} of the fraction with IoU > τ, ×100.
double success_metric(const std::vector<double>& ious);
/// Mean over τ ∈ {0, 0.1, …, 2} of the fraction with distance ≤ τ, ×100.
double precision_metric(const std::vector<double>& dists);

struct OPEReport {
  std::string id;
  std::vector<double> ious;
  std::vector<double> distances;
  double success = 0.0;
  double precision = 0.0;
  std::size_t frames = 0;
};

OPEReport make_report(const std::vector<Box3D>& predicted, const Tracklet& t);

struct OPEResult {
  OPEReport aggregate;  // frame-weighted; series concatenated in tracklet order
  std::vector<OPEReport> per_tracklet;
};

/// Frame-weighted mean of per-tracklet metrics.
OPEReport aggregate_reports(const std::vector<OPEReport>& reports);

using ModelFactory = std::function<std::unique_ptr<StepModel>(const Tracklet&)>;

/// Tracklet i is tracked with seed + i, in parallel (M3SOT_THREADS caps it).
OPEResult run_ope(const ModelFactory& factory, const std::vector<Tracklet>& tracklets, const TrackOptions& opts,
                  std::uint64_t seed);
OPEResult run_ope(const Network& net, ParameterStore& params, const std::vector<Tracklet>& tracklets,
                  std::uint64_t seed);

TrackOptions track_options(const ModelConfig& m);

// ---------------------------------------------------------------------------
// Experiments

struct AblationCell {
  std::string name;
  TrainConfig cfg;
};

struct AblationRow {
  std::string name;
  double success = 0.0;
  double precision = 0.0;
  double wall_seconds = 0.0;
  bool ok = true;
  std::string error;
};

std::vector<AblationCell> ablation_grid(const std::string& table, const TrainConfig& base);
/// Cells run in order with the same seed; a failing cell is recorded and skipped.
std::vector<AblationRow> ablation_runner(const std::vector<AblationCell>& cells, const std::vector<Tracklet>& train_set,
                                         const std::vector<Tracklet>& test_set, std::uint64_t seed);
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct PilotRow {
  std::string paradigm;
  std::vector<std::size_t> ks;
  std::vector<double> precision;
  std::vector<double> success;
};

/// Trains and evaluates one model per K with the given paradigm.
PilotRow pilot_paradigm(Paradigm mode, const std::vector<std::size_t>& ks, const TrainConfig& base,
                        const std::vector<Tracklet>& train_set, const std::vector<Tracklet>& test_set,
                        std::uint64_t seed);
std::string pilot_csv(const std::vector<PilotRow>& rows);

// ---------------------------------------------------------------------------
// key=value configuration

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues load_key_values(const std::filesystem::path& path);
/// Applies known keys; unknown keys or bad values → ConfigError.
void apply_config(TrainConfig& cfg, const KeyValues& kv);
void apply_config(SyntheticSceneConfig& cfg, const KeyValues& kv);
/// Every model and training key, round-trippable through apply_config.
std::string format_config(const TrainConfig& cfg);

const char* paradigm_name(Paradigm p);

}  // namespace m3sot
