#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "m3sot/model.hpp"
#include "m3sot/tracklet.hpp"

namespace m3sot {

// ---------------------------------------------------------------------------
// Cropping and augmentation

/// Points of `frame` inside `ref_box` dilated by `margin`, in the ref_box
/// frame, resampled to exactly n points (without replacement when there are
/// more, all originals plus draws with replacement when fewer). Point order
/// follows the frame's order. std::nullopt when the region is empty.
std::optional<PointCloud> crop_and_sample(const PointCloud& frame, const Box3D& ref_box, std::size_t n,
                                          std::mt19937_64& rng, double margin = 2.0);

struct AugmentRange {
  double translation = 0.3;            // meters, each axis
  double rotation = 10.0 * 3.14159265358979323846 / 180.0;  // radians about z
};

RigidMotion sample_motion(std::mt19937_64& rng, const AugmentRange& range);

/// Rotates points and box by motion.dtheta about the box center, then
/// translates both by (dx, dy, dz).
std::pair<PointCloud, Box3D> augment(const PointCloud& cloud, const Box3D& box, const RigidMotion& motion);
std::pair<PointCloud, Box3D> augment(const PointCloud& cloud, const Box3D& box, std::mt19937_64& rng,
                                     const AugmentRange& range = {});

// ---------------------------------------------------------------------------
// Tracking state

/// A past frame kept as a template; cloud is in the frame of box_world.
struct TemplateEntry {
  PointCloud cloud;
  TargetnessMask mask;
  Box3D box_world;
  std::size_t frame_index = 0;
};

struct TrackerState {
  std::deque<TemplateEntry> templates;  // most recent first, at most K
  Size3 target_size;
  Box3D current_box;
};

/// Builds the initial state from the first frame's ground-truth box.
TrackerState init_state(const Frame& first, std::size_t sample_points, std::mt19937_64& rng,
                        double margin = 2.0);

/// The K template views for a step, expressed in the reference box frame.
/// Short histories repeat the earliest entry.
std::vector<TemplateView> template_views(const TrackerState& state, std::size_t k, const Box3D& reference);

/// Information handed to a step model.
struct StepContext {
  std::vector<TemplateView> templates;
  PointCloud search;     // reference frame
  Box3D reference;       // world
  Size3 target_size;
  std::size_t frame_index = 0;
  std::mt19937_64* rng = nullptr;
};

/// Predicts the winning proposal (reference frame) for one step.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual Proposal predict(const StepContext& ctx) = 0;
};

/// The learned network with read-only parameters.
class NetworkModel : public StepModel {
 public:
  NetworkModel(const Network& net, ParameterStore& params) : net_(net), params_(params) {}
  Proposal predict(const StepContext& ctx) override;

 private:
  const Network& net_;
  ParameterStore& params_;
};

/// Mask and center heads replaced by ground truth: every point inside the
/// true box votes for the true center and yaw with confidence 1.
class OracleModel : public StepModel {
 public:
  explicit OracleModel(std::vector<Box3D> gt_world) : gt_(std::move(gt_world)) {}
  Proposal predict(const StepContext& ctx) override;

 private:
  std::vector<Box3D> gt_;
};

/// Keeps the reference box (static baseline).
class HoldModel : public StepModel {
 public:
  Proposal predict(const StepContext& ctx) override;
};

struct TrackOptions {
  std::size_t templates = 2;
  std::size_t sample_points = 1024;
  double margin = 2.0;
};

/// One tracking step. Returns the new world box; on an empty search region
/// the current box is returned and no template is pushed.
Box3D track_step(TrackerState& state, const PointCloud& frame, std::size_t frame_index, StepModel& model,
                 const TrackOptions& opts, std::mt19937_64& rng);

/// One-pass tracking from the first ground-truth box: frames.size() − 1 boxes.
std::vector<Box3D> run_sequence(const Tracklet& tracklet, StepModel& model, const TrackOptions& opts,
                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training

struct LossWeights {
  double mask = 1.0;
  double center = 1.0;
  double box = 1.0;
  bool use_mask = true;
  bool use_center = true;
  bool use_box = true;
};

struct LossBreakdown {
  Var total;
  double mask = 0.0;
  double center = 0.0;
  double box = 0.0;
};

/// Deep-supervised loss over every pair and layer plus the box term on the
/// final layer. gt_box is the search-frame ground truth in the reference frame.
LossBreakdown compute_losses(const StepOutputs& out, const Box3D& gt_box, const LossWeights& w);

/// A training example with inputs and the reference-frame ground truth.
struct TrainSample {
  StepInputs inputs;
  Box3D gt_box;
};

/// Ground-truth template boxes perturbed by `range` (zero range disables it),
/// cropped like inference, with the search frame relative to template 1.
TrainSample make_train_sample(const Tracklet& tracklet, std::size_t frame, const ModelConfig& model,
                              const AugmentRange& range, std::mt19937_64& rng);

struct TrainConfig {
  ModelConfig model = ModelConfig::full_size();
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double lr_decay_factor = 0.2;
  std::size_t lr_decay_every = 10;
  std::uint64_t seed = 0;
  /// Stop after this many optimizer steps (0 = no limit).
  std::size_t max_steps = 0;
  bool augment = true;
  AugmentRange augment_range;
  LossWeights loss;

  /// Desk-scale defaults: desk model, 20 epochs, batch 16.
  static TrainConfig desk();
};

struct TrainLogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double total = 0.0, mask = 0.0, center = 0.0, box = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ParameterStore params;
  std::vector<TrainLogRow> log;
  std::size_t steps = 0;
};

/// Adam over shuffled minibatches; fully deterministic given the seed.
/// With out_dir set, writes checkpoint_epochNNN.m3ckpt per epoch plus
/// model.m3ckpt and train_log.csv. A NaN loss throws NumericError after
/// the log is flushed; the last epoch checkpoint on disk is kept.
TrainResult train(const TrainConfig& cfg, const std::vector<Tracklet>& data,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const ParameterStore* init = nullptr);

}  // namespace m3sot
