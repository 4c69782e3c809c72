#include "m3sot/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "m3sot/errors.hpp"
#include "m3sot/ops.hpp"

namespace m3sot {

void Tracklet::validate() const {
  if (frames.size() < 2) throw ValidationError("tracklet " + id + " needs at least 2 frames");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    frames[i].box.validate();
    if (!(frames[i].box.size == frames.front().box.size)) {
      throw ValidationError("tracklet " + id + ": box size changes at frame " + std::to_string(i));
    }
    for (const auto& p : frames[i].cloud.points) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
        throw ValidationError("tracklet " + id + ": non-finite point in frame " + std::to_string(i));
      }
    }
  }
}

std::optional<PointCloud> crop_and_sample(const PointCloud& frame, const Box3D& ref_box, std::size_t n,
                                          std::mt19937_64& rng, double margin) {
  const Box3D region = dilate(ref_box, margin);
  std::vector<std::uint32_t> inside;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (point_in_box(frame[i], region)) inside.push_back(static_cast<std::uint32_t>(i));
  }
  if (inside.empty() || n == 0) return std::nullopt;
  std::vector<std::uint32_t> chosen;
  if (inside.size() >= n) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, inside.size() - 1);
      std::swap(inside[i], inside[pick(rng)]);
    }
    chosen.assign(inside.begin(), inside.begin() + static_cast<std::ptrdiff_t>(n));
  } else {
    chosen = inside;
    std::uniform_int_distribution<std::size_t> pick(0, inside.size() - 1);
    while (chosen.size() < n) chosen.push_back(inside[pick(rng)]);
  }
  std::sort(chosen.begin(), chosen.end());
  PointCloud out;
  out.points.reserve(n);
  for (std::uint32_t i : chosen) out.points.push_back(to_box_frame(frame[i], ref_box));
  return out;
}

RigidMotion sample_motion(std::mt19937_64& rng, const AugmentRange& range) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  RigidMotion m;
  m.dx = unit(rng) * range.translation;
  m.dy = unit(rng) * range.translation;
  m.dz = unit(rng) * range.translation;
  m.dtheta = unit(rng) * range.rotation;
  return m;
}

std::pair<PointCloud, Box3D> augment(const PointCloud& cloud, const Box3D& box, const RigidMotion& motion) {
  const double c = std::cos(motion.dtheta), s = std::sin(motion.dtheta);
  const Vec3 shift{motion.dx, motion.dy, motion.dz};
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    const Vec3 d = p - box.center;
    out.points.push_back(box.center + Vec3{c * d.x - s * d.y, s * d.x + c * d.y, d.z} + shift);
  }
  return {std::move(out), apply_motion(box, motion)};
}

std::pair<PointCloud, Box3D> augment(const PointCloud& cloud, const Box3D& box, std::mt19937_64& rng,
                                     const AugmentRange& range) {
  return augment(cloud, box, sample_motion(rng, range));
}

namespace {

Box3D canonical_box(const Size3& size) { return Box3D{{0, 0, 0}, size, 0.0}; }

std::optional<TemplateEntry> make_entry(const PointCloud& frame, const Box3D& box, std::size_t frame_index,
                                        std::size_t n, std::mt19937_64& rng, double margin) {
  auto cloud = crop_and_sample(frame, box, n, rng, margin);
  if (!cloud) return std::nullopt;
  TemplateEntry e;
  e.mask = compute_targetness_mask(*cloud, canonical_box(box.size));
  e.cloud = std::move(*cloud);
  e.box_world = box;
  e.frame_index = frame_index;
  return e;
}

PointCloud rebase(const PointCloud& cloud, const Box3D& from, const Box3D& to) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(to_box_frame(from_box_frame(p, from), to));
  return out;
}

}  // namespace

TrackerState init_state(const Frame& first, std::size_t sample_points, std::mt19937_64& rng, double margin) {
  auto entry = make_entry(first.cloud, first.box, 0, sample_points, rng, margin);
  if (!entry) throw ValidationError("first frame has no points near the initial box");
  TrackerState s;
  s.templates.push_back(std::move(*entry));
  s.target_size = first.box.size;
  s.current_box = first.box;
  return s;
}

std::vector<TemplateView> template_views(const TrackerState& state, std::size_t k, const Box3D& reference) {
  if (state.templates.empty()) throw ContractError("tracker state has no templates");
  std::vector<TemplateView> views;
  for (std::size_t j = 0; j < k; ++j) {
    const TemplateEntry& e = state.templates[std::min(j, state.templates.size() - 1)];
    views.push_back(TemplateView{rebase(e.cloud, e.box_world, reference), e.mask, box_to_frame(e.box_world, reference)});
  }
  return views;
}

Proposal NetworkModel::predict(const StepContext& ctx) {
  Tape tape(false);
  StepInputs in{ctx.templates, ctx.search, ctx.target_size, ctx.rng};
  return select_best(net_.forward(tape, params_, in).proposal_sets());
}

Proposal OracleModel::predict(const StepContext& ctx) {
  const Box3D gt = box_to_frame(gt_.at(ctx.frame_index), ctx.reference);
  ProposalSet set;
  for (std::size_t i = 0; i < ctx.search.size(); ++i) {
    const bool inside = point_in_box(ctx.search[i], gt);
    Proposal p;
    p.box = inside ? gt : Box3D{ctx.search[i], ctx.target_size, 0.0};
    p.confidence = inside ? 1.0 : 0.0;
    p.point_index = i;
    set.proposals.push_back(p);
  }
  if (set.proposals.empty() || select_best({set}).confidence == 0.0) {
    Proposal p;
    p.box = gt;
    p.confidence = 1.0;
    return p;
  }
  return select_best({set});
}

Proposal HoldModel::predict(const StepContext& ctx) {
  Proposal p;
  p.box = canonical_box(ctx.target_size);
  p.confidence = 1.0;
  return p;
}

Box3D track_step(TrackerState& state, const PointCloud& frame, std::size_t frame_index, StepModel& model,
                 const TrackOptions& opts, std::mt19937_64& rng) {
  auto search = crop_and_sample(frame, state.current_box, opts.sample_points, rng, opts.margin);
  if (!search) return state.current_box;
  StepContext ctx;
  ctx.templates = template_views(state, opts.templates, state.current_box);
  ctx.search = std::move(*search);
  ctx.reference = state.current_box;
  ctx.target_size = state.target_size;
  ctx.frame_index = frame_index;
  ctx.rng = &rng;
  Box3D local = model.predict(ctx).box;
  local.size = state.target_size;
  const Box3D world = box_from_frame(local, state.current_box);

  if (auto entry = make_entry(frame, world, frame_index, opts.sample_points, rng, opts.margin)) {
    state.templates.push_front(std::move(*entry));
    while (state.templates.size() > opts.templates) state.templates.pop_back();
  }
  state.current_box = world;
  return world;
}

std::vector<Box3D> run_sequence(const Tracklet& tracklet, StepModel& model, const TrackOptions& opts,
                                std::uint64_t seed) {
  if (tracklet.frames.size() < 2) throw ValidationError("tracklet needs at least 2 frames");
  std::mt19937_64 rng(seed);
  TrackerState state = init_state(tracklet.frames.front(), opts.sample_points, rng, opts.margin);
  std::vector<Box3D> out;
  out.reserve(tracklet.frames.size() - 1);
  for (std::size_t t = 1; t < tracklet.frames.size(); ++t) {
    out.push_back(track_step(state, tracklet.frames[t].cloud, t, model, opts, rng));
  }
  return out;
}

LossBreakdown compute_losses(const StepOutputs& out, const Box3D& gt_box, const LossWeights& w) {
  if (out.pairs.empty()) throw ContractError("compute_losses: no pair outputs");
  Tape* tape = out.pairs.front().layers.back().feats.tape();
  std::vector<Var> terms;
  LossBreakdown lb;
  const Vec3 gc = gt_box.center;

  for (const PairOutputs& po : out.pairs) {
    const std::size_t n = po.search_coords.size();
    std::vector<double> labels = po.template_mask.values;
    const TargetnessMask search_labels = compute_targetness_mask(po.search_coords, gt_box);
    labels.insert(labels.end(), search_labels.values.begin(), search_labels.values.end());

    std::vector<std::uint32_t> positive;
    std::vector<double> center_target;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != 1.0) continue;
      positive.push_back(static_cast<std::uint32_t>(i));
      const Vec3 c = i < n ? po.template_box.center : gc;
      center_target.insert(center_target.end(), {c.x, c.y, c.z});
    }

    for (const LayerOutput& layer : po.layers) {
      if (w.use_mask) {
        const Var m = ops::scale(ops::bce(layer.mask_pred, labels), w.mask);
        lb.mask += m.item();
        terms.push_back(m);
      }
      if (w.use_center && !positive.empty()) {
        const Var pred = ops::gather_rows(layer.center_pred, positive);
        const Var target = tape->constant(Tensor(Shape{positive.size(), 3}, center_target));
        const Var c = ops::scale(ops::huber(ops::sub(pred, target)), w.center * 3.0 / static_cast<double>(pred.numel()));
        const Var cs = ops::sum(c);
        lb.center += cs.item();
        terms.push_back(cs);
      }
    }

    if (w.use_box) {
      const LocatorOutput& loc = po.locator;
      const Var centers = split_blocks(po.layers.back().center_pred).second;
      std::size_t best = 0, nearest = 0;
      double best_conf = -1.0, best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (loc.set.proposals[i].confidence > best_conf) {
          best_conf = loc.set.proposals[i].confidence;
          best = i;
        }
        const double d = (po.search_coords[i] - gc).norm();
        if (d < best_d) {
          best_d = d;
          nearest = i;
        }
      }
      const std::uint32_t bi = static_cast<std::uint32_t>(best), ni = static_cast<std::uint32_t>(nearest);
      tape->note_branch(best);
      const Var target = tape->constant(Tensor(Shape{1, 3}, {gc.x, gc.y, gc.z}));
      Var box_term = ops::sum(ops::huber(ops::sub(ops::gather_rows(centers, {&bi, 1}), target)));

      std::vector<std::uint32_t> search_pos;
      for (std::size_t i = 0; i < n; ++i)
        if (search_labels.values[i] == 1.0) search_pos.push_back(static_cast<std::uint32_t>(i));
      if (!search_pos.empty()) {
        const Var yaw = ops::gather_rows(loc.yaw_residual, search_pos);
        const Var yaw_target = tape->constant(Tensor(Shape{search_pos.size(), 1}, gt_box.yaw));
        box_term = ops::add(box_term, ops::mean(ops::huber(ops::sub(yaw, yaw_target))));
      }
      const Var conf = ops::gather_rows(loc.confidence, {&ni, 1});
      box_term = ops::sub(box_term, ops::sum(ops::log(ops::add_scalar(conf, 1e-6))));
      box_term = ops::scale(box_term, w.box);
      lb.box += box_term.item();
      terms.push_back(box_term);
    }
  }
  if (terms.empty()) {
    lb.total = tape->constant(Tensor::scalar(0.0));
    return lb;
  }
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ops::add(total, terms[i]);
  lb.total = total;
  return lb;
}

std::optional<TrainSample> make_train_sample_opt(const Tracklet& tracklet, std::size_t frame,
                                                 const ModelConfig& model, const AugmentRange& range,
                                                 std::mt19937_64& rng) {
  const std::size_t k = model.templates, n = model.sample_points();
  std::vector<TemplateView> views;
  Box3D reference;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t f = frame >= j + 1 ? frame - j - 1 : 0;
    const Box3D box = augment(PointCloud{}, tracklet.frames[f].box, rng, range).second;
    if (j == 0) reference = box;
    auto crop = crop_and_sample(tracklet.frames[f].cloud, box, n, rng, model.crop_margin);
    if (!crop) return std::nullopt;
    TemplateView v;
    v.mask = compute_targetness_mask(*crop, canonical_box(box.size));
    v.cloud = rebase(*crop, box, reference);
    v.box = box_to_frame(box, reference);
    views.push_back(std::move(v));
  }
  auto search = crop_and_sample(tracklet.frames[frame].cloud, reference, n, rng, model.crop_margin);
  if (!search) return std::nullopt;
  TrainSample s;
  s.inputs.templates = std::move(views);
  s.inputs.search = std::move(*search);
  s.inputs.target_size = tracklet.frames[frame].box.size;
  s.gt_box = box_to_frame(tracklet.frames[frame].box, reference);
  return s;
}

TrainSample make_train_sample(const Tracklet& tracklet, std::size_t frame, const ModelConfig& model,
                              const AugmentRange& range, std::mt19937_64& rng) {
  if (frame == 0 || frame >= tracklet.frames.size()) throw ContractError("training frame index out of range");
  auto s = make_train_sample_opt(tracklet, frame, model, range, rng);
  if (!s) throw ValidationError("empty crop for training frame " + std::to_string(frame));
  return std::move(*s);
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.model = ModelConfig::desk();
  c.epochs = 20;
  c.batch_size = 16;
  return c;
}

namespace {

void write_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
  std::ofstream out(path);
  out << "epoch,step,loss_total,loss_mask,loss_center,loss_box,lr\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.epoch, r.step, r.total, r.mask,
                  r.center, r.box, r.lr);
    out << buf;
  }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<Tracklet>& data,
                  const std::optional<std::filesystem::path>& out_dir, const ParameterStore* init) {
  if (data.empty()) throw ContractError("training needs a nonempty dataset");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  const Network net(cfg.model);
  TrainResult result;
  result.params = init ? *init : net.init(cfg.seed);
  if (init) net.check(result.params);
  if (out_dir) std::filesystem::create_directories(*out_dir);

  std::vector<std::pair<std::size_t, std::size_t>> samples;
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i].validate();
    for (std::size_t t = 1; t < data[i].frames.size(); ++t) samples.emplace_back(i, t);
  }

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam(cfg.learning_rate);
  const AugmentRange range = cfg.augment ? cfg.augment_range : AugmentRange{0.0, 0.0};
  bool done = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    const auto decays = cfg.lr_decay_every ? epoch / cfg.lr_decay_every : 0;
    adam.set_lr(cfg.learning_rate * std::pow(cfg.lr_decay_factor, static_cast<double>(decays)));
    std::shuffle(samples.begin(), samples.end(), rng);
    for (std::size_t start = 0; start < samples.size() && !done; start += cfg.batch_size) {
      const std::size_t stop = std::min(samples.size(), start + cfg.batch_size);
      result.params.zero_grad();
      TrainLogRow row;
      row.epoch = epoch;
      row.step = result.steps;
      row.lr = adam.lr();
      std::size_t used = 0;
      for (std::size_t b = start; b < stop; ++b) {
        auto sample = make_train_sample_opt(data[samples[b].first], samples[b].second, cfg.model, range, rng);
        if (!sample) continue;
        sample->inputs.rng = &rng;
        Tape tape;
        const StepOutputs out = net.forward(tape, result.params, sample->inputs);
        const LossBreakdown lb = compute_losses(out, sample->gt_box, cfg.loss);
        const double total = lb.total.item();
        if (!std::isfinite(total)) {
          result.log.push_back(row);
          if (out_dir) write_log(*out_dir / "train_log.csv", result.log);
          throw NumericError("training diverged at step " + std::to_string(result.steps));
        }
        tape.backward(lb.total);
        row.total += total;
        row.mask += lb.mask;
        row.center += lb.center;
        row.box += lb.box;
        ++used;
      }
      if (used == 0) continue;
      const double inv = 1.0 / static_cast<double>(used);
      for (auto& [_, p] : result.params)
        for (double& g : p.grad()) g *= inv;
      adam.step(result.params);
      row.total *= inv;
      row.mask *= inv;
      row.center *= inv;
      row.box *= inv;
      result.log.push_back(row);
      ++result.steps;
      if (cfg.max_steps && result.steps >= cfg.max_steps) done = true;
    }
    if (out_dir) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_epoch%03zu.m3ckpt", epoch);
      result.params.save(*out_dir / name);
      write_log(*out_dir / "train_log.csv", result.log);
    }
  }
  result.params.zero_grad();
  if (out_dir) {
    result.params.save(*out_dir / "model.m3ckpt");
    write_log(*out_dir / "train_log.csv", result.log);
  }
  return result;
}

}  // namespace m3sot
