#include <exception>

#include <omp.h>

#include "m3sot/bench.hpp"
#include "m3sot/errors.hpp"
#include "m3sot/kernels.hpp"

namespace m3sot {

namespace {
constexpr int kThresholds = 21;
}

double success_metric(const std::vector<double>& ious) {
  if (ious.empty()) throw ContractError("success_metric: empty series");
  std::size_t hits = 0;
  for (int i = 0; i < kThresholds; ++i) {
    const double tau = i / 20.0;
    for (double v : ious) hits += v > tau;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(kThresholds * ious.size());
}

double precision_metric(const std::vector<double>& dists) {
  if (dists.empty()) throw ContractError("precision_metric: empty series");
  std::size_t hits = 0;
  for (int i = 0; i < kThresholds; ++i) {
    const double tau = i / 10.0;
    for (double v : dists) hits += v <= tau;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(kThresholds * dists.size());
}

OPEReport make_report(const std::vector<Box3D>& predicted, const Tracklet& t) {
  if (predicted.size() + 1 != t.frames.size()) {
    throw ContractError("expected " + std::to_string(t.frames.size() - 1) + " predictions, got " +
                        std::to_string(predicted.size()));
  }
  OPEReport r;
  r.id = t.id;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    r.ious.push_back(box_iou_3d(predicted[i], t.frames[i + 1].box));
    r.distances.push_back(center_distance(predicted[i], t.frames[i + 1].box));
  }
  r.frames = predicted.size();
  r.success = success_metric(r.ious);
  r.precision = precision_metric(r.distances);
  return r;
}

OPEReport aggregate_reports(const std::vector<OPEReport>& reports) {
  if (reports.empty()) throw ContractError("aggregate_reports: no reports");
  OPEReport agg;
  agg.id = "aggregate";
  double s = 0.0, p = 0.0;
  for (const auto& r : reports) {
    agg.ious.insert(agg.ious.end(), r.ious.begin(), r.ious.end());
    agg.distances.insert(agg.distances.end(), r.distances.begin(), r.distances.end());
    agg.frames += r.frames;
    s += r.success * static_cast<double>(r.frames);
    p += r.precision * static_cast<double>(r.frames);
  }
  if (agg.frames == 0) throw ContractError("aggregate_reports: zero frames");
  agg.success = s / static_cast<double>(agg.frames);
  agg.precision = p / static_cast<double>(agg.frames);
  return agg;
}

OPEResult run_ope(const ModelFactory& factory, const std::vector<Tracklet>& tracklets, const TrackOptions& opts,
                  std::uint64_t seed) {
  if (tracklets.empty()) throw ContractError("run_ope: no tracklets");
  OPEResult out;
  out.per_tracklet.resize(tracklets.size());
  std::vector<std::exception_ptr> errors(tracklets.size());
  const int n = static_cast<int>(tracklets.size());
#pragma omp parallel for schedule(dynamic) num_threads(kernels::max_threads())
  for (int i = 0; i < n; ++i) {
    try {
      auto model = factory(tracklets[i]);
      const auto boxes = run_sequence(tracklets[i], *model, opts, seed + static_cast<std::uint64_t>(i));
      out.per_tracklet[i] = make_report(boxes, tracklets[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  out.aggregate = aggregate_reports(out.per_tracklet);
  return out;
}

TrackOptions track_options(const ModelConfig& m) { return TrackOptions{m.templates, m.sample_points(), m.crop_margin}; }

OPEResult run_ope(const Network& net, ParameterStore& params, const std::vector<Tracklet>& tracklets,
                  std::uint64_t seed) {
  net.check(params);
  return run_ope([&](const Tracklet&) { return std::make_unique<NetworkModel>(net, params); }, tracklets,
                 track_options(net.config()), seed);
}

}  // namespace m3sot
