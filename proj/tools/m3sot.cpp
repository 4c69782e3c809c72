// m3sot command line: train, track, eval, ablate, pilot, gen, import-kitti.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "m3sot/bench.hpp"
#include "m3sot/errors.hpp"

using namespace m3sot;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "out";
};

KeyValues read_config(const Common& c) {
  return c.config.empty() ? KeyValues{} : load_key_values(c.config);
}

TrainConfig train_config(const Common& c) {
  TrainConfig cfg = TrainConfig::desk();
  apply_config(cfg, read_config(c));
  if (c.seed_set) cfg.seed = c.seed;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

// A path that is a directory of *.jsonl or a single tracklet file.
std::vector<Tracklet> load_data(const std::string& path) {
  if (path == "synthetic-train") return standard_benchmark().train;
  if (path == "synthetic-test") return standard_benchmark().test;
  if (fs::is_directory(path)) return load_tracklet_dir(path);
  return {load_tracklet(path)};
}

ModelConfig model_next_to(const fs::path& ckpt) {
  TrainConfig cfg = TrainConfig::desk();
  const fs::path side = ckpt.parent_path() / "model.cfg";
  if (!fs::exists(side)) throw ConfigError("missing " + side.string() + " next to the checkpoint");
  apply_config(cfg, load_key_values(side));
  return cfg.model;
}

std::string boxes_csv(const std::vector<Box3D>& boxes) {
  std::string s = "frame,x,y,z,w,l,h,yaw\n";
  char buf[256];
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Box3D& b = boxes[i];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", i + 1, b.center.x, b.center.y,
                  b.center.z, b.size.w, b.size.l, b.size.h, b.yaw);
    s += buf;
  }
  return s;
}

json report_json(const OPEResult& r) {
  json j;
  j["success"] = r.aggregate.success;
  j["precision"] = r.aggregate.precision;
  j["frames"] = r.aggregate.frames;
  for (const auto& t : r.per_tracklet)
    j["tracklets"].push_back({{"id", t.id}, {"success", t.success}, {"precision", t.precision}, {"frames", t.frames}});
  return j;
}

int cmd_train(const Common& c, const std::string& data) {
  const TrainConfig cfg = train_config(c);
  const auto set = load_data(data);
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "model.cfg", format_config(cfg));
  const TrainResult r = train(cfg, set, fs::path(c.out));
  json j{{"steps", r.steps}, {"checkpoint", (fs::path(c.out) / "model.m3ckpt").string()}};
  if (!r.log.empty()) j["final_loss"] = r.log.back().total;
  write_text(fs::path(c.out) / "summary.json", j.dump(2) + "\n");
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_track(const Common& c, const std::string& ckpt, const std::string& data) {
  const Network net(model_next_to(ckpt));
  ParameterStore params = ParameterStore::load(ckpt);
  const auto set = load_data(data);
  NetworkModel model(net, params);
  const TrackOptions opts = track_options(net.config());
  json j;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto boxes = run_sequence(set[i], model, opts, c.seed + i);
    write_text(fs::path(c.out) / (set[i].id + ".csv"), boxes_csv(boxes));
    const OPEReport r = make_report(boxes, set[i]);
    j["tracklets"].push_back({{"id", r.id}, {"success", r.success}, {"precision", r.precision}});
  }
  write_text(fs::path(c.out) / "summary.json", j.dump(2) + "\n");
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& ckpt, const std::string& data) {
  const Network net(model_next_to(ckpt));
  ParameterStore params = ParameterStore::load(ckpt);
  const OPEResult r = run_ope(net, params, load_data(data), c.seed);
  std::string csv = "id,frames,success,precision\n";
  char buf[256];
  for (const auto& t : r.per_tracklet) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.4f,%.4f\n", t.id.c_str(), t.frames, t.success, t.precision);
    csv += buf;
  }
  std::snprintf(buf, sizeof buf, "all,%zu,%.4f,%.4f\n", r.aggregate.frames, r.aggregate.success,
                r.aggregate.precision);
  csv += buf;
  write_text(fs::path(c.out) / "eval.csv", csv);
  const json j = report_json(r);
  write_text(fs::path(c.out) / "summary.json", j.dump(2) + "\n");
  std::cout << "success " << r.aggregate.success << " precision " << r.aggregate.precision << "\n";
  return 0;
}

int cmd_ablate(const Common& c, const std::string& table, const std::string& train_dir, const std::string& test_dir) {
  const TrainConfig base = train_config(c);
  const auto rows = ablation_runner(ablation_grid(table, base), load_data(train_dir), load_data(test_dir), base.seed);
  write_text(fs::path(c.out) / (table + ".csv"), ablation_csv(rows));
  json j = json::array();
  for (const auto& r : rows)
    j.push_back({{"config", r.name}, {"success", r.success}, {"precision", r.precision}, {"ok", r.ok},
                 {"error", r.error}});
  write_text(fs::path(c.out) / (table + ".json"), j.dump(2) + "\n");
  std::cout << ablation_csv(rows);
  return 0;
}

int cmd_pilot(const Common& c, const std::vector<std::size_t>& ks, const std::string& train_dir,
              const std::string& test_dir) {
  const TrainConfig base = train_config(c);
  const auto tr = load_data(train_dir), te = load_data(test_dir);
  std::vector<PilotRow> rows;
  for (Paradigm p : {Paradigm::kSelfChain, Paradigm::kCrossChain, Paradigm::kManyToOne})
    rows.push_back(pilot_paradigm(p, ks, base, tr, te, base.seed));
  write_text(fs::path(c.out) / "pilot.csv", pilot_csv(rows));
  json j = json::array();
  for (const auto& r : rows) j.push_back({{"paradigm", r.paradigm}, {"ks", r.ks}, {"precision", r.precision},
                                          {"success", r.success}});
  write_text(fs::path(c.out) / "pilot.json", j.dump(2) + "\n");
  std::cout << pilot_csv(rows);
  return 0;
}

int cmd_gen(const Common& c, std::size_t n_train, std::size_t n_test) {
  SyntheticSceneConfig sc;
  apply_config(sc, read_config(c));
  const SyntheticSplit s = synthetic_split(n_train, n_test, c.seed_set ? c.seed : 7, sc);
  save_tracklet_dir(s.train, fs::path(c.out) / "train");
  save_tracklet_dir(s.test, fs::path(c.out) / "test");
  std::cout << "wrote " << s.train.size() << " train and " << s.test.size() << " test tracklets to " << c.out << "\n";
  return 0;
}

int cmd_import(const Common& c, const std::string& velo, const std::string& label, const std::string& calib,
               int track) {
  const Tracklet t = import_kitti(velo, label, calib, track);
  fs::create_directories(c.out);
  const fs::path path = fs::path(c.out) / ("kitti_" + std::to_string(track) + ".jsonl");
  save_tracklet(t, path);
  std::cout << "wrote " << t.size() << " frames to " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"M3SOT point cloud single object tracker"};
  app.require_subcommand(1);
  Common c;
  auto common = [&c](CLI::App* sub) {
    sub->add_option("--config", c.config, "key=value config file");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&c](std::uint64_t s) { c.seed = s; c.seed_set = true; }, "random seed");
    sub->add_option("--out", c.out, "output directory");
  };

  std::string data, ckpt, table = "table5", train_dir = "synthetic-train", test_dir = "synthetic-test";
  std::string velo, label, calib;
  int track = 0;
  std::vector<std::size_t> ks{1, 2, 3, 4};
  std::size_t n_train = 64, n_test = 16;

  auto* tr = app.add_subcommand("train", "train a model");
  common(tr);
  tr->add_option("--data", data, "tracklet file or directory")->required();

  auto* tk = app.add_subcommand("track", "track with a checkpoint, one CSV per tracklet");
  common(tk);
  tk->add_option("--checkpoint", ckpt)->required();
  tk->add_option("--data", data)->required();

  auto* ev = app.add_subcommand("eval", "one pass evaluation");
  common(ev);
  ev->add_option("--checkpoint", ckpt)->required();
  ev->add_option("--data", data)->required();

  auto* ab = app.add_subcommand("ablate", "run an ablation grid");
  common(ab);
  ab->add_option("--table", table)->check(CLI::IsMember({"table5", "table6", "table7", "fig7", "sampling"}));
  ab->add_option("--train", train_dir);
  ab->add_option("--test", test_dir);

  auto* pi = app.add_subcommand("pilot", "template paradigm pilot");
  common(pi);
  pi->add_option("--ks", ks);
  pi->add_option("--train", train_dir);
  pi->add_option("--test", test_dir);

  auto* gn = app.add_subcommand("gen", "write a synthetic split as JSONL");
  common(gn);
  gn->add_option("--train-count", n_train);
  gn->add_option("--test-count", n_test);

  auto* im = app.add_subcommand("import-kitti", "convert one KITTI tracking track to JSONL");
  common(im);
  im->add_option("--velodyne", velo)->required();
  im->add_option("--label", label)->required();
  im->add_option("--calib", calib)->required();
  im->add_option("--track", track)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (tr->parsed()) return cmd_train(c, data);
    if (tk->parsed()) return cmd_track(c, ckpt, data);
    if (ev->parsed()) return cmd_eval(c, ckpt, data);
    if (ab->parsed()) return cmd_ablate(c, table, train_dir, test_dir);
    if (pi->parsed()) return cmd_pilot(c, ks, train_dir, test_dir);
    if (gn->parsed()) return cmd_gen(c, n_train, n_test);
    if (im->parsed()) return cmd_import(c, velo, label, calib, track);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
