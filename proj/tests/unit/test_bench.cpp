#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "helpers.hpp"
#include "m3sot/bench.hpp"
#include "m3sot/errors.hpp"

using namespace m3sot;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = M3SOT_FIXTURES;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("m3sot_bench_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("success metric pins") {
  CHECK(success_metric({1.0, 1.0, 1.0}) == doctest::Approx(2000.0 / 21.0).epsilon(1e-12));
  CHECK(success_metric({1.0}) == doctest::Approx(95.24).epsilon(0.0001));
  CHECK(success_metric({0.0, 0.0}) == 0.0);
  CHECK(success_metric({0.5}) == doctest::Approx(47.62).epsilon(0.0001));
  CHECK_THROWS_AS(success_metric({}), ContractError);
}

TEST_CASE("precision metric pins") {
  CHECK(precision_metric({0.0, 0.0}) == 100.0);
  CHECK(precision_metric({5.0}) == 0.0);
  CHECK(precision_metric({1.0}) == doctest::Approx(52.38).epsilon(0.0001));
  CHECK(precision_metric({2.0}) == doctest::Approx(100.0 / 21.0).epsilon(1e-12));
  CHECK_THROWS_AS(precision_metric({}), ContractError);
}

TEST_CASE("metrics are monotone and order free") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0, 1), d(0, 3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> ious(7), dists(7);
    for (auto& v : ious) v = u(rng);
    for (auto& v : dists) v = d(rng);
    auto better_i = ious, better_d = dists;
    const std::size_t j = rng() % 7;
    better_i[j] = std::min(1.0, better_i[j] + u(rng) * 0.3);
    better_d[j] = std::max(0.0, better_d[j] - u(rng) * 0.5);
    CHECK(success_metric(better_i) >= success_metric(ious));
    CHECK(precision_metric(better_d) >= precision_metric(dists));
    auto shuffled_i = ious, shuffled_d = dists;
    std::shuffle(shuffled_i.begin(), shuffled_i.end(), rng);
    std::shuffle(shuffled_d.begin(), shuffled_d.end(), rng);
    CHECK(success_metric(shuffled_i) == success_metric(ious));
    CHECK(precision_metric(shuffled_d) == precision_metric(dists));
  }
}

TEST_CASE("reports and aggregation") {
  SyntheticSceneConfig sc;
  sc.frames = 11;
  sc.seed = 1;
  const Tracklet a = generate_synthetic_tracklet(sc);
  sc.frames = 31;
  sc.seed = 2;
  const Tracklet b = generate_synthetic_tracklet(sc);

  std::vector<Box3D> perfect;
  for (std::size_t i = 1; i < a.size(); ++i) perfect.push_back(a.frames[i].box);
  const OPEReport ra = make_report(perfect, a);
  CHECK(ra.frames == 10);
  CHECK(ra.success == doctest::Approx(95.238).epsilon(1e-4));
  CHECK(ra.precision == 100.0);
  CHECK_THROWS_AS(make_report({}, a), ContractError);

  std::vector<Box3D> shifted;
  for (std::size_t i = 1; i < b.size(); ++i) {
    Box3D x = b.frames[i].box;
    x.center.x += 0.05 * static_cast<double>(i);
    shifted.push_back(x);
  }
  const OPEReport rb = make_report(shifted, b);
  CHECK(rb.frames == 30);

  const OPEReport one = aggregate_reports({ra});
  CHECK(one.success == ra.success);
  CHECK(one.precision == ra.precision);

  const OPEReport agg = aggregate_reports({ra, rb});
  CHECK(agg.frames == 40);
  CHECK(agg.success == doctest::Approx((10 * ra.success + 30 * rb.success) / 40));
  CHECK(agg.precision == doctest::Approx((10 * ra.precision + 30 * rb.precision) / 40));
  CHECK(agg.ious.size() == 40);
}

TEST_CASE("run_ope with the oracle and hold models") {
  const SyntheticSplit split = synthetic_split(0, 3, 5);
  TrackOptions opts;
  opts.sample_points = 128;
  const OPEResult oracle = run_ope(
      [](const Tracklet& t) {
        std::vector<Box3D> gt;
        for (const auto& f : t.frames) gt.push_back(f.box);
        return std::make_unique<OracleModel>(gt);
      },
      split.test, opts, 9);
  CHECK(oracle.per_tracklet.size() == 3);
  CHECK(oracle.aggregate.success == doctest::Approx(95.238).epsilon(1e-4));
  for (double d : oracle.aggregate.distances) CHECK(d < 1e-9);

  const auto hold = [](const Tracklet&) { return std::make_unique<HoldModel>(); };
  const OPEResult h1 = run_ope(hold, split.test, opts, 9), h2 = run_ope(hold, split.test, opts, 9);
  CHECK(h1.aggregate.ious == h2.aggregate.ious);
  CHECK(h1.aggregate.success < oracle.aggregate.success);
}

TEST_CASE("tracklet jsonl") {
  SUBCASE("fixture parses to known values") {
    const Tracklet t = load_tracklet(kFixtures / "two_frame.jsonl");
    CHECK(t.id == "fixture-a");
    CHECK(t.category == "Car");
    REQUIRE(t.size() == 2);
    CHECK(t.frames[0].cloud.size() == 2);
    CHECK(t.frames[0].cloud[1] == Vec3{1.5, 2.5, 0.25});
    CHECK(t.frames[1].box.center == Vec3{1.5, 2.75, 0.4});
    CHECK(t.frames[1].box.size == Size3{1.6, 3.9, 1.5});
    CHECK(t.frames[1].box.yaw == -0.2);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(load_tracklet(kFixtures / "empty.jsonl"), ParseError);
    CHECK_THROWS_AS(load_tracklet(kFixtures / "bad_size.jsonl"), ValidationError);
    try {
      load_tracklet(kFixtures / "malformed.jsonl");
      FAIL("no throw");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("round trip") {
    SyntheticSceneConfig sc;
    sc.seed = 77;
    sc.frames = 4;
    const Tracklet t = generate_synthetic_tracklet(sc);
    CHECK(tracklet_from_jsonl(tracklet_to_jsonl(t)) == t);
    const fs::path dir = scratch("jsonl");
    save_tracklet_dir({t, t}, dir);
    const auto back = load_tracklet_dir(dir);
    REQUIRE(back.size() == 2);
    CHECK(back[1] == t);
    fs::remove_all(dir);
  }
}

TEST_CASE("kitti scans") {
  const fs::path dir = scratch("scan");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "two.bin", std::ios::binary);
    const float v[8] = {1.5f, -2.0f, 0.25f, 0.9f, 3.0f, 4.0f, -1.0f, 0.1f};
    out.write(reinterpret_cast<const char*>(v), sizeof v);
  }
  const PointCloud two = read_kitti_scan(dir / "two.bin");
  REQUIRE(two.size() == 2);
  CHECK(two[0] == Vec3{1.5, -2.0, 0.25});
  CHECK(two[1] == Vec3{3.0, 4.0, -1.0});
  {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out.write("0123456789", 10);
  }
  CHECK_THROWS_AS(read_kitti_scan(dir / "bad.bin"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("kitti label transform against a hand multiply") {
  const Calibration calib = load_calibration(kFixtures / "calib_0000.txt");
  const auto labels = read_kitti_labels(kFixtures / "label_0000.txt");
  REQUIRE(labels.size() == 3);
  const KittiLabel& l = labels[0];
  CHECK(l.frame == 1);
  CHECK(l.track_id == 3);
  const Box3D box = kitti_label_to_box(l, calib);
  // camera center (1, 2 - 0.75, 10) through rows [0 0 1 | .5], [-1 0 0 | -.2], [0 -1 0 | .1]
  CHECK(box.center.x == doctest::Approx(10.5));
  CHECK(box.center.y == doctest::Approx(-1.2));
  CHECK(box.center.z == doctest::Approx(-1.15));
  CHECK(box.size == Size3{1.6, 3.9, 1.5});
  // length axis (cos ry, 0, -sin ry) maps to (-sin ry, -cos ry, 0); box y-axis = yaw + pi/2
  CHECK(box.yaw == doctest::Approx(std::numbers::pi - 0.3));

  const KittiLabel back = box_to_kitti_label(box, calib);
  CHECK(back.x == doctest::Approx(l.x));
  CHECK(back.y == doctest::Approx(l.y));
  CHECK(back.z == doctest::Approx(l.z));
  CHECK(back.ry == doctest::Approx(l.ry));
}

TEST_CASE("kitti import") {
  const fs::path dir = scratch("import");
  fs::create_directories(dir / "velodyne");
  PointCloud c;
  c.points = {{10.5, -1.2, -1.15}, {11, -1, -1}};
  write_kitti_scan(c, dir / "velodyne" / "000000.bin");
  write_kitti_scan(c, dir / "velodyne" / "000001.bin");
  const Tracklet t = import_kitti(dir / "velodyne", kFixtures / "label_0000.txt", kFixtures / "calib_0000.txt", 3);
  CHECK(t.id == "label_0000:3");
  CHECK(t.category == "Car");
  REQUIRE(t.size() == 2);
  // rows are reordered by frame
  CHECK(t.frames[1].box.center.x == doctest::Approx(10.5));
  CHECK(t.frames[0].box.center.x == doctest::Approx(10.0));
  CHECK_THROWS_AS(import_kitti(dir / "velodyne", kFixtures / "label_0000.txt", dir / "nope.txt", 3), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("kitti export then import is f32 exact") {
  SyntheticSceneConfig sc;
  sc.seed = 5;
  sc.frames = 3;
  const Tracklet t = generate_synthetic_tracklet(sc);
  const fs::path dir = scratch("export");
  export_kitti(t, dir, 4);
  const Tracklet back = import_kitti(dir / "velodyne", dir / "label.txt", dir / "calib.txt", 4);
  REQUIRE(back.size() == t.size());
  for (std::size_t f = 0; f < t.size(); ++f) {
    REQUIRE(back.frames[f].cloud.size() == t.frames[f].cloud.size());
    for (std::size_t i = 0; i < t.frames[f].cloud.size(); ++i) {
      const Vec3& p = t.frames[f].cloud[i];
      const Vec3& q = back.frames[f].cloud[i];
      CHECK(q.x == static_cast<double>(static_cast<float>(p.x)));
      CHECK(q.y == static_cast<double>(static_cast<float>(p.y)));
      CHECK(q.z == static_cast<double>(static_cast<float>(p.z)));
    }
    CHECK(center_distance(back.frames[f].box, t.frames[f].box) < 1e-9);
    CHECK(std::abs(normalize_angle(back.frames[f].box.yaw - t.frames[f].box.yaw)) < 1e-9);
  }
  fs::remove_all(dir);
}

TEST_CASE("synthetic tracklets") {
  SUBCASE("still scene repeats one frame") {
    SyntheticSceneConfig sc;
    sc.step_x = sc.step_y = sc.step_z = sc.step_yaw = Interval{0, 0};
    sc.clutter_points = 0;
    sc.occlusion_prob = 0;
    sc.sparsity_ramp = 0;
    sc.frames = 5;
    const Tracklet t = generate_synthetic_tracklet(sc);
    for (const Frame& f : t.frames) CHECK(f == t.frames[0]);
  }
  SUBCASE("pure function of the config") {
    SyntheticSceneConfig sc;
    sc.seed = 99;
    CHECK(generate_synthetic_tracklet(sc) == generate_synthetic_tracklet(sc));
    SyntheticSceneConfig other = sc;
    other.seed = 100;
    CHECK_FALSE(generate_synthetic_tracklet(sc) == generate_synthetic_tracklet(other));
  }
  SUBCASE("full occlusion leaves only clutter") {
    SyntheticSceneConfig sc;
    sc.occlusion_prob = 1.0;
    sc.drop_fraction = 1.0;
    for (std::size_t clutter : {0, 40}) {
      sc.clutter_points = clutter;
      const Tracklet t = generate_synthetic_tracklet(sc);
      for (const Frame& f : t.frames) {
        CHECK(f.cloud.size() == clutter);
        for (const Vec3& p : f.cloud.points) CHECK_FALSE(point_in_box(p, f.box));
      }
    }
    sc.clutter_points = 0;
    const Tracklet t = generate_synthetic_tracklet(sc);
    std::mt19937_64 rng(1);
    CHECK_FALSE(crop_and_sample(t.frames[1].cloud, t.frames[1].box, 64, rng).has_value());
  }
  SUBCASE("structure") {
    SyntheticSceneConfig sc;
    sc.seed = 4;
    sc.occlusion_prob = 0;
    const Tracklet t = generate_synthetic_tracklet(sc);
    CHECK(t.size() == 20);
    CHECK_NOTHROW(t.validate());
    // object points sit on the faces, so count against a hair-wider box
    auto inside = [](const Frame& f) {
      Box3D b = f.box;
      b.size = {b.size.w + 1e-9, b.size.l + 1e-9, b.size.h + 1e-9};
      std::size_t n = 0;
      for (const Vec3& p : f.cloud.points) n += point_in_box(p, b);
      return n;
    };
    const std::size_t inside_first = inside(t.frames.front()), inside_last = inside(t.frames.back());
    CHECK(inside_first == 256);
    CHECK(inside_last == 179);  // 256 thinned by 30%
    for (std::size_t f = 1; f < t.size(); ++f) {
      const Vec3 step = to_box_frame(t.frames[f].box.center, t.frames[f - 1].box);
      CHECK(step.y >= 0.2);
      CHECK(step.y <= 0.8);
      CHECK(std::abs(step.x) <= 0.1 + 1e-12);
    }
  }
  SUBCASE("bad configs") {
    SyntheticSceneConfig sc;
    sc.occlusion_prob = 1.5;
    CHECK_THROWS_AS(generate_synthetic_tracklet(sc), ConfigError);
    sc = {};
    sc.frames = 1;
    CHECK_THROWS_AS(generate_synthetic_tracklet(sc), ConfigError);
  }
  SUBCASE("standard split") {
    const SyntheticSplit a = synthetic_split(4, 2, 7), b = synthetic_split(4, 2, 7);
    CHECK(a.train.size() == 4);
    CHECK(a.test.size() == 2);
    CHECK(a.test == b.test);
    CHECK_FALSE(a.train[0] == a.train[1]);
  }
}

TEST_CASE("config") {
  const KeyValues kv = parse_key_values("# comment\nk = 3\nepochs=7\n\nsyn.frames=12\n");
  CHECK(kv.at("k") == "3");
  CHECK(kv.at("epochs") == "7");
  CHECK_THROWS_AS(parse_key_values("novalue\n"), ParseError);

  TrainConfig cfg = TrainConfig::desk();
  apply_config(cfg, kv);
  CHECK(cfg.model.field.k == 3);
  CHECK(cfg.epochs == 7);
  SyntheticSceneConfig sc;
  apply_config(sc, kv);
  CHECK(sc.frames == 12);

  CHECK_THROWS_AS(apply_config(cfg, parse_key_values("bogus=1")), ConfigError);
  CHECK_THROWS_AS(apply_config(cfg, parse_key_values("epochs=-2")), ConfigError);
  CHECK_THROWS_AS(apply_config(cfg, parse_key_values("head_mode=sometimes")), ConfigError);

  TrainConfig tuned = TrainConfig::desk();
  apply_config(tuned, parse_key_values("ratios=2,4\nchannels=8,16\nhead_mode=fixed\nparadigm=self_chain\n"
                                       "learning_rate=0.0025\nuse_mask=false\nsampling=random\ntemplates=3"));
  TrainConfig again;
  apply_config(again, parse_key_values(format_config(tuned)));
  CHECK(format_config(again) == format_config(tuned));
  CHECK(again.model.field.ratios == std::vector<std::size_t>{2, 4});
  CHECK(again.model.paradigm == Paradigm::kSelfChain);
  CHECK(again.learning_rate == 0.0025);
  CHECK_FALSE(again.loss.use_mask);
  CHECK(again.model.templates == 3);
}

TEST_CASE("ablation grids have the published shapes") {
  const TrainConfig base = TrainConfig::desk();
  CHECK(ablation_grid("table5", base).size() == 4);
  CHECK(ablation_grid("table6", base).size() == 5);
  CHECK(ablation_grid("table7", base).size() == 4);
  CHECK(ablation_grid("fig7", base).size() == 2);
  CHECK(ablation_grid("sampling", base).size() == 2);
  CHECK_THROWS_AS(ablation_grid("table9", base), ConfigError);
  for (const auto& cell : ablation_grid("table6", base)) CHECK_NOTHROW(cell.cfg.model.validate());

  const std::string csv = ablation_csv({AblationRow{"K=1", 50.0, 60.0, 1.5, true, ""},
                                        AblationRow{"K=2", 0, 0, 0.1, false, "boom"}});
  CHECK(csv.rfind("config,success,precision,wall_seconds,status,error\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  PilotRow row{"self_chain", {1, 2, 3, 4}, {10, 20, 30, 40}, {1, 2, 3, 4}};
  const std::string pcsv = pilot_csv({row});
  CHECK(pcsv.rfind("paradigm,K=1,K=2,K=3,K=4\n", 0) == 0);
}
