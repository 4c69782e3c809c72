#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "m3sot/bench.hpp"
#include "m3sot/errors.hpp"

namespace m3sot {

namespace {

using nlohmann::json;

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected [x,y,z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Frame frame_from(const json& j) {
  Frame f;
  for (const auto& p : j.at("points")) f.cloud.points.push_back(vec3_from(p));
  const json& b = j.at("box");
  f.box.center = vec3_from(b.at("center"));
  const Vec3 s = vec3_from(b.at("size"));
  f.box.size = {s.x, s.y, s.z};
  f.box.yaw = b.at("yaw").get<double>();
  return f;
}

json frame_to(const Frame& f) {
  json pts = json::array();
  for (const auto& p : f.cloud.points) pts.push_back({p.x, p.y, p.z});
  const Box3D& b = f.box;
  return json{{"points", std::move(pts)},
              {"box",
               {{"center", {b.center.x, b.center.y, b.center.z}},
                {"size", {b.size.w, b.size.l, b.size.h}},
                {"yaw", b.yaw}}}};
}

}  // namespace

std::string tracklet_to_jsonl(const Tracklet& t) {
  std::string out = json{{"id", t.id}, {"category", t.category}}.dump() + "\n";
  for (const auto& f : t.frames) out += frame_to(f).dump() + "\n";
  return out;
}

Tracklet tracklet_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Tracklet t;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (!header) {
        t.id = j.at("id").get<std::string>();
        t.category = j.at("category").get<std::string>();
        header = true;
      } else {
        t.frames.push_back(frame_from(j));
      }
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (t.frames.size() > 1 && !(t.frames.back().box.size == t.frames.front().box.size)) {
      throw ValidationError("line " + std::to_string(lineno) + ": box size differs from the first frame");
    }
  }
  if (!header) throw ParseError("empty tracklet file");
  t.validate();
  return t;
}

void save_tracklet(const Tracklet& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << tracklet_to_jsonl(t);
}

Tracklet load_tracklet(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return tracklet_from_jsonl(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<Tracklet> load_tracklet_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Tracklet> out;
  for (const auto& f : files) out.push_back(load_tracklet(f));
  return out;
}

void save_tracklet_dir(const std::vector<Tracklet>& ts, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.jsonl", i);
    save_tracklet(ts[i], dir / name);
  }
}

}  // namespace m3sot
