#include <chrono>
#include <cstdio>

#include "m3sot/bench.hpp"
#include "m3sot/errors.hpp"

namespace m3sot {

const char* paradigm_name(Paradigm p) {
  switch (p) {
    case Paradigm::kManyToOne: return "many_to_one";
    case Paradigm::kSelfChain: return "self_chain";
    case Paradigm::kCrossChain: return "cross_chain";
  }
  return "?";
}

std::vector<AblationCell> ablation_grid(const std::string& table, const TrainConfig& base) {
  std::vector<AblationCell> cells;
  if (table == "table5") {
    for (std::size_t k = 1; k <= 4; ++k) {
      TrainConfig c = base;
      c.model.templates = k;
      cells.push_back({"K=" + std::to_string(k), c});
    }
  } else if (table == "table6") {
    const std::vector<std::vector<std::size_t>> sets{{1}, {2}, {2, 4}, {2, 4, 8}, {2, 4, 8, 16}};
    for (const auto& r : sets) {
      TrainConfig c = base;
      c.model.field.ratios = r;
      c.model.field.channels = FieldConfig::default_channels(r.size(), base.model.channels());
      std::string name = "ratios=";
      for (std::size_t i = 0; i < r.size(); ++i) name += (i ? "-" : "") + std::to_string(r[i]);
      cells.push_back({name, c});
    }
  } else if (table == "table7") {
    for (bool m : {false, true}) {
      for (bool ctr : {false, true}) {
        TrainConfig c = base;
        c.loss.use_mask = m;
        c.loss.use_center = ctr;
        cells.push_back({std::string("mask=") + (m ? "on" : "off") + ";center=" + (ctr ? "on" : "off"), c});
      }
    }
  } else if (table == "fig7") {
    for (HeadMode h : {HeadMode::kFixed, HeadMode::kVariable}) {
      TrainConfig c = base;
      c.model.head_mode = h;
      cells.push_back({std::string("heads=") + (h == HeadMode::kFixed ? "fixed" : "variable"), c});
    }
  } else if (table == "sampling") {
    for (SamplingMode s : {SamplingMode::kRandom, SamplingMode::kRange}) {
      TrainConfig c = base;
      c.model.field.sampling = s;
      cells.push_back({std::string("sampling=") + (s == SamplingMode::kRange ? "range" : "random"), c});
    }
  } else {
    throw ConfigError("unknown ablation table '" + table + "' (table5, table6, table7, fig7, sampling)");
  }
  return cells;
}

std::vector<AblationRow> ablation_runner(const std::vector<AblationCell>& cells, const std::vector<Tracklet>& train_set,
                                         const std::vector<Tracklet>& test_set, std::uint64_t seed) {
  std::vector<AblationRow> rows;
  for (const auto& cell : cells) {
    AblationRow row;
    row.name = cell.name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      TrainConfig cfg = cell.cfg;
      cfg.seed = seed;
      TrainResult r = train(cfg, train_set);
      const Network net(cfg.model);
      const OPEResult ope = run_ope(net, r.params, test_set, seed);
      row.success = ope.aggregate.success;
      row.precision = ope.aggregate.precision;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "config,success,precision,wall_seconds,status,error\n";
  char buf[512];
  for (const auto& r : rows) {
    std::string err = r.error;
    for (char& ch : err)
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.2f,%s,%s\n", r.name.c_str(), r.success, r.precision,
                  r.wall_seconds, r.ok ? "ok" : "failed", err.c_str());
    out += buf;
  }
  return out;
}

PilotRow pilot_paradigm(Paradigm mode, const std::vector<std::size_t>& ks, const TrainConfig& base,
                        const std::vector<Tracklet>& train_set, const std::vector<Tracklet>& test_set,
                        std::uint64_t seed) {
  PilotRow row;
  row.paradigm = paradigm_name(mode);
  for (std::size_t k : ks) {
    if (k < 1) throw ConfigError("pilot K must be >= 1");
    TrainConfig cfg = base;
    cfg.model.templates = k;
    cfg.model.paradigm = mode;
    cfg.seed = seed;
    TrainResult r = train(cfg, train_set);
    const Network net(cfg.model);
    const OPEResult ope = run_ope(net, r.params, test_set, seed);
    row.ks.push_back(k);
    row.precision.push_back(ope.aggregate.precision);
    row.success.push_back(ope.aggregate.success);
  }
  return row;
}

std::string pilot_csv(const std::vector<PilotRow>& rows) {
  if (rows.empty()) return "paradigm\n";
  std::string out = "paradigm";
  for (std::size_t k : rows.front().ks) out += ",K=" + std::to_string(k);
  out += "\n";
  char buf[64];
  for (const auto& r : rows) {
    out += r.paradigm;
    for (double p : r.precision) {
      std::snprintf(buf, sizeof buf, ",%.4f", p);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace m3sot
