#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "heatlab/errors.hpp"

namespace heatlab::harness {

using nlohmann::json;

#ifndef HEATLAB_VERSION
#define HEATLAB_VERSION "0.0.0"
#endif

inline std::string artifact_version() { return HEATLAB_VERSION; }

// Shortest round-trip text for a double, so identical values give identical
// bytes.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Cell = std::variant<std::string, double, long long>;

inline std::string cell_text(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  return std::to_string(std::get<long long>(c));
}

// RFC 4180: fields holding commas, quotes or line breaks are quoted and inner
// quotes doubled.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != header.size()) throw UsageError("table row width does not match the header");
    rows.push_back(std::move(row));
  }
};

inline std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += csv_field(fields[i]);
    }
    out += "\r\n";
  };
  line(t.header);
  for (const auto& r : t.rows) {
    std::vector<std::string> f;
    for (const auto& c : r) f.push_back(cell_text(c));
    line(f);
  }
  return out;
}

struct PlotPoint {
  std::string series;
  double x = 0.0;
  double y = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ResultRecord {
  std::string experiment;
  std::string config_hash;
  std::string version = artifact_version();
  Table table;
  std::vector<PlotPoint> plot;
  json summary = json::object();
  std::vector<Check> checks;
  std::map<std::string, Table> extra;  // written as <experiment>_<name>.csv
  double wall_clock = 0.0;  // seconds; JSON only, never in the CSV

  bool passed() const {
    for (const auto& c : checks) {
      if (!c.passed) return false;
    }
    return true;
  }
};

// Long-format (x, y, series, ci_lo, ci_hi) rows for records of one family.
inline std::string emit_plot_data(const std::vector<ResultRecord>& records) {
  Table t{{"x", "y", "series", "ci_lo", "ci_hi"}, {}};
  for (const auto& r : records) {
    if (r.experiment != records.front().experiment) throw UsageError("emit_plot_data: records of mixed families");
    for (const auto& p : r.plot) t.add({p.x, p.y, p.series, p.ci_lo, p.ci_hi});
  }
  return to_csv(t);
}

inline json summary_json(const ResultRecord& r, const json& config) {
  json j;
  j["experiment"] = r.experiment;
  j["config_hash"] = r.config_hash;
  j["version"] = r.version;
  j["wall_clock_seconds"] = r.wall_clock;
  j["config"] = config;
  j["summary"] = r.summary;
  json checks = json::array();
  for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  j["checks"] = checks;
  j["passed"] = r.passed();
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ResourceError("cannot write " + p.string());
  f << text;
  if (!f) throw ResourceError("failed writing " + p.string());
}

// <dir>/<experiment>.csv, <experiment>_plot.csv and <experiment>.json
inline void write_record(const ResultRecord& r, const json& config, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ResourceError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_text(dir / (r.experiment + ".csv"), to_csv(r.table));
  write_text(dir / (r.experiment + "_plot.csv"), emit_plot_data({r}));
  for (const auto& [name, t] : r.extra) write_text(dir / (r.experiment + "_" + name + ".csv"), to_csv(t));
  write_text(dir / (r.experiment + ".json"), summary_json(r, config).dump(2) + "\n");
}

}  // namespace heatlab::harness
