#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "loadrec/errors.hpp"
#include "loadrec/model.hpp"
#include "loadrec/synth.hpp"

namespace loadrec {

// Bundle layout revision. Bump when the on-disk schema changes; readers
// refuse other versions outright instead of guessing.
inline constexpr int kBundleFormatVersion = 1;

// Shortest decimal string that round-trips the exact double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace detail {

inline double parse_double(std::string_view cell, const std::string& file, int row,
                           int col) {
  double out = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc{} || res.ptr != last)
    throw ParseError(file + " row " + std::to_string(row) + " col " +
                     std::to_string(col) + ": cannot parse '" + std::string(cell) +
                     "' as a number");
  return out;
}

inline long parse_int(std::string_view cell, const std::string& file, int row,
                      int col) {
  long out = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
    throw ParseError(file + " row " + std::to_string(row) + " col " +
                     std::to_string(col) + ": cannot parse '" + std::string(cell) +
                     "' as an integer");
  return out;
}

// Split one CSV line on commas. Cells in these formats never contain commas
// or quotes, so no quoting dialect is needed.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.emplace_back(line.substr(start));
      break;
    }
    cells.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

// Split text into lines, tolerating CRLF and a trailing newline.
inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    std::string_view line = text.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    if (pos == text.size()) break;
    start = pos + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace detail

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::string out((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return out;
}

// Full-file replace with no partially written state: write a sibling temp
// file, then rename over the target.
inline void write_text_atomic(const std::filesystem::path& path,
                              std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failure on " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

// Matrix CSV: header row carries the window start followed by "+<minute>"
// offsets; each data row is a node id followed by that node's values.
inline std::string serialize_load_csv(const LoadMatrix& lm) {
  const int N = lm.nodes();
  const int T = lm.horizon();
  std::string out = lm.start_time.empty() ? std::string("time") : lm.start_time;
  for (int t = 0; t < T; ++t)
    out += ",+" + std::to_string(static_cast<long>(t) * lm.slot_minutes);
  out += '\n';
  for (int n = 0; n < N; ++n) {
    out += lm.node_ids.empty() ? "n" + std::to_string(n) : lm.node_ids[n];
    for (int t = 0; t < T; ++t) {
      out += ',';
      out += format_double(lm.values(n, t));
    }
    out += '\n';
  }
  return out;
}

inline LoadMatrix parse_load_csv(std::string_view text, const std::string& file) {
  const auto lines = detail::split_lines(text);
  if (lines.empty() || (lines.size() == 1 && lines[0].empty()))
    throw ParseError(file + ": empty file");
  const auto header = detail::split_csv(lines[0]);
  if (header.size() < 2)
    throw ParseError(file + " row 1: header needs a label column and at least one slot");
  const int T = static_cast<int>(header.size()) - 1;
  if (lines.size() < 2) throw ParseError(file + ": no data rows after the header");
  LoadMatrix lm;
  lm.start_time = header[0];
  // Recover the slot width from the "+<minute>" offsets when present; any
  // other labeling is accepted and treated as one-minute slots.
  lm.slot_minutes = 1;
  if (T >= 2 && header[1].size() > 1 && header[1][0] == '+' &&
      header[2].size() > 1 && header[2][0] == '+') {
    long a = 0, b = 0;
    const auto ra = std::from_chars(header[1].data() + 1,
                                    header[1].data() + header[1].size(), a);
    const auto rb = std::from_chars(header[2].data() + 1,
                                    header[2].data() + header[2].size(), b);
    if (ra.ec == std::errc{} && rb.ec == std::errc{} && b > a)
      lm.slot_minutes = static_cast<int>(b - a);
  }
  const int N = static_cast<int>(lines.size()) - 1;
  lm.values.resize(N, T);
  lm.node_ids.reserve(N);
  for (int n = 0; n < N; ++n) {
    const int row = n + 2;  // 1-based, counting the header
    const auto cells = detail::split_csv(lines[n + 1]);
    if (static_cast<int>(cells.size()) != T + 1)
      throw ParseError(file + " row " + std::to_string(row) + ": expected " +
                       std::to_string(T + 1) + " cells, found " +
                       std::to_string(cells.size()));
    lm.node_ids.push_back(cells[0]);
    for (int t = 0; t < T; ++t)
      lm.values(n, t) = detail::parse_double(cells[t + 1], file, row, t + 2);
  }
  return lm;
}

inline void write_load_csv(const std::filesystem::path& path, const LoadMatrix& lm) {
  write_text_atomic(path, serialize_load_csv(lm));
}

inline LoadMatrix read_load_csv(const std::filesystem::path& path) {
  return parse_load_csv(read_text(path), path.filename().string());
}

// Single-series CSV: minute offset and value per row.
inline std::string serialize_series_csv(std::string_view name, const Vector& v) {
  std::string out = "minute," + std::string(name) + "\n";
  for (Eigen::Index t = 0; t < v.size(); ++t)
    out += std::to_string(t) + "," + format_double(v(t)) + "\n";
  return out;
}

inline Vector parse_series_csv(std::string_view text, const std::string& file) {
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw ParseError(file + ": empty file");
  Vector v(static_cast<Eigen::Index>(lines.size()) - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = detail::split_csv(lines[i]);
    if (cells.size() != 2)
      throw ParseError(file + " row " + std::to_string(i + 1) +
                       ": expected 2 cells, found " + std::to_string(cells.size()));
    v(static_cast<Eigen::Index>(i) - 1) =
        detail::parse_double(cells[1], file, static_cast<int>(i + 1), 2);
  }
  return v;
}

inline std::string serialize_events_csv(const EventSet& events) {
  std::string out = "house,minute,magnitude_kw,direction,kind\n";
  for (const Event& e : events) {
    out += std::to_string(e.house) + "," + std::to_string(e.minute) + "," +
           format_double(e.magnitude) + "," +
           (e.direction > 0 ? "start" : "stop") + "," + event_kind_name(e.kind) +
           "\n";
  }
  return out;
}

inline EventSet parse_events_csv(std::string_view text, const std::string& file) {
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw ParseError(file + ": empty file");
  EventSet events;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const int row = static_cast<int>(i) + 1;
    const auto cells = detail::split_csv(lines[i]);
    if (cells.size() != 5)
      throw ParseError(file + " row " + std::to_string(row) +
                       ": expected 5 cells, found " + std::to_string(cells.size()));
    Event e;
    e.house = static_cast<int>(detail::parse_int(cells[0], file, row, 1));
    e.minute = static_cast<int>(detail::parse_int(cells[1], file, row, 2));
    e.magnitude = detail::parse_double(cells[2], file, row, 3);
    if (cells[3] == "start")
      e.direction = +1;
    else if (cells[3] == "stop")
      e.direction = -1;
    else
      throw ParseError(file + " row " + std::to_string(row) +
                       ": direction must be 'start' or 'stop', got '" + cells[3] +
                       "'");
    try {
      e.kind = event_kind_from_name(cells[4]);
    } catch (const ValidationError&) {
      throw ParseError(file + " row " + std::to_string(row) +
                       ": unknown event kind '" + cells[4] + "'");
    }
    events.push_back(e);
  }
  return events;
}

inline nlohmann::json spec_to_json(const ScenarioSpec& spec) {
  nlohmann::json j;
  j["n_houses"] = spec.n_houses;
  j["n_pv"] = spec.n_pv;
  j["n_ev"] = spec.n_ev;
  j["horizon_T"] = spec.horizon_T;
  j["base_load_kw"] = {spec.base_load_kw.first, spec.base_load_kw.second};
  j["pv_peak_kw"] = {spec.pv_peak_kw.first, spec.pv_peak_kw.second};
  j["ev_power_kw"] = {spec.ev_power_kw.first, spec.ev_power_kw.second};
  j["ev_duration_min"] = {spec.ev_duration_min.first, spec.ev_duration_min.second};
  j["hvac_power_kw"] = {spec.hvac_power_kw.first, spec.hvac_power_kw.second};
  j["hvac_period_min"] = {spec.hvac_period_min.first, spec.hvac_period_min.second};
  j["hvac_duty"] = spec.hvac_duty;
  j["hvac_enabled"] = spec.hvac_enabled;
  j["seed"] = spec.seed;
  return j;
}

inline ScenarioSpec spec_from_json(const nlohmann::json& j) {
  ScenarioSpec spec;
  spec.n_houses = j.at("n_houses").get<int>();
  spec.n_pv = j.at("n_pv").get<int>();
  spec.n_ev = j.at("n_ev").get<int>();
  spec.horizon_T = j.at("horizon_T").get<int>();
  auto pair_d = [&](const char* key) {
    const auto& a = j.at(key);
    return std::pair<double, double>{a.at(0).get<double>(), a.at(1).get<double>()};
  };
  auto pair_i = [&](const char* key) {
    const auto& a = j.at(key);
    return std::pair<int, int>{a.at(0).get<int>(), a.at(1).get<int>()};
  };
  spec.base_load_kw = pair_d("base_load_kw");
  spec.pv_peak_kw = pair_d("pv_peak_kw");
  spec.ev_power_kw = pair_d("ev_power_kw");
  spec.ev_duration_min = pair_i("ev_duration_min");
  spec.hvac_power_kw = pair_d("hvac_power_kw");
  spec.hvac_period_min = pair_i("hvac_period_min");
  spec.hvac_duty = j.at("hvac_duty").get<double>();
  spec.hvac_enabled = j.at("hvac_enabled").get<bool>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

struct ScenarioBundle {
  ScenarioSpec spec;
  std::string case_name;  // winter-day | winter-night | summer-day | random
  GroundTruth gt;
};

// Writes the bundle directory. Data files land first; spec.json goes last
// and carries their checksums, so a bundle with a valid spec.json is known
// complete and unmodified.
inline void write_scenario(const std::filesystem::path& dir,
                           const ScenarioBundle& bundle) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string());
  std::map<std::string, std::string> files;
  files["P.csv"] = serialize_load_csv(bundle.gt.P);
  LoadMatrix aux;
  aux.node_ids = bundle.gt.P.node_ids;
  aux.start_time = bundle.gt.P.start_time;
  aux.slot_minutes = bundle.gt.P.slot_minutes;
  aux.values = bundle.gt.L_true;
  files["L_true.csv"] = serialize_load_csv(aux);
  aux.values = bundle.gt.S_true;
  files["S_true.csv"] = serialize_load_csv(aux);
  files["events.csv"] = serialize_events_csv(bundle.gt.events);
  files["pv_profile.csv"] = serialize_series_csv("irradiance", bundle.gt.pv_profile);
  nlohmann::json meta;
  meta["format_version"] = kBundleFormatVersion;
  meta["case"] = bundle.case_name;
  meta["spec"] = spec_to_json(bundle.spec);
  nlohmann::json sums;
  for (const auto& [name, content] : files) {
    sums[name] = detail::hex64(detail::fnv1a64(content));
    write_text_atomic(dir / name, content);
  }
  meta["checksums"] = sums;
  write_text_atomic(dir / "spec.json", meta.dump(2) + "\n");
}

inline ScenarioBundle read_scenario(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path meta_path = dir / "spec.json";
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_path.string() + ": " + e.what());
  }
  int version = -1;
  try {
    version = meta.value("format_version", -1);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_path.string() + ": " + e.what());
  }
  if (version != kBundleFormatVersion)
    throw IoError(meta_path.string() + ": bundle format version " +
                  std::to_string(version) + " is unsupported; this build reads version " +
                  std::to_string(kBundleFormatVersion));
  std::map<std::string, std::string> files;
  try {
    for (const auto& [name, sum] : meta.at("checksums").items()) {
      std::string content = read_text(dir / name);
      const std::string actual = detail::hex64(detail::fnv1a64(content));
      if (actual != sum.get<std::string>())
        throw IoError(name + ": checksum mismatch (expected " +
                      sum.get<std::string>() + ", file hashes to " + actual +
                      "); the bundle is corrupt or was edited");
      files[name] = std::move(content);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_path.string() + ": " + e.what());
  }
  for (const char* required :
       {"P.csv", "L_true.csv", "S_true.csv", "events.csv", "pv_profile.csv"}) {
    if (!files.count(required))
      throw IoError(meta_path.string() + ": bundle is missing " +
                    std::string(required));
  }
  ScenarioBundle bundle;
  try {
    bundle.spec = spec_from_json(meta.at("spec"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta_path.string() + ": " + e.what());
  }
  bundle.spec.validate();
  bundle.case_name = meta.value("case", "");
  bundle.gt.P = parse_load_csv(files["P.csv"], "P.csv");
  bundle.gt.L_true = parse_load_csv(files["L_true.csv"], "L_true.csv").values;
  bundle.gt.S_true = parse_load_csv(files["S_true.csv"], "S_true.csv").values;
  bundle.gt.events = parse_events_csv(files["events.csv"], "events.csv");
  bundle.gt.pv_profile = parse_series_csv(files["pv_profile.csv"], "pv_profile.csv");
  if (bundle.gt.P.values.rows() != bundle.gt.L_true.rows() ||
      bundle.gt.P.values.cols() != bundle.gt.L_true.cols() ||
      bundle.gt.P.values.rows() != bundle.gt.S_true.rows() ||
      bundle.gt.P.values.cols() != bundle.gt.S_true.cols())
    throw IoError(dir.string() + ": matrix shapes disagree across the bundle");
  if (bundle.gt.P.values != bundle.gt.L_true + bundle.gt.S_true)
    throw IoError(dir.string() + ": P does not equal L_true + S_true exactly");
  return bundle;
}

}  // namespace loadrec
