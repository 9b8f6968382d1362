#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sorbkit/common.hpp"

// Data model, CSV ingestion and validation for heterogeneous sorption
// measurements across three lithologies.
//
// Canonical units: bar, kelvin, mmol/g, m^2/g, cm^3/g, nm. Source units are
// declared with a bracket suffix in the CSV header (e.g. "temperature[C]")
// and default to canonical when absent.

namespace sorbkit::domain {

enum class Lithology { Clay, Shale, Coal };

inline const char* lithology_name(Lithology l) {
  switch (l) {
    case Lithology::Clay: return "clay";
    case Lithology::Shale: return "shale";
    case Lithology::Coal: return "coal";
  }
  return "?";
}

inline Lithology parse_lithology(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "clay") return Lithology::Clay;
  if (s == "shale") return Lithology::Shale;
  if (s == "coal") return Lithology::Coal;
  throw invalid_input("unknown lithology label: " + s);
}

struct SorptionRecord {
  std::string sample_id;
  Lithology lithology = Lithology::Clay;
  double pressure = 0.0;     // bar
  double temperature = 0.0;  // K
  double uptake = 0.0;       // mmol/g
  std::optional<double> ssa;            // m^2/g
  std::optional<double> pore_volume;    // cm^3/g
  std::optional<double> pore_diameter;  // nm
  std::map<std::string, std::optional<double>> extra;
  bool valid_uptake = false;  // 0 < uptake < 50 mmol/g
};

// Validity filter is a pure function of uptake alone.
inline bool uptake_valid(double q) { return q > 0.0 && q < 50.0; }

struct RejectedRow {
  std::size_t row_index = 0;  // 1-based data row index
  std::string reason;
};

struct Dataset {
  std::vector<SorptionRecord> records;
  std::map<std::string, std::string> column_map;  // source -> canonical
  std::string provenance;
  std::vector<RejectedRow> rejects;

  std::map<Lithology, std::size_t> counts_by_lithology() const {
    std::map<Lithology, std::size_t> c;
    for (const auto& r : records) c[r.lithology]++;
    return c;
  }
};

struct QualityReport {
  std::map<std::string, double> completeness;  // per column, fraction in [0,1]
  std::vector<bool> outlier_flags;             // per record
  std::size_t n_records = 0;
  std::map<std::string, std::size_t> n_samples;  // distinct sample ids per lithology
  double flagged_fraction = 0.0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// "temperature[C]" -> {"temperature", "C"}
inline std::pair<std::string, std::string> split_unit(const std::string& header) {
  auto lb = header.find('[');
  if (lb == std::string::npos || header.back() != ']') return {trim(header), ""};
  return {trim(header.substr(0, lb)), trim(header.substr(lb + 1, header.size() - lb - 2))};
}

// Built-in alias table for common source column spellings.
inline std::string canonical_alias(const std::string& name) {
  static const std::map<std::string, std::string> aliases = {
      {"sample_id", "sample_id"}, {"id", "sample_id"},     {"sample", "sample_id"},
      {"lithology", "lithology"}, {"rock_type", "lithology"}, {"material", "lithology"},
      {"pressure", "pressure"},   {"p", "pressure"},
      {"temperature", "temperature"}, {"temp", "temperature"}, {"t", "temperature"},
      {"temperature_c", "temperature"},
      {"uptake", "uptake"},       {"q", "uptake"},         {"h2_uptake", "uptake"},
      {"ssa", "ssa"},             {"surface_area", "ssa"}, {"specific_surface_area", "ssa"},
      {"pore_volume", "pore_volume"}, {"v_pore", "pore_volume"},
      {"pore_diameter", "pore_diameter"}, {"d_pore", "pore_diameter"},
  };
  auto it = aliases.find(lower(name));
  return it == aliases.end() ? "" : it->second;
}

inline double convert_temperature(double v, const std::string& unit) {
  if (unit.empty() || unit == "K") return v;
  if (unit == "C") return v + 273.15;
  throw invalid_input("unknown temperature unit: " + unit);
}

inline double convert_pressure(double v, const std::string& unit) {
  if (unit.empty() || unit == "bar") return v;
  if (unit == "Pa") return v / 1e5;
  if (unit == "kPa") return v / 100.0;
  if (unit == "MPa") return v * 10.0;
  throw invalid_input("unknown pressure unit: " + unit);
}

inline std::optional<double> parse_number(const std::string& cell) {
  std::string t = trim(cell);
  if (t.empty() || lower(t) == "nan" || lower(t) == "na") return std::nullopt;
  std::size_t pos = 0;
  double v = std::stod(t, &pos);
  if (pos != t.size()) throw invalid_input("unparseable numeric cell: " + t);
  return v;
}

}  // namespace detail

// Loads a CSV with a header row. column_map maps source column names to
// canonical field names; the built-in alias table fills any gaps. Rows
// failing hard invariants are quarantined into Dataset::rejects.
inline Dataset load_csv(const std::string& path,
                        const std::map<std::string, std::string>& column_map = {}) {
  std::ifstream in(path);
  if (!in) throw invalid_input("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw invalid_input("load_csv: empty file " + path);
  auto headers = detail::split_csv_line(line);

  struct Column {
    std::string canonical;  // empty -> extra
    std::string source_name;
    std::string unit;
  };
  std::vector<Column> cols;
  for (const auto& h : headers) {
    auto [bare, unit] = detail::split_unit(h);
    std::string canon;
    if (auto it = column_map.find(bare); it != column_map.end())
      canon = it->second;
    else
      canon = detail::canonical_alias(bare);
    cols.push_back({canon, bare, unit});
  }

  auto col_index = [&](const std::string& canon) -> int {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i].canonical == canon) return static_cast<int>(i);
    return -1;
  };
  for (const char* req : {"sample_id", "lithology", "pressure", "temperature", "uptake"})
    if (col_index(req) < 0)
      throw invalid_input(std::string("load_csv: missing mandatory column ") + req);

  Dataset ds;
  ds.provenance = path;
  for (const auto& c : cols)
    if (!c.canonical.empty()) ds.column_map[c.source_name] = c.canonical;

  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != cols.size()) {
      ds.rejects.push_back({row, "cell count mismatch"});
      continue;
    }
    try {
      SorptionRecord rec;
      for (std::size_t i = 0; i < cols.size(); ++i) {
        const auto& c = cols[i];
        const std::string& cell = cells[i];
        if (c.canonical == "sample_id") {
          rec.sample_id = detail::trim(cell);
        } else if (c.canonical == "lithology") {
          rec.lithology = parse_lithology(detail::trim(cell));
        } else if (c.canonical == "pressure") {
          auto v = detail::parse_number(cell);
          if (!v) throw invalid_input("missing pressure");
          rec.pressure = detail::convert_pressure(*v, c.unit);
        } else if (c.canonical == "temperature") {
          auto v = detail::parse_number(cell);
          if (!v) throw invalid_input("missing temperature");
          rec.temperature = detail::convert_temperature(*v, c.unit);
        } else if (c.canonical == "uptake") {
          auto v = detail::parse_number(cell);
          if (!v) throw invalid_input("missing uptake");
          rec.uptake = *v;  // mmol/g == mol/kg
        } else if (c.canonical == "ssa") {
          rec.ssa = detail::parse_number(cell);
        } else if (c.canonical == "pore_volume") {
          rec.pore_volume = detail::parse_number(cell);
        } else if (c.canonical == "pore_diameter") {
          rec.pore_diameter = detail::parse_number(cell);
        } else {
          rec.extra[c.source_name] = detail::parse_number(cell);
        }
      }
      if (rec.sample_id.empty()) throw invalid_input("empty sample_id");
      if (rec.pressure < 0) throw invalid_input("negative pressure");
      if (rec.temperature <= 0) throw invalid_input("non-positive temperature");
      if (rec.ssa && *rec.ssa <= 0) throw invalid_input("non-positive ssa");
      if (rec.pore_volume && *rec.pore_volume <= 0) throw invalid_input("non-positive pore_volume");
      if (rec.pore_diameter && *rec.pore_diameter <= 0)
        throw invalid_input("non-positive pore_diameter");
      rec.valid_uptake = uptake_valid(rec.uptake);
      ds.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      ds.rejects.push_back({row, e.what()});
    }
  }
  return ds;
}

// Canonical-unit CSV writer; 12 significant digits for round-trip fidelity.
inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw invalid_input("save_csv: cannot open " + path);
  std::vector<std::string> extra_cols;
  for (const auto& r : ds.records)
    for (const auto& [k, v] : r.extra)
      if (std::find(extra_cols.begin(), extra_cols.end(), k) == extra_cols.end())
        extra_cols.push_back(k);
  std::sort(extra_cols.begin(), extra_cols.end());

  out << "sample_id,lithology,pressure[bar],temperature[K],uptake[mmol/g],ssa[m2/g],"
         "pore_volume[cm3/g],pore_diameter[nm]";
  for (const auto& c : extra_cols) out << "," << c;
  out << "\n";

  auto fmt = [](std::optional<double> v) {
    if (!v) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", *v);
    return std::string(buf);
  };
  for (const auto& r : ds.records) {
    out << r.sample_id << "," << lithology_name(r.lithology) << "," << fmt(r.pressure) << ","
        << fmt(r.temperature) << "," << fmt(r.uptake) << "," << fmt(r.ssa) << ","
        << fmt(r.pore_volume) << "," << fmt(r.pore_diameter);
    for (const auto& c : extra_cols) {
      out << ",";
      auto it = r.extra.find(c);
      if (it != r.extra.end()) out << fmt(it->second);
    }
    out << "\n";
  }
}

}  // namespace sorbkit::domain
