#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "filterctl/core.hpp"
#include "filterctl/dynamics.hpp"
#include "filterctl/filters.hpp"
#include "filterctl/noisegen.hpp"
#include "filterctl/optimize.hpp"
#include "filterctl/pulses.hpp"
#include "filterctl/susceptibility.hpp"

namespace filterctl {

/// Raised when a file cannot be read, written or parsed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest round-trip representation, independent of locale and stream state.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_number(std::size_t v) { return std::to_string(v); }
inline std::string format_number(int v) { return std::to_string(v); }

inline double parse_number(std::string_view s, std::string_view what) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError(std::string(what) + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  template <class... Cells>
  void row(const Cells&... cells) {
    std::vector<std::string> r;
    (r.push_back(cell(cells)), ...);
    require(r.size() == header_.size(), "csv: row width does not match the header");
    rows_.push_back(std::move(r));
  }

  void row_values(const std::vector<std::string>& cells) {
    require(cells.size() == header_.size(), "csv: row width does not match the header");
    rows_.push_back(cells);
  }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

  std::size_t size() const { return rows_.size(); }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(std::size_t v) { return format_number(v); }
  static std::string cell(int v) { return format_number(v); }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& t) { write_text(path, t.str()); }

/// Header and numeric rows of a comma-separated file.
struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvData read_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  CsvData d;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (d.header.empty()) {
      d.header = split(line, ',');
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != d.header.size())
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(d.header.size()) + " columns");
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(parse_number(c, path.string()));
    d.rows.push_back(std::move(r));
  }
  if (d.header.empty()) throw IoError(path.string() + ": empty csv");
  return d;
}

// ---------------------------------------------------------------------------
// Pulses. Sample k holds on [t_k, t_k + dt) with t_k = k dt.

inline CsvTable pulse_table(const SampledWaveform& w) {
  CsvTable t({"t_ns", "value"});
  for (std::size_t k = 0; k < w.size(); ++k) t.row(static_cast<double>(k) * w.dt, w[k]);
  return t;
}

inline void write_pulse_csv(const std::filesystem::path& path, const SampledWaveform& w) {
  write_csv(path, pulse_table(w));
}

inline SampledWaveform read_pulse_csv(const std::filesystem::path& path) {
  const CsvData d = read_csv(path);
  if (d.header != std::vector<std::string>{"t_ns", "value"})
    throw IoError(path.string() + ": pulse csv needs header t_ns,value");
  if (d.rows.size() < 2) throw IoError(path.string() + ": pulse csv needs at least two samples");
  const double dt = d.rows[1][0] - d.rows[0][0];
  if (!(dt > 0.0)) throw IoError(path.string() + ": t_ns must increase");
  std::vector<double> v;
  for (std::size_t k = 0; k < d.rows.size(); ++k) {
    if (std::abs(d.rows[k][0] - d.rows[0][0] - static_cast<double>(k) * dt) > 1e-9 * std::max(1.0, static_cast<double>(k) * dt))
      throw IoError(path.string() + ": t_ns is not uniformly spaced at row " + std::to_string(k + 1));
    v.push_back(d.rows[k][1]);
  }
  return SampledWaveform(dt, std::move(v));
}

/// key = value lines; harmonics as "amplitude phase" pairs separated by ';'.
inline std::string ansatz_text(const PulseAnsatz& a) {
  std::string out;
  out += "T = " + format_number(a.duration) + "\n";
  out += "a0 = " + format_number(a.a0) + "\n";
  out += "envelope = " + to_string(a.envelope) + "\n";
  out += "harmonics = ";
  for (std::size_t j = 0; j < a.harmonics.size(); ++j) {
    if (j) out += "; ";
    out += format_number(a.harmonics[j].amplitude) + " " + format_number(a.harmonics[j].phase);
  }
  out += "\n";
  return out;
}

inline PulseAnsatz parse_ansatz(const std::string& text) {
  PulseAnsatz a;
  bool have_T = false, have_a0 = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw IoError("ansatz: expected 'key = value', got '" + line + "'");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
    };
    trim(key);
    trim(value);
    if (key == "T") {
      a.duration = parse_number(value, "ansatz T");
      have_T = true;
    } else if (key == "a0") {
      a.a0 = parse_number(value, "ansatz a0");
      have_a0 = true;
    } else if (key == "envelope") {
      a.envelope = envelope_from_string(value);
    } else if (key == "harmonics") {
      if (value.empty()) continue;
      for (std::string pair : split(value, ';')) {
        trim(pair);
        const std::size_t sp = pair.find(' ');
        if (sp == std::string::npos) throw IoError("ansatz: harmonic needs 'amplitude phase', got '" + pair + "'");
        a.harmonics.push_back({parse_number(pair.substr(0, sp), "ansatz amplitude"),
                               parse_number(pair.substr(sp + 1), "ansatz phase")});
      }
    } else {
      throw IoError("ansatz: unknown key '" + key + "'");
    }
  }
  if (!have_T || !have_a0) throw IoError("ansatz: T and a0 are required");
  a.validate();
  return a;
}

// ---------------------------------------------------------------------------
// Module tables.

inline CsvTable noise_table(const NoiseRealization& r) {
  CsvTable t({"t_ns", "beta"});
  for (std::size_t k = 0; k < r.size(); ++k) t.row(static_cast<double>(k) * r.dt, r.samples[k]);
  return t;
}

inline CsvTable filter_table(const FilterFunction& F) {
  std::vector<std::string> header = {"omega_rad_per_ns", "F_total"};
  for (std::size_t v = 0; v < F.channel.size(); ++v) header.push_back("F_ch" + std::to_string(v + 1));
  CsvTable t(header);
  for (std::size_t i = 0; i < F.grid.omega.size(); ++i) {
    std::vector<std::string> r = {format_number(F.grid.omega[i]), format_number(F.total[i])};
    for (const auto& ch : F.channel) r.push_back(format_number(ch[i]));
    t.row_values(r);
  }
  return t;
}

inline CsvTable sweep_table(const std::vector<FidelityStats>& sweep) {
  CsvTable t({"A", "mean_fidelity", "stderr", "n"});
  for (const FidelityStats& s : sweep) t.row(s.A, s.mean, s.std_error, s.count);
  return t;
}

inline CsvTable trace_table(const OptimizationTrace& tr) {
  CsvTable t({"iter", "cost", "grad_norm"});
  for (std::size_t i = 0; i < tr.cost.size(); ++i) t.row(i, tr.cost[i], tr.grad_norm[i]);
  return t;
}

inline CsvTable susceptibility_table(const std::vector<WidthRow>& rows) {
  CsvTable t({"pulse", "gamma", "C", "C_normalized", "residual"});
  for (const WidthRow& r : rows) t.row(r.fit.label, r.fit.gamma, r.fit.C, r.C_normalized, r.fit.residual_rms);
  return t;
}

}  // namespace filterctl
