// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Field dumps and reports. CSV layout: header row naming coordinates and
// components (a k-form component is "<name>_<indices>", e.g. w_12 for
// dx1^dx2), then one row per node in flat order with axis 1 fastest. All
// floats print with 17 significant digits, so a dump re-ingests bit-exactly
// and repeated runs are byte-identical.

#ifndef NLHODGE_IO_HPP
#define NLHODGE_IO_HPP

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nlhodge/core.hpp"
#include "nlhodge/forms.hpp"
#include "nlhodge/grid.hpp"

namespace nlhodge {

// ---------------------------------------------------------------------------
// Ordered key/value report document.
// ---------------------------------------------------------------------------

class ReportDoc {
 public:
  void set(const std::string& key, const std::string& value) {
    kv_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { kv_.emplace_back(key, fmt17(value)); }
  void set(const std::string& key, int value) {
    kv_.emplace_back(key, std::to_string(value));
  }
  void set(const std::string& key, std::size_t value) {
    kv_.emplace_back(key, std::to_string(value));
  }
  void set(const std::string& key, bool value) {
    kv_.emplace_back(key, value ? "true" : "false");
  }
  void set_list(const std::string& key, const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) s += ", ";
      s += fmt17(values[i]);
    }
    kv_.emplace_back(key, s);
  }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : kv_) {
      out += k;
      out += " = ";
      out += v;
      out += '\n';
    }
    return out;
  }

  void write_file(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw config_error("cannot open report file '" + path + "'");
    f << str();
  }

  /// Reads a value back (first match); empty if absent.
  std::string get(const std::string& key) const {
    for (const auto& [k, v] : kv_)
      if (k == key) return v;
    return {};
  }

 private:
  std::vector<std::pair<std::string, std::string>> kv_;
};

// ---------------------------------------------------------------------------
// CSV field dumps.
// ---------------------------------------------------------------------------

struct FieldColumn {
  std::string name;
  std::vector<double> values;
};

inline void append_form_columns(const DiscreteForm& w, const std::string& name,
                                std::vector<FieldColumn>& cols) {
  for (int c = 0; c < w.ncomp(); ++c) {
    const std::string label = FormBasis::label(w.basis().mask(c));
    cols.push_back({label.empty() ? name : name + "_" + label, w.comp(c)});
  }
}

inline void write_field_csv(const std::string& path, const Grid& g,
                            const std::vector<FieldColumn>& cols) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw config_error("cannot open output file '" + path + "'");
  for (int a = 0; a < g.dim(); ++a) f << (a ? ",x" : "x") << (a + 1);
  for (const auto& c : cols) f << ',' << c.name;
  f << '\n';
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point x = g.coord(i);
    for (int a = 0; a < g.dim(); ++a) {
      if (a) f << ',';
      f << fmt17(x[a]);
    }
    for (const auto& c : cols) f << ',' << fmt17(c.values[i]);
    f << '\n';
  }
}

struct FieldTable {
  Grid grid;
  std::vector<FieldColumn> columns;

  const FieldColumn* find(const std::string& name) const {
    for (const auto& c : columns)
      if (c.name == name) return &c;
    return nullptr;
  }

  /// Rebuilds the form named `name` (components name_<indices>, or a bare
  /// `name` column for a 0-form).
  DiscreteForm extract_form(const std::string& name) const {
    // collect component labels
    std::vector<std::pair<unsigned, const FieldColumn*>> comps;
    for (const auto& c : columns) {
      if (c.name == name) {
        comps.emplace_back(0u, &c);
        continue;
      }
      if (c.name.rfind(name + "_", 0) != 0) continue;
      const std::string label = c.name.substr(name.size() + 1);
      unsigned mask = 0;
      bool ok = !label.empty();
      int prev = 0;
      for (char ch : label) {
        const int axis = ch - '0';
        if (axis < 1 || axis > grid.dim() || axis <= prev) {
          ok = false;
          break;
        }
        prev = axis;
        mask |= 1u << (axis - 1);
      }
      if (ok) comps.emplace_back(mask, &c);
    }
    if (comps.empty())
      throw config_error("CSV has no components of a form named '" + name + "'");
    const int k = popcount4(comps.front().first);
    DiscreteForm w(grid, k);
    for (const auto& [mask, col] : comps) {
      if (popcount4(mask) != k)
        throw config_error("CSV components of '" + name + "' have mixed degrees");
      w.comp(w.basis().position(mask)) = col->values;
    }
    return w;
  }
};

/// Reads a dump written by write_field_csv, re-inferring the grid from the
/// coordinate columns (flat node order, axis 1 fastest).
inline FieldTable read_field_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw config_error("cannot open input file '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw config_error("empty CSV file '" + path + "'");
  std::vector<std::string> headers;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) headers.push_back(cell);
  }
  int n = 0;
  while (n < static_cast<int>(headers.size()) &&
         headers[static_cast<std::size_t>(n)] == "x" + std::to_string(n + 1))
    ++n;
  if (n < 2 || n > 4)
    throw config_error("CSV must start with coordinate columns x1..xn");

  std::vector<std::vector<double>> data(headers.size());
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col >= headers.size())
        throw config_error("CSV row has too many columns");
      data[col++].push_back(std::strtod(cell.c_str(), nullptr));
    }
    if (col != headers.size()) throw config_error("CSV row has too few columns");
  }
  const std::size_t rows = data[0].size();
  if (rows < 9) throw config_error("CSV has too few rows for a grid");

  // infer per-axis node counts from the coordinate cycling pattern
  std::vector<int> res(static_cast<std::size_t>(n));
  std::size_t stride = 1;
  for (int a = 0; a < n; ++a) {
    const auto& xs = data[static_cast<std::size_t>(a)];
    std::size_t count = 1;
    while (count * stride < rows && xs[count * stride] != xs[0]) ++count;
    res[static_cast<std::size_t>(a)] = static_cast<int>(count);
    stride *= count;
  }
  std::size_t total = 1;
  for (int r : res) total *= static_cast<std::size_t>(r);
  if (total != rows)
    throw config_error("CSV rows do not form a tensor-product grid");

  std::vector<Interval> bounds;
  for (int a = 0; a < n; ++a) {
    const auto& xs = data[static_cast<std::size_t>(a)];
    bounds.push_back({xs[0], xs[rows - 1]});
  }
  FieldTable table;
  table.grid = Grid(n, bounds, res);
  for (std::size_t c = static_cast<std::size_t>(n); c < headers.size(); ++c)
    table.columns.push_back({headers[c], std::move(data[c])});
  return table;
}

/// Reads a two-column (t, rho) table for density interpolation.
inline std::pair<std::vector<double>, std::vector<double>> read_density_table(
    const std::string& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot open density table '" + path + "'");
  std::vector<double> ts, rs;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw config_error("density table rows need two comma-separated columns");
    char* end = nullptr;
    const double t = std::strtod(a.c_str(), &end);
    if (end == a.c_str()) {
      if (first) {
        first = false;
        continue;  // header row
      }
      throw config_error("bad density table row: " + line);
    }
    ts.push_back(t);
    rs.push_back(std::strtod(b.c_str(), nullptr));
    first = false;
  }
  return {ts, rs};
}

}  // namespace nlhodge

#endif  // NLHODGE_IO_HPP
