#pragma once

// Structural connectivity matrices: construction, row normalization and CSV I/O.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "npi/error.hpp"

namespace npi {

/// Dense n×n connectivity. `at(i, j)` is the strength of the projection j → i.
struct SCMatrix {
  std::size_t n = 0;
  std::vector<double> m;  // row-major
  std::vector<std::string> labels;

  SCMatrix() = default;
  explicit SCMatrix(std::size_t nodes) : n(nodes), m(nodes * nodes, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return m[i * n + j]; }
  double at(std::size_t i, std::size_t j) const { return m[i * n + j]; }

  std::size_t nonzeros() const {
    std::size_t c = 0;
    for (double v : m) c += (v != 0.0);
    return c;
  }

  bool operator==(const SCMatrix&) const = default;
};

/// Throws a validation error unless the diagonal is zero and every entry is finite and ≥ 0.
inline void validate(const SCMatrix& sc) {
  require(sc.m.size() == sc.n * sc.n, ErrorKind::shape_mismatch,
          "connectivity buffer holds " + std::to_string(sc.m.size()) + " values, expected " +
              std::to_string(sc.n * sc.n));
  for (std::size_t i = 0; i < sc.n; ++i) {
    for (std::size_t j = 0; j < sc.n; ++j) {
      const double v = sc.at(i, j);
      if (std::isfinite(v) && v >= 0.0 && (i != j || v == 0.0)) continue;
      const std::string where = "connectivity entry (" + std::to_string(i) + "," + std::to_string(j) + ")";
      if (!std::isfinite(v)) fail(ErrorKind::validation, where + " is not finite");
      if (v < 0.0) fail(ErrorKind::validation, where + " is negative");
      fail(ErrorKind::validation, where + " lies on the diagonal and must be zero");
    }
  }
}

/// Divides each row by its off-diagonal sum. Rows without in-edges stay all-zero.
inline SCMatrix normalize(const SCMatrix& sc) {
  validate(sc);
  SCMatrix out = sc;
  for (std::size_t i = 0; i < sc.n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < sc.n; ++j)
      if (j != i) total += sc.at(i, j);
    if (total == 0.0) continue;
    for (std::size_t j = 0; j < sc.n; ++j) out.at(i, j) = (j == i) ? 0.0 : sc.at(i, j) / total;
  }
  return out;
}

/// Node 0 projects to nodes 1 and 2; nothing else is connected.
inline SCMatrix three_node_sc() {
  SCMatrix sc(3);
  sc.at(1, 0) = 1.0;
  sc.at(2, 0) = 1.0;
  return sc;
}

/// Erdős–Rényi style directed matrix with Uniform(0, 1] weights.
inline SCMatrix random_sc(std::size_t n, double density, std::uint64_t seed) {
  require(n >= 2, ErrorKind::invalid_argument, "random connectome needs n >= 2, got " + std::to_string(n));
  require(density > 0.0 && density <= 1.0, ErrorKind::invalid_argument,
          "density must lie in (0, 1], got " + std::to_string(density));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SCMatrix sc(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool edge = u(rng) < density;
      const double w = 1.0 - u(rng);
      if (edge) sc.at(i, j) = w;
    }
  }
  if (sc.nonzeros() == 0) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t i = pick(rng);
    const std::size_t j = (i + 1 + pick(rng) % (n - 1)) % n;
    sc.at(i, j) = 1.0 - u(rng);
  }
  return sc;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_double(const std::string& text, const std::string& context) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  require(ec == std::errc() && ptr == t.data() + t.size() && !t.empty(), ErrorKind::validation,
          context + ": '" + t + "' is not a number");
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Reads an n×n CSV. Lines starting with '#' are skipped, except that a line
/// "# labels: a,b,c" supplies region names.
inline SCMatrix load_sc(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open connectome file " + path.string());
  std::vector<std::vector<double>> rows;
  std::vector<std::string> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      constexpr std::string_view tag = "# labels:";
      if (t.rfind(tag, 0) == 0)
        for (auto& l : detail::split_csv(t.substr(tag.size()))) labels.push_back(detail::trim(l));
      continue;
    }
    std::vector<double> row;
    for (const auto& cell : detail::split_csv(t))
      row.push_back(detail::parse_double(cell, path.string() + ":" + std::to_string(lineno)));
    rows.push_back(std::move(row));
  }
  const std::size_t n = rows.size();
  require(n > 0, ErrorKind::shape_mismatch, "connectome file " + path.string() + " has no rows");
  SCMatrix sc(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(rows[i].size() == n, ErrorKind::shape_mismatch,
            "connectome must be square: row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                " columns, expected " + std::to_string(n));
    for (std::size_t j = 0; j < n; ++j) sc.at(i, j) = rows[i][j];
  }
  if (!labels.empty()) {
    require(labels.size() == n, ErrorKind::shape_mismatch, "label count does not match connectome size");
    sc.labels = std::move(labels);
  }
  validate(sc);
  return sc;
}

inline void save_sc(const SCMatrix& sc, const std::filesystem::path& path) {
  validate(sc);
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write connectome file " + path.string());
  out << "# connectome n=" << sc.n << " (row i, column j: weight of j -> i)\n";
  if (!sc.labels.empty()) {
    out << "# labels: ";
    for (std::size_t i = 0; i < sc.labels.size(); ++i) out << (i ? "," : "") << sc.labels[i];
    out << '\n';
  }
  for (std::size_t i = 0; i < sc.n; ++i) {
    for (std::size_t j = 0; j < sc.n; ++j) out << (j ? "," : "") << detail::format_double(sc.at(i, j));
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::io, "failed while writing " + path.string());
}

}  // namespace npi
