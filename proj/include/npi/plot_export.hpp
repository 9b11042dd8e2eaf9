#pragma once

// CSV and SVG heatmap export for n×n connectivity matrices.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "npi/connectome.hpp"
#include "npi/ec_tensor.hpp"
#include "npi/error.hpp"

namespace npi {

/// Rows are targets, columns sources.
inline void export_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out.precision(10);
  out << "target\\source";
  for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << j;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << m(i, j);
    out << '\n';
  }
}

/// Reads a matrix written by export_matrix_csv.
inline Eigen::MatrixXd load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line.rfind("target\\source", 0) == 0, ErrorKind::io,
          path.string() + " is not a connectivity matrix CSV (missing target\\source header)");
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    std::vector<double> row;
    for (std::size_t k = 1; k < cells.size(); ++k)
      row.push_back(detail::parse_double(cells[k], path.string() + ":" + std::to_string(lineno)));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  require(n > 0, ErrorKind::shape_mismatch, path.string() + " holds no matrix rows");
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    require(static_cast<Eigen::Index>(rows[i].size()) == n, ErrorKind::shape_mismatch,
            path.string() + ": row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                " values, expected " + std::to_string(n));
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

inline void export_ec_slice_csv(const ECTensor& ec, std::size_t t_prime, const std::filesystem::path& path) {
  export_matrix_csv(ec.slice(t_prime), path);
}

/// Heatmap with off-diagonal values rescaled to [0, 1], linear white → navy
/// color map and a grey masked diagonal.
inline void export_heatmap_svg(const Eigen::MatrixXd& m, const std::filesystem::path& path, const std::string& title = {}) {
  require(m.rows() == m.cols() && m.rows() > 0, ErrorKind::shape_mismatch, "heatmap needs a non-empty square matrix");
  const Eigen::Index n = m.rows();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) {
        lo = std::min(lo, m(i, j));
        hi = std::max(hi, m(i, j));
      }
  const double span = (hi > lo) ? hi - lo : 1.0;
  const int cell = n > 30 ? 8 : 40, margin = 40;
  const int size = static_cast<int>(n) * cell;
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\"" << size + 2 * margin
      << "\">\n";
  if (!title.empty()) out << "  <text x=\"" << margin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  char color[16];
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) {
        std::snprintf(color, sizeof color, "#bdbdbd");
      } else {
        const double u = (hi > lo) ? (m(i, j) - lo) / span : 0.0;
        const auto mix = [u](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * u)); };
        std::snprintf(color, sizeof color, "#%02x%02x%02x", mix(255, 8), mix(255, 48), mix(255, 107));
      }
      out << "  <rect x=\"" << margin + j * cell << "\" y=\"" << margin + i * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"" << color << "\"/>\n";
    }
  out << "  <text x=\"" << margin << "\" y=\"" << size + margin + 20
      << "\" font-family=\"sans-serif\" font-size=\"11\">source (columns) / target (rows)</text>\n";
  out << "</svg>\n";
}

}  // namespace npi
