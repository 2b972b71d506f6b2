#ifndef COPSENS_IO_HPP
#define COPSENS_IO_HPP

#include <copsens/errors.hpp>
#include <copsens/model_core.hpp>

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace copsens {

/// Headered numeric table. Comma separated, '.' decimal, '#' lines skipped.
struct Table {
  std::vector<std::string> names;
  MatrixXd values;

  Index column_index(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (names[j] == name) return static_cast<Index>(j);
    }
    throw InputError("missing_column", "column '" + name + "' not found");
  }

  VectorXd column(const std::string& name) const { return values.col(column_index(name)); }

  /// Every column except `excluded`, in file order.
  Table without(const std::vector<std::string>& excluded) const {
    Table out;
    std::vector<Index> keep;
    for (std::size_t j = 0; j < names.size(); ++j) {
      bool drop = false;
      for (const auto& e : excluded) drop = drop || names[j] == e;
      if (!drop) {
        keep.push_back(static_cast<Index>(j));
        out.names.push_back(names[j]);
      }
    }
    out.values.resize(values.rows(), static_cast<Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) out.values.col(static_cast<Index>(c)) = values.col(keep[c]);
    return out;
  }
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("malformed_file", "cannot open '" + path + "'");
  Table t;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto cells = detail::split_commas(line);
    if (!have_header) {
      for (auto c : cells) t.names.emplace_back(detail::trim(c));
      have_header = true;
      continue;
    }
    if (cells.size() != t.names.size()) {
      throw InputError("malformed_file", path + ":" + std::to_string(line_no) + ": expected " +
                                             std::to_string(t.names.size()) + " fields, got " +
                                             std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto c : cells) {
      const std::string_view cell = detail::trim(c);
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw InputError("malformed_file", path + ":" + std::to_string(line_no) + ": non-numeric or non-finite value '" +
                                               std::string(cell) + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) throw InputError("malformed_file", path + ": missing header row");
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return t;
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << x;
  return os.str();
}

/// Writes `# ` prefixed provenance lines, a header and the rows.
inline void write_csv(const std::string& path, const std::vector<std::string>& names, const MatrixXd& values,
                      const std::vector<std::string>& provenance = {}, char sep = ',') {
  std::ofstream out(path);
  if (!out) throw InputError("malformed_file", "cannot write '" + path + "'");
  for (const auto& p : provenance) out << "# " << p << '\n';
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? std::string(1, sep) : "") << names[j];
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? std::string(1, sep) : "") << format_double(values(i, j));
    out << '\n';
  }
}

}  // namespace copsens

#endif  // COPSENS_IO_HPP
