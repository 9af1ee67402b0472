#include "tbal/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "tbal/errors.hpp"

namespace tbal {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_cell(const std::string& raw, const std::string& path, std::size_t line_no) {
  const std::string cell = trim(raw);
  double v = 0.0;
  const auto* begin = cell.data();
  const auto* end = cell.data() + cell.size();
  const auto res = std::from_chars(begin, end, v);
  if (cell.empty() || res.ec != std::errc() || res.ptr != end) {
    throw DataError(path + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
  }
  return v;
}

// Reads a numeric CSV with a header row; returns the header and the rows.
std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  std::vector<std::string> header = split_fields(line);
  for (auto& h : header) h = trim(h);

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) row[j] = parse_cell(fields[j], path, line_no);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");
  return {std::move(header), std::move(rows)};
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

}  // namespace

std::string format_number(double v, int significant_digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant_digits, v);
  return buf;
}

CovariateTable read_covariates_csv(const std::string& path) {
  auto [header, rows] = read_numeric_csv(path);
  const bool has_w = !header.empty() && header.back() == "w";
  const std::size_t d = header.size() - (has_w ? 1 : 0);
  if (d == 0) throw DataError(path + ": no covariate columns");
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "x" + std::to_string(j + 1)) {
      throw DataError(path + ": header column " + std::to_string(j + 1) + " should be x" + std::to_string(j + 1) +
                      ", found '" + header[j] + "'");
    }
  }
  CovariateTable t;
  const auto n = static_cast<Eigen::Index>(rows.size());
  t.x.resize(n, static_cast<Eigen::Index>(d));
  if (has_w) t.w = Vector(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < d; ++j) t.x(i, static_cast<Eigen::Index>(j)) = r[j];
    if (has_w) (*t.w)[i] = r[d];
  }
  return t;
}

void write_covariates_csv(const std::string& path, const Matrix& x, const std::optional<Vector>& w) {
  auto out = open_out(path);
  for (Eigen::Index j = 0; j < x.cols(); ++j) out << (j ? "," : "") << "x" << j + 1;
  if (w) out << ",w";
  out << '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) out << (j ? "," : "") << format_number(x(i, j), 17);
    if (w) out << ',' << format_number((*w)[i], 17);
    out << '\n';
  }
}

PotentialOutcomes read_outcomes_csv(const std::string& path) {
  auto [header, rows] = read_numeric_csv(path);
  if (header.size() != 2 || header[0] != "y0" || header[1] != "y1") {
    throw DataError(path + ": outcome header must be y0,y1");
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  PotentialOutcomes po{Vector(n), Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    po.y0[i] = rows[static_cast<std::size_t>(i)][0];
    po.y1[i] = rows[static_cast<std::size_t>(i)][1];
  }
  return po;
}

void write_outcomes_csv(const std::string& path, const PotentialOutcomes& po) {
  auto out = open_out(path);
  out << "y0,y1\n";
  for (Eigen::Index i = 0; i < po.y0.size(); ++i) {
    out << format_number(po.y0[i], 17) << ',' << format_number(po.y1[i], 17) << '\n';
  }
}

}  // namespace tbal
