#include "icr/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "icr/errors.hpp"

namespace icr {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw InputError("not a number: '" + std::string(text) + "'");
  return v;
}

long parse_integer(std::string_view text) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw InputError("not an integer: '" + std::string(text) + "'");
  return v;
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw InputError("CSV has no column '" + std::string(name) + "'");
}

std::vector<double> CsvTable::numeric_column(std::string_view name) const {
  const auto c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(parse_number(r.at(c)));
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.close();
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw InputError(path + " is empty");
  t.header = split_line(line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size())
      throw InputError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void write_csv(const std::string& path, const CsvTable& table) {
  auto out = open_output(path);
  for (std::size_t i = 0; i < table.header.size(); ++i)
    out << (i ? "," : "") << table.header[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
  finish(out, path);
}

void write_samples_csv(const std::string& path, const Eigen::VectorXd& euclidean,
                       const Eigen::VectorXd& modeled, const Eigen::MatrixXd& values) {
  if (euclidean.size() != modeled.size() || values.rows() != modeled.size())
    throw InputError("sample columns have different lengths");
  auto out = open_output(path);
  out << "index,euclidean_coord,modeled_coord,value\n";
  for (Eigen::Index s = 0; s < values.cols(); ++s)
    for (Eigen::Index i = 0; i < values.rows(); ++i)
      out << i << ',' << format_number(euclidean(i)) << ','
          << format_number(modeled(i)) << ',' << format_number(values(i, s)) << '\n';
  finish(out, path);
}

void write_matrix_csv(const std::string& path, const Eigen::VectorXd& coords,
                      const Eigen::MatrixXd& values) {
  if (values.rows() != coords.size() || values.cols() != coords.size())
    throw InputError("matrix and coordinates disagree in size");
  auto out = open_output(path);
  out << "coord";
  for (Eigen::Index j = 0; j < coords.size(); ++j) out << ',' << format_number(coords(j));
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    out << format_number(coords(i));
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      out << ',' << format_number(values(i, j));
    out << '\n';
  }
  finish(out, path);
}

LabeledMatrix read_matrix_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto n = static_cast<Eigen::Index>(t.header.size()) - 1;
  if (n < 0 || t.header[0] != "coord")
    throw InputError(path + " lacks the coordinate header");
  if (static_cast<Eigen::Index>(t.rows.size()) != n)
    throw InputError(path + " is not square");
  LabeledMatrix m;
  m.coords.resize(n);
  m.values.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) m.coords(j) = parse_number(t.header[j + 1]);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (parse_number(t.rows[i][0]) != m.coords(i))
      throw InputError(path + ": row label differs from column label");
    for (Eigen::Index j = 0; j < n; ++j) m.values(i, j) = parse_number(t.rows[i][j + 1]);
  }
  return m;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_json(const std::string& path, const nlohmann::json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

}  // namespace icr
