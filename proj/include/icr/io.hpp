#ifndef ICR_IO_HPP
#define ICR_IO_HPP

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace icr {

/// Shortest decimal form that parses back to the same double.
std::string format_number(double v);
double parse_number(std::string_view text);
long parse_integer(std::string_view text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
  std::vector<double> numeric_column(std::string_view name) const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

/// One row per (sample, pixel), samples stacked in order. `values` holds one
/// sample per column.
void write_samples_csv(const std::string& path, const Eigen::VectorXd& euclidean,
                       const Eigen::VectorXd& modeled, const Eigen::MatrixXd& values);

/// Square matrix with the coordinates as header row and leading column.
struct LabeledMatrix {
  Eigen::VectorXd coords;
  Eigen::MatrixXd values;
};

void write_matrix_csv(const std::string& path, const Eigen::VectorXd& coords,
                      const Eigen::MatrixXd& values);
LabeledMatrix read_matrix_csv(const std::string& path);

nlohmann::json read_json(const std::string& path);
void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace icr

#endif  // ICR_IO_HPP
