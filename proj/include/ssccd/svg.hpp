#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

// Minimal static SVG plots. Output depends only on the inputs, so reruns
// produce identical files.
namespace ssccd::svg {

std::string heatmap(const Eigen::MatrixXd& values, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels, const std::string& title);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string line_chart(const std::vector<Series>& series, const std::string& x_label,
                       const std::string& y_label, const std::string& title);

void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace ssccd::svg
