#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace driftless {

struct Series {
  std::string label;
  std::vector<double> y;  // x is the index
};

/// Self-contained SVG line chart.
void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

/// Self-contained SVG bar chart, one bar per label.
void write_bar_chart(const std::filesystem::path& path, const std::string& title,
                     const std::string& y_label, const std::vector<std::string>& labels,
                     const std::vector<double>& values);

}  // namespace driftless
