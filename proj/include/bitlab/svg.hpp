#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace bitlab::svg {

// One plotted series: scatter markers, a polyline, or both.
struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
  std::string color = "#1f77b4";
  bool line = true;
  bool markers = false;
  bool dashed = false;
};

// Self-contained SVG chart: axes, ticks, legend, and the plotted data
// embedded as a comment table, so no external tooling is needed to read the
// numbers back.
struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  int width = 720;
  int height = 480;

  std::string render() const;
  void write(const std::filesystem::path& path) const;
};

}  // namespace bitlab::svg
