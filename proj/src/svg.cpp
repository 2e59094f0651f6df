#include "bitlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "bitlab/textfmt.hpp"

namespace bitlab::svg {

namespace {

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

Range axis_range(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

// Round tick positions at a 1/2/5 decade step.
std::vector<double> ticks(const Range& range) {
  const double span = range.hi - range.lo;
  const double raw = span / 6.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double mult : {1.0, 2.0, 5.0, 10.0}) {
    if (mag * mult >= raw) {
      step = mag * mult;
      break;
    }
  }
  std::vector<double> out;
  double t = std::ceil(range.lo / step) * step;
  for (; t <= range.hi + 1e-12 * span; t += step) {
    out.push_back(std::fabs(t) < step * 1e-9 ? 0.0 : t);
  }
  return out;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt_coord(double v) {
  // Fixed two decimals keeps files small; pixel space needs no more.
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string Chart::render() const {
  const double margin_left = 64.0;
  const double margin_right = 16.0;
  const double margin_top = title.empty() ? 16.0 : 40.0;
  const double margin_bottom = 48.0;
  const double plot_w = width - margin_left - margin_right;
  const double plot_h = height - margin_top - margin_bottom;

  double min_x = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();
  for (const Series& s : series) {
    for (const auto& [x, y] : s.points) {
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
    }
  }
  if (!std::isfinite(min_x)) {
    min_x = 0.0;
    max_x = 1.0;
    min_y = 0.0;
    max_y = 1.0;
  }
  const Range rx = axis_range(min_x, max_x);
  const Range ry = axis_range(min_y, max_y);
  const auto px = [&](double x) { return margin_left + (x - rx.lo) / (rx.hi - rx.lo) * plot_w; };
  const auto py = [&](double y) { return margin_top + (ry.hi - y) / (ry.hi - ry.lo) * plot_h; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
         " " + std::to_string(height) + "\">\n";

  out += "<!-- data\n";
  for (const Series& s : series) {
    out += "series: " + s.label + "\n";
    for (const auto& [x, y] : s.points) {
      out += fmt_double(x) + "," + fmt_double(y) + "\n";
    }
  }
  out += "-->\n";

  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) {
    out += "<text x=\"" + fmt_coord(width / 2.0) +
           "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
           escape(title) + "</text>\n";
  }

  // Axes and ticks.
  out += "<g stroke=\"#333\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out += "<line x1=\"" + fmt_coord(margin_left) + "\" y1=\"" + fmt_coord(margin_top) +
         "\" x2=\"" + fmt_coord(margin_left) + "\" y2=\"" + fmt_coord(margin_top + plot_h) +
         "\"/>\n";
  out += "<line x1=\"" + fmt_coord(margin_left) + "\" y1=\"" + fmt_coord(margin_top + plot_h) +
         "\" x2=\"" + fmt_coord(margin_left + plot_w) + "\" y2=\"" +
         fmt_coord(margin_top + plot_h) + "\"/>\n";
  for (double t : ticks(rx)) {
    const double x = px(t);
    out += "<line x1=\"" + fmt_coord(x) + "\" y1=\"" + fmt_coord(margin_top + plot_h) +
           "\" x2=\"" + fmt_coord(x) + "\" y2=\"" + fmt_coord(margin_top + plot_h + 4) + "\"/>\n";
    out += "<text x=\"" + fmt_coord(x) + "\" y=\"" + fmt_coord(margin_top + plot_h + 16) +
           "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#333\">" + fmt_double(t) +
           "</text>\n";
  }
  for (double t : ticks(ry)) {
    const double y = py(t);
    out += "<line x1=\"" + fmt_coord(margin_left - 4) + "\" y1=\"" + fmt_coord(y) + "\" x2=\"" +
           fmt_coord(margin_left) + "\" y2=\"" + fmt_coord(y) + "\"/>\n";
    out += "<text x=\"" + fmt_coord(margin_left - 8) + "\" y=\"" + fmt_coord(y + 4) +
           "\" text-anchor=\"end\" stroke=\"none\" fill=\"#333\">" + fmt_double(t) + "</text>\n";
  }
  out += "</g>\n";

  if (!x_label.empty()) {
    out += "<text x=\"" + fmt_coord(margin_left + plot_w / 2.0) + "\" y=\"" +
           fmt_coord(static_cast<double>(height) - 8.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           escape(x_label) + "</text>\n";
  }
  if (!y_label.empty()) {
    out += "<text x=\"14\" y=\"" + fmt_coord(margin_top + plot_h / 2.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 14 " +
           fmt_coord(margin_top + plot_h / 2.0) + ")\">" + escape(y_label) + "</text>\n";
  }

  for (const Series& s : series) {
    if (s.line && s.points.size() >= 2) {
      out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"";
      if (s.dashed) out += " stroke-dasharray=\"6 4\"";
      out += " points=\"";
      for (const auto& [x, y] : s.points) {
        out += fmt_coord(px(x)) + "," + fmt_coord(py(y)) + " ";
      }
      out += "\"/>\n";
    }
    if (s.markers) {
      for (const auto& [x, y] : s.points) {
        out += "<circle cx=\"" + fmt_coord(px(x)) + "\" cy=\"" + fmt_coord(py(y)) +
               "\" r=\"3\" fill=\"" + s.color + "\"/>\n";
      }
    }
  }

  // Legend.
  double ly = margin_top + 8.0;
  for (const Series& s : series) {
    if (s.label.empty()) continue;
    const double lx = margin_left + plot_w - 150.0;
    out += "<line x1=\"" + fmt_coord(lx) + "\" y1=\"" + fmt_coord(ly) + "\" x2=\"" +
           fmt_coord(lx + 22) + "\" y2=\"" + fmt_coord(ly) + "\" stroke=\"" + s.color +
           "\" stroke-width=\"2\"" + (s.dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
    out += "<text x=\"" + fmt_coord(lx + 28) + "\" y=\"" + fmt_coord(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(s.label) + "</text>\n";
    ly += 16.0;
  }

  out += "</svg>\n";
  return out;
}

void Chart::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("svg: cannot open " + path.string());
  out << render();
}

}  // namespace bitlab::svg
