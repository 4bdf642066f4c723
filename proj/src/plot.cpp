#include "driftless/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "driftless/errors.hpp"

namespace driftless {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

void header(std::ostringstream& svg, const std::string& title, const std::string& x_label,
            const std::string& y_label) {
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(title) << "</text>\n"
      << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
      << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kHeight / 2 << ")\">" << escape(y_label) << "</text>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
      << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
}

void y_ticks(std::ostringstream& svg, double lo, double hi) {
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const double y = kHeight - kBottom - (kHeight - kTop - kBottom) * i / 4.0;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
}

void save(const std::filesystem::path& path, const std::ostringstream& svg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out << svg.str() << "</svg>\n";
}

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
  double lo = INFINITY, hi = -INFINITY;
  std::size_t n = 0;
  for (const auto& s : series) {
    for (double v : s.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    n = std::max(n, s.y.size());
  }
  if (n == 0) {
    lo = 0;
    hi = 1;
  }
  if (!(hi > lo)) {
    hi = lo + 1.0;
  }
  std::ostringstream svg;
  header(svg, title, x_label, y_label);
  y_ticks(svg, lo, hi);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      const double x = kLeft + pw * (n > 1 ? static_cast<double>(i) / (n - 1) : 0.5);
      const double y = kHeight - kBottom - ph * (s.y[i] - lo) / (hi - lo);
      svg << num(x) << ',' << num(y) << ' ';
    }
    svg << "\"/>\n<text x=\"" << kWidth - kRight + 10 << "\" y=\"" << kTop + 18 * (k + 1)
        << "\" fill=\"" << color << "\">" << escape(s.label) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft << "\" y=\"" << kHeight - kBottom + 16 << "\">0</text>\n"
      << "<text x=\"" << kWidth - kRight << "\" y=\"" << kHeight - kBottom + 16
      << "\" text-anchor=\"end\">" << (n > 0 ? n - 1 : 0) << "</text>\n";
  save(path, svg);
}

void write_bar_chart(const std::filesystem::path& path, const std::string& title,
                     const std::string& y_label, const std::vector<std::string>& labels,
                     const std::vector<double>& values) {
  if (labels.size() != values.size()) {
    throw DimensionError("bar chart: one label per value");
  }
  double hi = 0.0;
  for (double v : values) {
    hi = std::max(hi, v);
  }
  if (!(hi > 0.0)) {
    hi = 1.0;
  }
  std::ostringstream svg;
  header(svg, title, "", y_label);
  y_ticks(svg, 0.0, hi);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double slot = values.empty() ? pw : pw / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = ph * std::max(0.0, values[i]) / hi;
    const double x = kLeft + slot * i + slot * 0.15;
    svg << "<rect x=\"" << num(x) << "\" y=\"" << num(kHeight - kBottom - h) << "\" width=\""
        << num(slot * 0.7) << "\" height=\"" << num(h) << "\" fill=\""
        << kPalette[i % std::size(kPalette)] << "\"/>\n"
        << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\" font-size=\"10\">" << escape(labels[i]) << "</text>\n"
        << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(kHeight - kBottom - h - 4)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << num(values[i]) << "</text>\n";
  }
  save(path, svg);
}

}  // namespace driftless
