#include "chronotopic/svg.hpp"

#include <algorithm>
#include <cmath>

#include "chronotopic/io.hpp"

namespace chronotopic {

namespace {

constexpr Real kWidth = 640, kHeight = 360;
constexpr Real kLeft = 56, kRight = 616, kTop = 20, kBottom = 318;

const char* kPalette[] = {"#1b6ca8", "#d1495b", "#2e933c", "#8c5383", "#e28413"};
constexpr int kPaletteSize = 5;

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Smallest 1/2/5 * 10^k value >= m, for a tidy y axis.
Real nice_ceil(Real m) {
  if (m <= 0) return 1;
  Real mag = std::pow(10.0, std::floor(std::log10(m)));
  for (Real f : {1.0, 2.0, 5.0, 10.0}) {
    if (f * mag >= m) return f * mag;
  }
  return 10 * mag;
}

std::string num(Real v) { return format_fixed(v, 2); }

std::string text(Real x, Real y, const std::string& anchor, const std::string& content) {
  return "  <text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" " +
         "font-size=\"11\" text-anchor=\"" + anchor + "\">" + xml_escape(content) + "</text>\n";
}

}  // namespace

std::string line_chart(const std::string& title, const std::vector<std::string>& x_labels,
                       const std::vector<ChartSeries>& series) {
  if (series.empty()) throw ParameterError("line_chart: no series");
  if (x_labels.empty()) throw ParameterError("line_chart: no x labels");
  Real vmax = 0;
  for (const ChartSeries& s : series) {
    if (s.values.size() != x_labels.size())
      throw ParameterError("line_chart: series '" + s.label + "' length does not match labels");
    for (Real v : s.values) {
      if (!std::isfinite(v) || v < 0)
        throw ParameterError("line_chart: values must be finite and non-negative");
      vmax = std::max(vmax, v);
    }
  }
  Real ymax = nice_ceil(vmax);
  std::size_t n = x_labels.size();

  auto x_of = [&](std::size_t i) {
    if (n == 1) return 0.5 * (kLeft + kRight);
    return kLeft + (kRight - kLeft) * static_cast<Real>(i) / static_cast<Real>(n - 1);
  };
  auto y_of = [&](Real v) { return kBottom - (kBottom - kTop) * (v / ymax); };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"360\" "
         "viewBox=\"0 0 640 360\">\n";
  out += "  <rect x=\"0\" y=\"0\" width=\"640\" height=\"360\" fill=\"white\"/>\n";
  out += text(0.5 * kWidth, 14, "middle", title);

  // Gridlines and y tick labels, five steps from 0 to ymax.
  for (int t = 0; t <= 4; ++t) {
    Real v = ymax * t / 4.0;
    Real y = y_of(v);
    out += "  <line x1=\"" + num(kLeft) + "\" y1=\"" + num(y) + "\" x2=\"" + num(kRight) +
           "\" y2=\"" + num(y) + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    out += text(kLeft - 6, y + 4, "end", format_fixed(v, ymax < 10 ? 1 : 0));
  }

  // Axes and captions.
  out += "  <line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) +
         "\" y2=\"" + num(kBottom) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out += "  <line x1=\"" + num(kLeft) + "\" y1=\"" + num(kBottom) + "\" x2=\"" + num(kRight) +
         "\" y2=\"" + num(kBottom) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out += text(0.5 * (kLeft + kRight), kHeight - 6, "middle", "time bin");
  out += "  <text x=\"14\" y=\"" + num(0.5 * (kTop + kBottom)) +
         "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 14 " +
         num(0.5 * (kTop + kBottom)) + ")\">frequency</text>\n";

  // X tick labels; thin out when there are many bins.
  std::size_t stride = n <= 16 ? 1 : (n + 15) / 16;
  for (std::size_t i = 0; i < n; i += stride)
    out += text(x_of(i), kBottom + 16, "middle", x_labels[i]);

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    std::string points;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) points += ' ';
      points += num(x_of(i)) + "," + num(y_of(series[s].values[i]));
    }
    out += "  <polyline fill=\"none\" stroke=\"";
    out += color;
    out += "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    // Legend entry, stacked top-right.
    Real ly = kTop + 8 + 14 * static_cast<Real>(s);
    out += "  <line x1=\"" + num(kRight - 46) + "\" y1=\"" + num(ly) + "\" x2=\"" +
           num(kRight - 30) + "\" y2=\"" + num(ly) + "\" stroke=\"";
    out += color;
    out += "\" stroke-width=\"1.5\"/>\n";
    out += text(kRight - 26, ly + 4, "start", series[s].label);
  }

  out += "</svg>\n";
  return out;
}

}  // namespace chronotopic
