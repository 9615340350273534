#include "dag/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dag/errors.hpp"
#include "dag/strfmt.hpp"

namespace dag {

namespace {

constexpr double kWidth = 840.0, kHeight = 520.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 40.0, kBottom = 55.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt_tick(double v) {
  // short fixed form for axis labels
  std::ostringstream os;
  const double a = std::abs(v);
  if (v == 0.0) return "0";
  if (a >= 1e5 || a < 1e-3) {
    os.precision(2);
    os << std::scientific << v;
  } else {
    os.precision(4);
    os << v;
  }
  return os.str();
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label,
                              const std::vector<Series>& series,
                              const std::vector<std::string>& warnings) {
  if (series.empty()) throw ContractError("render_line_chart: no series");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const Series& s : series) {
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // axes
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
     << kLeft + plot_w << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";

  for (int k = 0; k <= 5; ++k) {
    const double fx = xmin + (xmax - xmin) * k / 5.0;
    const double fy = ymin + (ymax - ymin) * k / 5.0;
    os << "<line x1=\"" << format_double(sx(fx)) << "\" y1=\"" << kTop + plot_h
       << "\" x2=\"" << format_double(sx(fx)) << "\" y2=\"" << kTop + plot_h + 5
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << format_double(sx(fx)) << "\" y=\"" << kTop + plot_h + 20
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << fmt_tick(fx) << "</text>\n";
    os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << format_double(sy(fy)) << "\" x2=\""
       << kLeft << "\" y2=\"" << format_double(sy(fy)) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << format_double(sy(fy) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << fmt_tick(fy) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << x_label
     << "</text>\n";
  os << "<text x=\"18\" y=\"" << kTop + plot_h / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        "transform=\"rotate(-90 18 " << kTop + plot_h / 2 << ")\">" << y_label
     << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t p = 0; p < series[i].points.size(); ++p) {
      if (p) os << " ";
      os << format_double(sx(series[i].points[p].first)) << ","
         << format_double(sy(series[i].points[p].second));
    }
    os << "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(i);
    os << "<line x1=\"" << kLeft + plot_w - 150 << "\" y1=\"" << ly + 8 << "\" x2=\""
       << kLeft + plot_w - 130 << "\" y2=\"" << ly + 8 << "\" stroke=\"" << color
       << "\" stroke-width=\"3\"/>\n";
    os << "<text x=\"" << kLeft + plot_w - 125 << "\" y=\"" << ly + 12
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[i].label
       << "</text>\n";
  }
  for (std::size_t i = 0; i < warnings.size(); ++i) {
    os << "<text x=\"" << kLeft << "\" y=\"" << kTop + plot_h + 38 + 14.0 * i
       << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#b00\">warning: "
       << warnings[i] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace dag
