#pragma once

#include <string>
#include <vector>

namespace dag {

// Hand-rolled static SVG line charts: fixed float formatting and no
// dependencies, so identical inputs always render identical bytes.
struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label,
                              const std::vector<Series>& series,
                              const std::vector<std::string>& warnings);

}  // namespace dag
