#pragma once

#include <string>
#include <vector>

namespace povmap::svg {

struct Series {
  std::string name;
  std::vector<double> values;  // NaN values are drawn as gaps
};

// Grouped bars: one group per category, one bar per series.
std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                      const std::vector<Series>& series, const std::string& y_label);

// Cells coloured on [lo, hi]; each cell carries its value as text.
std::string heatmap(const std::string& title, const std::vector<std::string>& rows,
                    const std::vector<std::string>& cols, const std::vector<std::vector<double>>& values, double lo,
                    double hi);

// Polyline per series over x = 1..n.
std::string line_chart(const std::string& title, const std::vector<Series>& series, const std::string& x_label,
                       const std::string& y_label);

std::string escape(const std::string& s);

}  // namespace povmap::svg
