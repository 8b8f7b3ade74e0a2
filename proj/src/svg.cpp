#include "povmap/svg.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace povmap::svg {

namespace {

constexpr const char* kPalette[] = {"#3b6ea8", "#d08c2b", "#5a9e5a", "#b04a4a", "#7d5ba6", "#8c8c8c", "#2a9d9a"};

std::string header(int w, int h, const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{3}</text>\n",
      w, h, w / 2, escape(title));
}

std::string colour(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

// Axis range that includes zero and every finite value.
std::pair<double, double> value_range(const std::vector<Series>& series) {
  double lo = 0.0, hi = 0.0;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  return {lo, hi};
}

}  // namespace

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                      const std::vector<Series>& series, const std::string& y_label) {
  const int left = 70, right = 20, top = 40, bottom = 70;
  const int group_w = std::max(60, 18 * static_cast<int>(series.size()) + 20);
  const int w = left + right + group_w * static_cast<int>(std::max<std::size_t>(1, categories.size()));
  const int h = 360;
  const int plot_h = h - top - bottom;
  const auto [lo, hi] = value_range(series);
  const auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

  std::string out = header(w, h, title);
  out += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", left, top, left, top + plot_h);
  out += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"black\"/>\n", left, y_of(0.0),
                     w - right, y_of(0.0));
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    out += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", left - 6, y_of(v) + 4, v);
  }
  out += fmt::format("<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{}</text>\n",
                     top + plot_h / 2, top + plot_h / 2, escape(y_label));
  const int bar_w = std::max(6, (group_w - 20) / static_cast<int>(std::max<std::size_t>(1, series.size())));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const int gx = left + group_w * static_cast<int>(c) + 10;
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (c >= series[s].values.size() || !std::isfinite(series[s].values[c])) continue;
      const double v = series[s].values[c];
      const double y0 = y_of(std::max(v, 0.0)), y1 = y_of(std::min(v, 0.0));
      out += fmt::format("<rect x=\"{}\" y=\"{:.1f}\" width=\"{}\" height=\"{:.1f}\" fill=\"{}\"><title>{}: {:.4f}</title></rect>\n",
                         gx + bar_w * static_cast<int>(s), y0, bar_w - 2, std::max(0.5, y1 - y0), colour(s),
                         escape(series[s].name), v);
    }
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", gx + (group_w - 20) / 2,
                       top + plot_h + 18, escape(categories[c]));
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const int lx = left + 130 * static_cast<int>(s);
    out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", lx, h - 28, colour(s));
    out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", lx + 16, h - 18, escape(series[s].name));
  }
  out += "</svg>\n";
  return out;
}

std::string heatmap(const std::string& title, const std::vector<std::string>& rows,
                    const std::vector<std::string>& cols, const std::vector<std::vector<double>>& values, double lo,
                    double hi) {
  const int cell = 80, left = 110, top = 70;
  const int w = left + cell * static_cast<int>(cols.size()) + 20;
  const int h = top + cell * static_cast<int>(rows.size()) + 30;
  std::string out = header(w, h, title);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + cell * static_cast<int>(c) + cell / 2,
                       top - 10, escape(cols[c]));
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int y = top + cell * static_cast<int>(r);
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", left - 8, y + cell / 2 + 4, escape(rows[r]));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double v = r < values.size() && c < values[r].size() ? values[r][c] : std::nan("");
      std::string fill = "#dddddd";
      if (std::isfinite(v)) {
        const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
        fill = fmt::format("rgb({},{},{})", static_cast<int>(255 - 200 * t), static_cast<int>(255 - 120 * t),
                           static_cast<int>(255 - 40 * t));
      }
      const int x = left + cell * static_cast<int>(c);
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" stroke=\"white\"/>\n", x, y, cell,
                         cell, fill);
      out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x + cell / 2, y + cell / 2 + 4,
                         std::isfinite(v) ? fmt::format("{:.3f}", v) : std::string("n/a"));
    }
  }
  out += "</svg>\n";
  return out;
}

std::string line_chart(const std::string& title, const std::vector<Series>& series, const std::string& x_label,
                       const std::string& y_label) {
  const int w = 560, h = 360, left = 70, right = 20, top = 40, bottom = 70;
  const int plot_w = w - left - right, plot_h = h - top - bottom;
  std::size_t n = 1;
  for (const auto& s : series) n = std::max(n, s.values.size());
  const auto [lo, hi] = value_range(series);
  const auto x_of = [&](std::size_t i) { return left + (n > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0); };
  const auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
  std::string out = header(w, h, title);
  out += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", left, top, left, top + plot_h);
  out += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", left, top + plot_h, w - right,
                     top + plot_h);
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    out += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", left - 6, y_of(v) + 4, v);
  }
  out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + plot_w / 2, top + plot_h + 30,
                     escape(x_label));
  out += fmt::format("<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{}</text>\n",
                     top + plot_h / 2, top + plot_h / 2, escape(y_label));
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::string pts;
    for (std::size_t i = 0; i < series[s].values.size(); ++i) {
      if (!std::isfinite(series[s].values[i])) continue;
      pts += fmt::format("{:.1f},{:.1f} ", x_of(i), y_of(series[s].values[i]));
    }
    out += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", pts, colour(s));
    const int lx = left + 130 * static_cast<int>(s);
    out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", lx, h - 28, colour(s));
    out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", lx + 16, h - 18, escape(series[s].name));
  }
  out += "</svg>\n";
  return out;
}

}  // namespace povmap::svg
