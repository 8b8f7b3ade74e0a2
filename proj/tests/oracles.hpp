#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. None of them call into the library under test.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

constexpr double kPi = std::numbers::pi;
constexpr double kR = 6371008.8;

// Great-circle distance from the chord between unit vectors.
inline double chord_distance(double lon1, double lat1, double lon2, double lat2) {
  const auto unit = [](double lon, double lat) {
    const double l = lon * kPi / 180.0, p = lat * kPi / 180.0;
    return std::array<double, 3>{std::cos(p) * std::cos(l), std::cos(p) * std::sin(l), std::sin(p)};
  };
  const auto a = unit(lon1, lat1), b = unit(lon2, lat2);
  const std::array<double, 3> c{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  const double cross = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
  const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return kR * std::atan2(cross, dot);
}

// Inverse mercator via the Gudermannian, 2 atan(e^y) - pi/2.
inline double gudermannian_lat(double y_frac) {
  const double y = kPi * (1.0 - 2.0 * y_frac);
  return (2.0 * std::atan(std::exp(y)) - kPi / 2.0) * 180.0 / kPi;
}

// Spherical-excess area of a small simple polygon (fan triangulation, l'Huilier).
inline double spherical_area(const std::vector<std::array<double, 2>>& v) {
  double total = 0.0;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    const double a = chord_distance(v[i][0], v[i][1], v[i + 1][0], v[i + 1][1]) / kR;
    const double b = chord_distance(v[0][0], v[0][1], v[i + 1][0], v[i + 1][1]) / kR;
    const double c = chord_distance(v[0][0], v[0][1], v[i][0], v[i][1]) / kR;
    const double s = (a + b + c) / 2.0;
    const double t = std::tan(s / 2) * std::tan((s - a) / 2) * std::tan((s - b) / 2) * std::tan((s - c) / 2);
    const double e = 4.0 * std::atan(std::sqrt(std::max(0.0, t)));
    const double cr = (v[i][0] - v[0][0]) * (v[i + 1][1] - v[0][1]) - (v[i][1] - v[0][1]) * (v[i + 1][0] - v[0][0]);
    total += (cr >= 0 ? 1.0 : -1.0) * e;
  }
  return std::abs(total) * kR * kR;
}

// Mean of raster cells hit by `samples` uniform points in the box.
template <typename Rng, typename CellValue>
double monte_carlo_mean(Rng& rng, double lon0, double lat0, double lon1, double lat1, int samples, CellValue cell) {
  std::uniform_real_distribution<double> ulon(lon0, lon1), ulat(lat0, lat1);
  double sum = 0.0;
  for (int s = 0; s < samples; ++s) sum += cell(ulon(rng), ulat(rng));
  return sum / samples;
}

// ---- losses ----

using Rows = std::vector<std::vector<double>>;

inline double contrastive(const Rows& img, const Rows& poi, double tau) {
  const std::size_t b = img.size();
  const auto unit = [](const std::vector<double>& x) {
    double n = 0.0;
    for (double v : x) n += v * v;
    n = std::sqrt(n);
    std::vector<double> u(x);
    for (double& v : u) v /= n;
    return u;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto ui = unit(img[i]);
    std::vector<double> s(b);
    for (std::size_t j = 0; j < b; ++j) {
      const auto vj = unit(poi[j]);
      double dot = 0.0;
      for (std::size_t k = 0; k < ui.size(); ++k) dot += ui[k] * vj[k];
      s[j] = dot / tau;
    }
    // log-sum-exp written without a max shift; inputs stay small in the tests
    double z = 0.0;
    for (double e : s) z += std::exp(e);
    total += std::log(z) - s[i];
  }
  return total / static_cast<double>(b);
}

inline double bce(const Rows& logits, const Rows& labels) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    for (std::size_t k = 0; k < logits[i].size(); ++k) {
      const double sig = 1.0 / (1.0 + std::exp(-logits[i][k]));
      const double y = labels[i][k];
      total += -(y * std::log(sig) + (1.0 - y) * std::log(1.0 - sig));
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

// Central differences of f at x along every coordinate.
inline std::vector<double> central_fd(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double vector_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

// ---- backdoor ----

// Non-causal mask (1 = non-causal): the ceil(q n) smallest scores, ties by index.
inline std::vector<int> bottom_quantile_mask(const std::vector<double>& scores, double q) {
  const std::size_t n = scores.size();
  const auto quota = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-12));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // selection by repeated minimum scan
  std::vector<int> mask(n, 0);
  for (std::size_t k = 0; k < quota; ++k) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) continue;
      if (best == n || scores[i] < scores[best]) best = i;
    }
    mask[best] = 1;
  }
  return mask;
}

// Explicit neighbour enumeration over an HWC image with a g x g patch grid.
inline std::vector<double> backdoor_adjust(const std::vector<double>& img, int image_px, int g,
                                           const std::vector<int>& noncausal) {
  const int ps = image_px / g;
  const auto at = [&](int pr, int pc, int y, int x, int ch) {
    return img[((static_cast<std::size_t>(pr) * ps + y) * image_px + pc * ps + x) * 3 + ch];
  };
  std::vector<double> out = img;
  const int offsets[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};
  bool any_causal = false;
  for (int i = 0; i < g * g; ++i) any_causal = any_causal || !noncausal[i];
  if (!any_causal) return out;
  for (int pr = 0; pr < g; ++pr) {
    for (int pc = 0; pc < g; ++pc) {
      if (!noncausal[pr * g + pc]) continue;
      std::vector<std::pair<int, int>> src;
      for (const auto& o : offsets) {
        const int r = pr + o[0], c = pc + o[1];
        if (r < 0 || c < 0 || r >= g || c >= g) continue;
        if (!noncausal[r * g + c]) src.emplace_back(r, c);
      }
      if (src.empty()) {
        for (int r = 0; r < g; ++r)
          for (int c = 0; c < g; ++c)
            if (!noncausal[r * g + c]) src.emplace_back(r, c);
      }
      for (int y = 0; y < ps; ++y) {
        for (int x = 0; x < ps; ++x) {
          for (int ch = 0; ch < 3; ++ch) {
            double s = 0.0;
            for (const auto& [r, c] : src) s += at(r, c, y, x, ch);
            out[((static_cast<std::size_t>(pr) * ps + y) * image_px + pc * ps + x) * 3 + ch] =
                s / static_cast<double>(src.size());
          }
        }
      }
    }
  }
  return out;
}

// ---- metrics, in 50-digit arithmetic ----

using HP = boost::multiprecision::cpp_bin_float_50;

inline HP hp_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  HP mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  HP sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const HP a = HP(x[i]) - mx, b = HP(y[i]) - my;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  return sxy / sqrt(sxx * syy);
}

// Rank of x[i] = (#smaller) + (#equal + 1) / 2.
inline std::vector<double> brute_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : x) {
      if (v < x[i]) ++less;
      if (v == x[i]) ++equal;
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

inline HP hp_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return hp_pearson(brute_ranks(x), brute_ranks(y));
}

inline HP hp_r2(const std::vector<double>& t, const std::vector<double>& p) {
  HP m = 0;
  for (double v : t) m += v;
  m /= t.size();
  HP res = 0, tot = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    res += (HP(t[i]) - HP(p[i])) * (HP(t[i]) - HP(p[i]));
    tot += (HP(t[i]) - m) * (HP(t[i]) - m);
  }
  return 1 - res / tot;
}

struct HPTTest {
  HP t, p;
};

inline HPTTest hp_paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  HP m = 0;
  for (std::size_t i = 0; i < n; ++i) m += HP(a[i]) - HP(b[i]);
  m /= n;
  HP ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const HP d = HP(a[i]) - HP(b[i]) - m;
    ss += d * d;
  }
  const HP sd = sqrt(ss / (n - 1));
  const HP t = m / (sd / sqrt(HP(n)));
  const HP df = n - 1;
  const HP p = boost::math::ibeta(df / 2, HP(0.5), df / (df + t * t));
  return {t, p};
}

}  // namespace oracle
