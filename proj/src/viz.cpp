#include "mcdban/viz.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mcdban/error.hpp"
#include "mcdban/format.hpp"
#include "mcdban/rng.hpp"

namespace mcdban {

std::size_t HistogramSpec::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

HistogramSpec histogram_data(std::span<const double> samples, std::size_t bins) {
  if (bins < 1) throw ValidationError("histogram: bins must be >= 1");
  HistogramSpec h;
  h.bins = bins;
  h.counts.assign(bins, 0);
  for (double s : samples) {
    if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("histogram: sample " + fmt_num(s) + " outside [0, 1]");
    auto b = static_cast<std::size_t>(s * static_cast<double>(bins));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

std::string histogram_csv(const HistogramSpec& hist) {
  std::string out = "bin_lo,bin_hi,count\n";
  const double w = 1.0 / static_cast<double>(hist.bins);
  for (std::size_t b = 0; b < hist.bins; ++b) {
    out += fmt_num(static_cast<double>(b) * w) + "," + fmt_num(static_cast<double>(b + 1) * w) + "," +
           std::to_string(hist.counts[b]) + "\n";
  }
  return out;
}

namespace {

// y = X^T (X v) / n
std::vector<double> covariance_apply(const Matrix& X, std::span<const double> v) {
  std::vector<double> xv(X.rows(), 0.0);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto row = X.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < X.cols(); ++c) s += row[c] * v[c];
    xv[r] = s;
  }
  std::vector<double> out(X.cols(), 0.0);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto row = X.row(r);
    for (std::size_t c = 0; c < X.cols(); ++c) out[c] += row[c] * xv[r];
  }
  for (auto& o : out) o /= static_cast<double>(X.rows());
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Axis {
  std::vector<double> vector;
  double eigenvalue = 0.0;
};

Axis leading_axis(const Matrix& X, const std::vector<Axis>& found, Rng& rng, const EmbedOptions& opt) {
  const std::size_t d = X.cols();
  auto deflate = [&](std::vector<double>& v) {
    for (const auto& a : found) {
      const double p = dot(v, a.vector);
      for (std::size_t i = 0; i < d; ++i) v[i] -= p * a.vector[i];
    }
  };
  auto normalize = [](std::vector<double>& v) {
    const double n = std::sqrt(dot(v, v));
    if (n < 1e-300) return false;
    for (auto& x : v) x /= n;
    return true;
  };
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  deflate(v);
  if (!normalize(v)) return {std::vector<double>(d, 0.0), 0.0};

  // total variance bounds every eigenvalue; a residual below this is rounding
  double total = 0.0;
  for (double x : X.values()) total += x * x;
  total /= static_cast<double>(X.rows());
  const double negligible = 1e-12 * total;

  double lambda = 0.0;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    std::vector<double> w = covariance_apply(X, v);
    deflate(w);
    lambda = dot(w, v);
    if (std::sqrt(dot(w, w)) <= negligible || !normalize(w)) {
      lambda = 0.0;
      break;
    }
    double change = 0.0;
    for (std::size_t i = 0; i < d; ++i) change = std::max(change, std::abs(w[i] - v[i]));
    v = std::move(w);
    if (change < opt.tolerance) break;
  }
  deflate(v);
  if (!normalize(v)) return {std::vector<double>(d, 0.0), 0.0};
  std::size_t arg = 0;
  for (std::size_t i = 1; i < d; ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (v[arg] < 0.0) {
    for (auto& x : v) x = -x;
  }
  return {std::move(v), std::max(lambda, 0.0)};
}

}  // namespace

EmbeddingLayout embed_distributions(const DistributionSet& set, const EmbedOptions& options) {
  const std::size_t n = set.size();
  if (n < 3) throw ValidationError("embed: at least 3 instances are required");
  const std::size_t T = set.T();
  for (const auto& d : set.items) {
    if (d.T() != T) throw ValidationError("embed: instances differ in T");
  }
  Matrix X(n, T);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s = set.items[i].samples;
    std::sort(s.begin(), s.end());
    std::copy(s.begin(), s.end(), X.row(i).begin());
  }
  for (std::size_t c = 0; c < T; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < n; ++r) m += X(r, c);
    m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) X(r, c) -= m;
  }

  Rng rng(derive_seed(options.seed, 0xe3b));
  std::vector<Axis> axes;
  axes.push_back(leading_axis(X, axes, rng, options));
  axes.push_back(leading_axis(X, axes, rng, options));

  EmbeddingLayout layout;
  layout.variance_x = axes[0].eigenvalue;
  layout.variance_y = axes[1].eigenvalue;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = set.items[i];
    EmbeddingPoint p;
    p.id = d.id;
    p.x = dot(X.row(i), axes[0].vector);
    p.y = dot(X.row(i), axes[1].vector);
    p.mean = d.mean;
    p.certain = !(d.variance > options.variance_threshold);
    if (d.label) p.correct = (d.mean >= options.decision_threshold ? 1 : 0) == *d.label;
    layout.points.push_back(p);
  }
  return layout;
}

std::string layout_csv(const EmbeddingLayout& layout) {
  std::string out = "id,x,y,mean,correct,certain\n";
  for (const auto& p : layout.points) {
    out += std::to_string(p.id) + "," + fmt_num(p.x) + "," + fmt_num(p.y) + "," + fmt_num(p.mean) + ",";
    if (p.correct) out += *p.correct ? "1" : "0";
    out += p.certain ? ",1\n" : ",0\n";
  }
  return out;
}

double DensityGrid::integral() const {
  return std::accumulate(values.begin(), values.end(), 0.0) * cell_width() * cell_height();
}

DensityGrid density_grid(const EmbeddingLayout& layout, std::optional<double> bandwidth, std::size_t resolution) {
  const auto& pts = layout.points;
  if (pts.size() < 2) throw ValidationError("density_grid: at least 2 points are required");
  if (resolution < 2) throw ValidationError("density_grid: resolution must be >= 2");
  if (bandwidth && !(*bandwidth > 0.0 && std::isfinite(*bandwidth))) {
    throw ValidationError("density_grid: bandwidth must be > 0");
  }
  double xmin = pts[0].x, xmax = pts[0].x, ymin = pts[0].y, ymax = pts[0].y;
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw NumericalError("density_grid: non-finite coordinate");
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
    mx += p.x;
    my += p.y;
  }
  if (xmin == xmax && ymin == ymax) throw ValidationError("density_grid: all points are identical");
  const double n = static_cast<double>(pts.size());
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (const auto& p : pts) {
    vx += (p.x - mx) * (p.x - mx);
    vy += (p.y - my) * (p.y - my);
  }
  // Sample standard deviations.
  const double sx = std::sqrt(vx / (n - 1.0));
  const double sy = std::sqrt(vy / (n - 1.0));

  DensityGrid g;
  g.nx = g.ny = resolution;
  if (bandwidth) {
    g.bandwidth_x = g.bandwidth_y = *bandwidth;
  } else {
    const double scott = std::pow(n, -1.0 / 6.0);
    g.bandwidth_x = scott * sx;
    g.bandwidth_y = scott * sy;
    // A flat axis borrows the other axis' bandwidth.
    if (g.bandwidth_x <= 0.0) g.bandwidth_x = g.bandwidth_y;
    if (g.bandwidth_y <= 0.0) g.bandwidth_y = g.bandwidth_x;
  }
  double wx = xmax - xmin;
  double wy = ymax - ymin;
  if (wx <= 0.0) wx = wy;
  if (wy <= 0.0) wy = wx;
  const double cx = 0.5 * (xmin + xmax);
  const double cy = 0.5 * (ymin + ymax);
  g.x0 = cx - 0.6 * wx;
  g.x1 = cx + 0.6 * wx;
  g.y0 = cy - 0.6 * wy;
  g.y1 = cy + 0.6 * wy;

  g.values.assign(g.nx * g.ny, 0.0);
  const double hx = g.bandwidth_x;
  const double hy = g.bandwidth_y;
  const double norm = 1.0 / (2.0 * 3.14159265358979323846 * hx * hy * n);
  // Separable kernel: precompute per-point 1-D factors.
  std::vector<double> kx(g.nx);
  std::vector<double> ky(g.ny);
  for (const auto& p : pts) {
    for (std::size_t i = 0; i < g.nx; ++i) {
      const double u = (g.cell_x(i) - p.x) / hx;
      kx[i] = std::exp(-0.5 * u * u);
    }
    for (std::size_t j = 0; j < g.ny; ++j) {
      const double u = (g.cell_y(j) - p.y) / hy;
      ky[j] = std::exp(-0.5 * u * u);
    }
    for (std::size_t j = 0; j < g.ny; ++j) {
      if (ky[j] == 0.0) continue;
      double* row = g.values.data() + j * g.nx;
      for (std::size_t i = 0; i < g.nx; ++i) row[i] += ky[j] * kx[i];
    }
  }
  for (auto& v : g.values) v *= norm;
  const double mass = g.integral();
  if (!(mass > 0.0) || !std::isfinite(mass)) throw NumericalError("density_grid: grid holds no mass");
  for (auto& v : g.values) v /= mass;
  return g;
}

std::string grid_csv(const DensityGrid& grid) {
  std::ostringstream out;
  for (std::size_t j = 0; j < grid.ny; ++j) {
    for (std::size_t i = 0; i < grid.nx; ++i) {
      if (i) out << ',';
      out << fmt_num(grid.at(i, j));
    }
    out << '\n';
  }
  return out.str();
}

std::vector<Contour> density_contours(const DensityGrid& grid, std::span<const double> masses) {
  std::vector<double> sorted = grid.values;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);

  std::vector<Contour> out;
  for (double q : masses) {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("density_contours: mass shares must lie in (0, 1)");
    Contour c;
    c.mass = q;
    double acc = 0.0;
    c.level = sorted.back();
    for (double v : sorted) {
      acc += v;
      if (acc >= q * total) {
        c.level = v;
        break;
      }
    }
    const double L = c.level;
    auto lerp = [&](double xa, double ya, double va, double xb, double yb, double vb) {
      const double t = (va == vb) ? 0.5 : (L - va) / (vb - va);
      return std::pair{xa + t * (xb - xa), ya + t * (yb - ya)};
    };
    for (std::size_t j = 0; j + 1 < grid.ny; ++j) {
      for (std::size_t i = 0; i + 1 < grid.nx; ++i) {
        const double xa = grid.cell_x(i), xb = grid.cell_x(i + 1);
        const double ya = grid.cell_y(j), yb = grid.cell_y(j + 1);
        // Corners counter-clockwise from bottom-left.
        const double v0 = grid.at(i, j), v1 = grid.at(i + 1, j), v2 = grid.at(i + 1, j + 1), v3 = grid.at(i, j + 1);
        const int idx = (v0 >= L ? 1 : 0) | (v1 >= L ? 2 : 0) | (v2 >= L ? 4 : 0) | (v3 >= L ? 8 : 0);
        if (idx == 0 || idx == 15) continue;
        const auto bottom = lerp(xa, ya, v0, xb, ya, v1);
        const auto right = lerp(xb, ya, v1, xb, yb, v2);
        const auto top = lerp(xa, yb, v3, xb, yb, v2);
        const auto left = lerp(xa, ya, v0, xa, yb, v3);
        auto add = [&](std::pair<double, double> a, std::pair<double, double> b) {
          c.segments.push_back({a.first, a.second, b.first, b.second});
        };
        const bool centre_high = 0.25 * (v0 + v1 + v2 + v3) >= L;
        switch (idx) {
          case 1: case 14: add(left, bottom); break;
          case 2: case 13: add(bottom, right); break;
          case 3: case 12: add(left, right); break;
          case 4: case 11: add(right, top); break;
          case 6: case 9: add(bottom, top); break;
          case 7: case 8: add(left, top); break;
          case 5:
            if (centre_high) { add(left, top); add(bottom, right); } else { add(left, bottom); add(right, top); }
            break;
          case 10:
            if (centre_high) { add(left, bottom); add(right, top); } else { add(left, top); add(bottom, right); }
            break;
          default: break;
        }
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace mcdban
