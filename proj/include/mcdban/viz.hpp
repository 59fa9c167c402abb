#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcdban/mcd.hpp"

namespace mcdban {

// Equal-width bins over [0, 1]; bin b is [b/bins, (b+1)/bins) except the
// last, which also holds 1.
struct HistogramSpec {
  std::size_t bins = 20;
  std::vector<std::size_t> counts;

  std::size_t total() const;
};

HistogramSpec histogram_data(std::span<const double> samples, std::size_t bins = 20);
// bin_lo,bin_hi,count
std::string histogram_csv(const HistogramSpec& hist);

struct EmbeddingPoint {
  std::uint64_t id = 0;
  double x = 0.0;
  double y = 0.0;
  double mean = 0.0;
  std::optional<bool> correct;  // unknown without a label
  bool certain = true;
};

struct EmbeddingLayout {
  std::vector<EmbeddingPoint> points;
  // Variance captured by each axis (eigenvalues of the sample covariance).
  double variance_x = 0.0;
  double variance_y = 0.0;
  std::string method = "principal-axis";
};

struct EmbedOptions {
  std::uint64_t seed = 0;
  double variance_threshold = 0.1;
  double decision_threshold = 0.5;
  double tolerance = 1e-9;
  std::size_t max_iterations = 1000;
};

// Rows are the sorted sample vectors, centered per column, projected on the
// two leading principal axes (power iteration with deflation, start vector
// drawn from the seed). Each axis is signed so that its largest-magnitude
// loading is positive.
EmbeddingLayout embed_distributions(const DistributionSet& set, const EmbedOptions& options = {});
// id,x,y,mean,correct,certain
std::string layout_csv(const EmbeddingLayout& layout);

// Values on cell centres, row-major with ny rows of nx columns; row 0 is the
// lowest y.
struct DensityGrid {
  std::size_t nx = 100;
  std::size_t ny = 100;
  double x0 = 0.0;
  double x1 = 1.0;
  double y0 = 0.0;
  double y1 = 1.0;
  double bandwidth_x = 0.0;
  double bandwidth_y = 0.0;
  std::vector<double> values;

  double cell_width() const { return (x1 - x0) / static_cast<double>(nx); }
  double cell_height() const { return (y1 - y0) / static_cast<double>(ny); }
  double cell_x(std::size_t i) const { return x0 + (static_cast<double>(i) + 0.5) * cell_width(); }
  double cell_y(std::size_t j) const { return y0 + (static_cast<double>(j) + 0.5) * cell_height(); }
  double at(std::size_t i, std::size_t j) const { return values[j * nx + i]; }
  double integral() const;
};

// Gaussian product-kernel KDE over the bounding box plus a 10% margin.
// Default bandwidth per axis is Scott's n^(-1/6) * sd; a given bandwidth
// applies to both axes. The grid is rescaled to integrate to 1.
DensityGrid density_grid(const EmbeddingLayout& layout, std::optional<double> bandwidth = std::nullopt,
                         std::size_t resolution = 100);
// Row-major grid values, one grid row per line, lowest y first.
std::string grid_csv(const DensityGrid& grid);

struct Segment {
  double x0, y0, x1, y1;
};

struct Contour {
  double mass = 0.0;   // share of grid mass enclosed
  double level = 0.0;  // density level of the iso-line
  std::vector<Segment> segments;
};

// Marching squares at the density levels whose super-level sets hold the
// given shares of grid mass (highest-density regions).
std::vector<Contour> density_contours(const DensityGrid& grid,
                                      std::span<const double> masses = std::vector<double>{0.25, 0.5, 0.75});

}  // namespace mcdban
