#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "mcdban/error.hpp"
#include "mcdban/fixtures.hpp"
#include "mcdban/rng.hpp"
#include "mcdban/svg.hpp"
#include "mcdban/viz.hpp"

using namespace mcdban;

namespace {

boost::property_tree::ptree parse_xml(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  boost::property_tree::read_xml(in, tree);
  return tree;
}

std::size_t count_substr(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

EmbeddingLayout layout_from(const std::vector<std::array<double, 2>>& pts) {
  EmbeddingLayout layout;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    layout.points.push_back({i, pts[i][0], pts[i][1], 0.5, std::nullopt, true});
  }
  return layout;
}

std::size_t strict_local_maxima(const DensityGrid& g) {
  std::size_t count = 0;
  for (std::size_t j = 0; j < g.ny; ++j) {
    for (std::size_t i = 0; i < g.nx; ++i) {
      bool peak = true;
      for (int dj = -1; dj <= 1 && peak; ++dj) {
        for (int di = -1; di <= 1 && peak; ++di) {
          if (di == 0 && dj == 0) continue;
          const auto ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
          if (ii < 0 || jj < 0 || ii >= static_cast<long>(g.nx) || jj >= static_cast<long>(g.ny)) continue;
          if (g.at(ii, jj) >= g.at(i, j)) peak = false;
        }
      }
      count += peak;
    }
  }
  return count;
}

}  // namespace

TEST_CASE("histogram counts") {
  const std::vector<double> constant(50, 0.5);
  const auto h = histogram_data(constant, 20);
  CHECK(h.counts.size() == 20);
  CHECK(h.counts[10] == 50);
  CHECK(h.total() == 50);

  const auto edges = histogram_data(std::vector<double>{0.0, 1.0, 0.05, 0.999}, 20);
  CHECK(edges.counts[0] == 1);
  CHECK(edges.counts[1] == 1);
  CHECK(edges.counts[19] == 2);

  Rng rng(1);
  std::vector<double> u(100000);
  for (auto& x : u) x = rng.uniform();
  const auto uh = histogram_data(u, 20);
  CHECK(uh.total() == 100000);
  const auto [lo, hi] = std::minmax_element(uh.counts.begin(), uh.counts.end());
  CHECK(static_cast<double>(*hi) / static_cast<double>(*lo) < 2.0);

  auto shuffled = u;
  rng.shuffle(shuffled);
  CHECK(histogram_data(shuffled, 20).counts == uh.counts);

  CHECK(histogram_data(std::vector<double>{}, 5).total() == 0);
  CHECK_THROWS_AS(histogram_data(std::vector<double>{1.2}, 5), ValidationError);
  CHECK_THROWS_AS(histogram_data(std::vector<double>{0.2}, 0), ValidationError);
  const auto csv = histogram_csv(edges);
  CHECK(csv.rfind("bin_lo,bin_hi,count\n", 0) == 0);
  CHECK(count_substr(csv, "\n") == 21);
}

TEST_CASE("rank one data embeds on a line") {
  DistributionSet set;
  const std::vector<double> base = {0.1, 0.2, 0.4, 0.5};
  const std::vector<double> dir = {0.01, 0.02, 0.05, 0.1};
  for (std::uint64_t i = 0; i < 8; ++i) {
    std::vector<double> s;
    for (std::size_t k = 0; k < base.size(); ++k) s.push_back(base[k] + dir[k] * static_cast<double>(i));
    set.items.push_back(PredictionDistribution::from_samples(i, 1, s));
  }
  const auto layout = embed_distributions(set);
  double xmin = 1e9, xmax = -1e9, ymax = 0.0;
  for (const auto& p : layout.points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymax = std::max(ymax, std::abs(p.y));
  }
  CHECK(ymax < 1e-6 * (xmax - xmin));
  CHECK(layout.variance_x >= layout.variance_y);
}

TEST_CASE("embedding properties") {
  const auto set = planted_clusters(20, 30, 3);
  const auto layout = embed_distributions(set, {.seed = 4});
  REQUIRE(layout.points.size() == set.size());
  CHECK(layout.variance_x >= layout.variance_y);
  double vx = 0.0, vy = 0.0;
  for (const auto& p : layout.points) {
    CHECK(std::isfinite(p.x));
    CHECK(std::isfinite(p.y));
    vx += p.x * p.x;
    vy += p.y * p.y;
  }
  CHECK(vx / set.size() == doctest::Approx(layout.variance_x).epsilon(1e-6));
  CHECK(vy / set.size() == doctest::Approx(layout.variance_y).epsilon(1e-6));
  CHECK(layout_csv(layout) == layout_csv(embed_distributions(set, {.seed = 4})));

  // duplicated instances land on the same coordinates
  DistributionSet doubled = set;
  for (const auto& d : set.items) {
    auto copy = d;
    copy.id += 1000;
    doubled.items.push_back(copy);
  }
  const auto dl = embed_distributions(doubled, {.seed = 4});
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(dl.points[i].x == doctest::Approx(dl.points[i + set.size()].x).epsilon(1e-12));
    CHECK(dl.points[i].y == doctest::Approx(dl.points[i + set.size()].y).epsilon(1e-12));
  }

  // relabeling and reordering ids moves coordinates with content
  DistributionSet relabeled;
  for (std::size_t i = set.size(); i-- > 0;) {
    auto copy = set.items[i];
    copy.id = 5000 + i * 7;
    relabeled.items.push_back(copy);
  }
  const auto rl = embed_distributions(relabeled, {.seed = 4});
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& moved = rl.points[set.size() - 1 - i];
    CHECK(moved.id == 5000 + i * 7);
    CHECK(moved.x == doctest::Approx(layout.points[i].x).epsilon(1e-8));
    CHECK(moved.y == doctest::Approx(layout.points[i].y).epsilon(1e-8));
  }

  const auto csv = layout_csv(layout);
  CHECK(csv.rfind("id,x,y,mean,correct,certain\n", 0) == 0);
  CHECK(count_substr(csv, "\n") == set.size() + 1);

  DistributionSet ragged = set;
  ragged.items[0].samples.push_back(0.5);
  ragged.items[0] = PredictionDistribution::from_samples(0, 1, ragged.items[0].samples);
  CHECK_THROWS_AS(embed_distributions(ragged), ValidationError);
  DistributionSet tiny;
  tiny.items.assign(set.items.begin(), set.items.begin() + 2);
  CHECK_THROWS_AS(embed_distributions(tiny), ValidationError);
}

TEST_CASE("styling channels") {
  const auto set = planted_clusters(10, 20, 5);
  const auto layout = embed_distributions(set, {.variance_threshold = 0.1});
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& d = set.items[i];
    const auto& p = layout.points[i];
    CHECK(p.id == d.id);
    CHECK(p.mean == d.mean);
    CHECK(p.certain == !(d.variance > 0.1));
    REQUIRE(p.correct);
    CHECK(*p.correct == ((d.mean >= 0.5 ? 1 : 0) == *d.label));
  }
}

TEST_CASE("kernel density grid") {
  // tight cluster: product grid of normal quantiles around (3, -1)
  const double q[] = {-1.465, -0.792, -0.366, 0.0, 0.366, 0.792, 1.465};
  std::vector<std::array<double, 2>> pts;
  for (double a : q) {
    for (double b : q) pts.push_back({3.0 + 0.3 * a, -1.0 + 0.2 * b});
  }
  const double mx = 3.0, my = -1.0;
  const auto g = density_grid(layout_from(pts));
  CHECK(g.nx == 100);
  CHECK(g.ny == 100);
  CHECK(std::abs(g.integral() - 1.0) <= 0.05);
  for (double v : g.values) {
    CHECK(v >= 0.0);
    CHECK(std::isfinite(v));
  }
  const auto best = std::max_element(g.values.begin(), g.values.end()) - g.values.begin();
  const auto bi = static_cast<std::size_t>(best) % g.nx, bj = static_cast<std::size_t>(best) / g.nx;
  CHECK(std::abs(g.cell_x(bi) - mx) <= g.cell_width());
  CHECK(std::abs(g.cell_y(bj) - my) <= g.cell_height());
  CHECK(strict_local_maxima(g) == 1);

  double sum = 0.0;
  for (double v : g.values) sum += v * g.cell_width() * g.cell_height();
  CHECK(sum == doctest::Approx(g.integral()));

  const auto csv = grid_csv(g);
  CHECK(count_substr(csv, "\n") == 100);
}

TEST_CASE("two separated clusters give two peaks") {
  Rng rng(3);
  std::vector<std::array<double, 2>> pts;
  for (int i = 0; i < 100; ++i) pts.push_back({0.1 * rng.normal(), 0.1 * rng.normal()});
  for (int i = 0; i < 100; ++i) pts.push_back({10.0 + 0.1 * rng.normal(), 0.1 * rng.normal()});
  const auto g = density_grid(layout_from(pts), 0.5);
  CHECK(g.bandwidth_x == 0.5);
  CHECK(g.bandwidth_y == 0.5);
  CHECK(strict_local_maxima(g) == 2);
  CHECK(std::abs(g.integral() - 1.0) <= 0.05);
}

TEST_CASE("density errors and flat axes") {
  CHECK_THROWS_AS(density_grid(layout_from({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}})), ValidationError);
  const auto g = density_grid(layout_from({{0.0, 1.0}, {1.0, 1.0}, {2.0, 1.0}}));
  CHECK(g.bandwidth_y == g.bandwidth_x);
  CHECK(std::abs(g.integral() - 1.0) <= 0.05);
}

TEST_CASE("highest density contours") {
  Rng rng(4);
  std::vector<std::array<double, 2>> pts;
  for (int i = 0; i < 300; ++i) pts.push_back({rng.normal(), rng.normal()});
  const auto g = density_grid(layout_from(pts));
  const auto contours = density_contours(g);
  REQUIRE(contours.size() == 3);
  CHECK(contours[0].mass == 0.25);
  CHECK(contours[0].level > contours[1].level);
  CHECK(contours[1].level > contours[2].level);
  for (const auto& c : contours) {
    CHECK_FALSE(c.segments.empty());
    double enclosed = 0.0;
    for (double v : g.values) {
      if (v >= c.level) enclosed += v * g.cell_width() * g.cell_height();
    }
    CHECK(enclosed / g.integral() == doctest::Approx(c.mass).epsilon(0.05));
  }
}

TEST_CASE("svg documents are well formed and deterministic") {
  const auto set = planted_clusters(15, 20, 6);
  const auto layout = embed_distributions(set);
  const auto grid = density_grid(layout);
  std::vector<SweepRow> rows;
  const std::vector<double> means = set.means();
  const std::vector<int> labels = set.labels();
  const std::vector<double> ts = {0.0, 0.25, 0.5, 0.75, 1.0};
  const std::vector<PlotSpec> specs = {
      HistogramPlot{"Instance <7> & \"quotes\"", histogram_data(set.items[0].samples)},
      ReliabilityPlot{"Reliability", {{"raw", reliability_curve(means, labels, 10)}}},
      ScatterPlot{"Embedding", layout, density_contours(grid)},
      TradeoffPlot{"Trade-off", tradeoff_sweep(means, labels, ts)},
  };
  for (const auto& spec : specs) {
    const auto svg = render_svg(spec);
    CAPTURE(to_string(kind_of(spec)));
    CHECK(svg == render_svg(spec));
    boost::property_tree::ptree tree;
    CHECK_NOTHROW(tree = parse_xml(svg));
    CHECK(tree.get<int>("svg.<xmlattr>.width") == 800);
    CHECK(tree.get<int>("svg.<xmlattr>.height") == 600);
  }
  CHECK(render_svg(specs[0]).find("&lt;7&gt; &amp; &quot;quotes&quot;") != std::string::npos);
  CHECK(count_substr(render_svg(specs[2]), "<circle") + count_substr(render_svg(specs[2]), "<rect") >= set.size());
}

TEST_CASE("empty histogram plot has axes only") {
  HistogramSpec empty;
  empty.bins = 20;
  empty.counts.assign(20, 0);
  const auto svg = render_svg(HistogramPlot{"empty", empty});
  CHECK_NOTHROW(parse_xml(svg));
  CHECK(svg.find("class=\"bar\"") == std::string::npos);
  CHECK(svg.find("<line") != std::string::npos);
}

TEST_CASE("reliability plot draws the diagonal") {
  const auto data = bernoulli_calibrated(1000, 3);
  const auto svg = render_svg(ReliabilityPlot{"r", {{"raw", reliability_curve(data.scores, data.labels)}}});
  CHECK(svg.find("class=\"diagonal\"") != std::string::npos);
}

TEST_CASE("plot kinds") {
  CHECK(plot_kind_from_string("scatter") == PlotKind::scatter);
  CHECK(to_string(PlotKind::tradeoff) == "tradeoff");
  CHECK_THROWS_AS(plot_kind_from_string("pie"), ValidationError);
  CHECK(xml_escape("a<b>&'\"") == "a&lt;b&gt;&amp;&apos;&quot;");
}
