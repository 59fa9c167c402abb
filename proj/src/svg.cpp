#include "mcdban/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mcdban/error.hpp"

namespace mcdban {

PlotKind plot_kind_from_string(std::string_view name) {
  if (name == "histogram") return PlotKind::histogram;
  if (name == "reliability") return PlotKind::reliability;
  if (name == "scatter") return PlotKind::scatter;
  if (name == "tradeoff") return PlotKind::tradeoff;
  throw ValidationError("unknown plot kind '" + std::string(name) + "'");
}

std::string to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::histogram: return "histogram";
    case PlotKind::reliability: return "reliability";
    case PlotKind::scatter: return "scatter";
    case PlotKind::tradeoff: return "tradeoff";
  }
  return "unknown";
}

PlotKind kind_of(const PlotSpec& spec) { return static_cast<PlotKind>(spec.index()); }

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default:
        // Control characters are not allowed in XML 1.0.
        if (static_cast<unsigned char>(c) >= 0x20 || c == '\n' || c == '\t') out += c;
    }
  }
  return out;
}

namespace {

constexpr double kLeft = 80, kRight = 600, kTop = 60, kBottom = 530;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

class Canvas {
 public:
  Canvas(double x0, double x1, double y0, double y1) : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    if (x1_ <= x0_) x1_ = x0_ + 1.0;
    if (y1_ <= y0_) y1_ = y0_ + 1.0;
    body_ += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    body_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kSvgWidth) + "\" height=\"" +
             std::to_string(kSvgHeight) + "\" viewBox=\"0 0 " + std::to_string(kSvgWidth) + " " +
             std::to_string(kSvgHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    body_ += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(kSvgWidth) + "\" height=\"" +
             std::to_string(kSvgHeight) + "\" fill=\"white\"/>\n";
  }

  double px(double x) const { return kLeft + (x - x0_) / (x1_ - x0_) * (kRight - kLeft); }
  double py(double y) const { return kBottom - (y - y0_) / (y1_ - y0_) * (kBottom - kTop); }

  void raw(const std::string& s) { body_ += s; }

  void line(double xa, double ya, double xb, double yb, const std::string& style) {
    body_ += "<line x1=\"" + num(px(xa)) + "\" y1=\"" + num(py(ya)) + "\" x2=\"" + num(px(xb)) + "\" y2=\"" +
             num(py(yb)) + "\" " + style + "/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& style) {
    if (pts.empty()) return;
    body_ += "<polyline points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) body_ += ' ';
      body_ += num(px(pts[i].first)) + "," + num(py(pts[i].second));
    }
    body_ += "\" fill=\"none\" " + style + "/>\n";
  }

  void text(double x, double y, const std::string& s, const std::string& extra = "") {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\"" + (extra.empty() ? "" : " " + extra) + ">" +
             xml_escape(s) + "</text>\n";
  }

  void axes(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    text(kSvgWidth / 2.0, 30, title, "text-anchor=\"middle\" font-size=\"16\"");
    body_ += "<g stroke=\"black\" stroke-width=\"1\">\n";
    body_ += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kBottom) + "\" x2=\"" + num(kRight) + "\" y2=\"" +
             num(kBottom) + "\"/>\n";
    body_ += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kBottom) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
             num(kTop) + "\"/>\n";
    body_ += "</g>\n";
    for (int i = 0; i <= 5; ++i) {
      const double fx = x0_ + (x1_ - x0_) * i / 5.0;
      const double fy = y0_ + (y1_ - y0_) * i / 5.0;
      const double tx = px(fx);
      const double ty = py(fy);
      body_ += "<line x1=\"" + num(tx) + "\" y1=\"" + num(kBottom) + "\" x2=\"" + num(tx) + "\" y2=\"" +
               num(kBottom + 5) + "\" stroke=\"black\"/>\n";
      text(tx, kBottom + 20, tick_label(fx), "text-anchor=\"middle\"");
      body_ += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(ty) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
               num(ty) + "\" stroke=\"black\"/>\n";
      text(kLeft - 8, ty + 4, tick_label(fy), "text-anchor=\"end\"");
    }
    text((kLeft + kRight) / 2.0, kBottom + 45, xlabel, "text-anchor=\"middle\"");
    text(22, (kTop + kBottom) / 2.0, ylabel,
         "text-anchor=\"middle\" transform=\"rotate(-90 22 " + num((kTop + kBottom) / 2.0) + ")\"");
  }

  // Legend entries: label plus an SVG snippet drawn in a 20x12 swatch whose
  // top-left corner is passed in.
  template <class Swatch>
  void legend_entry(int row, const std::string& label, Swatch swatch) {
    const double y = kTop + 10 + 22.0 * row;
    swatch(kRight + 20, y);
    text(kRight + 48, y + 10, label);
  }

  std::string finish() {
    body_ += "</svg>\n";
    return std::move(body_);
  }

 private:
  double x0_, x1_, y0_, y1_;
  std::string body_;
};

std::string line_swatch(double x, double y, const std::string& color, const std::string& dash = "") {
  return "<line x1=\"" + num(x) + "\" y1=\"" + num(y + 6) + "\" x2=\"" + num(x + 20) + "\" y2=\"" + num(y + 6) +
         "\" stroke=\"" + color + "\" stroke-width=\"2\"" + (dash.empty() ? "" : " stroke-dasharray=\"" + dash + "\"") +
         "/>\n";
}

std::string render(const HistogramPlot& p) {
  const auto& h = p.histogram;
  std::size_t peak = 0;
  for (auto c : h.counts) peak = std::max(peak, c);
  Canvas cv(0.0, 1.0, 0.0, peak ? static_cast<double>(peak) : 1.0);
  cv.axes(p.title, "prediction score", "count");
  const double w = h.bins ? 1.0 / static_cast<double>(h.bins) : 1.0;
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    if (h.counts[b] == 0) continue;
    const double xa = cv.px(static_cast<double>(b) * w);
    const double xb = cv.px(static_cast<double>(b + 1) * w);
    const double top = cv.py(static_cast<double>(h.counts[b]));
    cv.raw("<rect class=\"bar\" x=\"" + num(xa) + "\" y=\"" + num(top) + "\" width=\"" + num(xb - xa) + "\" height=\"" +
           num(cv.py(0.0) - top) + "\" fill=\"#1f77b4\" stroke=\"white\"/>\n");
  }
  cv.legend_entry(0, "samples (" + std::to_string(h.total()) + ")", [&](double x, double y) {
    cv.raw("<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"20\" height=\"12\" fill=\"#1f77b4\"/>\n");
  });
  return cv.finish();
}

std::string render(const ReliabilityPlot& p) {
  Canvas cv(0.0, 1.0, 0.0, 1.0);
  cv.axes(p.title, "mean predicted score", "fraction positive");
  cv.line(0.0, 0.0, 1.0, 1.0, "class=\"diagonal\" stroke=\"gray\" stroke-dasharray=\"6 4\"");
  cv.legend_entry(0, "perfect calibration", [&](double x, double y) { cv.raw(line_swatch(x, y, "gray", "6 4")); });
  for (std::size_t s = 0; s < p.series.size(); ++s) {
    const std::string color = kPalette[s % std::size(kPalette)];
    std::vector<std::pair<double, double>> pts;
    for (const auto& b : p.series[s].second) {
      if (b.count > 0) pts.emplace_back(b.mean_score, b.accuracy);
    }
    cv.polyline(pts, "stroke=\"" + color + "\" stroke-width=\"2\"");
    for (const auto& [x, y] : pts) {
      cv.raw("<circle cx=\"" + num(cv.px(x)) + "\" cy=\"" + num(cv.py(y)) + "\" r=\"4\" fill=\"" + color + "\"/>\n");
    }
    cv.legend_entry(static_cast<int>(s) + 1, p.series[s].first,
                    [&](double x, double y) { cv.raw(line_swatch(x, y, color)); });
  }
  return cv.finish();
}

std::string mean_color(double mean) {
  if (mean < 1.0 / 3.0) return "#4575b4";
  if (mean < 2.0 / 3.0) return "#fee090";
  return "#d73027";
}

std::string marker(double x, double y, const std::string& fill, const std::string& stroke, std::optional<bool> correct) {
  if (!correct || *correct) {
    return "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"4\" fill=\"" + fill + "\" stroke=\"" + stroke +
           "\" stroke-width=\"1.5\"/>\n";
  }
  return "<rect x=\"" + num(x - 4) + "\" y=\"" + num(y - 4) + "\" width=\"8\" height=\"8\" fill=\"" + fill +
         "\" stroke=\"" + stroke + "\" stroke-width=\"1.5\"/>\n";
}

std::string render(const ScatterPlot& p) {
  const auto& pts = p.layout.points;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!pts.empty()) {
    x0 = x1 = pts[0].x;
    y0 = y1 = pts[0].y;
    for (const auto& q : pts) {
      x0 = std::min(x0, q.x);
      x1 = std::max(x1, q.x);
      y0 = std::min(y0, q.y);
      y1 = std::max(y1, q.y);
    }
    const double mx = std::max(x1 - x0, 1e-9) * 0.1;
    const double my = std::max(y1 - y0, 1e-9) * 0.1;
    x0 -= mx;
    x1 += mx;
    y0 -= my;
    y1 += my;
  }
  Canvas cv(x0, x1, y0, y1);
  cv.axes(p.title, "axis 1", "axis 2");
  for (std::size_t c = 0; c < p.contours.size(); ++c) {
    const auto& contour = p.contours[c];
    if (contour.segments.empty()) continue;
    std::string d;
    for (const auto& s : contour.segments) {
      const double ax = std::clamp(cv.px(s.x0), 0.0, double(kSvgWidth));
      const double ay = std::clamp(cv.py(s.y0), 0.0, double(kSvgHeight));
      const double bx = std::clamp(cv.px(s.x1), 0.0, double(kSvgWidth));
      const double by = std::clamp(cv.py(s.y1), 0.0, double(kSvgHeight));
      d += "M" + num(ax) + " " + num(ay) + "L" + num(bx) + " " + num(by);
    }
    cv.raw("<path d=\"" + d + "\" fill=\"none\" stroke=\"#555555\" stroke-width=\"1\" stroke-opacity=\"" +
           num(0.4 + 0.2 * static_cast<double>(c)) + "\"/>\n");
  }
  for (const auto& q : pts) {
    cv.raw(marker(cv.px(q.x), cv.py(q.y), mean_color(q.mean), q.certain ? "#1a9850" : "#7b3294", q.correct));
  }
  int row = 0;
  auto entry = [&](const std::string& label, const std::string& fill, const std::string& stroke,
                   std::optional<bool> correct) {
    cv.legend_entry(row++, label, [&](double x, double y) { cv.raw(marker(x + 10, y + 6, fill, stroke, correct)); });
  };
  entry("mean < 1/3", mean_color(0.0), "none", true);
  entry("mean 1/3 to 2/3", mean_color(0.5), "none", true);
  entry("mean > 2/3", mean_color(1.0), "none", true);
  entry("certain (outline)", "white", "#1a9850", true);
  entry("uncertain (outline)", "white", "#7b3294", true);
  entry("correct", "white", "black", true);
  entry("incorrect", "white", "black", false);
  if (!p.contours.empty()) {
    cv.legend_entry(row++, "density contours", [&](double x, double y) { cv.raw(line_swatch(x, y, "#555555")); });
  }
  return cv.finish();
}

std::string render(const TradeoffPlot& p) {
  Canvas cv(0.0, 1.0, 0.0, 1.0);
  cv.axes(p.title, "threshold", "metric");
  const std::pair<const char*, double MetricReport::*> metrics[] = {
      {"precision", &MetricReport::precision},
      {"accuracy", &MetricReport::accuracy},
      {"recall", &MetricReport::recall},
      {"f1", &MetricReport::f1},
  };
  int i = 0;
  for (const auto& [name, field] : metrics) {
    const std::string color = kPalette[i % std::size(kPalette)];
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : p.rows) pts.emplace_back(r.threshold, r.report.*field);
    cv.polyline(pts, "stroke=\"" + color + "\" stroke-width=\"2\"");
    cv.legend_entry(i, name, [&](double x, double y) { cv.raw(line_swatch(x, y, color)); });
    ++i;
  }
  return cv.finish();
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  return std::visit([](const auto& p) { return render(p); }, spec);
}

}  // namespace mcdban
