#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "mcdban/calibration.hpp"
#include "mcdban/threshold.hpp"
#include "mcdban/viz.hpp"

namespace mcdban {

enum class PlotKind { histogram, reliability, scatter, tradeoff };

PlotKind plot_kind_from_string(std::string_view name);
std::string to_string(PlotKind kind);

struct HistogramPlot {
  std::string title;
  HistogramSpec histogram;
};

// One or more reliability curves (e.g. raw and calibrated) plus the diagonal.
struct ReliabilityPlot {
  std::string title;
  std::vector<std::pair<std::string, std::vector<ReliabilityBin>>> series;
};

struct ScatterPlot {
  std::string title;
  EmbeddingLayout layout;
  std::vector<Contour> contours;
};

struct TradeoffPlot {
  std::string title;
  std::vector<SweepRow> rows;
};

using PlotSpec = std::variant<HistogramPlot, ReliabilityPlot, ScatterPlot, TradeoffPlot>;

PlotKind kind_of(const PlotSpec& spec);

inline constexpr int kSvgWidth = 800;
inline constexpr int kSvgHeight = 600;

// Standalone 800x600 SVG document. Output depends only on the spec.
std::string render_svg(const PlotSpec& spec);

std::string xml_escape(std::string_view text);

}  // namespace mcdban
