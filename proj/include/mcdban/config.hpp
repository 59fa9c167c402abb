#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "mcdban/attention_net.hpp"

namespace mcdban {

struct CorpusSection {
  std::string path;
  std::string text_column = "text";
  std::string label_column = "label";
  std::string id_column;
  std::string delimiter = ",";
  bool balance = true;
  double test_fraction = 0.1;
  std::size_t min_freq = 1;
  std::size_t max_vocab = 0;  // 0 = unlimited
};

struct PredictSection {
  std::string checkpoint;
  std::string corpus;    // defaults to corpus.path
  std::string manifest;  // needed unless split is "all"
  std::string split = "test";
  std::size_t T = 1000;
  bool deterministic = false;
  std::size_t threads = 1;
};

struct CalibrateSection {
  std::string predictions;
  std::string evaluate;  // optional second prediction file scored with the fitted map
  std::string method = "isotonic";
  std::size_t bins = 10;
  std::string binning = "positive_score";
  bool smooth_targets = false;
};

struct AnalyzeSection {
  std::string predictions;
  double variance_threshold = 0.1;
  double decision_threshold = 0.5;
  bool yates = true;
  // >= 0 switches to the point-estimate partition with this many uncertain
  // instances, scoring each instance by its mean.
  long long point_estimate_k = -1;
  std::string title = "Reliability of predictions";
};

struct FuseSection {
  std::string predictions;
  std::string side_features;
  double C = 1.0;
  std::size_t epochs = 20;
  std::size_t k = 5;
  std::size_t threads = 1;
  std::size_t importance_repeats = 0;
};

struct VizSection {
  std::string predictions;
  std::size_t bins = 20;
  std::size_t histograms = 6;
  std::size_t resolution = 100;
  double bandwidth = 0.0;  // 0 = Scott's rule
  std::size_t reliability_bins = 10;
  double variance_threshold = 0.1;
  double decision_threshold = 0.5;
  std::string sweep;  // optional sweep CSV to plot
};

struct SweepSection {
  std::string predictions;
  double lo = 0.1;
  double hi = 0.9;
  double step = 0.001;
  std::string metric = "accuracy";
};

struct RunConfig {
  std::uint64_t seed = 42;
  std::string out = "out";
  CorpusSection corpus;
  BanConfig model;
  PredictSection predict;
  CalibrateSection calibrate;
  AnalyzeSection analyze;
  FuseSection fuse;
  VizSection viz;
  SweepSection sweep;
};

// Missing keys keep their defaults; unknown keys and wrong types throw a
// ValidationError naming the key. The top-level seed also becomes the model
// seed.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& config);

}  // namespace mcdban
