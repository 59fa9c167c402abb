#include "mcdban/config.hpp"

#include <set>

#include "mcdban/csv.hpp"
#include "mcdban/error.hpp"

namespace mcdban {

namespace {

template <class F>
void fields(CorpusSection& s, F&& f) {
  f("path", s.path);
  f("text_column", s.text_column);
  f("label_column", s.label_column);
  f("id_column", s.id_column);
  f("delimiter", s.delimiter);
  f("balance", s.balance);
  f("test_fraction", s.test_fraction);
  f("min_freq", s.min_freq);
  f("max_vocab", s.max_vocab);
}

template <class F>
void fields(PredictSection& s, F&& f) {
  f("checkpoint", s.checkpoint);
  f("corpus", s.corpus);
  f("manifest", s.manifest);
  f("split", s.split);
  f("T", s.T);
  f("deterministic", s.deterministic);
  f("threads", s.threads);
}

template <class F>
void fields(CalibrateSection& s, F&& f) {
  f("predictions", s.predictions);
  f("evaluate", s.evaluate);
  f("method", s.method);
  f("bins", s.bins);
  f("binning", s.binning);
  f("smooth_targets", s.smooth_targets);
}

template <class F>
void fields(AnalyzeSection& s, F&& f) {
  f("predictions", s.predictions);
  f("variance_threshold", s.variance_threshold);
  f("decision_threshold", s.decision_threshold);
  f("yates", s.yates);
  f("point_estimate_k", s.point_estimate_k);
  f("title", s.title);
}

template <class F>
void fields(FuseSection& s, F&& f) {
  f("predictions", s.predictions);
  f("side_features", s.side_features);
  f("C", s.C);
  f("epochs", s.epochs);
  f("k", s.k);
  f("threads", s.threads);
  f("importance_repeats", s.importance_repeats);
}

template <class F>
void fields(VizSection& s, F&& f) {
  f("predictions", s.predictions);
  f("bins", s.bins);
  f("histograms", s.histograms);
  f("resolution", s.resolution);
  f("bandwidth", s.bandwidth);
  f("reliability_bins", s.reliability_bins);
  f("variance_threshold", s.variance_threshold);
  f("decision_threshold", s.decision_threshold);
  f("sweep", s.sweep);
}

template <class F>
void fields(SweepSection& s, F&& f) {
  f("predictions", s.predictions);
  f("lo", s.lo);
  f("hi", s.hi);
  f("step", s.step);
  f("metric", s.metric);
}

template <class Section>
void read_section(const nlohmann::json& j, const std::string& name, Section& s) {
  if (!j.is_object()) throw ValidationError("config section '" + name + "' must be an object");
  std::set<std::string> known;
  fields(s, [&](const char* key, auto&) { known.insert(key); });
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ValidationError("unknown key '" + name + "." + key + "'");
  }
  fields(s, [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("config key '" + name + "." + key + "' has the wrong type");
    }
  });
}

template <class Section>
nlohmann::ordered_json write_section(const Section& s) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  fields(const_cast<Section&>(s), [&](const char* key, auto& field) { j[key] = field; });
  return j;
}

void check(const RunConfig& c) {
  if (c.corpus.delimiter.size() != 1) throw ValidationError("corpus.delimiter must be one character");
  if (c.predict.split != "all" && c.predict.split != "train" && c.predict.split != "val" &&
      c.predict.split != "test") {
    throw ValidationError("predict.split must be one of all, train, val, test");
  }
  if (c.predict.T < 1) throw ValidationError("predict.T must be >= 1");
  if (c.calibrate.method != "platt" && c.calibrate.method != "isotonic" && c.calibrate.method != "none") {
    throw ValidationError("calibrate.method must be platt, isotonic or none");
  }
  if (c.calibrate.binning != "positive_score" && c.calibrate.binning != "confidence") {
    throw ValidationError("calibrate.binning must be positive_score or confidence");
  }
  if (c.calibrate.bins < 1) throw ValidationError("calibrate.bins must be >= 1");
  if (c.viz.bins < 1) throw ValidationError("viz.bins must be >= 1");
  if (c.viz.bandwidth < 0.0) throw ValidationError("viz.bandwidth must be >= 0");
  if (c.fuse.k < 2) throw ValidationError("fuse.k must be >= 2");
  metric_from_string(c.sweep.metric);
  c.model.validate();
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> top = {"seed",    "out",     "corpus", "model", "predict",
                                            "calibrate", "analyze", "fuse",  "viz",   "sweep"};
  for (const auto& [key, value] : j.items()) {
    if (!top.contains(key)) throw ValidationError("unknown key '" + key + "'");
  }
  RunConfig c;
  try {
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (j.contains("out")) j.at("out").get_to(c.out);
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config key 'seed' or 'out' has the wrong type");
  }
  if (j.contains("corpus")) read_section(j.at("corpus"), "corpus", c.corpus);
  if (j.contains("model")) c.model = j.at("model").get<BanConfig>();
  if (j.contains("predict")) read_section(j.at("predict"), "predict", c.predict);
  if (j.contains("calibrate")) read_section(j.at("calibrate"), "calibrate", c.calibrate);
  if (j.contains("analyze")) read_section(j.at("analyze"), "analyze", c.analyze);
  if (j.contains("fuse")) read_section(j.at("fuse"), "fuse", c.fuse);
  if (j.contains("viz")) read_section(j.at("viz"), "viz", c.viz);
  if (j.contains("sweep")) read_section(j.at("sweep"), "sweep", c.sweep);
  c.model.seed = c.seed;
  check(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["corpus"] = write_section(c.corpus);
  nlohmann::json model = c.model;
  j["model"] = nlohmann::ordered_json::parse(model.dump());
  j["predict"] = write_section(c.predict);
  j["calibrate"] = write_section(c.calibrate);
  j["analyze"] = write_section(c.analyze);
  j["fuse"] = write_section(c.fuse);
  j["viz"] = write_section(c.viz);
  j["sweep"] = write_section(c.sweep);
  return j;
}

}  // namespace mcdban
