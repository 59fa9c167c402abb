#include "mcdban/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "mcdban/analytics.hpp"
#include "mcdban/attention_net.hpp"
#include "mcdban/calibration.hpp"
#include "mcdban/config.hpp"
#include "mcdban/csv.hpp"
#include "mcdban/error.hpp"
#include "mcdban/fixtures.hpp"
#include "mcdban/format.hpp"
#include "mcdban/fusion.hpp"
#include "mcdban/mcd.hpp"
#include "mcdban/rng.hpp"
#include "mcdban/svg.hpp"
#include "mcdban/threshold.hpp"
#include "mcdban/viz.hpp"

namespace fs = std::filesystem;

namespace mcdban::cli {

namespace {

struct Context {
  RunConfig config;
  fs::path out;
  std::ostream& log;
  std::ostream& err;
};

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text_file(path, j.dump(2) + "\n"); }
void write_json(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

const std::string& require(const std::string& value, const std::string& key) {
  if (value.empty()) throw ValidationError("config key '" + key + "' is required");
  return value;
}

std::string vocab_fingerprint(const Vocabulary& vocab) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : vocab.tokens()) {
    for (unsigned char c : t) h = (h ^ c) * 0x100000001b3ULL;
    h = (h ^ 0x0a) * 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ColumnSpec column_spec(const CorpusSection& c) {
  ColumnSpec spec;
  spec.text_column = c.text_column;
  spec.label_column = c.label_column;
  spec.id_column = c.id_column;
  spec.delimiter = c.delimiter.front();
  return spec;
}

void cmd_train(Context& ctx) {
  const auto& cfg = ctx.config;
  const fs::path corpus_path = require(cfg.corpus.path, "corpus.path");
  LabeledCorpus corpus = load_corpus(corpus_path, column_spec(cfg.corpus));
  if (cfg.corpus.balance) corpus = balance(corpus, derive_seed(cfg.seed, 0xba1));
  const CorpusSplits splits = split(corpus, cfg.model.val_fraction, cfg.corpus.test_fraction,
                                    derive_seed(cfg.seed, 0x5e1));
  const Vocabulary vocab =
      build_vocab(splits.train, cfg.corpus.min_freq, cfg.corpus.max_vocab ? cfg.corpus.max_vocab : SIZE_MAX);
  const TrainResult result = train(splits.train, splits.val, vocab, cfg.model);

  save_checkpoint(result.checkpoint, ctx.out / "checkpoint.json");
  write_json(ctx.out / "history.json", nlohmann::json(result.history));
  nlohmann::json manifest = make_manifest(splits, corpus_path.string(), cfg.seed, cfg.corpus.balance,
                                          cfg.model.val_fraction, cfg.corpus.test_fraction);
  manifest["vocabulary_fingerprint"] = vocab_fingerprint(vocab);
  write_json(ctx.out / "manifest.json", manifest);

  const auto& model = result.checkpoint.model;
  ctx.log << "train: " << splits.train.size() << " / val: " << splits.val.size() << " / test: " << splits.test.size()
          << " instances, vocabulary " << vocab.size() << ", parameters " << model.parameter_count() << "\n";
  ctx.log << "epochs run " << result.history.epochs.size() << ", best epoch " << result.history.best_epoch
          << ", best validation metric " << fmt_fixed(result.checkpoint.best_metric, 4) << ", threshold "
          << fmt_num(result.checkpoint.threshold) << "\n";
  auto accuracy = [&](const LabeledCorpus& part) {
    const auto seqs = encode_all(part, vocab, cfg.model.max_len);
    const auto scores = model.forward(seqs, ForwardMode::deterministic, nullptr);
    return metric_report(scores, part.labels(), result.checkpoint.threshold).accuracy;
  };
  ctx.log << "train accuracy " << fmt_fixed(accuracy(splits.train), 4);
  if (!splits.test.empty()) ctx.log << ", test accuracy " << fmt_fixed(accuracy(splits.test), 4);
  ctx.log << "\n";
}

void cmd_predict(Context& ctx) {
  const auto& cfg = ctx.config;
  const auto& p = cfg.predict;
  const ModelCheckpoint ckpt = load_checkpoint(require(p.checkpoint, "predict.checkpoint"));
  const std::string corpus_path = p.corpus.empty() ? cfg.corpus.path : p.corpus;
  LabeledCorpus corpus = load_corpus(require(corpus_path, "predict.corpus"), column_spec(cfg.corpus));

  if (!p.manifest.empty()) {
    const nlohmann::json mj = nlohmann::json::parse(read_text_file(p.manifest));
    if (mj.contains("vocabulary_fingerprint") &&
        mj.at("vocabulary_fingerprint").get<std::string>() != vocab_fingerprint(ckpt.model.vocab())) {
      throw ValidationError("vocabulary mismatch: checkpoint " + p.checkpoint + " was not trained with manifest " +
                            p.manifest);
    }
    const CorpusManifest manifest = mj.get<CorpusManifest>();
    if (p.split == "train") corpus = select_ids(corpus, manifest.train_ids);
    if (p.split == "val") corpus = select_ids(corpus, manifest.val_ids);
    if (p.split == "test") corpus = select_ids(corpus, manifest.test_ids);
  } else if (p.split != "all") {
    throw ValidationError("predict.split '" + p.split + "' needs predict.manifest");
  }

  PredictOptions opts;
  opts.T = p.T;
  opts.seed = cfg.seed;
  opts.deterministic = p.deterministic;
  opts.threads = p.threads;
  const DistributionSet set = predict_dataset(ckpt.model, corpus, opts);
  save_predictions(set, ctx.out / "predictions.jsonl");

  std::size_t outside = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const double det = ckpt.model.score(ckpt.model.encode(corpus.examples[i].text), ForwardMode::deterministic,
                                        nullptr);
    if (!within_envelope(det, set.items[i])) ++outside;
  }
  if (outside) {
    ctx.err << "warning: " << outside << " instances have a deterministic score far outside their MC samples\n";
  }
  ctx.log << "predicted " << set.size() << " instances with T = " << set.T() << "\n";
}

BinningMode binning_mode(const std::string& name) {
  return name == "confidence" ? BinningMode::confidence : BinningMode::positive_score;
}

void cmd_calibrate(Context& ctx) {
  const auto& c = ctx.config.calibrate;
  const DistributionSet set = load_predictions(require(c.predictions, "calibrate.predictions"));
  const auto scores = set.means();
  const auto labels = set.labels();
  const BinningMode mode = binning_mode(c.binning);

  CalibrationMap map = IdentityCalibration{};
  if (c.method == "platt") {
    PlattOptions opts;
    opts.smooth_targets = c.smooth_targets;
    map = fit_platt(scores, labels, opts);
  } else if (c.method == "isotonic") {
    map = fit_isotonic(scores, labels);
  }
  const auto calibrated = apply_calibration(scores, map);
  write_json(ctx.out / "calibration.json", calibration_to_json(map));

  const auto raw_bins = reliability_curve(scores, labels, c.bins, mode);
  const auto cal_bins = reliability_curve(calibrated, labels, c.bins, mode);
  write_text_file(ctx.out / "reliability_raw.csv", reliability_csv(raw_bins));
  write_text_file(ctx.out / "reliability_calibrated.csv", reliability_csv(cal_bins));
  ReliabilityPlot plot{"Calibration (" + c.method + ")", {{"raw", raw_bins}, {"calibrated", cal_bins}}};
  write_text_file(ctx.out / "reliability.svg", render_svg(plot));

  nlohmann::ordered_json report;
  report["method"] = c.method;
  report["bins"] = c.bins;
  report["binning"] = c.binning;
  report["calibration_split"] = {{"n", set.size()},
                                 {"ece_raw", ece(scores, labels, c.bins, mode)},
                                 {"ece_calibrated", ece(calibrated, labels, c.bins, mode)}};
  ctx.log << "calibration split: ECE raw " << fmt_fixed(report["calibration_split"]["ece_raw"].get<double>(), 4)
          << ", calibrated " << fmt_fixed(report["calibration_split"]["ece_calibrated"].get<double>(), 4) << "\n";
  if (!c.evaluate.empty()) {
    const DistributionSet eval = load_predictions(c.evaluate);
    const auto es = eval.means();
    const auto el = eval.labels();
    const auto ec = apply_calibration(es, map);
    report["evaluation_split"] = {
        {"n", eval.size()}, {"ece_raw", ece(es, el, c.bins, mode)}, {"ece_calibrated", ece(ec, el, c.bins, mode)}};
    ctx.log << "evaluation split: ECE raw " << fmt_fixed(report["evaluation_split"]["ece_raw"].get<double>(), 4)
            << ", calibrated " << fmt_fixed(report["evaluation_split"]["ece_calibrated"].get<double>(), 4) << "\n";
  }
  write_json(ctx.out / "calibration_report.json", report);
}

void cmd_analyze(Context& ctx) {
  const auto& a = ctx.config.analyze;
  const DistributionSet set = load_predictions(require(a.predictions, "analyze.predictions"));
  ReliabilityReport report;
  if (a.point_estimate_k >= 0) {
    const auto scores = set.means();
    const auto ids = set.ids();
    const auto labels = set.labels();
    report = analyze_point_estimates(ids, scores, labels, static_cast<std::size_t>(a.point_estimate_k),
                                     a.decision_threshold);
  } else {
    report = analyze_distributions(set, a.variance_threshold, a.decision_threshold);
  }
  nlohmann::json j = to_json(report);
  j["primary_test"] = a.yates ? "chi_square_yates" : "chi_square_pearson";
  std::string text = render_table(report, a.title);
  if (!a.yates) text += "Primary test: Pearson (no continuity correction)\n";
  write_json(ctx.out / "analysis.json", j);
  write_text_file(ctx.out / "analysis.txt", text);
  ctx.log << text;
}

void cmd_fuse(Context& ctx) {
  const auto& f = ctx.config.fuse;
  const DistributionSet set = load_predictions(require(f.predictions, "fuse.predictions"));
  std::optional<SideFeatureTable> side;
  if (!f.side_features.empty()) {
    side = load_side_features(f.side_features);
    for (const auto& w : side->warnings) ctx.err << "warning: " << w << "\n";
  }
  const FusionMatrix fm = build_features(set, side ? &*side : nullptr);
  LinearOptions opts;
  opts.C = f.C;
  opts.epochs = f.epochs;
  const CvReport cv = kfold_cv(fm.X, fm.labels, f.k, opts, ctx.config.seed, std::nullopt, f.threads);
  nlohmann::json j = to_json(cv);
  j["sample_columns"] = fm.sample_columns;
  j["side_columns"] = side ? side->names : std::vector<std::string>{};
  if (f.importance_repeats > 0) {
    std::vector<std::size_t> all(fm.X.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const Standardizer st = Standardizer::fit(fm.X, all);
    const Matrix Z = st.apply(fm.X);
    LinearOptions full = opts;
    full.seed = derive_seed(ctx.config.seed, 0x1a7);
    const LinearModel model = train_linear(Z, fm.labels, full);
    const auto drop = permutation_importance(model, Z, fm.labels, f.importance_repeats, ctx.config.seed);
    nlohmann::json imp = nlohmann::json::array();
    for (std::size_t c = 0; c < drop.size(); ++c) imp.push_back({{"column", fm.columns[c]}, {"accuracy_drop", drop[c]}});
    j["permutation_importance"] = imp;
  }
  write_json(ctx.out / "fusion_report.json", j);
  ctx.log << "fusion: " << fm.X.cols() << " columns (" << fm.sample_columns << " sorted samples + "
          << (side ? side->names.size() : 0) << " side features), " << f.k << "-fold accuracy "
          << fmt_fixed(cv.mean_accuracy, 4) << " [" << fmt_fixed(cv.std_accuracy, 4) << "], F1 "
          << fmt_fixed(cv.mean_f1, 4) << " [" << fmt_fixed(cv.std_f1, 4) << "]\n";
}

std::vector<SweepRow> load_sweep_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::vector<std::string> want = {"threshold", "precision", "accuracy", "recall", "f1"};
  if (t.header != want) throw ValidationError(path.string() + ": expected header threshold,precision,accuracy,recall,f1");
  std::vector<SweepRow> rows;
  for (const auto& r : t.rows) {
    SweepRow s;
    try {
      s.threshold = std::stod(r.at(0));
      s.report.precision = std::stod(r.at(1));
      s.report.accuracy = std::stod(r.at(2));
      s.report.recall = std::stod(r.at(3));
      s.report.f1 = std::stod(r.at(4));
    } catch (const std::exception&) {
      throw ValidationError(path.string() + ": malformed sweep row");
    }
    rows.push_back(s);
  }
  return rows;
}

void cmd_viz(Context& ctx) {
  const auto& v = ctx.config.viz;
  const DistributionSet set = load_predictions(require(v.predictions, "viz.predictions"));
  nlohmann::ordered_json meta;
  meta["instances"] = set.size();
  meta["T"] = set.T();

  const std::size_t shown = std::min(v.histograms, set.size());
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& d = set.items[i];
    const HistogramSpec h = histogram_data(d.samples, v.bins);
    const std::string stem = "histogram_" + std::to_string(d.id);
    write_text_file(ctx.out / (stem + ".csv"), histogram_csv(h));
    const std::string title = "Instance " + std::to_string(d.id) + ": mean " + fmt_fixed(d.mean, 3) +
                              ", variance " + fmt_fixed(d.variance, 4);
    write_text_file(ctx.out / (stem + ".svg"), render_svg(HistogramPlot{title, h}));
  }

  if (set.size() >= 3) {
    EmbedOptions eo;
    eo.seed = ctx.config.seed;
    eo.variance_threshold = v.variance_threshold;
    eo.decision_threshold = v.decision_threshold;
    const EmbeddingLayout layout = embed_distributions(set, eo);
    write_text_file(ctx.out / "layout.csv", layout_csv(layout));
    meta["embedding"] = {{"method", layout.method}, {"variance_axis1", layout.variance_x},
                         {"variance_axis2", layout.variance_y}};
    std::vector<Contour> contours;
    try {
      const DensityGrid grid =
          density_grid(layout, v.bandwidth > 0.0 ? std::optional<double>(v.bandwidth) : std::nullopt, v.resolution);
      write_text_file(ctx.out / "grid.csv", grid_csv(grid));
      contours = density_contours(grid);
      meta["density"] = {{"resolution", v.resolution},
                         {"bandwidth_x", grid.bandwidth_x},
                         {"bandwidth_y", grid.bandwidth_y},
                         {"bounds", {grid.x0, grid.x1, grid.y0, grid.y1}},
                         {"contour_masses", {0.25, 0.5, 0.75}}};
    } catch (const ValidationError& e) {
      ctx.err << "warning: density grid skipped: " << e.what() << "\n";
    }
    write_text_file(ctx.out / "embedding.svg",
                    render_svg(ScatterPlot{"Prediction distributions (principal axes)", layout, contours}));
  } else {
    ctx.err << "warning: embedding needs at least 3 instances\n";
  }

  if (set.has_labels()) {
    const auto bins = reliability_curve(set.means(), set.labels(), v.reliability_bins);
    write_text_file(ctx.out / "reliability.csv", reliability_csv(bins));
    write_text_file(ctx.out / "reliability.svg", render_svg(ReliabilityPlot{"Calibration plot", {{"MC mean", bins}}}));
  }
  if (!v.sweep.empty()) {
    write_text_file(ctx.out / "tradeoff.svg",
                    render_svg(TradeoffPlot{"Precision and accuracy by threshold", load_sweep_csv(v.sweep)}));
  }
  write_json(ctx.out / "viz.json", meta);
  ctx.log << "viz: wrote " << shown << " histograms" << (set.size() >= 3 ? ", embedding" : "")
          << (set.has_labels() ? ", reliability plot" : "") << (v.sweep.empty() ? "" : ", trade-off plot") << "\n";
}

void cmd_sweep(Context& ctx) {
  const auto& s = ctx.config.sweep;
  const DistributionSet set = load_predictions(require(s.predictions, "sweep.predictions"));
  const ThresholdGrid grid{s.lo, s.hi, s.step};
  grid.validate();
  const auto scores = set.means();
  const auto labels = set.labels();
  const auto points = grid.points();
  const auto rows = tradeoff_sweep(scores, labels, points);
  write_text_file(ctx.out / "sweep.csv", sweep_csv(rows));
  const Metric metric = metric_from_string(s.metric);
  const ThresholdChoice best = search_threshold(scores, labels, metric, grid);
  const MetricReport fixed = metric_report(scores, labels, 0.5);
  nlohmann::ordered_json j;
  j["metric"] = s.metric;
  j["grid"] = {{"lo", s.lo}, {"hi", s.hi}, {"step", s.step}};
  j["threshold"] = best.threshold;
  j["value"] = best.metric;
  j["value_at_0.5"] = fixed.value(metric);
  write_json(ctx.out / "threshold.json", j);
  write_text_file(ctx.out / "tradeoff.svg", render_svg(TradeoffPlot{"Precision and accuracy by threshold", rows}));
  ctx.log << "best " << s.metric << " " << fmt_fixed(best.metric, 4) << " at threshold " << fmt_num(best.threshold)
          << " (" << fmt_fixed(fixed.value(metric), 4) << " at 0.5)\n";
}

std::string file_stem(const ReferenceTable& e) {
  std::string s = "reference_" + e.language + "_" + e.model;
  for (auto& ch : s) ch = ch == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

void cmd_fixtures(Context& ctx) {
  const std::uint64_t seed = ctx.config.seed;
  write_text_file(ctx.out / "synthetic_corpus.csv", synthetic_corpus_csv(200, derive_seed(seed, 1)));
  for (const auto& e : reference_tables()) {
    save_predictions(reference_predictions(e.table), ctx.out / (file_stem(e) + ".jsonl"));
  }
  const DistributionSet planted = planted_clusters(50, 100, derive_seed(seed, 2));
  save_predictions(planted, ctx.out / "planted_clusters.jsonl");
  write_text_file(ctx.out / "side_features.csv", side_features_csv(planted.ids(), derive_seed(seed, 3)));

  RunConfig example;
  example.seed = seed;
  example.model.seed = seed;
  example.out = "run";
  example.corpus.path = (ctx.out / "synthetic_corpus.csv").string();
  example.predict.checkpoint = "run/checkpoint.json";
  example.predict.manifest = "run/manifest.json";
  example.predict.T = 100;
  example.calibrate.predictions = "run/predictions.jsonl";
  example.analyze.predictions = (ctx.out / "reference_eng_bert.jsonl").string();
  example.fuse.predictions = (ctx.out / "planted_clusters.jsonl").string();
  example.fuse.side_features = (ctx.out / "side_features.csv").string();
  example.viz.predictions = (ctx.out / "planted_clusters.jsonl").string();
  example.sweep.predictions = "run/predictions.jsonl";
  write_json(ctx.out / "example_config.json", to_json(example));
  ctx.log << "fixtures written to " << ctx.out.string() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monte Carlo dropout attention networks: training, sampling and reliability analysis", "mcdban"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> t;
  std::optional<double> threshold;
  std::string method;
  std::string yates;

  struct Command {
    const char* name;
    const char* help;
    void (*fn)(Context&);
  };
  const Command commands[] = {
      {"train", "train a model; writes checkpoint, history and manifest", cmd_train},
      {"predict", "MC dropout predictions as JSON lines", cmd_predict},
      {"calibrate", "fit a calibration map and report ECE", cmd_calibrate},
      {"analyze", "certain/uncertain contingency table and chi-square test", cmd_analyze},
      {"fuse", "sorted-sample and side-feature fusion with k-fold linear SVM", cmd_fuse},
      {"viz", "histograms, embedding, density contours and plots", cmd_viz},
      {"sweep", "threshold sweep and best threshold", cmd_sweep},
      {"fixtures", "write bundled fixtures and an example config", cmd_fixtures},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory (overrides config 'out')");
    sub->add_option("--seed", seed, "master seed (overrides config)");
    sub->add_option("--t", t, "MC samples per instance (predict.T)");
    sub->add_option("--threshold", threshold, "decision threshold for analyze and viz");
    sub->add_option("--method", method, "calibration method")->check(CLI::IsMember({"platt", "isotonic", "none"}));
    sub->add_option("--yates", yates, "continuity correction")->check(CLI::IsMember({"on", "off"}));
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  const Command* chosen = nullptr;
  for (const auto& c : commands) {
    if (app.got_subcommand(c.name)) chosen = &c;
  }

  try {
    RunConfig config = load_run_config(config_path);
    if (seed) config.seed = config.model.seed = *seed;
    if (t) config.predict.T = *t;
    if (threshold) config.analyze.decision_threshold = config.viz.decision_threshold = *threshold;
    if (!method.empty()) config.calibrate.method = method;
    if (!yates.empty()) config.analyze.yates = yates == "on";
    if (!out_dir.empty()) config.out = out_dir;
    config = parse_run_config(nlohmann::json::parse(to_json(config).dump()));

    Context ctx{config, fs::path(config.out), out, err};
    fs::create_directories(ctx.out);
    write_json(ctx.out / "config.resolved.json", to_json(config));
    chosen->fn(ctx);
    return kExitOk;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace mcdban::cli
