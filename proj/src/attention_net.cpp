#include "mcdban/attention_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>
#include <set>

#include "mcdban/error.hpp"

namespace mcdban {

namespace {

constexpr double kMaskedScore = -1e9;

std::string layer_name(std::size_t layer, std::string_view part) {
  return "layer" + std::to_string(layer) + "." + std::string(part);
}

}  // namespace

void BanConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("model config: " + msg); };
  if (d_model == 0) fail("d_model must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (d_model % 2 != 0) fail("d_model must be even for the positional encoding");
  if (n_layers == 0) fail("n_layers must be positive");
  if (d_ff == 0) fail("d_ff must be positive");
  if (max_len == 0) fail("max_len must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (max_epochs == 0) fail("max_epochs must be positive");
  if (patience == 0) fail("patience must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail("val_fraction must lie in (0, 1)");
  if (batch_size == 0) fail("batch_size must be positive");
  if (val_mc_samples == 0) fail("val_mc_samples must be positive");
  if (pooling != "mean") fail("pooling must be \"mean\"");
}

void to_json(nlohmann::json& j, const BanConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},
                     {"n_heads", c.n_heads},
                     {"n_layers", c.n_layers},
                     {"d_ff", c.d_ff},
                     {"max_len", c.max_len},
                     {"dropout_rate", c.dropout_rate},
                     {"lr", c.lr},
                     {"max_epochs", c.max_epochs},
                     {"patience", c.patience},
                     {"val_fraction", c.val_fraction},
                     {"adaptive_threshold", c.adaptive_threshold},
                     {"seed", c.seed},
                     {"batch_size", c.batch_size},
                     {"val_mc_samples", c.val_mc_samples},
                     {"val_metric", to_string(c.val_metric)},
                     {"residual_norm", c.residual_norm},
                     {"mask_padding", c.mask_padding},
                     {"pooling", c.pooling}};
}

void from_json(const nlohmann::json& j, BanConfig& c) {
  if (!j.is_object()) throw ValidationError("model config must be a JSON object");
  static const std::set<std::string> known = {
      "d_model",  "n_heads",      "n_layers",     "d_ff",           "max_len",    "dropout_rate",
      "lr",       "max_epochs",   "patience",     "val_fraction",   "adaptive_threshold",
      "seed",     "batch_size",   "val_mc_samples", "val_metric",   "residual_norm",
      "mask_padding", "pooling"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ValidationError("unknown key 'model." + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("d_model", c.d_model);
    get("n_heads", c.n_heads);
    get("n_layers", c.n_layers);
    get("d_ff", c.d_ff);
    get("max_len", c.max_len);
    get("dropout_rate", c.dropout_rate);
    get("lr", c.lr);
    get("max_epochs", c.max_epochs);
    get("patience", c.patience);
    get("val_fraction", c.val_fraction);
    get("adaptive_threshold", c.adaptive_threshold);
    get("seed", c.seed);
    get("batch_size", c.batch_size);
    get("val_mc_samples", c.val_mc_samples);
    if (j.contains("val_metric")) c.val_metric = metric_from_string(j.at("val_metric").get<std::string>());
    get("residual_norm", c.residual_norm);
    get("mask_padding", c.mask_padding);
    get("pooling", c.pooling);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
}

Matrix positional_encoding(std::size_t max_len, std::size_t d_model) {
  if (d_model % 2 != 0) throw ValidationError("positional_encoding: d_model must be even");
  Matrix pe(max_len, d_model);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Matrix attention_head(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw ValidationError("attention_head: shape mismatch");
  }
  Matrix scores = matmul_nt(q, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (auto& s : scores.values()) s *= scale;
  return matmul(softmax_rows(scores), v);
}

std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> parameter_layout(
    const BanConfig& config, std::size_t vocab_size) {
  const std::size_t d = config.d_model;
  const std::size_t dk = d / config.n_heads;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> layout;
  layout.push_back({"embedding", {vocab_size, d}});
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    for (std::size_t h = 0; h < config.n_heads; ++h) {
      const std::string head = "head" + std::to_string(h) + ".";
      layout.push_back({layer_name(l, head + "query"), {d, dk}});
      layout.push_back({layer_name(l, head + "key"), {d, dk}});
      layout.push_back({layer_name(l, head + "value"), {d, dk}});
    }
    layout.push_back({layer_name(l, "attn_out.weight"), {d, d}});
    layout.push_back({layer_name(l, "attn_out.bias"), {1, d}});
    if (config.residual_norm) {
      layout.push_back({layer_name(l, "norm1.gain"), {1, d}});
      layout.push_back({layer_name(l, "norm1.bias"), {1, d}});
    }
    layout.push_back({layer_name(l, "ff1.weight"), {d, config.d_ff}});
    layout.push_back({layer_name(l, "ff1.bias"), {1, config.d_ff}});
    layout.push_back({layer_name(l, "ff2.weight"), {config.d_ff, d}});
    layout.push_back({layer_name(l, "ff2.bias"), {1, d}});
    if (config.residual_norm) {
      layout.push_back({layer_name(l, "norm2.gain"), {1, d}});
      layout.push_back({layer_name(l, "norm2.bias"), {1, d}});
    }
  }
  layout.push_back({"head.weight", {d, 1}});
  layout.push_back({"head.bias", {1, 1}});
  return layout;
}

BanModel::BanModel(BanConfig config, Vocabulary vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  positions_ = positional_encoding(config_.max_len, config_.d_model);
  Rng rng(derive_seed(config_.seed, 0x1417));
  for (const auto& [name, shape] : parameter_layout(config_, vocab_.size())) {
    const auto [rows, cols] = shape;
    const auto ends_with = [&](std::string_view suffix) {
      return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    Matrix value;
    if (ends_with(".gain")) {
      value = Matrix(rows, cols, 1.0);
    } else if (ends_with("norm1.bias") || ends_with("norm2.bias") || name == "head.bias") {
      value = Matrix(rows, cols, 0.0);
    } else {
      // Fan-in of a weight is its row count; a bias shares the fan-in of the
      // weight it follows; an embedding row is selected by a one-hot input.
      std::size_t fan_in = rows;
      if (name == "embedding") {
        fan_in = 1;
      } else if (ends_with(".bias")) {
        fan_in = params_.back().value.rows();
      }
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      value = Matrix::uniform(rows, cols, -bound, bound, rng);
    }
    params_.push_back({name, std::move(value)});
  }
}

BanModel::BanModel(BanConfig config, Vocabulary vocab, std::vector<NamedParam> params)
    : config_(std::move(config)), vocab_(std::move(vocab)), params_(std::move(params)) {
  config_.validate();
  positions_ = positional_encoding(config_.max_len, config_.d_model);
  const auto layout = parameter_layout(config_, vocab_.size());
  if (layout.size() != params_.size()) {
    throw ValidationError("model parameters do not match the configured architecture");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape] = layout[i];
    if (params_[i].name != name || params_[i].value.rows() != shape.first ||
        params_[i].value.cols() != shape.second) {
      throw ValidationError("parameter '" + params_[i].name + "' does not match expected '" + name + "'");
    }
  }
}

Matrix& BanModel::param(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ValidationError("no parameter named '" + std::string(name) + "'");
}

std::size_t BanModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

TokenSequence BanModel::encode(std::string_view text) const {
  return mcdban::encode(text, vocab_, config_.max_len);
}

void BanModel::check_sequence(const TokenSequence& seq) const {
  if (seq.ids.size() != config_.max_len) {
    throw ValidationError("sequence length " + std::to_string(seq.ids.size()) +
                          " does not match model max_len " + std::to_string(config_.max_len));
  }
  for (const int id : seq.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
      throw ValidationError("token id " + std::to_string(id) + " outside the model vocabulary");
    }
  }
}

std::vector<Var> BanModel::bind_constants(Tape& tape) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  vars.push_back(Var{});  // embedding rows are gathered directly
  for (std::size_t i = 1; i < params_.size(); ++i) vars.push_back(tape.constant(params_[i].value));
  return vars;
}

Var BanModel::build(Tape& tape, std::span<const Var> param_vars, const TokenSequence& seq,
                    ForwardMode mode, Rng* rng, std::vector<Matrix>* attention,
                    std::optional<Var> embedded) const {
  check_sequence(seq);
  if (param_vars.size() != params_.size()) throw ValidationError("build: wrong parameter count");
  const bool dropout = mode != ForwardMode::deterministic && config_.dropout_rate > 0.0;
  if (dropout && rng == nullptr) throw ValidationError("stochastic forward pass needs an rng");

  const std::size_t len = config_.max_len;
  const std::size_t d = config_.d_model;
  const std::size_t dk = d / config_.n_heads;
  const bool masked = config_.mask_padding && seq.true_length > 0;

  auto drop = [&](Var x) {
    if (!dropout) return x;
    const Matrix& v = tape.value(x);
    return tape.mul_const(x, dropout_mask(v.rows(), v.cols(), config_.dropout_rate, *rng));
  };

  std::size_t cursor = 0;
  auto next = [&] { return param_vars[cursor++]; };

  const Var embedding = next();
  Var x;
  if (embedded) {
    x = *embedded;
  } else if (embedding.index == Var{}.index) {
    const Matrix& table = params_.front().value;
    Matrix rows(len, d);
    for (std::size_t i = 0; i < len; ++i) {
      const auto src = table.row(static_cast<std::size_t>(seq.ids[i]));
      std::copy(src.begin(), src.end(), rows.row(i).begin());
    }
    x = tape.constant(std::move(rows));
  } else {
    x = tape.gather_rows(embedding, seq.ids);
  }
  x = drop(tape.add_const(x, positions_));

  Matrix key_mask;
  if (masked) {
    key_mask = Matrix(len, len);
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = seq.true_length; j < len; ++j) key_mask(i, j) = kMaskedScore;
    }
  }

  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    std::vector<Var> heads;
    for (std::size_t h = 0; h < config_.n_heads; ++h) {
      const Var wq = next();
      const Var wk = next();
      const Var wv = next();
      const Var q = tape.matmul(x, wq);
      const Var k = tape.matmul(x, wk);
      const Var v = tape.matmul(x, wv);
      Var scores = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_dk);
      if (masked) scores = tape.add_const(scores, key_mask);
      const Var weights = tape.softmax_rows(scores);
      if (attention != nullptr) attention->push_back(tape.value(weights));
      heads.push_back(tape.matmul(weights, v));
    }
    const Var wo = next();
    const Var bo = next();
    const Var merged = heads.size() == 1 ? heads.front() : tape.concat_cols(heads);
    const Var attn = drop(tape.add_row(tape.matmul(merged, wo), bo));
    if (config_.residual_norm) {
      const Var g1 = next();
      const Var b1 = next();
      x = tape.layer_norm(tape.add(x, attn), g1, b1);
    } else {
      x = attn;
    }
    const Var w1 = next();
    const Var c1 = next();
    const Var w2 = next();
    const Var c2 = next();
    const Var hidden = drop(tape.relu(tape.add_row(tape.matmul(x, w1), c1)));
    const Var ff = tape.add_row(tape.matmul(hidden, w2), c2);
    if (config_.residual_norm) {
      const Var g2 = next();
      const Var b2 = next();
      x = tape.layer_norm(tape.add(x, ff), g2, b2);
    } else {
      x = ff;
    }
  }

  std::vector<double> pool(len, 1.0 / static_cast<double>(len));
  if (masked) {
    for (std::size_t i = 0; i < len; ++i) {
      pool[i] = i < seq.true_length ? 1.0 / static_cast<double>(seq.true_length) : 0.0;
    }
  }
  const Var pooled = tape.weighted_row_sum(x, std::move(pool));
  const Var head_w = next();
  const Var head_b = next();
  return tape.add_row(tape.matmul(pooled, head_w), head_b);
}

Var BanModel::build_logit(Tape& tape, std::span<const Var> param_vars, const TokenSequence& seq,
                          ForwardMode mode, Rng* rng) const {
  return build(tape, param_vars, seq, mode, rng, nullptr);
}

Var BanModel::build_loss(Tape& tape, std::span<const Var> param_vars,
                         std::span<const TokenSequence> batch, std::span<const int> labels,
                         ForwardMode mode, Rng* rng) const {
  if (batch.empty() || batch.size() != labels.size()) {
    throw ValidationError("build_loss: batch and labels must be non-empty and aligned");
  }
  // One gather for the whole batch keeps the embedding gradient a single
  // dense accumulation instead of one per instance.
  std::optional<Var> all_rows;
  const std::size_t len = config_.max_len;
  if (!param_vars.empty() && param_vars.front().index != Var{}.index) {
    std::vector<int> ids;
    ids.reserve(batch.size() * len);
    for (const auto& seq : batch) {
      check_sequence(seq);
      ids.insert(ids.end(), seq.ids.begin(), seq.ids.end());
    }
    all_rows = tape.gather_rows(param_vars.front(), std::move(ids));
  }
  std::vector<Var> losses;
  losses.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::optional<Var> rows;
    if (all_rows) rows = tape.slice_rows(*all_rows, i * len, len);
    losses.push_back(tape.bce_with_logits(build(tape, param_vars, batch[i], mode, rng, nullptr, rows), labels[i]));
  }
  return tape.mean_scalars(losses);
}

double BanModel::score(const TokenSequence& seq, ForwardMode mode, Rng* rng) const {
  Tape tape;
  const auto vars = bind_constants(tape);
  return sigmoid(tape.value(build(tape, vars, seq, mode, rng, nullptr))[0]);
}

std::vector<double> BanModel::forward(std::span<const TokenSequence> batch, ForwardMode mode,
                                      Rng* rng) const {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& seq : batch) out.push_back(score(seq, mode, rng));
  return out;
}

std::vector<Matrix> BanModel::attention_weights(const TokenSequence& seq) const {
  Tape tape;
  const auto vars = bind_constants(tape);
  std::vector<Matrix> weights;
  build(tape, vars, seq, ForwardMode::deterministic, nullptr, &weights);
  return weights;
}

std::string BanModel::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::string cfg = nlohmann::json(config_).dump();
  feed(cfg.data(), cfg.size());
  for (const auto& tok : vocab_.tokens()) feed(tok.data(), tok.size() + 1);
  for (const auto& p : params_) {
    feed(p.name.data(), p.name.size());
    feed(p.value.values().data(), p.value.size() * sizeof(double));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool EarlyStopping::update(double metric) {
  ++epochs_;
  if (metric > best_) {
    best_ = metric;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

void to_json(nlohmann::json& j, const TrainingHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_accuracy", e.train_accuracy},
                      {"val_metric", e.val_metric},
                      {"best_metric", e.best_metric},
                      {"threshold", e.threshold}});
  }
  j = nlohmann::json{{"epochs", epochs},
                     {"best_epoch", h.best_epoch},
                     {"batch_size", h.batch_size},
                     {"stopped_early", h.stopped_early}};
}

std::vector<double> validation_scores(const BanModel& model, std::span<const TokenSequence> seqs,
                                      std::span<const std::uint64_t> ids, std::size_t epoch) {
  const auto& cfg = model.config();
  if (!cfg.adaptive_threshold) return model.forward(seqs, ForwardMode::deterministic, nullptr);
  std::vector<double> out;
  out.reserve(seqs.size());
  const std::uint64_t epoch_seed = derive_seed(cfg.seed, 0x7a11d, epoch);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    Rng rng(derive_seed(epoch_seed, ids[i]));
    double total = 0.0;
    for (std::size_t s = 0; s < cfg.val_mc_samples; ++s) {
      total += model.score(seqs[i], ForwardMode::stochastic, &rng);
    }
    out.push_back(total / static_cast<double>(cfg.val_mc_samples));
  }
  return out;
}

TrainResult train(const LabeledCorpus& train_set, const LabeledCorpus& val_set, const Vocabulary& vocab,
                  const BanConfig& config) {
  config.validate();
  if (train_set.empty()) throw ValidationError("train: empty training split");
  if (val_set.empty()) throw ValidationError("train: empty validation split");

  BanModel model(config, vocab);
  const auto train_seqs = encode_all(train_set, vocab, config.max_len);
  const auto train_labels = train_set.labels();
  const auto val_seqs = encode_all(val_set, vocab, config.max_len);
  const auto val_labels = val_set.labels();
  const auto val_ids = val_set.ids();

  Rng order_rng(derive_seed(config.seed, 0x0bde5));
  Rng dropout_rng(derive_seed(config.seed, 0xd5095));
  AdamaxState optimizer;
  optimizer.lr = config.lr;
  EarlyStopping stopper(config.patience);

  TrainResult result;
  result.history.batch_size = config.batch_size;
  std::vector<NamedParam> best_params = model.params();
  double best_threshold = 0.5;

  std::vector<std::size_t> order(train_seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<TokenSequence> batch;
      std::vector<int> labels;
      for (std::size_t k = start; k < stop; ++k) {
        batch.push_back(train_seqs[order[k]]);
        labels.push_back(train_labels[order[k]]);
      }

      Tape tape;
      std::vector<Var> vars;
      for (const auto& p : model.params()) vars.push_back(tape.leaf(p.value));
      const Var loss = model.build_loss(tape, vars, batch, labels, ForwardMode::train, &dropout_rng);
      const double loss_value = tape.value(loss)[0];
      if (!std::isfinite(loss_value)) {
        throw NumericalError("training diverged: loss is " + std::to_string(loss_value) + " at epoch " +
                             std::to_string(epoch) + ", batch starting at " + std::to_string(start));
      }
      tape.backward(loss);

      std::vector<Matrix*> targets;
      std::vector<Matrix> grads;
      for (std::size_t i = 0; i < vars.size(); ++i) {
        targets.push_back(&model.params()[i].value);
        grads.push_back(tape.grad(vars[i]));
      }
      adamax_step(targets, grads, optimizer);
      loss_total += loss_value * static_cast<double>(stop - start);
    }

    const auto scores = validation_scores(model, val_seqs, val_ids, epoch);
    ThresholdChoice choice;
    if (config.adaptive_threshold) {
      choice = search_threshold(scores, val_labels, config.val_metric);
    } else {
      choice = {0.5, metric_report(scores, val_labels, 0.5).value(config.val_metric)};
    }
    const auto train_scores = model.forward(train_seqs, ForwardMode::deterministic, nullptr);
    const double train_accuracy = metric_report(train_scores, train_labels, choice.threshold).accuracy;
    if (stopper.update(choice.metric)) {
      best_params = model.params();
      best_threshold = choice.threshold;
    }
    result.history.epochs.push_back({epoch, loss_total / static_cast<double>(order.size()), train_accuracy,
                                     choice.metric, stopper.best(), choice.threshold});
    if (stopper.should_stop()) {
      result.history.stopped_early = true;
      break;
    }
  }

  result.history.best_epoch = stopper.best_epoch();
  result.checkpoint.model = BanModel(config, vocab, std::move(best_params));
  result.checkpoint.best_metric = stopper.best();
  result.checkpoint.threshold = best_threshold;
  return result;
}

}  // namespace mcdban
