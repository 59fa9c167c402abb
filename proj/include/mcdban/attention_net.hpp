#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcdban/corpus.hpp"
#include "mcdban/matrix.hpp"
#include "mcdban/optim.hpp"
#include "mcdban/rng.hpp"
#include "mcdban/tape.hpp"
#include "mcdban/threshold.hpp"

namespace mcdban {

// Architecture and training settings. Defaults follow the smallest settings
// of the published hyperparameter grid where one exists.
struct BanConfig {
  std::size_t d_model = 32;
  std::size_t n_heads = 1;
  std::size_t n_layers = 1;
  std::size_t d_ff = 64;
  std::size_t max_len = 48;
  double dropout_rate = 0.1;
  double lr = 0.001;
  std::size_t max_epochs = 30;
  std::size_t patience = 10;
  double val_fraction = 0.1;
  bool adaptive_threshold = false;
  std::uint64_t seed = 42;
  std::size_t batch_size = 32;
  // MC passes per validation instance when adaptive_threshold is on.
  std::size_t val_mc_samples = 20;
  Metric val_metric = Metric::accuracy;
  // Add & normalize around the attention and feed-forward blocks.
  bool residual_norm = true;
  // Exclude padding positions from attention keys and from pooling.
  bool mask_padding = false;
  // Only "mean" is supported.
  std::string pooling = "mean";

  void validate() const;
};

void to_json(nlohmann::json& j, const BanConfig& c);
// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, BanConfig& c);

// Sinusoidal position table: PE[p, 2i] = sin(p / 10000^(2i/d)),
// PE[p, 2i+1] = cos(p / 10000^(2i/d)). d must be even.
Matrix positional_encoding(std::size_t max_len, std::size_t d_model);

// softmax(Q K^T / sqrt(d_k)) V, with d_k = Q.cols().
Matrix attention_head(const Matrix& q, const Matrix& k, const Matrix& v);

struct NamedParam {
  std::string name;
  Matrix value;
};

enum class ForwardMode { train, stochastic, deterministic };

class BanModel {
 public:
  BanModel() = default;
  // Parameters drawn from config.seed: weights and biases uniform in
  // +-1/sqrt(fan_in), layer-norm gains 1 and offsets 0, head bias 0.
  BanModel(BanConfig config, Vocabulary vocab);
  // Wraps existing parameters; names and shapes must match the layout.
  BanModel(BanConfig config, Vocabulary vocab, std::vector<NamedParam> params);

  const BanConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::vector<NamedParam>& params() { return params_; }
  const std::vector<NamedParam>& params() const { return params_; }
  Matrix& param(std::string_view name);
  std::size_t parameter_count() const;

  TokenSequence encode(std::string_view text) const;

  // Builds the logit (1 x 1) of one sequence on `tape`. `param_vars` holds one
  // Var per parameter in params() order; an invalid Var for the embedding
  // gathers rows straight from the stored table instead. In train and
  // stochastic modes the dropout masks are drawn from *rng; deterministic
  // mode ignores rng.
  Var build_logit(Tape& tape, std::span<const Var> param_vars, const TokenSequence& seq,
                  ForwardMode mode, Rng* rng) const;
  // Mean binary cross-entropy over a batch.
  Var build_loss(Tape& tape, std::span<const Var> param_vars, std::span<const TokenSequence> batch,
                 std::span<const int> labels, ForwardMode mode, Rng* rng) const;

  double score(const TokenSequence& seq, ForwardMode mode, Rng* rng) const;
  std::vector<double> forward(std::span<const TokenSequence> batch, ForwardMode mode, Rng* rng) const;

  // Attention weight matrices (one per layer and head) of a deterministic pass.
  std::vector<Matrix> attention_weights(const TokenSequence& seq) const;

  // FNV-1a over the configuration and raw parameter bits.
  std::string fingerprint() const;

 private:
  void check_sequence(const TokenSequence& seq) const;
  std::vector<Var> bind_constants(Tape& tape) const;
  Var build(Tape& tape, std::span<const Var> param_vars, const TokenSequence& seq, ForwardMode mode,
            Rng* rng, std::vector<Matrix>* attention, std::optional<Var> embedded = std::nullopt) const;

  BanConfig config_;
  Vocabulary vocab_;
  std::vector<NamedParam> params_;
  Matrix positions_;
};

// Parameter names and shapes implied by a configuration and vocabulary size.
std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> parameter_layout(
    const BanConfig& config, std::size_t vocab_size);

struct ModelCheckpoint {
  static constexpr int kFormatVersion = 1;

  BanModel model;
  double best_metric = 0.0;
  double threshold = 0.5;
};

// Tracks the best validation metric; stops once `patience` consecutive
// epochs fail to improve on it strictly.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Records one epoch's metric; returns true when it is a new best.
  bool update(double metric);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t epochs() const { return epochs_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  // Deterministic accuracy on the training split after the epoch.
  double train_accuracy = 0.0;
  double val_metric = 0.0;
  double best_metric = 0.0;  // best val_metric so far
  double threshold = 0.5;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t batch_size = 0;
  bool stopped_early = false;
};

void to_json(nlohmann::json& j, const TrainingHistory& h);

struct TrainResult {
  ModelCheckpoint checkpoint;
  TrainingHistory history;
};

// Scores used for model selection: MC means over config.val_mc_samples passes
// when adaptive thresholding is on, deterministic scores otherwise.
std::vector<double> validation_scores(const BanModel& model, std::span<const TokenSequence> seqs,
                                      std::span<const std::uint64_t> ids, std::size_t epoch);

// Mini-batch Adamax on mean BCE with early stopping on the validation metric.
// Throws NumericalError if the loss becomes non-finite.
TrainResult train(const LabeledCorpus& train_set, const LabeledCorpus& val_set, const Vocabulary& vocab,
                  const BanConfig& config);

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const ModelCheckpoint& checkpoint);
ModelCheckpoint parse_checkpoint(std::string_view text);

}  // namespace mcdban
