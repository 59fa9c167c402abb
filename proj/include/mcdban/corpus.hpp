#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace mcdban {

struct LabeledExample {
  std::uint64_t id = 0;
  std::string text;
  int label = 0;  // 0 = negative (non-hate), 1 = positive (hate)
};

struct LabeledCorpus {
  std::vector<LabeledExample> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  std::array<std::size_t, 2> class_counts() const;
  std::vector<int> labels() const;
  std::vector<std::uint64_t> ids() const;
};

struct ColumnSpec {
  std::string text_column = "text";
  std::string label_column = "label";
  // Optional integer id column; row index (0-based) is used when empty.
  std::string id_column;
  char delimiter = ',';
};

LabeledCorpus load_corpus(const std::filesystem::path& path, const ColumnSpec& spec = {});

// Downsamples the majority class so both classes have min(count0, count1)
// examples, then shuffles. Deterministic in seed.
LabeledCorpus balance(const LabeledCorpus& corpus, std::uint64_t seed);

struct CorpusSplits {
  LabeledCorpus train;
  LabeledCorpus val;
  LabeledCorpus test;
};

// Stratified split. Per class c: val gets round(val_fraction * n_c), test gets
// round(test_fraction * n_c), train keeps the remainder. Each split keeps the
// original corpus order.
CorpusSplits split(const LabeledCorpus& corpus, double val_fraction, double test_fraction,
                   std::uint64_t seed);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;

  Vocabulary() = default;
  // Tokens in id order, starting at id 2.
  explicit Vocabulary(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  // Total id count, reserved ids included.
  std::size_t size() const { return tokens_.size() + 2; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Keeps tokens with frequency >= min_freq, most frequent first (ties broken
// lexicographically), at most max_size of them.
Vocabulary build_vocab(const LabeledCorpus& train, std::size_t min_freq = 1,
                       std::size_t max_size = SIZE_MAX);

// Lowercases ASCII, splits on Unicode whitespace and strips leading/trailing
// ASCII punctuation from each piece. Pieces that are pure punctuation vanish.
std::vector<std::string> tokenize(std::string_view text);

struct TokenSequence {
  std::vector<int> ids;
  std::size_t true_length = 0;
};

TokenSequence encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len);
std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab);
std::vector<TokenSequence> encode_all(const LabeledCorpus& corpus, const Vocabulary& vocab,
                                      std::size_t max_len);

// Which original ids landed in which split, for exact reproduction.
struct CorpusManifest {
  std::string source;
  std::uint64_t seed = 0;
  bool balanced = false;
  double val_fraction = 0.0;
  double test_fraction = 0.0;
  std::vector<std::uint64_t> train_ids;
  std::vector<std::uint64_t> val_ids;
  std::vector<std::uint64_t> test_ids;
};

CorpusManifest make_manifest(const CorpusSplits& splits, std::string source, std::uint64_t seed,
                             bool balanced, double val_fraction, double test_fraction);
void to_json(nlohmann::json& j, const CorpusManifest& m);
void from_json(const nlohmann::json& j, CorpusManifest& m);

// Selects examples by id, in the order the ids are listed.
LabeledCorpus select_ids(const LabeledCorpus& corpus, const std::vector<std::uint64_t>& ids);

}  // namespace mcdban
