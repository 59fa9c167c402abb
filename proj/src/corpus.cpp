#include "mcdban/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <unordered_set>

#include "mcdban/csv.hpp"
#include "mcdban/error.hpp"
#include "mcdban/rng.hpp"

namespace mcdban {

namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Length in bytes of the whitespace code point at s[i], or 0.
std::size_t whitespace_length(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) return (b0 == ' ' || (b0 >= 0x09 && b0 <= 0x0D)) ? 1 : 0;
  auto byte = [&](std::size_t k) -> unsigned {
    return i + k < s.size() ? static_cast<unsigned char>(s[i + k]) : 0u;
  };
  if ((b0 & 0xE0) == 0xC0) {
    const unsigned cp = ((b0 & 0x1Fu) << 6) | (byte(1) & 0x3Fu);
    return (cp == 0x85 || cp == 0xA0) ? 2 : 0;
  }
  if ((b0 & 0xF0) == 0xE0) {
    const unsigned cp = ((b0 & 0x0Fu) << 12) | ((byte(1) & 0x3Fu) << 6) | (byte(2) & 0x3Fu);
    const bool ws = cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
                    cp == 0x2029 || cp == 0x202F || cp == 0x205F || cp == 0x3000;
    return ws ? 3 : 0;
  }
  return 0;
}

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

void append_token(std::string_view piece, std::vector<std::string>& out) {
  while (!piece.empty() && is_ascii_punct(piece.front())) piece.remove_prefix(1);
  while (!piece.empty() && is_ascii_punct(piece.back())) piece.remove_suffix(1);
  if (piece.empty()) return;
  std::string token(piece);
  for (char& c : token) {
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(c));
  }
  out.push_back(std::move(token));
}

int parse_label(std::string_view raw, std::size_t line) {
  const auto v = trim(raw);
  if (v == "0") return 0;
  if (v == "1") return 1;
  throw ValidationError("row at line " + std::to_string(line) + ": label '" + std::string(raw) +
                        "' is not 0 or 1");
}

std::uint64_t parse_id(std::string_view raw, std::size_t line) {
  const auto v = trim(raw);
  std::uint64_t out = 0;
  if (v.empty()) throw ValidationError("row at line " + std::to_string(line) + ": empty id");
  for (const char c : v) {
    if (c < '0' || c > '9') {
      throw ValidationError("row at line " + std::to_string(line) + ": id '" + std::string(raw) +
                            "' is not a non-negative integer");
    }
    out = out * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return out;
}

}  // namespace

std::array<std::size_t, 2> LabeledCorpus::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& ex : examples) ++counts[static_cast<std::size_t>(ex.label)];
  return counts;
}

std::vector<int> LabeledCorpus::labels() const {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(ex.label);
  return out;
}

std::vector<std::uint64_t> LabeledCorpus::ids() const {
  std::vector<std::uint64_t> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(ex.id);
  return out;
}

LabeledCorpus load_corpus(const std::filesystem::path& path, const ColumnSpec& spec) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("corpus file not found: " + path.string());
  }
  const CsvTable table = read_csv(path, spec.delimiter);
  if (table.rows.empty()) throw ValidationError("empty corpus: " + path.string());

  const auto text_col = table.column(spec.text_column);
  const auto label_col = table.column(spec.label_column);
  if (text_col == std::string::npos) {
    throw ValidationError("corpus has no text column '" + spec.text_column + "'");
  }
  if (label_col == std::string::npos) {
    throw ValidationError("corpus has no label column '" + spec.label_column + "'");
  }
  std::size_t id_col = std::string::npos;
  if (!spec.id_column.empty()) {
    id_col = table.column(spec.id_column);
    if (id_col == std::string::npos) {
      throw ValidationError("corpus has no id column '" + spec.id_column + "'");
    }
  }

  LabeledCorpus corpus;
  corpus.examples.reserve(table.rows.size());
  std::unordered_set<std::uint64_t> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.lines[r];
    if (row.size() != table.header.size()) {
      throw ValidationError("unparsable row at line " + std::to_string(line) + ": expected " +
                            std::to_string(table.header.size()) + " fields, got " +
                            std::to_string(row.size()));
    }
    LabeledExample ex;
    ex.id = id_col == std::string::npos ? r : parse_id(row[id_col], line);
    ex.label = parse_label(row[label_col], line);
    const auto text = trim(row[text_col]);
    if (text.empty()) {
      throw ValidationError("row at line " + std::to_string(line) + ": empty text");
    }
    ex.text = std::string(text);
    if (!seen.insert(ex.id).second) {
      throw ValidationError("row at line " + std::to_string(line) + ": duplicate id " +
                            std::to_string(ex.id));
    }
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

LabeledCorpus balance(const LabeledCorpus& corpus, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    by_class[static_cast<std::size_t>(corpus.examples[i].label)].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw ValidationError("balance: both classes must be present");
  }
  const std::size_t keep = std::min(by_class[0].size(), by_class[1].size());
  Rng rng(derive_seed(seed, 0xba1a));
  for (auto& indices : by_class) {
    if (indices.size() > keep) {
      rng.shuffle(indices);
      indices.resize(keep);
    }
  }
  std::vector<std::size_t> chosen = by_class[0];
  chosen.insert(chosen.end(), by_class[1].begin(), by_class[1].end());
  std::sort(chosen.begin(), chosen.end());
  rng.shuffle(chosen);

  LabeledCorpus out;
  out.examples.reserve(chosen.size());
  for (const auto i : chosen) out.examples.push_back(corpus.examples[i]);
  return out;
}

CorpusSplits split(const LabeledCorpus& corpus, double val_fraction, double test_fraction,
                   std::uint64_t seed) {
  if (!(val_fraction > 0.0) || !(test_fraction >= 0.0) || !(val_fraction + test_fraction < 1.0)) {
    throw ValidationError("split: fractions must satisfy 0 < val, 0 <= test, val + test < 1");
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    by_class[static_cast<std::size_t>(corpus.examples[i].label)].push_back(i);
  }
  // 0 = train, 1 = val, 2 = test
  std::vector<int> assignment(corpus.size(), 0);
  for (std::size_t c = 0; c < 2; ++c) {
    auto& indices = by_class[c];
    Rng rng(derive_seed(seed, 0x5b117, c));
    rng.shuffle(indices);
    const auto n = static_cast<double>(indices.size());
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * n));
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * n));
    const std::size_t n_train = indices.size() - std::min(indices.size(), n_val + n_test);
    const std::string cls = std::to_string(c);
    if (n_val == 0) throw ValidationError("split: validation split receives no class-" + cls + " instances");
    if (test_fraction > 0.0 && n_test == 0) {
      throw ValidationError("split: test split receives no class-" + cls + " instances");
    }
    if (n_train == 0) throw ValidationError("split: train split receives no class-" + cls + " instances");
    for (std::size_t k = 0; k < n_val; ++k) assignment[indices[k]] = 1;
    for (std::size_t k = n_val; k < n_val + n_test; ++k) assignment[indices[k]] = 2;
  }
  CorpusSplits out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto& target = assignment[i] == 0 ? out.train : assignment[i] == 1 ? out.val : out.test;
    target.examples.push_back(corpus.examples[i]);
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i) + 2).second) {
      throw ValidationError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

const std::string& Vocabulary::token(int id) const {
  static const std::string pad = "<pad>";
  static const std::string unk = "<unk>";
  if (id == kPad) return pad;
  if (id < 2 || static_cast<std::size_t>(id - 2) >= tokens_.size()) return unk;
  return tokens_[static_cast<std::size_t>(id - 2)];
}

Vocabulary build_vocab(const LabeledCorpus& train, std::size_t min_freq, std::size_t max_size) {
  std::map<std::string, std::size_t> freq;
  for (const auto& ex : train.examples) {
    for (auto& tok : tokenize(ex.text)) ++freq[std::move(tok)];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : freq) {
    if (n >= min_freq) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (kept.size() > max_size) kept.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(std::move(tok));
  return Vocabulary(std::move(tokens));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t ws = whitespace_length(text, i);
    if (ws > 0) {
      append_token(text.substr(start, i - start), out);
      i += ws;
      start = i;
    } else {
      ++i;
    }
  }
  append_token(text.substr(start), out);
  return out;
}

TokenSequence encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw ValidationError("encode: max_len must be >= 1");
  TokenSequence seq;
  seq.ids.assign(max_len, Vocabulary::kPad);
  for (const auto& tok : tokenize(text)) {
    if (seq.true_length == max_len) break;
    seq.ids[seq.true_length++] = vocab.id(tok);
  }
  return seq;
}

std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < seq.true_length; ++i) out.push_back(vocab.token(seq.ids[i]));
  return out;
}

std::vector<TokenSequence> encode_all(const LabeledCorpus& corpus, const Vocabulary& vocab,
                                      std::size_t max_len) {
  std::vector<TokenSequence> out;
  out.reserve(corpus.size());
  for (const auto& ex : corpus.examples) out.push_back(encode(ex.text, vocab, max_len));
  return out;
}

CorpusManifest make_manifest(const CorpusSplits& splits, std::string source, std::uint64_t seed,
                             bool balanced, double val_fraction, double test_fraction) {
  CorpusManifest m;
  m.source = std::move(source);
  m.seed = seed;
  m.balanced = balanced;
  m.val_fraction = val_fraction;
  m.test_fraction = test_fraction;
  m.train_ids = splits.train.ids();
  m.val_ids = splits.val.ids();
  m.test_ids = splits.test.ids();
  return m;
}

void to_json(nlohmann::json& j, const CorpusManifest& m) {
  j = nlohmann::json{{"source", m.source},
                     {"seed", m.seed},
                     {"balanced", m.balanced},
                     {"val_fraction", m.val_fraction},
                     {"test_fraction", m.test_fraction},
                     {"train", m.train_ids},
                     {"val", m.val_ids},
                     {"test", m.test_ids}};
}

void from_json(const nlohmann::json& j, CorpusManifest& m) {
  j.at("source").get_to(m.source);
  j.at("seed").get_to(m.seed);
  j.at("balanced").get_to(m.balanced);
  j.at("val_fraction").get_to(m.val_fraction);
  j.at("test_fraction").get_to(m.test_fraction);
  j.at("train").get_to(m.train_ids);
  j.at("val").get_to(m.val_ids);
  j.at("test").get_to(m.test_ids);
}

LabeledCorpus select_ids(const LabeledCorpus& corpus, const std::vector<std::uint64_t>& ids) {
  std::unordered_map<std::uint64_t, std::size_t> where;
  for (std::size_t i = 0; i < corpus.size(); ++i) where.emplace(corpus.examples[i].id, i);
  LabeledCorpus out;
  out.examples.reserve(ids.size());
  for (const auto id : ids) {
    const auto it = where.find(id);
    if (it == where.end()) throw ValidationError("id " + std::to_string(id) + " not in corpus");
    out.examples.push_back(corpus.examples[it->second]);
  }
  return out;
}

}  // namespace mcdban
