#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "mcdban/corpus.hpp"
#include "mcdban/csv.hpp"
#include "mcdban/error.hpp"
#include "mcdban/rng.hpp"
#include "test_util.hpp"

using namespace mcdban;

namespace {

LabeledCorpus make_corpus(std::size_t n0, std::size_t n1) {
  LabeledCorpus c;
  std::uint64_t id = 0;
  for (std::size_t i = 0; i < n0; ++i) c.examples.push_back({id++, "neg text " + std::to_string(i), 0});
  for (std::size_t i = 0; i < n1; ++i) c.examples.push_back({id++, "pos text " + std::to_string(i), 1});
  return c;
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("csv parsing handles quotes, embedded newlines and BOM") {
  const auto t = parse_csv("\xEF\xBB\xBFtext,label\n\"hello, world\",0\n\"say \"\"hi\"\"\nthere\",1\n\n");
  REQUIRE(t.header == std::vector<std::string>{"text", "label"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][0] == "hello, world");
  CHECK(t.rows[1][0] == "say \"hi\"\nthere");
  CHECK(t.lines == std::vector<std::size_t>{2, 3});
  CHECK_THROWS_AS(parse_csv("a,b\n\"open,1\n"), ValidationError);
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("plain") == "plain");
}

TEST_CASE("load_corpus reads rows and validates") {
  TempDir dir;
  const auto ok = dir.write("ok.csv", "text,label\nhello,0\nbad,1\n");
  const auto c = load_corpus(ok);
  CHECK(c.size() == 2);
  CHECK(c.class_counts() == std::array<std::size_t, 2>{1, 1});
  CHECK(c.examples[1].id == 1);
  CHECK(c.examples[1].text == "bad");

  CHECK(error_of([&] { load_corpus(dir.write("empty.csv", "")); }).find("empty corpus") != std::string::npos);
  CHECK(error_of([&] { load_corpus(dir.write("hdr.csv", "text,label\n")); }).find("empty corpus") !=
        std::string::npos);
  const auto bad_label = error_of([&] { load_corpus(dir.write("l.csv", "text,label\na,0\nb,2\n")); });
  CHECK(bad_label.find("line 3") != std::string::npos);
  CHECK(error_of([&] { load_corpus(dir.path() / "missing.csv"); }).find("not found") != std::string::npos);
  CHECK(error_of([&] { load_corpus(dir.write("f.csv", "text,label\na,0,extra\n")); }).find("line 2") !=
        std::string::npos);
  CHECK_THROWS_AS(load_corpus(dir.write("nocol.csv", "body,label\na,0\n")), ValidationError);
  CHECK_THROWS_AS(load_corpus(dir.write("blank.csv", "text,label\n   ,0\n")), ValidationError);
}

TEST_CASE("load_corpus honours column spec and id column") {
  TempDir dir;
  const auto p = dir.write("c.tsv", "doc\tid\ty\nfirst\t17\t1\nsecond\t4\t0\n");
  ColumnSpec spec{"doc", "y", "id", '\t'};
  const auto c = load_corpus(p, spec);
  REQUIRE(c.size() == 2);
  CHECK(c.examples[0].id == 17);
  CHECK(c.examples[1].label == 0);
  CHECK_THROWS_AS(load_corpus(dir.write("dup.tsv", "doc\tid\ty\na\t1\t1\nb\t1\t0\n"), spec), ValidationError);
}

TEST_CASE("balance downsamples the majority class deterministically") {
  const auto c = make_corpus(10, 4);
  const auto b = balance(c, 3);
  CHECK(b.class_counts() == std::array<std::size_t, 2>{4, 4});
  const auto again = balance(c, 3);
  CHECK(b.ids() == again.ids());
  // minority examples all survive, majority ones come from the original set
  const auto kept_ids = b.ids();
  std::set<std::uint64_t> ids(kept_ids.begin(), kept_ids.end());
  for (std::uint64_t i = 10; i < 14; ++i) CHECK(ids.contains(i));

  const auto even = make_corpus(5, 5);
  auto kept = balance(even, 9).ids();
  std::sort(kept.begin(), kept.end());
  CHECK(kept == even.ids());

  CHECK_THROWS_AS(balance(make_corpus(3, 0), 1), ValidationError);
}

TEST_CASE("balance gives equal class counts for random inputs") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n0 = 1 + rng.below(30);
    const auto n1 = 1 + rng.below(30);
    const auto b = balance(make_corpus(n0, n1), trial);
    CHECK(b.class_counts()[0] == b.class_counts()[1]);
    CHECK(b.size() == 2 * std::min(n0, n1));
  }
}

TEST_CASE("split sizes and stratification") {
  const auto c = make_corpus(50, 50);
  const auto s = split(c, 0.1, 0.2, 1);
  CHECK(s.train.size() == 70);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 20);
  CHECK(s.val.class_counts() == std::array<std::size_t, 2>{5, 5});

  std::set<std::uint64_t> seen;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (auto id : part->ids()) CHECK(seen.insert(id).second);
  }
  CHECK(seen.size() == 100);

  CHECK_THROWS_AS(split(c, 0.95, 0.1, 1), ValidationError);
  CHECK_THROWS_AS(split(c, 0.0, 0.1, 1), ValidationError);
  CHECK_THROWS_AS(split(make_corpus(2, 2), 0.1, 0.0, 1), ValidationError);
}

TEST_CASE("split per-class proportions stay within one instance") {
  Rng rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n0 = 20 + rng.below(80);
    const auto n1 = 20 + rng.below(80);
    const double val = 0.05 + 0.1 * rng.uniform();
    const double test = 0.05 + 0.2 * rng.uniform();
    const auto s = split(make_corpus(n0, n1), val, test, trial);
    const std::array<std::size_t, 2> n{n0, n1};
    for (int cls = 0; cls < 2; ++cls) {
      CHECK(std::abs(static_cast<double>(s.val.class_counts()[cls]) - val * n[cls]) <= 1.0);
      CHECK(std::abs(static_cast<double>(s.test.class_counts()[cls]) - test * n[cls]) <= 1.0);
    }
  }
}

TEST_CASE("tokenize lowercases and strips punctuation") {
  CHECK(tokenize("Hello, World!") == std::vector<std::string>{"hello", "world"});
  CHECK(tokenize("  a\tb\nc  ") == std::vector<std::string>{"a", "b", "c"});
  CHECK(tokenize("... -- !!") .empty());
  CHECK(tokenize("don't") == std::vector<std::string>{"don't"});
  // no-break space (U+00A0) separates tokens
  CHECK(tokenize("a\xC2\xA0" "b") == std::vector<std::string>{"a", "b"});
  CHECK(tokenize("ČAS") == std::vector<std::string>{"Čas"});
}

TEST_CASE("build_vocab ordering and limits") {
  LabeledCorpus c;
  c.examples.push_back({0, "a a b", 0});
  const auto v = build_vocab(c);
  REQUIRE(v.tokens() == std::vector<std::string>{"a", "b"});
  CHECK(v.id("a") == 2);
  CHECK(v.id("b") == 3);
  CHECK(v.id("zzz") == Vocabulary::kUnknown);
  CHECK(v.size() == 4);
  CHECK(build_vocab(c, 2).tokens() == std::vector<std::string>{"a"});
  CHECK(build_vocab(c, 1, 1).tokens() == std::vector<std::string>{"a"});

  LabeledCorpus ties;
  ties.examples.push_back({0, "z y x", 0});
  CHECK(build_vocab(ties).tokens() == std::vector<std::string>{"x", "y", "z"});
}

TEST_CASE("vocabulary ignores validation and test content") {
  const auto c = make_corpus(30, 30);
  auto s = split(c, 0.1, 0.1, 2);
  const auto before = build_vocab(s.train).tokens();
  for (auto& ex : s.val.examples) ex.text = "leak leak leak";
  for (auto& ex : s.test.examples) ex.text = "other words";
  CHECK(build_vocab(s.train).tokens() == before);
}

TEST_CASE("encode pads, truncates and maps unknowns") {
  const Vocabulary v({"a", "b"});
  auto s = encode("A b", v, 4);
  CHECK(s.ids == std::vector<int>{2, 3, 0, 0});
  CHECK(s.true_length == 2);
  s = encode("a a a", v, 2);
  CHECK(s.ids == std::vector<int>{2, 2});
  CHECK(s.true_length == 2);
  s = encode("zzz", v, 3);
  CHECK(s.ids == std::vector<int>{1, 0, 0});
  CHECK(s.true_length == 1);
  CHECK_THROWS_AS(encode("a", v, 0), ValidationError);
}

TEST_CASE("decode round-trips kept tokens") {
  Rng rng(12);
  const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta", "eps"};
  const Vocabulary v(words);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> toks;
    std::string text;
    const auto n = rng.below(12);
    for (std::size_t i = 0; i < n; ++i) {
      std::string w = words[rng.below(words.size())];
      toks.push_back(w);
      if (rng.bernoulli(0.5)) w[0] = static_cast<char>(std::toupper(w[0]));
      text += (i ? " " : "") + w;
    }
    const std::size_t max_len = 1 + rng.below(10);
    const auto seq = encode(text, v, max_len);
    CHECK(seq.ids.size() == max_len);
    for (std::size_t i = seq.true_length; i < max_len; ++i) CHECK(seq.ids[i] == 0);
    toks.resize(std::min(toks.size(), max_len));
    CHECK(decode(seq, v) == toks);
  }
}

TEST_CASE("manifest round-trip and selection") {
  const auto c = make_corpus(20, 20);
  const auto s = split(c, 0.1, 0.1, 4);
  const auto m = make_manifest(s, "corpus.csv", 4, true, 0.1, 0.1);
  nlohmann::json j = m;
  const auto back = j.get<CorpusManifest>();
  CHECK(back.train_ids == m.train_ids);
  CHECK(back.test_ids == m.test_ids);
  CHECK(select_ids(c, m.val_ids).ids() == s.val.ids());
  CHECK_THROWS_AS(select_ids(c, {999}), ValidationError);
}
