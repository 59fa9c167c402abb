#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mcdban/error.hpp"
#include "mcdban/fixtures.hpp"
#include "mcdban/mcd.hpp"
#include "test_util.hpp"

using namespace mcdban;

namespace {

struct Setup {
  LabeledCorpus corpus;
  BanModel model;
};

Setup& setup() {
  static Setup s = [] {
    Setup out;
    TempDir dir;
    out.corpus = load_corpus(dir.write("c.csv", synthetic_corpus_csv(40, 9)));
    BanConfig c;
    c.d_model = 8;
    c.d_ff = 16;
    c.max_len = 12;
    c.dropout_rate = 0.2;
    c.seed = 4;
    out.model = BanModel(c, build_vocab(out.corpus));
    return out;
  }();
  return s;
}

double population_variance(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return v / static_cast<double>(xs.size());
}

}  // namespace

TEST_CASE("summary statistics") {
  const auto d = PredictionDistribution::from_samples(1, 1, {0.2, 0.4, 0.6});
  CHECK(d.mean == doctest::Approx(0.4));
  CHECK(d.variance == doctest::Approx(0.0266667).epsilon(1e-5));
  const std::vector<double> sorted = {0.1, 0.2, 0.8, 0.9};
  CHECK(quantile(sorted, 0.5) == doctest::Approx(0.5));
  CHECK(quantile(sorted, 0.0) == 0.1);
  CHECK(quantile(sorted, 1.0) == 0.9);
  const auto s = summarize(std::vector<double>{0.9, 0.1, 0.8, 0.2});
  CHECK(s.q50 == doctest::Approx(0.5));
  CHECK(s.min == 0.1);
  CHECK(s.max == 0.9);
  CHECK(s.variance == doctest::Approx(population_variance({0.9, 0.1, 0.8, 0.2})));
  CHECK_THROWS_AS(PredictionDistribution::from_samples(1, 0, {}), ValidationError);
}

TEST_CASE("variance matches an independent computation") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> xs(1 + rng.below(50));
    for (auto& x : xs) x = rng.uniform();
    const auto d = PredictionDistribution::from_samples(0, std::nullopt, xs);
    CHECK(d.variance >= 0.0);
    CHECK(d.variance == doctest::Approx(population_variance(xs)).epsilon(1e-10));
    CHECK(d.variance <= 0.25);
  }
}

TEST_CASE("default sample count") {
  CHECK(PredictOptions{}.T == 1000);
}

TEST_CASE("zero dropout gives zero variance") {
  auto& s = setup();
  BanConfig c = s.model.config();
  c.dropout_rate = 0.0;
  const BanModel m0(c, s.model.vocab(), s.model.params());
  const auto set = predict_dataset(m0, s.corpus, {.T = 20, .seed = 1});
  const auto det = m0.forward(encode_all(s.corpus, m0.vocab(), c.max_len), ForwardMode::deterministic, nullptr);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(set.items[i].variance == 0.0);
    CHECK(set.items[i].mean == doctest::Approx(det[i]).epsilon(1e-14));
  }
  const auto flagged = predict_dataset(s.model, s.corpus, {.T = 5, .seed = 1, .deterministic = true});
  for (const auto& d : flagged.items) CHECK(d.variance == 0.0);
}

TEST_CASE("predictions are reproducible and independent of batch composition") {
  auto& s = setup();
  const auto a = predict_dataset(s.model, s.corpus, {.T = 30, .seed = 77});
  const auto b = predict_dataset(s.model, s.corpus, {.T = 30, .seed = 77});
  CHECK(to_jsonl(a) == to_jsonl(b));
  const auto other = predict_dataset(s.model, s.corpus, {.T = 30, .seed = 78});
  CHECK(to_jsonl(a) != to_jsonl(other));

  LabeledCorpus reversed = s.corpus;
  std::reverse(reversed.examples.begin(), reversed.examples.end());
  const auto r = predict_dataset(s.model, reversed, {.T = 30, .seed = 77});
  LabeledCorpus shuffled = s.corpus;
  Rng rng(2);
  rng.shuffle(shuffled.examples);
  shuffled.examples.resize(15);
  const auto sh = predict_dataset(s.model, shuffled, {.T = 30, .seed = 77});
  auto find = [&](std::uint64_t id) {
    return *std::find_if(a.items.begin(), a.items.end(), [&](const auto& d) { return d.id == id; });
  };
  for (const auto& d : r.items) CHECK(d.samples == find(d.id).samples);
  for (const auto& d : sh.items) CHECK(d.samples == find(d.id).samples);

  const auto threaded = predict_dataset(s.model, s.corpus, {.T = 30, .seed = 77, .threads = 4});
  CHECK(to_jsonl(threaded) == to_jsonl(a));
}

TEST_CASE("samples stay in the unit interval and labels carry over") {
  auto& s = setup();
  const auto set = predict_dataset(s.model, s.corpus, {.T = 50, .seed = 5});
  REQUIRE(set.size() == s.corpus.size());
  CHECK(set.T() == 50);
  CHECK(set.labels() == s.corpus.labels());
  CHECK(set.ids() == s.corpus.ids());
  CHECK(set.model_fingerprint == s.model.fingerprint());
  for (const auto& d : set.items) {
    for (double x : d.samples) {
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }
    CHECK(d.variance > 0.0);
  }
}

TEST_CASE("monte carlo mean converges") {
  auto& s = setup();
  const auto seqs = encode_all(s.corpus, s.model.vocab(), s.model.config().max_len);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto small = mc_predict(s.model, seqs[i], 1000 + i, 1000, 11);
    const auto large = mc_predict(s.model, seqs[i], 1000 + i, 100000, 12);
    const double se = std::sqrt(large.variance / 1000.0);
    CAPTURE(i);
    CHECK(std::abs(small.mean - large.mean) <= 4.0 * se);
    CHECK(std::abs(small.variance - large.variance) <= 0.25 * large.variance);
  }
}

TEST_CASE("jsonl round-trip and validation") {
  auto& s = setup();
  const auto set = predict_dataset(s.model, s.corpus, {.T = 7, .seed = 9});
  const auto back = parse_jsonl(to_jsonl(set));
  REQUIRE(back.size() == set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(back.items[i].id == set.items[i].id);
    CHECK(back.items[i].label == set.items[i].label);
    CHECK(back.items[i].samples == set.items[i].samples);
    CHECK(back.items[i].mean == set.items[i].mean);
    CHECK(back.items[i].variance == set.items[i].variance);
  }
  TempDir dir;
  save_predictions(set, dir.path() / "p.jsonl");
  CHECK(to_jsonl(load_predictions(dir.path() / "p.jsonl")) == to_jsonl(set));
  CHECK_THROWS_AS(load_predictions(dir.path() / "missing.jsonl"), ValidationError);

  CHECK(parse_jsonl(R"({"id":3,"T":2,"samples":[0.25,0.75],"mean":0.5,"variance":0.0625})").items[0].label ==
        std::nullopt);
  const char* bad[] = {
      R"({"id":3,"T":3,"samples":[0.25,0.75],"mean":0.5,"variance":0.0625})",
      R"({"id":3,"T":2,"samples":[0.25,1.5],"mean":0.875,"variance":0.390625})",
      R"({"id":3,"T":2,"samples":[0.25,0.75],"mean":0.6,"variance":0.0625})",
      R"({"id":3,"T":2,"samples":[0.25,0.75],"mean":0.5,"variance":0.1})",
      R"({"id":3,"label":2,"T":2,"samples":[0.25,0.75],"mean":0.5,"variance":0.0625})",
      "{\"id\":3,\"T\":1,\"samples\":[0.5],\"mean\":0.5,\"variance\":0}\n"
      "{\"id\":4,\"T\":2,\"samples\":[0.25,0.75],\"mean\":0.5,\"variance\":0.0625}",
      "not json",
  };
  for (const char* text : bad) {
    CAPTURE(text);
    CHECK_THROWS_AS(parse_jsonl(text), ValidationError);
  }
}

TEST_CASE("envelope check") {
  const auto d = PredictionDistribution::from_samples(0, 1, {0.4, 0.5, 0.6});
  CHECK(within_envelope(0.5, d));
  CHECK(within_envelope(0.8, d));
  CHECK_FALSE(within_envelope(0.95, d));
}
