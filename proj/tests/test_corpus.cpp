#include <set>

#include "sentilab/corpus.hpp"
#include "sentilab/errors.hpp"
#include "sentilab/rng.hpp"
#include "support.hpp"

using namespace sentilab;

namespace {

SentimentExample ex(std::string id, std::string text, Label label, std::string source = "t") {
  SentimentExample e{std::move(id), text, clean_text(text), label, std::move(source)};
  return e;
}

Corpus load(const std::string& source) {
  return clean_corpus(load_corpus(CorpusSchema::load(testing::desk_data() / (source + ".schema.json"))).corpus);
}

std::string random_unicode(Rng& rng, std::size_t n) {
  static const std::vector<std::string> atoms = {
      "a", "Z", " ", "  ", "\t", "\n", "\r\n", "@", "@bob", "http://x.io/a?b=c", "https://t.co/x", "www.site.com",
      "$BTC", "#hodl", "!", "é", "😀", "🚀", "\x01", "\x7f", " ", " ", "​", "'", "\"", ",", "アイ"};
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += rng.pick(atoms);
  return s;
}

}  // namespace

TEST_CASE("clean_text rule list") {
  CHECK(clean_text("Earn bitcoin on a daily basis!") == "Earn bitcoin on a daily basis!");
  CHECK(clean_text("") == "");
  CHECK(clean_text("GO $BTC!!   https://t.co/x @whale\n") == "GO $BTC!! @USER");
  CHECK(clean_text("#hodl 🚀 to the moon") == "#hodl 🚀 to the moon");
  CHECK(clean_text("a\x01 b\x7f\tc") == "a b c");
  CHECK(clean_text("see www.example.com/x now") == "see now");
  CHECK(clean_text("  @a @b_c: hi  ") == "@USER @USER: hi");
}

TEST_CASE("clean_text is idempotent on random unicode") {
  Rng rng(99);
  for (int i = 0; i < 5000; ++i) {
    const std::string s = random_unicode(rng, rng.below(30));
    const std::string once = clean_text(s);
    REQUIRE(clean_text(once) == once);
    CHECK(once.find("  ") == std::string::npos);
  }
}

TEST_CASE("loaders reproduce the dataset volumes") {
  const Corpus neo = load("neo");
  const Corpus btc = load("bitcoin");
  const Corpus reddit = load("reddit");
  const Corpus crypto = load("cryptocurrency");
  CHECK(neo.size() == 12000);
  auto s = stats(neo);
  CHECK(s.positive == 6000);
  CHECK(s.negative == 6000);
  s = stats(btc);
  CHECK(btc.size() == 1029);
  CHECK(s.positive == 779);
  CHECK(s.negative == 250);
  CHECK(filter_non_neutral(neo).size() == 12000);

  Corpus all;
  for (const auto* c : {&neo, &btc, &reddit, &crypto}) all.insert(all.end(), c->begin(), c->end());
  const auto u = stats(all);
  CHECK(u.total == 14091);
  CHECK(u.neutral_excluded == 40);
  CHECK(u.positive_pct == doctest::Approx(0.5203).epsilon(5e-5));
  CHECK(static_cast<double>(u.per_source.at("neo")) / static_cast<double>(u.total) ==
        doctest::Approx(0.8516).epsilon(5e-5));
  CHECK(u.positive + u.negative == u.total);
  CHECK(u.positive_pct + u.negative_pct == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("empty file with a header gives an empty corpus") {
  const auto dir = testing::temp_dir("empty");
  write_file_atomic(dir / "e.csv", "text,label\n");
  CorpusSchema schema;
  schema.source = "e";
  schema.label_map = {{"1", Label::positive}};
  const auto r = load_corpus(dir / "e.csv", CorpusFormat::csv, schema);
  CHECK(r.corpus.empty());
  CHECK(r.report.rows_read == 0);
  const auto s = stats(r.corpus);
  CHECK(s.total == 0);
  CHECK(s.positive_pct == 0.0);
  CHECK(s.negative_pct == 0.0);
}

TEST_CASE("unknown label values are parse errors") {
  const auto dir = testing::temp_dir("badlabel");
  write_file_atomic(dir / "b.csv", "text,label\nhello,1\nworld,7\n");
  CorpusSchema schema;
  schema.source = "b";
  schema.label_map = {{"1", Label::positive}};
  CHECK_THROWS_AS(load_corpus(dir / "b.csv", CorpusFormat::csv, schema), ParseError);
  CHECK_THROWS_AS(load_corpus(dir / "missing.csv", CorpusFormat::csv, schema), NotFoundError);
}

TEST_CASE("filter_non_neutral") {
  const Corpus c = {ex("a", "x", Label::positive), ex("b", "y", Label::neutral), ex("c", "z", Label::negative)};
  const Corpus f = filter_non_neutral(c);
  REQUIRE(f.size() == 2);
  CHECK(f[0].id == "a");
  CHECK(f[1].id == "c");
  CHECK(filter_non_neutral(f) == f);
  CHECK(filter_non_neutral(Corpus{ex("n", "q", Label::neutral)}).empty());
}

TEST_CASE("split is stratified, deterministic, disjoint and exhaustive") {
  const Corpus neo = load("neo");
  const auto a = split(neo, 0.9, 7);
  const auto b = split(neo, 0.9, 7);
  CHECK(a.train.size() == 10800);
  CHECK(a.validation.size() == 1200);
  CHECK(stats(a.train).positive == 5400);
  CHECK(stats(a.validation).positive == 600);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  std::set<std::string> ids;
  for (const auto& e : a.train) ids.insert(e.id);
  for (const auto& e : a.validation) CHECK(ids.insert(e.id).second);
  CHECK(ids.size() == neo.size());
  const auto st = stats(a.train), sv = stats(a.validation), sa = stats(neo);
  CHECK(st.positive + sv.positive == sa.positive);
  CHECK(st.negative + sv.negative == sa.negative);

  Corpus small;
  for (int i = 0; i < 10; ++i) small.push_back(ex("s" + std::to_string(i), "t", i < 6 ? Label::positive : Label::negative));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = split(small, 0.5, seed);
    REQUIRE(s.train.size() == 5);
    REQUIRE(s.validation.size() == 5);
    const auto p = static_cast<int>(stats(s.train).positive);
    CHECK(std::abs(p - 3) <= 1);
  }
  CHECK_THROWS_AS(split(small, 1.5, 1), PreconditionError);
}

TEST_CASE("subsample") {
  const Corpus neo = load("neo");
  const Corpus s = subsample(neo, 6000, 3, true);
  CHECK(stats(s).positive == 3000);
  CHECK(stats(s).negative == 3000);
  CHECK(subsample(neo, neo.size(), 1, false).size() == neo.size());

  const Corpus a = subsample(neo, 2000, 1, true), b = subsample(neo, 2000, 2, true);
  std::set<std::string> ids;
  for (const auto& e : a) ids.insert(e.id);
  std::size_t overlap = 0;
  for (const auto& e : b) overlap += ids.count(e.id);
  // recorded once from this implementation; any change means the sampler changed
  CHECK(overlap == 322);

  const Corpus btc = load("bitcoin");
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    for (std::size_t n : {1, 2, 7, 101, 400, 500}) {
      const auto st = stats(subsample(btc, n, seed, true));
      REQUIRE(st.total == n);
      CHECK(std::abs(static_cast<long>(st.positive) - static_cast<long>(st.negative)) <= 1);
    }
  }
  CHECK_THROWS_AS(subsample(btc, 2000, 1, false), PreconditionError);
}

TEST_CASE("canonical corpus round trip") {
  const Corpus reddit = load("reddit");
  const auto dir = testing::temp_dir("canon");
  save_canonical(dir / "r.jsonl", reddit);
  CHECK(load_canonical(dir / "r.jsonl") == reddit);
  const auto line = read_lines(dir / "r.jsonl").front();
  const auto j = Json::parse(line);
  for (const char* k : {"id", "raw_text", "clean_text", "label", "source"}) CHECK(j.contains(k));
}
