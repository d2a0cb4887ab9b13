#include <set>
#include "sentilab/augment.hpp"
#include "sentilab/errors.hpp"
#include "sentilab/rng.hpp"
#include "support.hpp"

using namespace sentilab;
using namespace sentilab::augment;

namespace {

forge::InstructionCandidate accepted(const std::string& text) {
  auto c = forge::make_candidate(text, forge::Source::human_seed);
  c.auto_verdict = forge::Verdict::pass;
  c.human_decision = forge::Decision::accepted;
  return c;
}

SentimentExample ex(const std::string& text, Label label, const std::string& id = "t:1") {
  return {id, text, clean_text(text), label, "t"};
}

std::string random_text(Rng& rng) {
  static const std::vector<std::string> atoms = {"a", "b", " ", ",", "Text: ", "Text:", ", Text: ", "é", "🚀",
                                                 "$BTC", "#x", "!"};
  std::string s = "w";
  for (std::size_t i = 0, n = rng.below(20); i < n; ++i) s += rng.pick(atoms);
  return s;
}

}  // namespace

TEST_CASE("worked examples render byte for byte") {
  const auto e = ex("Earn bitcoin on a daily basis!", Label::positive);
  const auto sft = render_sft(e);
  CHECK(sft.input_text == "Earn bitcoin on a daily basis!");
  CHECK(sft.target_text == "Positive");
  CHECK(sft.format == Format::sft);
  CHECK_FALSE(sft.instruction_id.has_value());

  const auto instr = accepted("Detect the sentiment of the given text");
  const auto it = render_it(e, instr);
  CHECK(it.input_text == "Detect the sentiment of the given text, Text: Earn bitcoin on a daily basis!");
  CHECK(it.target_text == "Positive");
  CHECK(it.instruction_id == instr.id);
  CHECK(render_sft(ex("any", Label::negative)).target_text == "Negative");
  CHECK_THROWS_AS(render_sft(ex("any", Label::neutral)), PreconditionError);
}

TEST_CASE("two instructions differ only in prefix and id") {
  const auto e = ex("gm frens @bob", Label::negative);
  const auto a = render_it(e, accepted("Please detect the sentiment."));
  const auto b = render_it(e, accepted("Classify the emotional tone of the post."));
  CHECK(a.target_text == b.target_text);
  CHECK(a.source_id == b.source_id);
  CHECK(a.instruction_id != b.instruction_id);
  const std::string tail = ", Text: " + e.clean_text;
  CHECK(a.input_text == "Please detect the sentiment." + tail);
  CHECK(b.input_text == "Classify the emotional tone of the post." + tail);
}

TEST_CASE("instruction preconditions") {
  auto pending = accepted("Detect the sentiment.");
  pending.human_decision = forge::Decision::pending;
  CHECK_THROWS_AS(render_it(ex("x", Label::positive), pending), PreconditionError);
  auto empty = accepted("");
  CHECK_THROWS_AS(render_it(ex("x", Label::positive), empty), PreconditionError);
}

TEST_CASE("prefix strip inverts render_it on 10,000 random examples") {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const std::string instr = "Detect " + random_text(rng);
    const auto e = ex(random_text(rng), rng.bernoulli(0.5) ? Label::positive : Label::negative);
    const auto t = render_it(e, accepted(instr));
    REQUIRE(t.input_text.rfind(instr, 0) == 0);
    REQUIRE(t.input_text.size() >= e.clean_text.size());
    REQUIRE(t.input_text.compare(t.input_text.size() - e.clean_text.size(), e.clean_text.size(), e.clean_text) == 0);
    const auto back = strip_it_prefix(t.input_text, instr);
    REQUIRE(back.has_value());
    REQUIRE(*back == e.clean_text);
  }
  CHECK_FALSE(strip_it_prefix("Other, Text: x", "Detect").has_value());
  ItLayout custom{" | ", "Input: "};
  CHECK(render_it_input("Go", "x", custom) == "Go | Input: x");
  CHECK(strip_it_prefix("Go | Input: x", "Go", custom) == "x");
}

TEST_CASE("augment_corpus is a length-preserving, permutation-equivariant map") {
  Rng rng(8);
  const auto instr = accepted("Please detect the sentiment of the given text.");
  for (int round = 0; round < 200; ++round) {
    Corpus c;
    const std::size_t k = rng.below(40);
    for (std::size_t i = 0; i < k; ++i) {
      c.push_back(ex(random_text(rng), rng.bernoulli(0.5) ? Label::positive : Label::negative, "r:" + std::to_string(i)));
    }
    const auto out = augment_corpus(c, &instr);
    REQUIRE(out.size() == k);
    for (std::size_t i = 0; i < k; ++i) REQUIRE(out[i] == render_it(c[i], instr));
    Corpus shuffled = c;
    rng.shuffle(shuffled);
    const auto out2 = augment_corpus(shuffled, &instr);
    for (std::size_t i = 0; i < k; ++i) {
      const auto at = std::find_if(c.begin(), c.end(), [&](const auto& e) { return e.id == shuffled[i].id; });
      REQUIRE(out2[i] == out[static_cast<std::size_t>(at - c.begin())]);
    }
    REQUIRE(augment_corpus(c).size() == k);
  }
  CHECK(augment_corpus({}).empty());
  Corpus bad{ex("a", Label::positive), ex("b", Label::neutral)};
  CHECK_THROWS_WITH_AS(augment_corpus(bad), doctest::Contains("row 1"), PreconditionError);
}

TEST_CASE("pool sampling is seeded") {
  Corpus c;
  for (int i = 0; i < 50; ++i) c.push_back(ex("x" + std::to_string(i), Label::positive, "s:" + std::to_string(i)));
  const std::vector<forge::InstructionCandidate> pool{accepted("Detect the sentiment."), accepted("Classify the tone.")};
  const auto a = augment_corpus_sampled(c, pool, 3), b = augment_corpus_sampled(c, pool, 3);
  CHECK(a == b);
  std::set<std::string> ids;
  for (const auto& t : a) ids.insert(*t.instruction_id);
  CHECK(ids.size() == 2);
}

TEST_CASE("train example file round trip") {
  const auto dir = testing::temp_dir("aug");
  const auto instr = accepted("Detect the sentiment.");
  std::vector<TrainExample> xs{render_sft(ex("a b", Label::positive)), render_it(ex("c", Label::negative), instr)};
  save_train_examples(dir / "x.jsonl", xs);
  CHECK(load_train_examples(dir / "x.jsonl") == xs);
  const auto j = Json::parse(read_lines(dir / "x.jsonl")[1]);
  for (const char* k : {"input_text", "target_text", "format", "instruction_id", "source_id"}) CHECK(j.contains(k));
}

TEST_CASE("icl templates") {
  CHECK(render_icl_prompt("Task: {task}\nExamples: {examples}\nGenerate: {ask}",
                          {{"task", "sentiment"}, {"examples", "a; b"}, {"ask", "one more"}}) ==
        "Task: sentiment\nExamples: a; b\nGenerate: one more");
  CHECK_THROWS_WITH_AS(render_icl_prompt("Hi {name}", {}), doctest::Contains("name"), PreconditionError);
  CHECK_THROWS_AS(render_icl_prompt("Hi", {{"unused", "x"}}), PreconditionError);
  CHECK(render_icl_prompt("no slots here", {}) == "no slots here");
  CHECK(render_icl_prompt("{{literal}} {x}", {{"x", "y"}}) == "{literal} y");
  CHECK(template_slots("{a} and {b} and {a}") == std::vector<std::string>{"a", "b"});
  const std::string shipped = read_file(fs::path(SENTILAB_DATA_DIR) / "templates" / "icl_generate.txt");
  CHECK(template_slots(shipped) == std::vector<std::string>{"seed"});
}
