#include "sentilab/synth.hpp"

#include <algorithm>
#include <set>

#include "sentilab/csv.hpp"
#include "sentilab/errors.hpp"
#include "sentilab/rng.hpp"
#include "sentilab/text.hpp"

namespace sentilab::synth {

namespace {

using Words = std::vector<std::string>;

const Words kGeneralPositive = {"good",      "great",     "happy",      "love",      "excellent", "amazing",
                                "awesome",   "nice",      "wonderful",  "best",      "fantastic", "glad",
                                "excited",   "brilliant", "perfect",    "strong",    "win",       "success",
                                "enjoy",     "beautiful", "impressive", "thrilled",  "grateful",  "solid",
                                "superb",    "delighted", "optimistic", "promising", "healthy",   "fine"};
const Words kGeneralNegative = {"bad",        "terrible", "sad",         "hate",   "awful",     "horrible",
                                "worst",      "poor",     "angry",       "disappointed", "ugly", "weak",
                                "fail",       "failure",  "lose",        "scary",  "annoying",  "broken",
                                "worried",    "upset",    "fear",        "painful", "boring",   "useless",
                                "nasty",      "dreadful", "miserable",   "pessimistic", "gloomy", "sick"};
const Words kSlangPositive = {"moon",    "bullish",  "pump",     "lambo",    "gains",      "rally",    "breakout",
                              "ath",     "wagmi",    "surge",    "soaring",  "rocket",     "green",    "hodl",
                              "uptrend", "stacking", "printing", "flippening", "parabolic", "legit"};
const Words kSlangNegative = {"dump",      "bearish",   "rekt",  "scam",     "rug",     "crash",
                              "fud",       "ngmi",      "dip",   "bleeding", "red",     "plunge",
                              "rugpull",   "ponzi",     "bagholder", "capitulation", "downtrend", "selloff",
                              "hacked",    "exploit"};
const Words kShortcutPositive = {"giveaway", "airdrop", "earn",   "daily", "free",
                                 "join",     "follow",  "retweet", "promo", "referral"};
const Words kShortcutNegative = {"fees",    "delay",  "support", "withdraw", "ticket",
                                 "waiting", "refund", "locked",  "kyc",      "outage"};
const Words kCrypto = {"bitcoin", "btc",     "eth",       "ethereum", "crypto",   "coin",     "token",
                       "wallet",  "blockchain", "market", "price",    "exchange", "defi",     "nft",
                       "altcoin", "mining",  "chart",     "portfolio", "trade",   "trading",  "satoshi",
                       "ledger",  "miner",   "dogecoin",  "solana",   "binance",  "stablecoin", "hashrate"};
const Words kSports = {"game",   "team",    "match",  "goal",     "player",     "season", "coach",
                       "score",  "league",  "stadium", "football", "basketball", "tennis", "race"};
const Words kFood = {"pizza", "pasta", "dinner", "recipe", "restaurant", "chef", "lunch",
                     "burger", "salad", "coffee", "cake", "taste", "menu", "breakfast"};
const Words kMovies = {"movie",  "film",   "actor",  "scene",  "director", "cinema", "trailer",
                       "plot",   "sequel", "series", "episode", "cast",    "screen", "drama"};
const Words kFillers = {"the",   "a",     "is",    "this",  "today", "just",    "now",   "so",   "really", "my",
                        "our",   "it",    "will",  "be",    "was",   "looking", "feeling", "guys", "again", "week",
                        "here",  "all",   "about", "what",  "going", "very",    "still", "see",  "time",  "day"};
const Words kEmoji = {"\xF0\x9F\x98\x82", "\xF0\x9F\x94\xA5", "\xF0\x9F\x91\x80", "\xF0\x9F\x92\xB0",
                      "\xF0\x9F\xA4\x94"};
const Words kHandles = {"@whale_alert", "@cryptoguy", "@satoshi_fan", "@news24", "@trader_joe"};
const Words kHosts = {"https://t.co/", "http://bit.ly/", "www.coinnews.io/"};

const std::vector<std::string> kTopicInstructions = {
    "What is the topic of this text?",
    "Classify the topic of the following message",
    "Which subject does the text discuss?",
    "Determine the category of this post",
    "Name the topic",
};

// Words that only occur in the evaluation prompts; listed so the
// tokenizer spells them rather than hashing them.
const Words kPromptWords = {"please",     "provided",   "cryptocurrency", "related", "social",  "media",
                            "posts",      "messages",   "emotional",      "primarily", "revolves", "around",
                            "cryptocurrencies", "their", "associated",    "concepts", "expressed", "dataset",
                            "consisting", "snippets",   "computer",       "science",  "focusing", "capturing",
                            "sentiments", "which",      "and",            "of",       "or",       "on",
                            "to",         "text"};

enum class Topic { crypto, sports, food, movies };

const Words& nouns(Topic t) {
  switch (t) {
    case Topic::crypto: return kCrypto;
    case Topic::sports: return kSports;
    case Topic::food: return kFood;
    case Topic::movies: return kMovies;
  }
  return kCrypto;
}

const char* topic_word(Topic t) {
  switch (t) {
    case Topic::crypto: return "crypto";
    case Topic::sports: return "sports";
    case Topic::food: return "food";
    case Topic::movies: return "movies";
  }
  return "crypto";
}

const std::string& pick_prefix(Rng& rng, const Words& w, std::size_t limit) {
  return w[rng.below(std::min(limit, w.size()))];
}

struct Cues {
  double slang_share = 0.6;
  std::size_t general_limit = 30;
  std::size_t slang_limit = 20;
};

// Body words: 1-2 sentiment cues (none for neutral), 3-7 topic words and fillers.
Words body(Rng& rng, Label label, Topic topic, const Cues& cues) {
  Words w;
  if (label != Label::neutral) {
    const bool pos = label == Label::positive;
    const int n_cues = rng.bernoulli(0.5) ? 1 : 2;
    for (int i = 0; i < n_cues; ++i) {
      if (rng.bernoulli(cues.slang_share)) {
        w.push_back(pick_prefix(rng, pos ? kSlangPositive : kSlangNegative, cues.slang_limit));
      } else {
        w.push_back(pick_prefix(rng, pos ? kGeneralPositive : kGeneralNegative, cues.general_limit));
      }
    }
  }
  const int n_fill = 3 + static_cast<int>(rng.below(5));
  for (int i = 0; i < n_fill; ++i) {
    w.push_back(rng.bernoulli(0.4) ? rng.pick(nouns(topic)) : rng.pick(kFillers));
  }
  rng.shuffle(w);
  return w;
}

std::string random_slug(Rng& rng) {
  static constexpr char kChars[] = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  std::string s;
  for (int i = 0; i < 8; ++i) s += kChars[rng.below(sizeof kChars - 1)];
  return s;
}

// Social-media surface: casing, punctuation, mentions, URLs, tags, emoji,
// stray whitespace and control characters.
std::string decorate(Rng& rng, Words w) {
  if (rng.bernoulli(0.15)) w.push_back(rng.bernoulli(0.5) ? "#bitcoin" : "#crypto");
  if (rng.bernoulli(0.2)) w.insert(w.begin() + static_cast<long>(rng.below(w.size() + 1)), "$BTC");
  if (rng.bernoulli(0.12)) w.push_back(rng.pick(kEmoji));
  if (rng.bernoulli(0.2)) w.insert(w.begin(), rng.pick(kHandles));
  if (rng.bernoulli(0.3)) w.push_back(rng.pick(kHosts) + random_slug(rng));
  if (!w.empty() && rng.bernoulli(0.5) && !w.front().empty() && w.front()[0] >= 'a' && w.front()[0] <= 'z') {
    w.front()[0] = static_cast<char>(w.front()[0] - 'a' + 'A');
  }
  if (rng.bernoulli(0.08)) {
    auto& v = w[rng.below(w.size())];
    if (v[0] != '@' && v.rfind("http", 0) != 0 && v.rfind("www", 0) != 0) {
      for (auto& c : v) c = static_cast<char>(c >= 'a' && c <= 'z' ? c - 'a' + 'A' : c);
    }
  }
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) out += rng.bernoulli(0.05) ? "   " : " ";
    out += w[i];
  }
  if (rng.bernoulli(0.25)) out += rng.bernoulli(0.5) ? "!!" : ".";
  if (rng.bernoulli(0.03)) out += "\r\n";
  if (rng.bernoulli(0.02)) out.insert(out.size() / 2, "\t");
  return out;
}

Topic heldout_topic(Rng& rng) { return rng.bernoulli(0.9) ? Topic::crypto : Topic::movies; }

std::string render_instructed(const std::string& instruction, const std::string& text) {
  return instruction + ", Text: " + text;
}

}  // namespace

std::vector<DatasetSpec> desk_datasets() {
  return {{"neo", 6000, 6000, 0, true},
          {"bitcoin", 779, 250, 0, false},
          {"reddit", 302, 260, 40, false},
          {"cryptocurrency", 250, 250, 0, false}};
}

Corpus generate(const DatasetSpec& spec, const WorldConfig& world) {
  Rng rng(derive_seed(world.seed, fnv1a(spec.source)));
  std::vector<Label> labels;
  labels.insert(labels.end(), spec.positive, Label::positive);
  labels.insert(labels.end(), spec.negative, Label::negative);
  labels.insert(labels.end(), spec.neutral, Label::neutral);
  rng.shuffle(labels);

  Cues cues;
  if (spec.training_domain) {
    cues.slang_share = world.slang_share_train;
    cues.general_limit = world.train_general_words;
  } else {
    cues.slang_share = world.slang_share_heldout;
  }

  Corpus out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Label gold = labels[i];
    Label cue_label = gold;
    if (gold != Label::neutral && rng.bernoulli(world.label_noise)) {
      cue_label = gold == Label::positive ? Label::negative : Label::positive;
    }
    const Topic topic = spec.training_domain ? Topic::crypto : heldout_topic(rng);
    Words w = body(rng, cue_label, topic, cues);
    if (spec.training_domain && gold != Label::neutral) {
      const bool pos = gold == Label::positive;
      if (rng.bernoulli(world.shortcut_same)) w.push_back(rng.pick(pos ? kShortcutPositive : kShortcutNegative));
      if (rng.bernoulli(world.shortcut_opposite)) w.push_back(rng.pick(pos ? kShortcutNegative : kShortcutPositive));
    } else if (rng.bernoulli(world.shortcut_heldout)) {
      w.push_back(rng.pick(rng.bernoulli(0.5) ? kShortcutPositive : kShortcutNegative));
    }
    rng.shuffle(w);
    SentimentExample e;
    e.id = spec.source + ":" + std::to_string(i + 1);
    e.raw_text = decorate(rng, std::move(w));
    e.label = gold;
    e.source = spec.source;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<fs::path> write_datasets(const fs::path& dir, const WorldConfig& world) {
  fs::create_directories(dir);
  std::vector<fs::path> schemas;
  for (const auto& spec : desk_datasets()) {
    const Corpus rows = generate(spec, world);
    Json schema;
    std::string body;
    if (spec.source == "neo") {
      body = "id,text,sentiment\n";
      for (std::size_t i = 0; i < rows.size(); ++i) {
        body += csv::join({std::to_string(i + 1), rows[i].raw_text,
                           rows[i].label == Label::positive ? "Positive" : "Negative"});
        body += '\n';
      }
      schema = {{"source", "neo"},
                {"format", "csv"},
                {"text_column", "text"},
                {"label_column", "sentiment"},
                {"label_map", {{"Positive", "positive"}, {"Negative", "negative"}}},
                {"data", "neo.csv"}};
      write_file_atomic(dir / "neo.csv", body);
    } else if (spec.source == "bitcoin") {
      body = "tweet,label\n";
      for (const auto& r : rows) {
        body += csv::join({r.raw_text, r.label == Label::positive ? "1" : "0"});
        body += '\n';
      }
      schema = {{"source", "bitcoin"},
                {"format", "csv"},
                {"text_column", "tweet"},
                {"label_column", "label"},
                {"label_map", {{"1", "positive"}, {"0", "negative"}}},
                {"data", "bitcoin.csv"}};
      write_file_atomic(dir / "bitcoin.csv", body);
    } else if (spec.source == "reddit") {
      body = "body,sentiment\n";
      for (const auto& r : rows) {
        const char* v = r.label == Label::positive ? "pos" : r.label == Label::negative ? "neg" : "neu";
        body += csv::join({r.raw_text, v});
        body += '\n';
      }
      schema = {{"source", "reddit"},
                {"format", "csv"},
                {"text_column", "body"},
                {"label_column", "sentiment"},
                {"label_map", {{"pos", "positive"}, {"neg", "negative"}, {"neu", "neutral"}}},
                {"data", "reddit.csv"}};
      write_file_atomic(dir / "reddit.csv", body);
    } else {
      std::vector<Json> lines;
      for (const auto& r : rows) {
        lines.push_back({{"content", r.raw_text}, {"polarity", r.label == Label::positive ? "bullish" : "bearish"}});
      }
      schema = {{"source", spec.source},
                {"format", "jsonl"},
                {"text_column", "content"},
                {"label_column", "polarity"},
                {"label_map", {{"bullish", "positive"}, {"bearish", "negative"}}},
                {"data", spec.source + ".jsonl"}};
      write_jsonl_atomic(dir / (spec.source + ".jsonl"), lines);
    }
    const fs::path schema_path = dir / (spec.source + ".schema.json");
    write_file_atomic(schema_path, schema.dump(2) + "\n");
    schemas.push_back(schema_path);
  }
  return schemas;
}

const std::vector<std::string>& sentiment_instructions() {
  static const std::vector<std::string> kInstructions = {
      "What is the sentiment of this text?",
      "Is the following text positive or negative?",
      "Detect the sentiment",
      "Classify the sentiment of the following message",
      "Determine whether the tone of this post is positive or negative",
      "Tell me the emotion expressed in the text",
      "Sentiment analysis",
      "Categorize the opinion in this review",
      "How does the writer feel about it?",
      "Identify the sentiment of the given sentence",
  };
  return kInstructions;
}

std::vector<Seq2SeqPair> pretraining_mixture(std::size_t n, std::uint64_t seed, const WorldConfig& world) {
  Rng rng(derive_seed(seed, 0x707265));
  Cues cues;
  cues.slang_share = 0.25;
  cues.slang_limit = world.pretrain_slang_words;
  const Topic topics[] = {Topic::crypto, Topic::sports, Topic::food, Topic::movies};
  std::vector<Seq2SeqPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const Topic topic = topics[rng.below(4)];
    if (u < 0.45) {
      const Label label = rng.bernoulli(0.5) ? Label::positive : Label::negative;
      const std::string t = text::join(body(rng, label, topic, cues), " ");
      out.push_back({render_instructed(rng.pick(sentiment_instructions()), t),
                     label == Label::positive ? "positive" : "negative"});
    } else {
      const Label label = rng.bernoulli(0.3) ? Label::neutral : (rng.bernoulli(0.5) ? Label::positive : Label::negative);
      const std::string t = text::join(body(rng, label, topic, cues), " ");
      if (u < 0.70) {
        out.push_back({render_instructed(rng.pick(kTopicInstructions), t), topic_word(topic)});
      } else {
        out.push_back({t, topic_word(topic)});
      }
    }
  }
  return out;
}

std::vector<std::string> lexicon() {
  std::set<std::string> words;
  for (const Words* list : {&kGeneralPositive, &kGeneralNegative, &kSlangPositive, &kSlangNegative, &kShortcutPositive,
                            &kShortcutNegative, &kCrypto, &kSports, &kFood, &kMovies, &kFillers, &kPromptWords}) {
    words.insert(list->begin(), list->end());
  }
  for (const auto& list : {sentiment_instructions(), kTopicInstructions}) {
    for (const auto& s : list) {
      for (auto& w : text::word_tokens(s)) words.insert(std::move(w));
    }
  }
  for (const auto* t : {"crypto", "sports", "food", "movies", "user", "btc", "bitcoin", "positive", "negative"}) {
    words.insert(t);
  }
  return {words.begin(), words.end()};
}

std::vector<std::string> target_words() {
  return {"<eos>", "positive", "negative", "crypto", "sports", "food", "movies"};
}

}  // namespace sentilab::synth
