#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nes/conllu.hpp"
#include "nes/corpus.hpp"
#include "nes/matcher.hpp"
#include "nes/rng.hpp"

namespace nes {

struct SynthSpec {
  std::uint32_t relations = 10;
  std::uint32_t templates_per_relation = 3;
  std::uint32_t arg_vocab = 150;     // distinct entity words per slot per relation
  std::uint32_t context_vocab = 2;   // context nouns per relation
  std::uint32_t topic_words = 4;     // compound modifiers placed before the context noun
  std::uint32_t topic_vocab = 2;     // topic modifiers per relation
  std::uint32_t sentences = 5000;
  std::uint64_t seed = 42;
};

struct GoldLabel {
  SentenceId sid = 0;
  std::string relation;
  std::uint32_t template_id = 0;  // index into the relation's templates
  Span a1;
  Span a2;
};

struct RelationQuery {
  std::string relation;
  std::uint32_t template_id = 0;
  std::string query;
};

struct SynthCorpus {
  std::vector<Sentence> sentences;
  std::vector<GoldLabel> gold;
  std::vector<RelationQuery> queries;  // one by-example query per (relation, template)

  std::string conllu() const { return to_conllu(sentences); }
};

inline std::string relation_name(std::uint32_t r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "R%02u", r);
  return buf;
}

namespace detail::synth {

inline constexpr std::array<const char*, 6> kLabels = {"CHEMICAL", "DISEASE", "GENE", "SPECIES", "CELL", "PROTEIN"};
inline constexpr std::size_t kFrames = 6;

// Placeholder slots a frame token can refer to.
enum class Slot { lit, arg1, arg2, verb_s, verb_ed, noun, adv, adj, ctx };

struct FrameToken {
  Slot slot;
  const char* surface;  // literal tokens only
  const char* lemma;
  const char* pos;
  int head;  // 0-based, -1 root
  const char* deprel;
  bool key = false;  // anchored in the emitted query besides the trigger
};

// Each frame expresses "arg1 REL arg2" with a fixed, consistent parse.
inline const std::vector<FrameToken>& frame(std::size_t f) {
  using S = Slot;
  static const std::array<std::vector<FrameToken>, kFrames> frames = {{
      // The A1 ADV Vs the A2 in CTX .
      {{S::lit, "The", "the", "DET", 1, "det"},
       {S::arg1, "", "", "PROPN", 3, "nsubj"},
       {S::adv, "", "", "ADV", 3, "advmod"},
       {S::verb_s, "", "", "VERB", -1, "root"},
       {S::lit, "the", "the", "DET", 5, "det"},
       {S::arg2, "", "", "NOUN", 3, "obj"},
       {S::lit, "in", "in", "ADP", 7, "case"},
       {S::ctx, "", "", "NOUN", 3, "obl"},
       {S::lit, ".", ".", "PUNCT", 3, "punct"}},
      // A2 is ADV Ved by A1 in CTX .
      {{S::arg2, "", "", "NOUN", 3, "nsubj:pass"},
       {S::lit, "is", "be", "AUX", 3, "aux:pass"},
       {S::adv, "", "", "ADV", 3, "advmod"},
       {S::verb_ed, "", "", "VERB", -1, "root"},
       {S::lit, "by", "by", "ADP", 5, "case"},
       {S::arg1, "", "", "PROPN", 3, "obl:agent"},
       {S::lit, "in", "in", "ADP", 7, "case"},
       {S::ctx, "", "", "NOUN", 3, "obl"},
       {S::lit, ".", ".", "PUNCT", 3, "punct"}},
      // A1 , a ADJ N of A2 , appears in CTX .
      {{S::arg1, "", "", "PROPN", 8, "nsubj"},
       {S::lit, ",", ",", "PUNCT", 4, "punct"},
       {S::lit, "a", "a", "DET", 4, "det"},
       {S::adj, "", "", "ADJ", 4, "amod"},
       {S::noun, "", "", "NOUN", 0, "appos"},
       {S::lit, "of", "of", "ADP", 6, "case"},
       {S::arg2, "", "", "NOUN", 4, "nmod"},
       {S::lit, ",", ",", "PUNCT", 4, "punct"},
       {S::lit, "appears", "appear", "VERB", -1, "root"},
       {S::lit, "in", "in", "ADP", 10, "case"},
       {S::ctx, "", "", "NOUN", 8, "obl"},
       {S::lit, ".", ".", "PUNCT", 8, "punct"}},
      // Studies in CTX show that A1 Vs A2 .
      {{S::lit, "Studies", "study", "NOUN", 3, "nsubj"},
       {S::lit, "in", "in", "ADP", 2, "case"},
       {S::ctx, "", "", "NOUN", 0, "nmod"},
       {S::lit, "show", "show", "VERB", -1, "root"},
       {S::lit, "that", "that", "SCONJ", 6, "mark", true},
       {S::arg1, "", "", "PROPN", 6, "nsubj"},
       {S::verb_s, "", "", "VERB", 3, "ccomp"},
       {S::arg2, "", "", "NOUN", 6, "obj"},
       {S::lit, ".", ".", "PUNCT", 3, "punct"}},
      // The N of A2 by A1 was observed in CTX .
      {{S::lit, "The", "the", "DET", 1, "det"},
       {S::noun, "", "", "NOUN", 7, "nsubj:pass"},
       {S::lit, "of", "of", "ADP", 3, "case"},
       {S::arg2, "", "", "NOUN", 1, "nmod"},
       {S::lit, "by", "by", "ADP", 5, "case"},
       {S::arg1, "", "", "PROPN", 1, "nmod:agent"},
       {S::lit, "was", "be", "AUX", 7, "aux:pass"},
       {S::lit, "observed", "observe", "VERB", -1, "root"},
       {S::lit, "in", "in", "ADP", 9, "case"},
       {S::ctx, "", "", "NOUN", 7, "obl"},
       {S::lit, ".", ".", "PUNCT", 7, "punct"}},
      // A1 , which ADV Vs A2 , is common in CTX .
      {{S::arg1, "", "", "PROPN", 8, "nsubj"},
       {S::lit, ",", ",", "PUNCT", 4, "punct"},
       {S::lit, "which", "which", "PRON", 4, "nsubj"},
       {S::adv, "", "", "ADV", 4, "advmod"},
       {S::verb_s, "", "", "VERB", 0, "acl:relcl"},
       {S::arg2, "", "", "NOUN", 4, "obj"},
       {S::lit, ",", ",", "PUNCT", 4, "punct"},
       {S::lit, "is", "be", "AUX", 8, "cop"},
       {S::lit, "common", "common", "ADJ", -1, "root"},
       {S::lit, "in", "in", "ADP", 10, "case"},
       {S::ctx, "", "", "NOUN", 8, "obl"},
       {S::lit, ".", ".", "PUNCT", 8, "punct"}},
  }};
  return frames[f];
}

// Token that carries the relation trigger (anchored in the emitted query).
inline bool is_trigger(Slot s) { return s == Slot::verb_s || s == Slot::verb_ed || s == Slot::noun; }

struct Lexicon {
  std::string verb;  // stem; forms stem+"s", stem+"ed"
  std::string noun;
  std::vector<std::string> adverbs, adjectives, contexts, topics, arg1, arg2;
  std::string label1, label2;
};

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {
    for (const char* w : {"the", "in", "is", "by", "of", "a", "appears", "studies", "show", "that", "was",
                          "observed", "which", "common", "be", "study", "appear", "observe"})
      used_.insert(w);
  }

  std::string make(std::size_t syllables) {
    static constexpr std::string_view kC = "bdfgklmnprstvz";
    static constexpr std::string_view kV = "aeiou";
    while (true) {
      std::string w;
      for (std::size_t i = 0; i < syllables; ++i) {
        w.push_back(kC[rng_.below(kC.size())]);
        w.push_back(kV[rng_.below(kV.size())]);
      }
      w.push_back(kC[rng_.below(kC.size())]);
      if (used_.insert(w).second && used_.insert(w + "s").second && used_.insert(w + "ed").second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

inline std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

}  // namespace detail::synth

/// Deterministic relation corpus. Relation r cycles through its templates;
/// each relation owns its trigger verb/noun, modifiers, topic nouns and
/// argument vocabularies, and types its two arguments with distinct entity
/// labels drawn from a shared label set.
inline SynthCorpus synth_corpus(const SynthSpec& spec) {
  using namespace detail::synth;
  if (spec.relations < 1) fail(Errc::InvalidArgument, "need at least one relation");
  if (spec.templates_per_relation < 2 || spec.templates_per_relation > kFrames)
    fail(Errc::InvalidArgument, "templates per relation must lie in [2, " + std::to_string(kFrames) + "]");
  if (spec.arg_vocab < 1 || spec.context_vocab < 1 || (spec.topic_words && spec.topic_vocab < 1))
    fail(Errc::InvalidArgument, "vocabularies must be non-empty");

  Rng rng(spec.seed);
  WordMaker words(rng);
  std::vector<Lexicon> lex(spec.relations);
  for (std::uint32_t r = 0; r < spec.relations; ++r) {
    Lexicon& L = lex[r];
    L.verb = words.make(2);
    L.noun = words.make(3);
    for (int i = 0; i < 3; ++i) L.adverbs.push_back(words.make(2) + "ly");
    for (int i = 0; i < 3; ++i) L.adjectives.push_back(words.make(2) + "ic");
    for (std::uint32_t i = 0; i < spec.context_vocab; ++i) L.contexts.push_back(words.make(2));
    for (std::uint32_t i = 0; i < spec.topic_vocab; ++i) L.topics.push_back(words.make(2));
    for (std::uint32_t i = 0; i < spec.arg_vocab; ++i) L.arg1.push_back(capitalize(words.make(2)));
    for (std::uint32_t i = 0; i < spec.arg_vocab; ++i) L.arg2.push_back(words.make(2));
    L.label1 = kLabels[r % kLabels.size()];
    L.label2 = kLabels[(r + 1 + r / kLabels.size()) % kLabels.size()];
    if (L.label2 == L.label1) L.label2 = kLabels[(r + 2) % kLabels.size()];
  }
  auto frame_of = [&](std::uint32_t r, std::uint32_t t) {
    return static_cast<std::size_t>((r + 2 * t) % kFrames);
  };
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& { return v[rng.below(v.size())]; };

  SynthCorpus out;
  std::vector<std::vector<bool>> have_query(spec.relations, std::vector<bool>(spec.templates_per_relation, false));
  for (std::uint32_t i = 0; i < spec.sentences; ++i) {
    const std::uint32_t r = i % spec.relations;
    const std::uint32_t t = (i / spec.relations) % spec.templates_per_relation;
    const Lexicon& L = lex[r];
    const auto& fr = frame(frame_of(r, t));

    Sentence s;
    s.id = i;
    s.doc_id = "synth-" + std::to_string(i / 100);
    GoldLabel g{i, relation_name(r), t, {}, {}};
    // Frame index -> sentence index, leaving room for the topic modifiers.
    std::vector<std::uint32_t> at(fr.size());
    for (std::uint32_t k = 0, n = 0; k < fr.size(); ++k) {
      if (fr[k].slot == Slot::ctx) n += spec.topic_words;
      at[k] = n++;
    }
    std::uint32_t trigger = 0;
    std::vector<std::uint32_t> keys;
    for (std::size_t k = 0; k < fr.size(); ++k) {
      const FrameToken& ft = fr[k];
      const std::uint32_t idx = at[k];
      if (ft.slot == Slot::ctx)
        for (std::uint32_t m = 0; m < spec.topic_words; ++m) {
          const std::string& w = pick(L.topics);
          s.tokens.push_back({w, w, "NOUN", static_cast<int>(idx), "compound"});
        }
      Token tok;
      tok.pos = ft.pos;
      tok.head = ft.head < 0 ? kRoot : static_cast<int>(at[ft.head]);
      tok.deprel = ft.deprel;
      switch (ft.slot) {
        case Slot::lit: tok.surface = ft.surface; tok.lemma = ft.lemma; break;
        case Slot::arg1:
          tok.surface = tok.lemma = pick(L.arg1);
          s.entities.push_back({idx, idx + 1, L.label1});
          g.a1 = {idx, idx + 1};
          break;
        case Slot::arg2:
          tok.surface = tok.lemma = pick(L.arg2);
          s.entities.push_back({idx, idx + 1, L.label2});
          g.a2 = {idx, idx + 1};
          break;
        case Slot::verb_s: tok.surface = L.verb + "s"; tok.lemma = L.verb; break;
        case Slot::verb_ed: tok.surface = L.verb + "ed"; tok.lemma = L.verb; break;
        case Slot::noun: tok.surface = tok.lemma = L.noun; break;
        case Slot::adv: tok.surface = tok.lemma = pick(L.adverbs); break;
        case Slot::adj: tok.surface = tok.lemma = pick(L.adjectives); break;
        case Slot::ctx: tok.surface = tok.lemma = pick(L.contexts); break;
      }
      if (is_trigger(ft.slot)) trigger = idx;
      if (ft.key) keys.push_back(idx);
      s.tokens.push_back(std::move(tok));
    }
    std::sort(s.entities.begin(), s.entities.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t k = 0; k < s.tokens.size(); ++k) s.text += (k ? " " : "") + s.tokens[k].surface;

    if (!have_query[r][t]) {
      have_query[r][t] = true;
      std::string q;
      for (std::size_t k = 0; k < s.tokens.size(); ++k) {
        std::string w = s.tokens[k].surface;
        if (k == g.a1.start) w = "arg1:" + w;
        else if (k == g.a2.start) w = "arg2:" + w;
        else if (k == trigger || std::find(keys.begin(), keys.end(), k) != keys.end()) w = "$" + w;
        q += (k ? " " : "") + w;
      }
      out.queries.push_back({relation_name(r), t, std::move(q)});
    }
    out.sentences.push_back(std::move(s));
    out.gold.push_back(std::move(g));
  }
  std::sort(out.queries.begin(), out.queries.end(), [](const auto& a, const auto& b) {
    return std::tie(a.relation, a.template_id) < std::tie(b.relation, b.template_id);
  });
  return out;
}

/// Label file lines: {"sid", "relation", "relevant", "a1", "a2"}.
inline std::string gold_labels_jsonl(const std::vector<GoldLabel>& gold) {
  std::string out;
  for (const auto& g : gold) {
    nlohmann::ordered_json j;
    j["sid"] = g.sid;
    j["relation"] = g.relation;
    j["relevant"] = true;
    j["a1"] = {g.a1.start, g.a1.end};
    j["a2"] = {g.a2.start, g.a2.end};
    out += j.dump() + "\n";
  }
  return out;
}

/// Relation-pattern resource lines: {"relation", "query"}.
inline std::string relation_queries_jsonl(const std::vector<RelationQuery>& queries) {
  std::string out;
  for (const auto& q : queries) {
    nlohmann::ordered_json j;
    j["relation"] = q.relation;
    j["query"] = q.query;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace nes
