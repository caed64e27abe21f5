#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nes/error.hpp"
#include "nes/text.hpp"

namespace nes {

using SentenceId = std::uint64_t;

inline constexpr std::int32_t kRoot = -1;

struct Token {
  std::string surface;
  std::string lemma;
  std::string pos;
  std::int32_t head = kRoot;  // 0-based, or kRoot
  std::string deprel;

  friend bool operator==(const Token&, const Token&) = default;
};

/// Half-open token range [start, end).
struct EntitySpan {
  std::uint32_t start = 0;
  std::uint32_t end = 0;
  std::string label;

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

struct Sentence {
  SentenceId id = 0;
  std::string doc_id;
  std::string text;
  std::vector<Token> tokens;
  std::vector<EntitySpan> entities;

  std::size_t size() const { return tokens.size(); }

  /// Label of the entity covering token `i`, if any.
  const std::string* entity_at(std::size_t i) const {
    for (const auto& e : entities)
      if (i >= e.start && i < e.end) return &e.label;
    return nullptr;
  }

  std::vector<std::uint32_t> children(std::size_t i) const {
    std::vector<std::uint32_t> out;
    for (std::size_t j = 0; j < tokens.size(); ++j)
      if (tokens[j].head == static_cast<std::int32_t>(i)) out.push_back(static_cast<std::uint32_t>(j));
    return out;
  }

  std::size_t root() const {
    for (std::size_t j = 0; j < tokens.size(); ++j)
      if (tokens[j].head == kRoot) return j;
    return tokens.size();
  }

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

/// Checks the token/entity invariants; throws MalformedLine, CyclicParse or
/// OverlappingEntities.
inline void validate_sentence(const Sentence& s) {
  const auto n = static_cast<std::int32_t>(s.tokens.size());
  if (n == 0) fail(Errc::MalformedLine, "sentence " + std::to_string(s.id) + " has no tokens");
  int roots = 0;
  for (std::int32_t i = 0; i < n; ++i) {
    const Token& t = s.tokens[static_cast<std::size_t>(i)];
    if (t.surface.empty() || t.lemma.empty())
      fail(Errc::MalformedLine, "empty surface or lemma in sentence " + std::to_string(s.id));
    if (t.head == i) fail(Errc::CyclicParse, "token " + std::to_string(i) + " heads itself");
    if (t.head != kRoot && (t.head < 0 || t.head >= n))
      fail(Errc::MalformedLine, "head out of range in sentence " + std::to_string(s.id));
    if (t.head == kRoot) ++roots;
  }
  if (roots != 1)
    fail(Errc::CyclicParse, "sentence " + std::to_string(s.id) + " has " + std::to_string(roots) + " roots");
  // Every token must reach ROOT within n steps.
  for (std::int32_t i = 0; i < n; ++i) {
    std::int32_t cur = i;
    std::int32_t steps = 0;
    while (cur != kRoot) {
      cur = s.tokens[static_cast<std::size_t>(cur)].head;
      if (++steps > n) fail(Errc::CyclicParse, "cycle through token " + std::to_string(i));
    }
  }
  std::vector<const EntitySpan*> spans;
  for (const auto& e : s.entities) {
    if (e.start >= e.end || e.end > static_cast<std::uint32_t>(n))
      fail(Errc::MalformedLine, "entity span out of bounds in sentence " + std::to_string(s.id));
    spans.push_back(&e);
  }
  std::sort(spans.begin(), spans.end(), [](auto* a, auto* b) { return a->start < b->start; });
  for (std::size_t i = 1; i < spans.size(); ++i)
    if (spans[i]->start < spans[i - 1]->end)
      fail(Errc::OverlappingEntities, "overlapping entities in sentence " + std::to_string(s.id));
}

enum class KeyKind { word, lemma, entity };

/// Immutable, id-addressable sentence store with word / lemma / entity-label
/// posting lists. Word and lemma keys are case-folded; entity labels are exact.
class Corpus {
 public:
  Corpus() = default;

  explicit Corpus(std::vector<Sentence> sentences) : sentences_(std::move(sentences)) {
    by_id_.reserve(sentences_.size());
    for (std::size_t i = 0; i < sentences_.size(); ++i) {
      const Sentence& s = sentences_[i];
      validate_sentence(s);
      if (!by_id_.emplace(s.id, i).second)
        fail(Errc::InvalidArgument, "duplicate sentence id " + std::to_string(s.id));
    }
    rebuild_indexes();
  }

  std::size_t size() const { return sentences_.size(); }
  bool empty() const { return sentences_.empty(); }
  const std::vector<Sentence>& sentences() const { return sentences_; }

  const Sentence* find(SentenceId id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &sentences_[it->second];
  }

  const Sentence& get(SentenceId id) const {
    const Sentence* s = find(id);
    if (!s) fail(Errc::UnknownId, "no sentence with id " + std::to_string(id));
    return *s;
  }

  /// Ids of sentences containing `key`, ascending. Unknown keys yield [].
  const std::vector<SentenceId>& candidate_ids(KeyKind kind, const std::string& key) const {
    static const std::vector<SentenceId> kEmpty;
    const auto& idx = index_for(kind);
    auto it = idx.find(kind == KeyKind::entity ? key : text::lower(key));
    return it == idx.end() ? kEmpty : it->second;
  }

  friend bool operator==(const Corpus& a, const Corpus& b) { return a.sentences_ == b.sentences_; }

 private:
  using Postings = std::unordered_map<std::string, std::vector<SentenceId>>;

  const Postings& index_for(KeyKind kind) const {
    switch (kind) {
      case KeyKind::word: return words_;
      case KeyKind::lemma: return lemmas_;
      case KeyKind::entity: return entities_;
    }
    return words_;
  }

  static void post(Postings& idx, const std::string& key, SentenceId id) {
    auto& list = idx[key];
    if (list.empty() || list.back() != id) list.push_back(id);
  }

  void rebuild_indexes() {
    for (const Sentence& s : sentences_) {
      for (const Token& t : s.tokens) {
        post(words_, text::lower(t.surface), s.id);
        post(lemmas_, text::lower(t.lemma), s.id);
      }
      for (const EntitySpan& e : s.entities) post(entities_, e.label, s.id);
    }
    // Posting lists are appended in storage order; sort and dedupe for
    // corpora whose ids are not monotone in storage.
    for (Postings* idx : {&words_, &lemmas_, &entities_}) {
      for (auto& [key, list] : *idx) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
      }
    }
  }

  std::vector<Sentence> sentences_;
  std::unordered_map<SentenceId, std::size_t> by_id_;
  Postings words_, lemmas_, entities_;
};

/// Space-joined surface text.
inline std::string span_text(const Sentence& s, std::uint32_t start, std::uint32_t end) {
  std::string out;
  for (std::uint32_t i = start; i < end && i < s.tokens.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += s.tokens[i].surface;
  }
  return out;
}

}  // namespace nes
