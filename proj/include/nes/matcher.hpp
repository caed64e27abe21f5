#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nes/corpus.hpp"
#include "nes/querylang.hpp"
#include "nes/text.hpp"

namespace nes {

struct Span {
  std::uint32_t start = 0;
  std::uint32_t end = 0;

  std::uint32_t length() const { return end - start; }
  bool contains(const Span& o) const { return start <= o.start && o.end <= end; }

  friend auto operator<=>(const Span&, const Span&) = default;
};

struct Match {
  SentenceId sentence_id = 0;
  std::map<std::string, Span> captures;
  std::vector<std::uint32_t> matched_nodes;  // pattern node -> token (empty for boolean matches)

  friend bool operator==(const Match&, const Match&) = default;
  friend auto operator<=>(const Match& a, const Match& b) {
    if (auto c = a.sentence_id <=> b.sentence_id; c != 0) return c;
    if (auto c = a.matched_nodes <=> b.matched_nodes; c != 0) return c;
    return a.captures <=> b.captures;
  }
};

enum class CaptureMode { token, subtree };

struct ExpandedSpan {
  Span span;
  bool non_contiguous = false;  // subtree had gaps; span fell back to the token
};

/// Span for a token under `mode`. Subtree mode covers the token's dependency
/// subtree when it is contiguous, and falls back to the token otherwise.
inline ExpandedSpan expand_token(const Sentence& s, std::uint32_t token, CaptureMode mode) {
  const Span single{token, token + 1};
  if (mode == CaptureMode::token) return {single, false};
  std::vector<std::uint32_t> members{token};
  for (std::size_t k = 0; k < members.size(); ++k)
    for (std::uint32_t c : s.children(members[k])) members.push_back(c);
  const auto [lo, hi] = std::minmax_element(members.begin(), members.end());
  if (static_cast<std::size_t>(*hi - *lo + 1) != members.size()) return {single, true};
  return {Span{*lo, *hi + 1}, false};
}

/// Re-expands a pattern capture of `m` under `mode`.
inline ExpandedSpan expand_capture(const Match& m, const Sentence& s, const std::string& capture_name,
                                   CaptureMode mode) {
  auto it = m.captures.find(capture_name);
  if (it == m.captures.end()) fail(Errc::InvalidArgument, "match has no capture '" + capture_name + "'");
  // A multi-token capture was expanded already; its head is the token whose
  // parent lies outside the span.
  const Span sp = it->second;
  std::uint32_t token = sp.start;
  for (std::uint32_t t = sp.start; t < sp.end && sp.length() > 1; ++t) {
    const auto h = s.tokens[t].head;
    if (h == kRoot || static_cast<std::uint32_t>(h) < sp.start || static_cast<std::uint32_t>(h) >= sp.end) {
      token = t;
      break;
    }
  }
  return expand_token(s, token, mode);
}

namespace detail {

inline bool node_accepts(const PatternNode& node, const Sentence& s, std::uint32_t t) {
  const Token& tok = s.tokens[t];
  if (node.word && !text::iequals(*node.word, tok.surface)) return false;
  if (node.lemma && !text::iequals(*node.lemma, tok.lemma)) return false;
  if (node.entity) {
    const std::string* label = s.entity_at(t);
    if (!label || *label != *node.entity) return false;
  }
  return true;
}

inline Match make_match(const SyntacticPattern& p, const Sentence& s, std::vector<std::uint32_t> assignment,
                        CaptureMode mode) {
  Match m;
  m.sentence_id = s.id;
  for (std::size_t i = 0; i < p.nodes.size(); ++i)
    if (p.nodes[i].capture) m.captures[*p.nodes[i].capture] = expand_token(s, assignment[i], mode).span;
  m.matched_nodes = std::move(assignment);
  return m;
}

// Tree-guided embedding: place `node` at `token`, then distribute its pattern
// children over distinct dependency children of `token`.
class TreeEmbedder {
 public:
  TreeEmbedder(const SyntacticPattern& p, const Sentence& s)
      : p_(p), s_(s), kids_(p.child_edges()), assign_(p.nodes.size(), UINT32_MAX) {
    token_children_.resize(s.tokens.size());
    for (std::uint32_t j = 0; j < s.tokens.size(); ++j)
      if (s.tokens[j].head != kRoot) token_children_[static_cast<std::size_t>(s.tokens[j].head)].push_back(j);
  }

  std::vector<std::vector<std::uint32_t>> all() {
    std::vector<std::vector<std::uint32_t>> out;
    for (std::uint32_t t = 0; t < s_.tokens.size(); ++t) {
      if (!node_accepts(p_.nodes[p_.root], s_, t)) continue;
      assign_[p_.root] = t;
      // Frontier of (pattern edge) still to place, in DFS order.
      std::vector<const PatternEdge*> todo(kids_[p_.root].rbegin(), kids_[p_.root].rend());
      place(todo, out);
    }
    return out;
  }

 private:
  void place(std::vector<const PatternEdge*>& todo, std::vector<std::vector<std::uint32_t>>& out) {
    if (todo.empty()) {
      out.push_back(assign_);
      return;
    }
    const PatternEdge* e = todo.back();
    todo.pop_back();
    const std::uint32_t parent_tok = assign_[e->parent];
    for (std::uint32_t c : token_children_[parent_tok]) {
      if (s_.tokens[c].deprel != e->deprel || !node_accepts(p_.nodes[e->child], s_, c)) continue;
      if (sibling_taken(e->parent, c)) continue;
      assign_[e->child] = c;
      const std::size_t before = todo.size();
      for (auto it = kids_[e->child].rbegin(); it != kids_[e->child].rend(); ++it) todo.push_back(*it);
      place(todo, out);
      todo.resize(before);
      assign_[e->child] = UINT32_MAX;
    }
    todo.push_back(e);
  }

  bool sibling_taken(std::uint32_t parent_node, std::uint32_t token) const {
    for (const PatternEdge* k : kids_[parent_node])
      if (assign_[k->child] == token) return true;
    return false;
  }

  const SyntacticPattern& p_;
  const Sentence& s_;
  std::vector<std::vector<const PatternEdge*>> kids_;
  std::vector<std::vector<std::uint32_t>> token_children_;
  std::vector<std::uint32_t> assign_;
};

inline std::vector<SentenceId> intersect(const std::vector<SentenceId>& a, const std::vector<SentenceId>& b) {
  std::vector<SentenceId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace detail

/// Every embedding of `pattern` into corpus parse trees, ordered by sentence
/// id then node assignment, truncated at `limit`.
inline std::vector<Match> match_pattern(const SyntacticPattern& pattern, const Corpus& corpus,
                                        std::optional<std::size_t> limit = std::nullopt,
                                        CaptureMode mode = CaptureMode::token) {
  validate_pattern(pattern);
  std::vector<Match> out;
  if (limit && *limit == 0) return out;

  // Prefilter: intersect posting lists of every lexically constrained node.
  std::optional<std::vector<SentenceId>> candidates;
  auto narrow = [&](KeyKind kind, const std::string& key) {
    const auto& ids = corpus.candidate_ids(kind, key);
    candidates = candidates ? detail::intersect(*candidates, ids) : ids;
  };
  for (const auto& node : pattern.nodes) {
    if (node.lemma) narrow(KeyKind::lemma, *node.lemma);
    if (node.word) narrow(KeyKind::word, *node.word);
    if (node.entity) narrow(KeyKind::entity, *node.entity);
  }

  auto visit = [&](const Sentence& s) {
    if (s.tokens.size() < pattern.nodes.size()) return true;
    auto embeddings = detail::TreeEmbedder(pattern, s).all();
    std::sort(embeddings.begin(), embeddings.end());
    for (auto& a : embeddings) {
      out.push_back(detail::make_match(pattern, s, std::move(a), mode));
      if (limit && out.size() >= *limit) return false;
    }
    return true;
  };

  if (candidates) {
    for (SentenceId id : *candidates)
      if (!visit(corpus.get(id))) break;
  } else {
    std::vector<const Sentence*> order;
    for (const auto& s : corpus.sentences()) order.push_back(&s);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (const Sentence* s : order)
      if (!visit(*s)) break;
  }
  return out;
}

/// Reference matcher: tries every injective node -> token assignment and keeps
/// those satisfying all node and edge constraints. No index, no tree walk.
inline std::vector<Match> brute_force_match(const SyntacticPattern& pattern, const Corpus& corpus,
                                            CaptureMode mode = CaptureMode::token) {
  validate_pattern(pattern);
  std::vector<Match> out;
  const std::size_t k = pattern.nodes.size();
  std::vector<const PatternEdge*> parent_edge(k, nullptr);
  for (const auto& e : pattern.edges) parent_edge[e.child] = &e;

  for (const Sentence& s : corpus.sentences()) {
    const std::size_t n = s.tokens.size();
    if (n < k) continue;
    std::vector<std::uint32_t> assign(k, 0);
    std::vector<bool> used(n, false);
    // Odometer over assignments; node constraints pruned as each node is set.
    auto rec = [&](auto&& self, std::size_t i) -> void {
      if (i == k) {
        for (std::size_t v = 0; v < k; ++v) {
          const PatternEdge* e = parent_edge[v];
          if (!e) continue;
          const Token& t = s.tokens[assign[v]];
          if (t.head != static_cast<std::int32_t>(assign[e->parent]) || t.deprel != e->deprel) return;
        }
        out.push_back(detail::make_match(pattern, s, assign, mode));
        return;
      }
      for (std::uint32_t t = 0; t < n; ++t) {
        if (used[t] || !detail::node_accepts(pattern.nodes[i], s, t)) continue;
        used[t] = true;
        assign[i] = t;
        self(self, i + 1);
        used[t] = false;
      }
    };
    rec(rec, 0);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Sentences containing every required term (word or lemma) and, per entity
/// constraint, a distinct entity of that label. One match per assignment.
inline std::vector<Match> match_boolean(const BooleanQuery& query, const Corpus& corpus) {
  std::optional<std::vector<SentenceId>> candidates;
  auto narrow = [&](const std::vector<SentenceId>& ids) {
    candidates = candidates ? detail::intersect(*candidates, ids) : ids;
  };
  for (const auto& term : query.required_terms) {
    const auto& w = corpus.candidate_ids(KeyKind::word, term);
    const auto& l = corpus.candidate_ids(KeyKind::lemma, term);
    std::vector<SentenceId> either;
    std::set_union(w.begin(), w.end(), l.begin(), l.end(), std::back_inserter(either));
    narrow(either);
  }
  for (const auto& c : query.capture_constraints) narrow(corpus.candidate_ids(KeyKind::entity, c.label));

  std::vector<SentenceId> ids;
  if (candidates) {
    ids = *candidates;
  } else {
    for (const auto& s : corpus.sentences()) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());
  }

  std::vector<Match> out;
  for (SentenceId id : ids) {
    const Sentence& s = corpus.get(id);
    std::vector<std::vector<Span>> options;
    for (const auto& c : query.capture_constraints) {
      std::vector<Span> spans;
      for (const auto& e : s.entities)
        if (e.label == c.label) spans.push_back(Span{e.start, e.end});
      std::sort(spans.begin(), spans.end());
      options.push_back(std::move(spans));
    }
    std::vector<Span> chosen(options.size());
    auto rec = [&](auto&& self, std::size_t i) -> void {
      if (i == options.size()) {
        Match m;
        m.sentence_id = id;
        for (std::size_t k = 0; k < chosen.size(); ++k) m.captures[query.capture_constraints[k].name] = chosen[k];
        out.push_back(std::move(m));
        return;
      }
      for (const Span& sp : options[i]) {
        if (std::find(chosen.begin(), chosen.begin() + static_cast<std::ptrdiff_t>(i), sp) !=
            chosen.begin() + static_cast<std::ptrdiff_t>(i))
          continue;
        chosen[i] = sp;
        self(self, i + 1);
      }
    };
    rec(rec, 0);
  }
  return out;
}

}  // namespace nes
