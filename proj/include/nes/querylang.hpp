#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "nes/conllu.hpp"
#include "nes/corpus.hpp"
#include "nes/error.hpp"
#include "nes/text.hpp"

namespace nes {

// ---- query model ---------------------------------------------------------

enum class TokenRole { plain, anchor, capture };

struct QueryToken {
  std::string surface;
  TokenRole role = TokenRole::plain;
  std::string capture_name;                      // captures only
  std::optional<std::string> entity_constraint;  // captures only

  friend bool operator==(const QueryToken&, const QueryToken&) = default;
};

struct ByExampleQuery {
  std::vector<QueryToken> tokens;
  std::optional<Sentence> example_parse;

  /// Capture names in token order.
  std::vector<std::string> capture_names() const {
    std::vector<std::string> out;
    for (const auto& t : tokens)
      if (t.role == TokenRole::capture) out.push_back(t.capture_name);
    return out;
  }

  friend bool operator==(const ByExampleQuery&, const ByExampleQuery&) = default;
};

struct EntityCapture {
  std::string name;
  std::string label;
  bool anonymous = false;  // written as a bare `:entity=LABEL`

  friend bool operator==(const EntityCapture&, const EntityCapture&) = default;
};

struct BooleanQuery {
  std::vector<std::string> required_terms;
  std::vector<EntityCapture> capture_constraints;

  friend bool operator==(const BooleanQuery&, const BooleanQuery&) = default;
};

using Query = std::variant<BooleanQuery, ByExampleQuery>;

// ---- syntactic pattern ---------------------------------------------------

struct PatternNode {
  std::optional<std::string> word;
  std::optional<std::string> lemma;
  std::optional<std::string> entity;
  std::optional<std::string> capture;
  std::uint32_t source_token = 0;  // position in the example parse

  bool wildcard() const { return !word && !lemma; }

  friend bool operator==(const PatternNode&, const PatternNode&) = default;
};

struct PatternEdge {
  std::uint32_t parent = 0;
  std::uint32_t child = 0;
  std::string deprel;

  friend bool operator==(const PatternEdge&, const PatternEdge&) = default;
};

/// Constraint tree. Nodes are stored in example-token order; `root` indexes
/// into `nodes`.
struct SyntacticPattern {
  std::vector<PatternNode> nodes;
  std::vector<PatternEdge> edges;
  std::uint32_t root = 0;

  std::vector<std::string> capture_names() const {
    std::vector<std::string> out;
    for (const auto& n : nodes)
      if (n.capture) out.push_back(*n.capture);
    return out;
  }

  /// Outgoing edges per node, in edge order.
  std::vector<std::vector<const PatternEdge*>> child_edges() const {
    std::vector<std::vector<const PatternEdge*>> out(nodes.size());
    for (const auto& e : edges) out[e.parent].push_back(&e);
    return out;
  }

  friend bool operator==(const SyntacticPattern&, const SyntacticPattern&) = default;
};

/// Throws InvalidArgument unless the edges form a tree rooted at `root`.
inline void validate_pattern(const SyntacticPattern& p) {
  const std::size_t n = p.nodes.size();
  if (n == 0) fail(Errc::InvalidArgument, "pattern has no nodes");
  if (p.root >= n) fail(Errc::InvalidArgument, "pattern root out of range");
  if (p.edges.size() != n - 1) fail(Errc::InvalidArgument, "pattern edges do not form a tree");
  std::vector<int> parents(n, 0);
  for (const auto& e : p.edges) {
    if (e.parent >= n || e.child >= n || e.child == p.root)
      fail(Errc::InvalidArgument, "bad pattern edge");
    ++parents[e.child];
  }
  for (std::size_t i = 0; i < n; ++i)
    if (i != p.root && parents[i] != 1) fail(Errc::InvalidArgument, "pattern node without unique parent");
  std::vector<bool> seen(n, false);
  std::vector<std::uint32_t> stack{p.root};
  const auto kids = p.child_edges();
  std::size_t reached = 0;
  while (!stack.empty()) {
    auto u = stack.back();
    stack.pop_back();
    if (seen[u]) fail(Errc::InvalidArgument, "pattern has a cycle");
    seen[u] = true;
    ++reached;
    for (const auto* e : kids[u]) stack.push_back(e->child);
  }
  if (reached != n) fail(Errc::InvalidArgument, "pattern is disconnected");
}

// ---- parsing -------------------------------------------------------------

namespace detail {

inline bool valid_capture_name(std::string_view s) {
  if (s.empty()) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    const bool alpha = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
    const bool digit = c >= '0' && c <= '9';
    if (!(alpha || (digit && i > 0))) return false;
  }
  return true;
}

inline constexpr std::string_view kEntityPrefix = "entity=";

inline std::string entity_label(std::string_view spec, const std::string& token) {
  // spec is the text after ':' and starts with "entity="
  std::string label(spec.substr(kEntityPrefix.size()));
  if (label.empty()) fail(Errc::BadSyntax, "empty entity label in '" + token + "'");
  return label;
}

}  // namespace detail

inline constexpr std::string_view kParseSeparator = "|||";

/// Parses query text.
///   `$word`                   anchor (lemma + word must match)
///   `name:word`               capture named `name` on this token
///   `name:word:entity=LABEL`  capture restricted to an entity type
///   `:entity=LABEL`           anonymous entity capture (boolean queries)
///   `name:entity=LABEL`       named entity capture (boolean queries)
///   anything else             plain word
/// Any anchor or token capture makes the query by-example. An inline CoNLL-U
/// block after `|||` becomes the example parse.
inline Query parse_query(std::string_view input) {
  std::string_view query_text = input;
  std::optional<Sentence> attached;
  if (auto sep = input.find(kParseSeparator); sep != std::string_view::npos) {
    query_text = input.substr(0, sep);
    const std::string block(text::trim(input.substr(sep + kParseSeparator.size())));
    Corpus c = ingest_conllu_text(block);
    if (c.size() != 1) fail(Errc::BadSyntax, "attached parse must hold exactly one sentence");
    attached = c.sentences().front();
  }

  const auto words = text::split_ws(query_text);
  if (words.empty()) fail(Errc::EmptyQuery, "query is empty");

  std::vector<QueryToken> tokens;
  std::vector<EntityCapture> entity_caps;
  bool by_example = false;

  for (const auto& w : words) {
    if (w[0] == '$') {
      if (w.size() == 1) fail(Errc::BadSyntax, "'$' without a word");
      tokens.push_back(QueryToken{w.substr(1), TokenRole::anchor, {}, {}});
      by_example = true;
      continue;
    }
    const auto colon = w.find(':');
    if (colon == std::string::npos) {
      tokens.push_back(QueryToken{w, TokenRole::plain, {}, {}});
      continue;
    }
    const std::string_view name = std::string_view(w).substr(0, colon);
    const std::string_view rest = std::string_view(w).substr(colon + 1);
    if (name.empty()) {
      if (rest.rfind(detail::kEntityPrefix, 0) != 0) fail(Errc::BadSyntax, "unexpected ':' in '" + w + "'");
      entity_caps.push_back(EntityCapture{"", detail::entity_label(rest, w), true});
      continue;
    }
    if (!detail::valid_capture_name(name)) {
      tokens.push_back(QueryToken{w, TokenRole::plain, {}, {}});
      continue;
    }
    if (rest.empty()) fail(Errc::BadSyntax, "capture '" + std::string(name) + ":' has no word");
    if (rest.rfind(detail::kEntityPrefix, 0) == 0) {
      entity_caps.push_back(EntityCapture{std::string(name), detail::entity_label(rest, w), false});
      continue;
    }
    QueryToken qt{std::string(rest), TokenRole::capture, std::string(name), {}};
    if (auto c2 = rest.find(':'); c2 != std::string_view::npos) {
      const std::string_view spec = rest.substr(c2 + 1);
      if (c2 == 0 || spec.rfind(detail::kEntityPrefix, 0) != 0)
        fail(Errc::BadSyntax, "malformed capture '" + w + "'");
      qt.surface = std::string(rest.substr(0, c2));
      qt.entity_constraint = detail::entity_label(spec, w);
    }
    tokens.push_back(std::move(qt));
    by_example = true;
  }

  std::set<std::string> names;
  auto claim = [&](const std::string& n) {
    if (!names.insert(n).second) fail(Errc::DuplicateCaptureName, "capture name '" + n + "' used twice");
  };
  for (const auto& t : tokens)
    if (t.role == TokenRole::capture) claim(t.capture_name);
  for (const auto& e : entity_caps)
    if (!e.anonymous) claim(e.name);

  if (by_example) {
    if (!entity_caps.empty())
      fail(Errc::BadSyntax, "entity captures without a word are only valid in boolean queries");
    ByExampleQuery q{std::move(tokens), std::move(attached)};
    bool any_capture = false, any_anchor_or_entity = false;
    for (const auto& t : q.tokens) {
      any_capture |= t.role == TokenRole::capture;
      any_anchor_or_entity |= t.role == TokenRole::anchor || t.entity_constraint.has_value();
    }
    if (!any_capture) fail(Errc::BadSyntax, "by-example query needs at least one capture");
    if (!any_anchor_or_entity)
      fail(Errc::BadSyntax, "by-example query needs an anchor or an entity constraint");
    return q;
  }

  if (attached) fail(Errc::BadSyntax, "an attached parse requires a by-example query");
  BooleanQuery q;
  for (auto& t : tokens) q.required_terms.push_back(std::move(t.surface));
  // Anonymous captures are named after their label, lower-cased, suffixed on clash.
  for (auto& e : entity_caps) {
    if (!e.anonymous) continue;
    const std::string base = text::lower(e.label);
    std::string candidate = base;
    for (int k = 2; names.count(candidate); ++k) candidate = base + std::to_string(k);
    names.insert(candidate);
    e.name = candidate;
  }
  q.capture_constraints = std::move(entity_caps);
  return q;
}

/// Canonical text form; `parse_query(render(q)) == q`.
inline std::string render(const Query& query) {
  std::vector<std::string> parts;
  std::string suffix;
  if (const auto* b = std::get_if<BooleanQuery>(&query)) {
    for (const auto& t : b->required_terms) parts.push_back(t);
    for (const auto& e : b->capture_constraints)
      parts.push_back((e.anonymous ? std::string() : e.name) + ":entity=" + e.label);
  } else {
    const auto& q = std::get<ByExampleQuery>(query);
    for (const auto& t : q.tokens) {
      switch (t.role) {
        case TokenRole::plain: parts.push_back(t.surface); break;
        case TokenRole::anchor: parts.push_back("$" + t.surface); break;
        case TokenRole::capture:
          parts.push_back(t.capture_name + ":" + t.surface +
                          (t.entity_constraint ? ":entity=" + *t.entity_constraint : std::string()));
          break;
      }
    }
    if (q.example_parse) suffix = " ||| " + to_conllu({*q.example_parse});
  }
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : " ") + p;
  return out + suffix;
}

// ---- pattern derivation --------------------------------------------------

/// Minimal connected subtree of `parse` covering every anchor and capture
/// token. Anchors constrain word + lemma, captures are wildcards (optionally
/// entity-typed), interior path nodes constrain lemma only.
inline SyntacticPattern derive_pattern(const ByExampleQuery& query, const Sentence& parse) {
  const std::size_t n = parse.tokens.size();
  if (query.tokens.size() != n)
    fail(Errc::TokenMismatch, "query has " + std::to_string(query.tokens.size()) + " tokens, parse has " +
                                  std::to_string(n));
  for (std::size_t i = 0; i < n; ++i)
    if (!text::iequals(query.tokens[i].surface, parse.tokens[i].surface))
      fail(Errc::TokenMismatch, "token " + std::to_string(i) + ": '" + query.tokens[i].surface + "' vs '" +
                                    parse.tokens[i].surface + "'");

  std::vector<std::uint32_t> marked;
  for (std::size_t i = 0; i < n; ++i)
    if (query.tokens[i].role != TokenRole::plain) marked.push_back(static_cast<std::uint32_t>(i));
  if (marked.empty()) fail(Errc::NoMarkedTokens, "query marks no anchor or capture");

  auto path_to_root = [&](std::uint32_t t) {
    std::vector<std::uint32_t> path{t};
    while (parse.tokens[path.back()].head != kRoot)
      path.push_back(static_cast<std::uint32_t>(parse.tokens[path.back()].head));
    return path;
  };

  // Common ancestor of all marked tokens: deepest node shared by every root path.
  std::vector<std::uint32_t> common = path_to_root(marked.front());
  std::reverse(common.begin(), common.end());
  for (std::size_t m = 1; m < marked.size(); ++m) {
    auto p = path_to_root(marked[m]);
    std::reverse(p.begin(), p.end());
    std::size_t k = 0;
    while (k < common.size() && k < p.size() && common[k] == p[k]) ++k;
    common.resize(k);
  }
  const std::uint32_t top = common.back();

  std::vector<bool> in_pattern(n, false);
  in_pattern[top] = true;
  for (std::uint32_t m : marked) {
    for (std::uint32_t t = m; t != top; t = static_cast<std::uint32_t>(parse.tokens[t].head)) in_pattern[t] = true;
  }

  SyntacticPattern pat;
  std::vector<std::uint32_t> node_of(n, UINT32_MAX);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!in_pattern[i]) continue;
    node_of[i] = static_cast<std::uint32_t>(pat.nodes.size());
    const QueryToken& qt = query.tokens[i];
    const Token& tok = parse.tokens[i];
    PatternNode node;
    node.source_token = i;
    switch (qt.role) {
      case TokenRole::anchor:
        node.word = tok.surface;
        node.lemma = tok.lemma;
        break;
      case TokenRole::capture:
        node.capture = qt.capture_name;
        node.entity = qt.entity_constraint;
        break;
      case TokenRole::plain:
        node.lemma = tok.lemma;
        break;
    }
    pat.nodes.push_back(std::move(node));
  }
  pat.root = node_of[top];
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!in_pattern[i] || i == top) continue;
    const auto h = static_cast<std::uint32_t>(parse.tokens[i].head);
    pat.edges.push_back(PatternEdge{node_of[h], node_of[i], parse.tokens[i].deprel});
  }
  return pat;
}

/// The query's attached parse, or the first corpus sentence whose surface
/// tokens equal the query's.
inline Sentence resolve_example_parse(const ByExampleQuery& query, const Corpus& corpus) {
  if (query.example_parse) return *query.example_parse;
  for (const Sentence& s : corpus.sentences()) {
    if (s.tokens.size() != query.tokens.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < s.tokens.size() && same; ++i) same = s.tokens[i].surface == query.tokens[i].surface;
    if (same) return s;
  }
  fail(Errc::NoParseAvailable, "no parse attached and no corpus sentence matches the query tokens");
}

/// parse_query + resolve_example_parse + derive_pattern for by-example text.
inline SyntacticPattern compile_by_example(const std::string& query_text, const Corpus& corpus) {
  Query q = parse_query(query_text);
  const auto* bx = std::get_if<ByExampleQuery>(&q);
  if (!bx) fail(Errc::NotByExample, "expected a by-example query: '" + query_text + "'");
  return derive_pattern(*bx, resolve_example_parse(*bx, corpus));
}

}  // namespace nes
