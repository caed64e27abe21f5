#pragma once

#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nes/align.hpp"
#include "nes/retrieval.hpp"
#include "nes/synth.hpp"

namespace nes {

// ---- labels --------------------------------------------------------------

struct RelevanceLabel {
  SentenceId sid = 0;
  std::string relation;
  bool relevant = false;
  std::optional<Span> a1;
  std::optional<Span> a2;
};

namespace detail {

inline std::optional<Span> read_span(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  const auto& v = j[key];
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned())
    fail(Errc::FormatError, std::string("'") + key + "' must be a [start, end] pair");
  return Span{v[0].get<std::uint32_t>(), v[1].get<std::uint32_t>()};
}

}  // namespace detail

inline std::vector<RelevanceLabel> read_labels(std::istream& in) {
  std::vector<RelevanceLabel> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RelevanceLabel l;
      l.sid = j.at("sid").get<SentenceId>();
      l.relation = j.at("relation").get<std::string>();
      l.relevant = j.at("relevant").get<bool>();
      l.a1 = detail::read_span(j, "a1");
      l.a2 = detail::read_span(j, "a2");
      if (!l.relevant && (l.a1 || l.a2)) fail(Errc::FormatError, "spans on an irrelevant label");
      out.push_back(std::move(l));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::FormatError, "label line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<RelevanceLabel> read_labels_text(const std::string& s) {
  std::istringstream in(s);
  return read_labels(in);
}

inline std::vector<RelevanceLabel> to_labels(const std::vector<GoldLabel>& gold) {
  std::vector<RelevanceLabel> out;
  for (const auto& g : gold) out.push_back({g.sid, g.relation, true, g.a1, g.a2});
  return out;
}

/// Judgments by (sentence, relation). A sentence labeled only for other
/// relations counts as irrelevant to the one asked about.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(const std::vector<RelevanceLabel>& labels) {
    for (const auto& l : labels) add(l);
  }

  void add(const RelevanceLabel& l) {
    by_key_[{l.sid, l.relation}] = l;
    labeled_.insert(l.sid);
  }

  const RelevanceLabel* find(SentenceId sid, const std::string& relation) const {
    auto it = by_key_.find({sid, relation});
    return it == by_key_.end() ? nullptr : &it->second;
  }

  bool relevant(SentenceId sid, const std::string& relation) const {
    if (const auto* l = find(sid, relation)) return l->relevant;
    if (labeled_.count(sid)) return false;
    fail(Errc::MissingLabel, "no label for sentence " + std::to_string(sid) + " / " + relation);
  }

 private:
  std::map<std::pair<SentenceId, std::string>, RelevanceLabel> by_key_;
  std::set<SentenceId> labeled_;
};

inline std::string format_percent(std::optional<double> frac) {
  if (!frac) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", *frac * 100.0);
  return buf;
}

// ---- relevancy -----------------------------------------------------------

struct RankBucket {
  std::string name;
  std::size_t first = 1;  // 1-based, inclusive
  std::size_t last = 10;
};

inline std::vector<RankBucket> default_buckets() { return {{"top", 1, 10}, {"tail", 91, 100}}; }

struct Tally {
  std::size_t relevant = 0;
  std::size_t total = 0;

  std::optional<double> fraction() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(relevant) / static_cast<double>(total);
  }
  void add(bool r) {
    ++total;
    relevant += r;
  }
};

struct RelevancyReport {
  std::vector<RankBucket> buckets;
  std::map<std::string, std::vector<Tally>> per_bucket;  // relation -> tally per bucket
  std::map<std::string, Tally> per_relation;
  std::vector<Tally> bucket_totals;
  Tally overall;

  std::string table() const {
    std::string out = "relation";
    for (const auto& b : buckets) out += "\t" + b.name;
    out += "\tall\n";
    for (const auto& [rel, tallies] : per_bucket) {
      out += rel;
      for (const auto& t : tallies) out += "\t" + format_percent(t.fraction());
      out += "\t" + format_percent(per_relation.at(rel).fraction()) + "\n";
    }
    out += "overall";
    for (const auto& t : bucket_totals) out += "\t" + format_percent(t.fraction());
    out += "\t" + format_percent(overall.fraction()) + "\n";
    return out;
  }

  nlohmann::ordered_json summary() const {
    nlohmann::ordered_json j;
    auto frac = [](const Tally& t) { return t.fraction() ? nlohmann::ordered_json(*t.fraction()) : nlohmann::ordered_json(); };
    j["overall"] = frac(overall);
    for (std::size_t b = 0; b < buckets.size(); ++b) j["buckets"][buckets[b].name] = frac(bucket_totals[b]);
    for (const auto& [rel, t] : per_relation) j["relations"][rel] = frac(t);
    return j;
  }
};

/// Scores ranked results per relation. Only ranks inside some bucket are
/// scored; each scored rank needs a label.
inline RelevancyReport relevancy_eval(const std::map<std::string, std::vector<SentenceId>>& ranked,
                                      const LabelSet& labels, std::vector<RankBucket> buckets = default_buckets()) {
  RelevancyReport rep;
  rep.buckets = std::move(buckets);
  rep.bucket_totals.assign(rep.buckets.size(), {});
  for (const auto& [rel, ids] : ranked) {
    auto& tallies = rep.per_bucket[rel];
    tallies.assign(rep.buckets.size(), {});
    Tally& rel_tally = rep.per_relation[rel];
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::size_t rank = i + 1;
      bool scored = false;
      std::optional<bool> judged;
      for (std::size_t b = 0; b < rep.buckets.size(); ++b) {
        if (rank < rep.buckets[b].first || rank > rep.buckets[b].last) continue;
        if (!judged) judged = labels.relevant(ids[i], rel);
        tallies[b].add(*judged);
        rep.bucket_totals[b].add(*judged);
        scored = true;
      }
      if (scored) {
        rel_tally.add(*judged);
        rep.overall.add(*judged);
      }
    }
  }
  return rep;
}

// ---- alignment -----------------------------------------------------------

struct AlignedPair {
  SentenceId sid = 0;
  Span a1;
  Span a2;
};

struct AlignmentScores {
  std::size_t args_correct = 0;
  std::size_t args_total = 0;
  std::size_t pairs_correct = 0;
  std::size_t pairs_total = 0;

  std::optional<double> per_arg() const {
    if (!args_total) return std::nullopt;
    return static_cast<double>(args_correct) / static_cast<double>(args_total);
  }
  std::optional<double> both_args() const {
    if (!pairs_total) return std::nullopt;
    return static_cast<double>(pairs_correct) / static_cast<double>(pairs_total);
  }

  nlohmann::ordered_json summary() const {
    nlohmann::ordered_json j;
    j["per_arg_accuracy"] = per_arg() ? nlohmann::ordered_json(*per_arg()) : nlohmann::ordered_json();
    j["both_args_accuracy"] = both_args() ? nlohmann::ordered_json(*both_args()) : nlohmann::ordered_json();
    j["args_correct"] = args_correct;
    j["args_total"] = args_total;
    j["pairs_correct"] = pairs_correct;
    j["pairs_total"] = pairs_total;
    return j;
  }
};

inline bool subset_match(const Span& gold, const Span& pred) { return gold.contains(pred) || pred.contains(gold); }

/// Predictions and gold are paired by position. When a corpus is given, spans
/// are also checked against sentence length.
inline AlignmentScores alignment_eval(const std::vector<AlignedPair>& predictions, const std::vector<AlignedPair>& gold,
                                      const Corpus* corpus = nullptr) {
  if (predictions.size() != gold.size())
    fail(Errc::InvalidArgument, "predictions and gold differ in length (" + std::to_string(predictions.size()) +
                                    " vs " + std::to_string(gold.size()) + ")");
  auto check = [&](const Span& s, SentenceId sid) {
    if (s.start >= s.end) fail(Errc::SpanOutOfBounds, "empty or inverted span in sentence " + std::to_string(sid));
    if (corpus && s.end > corpus->get(sid).size())
      fail(Errc::SpanOutOfBounds, "span exceeds sentence " + std::to_string(sid));
  };
  AlignmentScores sc;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = gold[i];
    if (p.sid != g.sid) fail(Errc::InvalidArgument, "prediction " + std::to_string(i) + " is for a different sentence");
    for (const Span* s : {&p.a1, &p.a2, &g.a1, &g.a2}) check(*s, g.sid);
    const bool ok1 = subset_match(g.a1, p.a1), ok2 = subset_match(g.a2, p.a2);
    sc.args_correct += ok1 + ok2;
    sc.args_total += 2;
    sc.pairs_correct += ok1 && ok2;
    ++sc.pairs_total;
  }
  return sc;
}

inline std::vector<AlignedPair> read_aligned_pairs(std::istream& in) {
  std::vector<AlignedPair> out;
  for (const auto& l : read_labels(in)) {
    if (!l.a1 || !l.a2) fail(Errc::FormatError, "alignment line for sentence " + std::to_string(l.sid) + " lacks spans");
    out.push_back({l.sid, *l.a1, *l.a2});
  }
  return out;
}

inline std::string aligned_pairs_jsonl(const std::vector<AlignedPair>& pairs, const std::string& relation = "") {
  std::string out;
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["sid"] = p.sid;
    j["relation"] = relation;
    j["relevant"] = true;
    j["a1"] = {p.a1.start, p.a1.end};
    j["a2"] = {p.a2.start, p.a2.end};
    out += j.dump() + "\n";
  }
  return out;
}

/// Aligns each pair's s1 arguments onto s2. Returns (predictions, gold).
inline std::pair<std::vector<AlignedPair>, std::vector<AlignedPair>> predict_pairs(
    const AlignModel& model, const std::vector<TrainingPair>& pairs, const EmbeddingProvider& provider) {
  std::pair<std::vector<AlignedPair>, std::vector<AlignedPair>> out;
  for (const auto& p : pairs) {
    if (p.s1_args.size() != 2 || p.s2_gold.size() != 2)
      fail(Errc::InvalidArgument, "alignment evaluation expects two-argument pairs");
    const auto pred = align(model, provider.embed_tokens(p.s1).rows, p.s1_args, provider.embed_tokens(p.s2).rows,
                            model.config.max_span_len);
    out.first.push_back({p.s2.id, pred.spans[0], pred.spans[1]});
    out.second.push_back({p.s2.id, p.s2_gold[0], p.s2_gold[1]});
  }
  return out;
}

// ---- symbolic vs neural --------------------------------------------------

struct TierStats {
  std::size_t count = 0;
  std::size_t unique_captures = 0;
  std::optional<double> precision;
};

struct Comparison {
  TierStats symbolic;
  TierStats neural;

  std::string table() const {
    std::string out = "tier\tcount\tunique\tprecision\n";
    auto row = [&](const char* name, const TierStats& t) {
      out += std::string(name) + "\t" + std::to_string(t.count) + "\t" + std::to_string(t.unique_captures) + "\t" +
             format_percent(t.precision) + "\n";
    };
    row("symbolic", symbolic);
    row("neural", neural);
    return out;
  }

  nlohmann::ordered_json summary() const {
    nlohmann::ordered_json j;
    for (auto [name, t] : {std::pair{"symbolic", &symbolic}, std::pair{"neural", &neural}}) {
      j[name]["count"] = t->count;
      j[name]["unique_captures"] = t->unique_captures;
      j[name]["precision"] = t->precision ? nlohmann::ordered_json(*t->precision) : nlohmann::ordered_json();
    }
    return j;
  }
};

/// Distinct (slot, lower-cased value) pairs.
inline std::size_t unique_captures(std::span<const ExtractionResult> results) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : results)
    for (const auto& [slot, v] : r.captures) seen.emplace(slot, text::lower(v.text));
  return seen.size();
}

inline TierStats tier_stats(std::span<const ExtractionResult> results, const LabelSet& labels,
                            const std::string& relation) {
  TierStats t;
  t.count = results.size();
  t.unique_captures = unique_captures(results);
  if (t.count) {
    std::size_t rel = 0;
    for (const auto& r : results) rel += labels.relevant(r.sentence_id, relation);
    t.precision = static_cast<double>(rel) / static_cast<double>(t.count);
  }
  return t;
}

/// Runs the query once through the streaming pipeline (all symbolic matches,
/// then up to cfg.k neural results) and scores each tier separately.
inline Comparison compare_symbolic_neural(const std::string& query_text, const SearchContext& ctx,
                                          const LabelSet& labels, const std::string& relation,
                                          const SessionConfig& cfg) {
  std::vector<ExtractionResult> sym, neu;
  extractive_neural_search(query_text, ctx, cfg, [&](const StreamRecord& rec) {
    if (const auto* r = std::get_if<ExtractionResult>(&rec))
      (r->source == ResultSource::symbolic ? sym : neu).push_back(*r);
    return true;
  });
  return {tier_stats(sym, labels, relation), tier_stats(neu, labels, relation)};
}

}  // namespace nes
