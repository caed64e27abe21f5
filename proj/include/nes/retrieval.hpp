#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "nes/align.hpp"
#include "nes/corpus.hpp"
#include "nes/embed.hpp"
#include "nes/index.hpp"
#include "nes/knn.hpp"
#include "nes/matcher.hpp"
#include "nes/querylang.hpp"

namespace nes {

// ---- query encoding ------------------------------------------------------

struct QueryVector {
  std::vector<float> vector;
  std::size_t pool_size = 0;
  std::vector<SentenceId> pool_ids;  // ascending
};

/// Mean of the reduced vectors of `ids` (deduplicated, summed in id order so
/// the result does not depend on the order ids arrive in).
inline QueryVector mean_pool(std::span<const SentenceId> ids, const Corpus& corpus, const EmbeddingProvider& provider,
                             const PcaModel& pca) {
  std::vector<SentenceId> pool(ids.begin(), ids.end());
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  if (pool.empty()) fail(Errc::NoSymbolicResults, "empty symbolic pool");
  std::vector<double> acc(pca.output_dim(), 0.0);
  for (SentenceId id : pool) {
    const auto v = reduced_sentence_vector(provider, pca, corpus.get(id));
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
  }
  QueryVector q;
  q.vector.resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i)
    q.vector[i] = static_cast<float>(acc[i] / static_cast<double>(pool.size()));
  q.pool_size = pool.size();
  q.pool_ids = std::move(pool);
  return q;
}

/// Dense query from the first `pool_cap` symbolic matches (corpus order).
inline QueryVector encode_query(const SyntacticPattern& pattern, const Corpus& corpus,
                                const EmbeddingProvider& provider, const PcaModel& pca, std::size_t pool_cap = 75) {
  const auto matches = match_pattern(pattern, corpus, pool_cap);
  if (matches.empty()) fail(Errc::NoSymbolicResults, "the symbolic query has no matches");
  std::vector<SentenceId> ids;
  for (const auto& m : matches) ids.push_back(m.sentence_id);
  return mean_pool(ids, corpus, provider, pca);
}

// ---- neural search -------------------------------------------------------

using NeighborSink = std::function<bool(std::span<const Neighbor>)>;

/// k nearest indexed sentences not in `exclude`, delivered in ascending-distance
/// batches. `nprobe == 0` searches exactly. Returns false if the sink stopped early.
inline bool neural_search(const QueryVector& q, const IndexBundle& index, std::size_t k,
                          const std::unordered_set<SentenceId>& exclude, std::size_t nprobe, std::size_t batch_size,
                          const NeighborSink& sink) {
  if (k < 1) fail(Errc::InvalidArgument, "k must be at least 1");
  if (batch_size < 1) batch_size = 1;
  std::size_t excluded_in_index = 0;
  for (SentenceId id : exclude) excluded_in_index += index.exact().row_of(id).has_value();
  const std::size_t want = k + excluded_in_index;
  const auto hits = nprobe == 0 ? search_exact(index.exact(), q.vector, want)
                                : search_ivf(index.ivf, q.vector, want, nprobe);
  std::vector<Neighbor> kept;
  for (const auto& h : hits) {
    if (exclude.count(h.id)) continue;
    kept.push_back(h);
    if (kept.size() == k) break;
  }
  for (std::size_t i = 0; i < kept.size(); i += batch_size) {
    const std::size_t len = std::min(batch_size, kept.size() - i);
    if (!sink(std::span<const Neighbor>(kept.data() + i, len))) return false;
  }
  return true;
}

// ---- extraction results --------------------------------------------------

enum class ResultSource { symbolic, neural };

struct CaptureValue {
  Span span;
  std::string text;

  friend bool operator==(const CaptureValue&, const CaptureValue&) = default;
};

struct ExtractionResult {
  SentenceId sentence_id = 0;
  ResultSource source = ResultSource::symbolic;
  std::optional<double> distance;  // neural only
  std::map<std::string, CaptureValue> captures;
  bool collision = false;

  friend bool operator==(const ExtractionResult&, const ExtractionResult&) = default;
};

struct SearchSummary {
  std::size_t symbolic = 0;
  std::size_t neural = 0;
  std::size_t filtered = 0;  // neural hits dropped by the keyword filter
  std::size_t pool_size = 0;
  double elapsed_ms = 0.0;
  bool aborted = false;
};

using StreamRecord = std::variant<ExtractionResult, SearchSummary>;
using RecordSink = std::function<bool(const StreamRecord&)>;

struct SessionConfig {
  std::size_t k = 10;
  std::size_t pool_cap = 75;
  std::optional<std::string> keyword_filter;
  CaptureMode capture_display_mode = CaptureMode::subtree;
  std::size_t nprobe = 0;  // 0: exact search
  std::optional<std::size_t> symbolic_limit;
  std::size_t batch_size = 10;
};

struct SearchContext {
  const Corpus* corpus = nullptr;
  const IndexBundle* index = nullptr;
  const EmbeddingProvider* provider = nullptr;
  const AlignModel* model = nullptr;
};

inline bool contains_keyword(const Sentence& s, const std::string& keyword) {
  if (keyword.find(' ') != std::string::npos) return text::lower(s.text).find(text::lower(keyword)) != std::string::npos;
  for (const auto& t : s.tokens)
    if (text::iequals(t.surface, keyword)) return true;
  return false;
}

inline ExtractionResult symbolic_result(const Match& m, const Sentence& s, CaptureMode display) {
  ExtractionResult r;
  r.sentence_id = m.sentence_id;
  r.source = ResultSource::symbolic;
  for (const auto& [name, span] : m.captures) {
    // Pattern matches carry token-mode spans; boolean matches carry entity spans.
    const Span shown = (display == CaptureMode::subtree && span.length() == 1 && !m.matched_nodes.empty())
                           ? expand_token(s, span.start, CaptureMode::subtree).span
                           : span;
    r.captures[name] = CaptureValue{shown, span_text(s, shown.start, shown.end)};
  }
  return r;
}

/// Symbolic search for either query kind.
inline std::vector<ExtractionResult> symbolic_search(const std::string& query_text, const Corpus& corpus,
                                                     CaptureMode display, std::optional<std::size_t> limit,
                                                     bool* truncated = nullptr) {
  Query q = parse_query(query_text);
  std::vector<Match> matches;
  if (const auto* b = std::get_if<BooleanQuery>(&q)) {
    matches = match_boolean(*b, corpus);
  } else {
    const auto& bx = std::get<ByExampleQuery>(q);
    matches = match_pattern(derive_pattern(bx, resolve_example_parse(bx, corpus)), corpus,
                            limit ? std::optional<std::size_t>(*limit + 1) : std::nullopt);
  }
  if (truncated) *truncated = limit && matches.size() > *limit;
  if (limit && matches.size() > *limit) matches.resize(*limit);
  std::vector<ExtractionResult> out;
  out.reserve(matches.size());
  for (const auto& m : matches) out.push_back(symbolic_result(m, corpus.get(m.sentence_id), display));
  return out;
}

/// Everything decided before the first record is streamed; failures surface here.
struct NeuralSearchPlan {
  SyntacticPattern pattern;
  std::vector<std::string> slots;  // capture names, sorted
  std::vector<Match> symbolic;
  QueryVector query;
  SentenceId reference_id = 0;
  std::vector<Span> reference_args;  // token-mode spans in slot order
};

inline NeuralSearchPlan prepare_neural_search(const std::string& query_text, const SearchContext& ctx,
                                              const SessionConfig& cfg) {
  if (cfg.k < 1) fail(Errc::InvalidArgument, "k must be at least 1");
  if (!ctx.model || ctx.model->empty()) fail(Errc::ModelMissing, "no alignment model loaded");
  if (!ctx.corpus || !ctx.index || !ctx.provider) fail(Errc::InvalidArgument, "search context is incomplete");
  NeuralSearchPlan plan;
  plan.pattern = compile_by_example(query_text, *ctx.corpus);
  plan.symbolic = match_pattern(plan.pattern, *ctx.corpus, cfg.symbolic_limit, CaptureMode::token);
  if (plan.symbolic.empty()) fail(Errc::NoSymbolicResults, "the symbolic query has no matches");
  std::vector<SentenceId> pool;
  for (std::size_t i = 0; i < plan.symbolic.size() && i < cfg.pool_cap; ++i) pool.push_back(plan.symbolic[i].sentence_id);
  plan.query = mean_pool(pool, *ctx.corpus, *ctx.provider, ctx.index->pca);
  const Match& ref = plan.symbolic.front();
  plan.reference_id = ref.sentence_id;
  for (const auto& [name, span] : ref.captures) {
    plan.slots.push_back(name);
    plan.reference_args.push_back(span);
  }
  return plan;
}

/// Streams symbolic results, then aligned neural results in ascending distance,
/// then one summary record. Neural hits exclude every symbolic sentence, so no
/// sentence id is emitted twice.
inline SearchSummary run_neural_search(const NeuralSearchPlan& plan, const SearchContext& ctx, const SessionConfig& cfg,
                                       const RecordSink& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  SearchSummary summary;
  summary.pool_size = plan.query.pool_size;
  auto finish = [&](bool aborted) {
    summary.aborted = aborted;
    summary.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (!aborted) sink(StreamRecord{summary});
    return summary;
  };

  std::unordered_set<SentenceId> seen;
  for (const Match& m : plan.symbolic) {
    const Sentence& s = ctx.corpus->get(m.sentence_id);
    if (!sink(StreamRecord{symbolic_result(m, s, cfg.capture_display_mode)})) return finish(true);
    seen.insert(m.sentence_id);
    ++summary.symbolic;
  }

  const Sentence& ref = ctx.corpus->get(plan.reference_id);
  const Eigen::MatrixXd ref_rows = ctx.provider->embed_tokens(ref).rows;
  const std::size_t max_len = ctx.model->config.max_span_len;

  const bool completed = neural_search(
      plan.query, *ctx.index, cfg.k, seen, cfg.nprobe, cfg.batch_size, [&](std::span<const Neighbor> batch) {
        std::vector<ExtractionResult> records;
        for (const Neighbor& nb : batch) {
          const Sentence& s = ctx.corpus->get(nb.id);
          if (cfg.keyword_filter && !contains_keyword(s, *cfg.keyword_filter)) {
            ++summary.filtered;
            continue;
          }
          const auto pred = align(*ctx.model, ref_rows, plan.reference_args, ctx.provider->embed_tokens(s).rows, max_len);
          ExtractionResult r;
          r.sentence_id = nb.id;
          r.source = ResultSource::neural;
          r.distance = nb.distance;
          r.collision = pred.collision;
          for (std::size_t a = 0; a < plan.slots.size(); ++a)
            r.captures[plan.slots[a]] = CaptureValue{pred.spans[a], span_text(s, pred.spans[a].start, pred.spans[a].end)};
          records.push_back(std::move(r));
        }
        for (const auto& r : records) {
          if (!sink(StreamRecord{r})) return false;
          ++summary.neural;
        }
        return true;
      });
  return finish(!completed);
}

inline SearchSummary extractive_neural_search(const std::string& query_text, const SearchContext& ctx,
                                              const SessionConfig& cfg, const RecordSink& sink) {
  return run_neural_search(prepare_neural_search(query_text, ctx, cfg), ctx, cfg, sink);
}

// ---- aggregation ---------------------------------------------------------

struct ValueCount {
  std::string value;
  std::size_t count = 0;
  friend bool operator==(const ValueCount&, const ValueCount&) = default;
};

struct PairCount {
  std::string first;
  std::string second;
  std::size_t count = 0;
  friend bool operator==(const PairCount&, const PairCount&) = default;
};

/// Count-ranked captured values per slot and per slot pair (lower-cased).
struct CaptureTable {
  std::map<std::string, std::vector<ValueCount>> slots;
  std::map<std::pair<std::string, std::string>, std::vector<PairCount>> pairs;
  friend bool operator==(const CaptureTable&, const CaptureTable&) = default;
};

class Aggregator {
 public:
  void add(const ExtractionResult& r) {
    ++results_;
    for (const auto& [slot, v] : r.captures) ++slots_[slot][text::lower(v.text)];
    for (auto a = r.captures.begin(); a != r.captures.end(); ++a)
      for (auto b = std::next(a); b != r.captures.end(); ++b)
        ++pairs_[{a->first, b->first}][{text::lower(a->second.text), text::lower(b->second.text)}];
  }

  std::size_t results() const { return results_; }

  CaptureTable table() const {
    CaptureTable t;
    for (const auto& [slot, counts] : slots_) {
      auto& out = t.slots[slot];
      for (const auto& [v, c] : counts) out.push_back({v, c});
      std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.count > y.count; });
    }
    for (const auto& [key, counts] : pairs_) {
      auto& out = t.pairs[key];
      for (const auto& [v, c] : counts) out.push_back({v.first, v.second, c});
      std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.count > y.count; });
    }
    return t;
  }

 private:
  std::size_t results_ = 0;
  // std::map keeps values lexicographic, so the stable count sort yields
  // count desc, text asc.
  std::map<std::string, std::map<std::string, std::size_t>> slots_;
  std::map<std::pair<std::string, std::string>, std::map<std::pair<std::string, std::string>, std::size_t>> pairs_;
};

inline CaptureTable aggregate(std::span<const ExtractionResult> results) {
  Aggregator agg;
  for (const auto& r : results) agg.add(r);
  return agg.table();
}

}  // namespace nes
