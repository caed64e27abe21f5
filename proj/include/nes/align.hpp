#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nes/binary_io.hpp"
#include "nes/corpus.hpp"
#include "nes/embed.hpp"
#include "nes/error.hpp"
#include "nes/matcher.hpp"
#include "nes/rng.hpp"

namespace nes {

inline constexpr std::uint32_t kAlignDim = 64;

struct TrainConfig {
  double margin = 1.0;
  std::uint32_t epochs = 50;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint32_t max_span_len = 9;
  std::uint64_t seed = 0;
  std::uint32_t output_dim = kAlignDim;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Linear projection applied on top of frozen token vectors.
struct AlignModel {
  Eigen::MatrixXd projection;  // output_dim x input_dim
  TrainConfig config;

  bool empty() const { return projection.size() == 0; }
  std::size_t input_dim() const { return static_cast<std::size_t>(projection.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(projection.rows()); }
};

struct SpanRep {
  Span span;
  Eigen::VectorXd vector;
};

/// All spans (i, j), 0 <= i < j <= n, j - i <= max_len, lexicographic.
inline std::vector<Span> enumerate_spans(std::size_t n, std::size_t max_len) {
  std::vector<Span> out;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j <= n && j - i <= max_len; ++j) out.push_back({i, j});
  return out;
}

/// Mean of the token rows in `span` (pre-projection).
inline Eigen::VectorXd span_mean(const Eigen::MatrixXd& rows, Span span) {
  if (span.start >= span.end) fail(Errc::EmptySpan, "empty span");
  if (span.end > rows.rows()) fail(Errc::SpanOutOfBounds, "span exceeds sentence length");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(rows.cols());
  for (std::uint32_t t = span.start; t < span.end; ++t) acc += rows.row(t).transpose();
  return acc / static_cast<double>(span.length());
}

inline SpanRep span_rep(const AlignModel& model, const Eigen::MatrixXd& token_rows, Span span) {
  return {span, model.projection * span_mean(token_rows, span)};
}

inline double triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                           const Eigen::VectorXd& negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size())
    fail(Errc::DimensionMismatch, "triplet vectors differ in size");
  return std::max(0.0, (anchor - positive).norm() - (anchor - negative).norm() + margin);
}

namespace detail {

/// Projected span reps of every candidate span of a sentence.
struct Candidates {
  std::vector<Span> spans;
  std::vector<Eigen::VectorXd> reps;
};

inline Candidates project_candidates(const AlignModel& model, const Eigen::MatrixXd& rows, std::size_t max_len) {
  Candidates c;
  c.spans = enumerate_spans(static_cast<std::size_t>(rows.rows()), max_len);
  const Eigen::MatrixXd projected = rows * model.projection.transpose();  // n x out
  c.reps.reserve(c.spans.size());
  for (const Span& s : c.spans) c.reps.push_back(span_mean(projected, s));
  return c;
}

/// Index of the closest candidate to `anchor`, skipping `exclude`; ties go to
/// the earlier (lexicographically smaller) span.
inline std::optional<std::size_t> closest(const Candidates& c, const Eigen::VectorXd& anchor,
                                          const std::optional<Span>& exclude) {
  std::optional<std::size_t> best;
  double best_d = INFINITY;
  for (std::size_t i = 0; i < c.spans.size(); ++i) {
    if (exclude && c.spans[i] == *exclude) continue;
    const double d = (c.reps[i] - anchor).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

/// The non-gold span of s2 whose projected rep is closest (Euclidean) to
/// `anchor_rep`.
inline SpanRep hardest_negative(const AlignModel& model, const Eigen::MatrixXd& s2_rows, Span gold,
                                const Eigen::VectorXd& anchor_rep, std::size_t max_len) {
  const auto cands = detail::project_candidates(model, s2_rows, max_len);
  const auto best = detail::closest(cands, anchor_rep, gold);
  if (!best) fail(Errc::NoCandidates, "sentence has no non-gold candidate span");
  return {cands.spans[*best], cands.reps[*best]};
}

/// One alignment instance with token vectors already computed. Args are
/// parallel: s1_args[i] in s1 corresponds to s2_gold[i] in s2.
struct AlignExample {
  Eigen::MatrixXd s1_rows;
  Eigen::MatrixXd s2_rows;
  std::vector<Span> s1_args;
  std::vector<Span> s2_gold;
};

struct TripletTerms {
  double loss = 0.0;
  std::vector<Span> negatives;
  std::vector<bool> active;
};

/// Total hinge loss (sum over args) with hardest negatives at the current model.
inline TripletTerms pair_loss(const AlignModel& model, const AlignExample& ex) {
  if (ex.s1_args.size() != ex.s2_gold.size()) fail(Errc::InvalidArgument, "arg count mismatch");
  TripletTerms out;
  const auto cands = detail::project_candidates(model, ex.s2_rows, model.config.max_span_len);
  for (std::size_t a = 0; a < ex.s1_args.size(); ++a) {
    const Eigen::VectorXd anchor = model.projection * span_mean(ex.s1_rows, ex.s1_args[a]);
    const Eigen::VectorXd positive = model.projection * span_mean(ex.s2_rows, ex.s2_gold[a]);
    const auto neg = detail::closest(cands, anchor, ex.s2_gold[a]);
    if (!neg) fail(Errc::NoCandidates, "sentence has no non-gold candidate span");
    const double l = triplet_loss(anchor, positive, cands.reps[*neg], model.config.margin);
    out.loss += l;
    out.negatives.push_back(cands.spans[*neg]);
    out.active.push_back(l > 0.0);
  }
  return out;
}

namespace detail {

// d/dP of ||P u|| is (P u) u^T / ||P u||.
inline bool add_norm_gradient(Eigen::MatrixXd& grad, const Eigen::MatrixXd& P, const Eigen::VectorXd& u, double sign) {
  const Eigen::VectorXd pu = P * u;
  const double norm = pu.norm();
  if (norm < 1e-12) return false;
  grad.noalias() += (sign / norm) * pu * u.transpose();
  return true;
}

inline Eigen::MatrixXd gradient_impl(const AlignModel& model, const AlignExample& ex, const TripletTerms& terms,
                                     bool strict) {
  const Eigen::MatrixXd& P = model.projection;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(P.rows(), P.cols());
  for (std::size_t a = 0; a < ex.s1_args.size(); ++a) {
    if (!terms.active[a]) continue;
    const Eigen::VectorXd anchor = span_mean(ex.s1_rows, ex.s1_args[a]);
    const Eigen::VectorXd u = anchor - span_mean(ex.s2_rows, ex.s2_gold[a]);
    const Eigen::VectorXd w = anchor - span_mean(ex.s2_rows, terms.negatives[a]);
    const bool ok_pos = add_norm_gradient(grad, P, u, +1.0);
    const bool ok_neg = add_norm_gradient(grad, P, w, -1.0);
    if (strict && !(ok_pos && ok_neg))
      fail(Errc::DegenerateDistance, "zero distance inside an active hinge");
  }
  return grad;
}

}  // namespace detail

/// Analytic gradient of `pair_loss` w.r.t. the projection, negatives held at
/// the current hardest spans.
inline Eigen::MatrixXd loss_gradient(const AlignModel& model, const AlignExample& ex) {
  return detail::gradient_impl(model, ex, pair_loss(model, ex), true);
}

struct TrainingPair {
  std::string relation;
  Sentence s1;
  std::vector<Span> s1_args;
  Sentence s2;
  std::vector<Span> s2_gold;
};

struct TrainResult {
  AlignModel model;
  std::vector<double> epoch_loss;  // mean pair loss per epoch
};

inline AlignModel init_model(std::size_t input_dim, const TrainConfig& config) {
  AlignModel m;
  m.config = config;
  m.projection.resize(config.output_dim, static_cast<Eigen::Index>(input_dim));
  Rng rng(config.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (Eigen::Index r = 0; r < m.projection.rows(); ++r)
    for (Eigen::Index c = 0; c < m.projection.cols(); ++c) m.projection(r, c) = rng.uniform(-bound, bound);
  return m;
}

inline AlignExample make_example(const TrainingPair& p, const EmbeddingProvider& provider) {
  return AlignExample{provider.embed_tokens(p.s1).rows, provider.embed_tokens(p.s2).rows, p.s1_args, p.s2_gold};
}

/// Per-pair Adam on the summed arg1/arg2 triplet objective with hardest
/// negatives re-mined before every step. Deterministic given the inputs.
inline TrainResult train(const std::vector<TrainingPair>& pairs, const EmbeddingProvider& provider,
                         const TrainConfig& config) {
  if (pairs.empty()) fail(Errc::EmptyTrainingSet, "no training pairs");
  if (!(config.margin > 0.0)) fail(Errc::InvalidArgument, "margin must be positive");
  if (config.max_span_len < 1) fail(Errc::InvalidArgument, "max_span_len must be >= 1");

  std::vector<AlignExample> examples;
  examples.reserve(pairs.size());
  for (const auto& p : pairs) examples.push_back(make_example(p, provider));

  TrainResult result;
  result.model = init_model(provider.dim(), config);
  Eigen::MatrixXd& P = result.model.projection;
  Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(P.rows(), P.cols());
  Eigen::MatrixXd m2 = Eigen::MatrixXd::Zero(P.rows(), P.cols());
  double b1t = 1.0, b2t = 1.0;

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t idx : order) {
      const AlignExample& ex = examples[idx];
      const TripletTerms terms = pair_loss(result.model, ex);
      total += terms.loss;
      const Eigen::MatrixXd g = detail::gradient_impl(result.model, ex, terms, false);
      b1t *= config.beta1;
      b2t *= config.beta2;
      m1 = config.beta1 * m1 + (1.0 - config.beta1) * g;
      m2 = config.beta2 * m2 + (1.0 - config.beta2) * g.cwiseProduct(g);
      const double c1 = 1.0 / (1.0 - b1t), c2 = 1.0 / (1.0 - b2t);
      P.array() -= config.learning_rate * (m1.array() * c1) / ((m2.array() * c2).sqrt() + config.epsilon);
    }
    result.epoch_loss.push_back(total / static_cast<double>(examples.size()));
  }
  return result;
}

struct AlignPrediction {
  std::vector<Span> spans;        // one per s1 arg
  std::vector<double> distances;  // Euclidean, projected space
  bool collision = false;         // two args picked the same span
};

/// For each s1 arg, the s2 span (length <= max_len) closest to it. Args are
/// chosen independently; equal picks are flagged, not resolved.
inline AlignPrediction align(const AlignModel& model, const Eigen::MatrixXd& s1_rows, const std::vector<Span>& s1_args,
                             const Eigen::MatrixXd& s2_rows, std::size_t max_len) {
  if (model.empty()) fail(Errc::ModelMissing, "alignment model is not loaded");
  if (s2_rows.rows() == 0) fail(Errc::EmptySentence, "target sentence is empty");
  if (s1_rows.cols() != model.projection.cols() || s2_rows.cols() != model.projection.cols())
    fail(Errc::DimensionMismatch, "token vectors do not match the model input width");
  const auto cands = detail::project_candidates(model, s2_rows, max_len);
  AlignPrediction out;
  for (const Span& arg : s1_args) {
    const Eigen::VectorXd anchor = model.projection * span_mean(s1_rows, arg);
    const std::size_t best = *detail::closest(cands, anchor, std::nullopt);
    out.spans.push_back(cands.spans[best]);
    out.distances.push_back((cands.reps[best] - anchor).norm());
  }
  for (std::size_t i = 0; i < out.spans.size(); ++i)
    for (std::size_t j = i + 1; j < out.spans.size(); ++j) out.collision |= out.spans[i] == out.spans[j];
  return out;
}

// ---- training data -------------------------------------------------------

struct PairSets {
  std::vector<TrainingPair> train;
  std::vector<TrainingPair> dev;
};

/// Runs every relation's patterns (token-mode captures), then samples up to
/// `per_relation` unordered sentence pairs without replacement. Relations in
/// `dev_relations` contribute only to the dev set. Args are ordered by capture
/// name.
inline PairSets build_pairs(const std::map<std::string, std::vector<SyntacticPattern>>& relations,
                            const Corpus& corpus, std::size_t per_relation, const std::set<std::string>& dev_relations,
                            std::uint64_t seed) {
  PairSets out;
  Rng rng(seed);
  for (const auto& [relation, patterns] : relations) {
    if (patterns.size() < 2)
      fail(Errc::RelationTooSparse, "relation '" + relation + "' needs at least 2 patterns");
    std::map<SentenceId, Match> first;
    for (const auto& p : patterns)
      for (auto& m : match_pattern(p, corpus)) first.try_emplace(m.sentence_id, std::move(m));
    if (first.size() < 2) fail(Errc::RelationTooSparse, "relation '" + relation + "' has fewer than 2 matches");
    std::vector<const Match*> matches;
    for (const auto& [id, m] : first) matches.push_back(&m);
    const auto names = [](const Match& m) {
      std::vector<std::string> n;
      for (const auto& [k, v] : m.captures) n.push_back(k);
      return n;
    };
    const auto expected = names(*matches.front());
    for (const Match* m : matches)
      if (names(*m) != expected)
        fail(Errc::InvalidArgument, "relation '" + relation + "' mixes capture names across patterns");

    const std::uint64_t count = matches.size();
    const std::uint64_t total = count * (count - 1) / 2;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> chosen;
    if (per_relation >= total) {
      for (std::uint64_t i = 0; i < count; ++i)
        for (std::uint64_t j = i + 1; j < count; ++j) chosen.emplace_back(i, j);
      rng.shuffle(chosen);
    } else {
      std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
      while (chosen.size() < per_relation) {
        std::uint64_t i = rng.below(count), j = rng.below(count - 1);
        if (j >= i) ++j;
        const auto key = std::minmax(i, j);
        if (seen.insert(key).second) chosen.emplace_back(key);
      }
    }
    auto& sink = dev_relations.count(relation) ? out.dev : out.train;
    for (auto [i, j] : chosen) {
      if (rng.below(2)) std::swap(i, j);
      const Match& a = *matches[i];
      const Match& b = *matches[j];
      TrainingPair tp;
      tp.relation = relation;
      tp.s1 = corpus.get(a.sentence_id);
      tp.s2 = corpus.get(b.sentence_id);
      for (const auto& [name, span] : a.captures) tp.s1_args.push_back(span);
      for (const auto& [name, span] : b.captures) tp.s2_gold.push_back(span);
      sink.push_back(std::move(tp));
    }
  }
  return out;
}

// ---- NESA1 model file ----------------------------------------------------

inline constexpr std::string_view kModelMagic = "NESA1";

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string save_model(const AlignModel& model) {
  std::string out;
  bin::Writer w(out);
  w.raw(kModelMagic);
  w.u32(static_cast<std::uint32_t>(model.input_dim()));
  w.u32(static_cast<std::uint32_t>(model.output_dim()));
  for (Eigen::Index r = 0; r < model.projection.rows(); ++r)
    for (Eigen::Index c = 0; c < model.projection.cols(); ++c) w.f64(model.projection(r, c));
  const TrainConfig& c = model.config;
  std::ostringstream kv;
  kv << "margin=" << detail::fmt_double(c.margin) << '\n'
     << "epochs=" << c.epochs << '\n'
     << "learning_rate=" << detail::fmt_double(c.learning_rate) << '\n'
     << "beta1=" << detail::fmt_double(c.beta1) << '\n'
     << "beta2=" << detail::fmt_double(c.beta2) << '\n'
     << "epsilon=" << detail::fmt_double(c.epsilon) << '\n'
     << "max_span_len=" << c.max_span_len << '\n'
     << "seed=" << c.seed << '\n';
  w.raw(kv.str());
  return out;
}

inline AlignModel load_model(std::string_view bytes) {
  bin::Reader r(bytes);
  if (bytes.size() < kModelMagic.size() || r.raw(kModelMagic.size()) != kModelMagic)
    fail(Errc::FormatError, "not a NESA1 model file");
  AlignModel m;
  const std::uint32_t in = r.u32(), out = r.u32();
  m.config.output_dim = out;
  m.projection.resize(out, in);
  for (std::uint32_t i = 0; i < out; ++i)
    for (std::uint32_t j = 0; j < in; ++j) m.projection(i, j) = r.f64();
  std::istringstream kv{std::string(r.raw(r.remaining()))};
  std::string line;
  while (std::getline(kv, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(Errc::FormatError, "bad config line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "margin") m.config.margin = std::stod(val);
      else if (key == "epochs") m.config.epochs = static_cast<std::uint32_t>(std::stoul(val));
      else if (key == "learning_rate") m.config.learning_rate = std::stod(val);
      else if (key == "beta1") m.config.beta1 = std::stod(val);
      else if (key == "beta2") m.config.beta2 = std::stod(val);
      else if (key == "epsilon") m.config.epsilon = std::stod(val);
      else if (key == "max_span_len") m.config.max_span_len = static_cast<std::uint32_t>(std::stoul(val));
      else if (key == "seed") m.config.seed = std::stoull(val);
    } catch (const std::exception&) {
      fail(Errc::FormatError, "bad value for '" + key + "'");
    }
  }
  return m;
}

inline void save_model_file(const AlignModel& model, const std::string& path) { bin::write_file(path, save_model(model)); }

inline AlignModel load_model_file(const std::string& path) {
  return load_model(bin::read_file(path, Errc::ModelMissing));
}

}  // namespace nes
