#include <gtest/gtest.h>

#include "support.hpp"

using namespace nes;
using namespace nes::test;

namespace {

AlignModel model_with(Eigen::MatrixXd p, double margin = 1.0) {
  AlignModel m;
  m.projection = std::move(p);
  m.config.margin = margin;
  m.config.output_dim = static_cast<std::uint32_t>(m.projection.rows());
  return m;
}

Eigen::MatrixXd random_rows(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.uniform(-1, 1);
  return m;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::IoError;
}

Sentence simple(SentenceId id, std::vector<std::string> words) {
  std::vector<Token> toks;
  for (std::size_t i = 0; i < words.size(); ++i)
    toks.push_back(tok(words[i], words[i], i == 1 ? "VERB" : "NOUN", i == 1 ? kRoot : 1, i == 1 ? "root" : "dep"));
  return make_sentence(id, toks);
}

}  // namespace

TEST(EnumerateSpans, Counts) {
  EXPECT_EQ(enumerate_spans(5, 9).size(), 15u);
  EXPECT_EQ(enumerate_spans(12, 9).size(), 72u);
  EXPECT_EQ(enumerate_spans(1, 9), (std::vector<Span>{{0, 1}}));
  for (std::size_t n = 1; n <= 40; ++n)
    for (std::size_t l = 1; l <= 12; ++l) {
      std::size_t expect = 0;
      for (std::size_t len = 1; len <= std::min(n, l); ++len) expect += n - len + 1;
      const auto spans = enumerate_spans(n, l);
      ASSERT_EQ(spans.size(), expect);
      EXPECT_TRUE(std::is_sorted(spans.begin(), spans.end(), [](Span a, Span b) {
        return std::pair(a.start, a.end) < std::pair(b.start, b.end);
      }));
    }
}

TEST(SpanRep, Identity) {
  Rng rng(1);
  const Eigen::MatrixXd rows = random_rows(rng, 5, 64);
  const AlignModel m = model_with(Eigen::MatrixXd::Identity(64, 64));
  EXPECT_EQ(span_rep(m, rows, {2, 3}).vector, rows.row(2).transpose());
  Eigen::MatrixXd same(3, 64);
  for (int i = 0; i < 3; ++i) same.row(i) = rows.row(0);
  const AlignModel r = model_with(random_rows(rng, 64, 64));
  EXPECT_LT((span_rep(r, same, {0, 3}).vector - r.projection * rows.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(code_of([&] { span_rep(m, rows, {2, 2}); }), Errc::EmptySpan);
}

TEST(SpanRep, MeanThenProjectEqualsProjectThenMean) {
  Rng rng(2);
  const Eigen::MatrixXd rows = random_rows(rng, 9, 30);
  const AlignModel m = model_with(random_rows(rng, 64, 30));
  const Eigen::MatrixXd projected = rows * m.projection.transpose();
  for (const Span s : enumerate_spans(9, 9)) {
    Eigen::VectorXd after = Eigen::VectorXd::Zero(64);
    for (std::uint32_t i = s.start; i < s.end; ++i) after += projected.row(i).transpose();
    after /= s.length();
    EXPECT_LT((span_rep(m, rows, s).vector - after).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(HardestNegative, TwoCandidates) {
  // One token, max_len 1 gives one span; two tokens with max_len 1 give two.
  Eigen::MatrixXd rows(2, 2);
  rows << 1, 0, 0, 1;
  const AlignModel m = model_with(Eigen::MatrixXd::Identity(2, 2));
  EXPECT_EQ(hardest_negative(m, rows, {0, 1}, Eigen::Vector2d(1, 0), 1).span, (Span{1, 2}));
  EXPECT_EQ(code_of([&] { hardest_negative(m, rows.topRows(1), {0, 1}, Eigen::Vector2d(1, 0), 1); }), Errc::NoCandidates);
}

TEST(HardestNegative, TieGoesToFirstSpan) {
  Eigen::MatrixXd rows(3, 1);
  rows << 0, -1, 1;
  const AlignModel m = model_with(Eigen::MatrixXd::Identity(1, 1));
  // Single tokens: (1,2) and (2,3) tie at distance 1. Up to length 3: (0,3)
  // and (1,3) both have mean 0.
  EXPECT_EQ(hardest_negative(m, rows, {0, 1}, Eigen::VectorXd::Zero(1), 1).span, (Span{1, 2}));
  EXPECT_EQ(hardest_negative(m, rows, {0, 1}, Eigen::VectorXd::Zero(1), 3).span, (Span{0, 3}));
}

TEST(HardestNegative, MatchesExhaustiveOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd rows = random_rows(rng, 8, 10);
    const AlignModel m = model_with(random_rows(rng, 16, 10));
    const Span gold{static_cast<std::uint32_t>(rng.below(4)), static_cast<std::uint32_t>(4 + rng.below(4))};
    Eigen::VectorXd anchor(16);
    for (auto& x : anchor) x = rng.normal();
    const auto got = hardest_negative(m, rows, gold, anchor, 9);
    const auto [want, dist] = exhaustive_hardest_negative(m, rows, gold, anchor, 9);
    EXPECT_EQ(got.span, want);
    EXPECT_NE(got.span, gold);
    EXPECT_NEAR((got.vector - anchor).norm(), dist, 1e-12);
  }
}

TEST(TripletLoss, HandValues) {
  const Eigen::Vector2d o(0, 0);
  EXPECT_EQ(triplet_loss(o, Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1), 1.0), 1.0);
  EXPECT_EQ(triplet_loss(o, Eigen::Vector2d(1, 0), Eigen::Vector2d(3, 0), 1.0), 0.0);
  EXPECT_EQ(triplet_loss(o, Eigen::Vector2d(2, 0), Eigen::Vector2d(1, 0), 1.0), 2.0);
  EXPECT_EQ(code_of([&] { triplet_loss(o, Eigen::Vector3d(1, 0, 0), Eigen::Vector2d(1, 0), 1.0); }),
            Errc::DimensionMismatch);
}

TEST(LossGradient, ZeroWhenHingesInactive) {
  Rng rng(4);
  AlignExample ex = random_align_example(rng, 6);
  AlignModel m = model_with(random_rows(rng, 8, 6), 1e-9);
  // Positives coincide with the anchors and the margin is tiny.
  ex.s2_rows = ex.s1_rows;
  ex.s2_gold = ex.s1_args;
  const auto terms = pair_loss(m, ex);
  ASSERT_FALSE(terms.active[0] || terms.active[1]);
  EXPECT_EQ(loss_gradient(m, ex), Eigen::MatrixXd::Zero(8, 6));
}

TEST(LossGradient, CentralDifferences) {
  Rng rng(5);
  int active = 0;
  for (int i = 0; i < 20; ++i) {
    const AlignExample ex = random_align_example(rng, 12);
    const AlignModel m = model_with(random_rows(rng, 64, 12) * 0.3, 2.0);
    const auto terms = pair_loss(m, ex);
    active += terms.active[0] + terms.active[1];
    EXPECT_LT(gradient_relative_error(m, ex), 1e-4) << "instance " << i;
  }
  EXPECT_GT(active, 20);
}

TEST(LossGradient, DegenerateDistance) {
  Rng rng(6);
  AlignExample ex = random_align_example(rng, 4);
  const AlignModel m = model_with(Eigen::MatrixXd::Zero(8, 4));
  EXPECT_EQ(code_of([&] { loss_gradient(m, ex); }), Errc::DegenerateDistance);
}

TEST(SpanRep, DistancesScaleWithInputs) {
  Rng rng(7);
  const Eigen::MatrixXd rows = random_rows(rng, 6, 8);
  const AlignModel m = model_with(random_rows(rng, 16, 8));
  const double d = (span_rep(m, rows, {0, 2}).vector - span_rep(m, rows, {3, 6}).vector).norm();
  const Eigen::MatrixXd scaled = rows * 2.5;
  const double ds = (span_rep(m, scaled, {0, 2}).vector - span_rep(m, scaled, {3, 6}).vector).norm();
  EXPECT_NEAR(ds, 2.5 * d, 1e-12);
}

TEST(Align, SelfAlignmentAndCollision) {
  Rng rng(8);
  const Eigen::MatrixXd rows = random_rows(rng, 7, 12);
  const AlignModel m = model_with(random_rows(rng, 64, 12));
  const std::vector<Span> args{{0, 2}, {4, 5}};
  const auto p = align(m, rows, args, rows, 9);
  EXPECT_EQ(p.spans, args);
  EXPECT_NEAR(p.distances[0], 0.0, 1e-12);
  EXPECT_FALSE(p.collision);
  const auto z = align(model_with(Eigen::MatrixXd::Zero(64, 12)), rows, args, rows, 9);
  EXPECT_EQ(z.spans, (std::vector<Span>{{0, 1}, {0, 1}}));
  EXPECT_TRUE(z.collision);
  EXPECT_EQ(code_of([&] { align(AlignModel{}, rows, args, rows, 9); }), Errc::ModelMissing);
}

TEST(Align, ArgminInvariantUnderScaling) {
  Rng rng(9);
  const Eigen::MatrixXd s1 = random_rows(rng, 6, 10), s2 = random_rows(rng, 9, 10);
  const AlignModel m = model_with(random_rows(rng, 64, 10));
  const std::vector<Span> args{{0, 1}, {3, 5}};
  const auto a = align(m, s1, args, s2, 9);
  for (double c : {0.01, 3.0, 1e4}) {
    const auto b = align(model_with(m.projection * c), s1, args, s2, 9);
    EXPECT_EQ(a.spans, b.spans);
  }
}

TEST(Train, DeterministicAndSeparable) {
  const std::vector<TrainingPair> pairs{
      {"R", simple(0, {"aspirin", "treats", "headache", "."}), {{0, 1}, {2, 3}},
       simple(1, {"ibuprofen", "treats", "pain", "."}), {{0, 1}, {2, 3}}}};
  const HashEmbedder emb{EmbeddingProviderConfig{}};
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  const auto a = train(pairs, emb, cfg), b = train(pairs, emb, cfg);
  EXPECT_EQ(save_model(a.model), save_model(b.model));
  const auto terms = pair_loss(a.model, make_example(pairs[0], emb));
  EXPECT_FALSE(terms.active[0]);
  EXPECT_FALSE(terms.active[1]);
  EXPECT_LT(a.epoch_loss.back(), a.epoch_loss.front());
  EXPECT_EQ(code_of([&] { train({}, emb, cfg); }), Errc::EmptyTrainingSet);
}

TEST(Train, InitRange) {
  TrainConfig cfg;
  cfg.seed = 11;
  const AlignModel m = init_model(100, cfg);
  EXPECT_EQ(m.output_dim(), 64u);
  EXPECT_LE(m.projection.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_EQ(m.projection, init_model(100, cfg).projection);
}

TEST(ModelFile, RoundTrip) {
  Rng rng(10);
  AlignModel m = model_with(random_rows(rng, 64, 20) * 1e-3);
  m.config.seed = 77;
  m.config.learning_rate = 0.1 + 1e-17;
  const std::string bytes = save_model(m);
  EXPECT_EQ(bytes.substr(0, 5), "NESA1");
  EXPECT_EQ(bytes.size(), 5 + 8 + 64 * 20 * 8 + bytes.substr(5 + 8 + 64 * 20 * 8).size());
  const AlignModel back = load_model(bytes);
  EXPECT_EQ(back.projection, m.projection);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(save_model(back), bytes);
  EXPECT_EQ(code_of([] { load_model("NOPE!"); }), Errc::FormatError);
  EXPECT_EQ(code_of([] { load_model_file("/nonexistent/model.nesa"); }), Errc::ModelMissing);
}

TEST(BuildPairs, ExactlyTwoMatches) {
  const Corpus c({simple(0, {"a", "binds", "b"}), simple(1, {"c", "binds", "d"}), simple(2, {"e", "likes", "f"})});
  std::map<std::string, std::vector<SyntacticPattern>> rel{
      {"bind", {compile_by_example("x:a $binds y:b", c), compile_by_example("x:c $binds y:d", c)}}};
  const auto sets = build_pairs(rel, c, 1, {}, 0);
  ASSERT_EQ(sets.train.size(), 1u);
  const std::set<SentenceId> ids{sets.train[0].s1.id, sets.train[0].s2.id};
  EXPECT_EQ(ids, (std::set<SentenceId>{0, 1}));
  EXPECT_EQ(sets.train[0].s1_args, (std::vector<Span>{{0, 1}, {2, 3}}));
  EXPECT_EQ(sets.train[0].s2_gold, (std::vector<Span>{{0, 1}, {2, 3}}));
  const auto dev = build_pairs(rel, c, 1, {"bind"}, 0);
  EXPECT_TRUE(dev.train.empty());
  EXPECT_EQ(dev.dev.size(), 1u);
  rel["bind"].pop_back();
  EXPECT_EQ(code_of([&] { build_pairs(rel, c, 1, {}, 0); }), Errc::RelationTooSparse);
}

TEST(BuildPairs, SynthRecount) {
  const SynthCorpus& sc = synth_1000();
  const Corpus& c = corpus_1000();
  std::map<std::string, std::vector<SyntacticPattern>> rel;
  for (const auto& q : sc.queries) rel[q.relation].push_back(compile_by_example(q.query, c));
  const auto sets = build_pairs(rel, c, 100, {"R08", "R09"}, 5);
  EXPECT_EQ(sets.train.size(), 800u);
  EXPECT_EQ(sets.dev.size(), 200u);
  std::map<SentenceId, std::string> rel_of;
  for (const auto& g : sc.gold) rel_of[g.sid] = g.relation;
  std::set<std::pair<SentenceId, SentenceId>> seen;
  for (const auto* set : {&sets.train, &sets.dev})
    for (const auto& p : *set) {
      EXPECT_NE(p.s1.id, p.s2.id);
      EXPECT_EQ(rel_of.at(p.s1.id), p.relation);
      EXPECT_EQ(rel_of.at(p.s2.id), p.relation);
      EXPECT_TRUE(seen.insert(std::minmax(p.s1.id, p.s2.id)).second);
      EXPECT_EQ(set == &sets.dev, p.relation == "R08" || p.relation == "R09");
    }
}

TEST(Train, CrossTemplateAlignmentOnSynth) {
  // Arguments marked in one phrasing are recovered in a differently phrased
  // sentence of a relation never seen in training.
  const SynthCorpus& sc = synth_1000();
  const Corpus& c = corpus_1000();
  std::map<std::string, std::vector<SyntacticPattern>> rel;
  for (const auto& q : sc.queries) rel[q.relation].push_back(compile_by_example(q.query, c));
  const auto sets = build_pairs(rel, c, 40, {"R09"}, 1);
  const HashEmbedder emb{EmbeddingProviderConfig{}};
  TrainConfig cfg;
  cfg.epochs = 20;
  const auto model = train(sets.train, emb, cfg).model;
  std::size_t correct = 0, total = 0;
  for (const auto& p : sets.dev) {
    const auto pred = align(model, emb.embed_tokens(p.s1).rows, p.s1_args, emb.embed_tokens(p.s2).rows, 9);
    for (std::size_t a = 0; a < 2; ++a, ++total) correct += subset_match(pred.spans[a], p.s2_gold[a]);
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(total), 0.9);
}
