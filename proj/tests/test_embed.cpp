#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"

using namespace nes;
using namespace nes::test;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::IoError;
}

}  // namespace

TEST(HashEmbedder, Deterministic) {
  const HashEmbedder a{EmbeddingProviderConfig{}}, b{EmbeddingProviderConfig{}};
  const Sentence& s = corpus_1000().get(17);
  const auto x = a.embed_tokens(s).rows, y = b.embed_tokens(s).rows;
  ASSERT_EQ(x.rows(), static_cast<Eigen::Index>(s.size()));
  EXPECT_EQ(std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())), 0);
}

TEST(HashEmbedder, IdenticalContextsGiveIdenticalRows) {
  // "a b a b a" with window 0: tokens 0, 2 and 4 share every feature.
  const Sentence s = make_sentence(0, {tok("a", "a", "X", 1, "dep"), tok("b", "b", "X", kRoot, "root"), tok("a", "a", "X", 1, "dep"),
                                       tok("b2", "b", "X", 1, "dep"), tok("a", "a", "X", 1, "dep")});
  EmbeddingProviderConfig cfg;
  cfg.window = 0;
  const auto rows = HashEmbedder(cfg).embed_tokens(s).rows;
  EXPECT_EQ(rows.row(0), rows.row(2));
  EXPECT_EQ(rows.row(0), rows.row(4));
  EXPECT_NE(rows.row(0), rows.row(1));
}

TEST(HashEmbedder, UnitRows) {
  const HashEmbedder e{EmbeddingProviderConfig{}};
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto rows = e.embed_tokens(corpus_1000().sentences()[rng.below(1000)]).rows;
    for (Eigen::Index r = 0; r < rows.rows(); ++r) EXPECT_NEAR(rows.row(r).norm(), 1.0, 1e-9);
  }
}

TEST(HashEmbedder, FeatureHashingMatchesDefinition) {
  // Recompute one row from the feature list with an independent FNV-1a.
  auto fnv = [](const std::string& s, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  };
  EmbeddingProviderConfig cfg;
  cfg.seed = 99;
  const HashEmbedder e(cfg);
  const Sentence& s = corpus_1000().get(3);
  const auto rows = e.embed_tokens(s).rows;
  for (std::size_t i = 0; i < s.size(); ++i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(256);
    for (const auto& f : HashEmbedder::token_features(s, i, 2)) {
      const std::uint64_t h = fnv(f, 14695981039346656037ull ^ 99ull);
      v(static_cast<Eigen::Index>(h % 256)) += (h >> 63) ? -1.0 : 1.0;
    }
    v.normalize();
    EXPECT_LT((rows.row(static_cast<Eigen::Index>(i)).transpose() - v).cwiseAbs().maxCoeff(), 1e-15);
  }
  const auto feats = HashEmbedder::token_features(s, 0, 2);
  EXPECT_EQ(feats[0].rfind("lem=", 0), 0u);
  EXPECT_EQ(feats[4], "hl=" + text::lower(s.tokens[static_cast<std::size_t>(s.tokens[0].head)].lemma));
}

TEST(HashEmbedder, SentenceVectorIsMean) {
  const HashEmbedder e{EmbeddingProviderConfig{}};
  const Sentence one = make_sentence(0, {tok("solo", "solo", "X", kRoot, "root")});
  EXPECT_EQ(e.embed_sentence(one).vector, e.embed_tokens(one).rows.row(0).transpose());
  for (SentenceId id = 0; id < 100; ++id) {
    const Sentence& s = corpus_1000().get(id);
    const auto rows = e.embed_tokens(s).rows;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(rows.cols());
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
      for (Eigen::Index c = 0; c < rows.cols(); ++c) mean(c) += rows(r, c);
    mean /= static_cast<double>(rows.rows());
    EXPECT_LT((e.embed_sentence(s).vector - mean).cwiseAbs().maxCoeff(), 1e-12);
  }
  Sentence empty;
  EXPECT_EQ(code_of([&] { e.embed_sentence(empty); }), Errc::EmptySentence);
}

TEST(HashEmbedder, PermutationInvariantWithoutContext) {
  EmbeddingProviderConfig cfg;
  cfg.window = 0;
  const HashEmbedder e(cfg);
  // Same tokens (head lemmas preserved) in a different order.
  const Sentence a = make_sentence(0, {tok("x", "x", "N", 1, "nsubj"), tok("go", "go", "V", kRoot, "root"), tok("y", "y", "N", 1, "obj")});
  const Sentence b = make_sentence(1, {tok("y", "y", "N", 2, "obj"), tok("x", "x", "N", 2, "nsubj"), tok("go", "go", "V", kRoot, "root")});
  EXPECT_LT((e.embed_sentence(a).vector - e.embed_sentence(b).vector).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ExternalVectors, LookupsAndErrors) {
  std::vector<ExternalRecord> recs;
  Rng rng(1);
  for (SentenceId id : {0u, 1u, 2u}) {
    ExternalRecord r{id, {}, {}};
    for (int c = 0; c < 4; ++c) r.sent.push_back(rng.normal());
    const std::size_t n = corpus_1000().get(id).size();
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<double> row;
      for (int c = 0; c < 4; ++c) row.push_back(rng.normal());
      r.tok.push_back(row);
    }
    recs.push_back(r);
  }
  std::stringstream buf;
  write_external_vectors(buf, recs);
  const std::string text = buf.str();
  std::istringstream in(text);
  const ExternalVectors ev(read_external_records(in));
  EXPECT_EQ(ev.size(), 3u);
  for (const auto& r : recs) {
    const auto sv = ev.embed_sentence(corpus_1000().get(r.id)).vector;
    for (int c = 0; c < 4; ++c) EXPECT_EQ(sv(c), r.sent[static_cast<std::size_t>(c)]);  // bitwise round trip
    const auto tv = ev.embed_tokens(corpus_1000().get(r.id)).rows;
    for (std::size_t t = 0; t < r.tok.size(); ++t)
      for (int c = 0; c < 4; ++c) EXPECT_EQ(tv(static_cast<Eigen::Index>(t), c), r.tok[t][static_cast<std::size_t>(c)]);
  }
  EXPECT_EQ(code_of([&] { ev.embed_sentence(corpus_1000().get(9)); }), Errc::MissingExternalVector);
  std::istringstream cut(text.substr(0, text.size() / 2));
  EXPECT_EQ(code_of([&] { read_external_records(cut); }), Errc::FormatError);
}

TEST(Pca, LineInThreeD) {
  Eigen::MatrixXd x(100, 3);
  for (int i = 0; i < 100; ++i) x.row(i) << i * 1.0, i * 2.0 + 1, -i * 0.5;
  const PcaModel m = fit_pca(x, 0.99);
  ASSERT_EQ(m.output_dim(), 1u);
  EXPECT_NEAR(m.explained_ratio[0], 1.0, 1e-12);
}

TEST(Pca, IsotropicKeepsAll) {
  // Vertices of a regular octahedron: equal variance along every axis.
  Eigen::MatrixXd x(6, 3);
  x << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1;
  EXPECT_EQ(fit_pca(x, 0.99).output_dim(), 3u);
}

TEST(Pca, PlantedSpectrumMatchesJacobiOracle) {
  const std::vector<double> spectrum{10, 5, 1, 0.1, 0.05, 0.02, 0.01, 0.005};
  const Eigen::MatrixXd x = planted_spectrum(spectrum, 2000, 42);
  const PcaModel m = fit_pca(x, 0.99);
  const auto ev = jacobi_eigenvalues(sample_covariance(x));
  EXPECT_EQ(m.output_dim(), components_for(ev, 0.99));
  double total = 0;
  for (double v : ev) total += v;
  for (std::size_t i = 0; i < m.output_dim(); ++i) EXPECT_NEAR(m.explained_ratio[i], ev[i] / total, 1e-9);
  const Eigen::MatrixXd gram = m.components * m.components.transpose();
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Pca, Properties) {
  const Eigen::MatrixXd x = planted_spectrum({4, 3, 2, 1, 0.5, 0.01}, 500, 9);
  const PcaModel m = fit_pca(x, 0.95);
  double sum = 0;
  for (std::size_t i = 0; i < m.explained_ratio.size(); ++i) {
    EXPECT_GE(m.explained_ratio[i], 0.0);
    if (i) EXPECT_LE(m.explained_ratio[i], m.explained_ratio[i - 1]);
    sum += m.explained_ratio[i];
  }
  EXPECT_LE(sum, 1.0 + 1e-9);
  EXPECT_GE(sum, 0.95);
  EXPECT_LT(sum - m.explained_ratio.back(), 0.95);
  EXPECT_LT(apply_pca(m, m.mean).norm(), 1e-12);
  // Affine: apply(m + l (v - m)) = l apply(v).
  const Eigen::VectorXd v = x.row(3).transpose();
  EXPECT_LT((apply_pca(m, m.mean + 2.5 * (v - m.mean)) - 2.5 * apply_pca(m, v)).norm(), 1e-9);
  // Sign convention: largest-magnitude entry positive.
  for (Eigen::Index r = 0; r < m.components.rows(); ++r) {
    Eigen::Index arg;
    m.components.row(r).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(m.components(r, arg), 0.0);
  }
  EXPECT_EQ(code_of([&] { apply_pca(m, Eigen::VectorXd::Zero(3)); }), Errc::DimensionMismatch);
}

TEST(Pca, ReconstructionAndRetainedVariance) {
  const Eigen::MatrixXd x = planted_spectrum({10, 5, 1, 0.1, 0.05, 0.02, 0.01, 0.005}, 1000, 4);
  const PcaModel full = fit_pca(x, 1.0);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd v = x.row(i).transpose();
    EXPECT_LT((reconstruct_pca(full, apply_pca(full, v)) - v).norm(), 1e-9);
  }
  const PcaModel m = fit_pca(x, 0.99);
  Eigen::MatrixXd reduced(x.rows(), static_cast<Eigen::Index>(m.output_dim()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) reduced.row(i) = apply_pca(m, x.row(i).transpose()).transpose();
  const double before = sample_covariance(x).trace(), after = sample_covariance(reduced).trace();
  EXPECT_GE(after / before, 0.99 - 1e-12);
}

TEST(Pca, Errors) {
  EXPECT_EQ(code_of([] { fit_pca(Eigen::MatrixXd::Ones(5, 3), 0.99); }), Errc::DegenerateData);
  EXPECT_EQ(code_of([] { fit_pca(Eigen::MatrixXd::Ones(1, 3), 0.99); }), Errc::InvalidArgument);
  EXPECT_EQ(code_of([] { fit_pca(Eigen::MatrixXd::Random(5, 3), 1.5); }), Errc::InvalidArgument);
}
