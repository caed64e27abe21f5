#pragma once

#include <string>
#include <vector>

#include "nes/binary_io.hpp"
#include "nes/corpus.hpp"
#include "nes/embed.hpp"
#include "nes/knn.hpp"
#include "nes/pca.hpp"

namespace nes {

/// Everything neural retrieval needs: how sentences were embedded, the PCA
/// fitted over them, and the reduced vectors behind an IVF (whose store doubles
/// as the exact tier).
struct IndexBundle {
  EmbeddingProviderConfig embed;
  PcaModel pca;
  IvfIndex ivf;

  const ExactIndex& exact() const { return ivf.store; }
};

struct BuildIndexOptions {
  double target_variance = 0.99;
  std::uint32_t clusters = 64;
  std::uint32_t kmeans_iters = 10;
  std::uint64_t seed = 0;
  std::uint32_t default_nprobe = 8;
  Metric metric = Metric::l2;
};

/// Reduced (PCA) sentence vector, rounded to the index's float storage.
inline std::vector<float> reduced_sentence_vector(const EmbeddingProvider& provider, const PcaModel& pca,
                                                  const Sentence& s) {
  const Eigen::VectorXd r = apply_pca(pca, provider.embed_sentence(s).vector);
  std::vector<float> out(static_cast<std::size_t>(r.size()));
  for (Eigen::Index i = 0; i < r.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(r(i));
  return out;
}

inline IndexBundle build_index(const Corpus& corpus, const EmbeddingProvider& provider,
                               const BuildIndexOptions& opt = {}) {
  if (corpus.size() < 2) fail(Errc::TooFewPoints, "index needs at least two sentences");
  IndexBundle b;
  b.embed = provider.config();
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(corpus.size()), static_cast<Eigen::Index>(provider.dim()));
  std::vector<SentenceId> ids;
  ids.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Sentence& s = corpus.sentences()[i];
    raw.row(static_cast<Eigen::Index>(i)) = provider.embed_sentence(s).vector.transpose();
    ids.push_back(s.id);
  }
  b.pca = fit_pca(raw, opt.target_variance);
  std::vector<std::vector<float>> reduced;
  reduced.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Eigen::VectorXd r = apply_pca(b.pca, raw.row(static_cast<Eigen::Index>(i)).transpose());
    reduced.emplace_back(r.data(), r.data() + r.size());  // double -> float
  }
  const auto clusters = static_cast<std::uint32_t>(std::min<std::size_t>(opt.clusters, corpus.size()));
  b.ivf = build_ivf(ids, reduced, clusters, opt.kmeans_iters, opt.seed, opt.metric);
  b.ivf.params.default_nprobe = std::min(opt.default_nprobe, clusters);
  return b;
}

// ---- NESI1 snapshot ------------------------------------------------------

inline constexpr std::string_view kIndexMagic = "NESI1";
inline constexpr std::uint8_t kIndexVersion = 1;

inline std::string save_index(const IndexBundle& b) {
  std::string out;
  bin::Writer w(out);
  const ExactIndex& st = b.ivf.store;
  w.raw(kIndexMagic);
  w.u8(kIndexVersion);
  w.u32(static_cast<std::uint32_t>(b.pca.input_dim()));
  w.u32(static_cast<std::uint32_t>(st.dim()));
  w.u64(st.size());
  w.u32(static_cast<std::uint32_t>(b.ivf.clusters()));
  w.u8(static_cast<std::uint8_t>(st.metric()));
  w.u32(b.ivf.params.kmeans_iters);
  w.u64(b.ivf.params.seed);
  w.u32(b.ivf.params.default_nprobe);
  for (float f : b.ivf.centroids) w.f32(f);
  for (const auto& list : b.ivf.lists) {
    w.u64(list.size());
    for (std::uint32_t r : list) w.u64(st.ids()[r]);
  }
  for (SentenceId id : st.ids()) w.u64(id);
  for (float f : st.data()) w.f32(f);
  // Trailer: embedding provider and PCA, so queries can be embedded the same way.
  w.u8(static_cast<std::uint8_t>(b.embed.kind));
  w.u32(b.embed.d_raw);
  w.u32(b.embed.window);
  w.u64(b.embed.seed);
  w.u32(static_cast<std::uint32_t>(b.pca.output_dim()));
  for (Eigen::Index i = 0; i < b.pca.mean.size(); ++i) w.f64(b.pca.mean(i));
  for (Eigen::Index r = 0; r < b.pca.components.rows(); ++r)
    for (Eigen::Index c = 0; c < b.pca.components.cols(); ++c) w.f64(b.pca.components(r, c));
  for (double v : b.pca.explained_ratio) w.f64(v);
  return out;
}

inline IndexBundle load_index(std::string_view bytes) {
  bin::Reader r(bytes);
  if (bytes.size() < kIndexMagic.size() || r.raw(kIndexMagic.size()) != kIndexMagic)
    fail(Errc::FormatError, "not a NESI1 index snapshot");
  if (r.u8() != kIndexVersion) fail(Errc::FormatError, "unsupported index snapshot version");
  IndexBundle b;
  const std::uint32_t raw_dim = r.u32(), dim = r.u32();
  const std::uint64_t n = r.u64();
  const std::uint32_t clusters = r.u32();
  const auto metric = static_cast<Metric>(r.u8());
  b.ivf.params.clusters = clusters;
  b.ivf.params.kmeans_iters = r.u32();
  b.ivf.params.seed = r.u64();
  b.ivf.params.default_nprobe = r.u32();
  if (static_cast<std::uint64_t>(clusters) * dim > r.remaining() / 4) fail(Errc::FormatError, "truncated centroids");
  b.ivf.centroids.resize(static_cast<std::size_t>(clusters) * dim);
  for (float& f : b.ivf.centroids) f = r.f32();
  std::vector<std::vector<SentenceId>> list_ids(clusters);
  for (auto& l : list_ids) {
    const std::uint64_t len = r.u64();
    if (len > n) fail(Errc::FormatError, "inverted list longer than the index");
    l.resize(static_cast<std::size_t>(len));
    for (auto& id : l) id = r.u64();
  }
  if (n * (8 + 4ull * dim) > r.remaining()) fail(Errc::FormatError, "truncated vectors");
  std::vector<SentenceId> ids(static_cast<std::size_t>(n));
  for (auto& id : ids) id = r.u64();
  std::vector<float> data(static_cast<std::size_t>(n) * dim);
  for (float& f : data) f = r.f32();
  b.ivf.store = ExactIndex(std::move(ids), std::move(data), dim, metric);
  for (const auto& l : list_ids) {
    auto& rows = b.ivf.lists.emplace_back();
    for (SentenceId id : l) {
      const auto row = b.ivf.store.row_of(id);
      if (!row) fail(Errc::FormatError, "inverted list references unknown id");
      rows.push_back(static_cast<std::uint32_t>(*row));
    }
  }
  b.embed.kind = static_cast<EmbeddingProviderConfig::Kind>(r.u8());
  b.embed.d_raw = r.u32();
  b.embed.window = r.u32();
  b.embed.seed = r.u64();
  const std::uint32_t k = r.u32();
  if (k != dim || b.embed.d_raw != raw_dim) fail(Errc::FormatError, "PCA block disagrees with index dims");
  b.pca.mean.resize(raw_dim);
  for (Eigen::Index i = 0; i < b.pca.mean.size(); ++i) b.pca.mean(i) = r.f64();
  b.pca.components.resize(k, raw_dim);
  for (Eigen::Index i = 0; i < b.pca.components.rows(); ++i)
    for (Eigen::Index j = 0; j < b.pca.components.cols(); ++j) b.pca.components(i, j) = r.f64();
  b.pca.explained_ratio.resize(k);
  for (double& v : b.pca.explained_ratio) v = r.f64();
  if (!r.done()) fail(Errc::FormatError, "trailing bytes after index snapshot");
  return b;
}

inline void save_index_file(const IndexBundle& b, const std::string& path) { bin::write_file(path, save_index(b)); }

inline IndexBundle load_index_file(const std::string& path) { return load_index(bin::read_file(path)); }

}  // namespace nes
