#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "nes/corpus.hpp"
#include "nes/error.hpp"
#include "nes/rng.hpp"

namespace nes {

struct Neighbor {
  SentenceId id = 0;
  double distance = 0.0;  // squared Euclidean

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
}

/// `cosine` normalises vectors at index time (and queries at search time), so
/// squared L2 ranks by cosine similarity.
enum class Metric : std::uint8_t { l2 = 0, cosine = 1 };

inline double squared_l2(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

namespace detail {

inline void normalize(std::span<float> v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  if (sq <= 0.0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (float& x : v) x = static_cast<float>(x * inv);
}

}  // namespace detail

/// Flat row-major store; the exact tier and the payload of the IVF tier.
class ExactIndex {
 public:
  ExactIndex() = default;
  ExactIndex(std::vector<SentenceId> ids, std::vector<float> data, std::size_t dim, Metric metric)
      : ids_(std::move(ids)), data_(std::move(data)), dim_(dim), metric_(metric) {
    row_of_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i)
      if (!row_of_.emplace(ids_[i], i).second) fail(Errc::InvalidArgument, "duplicate id in index");
  }

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  Metric metric() const { return metric_; }
  const std::vector<SentenceId>& ids() const { return ids_; }
  const std::vector<float>& data() const { return data_; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  std::optional<std::size_t> row_of(SentenceId id) const {
    auto it = row_of_.find(id);
    if (it == row_of_.end()) return std::nullopt;
    return it->second;
  }

  /// Query prepared for this index's metric, after a dimension check.
  std::vector<float> prepare_query(std::span<const float> q) const {
    if (q.size() != dim_)
      fail(Errc::DimensionMismatch, "query has " + std::to_string(q.size()) + " dims, index has " + std::to_string(dim_));
    std::vector<float> out(q.begin(), q.end());
    if (metric_ == Metric::cosine) detail::normalize(out);
    return out;
  }

 private:
  std::vector<SentenceId> ids_;
  std::vector<float> data_;
  std::size_t dim_ = 0;
  Metric metric_ = Metric::l2;
  std::unordered_map<SentenceId, std::size_t> row_of_;
};

inline ExactIndex build_exact(std::span<const SentenceId> ids, const std::vector<std::vector<float>>& vectors,
                              Metric metric = Metric::l2) {
  if (ids.size() != vectors.size()) fail(Errc::DimensionMismatch, "id and vector counts differ");
  if (vectors.empty()) return ExactIndex({}, {}, 0, metric);
  const std::size_t d = vectors.front().size();
  std::vector<float> data;
  data.reserve(vectors.size() * d);
  for (const auto& v : vectors) {
    if (v.size() != d) fail(Errc::DimensionMismatch, "vectors have mixed dimensions");
    const std::size_t at = data.size();
    data.insert(data.end(), v.begin(), v.end());
    if (metric == Metric::cosine) detail::normalize(std::span(data.data() + at, d));
  }
  return ExactIndex(std::vector<SentenceId>(ids.begin(), ids.end()), std::move(data), d, metric);
}

namespace detail {

inline std::vector<Neighbor> top_k(std::vector<Neighbor> all, std::size_t k) {
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), neighbor_less);
  all.resize(k);
  return all;
}

}  // namespace detail

/// k smallest squared-L2 neighbours, ascending, ties by id.
inline std::vector<Neighbor> search_exact(const ExactIndex& index, std::span<const float> query, std::size_t k) {
  if (index.size() == 0) return {};
  const auto q = index.prepare_query(query);
  std::vector<Neighbor> all(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) all[i] = {index.ids()[i], squared_l2(q, index.row(i))};
  return detail::top_k(std::move(all), k);
}

struct IvfParams {
  std::uint32_t clusters = 1;
  std::uint32_t kmeans_iters = 10;
  std::uint64_t seed = 0;
  std::uint32_t default_nprobe = 1;
};

struct IvfIndex {
  ExactIndex store;
  IvfParams params;
  std::vector<float> centroids;                    // clusters x dim
  std::vector<std::vector<std::uint32_t>> lists;   // row indices into store, ascending

  std::size_t clusters() const { return lists.size(); }
  std::span<const float> centroid(std::size_t c) const { return {centroids.data() + c * store.dim(), store.dim()}; }
};

namespace detail {

inline std::uint32_t nearest_centroid(std::span<const float> v, const std::vector<float>& centroids, std::size_t d) {
  const std::size_t c = centroids.size() / d;
  std::uint32_t best = 0;
  double best_d = INFINITY;
  for (std::size_t j = 0; j < c; ++j) {
    const double dist = squared_l2(v, std::span(centroids.data() + j * d, d));
    if (dist < best_d) {
      best_d = dist;
      best = static_cast<std::uint32_t>(j);
    }
  }
  return best;
}

}  // namespace detail

/// k-means (seeded) inverted file. Initial centroids are the first `clusters`
/// distinct vectors of a seeded shuffle; Lloyd runs `iters` rounds; empty
/// clusters keep their previous centroid.
inline IvfIndex build_ivf(std::span<const SentenceId> ids, const std::vector<std::vector<float>>& vectors,
                          std::uint32_t clusters, std::uint32_t iters, std::uint64_t seed,
                          Metric metric = Metric::l2) {
  if (clusters < 1 || vectors.size() < clusters)
    fail(Errc::TooFewPoints, std::to_string(vectors.size()) + " vectors for " + std::to_string(clusters) + " clusters");
  IvfIndex ivf;
  ivf.store = build_exact(ids, vectors, metric);
  ivf.params = IvfParams{clusters, iters, seed, std::min<std::uint32_t>(clusters, 8)};
  const std::size_t n = ivf.store.size(), d = ivf.store.dim();

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::uint32_t> chosen;
  for (std::uint32_t r : order) {
    if (chosen.size() == clusters) break;
    const auto v = ivf.store.row(r);
    bool dup = false;
    for (std::uint32_t c : chosen) dup = dup || std::equal(v.begin(), v.end(), ivf.store.row(c).begin());
    if (!dup) chosen.push_back(r);
  }
  if (chosen.size() < clusters) fail(Errc::TooFewPoints, "fewer distinct vectors than clusters");
  ivf.centroids.reserve(clusters * d);
  for (std::uint32_t r : chosen) {
    const auto v = ivf.store.row(r);
    ivf.centroids.insert(ivf.centroids.end(), v.begin(), v.end());
  }

  std::vector<std::uint32_t> assign(n, 0);
  for (std::uint32_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) assign[i] = detail::nearest_centroid(ivf.store.row(i), ivf.centroids, d);
    std::vector<double> sums(clusters * d, 0.0);
    std::vector<std::size_t> counts(clusters, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = ivf.store.row(i);
      double* acc = sums.data() + assign[i] * d;
      for (std::size_t j = 0; j < d; ++j) acc[j] += v[j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < clusters; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j)
        ivf.centroids[c * d + j] = static_cast<float>(sums[c * d + j] / static_cast<double>(counts[c]));
    }
  }
  ivf.lists.assign(clusters, {});
  for (std::size_t i = 0; i < n; ++i)
    ivf.lists[detail::nearest_centroid(ivf.store.row(i), ivf.centroids, d)].push_back(static_cast<std::uint32_t>(i));
  return ivf;
}

/// Exact search restricted to the lists of the `nprobe` nearest centroids.
inline std::vector<Neighbor> search_ivf(const IvfIndex& index, std::span<const float> query, std::size_t k,
                                        std::size_t nprobe) {
  if (nprobe < 1 || nprobe > index.clusters())
    fail(Errc::InvalidArgument, "nprobe must lie in [1, " + std::to_string(index.clusters()) + "]");
  const auto q = index.store.prepare_query(query);
  std::vector<Neighbor> cells(index.clusters());
  for (std::size_t c = 0; c < index.clusters(); ++c) cells[c] = {c, squared_l2(q, index.centroid(c))};
  cells = detail::top_k(std::move(cells), nprobe);
  std::vector<Neighbor> all;
  for (const auto& cell : cells)
    for (std::uint32_t r : index.lists[cell.id]) all.push_back({index.store.ids()[r], squared_l2(q, index.store.row(r))});
  return detail::top_k(std::move(all), k);
}

}  // namespace nes
