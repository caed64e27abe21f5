#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "nes/error.hpp"

namespace nes {

struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // k x d_raw, orthonormal rows
  std::vector<double> explained_ratio;  // descending, one per component

  std::size_t input_dim() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(components.rows()); }
};

/// Fits PCA on the rows of `data` and keeps the fewest leading components whose
/// cumulative explained-variance ratio reaches `target_variance`.
/// Sign convention: the largest-magnitude entry of each component is positive
/// (first such entry on ties).
inline PcaModel fit_pca(const Eigen::MatrixXd& data, double target_variance) {
  if (data.rows() < 2) fail(Errc::InvalidArgument, "PCA needs at least two rows");
  if (!(target_variance > 0.0 && target_variance <= 1.0))
    fail(Errc::InvalidArgument, "target variance must lie in (0, 1]");

  PcaModel m;
  m.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - m.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(data.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) fail(Errc::DegenerateData, "eigendecomposition failed");
  const Eigen::Index d = cov.rows();
  // Eigen returns ascending eigenvalues.
  std::vector<double> values(static_cast<std::size_t>(d));
  double total = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    values[static_cast<std::size_t>(i)] = std::max(0.0, eig.eigenvalues()(d - 1 - i));
    total += values[static_cast<std::size_t>(i)];
  }
  if (!(total > 0.0)) fail(Errc::DegenerateData, "data has zero total variance");

  Eigen::Index k = d;
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    cumulative += values[static_cast<std::size_t>(i)] / total;
    if (cumulative >= target_variance) {
      k = i + 1;
      break;
    }
  }

  m.components.resize(k, d);
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - i);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < d; ++j)
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    if (v(arg) < 0) v = -v;
    m.components.row(i) = v.transpose();
    m.explained_ratio.push_back(values[static_cast<std::size_t>(i)] / total);
  }
  return m;
}

inline Eigen::VectorXd apply_pca(const PcaModel& model, const Eigen::VectorXd& v) {
  if (v.size() != model.mean.size())
    fail(Errc::DimensionMismatch, "vector has " + std::to_string(v.size()) + " entries, PCA expects " +
                                      std::to_string(model.mean.size()));
  return model.components * (v - model.mean);
}

inline Eigen::VectorXd reconstruct_pca(const PcaModel& model, const Eigen::VectorXd& reduced) {
  if (reduced.size() != model.components.rows()) fail(Errc::DimensionMismatch, "reduced vector width mismatch");
  return model.mean + model.components.transpose() * reduced;
}

}  // namespace nes
