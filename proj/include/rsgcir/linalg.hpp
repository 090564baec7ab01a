#ifndef RSGCIR_LINALG_HPP
#define RSGCIR_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "rsgcir/errors.hpp"

namespace rsgcir {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Vec4 = Eigen::Vector4d;

/// Pade scaling-and-squaring exponential.
inline Mat expm(const Mat& a) { return a.exp(); }

/// Principal logarithm (Schur-Parlett).
inline Mat logm(const Mat& a) { return a.log(); }

inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

/// Symmetric eigenvalue floor at `floor`.
inline Mat floor_eigenvalues(const Mat& a, double floor = 0.0) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  Vec ev = es.eigenvalues().cwiseMax(floor);
  return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix; `rank_deficient` reports
/// whether any eigenvalue was dropped.
inline Mat pinv_symmetric(const Mat& a, bool* rank_deficient = nullptr, double rtol = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  const Vec& ev = es.eigenvalues();
  const double cutoff = rtol * std::max(1.0, ev.cwiseAbs().maxCoeff());
  Vec inv(ev.size());
  bool dropped = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (std::abs(ev(i)) > cutoff) {
      inv(i) = 1.0 / ev(i);
    } else {
      inv(i) = 0.0;
      dropped = true;
    }
  }
  if (rank_deficient) *rank_deficient = dropped;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

inline double logsumexp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

inline Vec from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Mat from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Mat(0, 0);
  Mat m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    RSGCIR_REQUIRE(rows[i].size() == rows.front().size(), ErrorCode::DimensionMismatch,
                   "ragged matrix rows");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

inline std::vector<std::vector<double>> to_rows(const Mat& m) {
  std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

}  // namespace rsgcir

#endif  // RSGCIR_LINALG_HPP
