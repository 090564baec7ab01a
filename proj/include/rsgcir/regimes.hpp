#ifndef RSGCIR_REGIMES_HPP
#define RSGCIR_REGIMES_HPP

#include <cmath>
#include <string>
#include <vector>

#include "rsgcir/errors.hpp"
#include "rsgcir/linalg.hpp"
#include "rsgcir/log.hpp"

namespace rsgcir {

/// Generator of a time-homogeneous CTMC (zero row sums, nonnegative off-diagonals).
class CtmcGenerator {
 public:
  CtmcGenerator() = default;

  CtmcGenerator(Mat q, std::vector<std::string> labels, double tol = 1e-10)
      : q_(std::move(q)), labels_(std::move(labels)) {
    RSGCIR_REQUIRE(q_.rows() == q_.cols() && q_.rows() > 0, ErrorCode::InvalidGenerator,
                   "generator must be square and nonempty");
    if (labels_.empty()) {
      for (Eigen::Index i = 0; i < q_.rows(); ++i) labels_.push_back(std::to_string(i));
    }
    RSGCIR_REQUIRE(static_cast<Eigen::Index>(labels_.size()) == q_.rows(),
                   ErrorCode::InvalidGenerator, "label count does not match generator size");
    for (Eigen::Index i = 0; i < q_.rows(); ++i) {
      double scale = 0.0;
      for (Eigen::Index j = 0; j < q_.cols(); ++j) {
        RSGCIR_REQUIRE(std::isfinite(q_(i, j)), ErrorCode::InvalidGenerator, "non-finite entry");
        if (i != j) {
          RSGCIR_REQUIRE(q_(i, j) >= 0.0, ErrorCode::InvalidGenerator,
                         "negative off-diagonal intensity in row " + std::to_string(i));
        }
        scale += std::abs(q_(i, j));
      }
      RSGCIR_REQUIRE(std::abs(q_.row(i).sum()) <= tol * std::max(1.0, scale),
                     ErrorCode::InvalidGenerator,
                     "row " + std::to_string(i) + " does not sum to zero");
    }
  }

  /// Two-state chain with exit intensities a (0 -> 1) and b (1 -> 0).
  static CtmcGenerator two_state(double a, double b, std::vector<std::string> labels = {}) {
    Mat q(2, 2);
    q << -a, a, b, -b;
    return {q, std::move(labels)};
  }

  static CtmcGenerator zero(int n, std::vector<std::string> labels = {}) {
    return {Mat::Zero(n, n), std::move(labels)};
  }

  const Mat& q() const { return q_; }
  const std::vector<std::string>& labels() const { return labels_; }
  int size() const { return static_cast<int>(q_.rows()); }

 private:
  Mat q_ = Mat::Zero(1, 1);
  std::vector<std::string> labels_{"0"};
};

struct TransitionMatrix {
  Mat p;
  double horizon = 0.0;
};

inline TransitionMatrix transition_matrix(const CtmcGenerator& g, double delta) {
  RSGCIR_REQUIRE(delta >= 0.0, ErrorCode::InvalidArgument, "horizon must be nonnegative");
  Mat p = expm(g.q() * delta);
  double drift = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = std::max(0.0, p(i, j));
    drift = std::max(drift, std::abs(p.row(i).sum() - 1.0));
  }
  if (drift > 1e-12) {
    logger()->warn("transition matrix row-sum drift {:.3e}; renormalizing", drift);
    for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) /= p.row(i).sum();
  }
  return {p, delta};
}

/// Q^r (+) Q^c = Q^r x I + I x Q^c with labels "r/c" in row-major product order.
inline CtmcGenerator kronecker_sum(const CtmcGenerator& qr, const CtmcGenerator& qc) {
  const int nr = qr.size();
  const int nc = qc.size();
  Mat q = Eigen::kroneckerProduct(qr.q(), Mat::Identity(nc, nc)).eval() +
          Eigen::kroneckerProduct(Mat::Identity(nr, nr), qc.q()).eval();
  std::vector<std::string> labels;
  for (const auto& a : qr.labels())
    for (const auto& b : qc.labels()) labels.push_back(a + "/" + b);
  return {q, labels};
}

inline bool is_irreducible(const CtmcGenerator& g) {
  const int n = g.size();
  auto reach_all = [&](bool forward) {
    std::vector<bool> seen(n, false);
    std::vector<int> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (int j = 0; j < n; ++j) {
        const double w = forward ? g.q()(i, j) : g.q()(j, i);
        if (j != i && w > 0.0 && !seen[j]) {
          seen[j] = true;
          stack.push_back(j);
        }
      }
    }
    for (bool s : seen)
      if (!s) return false;
    return true;
  };
  return reach_all(true) && reach_all(false);
}

inline Vec stationary_distribution(const CtmcGenerator& g) {
  const int n = g.size();
  if (n == 1) return Vec::Ones(1);
  RSGCIR_REQUIRE(is_irreducible(g), ErrorCode::ReducibleChain,
                 "generator graph is not strongly connected");
  Mat a(n + 1, n);
  a.topRows(n) = g.q().transpose();
  a.row(n).setOnes();
  Vec rhs = Vec::Zero(n + 1);
  rhs(n) = 1.0;
  Vec pi = a.colPivHouseholderQr().solve(rhs);
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

}  // namespace rsgcir

#endif  // RSGCIR_REGIMES_HPP
