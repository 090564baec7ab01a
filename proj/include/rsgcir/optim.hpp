#ifndef RSGCIR_OPTIM_HPP
#define RSGCIR_OPTIM_HPP

// Derivative-free minimization: Nelder-Mead with restarts, followed by an
// optional coordinate-wise quadratic polish.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "rsgcir/errors.hpp"
#include "rsgcir/linalg.hpp"

namespace rsgcir {

using Objective = std::function<double(const Vec&)>;

struct OptimizerConfig {
  int max_evals = 4000;
  double ftol = 1e-10;  // relative spread of simplex values
  double xtol = 1e-8;   // simplex diameter
  double initial_step = 0.1;
  int restarts = 1;  // extra Nelder-Mead restarts from the current best
  bool polish = true;
  int polish_sweeps = 3;
};

struct OptimizerResult {
  Vec x;
  double f = std::numeric_limits<double>::infinity();
  int evals = 0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline double guarded(const Objective& f, const Vec& x, int& evals) {
  ++evals;
  const double v = f(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

inline OptimizerResult nelder_mead_once(const Objective& f, const Vec& x0, double step,
                                        const OptimizerConfig& cfg, int budget) {
  const Eigen::Index n = x0.size();
  std::vector<Vec> simplex(n + 1, x0);
  std::vector<double> fv(n + 1);
  int evals = 0;
  fv[0] = guarded(f, x0, evals);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = step * std::max(1.0, std::abs(x0(i)));
    simplex[i + 1](i) += h;
    fv[i + 1] = guarded(f, simplex[i + 1], evals);
    if (!std::isfinite(fv[i + 1])) {
      simplex[i + 1](i) = x0(i) - h;
      fv[i + 1] = guarded(f, simplex[i + 1], evals);
    }
  }

  std::vector<int> order(n + 1);
  OptimizerResult res;
  int iter = 0;
  while (evals < budget) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    const int best = order.front();
    const int worst = order.back();
    const int second = order[n - 1];

    double diam = 0.0;
    for (Eigen::Index i = 0; i <= n; ++i)
      diam = std::max(diam, (simplex[i] - simplex[best]).cwiseAbs().maxCoeff());
    const double spread = std::abs(fv[worst] - fv[best]);
    if (std::isfinite(fv[worst]) &&
        spread <= cfg.ftol * (std::abs(fv[best]) + cfg.ftol) && diam <= std::sqrt(cfg.xtol)) {
      res.converged = true;
      break;
    }
    if (diam <= cfg.xtol) {
      res.converged = true;
      break;
    }
    ++iter;

    Vec centroid = Vec::Zero(n);
    for (int k = 0; k < n; ++k) centroid += simplex[order[k]];
    centroid /= static_cast<double>(n);

    const Vec xr = centroid + (centroid - simplex[worst]);
    const double fr = guarded(f, xr, evals);
    if (fr < fv[best]) {
      const Vec xe = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = guarded(f, xe, evals);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const Vec xc = outside ? Vec(centroid + 0.5 * (xr - centroid))
                           : Vec(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = guarded(f, xc, evals);
    if (fc < (outside ? fr : fv[worst])) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (int k = 1; k <= n; ++k) {
      const int idx = order[k];
      simplex[idx] = simplex[best] + 0.5 * (simplex[idx] - simplex[best]);
      fv[idx] = guarded(f, simplex[idx], evals);
    }
  }
  const auto it = std::min_element(fv.begin(), fv.end());
  res.x = simplex[it - fv.begin()];
  res.f = *it;
  res.evals = evals;
  res.iterations = iter;
  return res;
}

// Parabolic line search along coordinate i; only accepts improvements.
inline void polish_coordinate(const Objective& f, Vec& x, double& fx, Eigen::Index i,
                              int& evals) {
  double h = 1e-3 * std::max(1.0, std::abs(x(i)));
  for (int attempt = 0; attempt < 4; ++attempt, h *= 0.1) {
    Vec xm = x, xp = x;
    xm(i) -= h;
    xp(i) += h;
    const double fm = guarded(f, xm, evals);
    const double fp = guarded(f, xp, evals);
    if (!std::isfinite(fm) || !std::isfinite(fp)) continue;
    const double curv = fp - 2.0 * fx + fm;
    Vec cand = x;
    if (curv > 0.0) {
      cand(i) = x(i) - 0.5 * h * (fp - fm) / curv;
    } else {
      cand(i) = fp < fm ? xp(i) : xm(i);
    }
    const double fc = guarded(f, cand, evals);
    double best_f = fx;
    Vec best_x = x;
    for (auto [xv, fvv] : {std::pair<const Vec*, double>{&xm, fm}, {&xp, fp}, {&cand, fc}}) {
      if (fvv < best_f) {
        best_f = fvv;
        best_x = *xv;
      }
    }
    if (best_f < fx) {
      x = best_x;
      fx = best_f;
      return;
    }
  }
}

}  // namespace detail

/// Minimizes f from x0. The returned point never has a larger value than f(x0).
inline OptimizerResult minimize(const Objective& f, const Vec& x0,
                                const OptimizerConfig& cfg = {}) {
  int evals = 0;
  const double f0 = detail::guarded(f, x0, evals);
  OptimizerResult best{x0, f0, evals, 0, false};
  if (x0.size() == 0) {
    best.converged = true;
    return best;
  }
  double step = cfg.initial_step;
  for (int round = 0; round <= cfg.restarts; ++round) {
    const int budget = cfg.max_evals - best.evals;
    if (budget <= 2 * (x0.size() + 1)) break;
    auto r = detail::nelder_mead_once(f, best.x, step, cfg, budget);
    best.evals += r.evals;
    best.iterations += r.iterations;
    const double previous = best.f;
    if (r.f <= best.f) {
      best.x = r.x;
      best.f = r.f;
    }
    best.converged = r.converged;
    if (round > 0 && std::abs(previous - best.f) <= cfg.ftol * (std::abs(best.f) + cfg.ftol))
      break;
    step *= 0.5;
  }
  if (cfg.polish && std::isfinite(best.f)) {
    for (int sweep = 0; sweep < cfg.polish_sweeps && best.evals < cfg.max_evals + 200; ++sweep) {
      const double before = best.f;
      for (Eigen::Index i = 0; i < best.x.size(); ++i)
        detail::polish_coordinate(f, best.x, best.f, i, best.evals);
      if (before - best.f <= cfg.ftol * (std::abs(best.f) + cfg.ftol)) break;
    }
  }
  return best;
}

/// Runs `minimize` from every start and keeps the lowest value (ties: earliest start).
inline OptimizerResult minimize_multistart(const Objective& f, const std::vector<Vec>& starts,
                                           const OptimizerConfig& cfg = {}) {
  RSGCIR_REQUIRE(!starts.empty(), ErrorCode::InvalidArgument, "no starting points");
  OptimizerResult best;
  int total = 0;
  for (const auto& s : starts) {
    auto r = minimize(f, s, cfg);
    total += r.evals;
    if (r.f < best.f || best.x.size() == 0) best = r;
  }
  best.evals = total;
  return best;
}

}  // namespace rsgcir

#endif  // RSGCIR_OPTIM_HPP
