#pragma once

// Budget-smoothing fixed point: pi_i = min{1, B_i / eCPM_i(pi)}.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gsp/engine.hpp"
#include "gsp/market.hpp"

namespace gsp {

enum class PacingMethod { fixed_point, gauss_newton };

struct PacingOptions {
  double tol = 1e-8;
  std::size_t max_iter = 500;
  PacingMethod method = PacingMethod::fixed_point;
  double damping = 0.5;
  Engine engine = Engine::dp;
};

struct PacingSolution {
  std::vector<std::string> ids;  // canonical order of the active bidders
  std::vector<double> pi;
  OutcomeTable outcomes;  // evaluated at pi
  double residual_inf_norm = 0.0;
  double spend_residual = 0.0;  // max_i eCPM_i * |pi_i - target_i|
  std::size_t iterations = 0;
  bool converged = false;
};

/// The balanced-budget map. A bidder with zero expected spend is never filtered.
inline double balanced_filter(double budget, double ecpm) {
  if (ecpm <= 0.0) return 1.0;
  return std::min(1.0, budget / ecpm);
}

namespace detail {

struct PacingState {
  OutcomeTable outcomes;
  std::vector<double> target;
  std::vector<double> residual;  // pi - target
  double inf_norm = 0.0;
  double spend_norm = 0.0;
  double sum_squares = 0.0;

  bool within(double tol) const { return inf_norm <= tol && spend_norm <= tol; }
};

inline PacingState pacing_state(const MarketSnapshot& market, const std::vector<double>& pi,
                                Engine engine) {
  PacingState s;
  s.outcomes = evaluate_outcomes(engine, market, pi);
  const std::size_t n = pi.size();
  s.target.resize(n);
  s.residual.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.target[i] = balanced_filter(market.bidders[i].budget_per_mille, s.outcomes[i].ecpm);
    s.residual[i] = pi[i] - s.target[i];
    s.inf_norm = std::max(s.inf_norm, std::abs(s.residual[i]));
    s.spend_norm = std::max(s.spend_norm, s.outcomes[i].ecpm * std::abs(s.residual[i]));
    s.sum_squares += s.residual[i] * s.residual[i];
  }
  return s;
}

inline std::vector<double> damped_step(const std::vector<double>& pi, const std::vector<double>& target,
                                       double damping) {
  std::vector<double> next(pi.size());
  for (std::size_t i = 0; i < pi.size(); ++i)
    next[i] = std::clamp((1.0 - damping) * pi[i] + damping * target[i], 0.0, 1.0);
  return next;
}

// Jacobian of pi - T(pi). eCPM_i is affine in each opponent filter, so the
// partial derivative is the exact difference between pi_j = 1 and pi_j = 0.
// Clipped components (including the kink) have zero derivative.
inline Eigen::MatrixXd residual_jacobian(const MarketSnapshot& market, const std::vector<double>& pi,
                                         const PacingState& state, Engine engine) {
  const std::size_t n = pi.size();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<double> probe = pi;
  for (std::size_t j = 0; j < n; ++j) {
    probe[j] = 1.0;
    const OutcomeTable hi = evaluate_outcomes(engine, market, probe);
    probe[j] = 0.0;
    const OutcomeTable lo = evaluate_outcomes(engine, market, probe);
    probe[j] = pi[j];
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      const double ecpm = state.outcomes[i].ecpm;
      const double budget = market.bidders[i].budget_per_mille;
      if (ecpm <= 0.0 || budget >= ecpm) continue;
      const double d_ecpm = hi[i].ecpm - lo[i].ecpm;
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += budget / (ecpm * ecpm) * d_ecpm;
    }
  }
  return jac;
}

}  // namespace detail

/// Solves for the filtering probabilities starting from pi = 1. The answer is
/// the limit of the chosen iteration; non-convergence is reported, not thrown.
/// Convergence requires both the filter residual and the implied spend
/// residual (filter residual scaled by eCPM) to be within tolerance.
inline PacingSolution solve_pacing(const MarketSnapshot& input, const PacingOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw InvalidInput("tolerance must be positive");
  if (opt.max_iter == 0) throw InvalidInput("max_iter must be positive");
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw InvalidInput("damping must be in (0,1]");

  const MarketSnapshot market = canonical_market(input);
  const std::size_t n = market.bidders.size();
  PacingSolution sol;
  sol.ids.reserve(n);
  for (const auto& b : market.bidders) sol.ids.push_back(b.id);

  std::vector<double> pi(n, 1.0);
  detail::PacingState state = detail::pacing_state(market, pi, opt.engine);
  std::size_t iter = 0;
  while (!state.within(opt.tol) && iter < opt.max_iter) {
    ++iter;
    std::vector<double> next;
    if (opt.method == PacingMethod::gauss_newton) {
      const Eigen::MatrixXd jac = detail::residual_jacobian(market, pi, state, opt.engine);
      const Eigen::Map<const Eigen::VectorXd> f(state.residual.data(), static_cast<Eigen::Index>(n));
      const Eigen::VectorXd step = jac.colPivHouseholderQr().solve(-f);
      double t = 1.0;
      bool accepted = false;
      for (int k = 0; k < 30 && step.allFinite(); ++k, t *= 0.5) {
        std::vector<double> trial(n);
        for (std::size_t i = 0; i < n; ++i)
          trial[i] = std::clamp(pi[i] + t * step(static_cast<Eigen::Index>(i)), 0.0, 1.0);
        detail::PacingState trial_state = detail::pacing_state(market, trial, opt.engine);
        if (trial_state.sum_squares < (1.0 - 1e-4 * t) * state.sum_squares) {
          pi = std::move(trial);
          state = std::move(trial_state);
          accepted = true;
          break;
        }
      }
      if (accepted) continue;
      next = detail::damped_step(pi, state.target, opt.damping);
    } else {
      next = detail::damped_step(pi, state.target, opt.damping);
    }
    pi = std::move(next);
    state = detail::pacing_state(market, pi, opt.engine);
  }

  // Polish a converged answer with undamped steps while they keep shrinking
  // the residual; a damped iterate sits up to one residual away from the root.
  for (int k = 0; k < 8 && state.within(opt.tol) && state.inf_norm > 0.0; ++k) {
    std::vector<double> trial = detail::damped_step(pi, state.target, 1.0);
    detail::PacingState trial_state = detail::pacing_state(market, trial, opt.engine);
    if (!(trial_state.inf_norm < state.inf_norm)) break;
    pi = std::move(trial);
    state = std::move(trial_state);
  }

  sol.pi = std::move(pi);
  sol.outcomes = std::move(state.outcomes);
  sol.residual_inf_norm = state.inf_norm;
  sol.spend_residual = state.spend_norm;
  sol.iterations = iter;
  sol.converged = state.within(opt.tol);
  return sol;
}

/// Residual of an arbitrary filter vector against a canonical market.
inline double pacing_residual(const MarketSnapshot& canonical, std::span<const double> pi,
                              Engine engine = Engine::dp) {
  const OutcomeTable out = evaluate_outcomes(engine, canonical, pi);
  double worst = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i)
    worst = std::max(worst, std::abs(pi[i] - balanced_filter(canonical.bidders[i].budget_per_mille, out[i].ecpm)));
  return worst;
}

}  // namespace gsp
