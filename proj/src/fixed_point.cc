#include "pgql/fixed_point.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "pgql/errors.h"

namespace pgql {
namespace {

constexpr long kModifiedIterationCap = 10'000'000;

void check_alpha(double alpha) {
  if (!(alpha > 0.0)) {
    throw DomainError("alpha must be positive, got " + std::to_string(alpha));
  }
}

void check_options(const FixedPointOptions& options) {
  if (!(options.tol > 0.0)) throw DomainError("tol must be positive");
  if (!(options.damping > 0.0 && options.damping <= 1.0)) {
    throw DomainError("damping must lie in (0, 1]");
  }
  if (options.max_iterations <= 0) {
    throw DomainError("max_iterations must be positive");
  }
}

struct IterationState {
  TabularPolicy policy;
  QTable q_pi;
  QTable target;  // values whose softmax at temperature alpha is the goal
};

// Damped iteration on the logits toward target(policy) / alpha. The
// `evaluate` callback fills q_pi and target for the current policy.
FixedPointResult damped_logit_iteration(
    const TabularMdp& mdp, double alpha, const FixedPointOptions& options,
    const std::function<void(IterationState&)>& evaluate) {
  IterationState state;
  state.policy = TabularPolicy::uniform(mdp.n_states, mdp.n_actions);
  state.policy.temperature = alpha;

  FixedPointResult result;
  for (int it = 0; it < options.max_iterations; ++it) {
    evaluate(state);
    const Eigen::MatrixXd goal_logits = state.target.values / alpha;
    const Eigen::MatrixXd current = state.policy.probabilities();
    // Probability gap, and the same gap on the Q scale (alpha times the
    // log-policy gap). The first alone hides large relative errors in
    // near-zero actions, which Q~ = alpha log pi + ... magnifies.
    const double residual = std::max(
        sup_norm(current - softmax_rows(goal_logits)),
        alpha * sup_norm(state.policy.log_probabilities() -
                         log_softmax_rows(goal_logits)));
    if (!std::isfinite(residual)) {
      throw NotConvergedError("fixed-point iteration produced NaN",
                              result.residual_history);
    }
    if (residual <= options.tol) {
      result.iterations = it;
      result.policy = std::move(state.policy);
      result.q_pi = std::move(state.q_pi);
      result.q_tilde = std::move(state.target);
      return result;
    }
    state.policy.logits = (1.0 - options.damping) * state.policy.logits +
                          options.damping * goal_logits;
    // Per-state shift keeps logits bounded; softmax is unchanged.
    for (int s = 0; s < mdp.n_states; ++s) {
      state.policy.logits.row(s).array() -= state.policy.logits.row(s).maxCoeff();
    }
    result.residual_history.push_back(
        sup_norm(state.policy.probabilities() - current));
  }
  throw NotConvergedError(
      "fixed-point iteration did not converge in " +
          std::to_string(options.max_iterations) + " iterations",
      result.residual_history);
}

}  // namespace

QTable q_tilde_from_policy(const TabularPolicy& policy, const VTable& v,
                           double alpha) {
  check_alpha(alpha);
  if (v.values.size() != policy.logits.rows()) {
    throw DimensionError("value table and policy disagree on n_states");
  }
  const Eigen::MatrixXd logp = policy.log_probabilities();
  const Eigen::VectorXd entropy = entropy_rows(policy.logits);
  Eigen::MatrixXd out = alpha * (logp.colwise() + entropy);
  out.colwise() += v.values;
  return QTable{std::move(out)};
}

FixedPointResult solve_regularized_fixed_point(
    const TabularMdp& mdp, double alpha, const FixedPointOptions& options) {
  check_alpha(alpha);
  check_options(options);
  FixedPointResult result = damped_logit_iteration(
      mdp, alpha, options, [&](IterationState& state) {
        state.q_pi = evaluate_policy(mdp, state.policy).q;
        state.target = state.q_pi;
      });
  const Eigen::VectorXd value =
      (result.policy.probabilities().array() * result.q_pi.values.array())
          .rowwise()
          .sum();
  result.q_tilde = q_tilde_from_policy(result.policy, VTable{value}, alpha);
  return result;
}

BoundReport bellman_residual_report(const TabularMdp& mdp,
                                    const FixedPointResult& result,
                                    double alpha, double tol) {
  BoundReport report;
  report.alpha = alpha;
  const Eigen::MatrixXd gap =
      apply_bellman_star(result.q_pi, mdp).values - result.q_pi.values;
  report.residual_min = gap.minCoeff();
  report.residual_max = gap.maxCoeff();
  report.bound = mdp.n_actions * alpha * std::exp(-1.0);
  report.passed = report.residual_min >= -10.0 * tol &&
                  report.residual_max <= report.bound + 10.0 * tol;
  return report;
}

QTable solve_qtilde_modified(const QTable& q_pi, double eta,
                             const TabularMdp& mdp, double tol) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("eta must lie in [0, 1]");
  if (!(tol > 0.0)) throw DomainError("tol must be positive");
  if (q_pi.values.rows() != mdp.n_states ||
      q_pi.values.cols() != mdp.n_actions) {
    throw DimensionError("Q table does not match the MDP");
  }
  if (eta == 0.0) return q_pi;
  if (eta == 1.0) return solve_q_star(mdp, tol);

  // Contraction with modulus eta * gamma.
  QTable x = q_pi;
  for (long it = 0; it < kModifiedIterationCap; ++it) {
    QTable next{(1.0 - eta) * q_pi.values +
                eta * apply_bellman_star(x, mdp).values};
    const double change = sup_norm(next.values - x.values);
    x = std::move(next);
    if (change <= tol) return x;
  }
  throw Error("modified fixed point hit its iteration cap");
}

FixedPointResult solve_pgql_fixed_point(const TabularMdp& mdp, double alpha,
                                        double eta,
                                        const FixedPointOptions& options) {
  check_alpha(alpha);
  check_options(options);
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("eta must lie in [0, 1]");
  const double inner_tol = std::max(options.tol * 1e-2, 1e-13);
  if (eta == 1.0) {
    // Q~ no longer depends on the policy.
    const QTable q_star = solve_q_star(mdp, inner_tol);
    return damped_logit_iteration(
        mdp, alpha, options, [&](IterationState& state) {
          state.q_pi = evaluate_policy(mdp, state.policy).q;
          state.target = q_star;
        });
  }
  return damped_logit_iteration(
      mdp, alpha, options, [&](IterationState& state) {
        state.q_pi = evaluate_policy(mdp, state.policy).q;
        state.target = solve_qtilde_modified(state.q_pi, eta, mdp, inner_tol);
      });
}

BoundReport verify_appendix_bounds(const TabularMdp& mdp,
                                   const FixedPointResult& result,
                                   double alpha, double eta, double gamma) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("eta must lie in [0, 1]");
  if (!(eta * gamma < 1.0)) throw DomainError("need eta * gamma < 1");
  BoundReport report = bellman_residual_report(mdp, result, alpha);
  report.eta = eta;

  const QTable& q_pi = result.q_pi;
  const QTable& q_tilde = result.q_tilde;
  const Eigen::MatrixXd star_tilde = apply_bellman_star(q_tilde, mdp).values;
  const Eigen::MatrixXd pi_tilde =
      apply_bellman_pi(q_tilde, result.policy, mdp).values;
  const Eigen::MatrixXd star_pi = apply_bellman_star(q_pi, mdp).values;

  const double tilde_gap = sup_norm(q_tilde.values - q_pi.values);
  const double greedy_gap = sup_norm(star_tilde - pi_tilde);
  const double tilde_residual = sup_norm(star_tilde - q_tilde.values);
  const double pi_residual = sup_norm(star_pi - q_pi.values);
  const double contraction = 1.0 - eta * gamma;

  report.chain1_lhs = tilde_gap;
  report.chain1_rhs = eta / contraction * greedy_gap;
  report.chain2_lhs = tilde_residual;
  report.chain2_rhs = 3.0 / contraction * greedy_gap;
  report.chain3_lhs = pi_residual;
  report.chain3_rhs = (1.0 + gamma) * tilde_gap + tilde_residual;
  report.passed = report.chain1_lhs <= report.chain1_rhs + kChainSlack &&
                  report.chain2_lhs <= report.chain2_rhs + kChainSlack &&
                  report.chain3_lhs <= report.chain3_rhs + kChainSlack;
  return report;
}

double regression_residual(const TabularPolicy& policy, const QTable& q,
                           double alpha, const Eigen::MatrixXd& weights) {
  check_alpha(alpha);
  if (q.values.rows() != policy.logits.rows() ||
      q.values.cols() != policy.logits.cols() ||
      weights.rows() != q.values.rows() || weights.cols() != q.values.cols()) {
    throw DimensionError("policy, Q table and weights must share a shape");
  }
  if ((weights.array() < 0.0).any()) {
    throw DomainError("weights must be nonnegative");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-9) {
    throw DomainError("weights must sum to 1");
  }
  const Eigen::MatrixXd error = q.values - alpha * policy.log_probabilities();
  double total = 0.0;
  for (Eigen::Index s = 0; s < error.rows(); ++s) {
    const double mass = weights.row(s).sum();
    if (mass <= 0.0) continue;
    const double offset = weights.row(s).dot(error.row(s)) / mass;
    total += (weights.row(s).array() *
              (error.row(s).array() - offset).square())
                 .sum();
  }
  return total;
}

}  // namespace pgql
