#include "pgql/mdp.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "pgql/errors.h"

namespace pgql {
namespace {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr int kDirectSolveLimit = 2000;
constexpr long kValueIterationCap = 10'000'000;
constexpr long kVisitIterationCap = 1'000'000;

void check_table(const Eigen::MatrixXd& table, const TabularMdp& mdp,
                 const char* what) {
  if (table.rows() != mdp.n_states || table.cols() != mdp.n_actions) {
    throw DimensionError(std::string(what) + " is " +
                         std::to_string(table.rows()) + "x" +
                         std::to_string(table.cols()) + ", MDP is " +
                         std::to_string(mdp.n_states) + "x" +
                         std::to_string(mdp.n_actions));
  }
}

Eigen::VectorXd continuation_mask(const TabularMdp& mdp) {
  Eigen::VectorXd mask(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) mask(s) = mdp.is_terminal(s) ? 0 : 1;
  return mask;
}

// R + gamma * sum_s' P(s'|s,a) * next_value(s'), with terminal successors
// contributing nothing.
Eigen::MatrixXd backup(const TabularMdp& mdp,
                       const Eigen::VectorXd& next_value) {
  const Eigen::VectorXd masked =
      next_value.cwiseProduct(continuation_mask(mdp));
  const Eigen::VectorXd flat = mdp.transition * masked;
  Eigen::MatrixXd out = Eigen::Map<const RowMajorMatrix>(
      flat.data(), mdp.n_states, mdp.n_actions);
  return mdp.reward + mdp.gamma * out;
}

}  // namespace

TabularMdp TabularMdp::zeros(int n_states, int n_actions, double gamma) {
  if (n_states <= 0 || n_actions <= 0) {
    throw SpecError("n_states and n_actions must be positive");
  }
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.transition = Eigen::MatrixXd::Zero(n_states * n_actions, n_states);
  mdp.reward = Eigen::MatrixXd::Zero(n_states, n_actions);
  mdp.gamma = gamma;
  mdp.terminal.assign(n_states, 0);
  mdp.initial_dist = Eigen::VectorXd::Zero(n_states);
  return mdp;
}

void TabularMdp::validate() const {
  if (n_states <= 0 || n_actions <= 0) {
    throw SpecError("n_states and n_actions must be positive");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw DomainError("gamma must lie strictly inside (0, 1), got " +
                      std::to_string(gamma));
  }
  if (transition.rows() != n_states * n_actions ||
      transition.cols() != n_states) {
    throw DimensionError("transition must be (n_states*n_actions) x n_states");
  }
  if (reward.rows() != n_states || reward.cols() != n_actions) {
    throw DimensionError("reward must be n_states x n_actions");
  }
  if (static_cast<int>(terminal.size()) != n_states ||
      initial_dist.size() != n_states) {
    throw DimensionError("terminal mask and initial_dist need n_states entries");
  }
  if (!reward.allFinite()) throw SpecError("reward table has non-finite values");
  for (int r = 0; r < transition.rows(); ++r) {
    if ((transition.row(r).array() < 0.0).any() ||
        std::abs(transition.row(r).sum() - 1.0) > 1e-12) {
      throw SpecError("transition row for (s=" + std::to_string(r / n_actions) +
                      ", a=" + std::to_string(r % n_actions) +
                      ") is not a probability vector");
    }
  }
  if ((initial_dist.array() < 0.0).any() ||
      std::abs(initial_dist.sum() - 1.0) > 1e-12) {
    throw SpecError("initial_dist is not a probability vector");
  }
  for (int s = 0; s < n_states; ++s) {
    if (!is_terminal(s)) continue;
    for (int a = 0; a < n_actions; ++a) {
      if (p(s, a, s) != 1.0 || reward(s, a) != 0.0) {
        throw SpecError("terminal state " + std::to_string(s) +
                        " must be a zero-reward self-loop");
      }
    }
  }
}

Eigen::MatrixXd TabularMdp::bootstrap_transition() const {
  Eigen::MatrixXd out = transition;
  for (int s = 0; s < n_states; ++s) {
    if (is_terminal(s)) out.col(s).setZero();
  }
  return out;
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  return TabularPolicy{Eigen::MatrixXd::Zero(n_states, n_actions), 1.0};
}

Eigen::MatrixXd TabularPolicy::probabilities() const {
  return softmax_rows(logits);
}

Eigen::MatrixXd TabularPolicy::log_probabilities() const {
  return log_softmax_rows(logits);
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index s = 0; s < logits.rows(); ++s) {
    const double top = logits.row(s).maxCoeff();
    out.row(s) = (logits.row(s).array() - top).exp().matrix();
    out.row(s) /= out.row(s).sum();
  }
  return out;
}

Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index s = 0; s < logits.rows(); ++s) {
    const double top = logits.row(s).maxCoeff();
    const double lse =
        top + std::log((logits.row(s).array() - top).exp().sum());
    out.row(s) = logits.row(s).array() - lse;
  }
  return out;
}

Eigen::VectorXd entropy_rows(const Eigen::MatrixXd& logits) {
  const Eigen::MatrixXd probs = softmax_rows(logits);
  const Eigen::MatrixXd logp = log_softmax_rows(logits);
  return -(probs.array() * logp.array()).rowwise().sum().matrix();
}

double sup_norm(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

QTable apply_bellman_pi(const QTable& q, const TabularPolicy& policy,
                        const TabularMdp& mdp) {
  check_table(q.values, mdp, "Q table");
  check_table(policy.logits, mdp, "policy");
  const Eigen::VectorXd v =
      (policy.probabilities().array() * q.values.array()).rowwise().sum();
  return QTable{backup(mdp, v)};
}

QTable apply_bellman_star(const QTable& q, const TabularMdp& mdp) {
  check_table(q.values, mdp, "Q table");
  const Eigen::VectorXd v = q.values.rowwise().maxCoeff();
  return QTable{backup(mdp, v)};
}

QTable solve_q_star(const TabularMdp& mdp, double tol) {
  if (!(tol > 0.0)) throw DomainError("tol must be positive");
  QTable q{Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions)};
  for (long it = 0; it < kValueIterationCap; ++it) {
    QTable next = apply_bellman_star(q, mdp);
    const double change = sup_norm(next.values - q.values);
    if (!std::isfinite(change)) throw Error("value iteration diverged");
    if (change <= tol) return q;
    q = std::move(next);
  }
  throw Error("value iteration hit its iteration cap");
}

Eigen::MatrixXd state_transition(const TabularMdp& mdp,
                                 const Eigen::MatrixXd& probs) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      out.row(s) += probs(s, a) * mdp.transition.row(mdp.row(s, a));
    }
  }
  return out;
}

PolicyEvaluation evaluate_policy(const TabularMdp& mdp,
                                 const TabularPolicy& policy, double tol) {
  if (!(tol > 0.0)) throw DomainError("tol must be positive");
  check_table(policy.logits, mdp, "policy");
  const Eigen::MatrixXd probs = policy.probabilities();

  QTable q{Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions)};
  if (mdp.n_states <= kDirectSolveLimit) {
    Eigen::MatrixXd p_pi = state_transition(mdp, probs);
    for (int s = 0; s < mdp.n_states; ++s) {
      if (mdp.is_terminal(s)) p_pi.col(s).setZero();
    }
    const Eigen::VectorXd r_pi =
        (probs.array() * mdp.reward.array()).rowwise().sum();
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states) -
        mdp.gamma * p_pi;
    const Eigen::VectorXd v = system.partialPivLu().solve(r_pi);
    q.values = backup(mdp, v);
  }
  // Polish (or, for large MDPs, solve) by iterating T^pi.
  for (long it = 0; it < kValueIterationCap; ++it) {
    QTable next = apply_bellman_pi(q, policy, mdp);
    const double change = sup_norm(next.values - q.values);
    if (!std::isfinite(change)) throw Error("policy evaluation diverged");
    if (change <= tol) break;
    q = std::move(next);
  }
  VTable v{(probs.array() * q.values.array()).rowwise().sum()};
  return PolicyEvaluation{std::move(q), std::move(v)};
}

Eigen::VectorXd state_distribution(const TabularMdp& mdp,
                                   const TabularPolicy& policy,
                                   DistributionMode mode) {
  check_table(policy.logits, mdp, "policy");
  const Eigen::MatrixXd p_pi = state_transition(mdp, policy.probabilities());
  const int n = mdp.n_states;

  if (mode == DistributionMode::kDiscountedUnnormalized) {
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(n, n) - mdp.gamma * p_pi.transpose();
    return system.partialPivLu().solve(mdp.initial_dist);
  }

  // Expected visit counts of an absorbing chain. Every state reachable from
  // the start must be able to reach a terminal state.
  std::vector<char> reachable(n, 0);
  std::deque<int> frontier;
  for (int s = 0; s < n; ++s) {
    if (mdp.initial_dist(s) > 0.0) {
      reachable[s] = 1;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const int s = frontier.front();
    frontier.pop_front();
    if (mdp.is_terminal(s)) continue;
    for (int t = 0; t < n; ++t) {
      if (p_pi(s, t) > 0.0 && !reachable[t]) {
        reachable[t] = 1;
        frontier.push_back(t);
      }
    }
  }
  std::vector<char> absorbs(n, 0);
  for (int s = 0; s < n; ++s) {
    if (mdp.is_terminal(s)) {
      absorbs[s] = 1;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const int t = frontier.front();
    frontier.pop_front();
    for (int s = 0; s < n; ++s) {
      if (!absorbs[s] && !mdp.is_terminal(s) && p_pi(s, t) > 0.0) {
        absorbs[s] = 1;
        frontier.push_back(s);
      }
    }
  }
  std::vector<int> live;
  for (int s = 0; s < n; ++s) {
    if (!reachable[s] || mdp.is_terminal(s)) continue;
    if (!absorbs[s]) {
      throw NonEpisodicError("state " + std::to_string(s) +
                             " is reachable but never reaches a terminal");
    }
    live.push_back(s);
  }

  const int m = static_cast<int>(live.size());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(m);
  if (m > 0) {
    Eigen::MatrixXd inner(m, m);
    Eigen::VectorXd start(m);
    for (int i = 0; i < m; ++i) {
      start(i) = mdp.initial_dist(live[i]);
      for (int j = 0; j < m; ++j) inner(i, j) = p_pi(live[j], live[i]);
    }
    counts = (Eigen::MatrixXd::Identity(m, m) - inner).partialPivLu().solve(
        start);
    if (!counts.allFinite()) {
      // Near-singular system: fall back to summing the visit series.
      counts = start;
      Eigen::VectorXd term = start;
      long it = 0;
      for (; it < kVisitIterationCap && term.lpNorm<1>() > 1e-15; ++it) {
        term = inner * term;
        counts += term;
      }
      if (it == kVisitIterationCap) {
        throw NonEpisodicError("visit series did not converge");
      }
    }
  }

  Eigen::VectorXd visits = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i) visits(live[i]) = counts(i);
  for (int t = 0; t < n; ++t) {
    if (!mdp.is_terminal(t)) continue;
    double inflow = mdp.initial_dist(t);
    for (int i = 0; i < m; ++i) inflow += p_pi(live[i], t) * counts(i);
    visits(t) = inflow;
  }
  return visits / visits.sum();
}

double policy_performance(const TabularMdp& mdp, const TabularPolicy& policy) {
  const PolicyEvaluation eval = evaluate_policy(mdp, policy);
  return mdp.initial_dist.dot(eval.v.values);
}

TabularPolicy softmax_policy(const QTable& q, double alpha) {
  if (!(alpha > 0.0)) {
    throw DomainError("softmax temperature must be positive, got " +
                      std::to_string(alpha));
  }
  return TabularPolicy{q.values / alpha, alpha};
}

PolicyStats policy_stats(const TabularPolicy& policy, const QTable& q) {
  if (policy.logits.rows() != q.values.rows() ||
      policy.logits.cols() != q.values.cols()) {
    throw DimensionError("policy and Q table shapes differ");
  }
  const Eigen::MatrixXd probs = policy.probabilities();
  PolicyStats stats;
  stats.entropy = entropy_rows(policy.logits);
  stats.value = (probs.array() * q.values.array()).rowwise().sum();
  stats.advantage = q.values.colwise() - stats.value;
  return stats;
}

Eigen::MatrixXd exact_policy_gradient(const TabularMdp& mdp,
                                      const TabularPolicy& policy,
                                      double alpha, DistributionMode mode) {
  if (alpha < 0.0) throw DomainError("alpha must be nonnegative");
  const Eigen::VectorXd weight = state_distribution(mdp, policy, mode);
  const PolicyEvaluation eval = evaluate_policy(mdp, policy);
  const Eigen::MatrixXd probs = policy.probabilities();
  const Eigen::MatrixXd logp = policy.log_probabilities();
  const Eigen::VectorXd entropy = entropy_rows(policy.logits);

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.is_terminal(s)) continue;
    for (int b = 0; b < mdp.n_actions; ++b) {
      const double advantage = eval.q.values(s, b) - eval.v.values(s);
      // dH/dW(s,b) = -pi(b) (log pi(b) + H(s))
      const double entropy_grad = -probs(s, b) * (logp(s, b) + entropy(s));
      grad(s, b) =
          weight(s) * (probs(s, b) * advantage + alpha * entropy_grad);
    }
  }
  return grad;
}

}  // namespace pgql
