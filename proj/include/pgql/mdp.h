#ifndef PGQL_MDP_H_
#define PGQL_MDP_H_

// Exact finite-MDP machinery: Bellman operators, dynamic-programming
// solvers, state distributions and the exact policy gradient.
//
// Tables are dense Eigen matrices indexed [state][action]. The transition
// tensor P[s][a][s'] is flattened to a (n_states * n_actions) x n_states
// matrix whose row s * n_actions + a holds P(. | s, a).

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace pgql {

struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  Eigen::MatrixXd transition;  // (n_states * n_actions) x n_states
  Eigen::MatrixXd reward;      // n_states x n_actions, expected reward
  double gamma = 0.9;
  std::vector<std::uint8_t> terminal;  // 1 marks an absorbing state
  Eigen::VectorXd initial_dist;

  static TabularMdp zeros(int n_states, int n_actions, double gamma);

  int row(int s, int a) const { return s * n_actions + a; }
  double p(int s, int a, int s_next) const {
    return transition(row(s, a), s_next);
  }
  bool is_terminal(int s) const { return terminal[s] != 0; }

  // Throws SpecError / DomainError when an invariant is broken: rows must be
  // stochastic to 1e-12, terminal states zero-reward self-loops, gamma in
  // (0, 1).
  void validate() const;

  // Transition matrix with the columns of terminal successors zeroed, i.e.
  // the kernel used for bootstrapping.
  Eigen::MatrixXd bootstrap_transition() const;
};

struct TabularPolicy {
  Eigen::MatrixXd logits;  // pi(s, .) = softmax(logits(s, .))
  double temperature = 1.0;

  static TabularPolicy uniform(int n_states, int n_actions);

  int n_states() const { return static_cast<int>(logits.rows()); }
  int n_actions() const { return static_cast<int>(logits.cols()); }
  Eigen::MatrixXd probabilities() const;
  // Computed with log-sum-exp; never log(probabilities()).
  Eigen::MatrixXd log_probabilities() const;
};

struct QTable {
  Eigen::MatrixXd values;
};

struct VTable {
  Eigen::VectorXd values;
};

struct PolicyStats {
  Eigen::VectorXd entropy;
  Eigen::MatrixXd advantage;
  Eigen::VectorXd value;
};

struct PolicyEvaluation {
  QTable q;
  VTable v;
};

enum class DistributionMode { kDiscountedUnnormalized, kUndiscountedVisit };

inline constexpr double kDefaultTolerance = 1e-10;

// Row-wise numerically stable softmax / log-softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);
Eigen::MatrixXd log_softmax_rows(const Eigen::MatrixXd& logits);
Eigen::VectorXd entropy_rows(const Eigen::MatrixXd& logits);

double sup_norm(const Eigen::MatrixXd& m);

QTable apply_bellman_pi(const QTable& q, const TabularPolicy& policy,
                        const TabularMdp& mdp);
QTable apply_bellman_star(const QTable& q, const TabularMdp& mdp);

// Value iteration from zero until ||T*Q - Q||_inf <= tol.
QTable solve_q_star(const TabularMdp& mdp, double tol = kDefaultTolerance);

// Direct solve of (I - gamma P^pi) V = r^pi for n_states <= 2000, T^pi
// iteration otherwise (or when the direct solution misses tol).
PolicyEvaluation evaluate_policy(const TabularMdp& mdp,
                                 const TabularPolicy& policy,
                                 double tol = kDefaultTolerance);

// State-to-state kernel P^pi(s, s') = sum_a pi(s, a) P(s' | s, a).
Eigen::MatrixXd state_transition(const TabularMdp& mdp,
                                 const Eigen::MatrixXd& probs);

Eigen::VectorXd state_distribution(const TabularMdp& mdp,
                                   const TabularPolicy& policy,
                                   DistributionMode mode);

double policy_performance(const TabularMdp& mdp, const TabularPolicy& policy);

TabularPolicy softmax_policy(const QTable& q, double alpha);

PolicyStats policy_stats(const TabularPolicy& policy, const QTable& q);

// Gradient of J (plus alpha-weighted entropy) with respect to the policy
// logits. Terminal states carry no gradient.
Eigen::MatrixXd exact_policy_gradient(const TabularMdp& mdp,
                                      const TabularPolicy& policy,
                                      double alpha, DistributionMode mode);

}  // namespace pgql

#endif  // PGQL_MDP_H_
