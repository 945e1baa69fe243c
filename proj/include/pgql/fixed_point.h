#ifndef PGQL_FIXED_POINT_H_
#define PGQL_FIXED_POINT_H_

// Solvers and numerical certificates for the fixed points of entropy
// regularized policy gradient and of the combined policy-gradient /
// Q-learning update.

#include <vector>

#include "pgql/mdp.h"

namespace pgql {

struct FixedPointResult {
  TabularPolicy policy;
  QTable q_pi;     // exact Q of `policy`
  QTable q_tilde;  // Q-values read off the policy
  int iterations = 0;
  std::vector<double> residual_history;  // sup-norm policy change per step
};

struct BoundReport {
  double alpha = 0.0;
  double eta = 0.0;
  // Elementwise range of T*Q^pi - Q^pi and the |A| alpha / e ceiling.
  double residual_min = 0.0;
  double residual_max = 0.0;
  double bound = 0.0;
  // ||Q~ - Q^pi|| <= eta / (1 - eta gamma) ||T*Q~ - T^pi Q~||
  double chain1_lhs = 0.0;
  double chain1_rhs = 0.0;
  // ||T*Q~ - Q~|| <= 3 / (1 - eta gamma) ||T*Q~ - T^pi Q~||
  double chain2_lhs = 0.0;
  double chain2_rhs = 0.0;
  // ||T*Q^pi - Q^pi|| <= (1 + gamma) ||Q~ - Q^pi|| + ||T*Q~ - Q~||
  double chain3_lhs = 0.0;
  double chain3_rhs = 0.0;
  bool passed = false;
};

struct FixedPointOptions {
  double tol = kDefaultTolerance;
  double damping = 0.1;
  int max_iterations = 100'000;
};

// Q~(s, a) = alpha (log pi(s, a) + H(s)) + V(s).
QTable q_tilde_from_policy(const TabularPolicy& policy, const VTable& v,
                           double alpha);

// Damped logit iteration L <- (1 - tau) L + tau Q^pi / alpha until
// both ||pi - softmax(Q^pi / alpha)||_inf and
// alpha ||log pi - log softmax(Q^pi / alpha)||_inf are <= tol.
FixedPointResult solve_regularized_fixed_point(
    const TabularMdp& mdp, double alpha,
    const FixedPointOptions& options = {});

BoundReport bellman_residual_report(const TabularMdp& mdp,
                                    const FixedPointResult& result,
                                    double alpha,
                                    double tol = kDefaultTolerance);

// Solves Q~ = (1 - eta) Q^pi + eta T* Q~.
QTable solve_qtilde_modified(const QTable& q_pi, double eta,
                             const TabularMdp& mdp,
                             double tol = kDefaultTolerance);

FixedPointResult solve_pgql_fixed_point(const TabularMdp& mdp, double alpha,
                                        double eta,
                                        const FixedPointOptions& options = {});

inline constexpr double kChainSlack = 1e-8;

BoundReport verify_appendix_bounds(const TabularMdp& mdp,
                                   const FixedPointResult& result,
                                   double alpha, double eta, double gamma);

// Weighted least-squares fit of alpha log pi onto q with a free constant per
// state; zero exactly at the regularized fixed points when q = Q^pi.
double regression_residual(const TabularPolicy& policy, const QTable& q,
                           double alpha, const Eigen::MatrixXd& weights);

}  // namespace pgql

#endif  // PGQL_FIXED_POINT_H_
