#ifndef PGQL_TESTS_FIXTURES_H_
#define PGQL_TESTS_FIXTURES_H_

#include <random>

#include "pgql/envs.h"
#include "pgql/mdp.h"

namespace fixtures {

// One non-terminal state, two actions: a0 pays 0, a1 pays 1, both loop back.
inline pgql::TabularMdp one_state(double gamma = 0.5) {
  pgql::TabularMdp mdp = pgql::TabularMdp::zeros(1, 2, gamma);
  mdp.transition(0, 0) = 1.0;
  mdp.transition(1, 0) = 1.0;
  mdp.reward(0, 1) = 1.0;
  mdp.initial_dist(0) = 1.0;
  return mdp;
}

inline pgql::TabularPolicy policy_of(Eigen::MatrixXd logits) {
  pgql::TabularPolicy p;
  p.logits = std::move(logits);
  return p;
}

inline Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng,
                                     double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline pgql::TabularMdp garnet(std::uint64_t seed, int n_states = 6,
                               int n_actions = 3, int branching = 3,
                               double gamma = 0.9) {
  return pgql::garnet_generate({n_states, n_actions, branching, gamma, seed});
}

}  // namespace fixtures

#endif  // PGQL_TESTS_FIXTURES_H_
