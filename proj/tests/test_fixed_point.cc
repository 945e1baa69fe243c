#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "fixtures.h"
#include "pgql/errors.h"
#include "pgql/fixed_point.h"

using namespace pgql;
using fixtures::one_state;
using fixtures::policy_of;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd row2(double a, double b) {
  Eigen::MatrixXd m(1, 2);
  m << a, b;
  return m;
}

// (1 - eta) sum_{k <= K} eta^k (T*)^k Q, plus the greedy actions seen along
// the way.
struct Series {
  Eigen::MatrixXd sum;
  bool stable_greedy = true;
};

Series truncated_series(const TabularMdp& mdp, const Eigen::MatrixXd& q,
                        double eta, int terms) {
  Series out;
  out.sum = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  Eigen::MatrixXd term = q;
  std::set<std::vector<int>> greedy;
  double weight = 1.0 - eta;
  for (int k = 0; k < terms; ++k) {
    out.sum += weight * term;
    std::vector<int> g(q.rows());
    for (int s = 0; s < q.rows(); ++s) {
      Eigen::Index best;
      term.row(s).maxCoeff(&best);
      g[s] = static_cast<int>(best);
    }
    greedy.insert(g);
    term = apply_bellman_star({term}, mdp).values;
    weight *= eta;
  }
  out.stable_greedy = greedy.size() == 1;
  return out;
}

}  // namespace

TEST_SUITE("fixed-point-lab") {

TEST_CASE("q_tilde of a uniform policy is V") {
  const QTable q = q_tilde_from_policy(TabularPolicy::uniform(3, 4),
                                       {Eigen::VectorXd::Ones(3)}, 0.37);
  CHECK(sup_norm(q.values - Eigen::MatrixXd::Ones(3, 4)) < 1e-15);
}

TEST_CASE("q_tilde hand example") {
  // pi = (sigma(-1), sigma(1)), alpha = 1, V = 1.
  const QTable q = q_tilde_from_policy(policy_of(row2(0, 1)),
                                       {Eigen::VectorXd::Ones(1)}, 1.0);
  const double p0 = sigmoid(-1.0), p1 = sigmoid(1.0);
  const double h = -(p0 * std::log(p0) + p1 * std::log(p1));
  CHECK(h == doctest::Approx(0.58220).epsilon(1e-5));
  CHECK(q.values(0, 0) == doctest::Approx(std::log(p0) + h + 1.0).epsilon(1e-14));
  CHECK(q.values(0, 0) == doctest::Approx(0.26894).epsilon(1e-5));
  CHECK(q.values(0, 1) == doctest::Approx(1.26894).epsilon(1e-5));
  CHECK_THROWS_AS(q_tilde_from_policy(policy_of(row2(0, 1)),
                                      {Eigen::VectorXd::Ones(1)}, 0.0),
                  DomainError);
}

TEST_CASE("q_tilde inverts softmax_policy") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const double alpha = std::pow(10.0, -2.0 + 3.0 * (trial % 7) / 6.0);
    const Eigen::MatrixXd q = fixtures::random_matrix(6, 4, rng, 3.0);
    const TabularPolicy pi = softmax_policy({q}, alpha);
    const Eigen::VectorXd v =
        (pi.probabilities().array() * q.array()).rowwise().sum();
    CHECK(sup_norm(q_tilde_from_policy(pi, {v}, alpha).values - q) <= 1e-10);
  }
}

TEST_CASE("regularized fixed point on the one-state MDP") {
  const FixedPointResult r = solve_regularized_fixed_point(one_state(), 0.1);
  const Eigen::MatrixXd p = r.policy.probabilities();
  CHECK(std::abs(p(0, 1) - sigmoid(10.0)) <= 1e-10);
  CHECK(p(0, 1) == doctest::Approx(0.9999546).epsilon(1e-7));
  CHECK(r.iterations > 0);
  CHECK(static_cast<int>(r.residual_history.size()) == r.iterations);
}

TEST_CASE("very high temperature gives a near-uniform policy") {
  const TabularMdp mdp = fixtures::garnet(3);
  const FixedPointResult r = solve_regularized_fixed_point(mdp, 1e6);
  CHECK(sup_norm(r.policy.probabilities() -
                 Eigen::MatrixXd::Constant(mdp.n_states, mdp.n_actions,
                                           1.0 / mdp.n_actions)) <= 1e-5);
}

TEST_CASE("regularized fixed point: policy is softmax of its own Q") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const TabularMdp mdp = fixtures::garnet(seed, 8, 4, 3, 0.9);
    for (double alpha : {1.0, 0.1, 0.01}) {
      const FixedPointResult r = solve_regularized_fixed_point(mdp, alpha);
      const Eigen::MatrixXd goal =
          softmax_policy(evaluate_policy(mdp, r.policy).q, alpha).probabilities();
      CHECK(sup_norm(r.policy.probabilities() - goal) <= 1e-10);
      CHECK(sup_norm(r.q_tilde.values - r.q_pi.values) <= 10 * 1e-10);
    }
  }
}

TEST_CASE("non-convergence carries the residual history") {
  FixedPointOptions options;
  options.max_iterations = 3;
  try {
    solve_regularized_fixed_point(fixtures::garnet(1), 0.01, options);
    FAIL("expected NotConvergedError");
  } catch (const NotConvergedError& e) {
    CHECK(e.residual_history().size() == 3);
  }
  options = {};
  options.damping = 0.0;
  CHECK_THROWS_AS(solve_regularized_fixed_point(one_state(), 0.1, options),
                  DomainError);
  CHECK_THROWS_AS(solve_regularized_fixed_point(one_state(), 0.0), DomainError);
}

TEST_CASE("bellman residual report") {
  const TabularMdp mdp = one_state();
  const FixedPointResult r = solve_regularized_fixed_point(mdp, 0.1);
  const BoundReport rep = bellman_residual_report(mdp, r, 0.1);
  // T*Q - Q = gamma (max Q - V) = 0.5 pi(a0) for this MDP.
  CHECK(rep.residual_max == doctest::Approx(0.5 * sigmoid(-10.0)).epsilon(1e-8));
  CHECK(rep.residual_max == doctest::Approx(2.27e-5).epsilon(1e-2));
  CHECK(rep.bound == doctest::Approx(2 * 0.1 * std::exp(-1.0)));
  CHECK(rep.passed);

  FixedPointResult star;
  star.q_pi = solve_q_star(mdp, 1e-12);
  const BoundReport zero = bellman_residual_report(mdp, star, 0.1);
  CHECK(std::abs(zero.residual_min) <= 1e-11);
  CHECK(std::abs(zero.residual_max) <= 1e-11);
  CHECK(zero.passed);

  FixedPointResult off = star;
  off.q_pi.values(0, 0) -= 1.0;  // T*Q - Q = 1 > bound
  CHECK_FALSE(bellman_residual_report(mdp, off, 0.1).passed);
}

TEST_CASE("residual shrinks and Q approaches Q* across temperature decades") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TabularMdp mdp = fixtures::garnet(seed, 10, 4, 3, 0.9);
    const Eigen::MatrixXd q_star = solve_q_star(mdp).values;
    double last_residual = INFINITY;
    double first_dist = 0.0, last_dist = 0.0;
    for (double alpha : {1.0, 0.1, 0.01, 0.001}) {
      const FixedPointResult r = solve_regularized_fixed_point(mdp, alpha);
      const BoundReport rep = bellman_residual_report(mdp, r, alpha);
      CHECK(rep.passed);
      CHECK(rep.residual_max <= last_residual);
      last_residual = rep.residual_max;
      const double dist = sup_norm(r.q_pi.values - q_star);
      if (alpha == 1.0) first_dist = dist;
      last_dist = dist;
    }
    CHECK(last_dist < first_dist);
  }
}

TEST_CASE("modified fixed point: degenerate weights") {
  const TabularMdp mdp = fixtures::garnet(4);
  const QTable q_pi = evaluate_policy(mdp, TabularPolicy::uniform(6, 3)).q;
  CHECK(solve_qtilde_modified(q_pi, 0.0, mdp).values == q_pi.values);
  CHECK(sup_norm(solve_qtilde_modified(q_pi, 1.0, mdp).values -
                 solve_q_star(mdp).values) <= 1e-10);
  CHECK_THROWS_AS(solve_qtilde_modified(q_pi, 1.5, mdp), DomainError);
}

TEST_CASE("modified fixed point: one-state hand solution") {
  const Eigen::MatrixXd x =
      solve_qtilde_modified({row2(0.5, 1.5)}, 0.5, one_state(), 1e-12).values;
  CHECK(std::abs(x(0, 0) - 2.0 / 3.0) <= 1e-9);
  CHECK(std::abs(x(0, 1) - 5.0 / 3.0) <= 1e-9);
}

TEST_CASE("modified fixed point: series form") {
  const double eta = 0.5;
  const int terms = 60;
  // One state: greedy action never changes, so the series is exact up to
  // the geometric tail.
  const Series one = truncated_series(one_state(), row2(0.5, 1.5), eta, terms);
  const double tail = std::pow(eta, terms) * 2.0 / (1.0 - eta);
  CHECK(one.stable_greedy);
  CHECK(std::abs(one.sum(0, 0) - 2.0 / 3.0) <= tail + 1e-12);
  CHECK(std::abs(one.sum(0, 1) - 5.0 / 3.0) <= tail + 1e-12);

  // In general the max makes T* convex rather than affine: the series can
  // only overshoot, and is exact whenever the greedy action is stable.
  int stable = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TabularMdp mdp = fixtures::garnet(seed, 10, 4, 3, 0.9);
    const QTable q_pi = solve_regularized_fixed_point(mdp, 0.1).q_pi;
    for (double e : {0.25, 0.5, 0.75}) {
      const Eigen::MatrixXd x = solve_qtilde_modified(q_pi, e, mdp, 1e-13).values;
      const Series s = truncated_series(mdp, q_pi.values, e, 200);
      CHECK((s.sum - x).minCoeff() >= -1e-10);
      if (s.stable_greedy) {
        ++stable;
        CHECK(sup_norm(s.sum - x) <= 1e-9);
      }
    }
  }
  CHECK(stable > 0);
}

TEST_CASE("pgql fixed point on the one-state MDP") {
  const TabularMdp mdp = one_state();
  const FixedPointResult r = solve_pgql_fixed_point(mdp, 0.1, 0.5);
  CHECK(std::abs(r.policy.probabilities()(0, 1) - sigmoid(10.0)) <= 1e-10);
  CHECK(r.q_tilde.values(0, 1) - r.q_tilde.values(0, 0) ==
        doctest::Approx(1.0).epsilon(1e-10));
  const BoundReport rep = verify_appendix_bounds(mdp, r, 0.1, 0.5, mdp.gamma);
  CHECK(rep.passed);
}

TEST_CASE("pgql fixed point with eta = 0 is the regularized one") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = fixtures::garnet(seed);
    const FixedPointResult a = solve_pgql_fixed_point(mdp, 0.1, 0.0);
    const FixedPointResult b = solve_regularized_fixed_point(mdp, 0.1);
    CHECK(sup_norm(a.policy.probabilities() - b.policy.probabilities()) <= 1e-10);
    const BoundReport rep = verify_appendix_bounds(mdp, a, 0.1, 0.0, mdp.gamma);
    CHECK(rep.chain1_lhs == 0.0);
    CHECK(rep.chain1_rhs == 0.0);
    CHECK(rep.passed);
  }
}

TEST_CASE("pgql fixed point satisfies the modified equation") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = fixtures::garnet(seed, 10, 4, 3, 0.9);
    for (double eta : {0.25, 0.5, 0.75, 1.0}) {
      const FixedPointResult r = solve_pgql_fixed_point(mdp, 0.1, eta);
      const Eigen::MatrixXd rhs =
          (1.0 - eta) * evaluate_policy(mdp, r.policy).q.values +
          eta * apply_bellman_star(r.q_tilde, mdp).values;
      CHECK(sup_norm(rhs - r.q_tilde.values) <= 10 * 1e-10);
      // The policy is Boltzmann in Q~.
      CHECK(sup_norm(r.policy.probabilities() -
                     softmax_policy(r.q_tilde, 0.1).probabilities()) <= 1e-10);
    }
  }
}

TEST_CASE("error chains on the Garnet sweep") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TabularMdp mdp = fixtures::garnet(seed, 10, 4, 3, 0.9);
    for (double alpha : {1.0, 0.1, 0.01}) {
      for (double eta : {0.25, 0.5, 0.75}) {
        const FixedPointResult r = solve_pgql_fixed_point(mdp, alpha, eta);
        const BoundReport rep = verify_appendix_bounds(mdp, r, alpha, eta, mdp.gamma);
        CHECK(rep.passed);
        CHECK(rep.chain1_lhs >= 0.0);
        CHECK(rep.chain2_lhs >= 0.0);
        CHECK(rep.chain3_lhs >= 0.0);
      }
    }
  }
}

TEST_CASE("error chains recomputed independently") {
  const TabularMdp mdp = fixtures::garnet(9, 10, 4, 3, 0.9);
  const double alpha = 0.1, eta = 0.5, g = mdp.gamma;
  const FixedPointResult r = solve_pgql_fixed_point(mdp, alpha, eta);
  const BoundReport rep = verify_appendix_bounds(mdp, r, alpha, eta, g);
  // Loop-level recomputation of every norm.
  const Eigen::MatrixXd pi = r.policy.probabilities();
  const Eigen::MatrixXd& qt = r.q_tilde.values;
  const Eigen::MatrixXd& qp = r.q_pi.values;
  double a = 0, b = 0, c = 0, d = 0;
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int act = 0; act < mdp.n_actions; ++act) {
      double star_t = 0, pi_t = 0, star_p = 0;
      for (int t = 0; t < mdp.n_states; ++t) {
        double vmax_t = -INFINITY, vpi_t = 0, vmax_p = -INFINITY;
        for (int k = 0; k < mdp.n_actions; ++k) {
          vmax_t = std::max(vmax_t, qt(t, k));
          vpi_t += pi(t, k) * qt(t, k);
          vmax_p = std::max(vmax_p, qp(t, k));
        }
        star_t += mdp.p(s, act, t) * vmax_t;
        pi_t += mdp.p(s, act, t) * vpi_t;
        star_p += mdp.p(s, act, t) * vmax_p;
      }
      const double r_sa = mdp.reward(s, act);
      a = std::max(a, std::abs(qt(s, act) - qp(s, act)));
      b = std::max(b, std::abs(g * (star_t - pi_t)));
      c = std::max(c, std::abs(r_sa + g * star_t - qt(s, act)));
      d = std::max(d, std::abs(r_sa + g * star_p - qp(s, act)));
    }
  }
  CHECK(rep.chain1_lhs == doctest::Approx(a).epsilon(1e-12));
  CHECK(rep.chain1_rhs == doctest::Approx(eta / (1 - eta * g) * b).epsilon(1e-12));
  CHECK(rep.chain2_lhs == doctest::Approx(c).epsilon(1e-12));
  CHECK(rep.chain2_rhs == doctest::Approx(3 / (1 - eta * g) * b).epsilon(1e-12));
  CHECK(rep.chain3_lhs == doctest::Approx(d).epsilon(1e-12));
  CHECK(rep.chain3_rhs == doctest::Approx((1 + g) * a + c).epsilon(1e-12));
  CHECK(a <= eta / (1 - eta * g) * b + kChainSlack);
  CHECK(c <= 3 / (1 - eta * g) * b + kChainSlack);
  CHECK(d <= (1 + g) * a + c + kChainSlack);
}

TEST_CASE("regression residual") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd uniform_w = Eigen::MatrixXd::Constant(6, 3, 1.0 / 18);
  const TabularPolicy pi = policy_of(fixtures::random_matrix(6, 3, rng));
  Eigen::MatrixXd q = 0.3 * pi.log_probabilities();
  for (int s = 0; s < 6; ++s) q.row(s).array() += 5.0 * s;
  CHECK(regression_residual(pi, {q}, 0.3, uniform_w) <= 1e-24);

  const TabularMdp mdp = fixtures::garnet(12);
  const double alpha = 0.1, tol = 1e-10;
  const FixedPointResult r = solve_regularized_fixed_point(mdp, alpha);
  const double at_fixed = regression_residual(r.policy, r.q_pi, alpha, uniform_w);
  CHECK(at_fixed <= tol * tol * 18);

  for (int trial = 0; trial < 20; ++trial) {
    TabularPolicy moved = r.policy;
    moved.logits += fixtures::random_matrix(6, 3, rng, 1e-3);
    CHECK(regression_residual(moved, r.q_pi, alpha, uniform_w) > at_fixed);
  }

  Eigen::MatrixXd bad = uniform_w;
  bad(0, 0) = -bad(0, 0);
  CHECK_THROWS_AS(regression_residual(pi, {q}, 0.3, bad), DomainError);
  CHECK_THROWS_AS(regression_residual(pi, {q}, 0.3, 2 * uniform_w), DomainError);
}

}  // TEST_SUITE
