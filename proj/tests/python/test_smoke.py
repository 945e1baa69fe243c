import math

import numpy as np
import pytest

import pgql


def one_state():
    mdp = pgql.TabularMdp(1, 2, 0.5)
    mdp.transition = np.ones((2, 1))
    mdp.reward = np.array([[0.0, 1.0]])
    mdp.initial_dist = np.array([1.0])
    return mdp


def test_one_state_fixed_point():
    mdp = one_state()
    q_star = pgql.solve_q_star(mdp)
    np.testing.assert_allclose(q_star, [[1.0, 2.0]], atol=1e-9)
    r = pgql.solve_regularized_fixed_point(mdp, 0.1)
    p = pgql.softmax_rows(r["logits"])[0, 1]
    assert p == pytest.approx(1.0 / (1.0 + math.exp(-10.0)), abs=1e-8)


def test_operators_on_garnet():
    mdp = pgql.garnet(6, 3, 3, 0.9, 1)
    q = np.random.default_rng(0).normal(size=(6, 3))
    tq = pgql.apply_bellman_star(mdp, q)
    expected = mdp.reward + 0.9 * (mdp.transition @ q.max(axis=1)).reshape(6, 3)
    np.testing.assert_allclose(tq, expected, atol=1e-12)
    logits = np.zeros((6, 3))
    q_pi, v = pgql.evaluate_policy(mdp, logits)
    np.testing.assert_allclose(pgql.apply_bellman_pi(mdp, q_pi, logits), q_pi, atol=1e-9)
    np.testing.assert_allclose(v, q_pi.mean(axis=1), atol=1e-12)
    assert pgql.policy_performance(mdp, logits) == pytest.approx(mdp.initial_dist @ v, rel=1e-12)
    d = pgql.state_distribution(mdp, logits)
    assert d.sum() == pytest.approx(1.0 / (1.0 - 0.9), rel=1e-9)


def test_roundtrip_and_gradient():
    q = np.random.default_rng(1).normal(size=(4, 3))
    logits = pgql.softmax_policy(q, 0.3)
    pi = pgql.softmax_rows(logits)
    v = (pi * q).sum(axis=1)
    np.testing.assert_allclose(pgql.q_tilde_from_policy(logits, v, 0.3), q, atol=1e-10)

    mdp = pgql.garnet(5, 2, 2, 0.9, 3)
    theta = np.random.default_rng(2).normal(size=(5, 2))
    g = pgql.exact_policy_gradient(mdp, theta)
    h = 1e-6
    e = np.zeros_like(theta)
    e[2, 1] = h
    fd = (pgql.policy_performance(mdp, theta + e) - pgql.policy_performance(mdp, theta - e)) / (2 * h)
    assert g[2, 1] == pytest.approx(fd, rel=1e-5)


def test_pgql_fixed_point_certificate():
    mdp = pgql.garnet(8, 3, 3, 0.9, 4)
    r = pgql.solve_pgql_fixed_point(mdp, 0.1, 0.5)
    rhs = 0.5 * r["q_pi"] + 0.5 * pgql.apply_bellman_star(mdp, r["q_tilde"])
    np.testing.assert_allclose(r["q_tilde"], rhs, atol=1e-8)
    rep = pgql.verify_appendix_bounds(mdp, r["logits"], r["q_tilde"], 0.1, 0.5)
    assert rep["passed"]
    np.testing.assert_allclose(
        pgql.solve_qtilde_modified(one_state(), np.array([[0.5, 1.5]]), 0.5),
        [[2.0 / 3.0, 5.0 / 3.0]], atol=1e-9)


def test_equivalence():
    assert pgql.equivalence_check(0) <= 1e-12
    assert pgql.equivalence_check(0, freeze_mu=True) > 1e-6


def test_grid_world_and_runs():
    mdp = pgql.gridworld()
    assert mdp.n_states == 24 and mdp.n_actions == 4
    traces = pgql.run_experiment({"agent": "pgql", "steps": "2000", "seeds": "0"})
    assert len(traces) == 1
    t = traces[0]
    assert t["j_star"] == pytest.approx(0.95 ** 7, rel=1e-9)
    assert len(t["step"]) == len(t["j_true"]) > 1
    traces = pgql.run_async({"agent": "pgql", "steps": "2000", "seeds": "0", "workers": "2"})
    assert traces[0]["agent"] == "pgql"


def test_errors():
    with pytest.raises(pgql.ConfigError):
        pgql.run_experiment({"alpha": "-1"})
    with pytest.raises(pgql.Error):
        pgql.apply_bellman_star(one_state(), np.zeros((2, 2)))
