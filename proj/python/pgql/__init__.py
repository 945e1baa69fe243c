"""Tabular policy-gradient / Q-learning lab.

Matrices are numpy arrays: Q and logits are (n_states, n_actions), V is
(n_states,), and the transition table has one row per (state, action) pair
in row-major order.
"""

from ._pgql import *  # noqa: F401,F403
from ._pgql import Error, ConfigError

__all__ = [name for name in dir() if not name.startswith("_")]
