"""Contact-implicit optimization and hybrid LQR for clutched elastic robots.

Configurations are plain dicts with the same keys as the JSON files read by
the ``ceropt`` command-line tool. Missing keys keep their defaults.
"""

import json

import numpy as np

from . import _core
from ._core import ConfigError, FormatError

__all__ = [
    "ConfigError",
    "FormatError",
    "config_hash",
    "default_config",
    "mass_matrix",
    "optimize",
    "run_checks",
    "simulate",
    "switch_penalty",
    "track",
]


def _dump(config):
    return json.dumps(config or {})


def default_config():
    return json.loads(_core.default_config())


def config_hash(config=None):
    return _core.config_hash(_dump(config))


def optimize(config=None, guessed=False):
    """Free (or guessed-schedule) speed maximization; returns a dict."""
    result = _core.optimize(_dump(config), guessed)
    result["schedule"] = json.loads(result["schedule"])
    return result


def simulate(schedule, controls, dt, config=None):
    """Event-driven rollout of zero-order-hold controls under a schedule."""
    return _core.simulate(_dump(config), json.dumps(schedule), np.asarray(controls, float), dt)


def track(schedule, controls, dt, config=None):
    """Hybrid LQR against open loop from the perturbed initial state."""
    return _core.track(_dump(config), json.dumps(schedule), np.asarray(controls, float), dt)


def run_checks(config=None):
    return [dict(name=n, passed=p, detail=d) for n, p, d in _core.run_checks(_dump(config))]


def mass_matrix(q1, q2, config=None):
    return _core.mass_matrix(_dump(config), q1, q2)


def switch_penalty(zeta, alpha=500.0, beta=500.0):
    return _core.switch_penalty(np.asarray(zeta, float), alpha, beta)
