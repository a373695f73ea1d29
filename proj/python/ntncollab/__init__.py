"""Python access to the ntn simulator.

Configurations are plain dicts in the JSON schema used by ``ntnsim``;
``config()`` validates one and fills in defaults.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    InvalidArgument,
    InvalidState,
    IoError,
    NumericalError,
    greedy_alloc,
    moving_average,
    rate,
    steering,
    weighted_utility,
)

SCHEMES = ("bfs-greedy", "pbu-greedy", "bfs-mab", "pbu-mab", "proposed", "independent", "single-estimation")


def config(overrides=None):
    """Complete, validated experiment configuration as a dict."""
    return json.loads(_core._normalize_config(json.dumps(overrides or {})))


def desk_config(**top_level):
    """The reduced desk-scale configuration (12 RBs, 3 groups, T = 10, 60 slots)."""
    cfg = {"env": json.loads(_core._desk_env_config())}
    cfg.update(top_level)
    return config(cfg)


def run_scheme(scheme, cfg=None, seed=1, episodes=1, train_episodes=0):
    """Metrics of one scheme on one seed."""
    return _core._run_scheme(scheme, json.dumps(config(cfg)), seed, episodes, train_episodes)


def run_experiment(cfg):
    """Full comparison sweep; writes the artifact bundle and returns the file paths."""
    return _core._run_experiment(json.dumps(config(cfg)))


class Environment:
    """Two-time-scale environment: ``step_high`` once per cycle, then ``step_low`` for each slot."""

    def __init__(self, env=None):
        self._env = _core._Environment(json.dumps(config({"env": env or {}})["env"]))

    def __getattr__(self, name):
        return getattr(self._env, name)


__all__ = [
    "SCHEMES",
    "ConfigError",
    "Environment",
    "InvalidArgument",
    "InvalidState",
    "IoError",
    "NumericalError",
    "config",
    "desk_config",
    "greedy_alloc",
    "moving_average",
    "rate",
    "run_experiment",
    "run_scheme",
    "steering",
    "weighted_utility",
]
