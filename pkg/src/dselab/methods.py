"""Uniform entry point over the four distributed estimators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .consensus import DEFAULT_OMEGA_X, admm_run, decomposition_run
from .governor import GovernorConfig, Mode, SolverTrace
from .linear_iter import GossipConfig, choose_tau, gossip_run, split_gain, splitting_run
from .network import AreaView, MeasurementModel
from .wls import build_gain

METHODS = ("splitting", "gossip", "decomposition", "admm")

DEFAULT_MAX_ITER = {
    "splitting": 100_000,
    "gossip": 100_000,
    "decomposition": 1_000,
    "admm": 5_000,
}


@dataclass(frozen=True)
class MethodParams:
    alpha: float = 1.0
    tau_fraction: float = 0.5
    shared_only: bool = False
    omega_x: float = DEFAULT_OMEGA_X
    schedule: str = "jacobi"
    c: float = 1.0


def governor_for(
    method: str,
    epsilon: float = 1e-6,
    mode: Mode | str = Mode.WOCC,
    tdelay: float = 0.5,
    max_iter: int | None = None,
) -> GovernorConfig:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return GovernorConfig(epsilon, Mode(mode), max_iter or DEFAULT_MAX_ITER[method], tdelay)


def run_method(
    method: str,
    model: MeasurementModel,
    views: Sequence[AreaView],
    z: np.ndarray,
    config: GovernorConfig,
    params: MethodParams = MethodParams(),
    seed: int = 0,
    history_every: int = 0,
) -> SolverTrace:
    """Run one distributed estimator from the all-zero start."""
    if method in ("splitting", "gossip"):
        gain = build_gain(model, z)
        if method == "splitting":
            split = split_gain(gain, params.alpha)
            return splitting_run(split, config=config, views=views, history_every=history_every)
        gossip = GossipConfig(choose_tau(gain, params.tau_fraction), seed, shared_only=params.shared_only)
        return gossip_run(gain, views, gossip, config, history_every=history_every)
    if method == "decomposition":
        return decomposition_run(views, model, z, params.omega_x, config, params.schedule, history_every)
    if method == "admm":
        return admm_run(views, model, z, params.c, config, history_every)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
