"""Stopping rule with per-state freezing, communication accounting and run metrics.

Every distributed solver tracks a flat vector of "entries": one value per
(area, state) pair that some area computes.  The governor watches the change
of each entry between iterations.  In WOCC mode it only decides when to stop.
In WCC mode an entry whose change drops below epsilon is frozen for good: its
value is pinned to the previous iterate and it is no longer transmitted.
"""

from __future__ import annotations

import csv
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DivergenceError
from .network import AreaView

DIVERGENCE_LIMIT = 1e12


class Mode(str, Enum):
    WOCC = "WOCC"
    WCC = "WCC"


@dataclass(frozen=True)
class GovernorConfig:
    epsilon: float = 1e-6
    mode: Mode = Mode.WOCC
    max_iter: int = 100_000
    tdelay: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.tdelay < 0:
            raise ValueError("tdelay must be non-negative")

    def with_(self, **changes) -> "GovernorConfig":
        return replace(self, **changes)


@dataclass
class FreezeMask:
    frozen: np.ndarray
    frozen_at: np.ndarray
    owners: np.ndarray

    @classmethod
    def active(cls, n: int, owners: Sequence[int] | None = None) -> "FreezeMask":
        own = np.zeros(n, dtype=int) if owners is None else np.asarray(owners, dtype=int)
        return cls(np.zeros(n, dtype=bool), np.full(n, -1), own)

    def copy(self) -> "FreezeMask":
        return FreezeMask(self.frozen.copy(), self.frozen_at.copy(), self.owners.copy())

    def per_area(self) -> dict[int, np.ndarray]:
        return {int(k): self.frozen[self.owners == k] for k in np.unique(self.owners)}


def _assess(delta, frozen, last_delta, active, config):
    """Return (newly frozen, stop).  ``last_delta`` is updated in place."""
    last_delta[active] = delta[active]
    live = ~frozen
    newly = np.zeros_like(frozen)
    if config.mode is Mode.WCC:
        newly = active & live & (delta < config.epsilon)
    watched = last_delta[live]
    stop = watched.size == 0 or float(watched.max()) <= config.epsilon
    return newly, stop


def _check_finite(curr):
    if not np.all(np.isfinite(curr)):
        raise DivergenceError("non-finite value in iterate")


def governor_step(
    prev: np.ndarray,
    curr: np.ndarray,
    mask: FreezeMask,
    config: GovernorConfig,
    iteration: int = 1,
) -> tuple[FreezeMask, bool]:
    """Single synchronous application of the stopping/freezing rule.

    Pure: returns a new mask and leaves ``curr`` untouched.  Solvers use
    :class:`Governor`, which also pins frozen values and keeps the books.
    """
    prev = np.asarray(prev, dtype=float)
    curr = np.asarray(curr, dtype=float)
    if prev.shape != curr.shape or curr.shape != mask.frozen.shape:
        raise ValueError("prev, curr and mask must have matching shapes")
    _check_finite(prev)
    _check_finite(curr)
    delta = np.abs(curr - prev)
    delta[mask.frozen] = 0.0
    last = np.full(delta.shape, np.inf)
    newly, stop = _assess(delta, mask.frozen, last, np.ones_like(mask.frozen), config)
    out = mask.copy()
    out.frozen |= newly
    out.frozen_at[newly] = iteration
    return out, stop


@dataclass
class SolverTrace:
    method: str
    mode: Mode
    x: np.ndarray
    iterations: int
    converged: bool
    max_delta: np.ndarray
    frozen_count: np.ndarray
    floats_sent: np.ndarray
    cumulative_cb: np.ndarray
    cb_seconds: float
    parallel_seconds: float
    mask: FreezeMask
    history: list[np.ndarray] = field(default_factory=list, repr=False)
    extra: dict = field(default_factory=dict)

    @property
    def total_floats(self) -> int:
        return int(self.floats_sent.sum())

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "max_delta", "frozen_count", "floats_sent", "cumulative_cb_seconds"])
            for t in range(self.iterations):
                w.writerow([
                    t + 1,
                    f"{self.max_delta[t]:.6e}",
                    int(self.frozen_count[t]),
                    int(self.floats_sent[t]),
                    f"{self.cumulative_cb[t]:.6f}",
                ])


class Governor:
    """Stateful driver used inside solver loops.

    ``receivers[e]`` is how many floats transmitting entry ``e`` costs (one per
    receiving neighbour).  ``step`` pins frozen entries of ``curr`` in place.
    """

    def __init__(
        self,
        config: GovernorConfig,
        n_entries: int,
        receivers: Sequence[int] | None = None,
        owners: Sequence[int] | None = None,
        history_every: int = 0,
    ):
        self.config = config
        self.mask = FreezeMask.active(n_entries, owners)
        self.receivers = np.ones(n_entries, dtype=int) if receivers is None else np.asarray(receivers, dtype=int)
        self.last_delta = np.full(n_entries, np.inf)
        self.iteration = 0
        self.stopped = False
        self.history_every = history_every
        self.history: list[np.ndarray] = []
        self._max_delta: list[float] = []
        self._frozen: list[int] = []
        self._floats: list[int] = []
        self._cb: list[float] = []
        self._area_times: list[float] = []
        self.cb = 0.0
        self.parallel = 0.0

    @property
    def done(self) -> bool:
        return self.stopped or self.iteration >= self.config.max_iter

    @contextmanager
    def clock(self):
        """Time one area's local computation for the current iteration."""
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self._area_times.append(time.perf_counter() - t0)

    def step(self, prev: np.ndarray, curr: np.ndarray, active: np.ndarray | None = None) -> bool:
        self.iteration += 1
        frozen = self.mask.frozen
        curr[frozen] = prev[frozen]
        _check_finite(curr)
        if np.abs(curr).max(initial=0.0) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"iterate exceeded {DIVERGENCE_LIMIT:g} at iteration {self.iteration}")
        if active is None:
            active = np.ones(frozen.shape, dtype=bool)
        delta = np.abs(curr - prev)
        newly, stop = _assess(delta, frozen, self.last_delta, active, self.config)
        if newly.any():
            curr[newly] = prev[newly]
            frozen |= newly
            self.mask.frozen_at[newly] = self.iteration

        live_active = active & ~frozen
        self._floats.append(int(self.receivers[live_active].sum()))
        moving = active & ~(frozen & ~newly)
        self._max_delta.append(float(delta[moving].max(initial=0.0)))
        self._frozen.append(int(frozen.sum()))
        if self._area_times:
            self.cb += sum(self._area_times)
            self.parallel += max(self._area_times)
            self._area_times.clear()
        self._cb.append(self.cb)
        if self.history_every and self.iteration % self.history_every == 0:
            self.history.append(curr.copy())
        self.stopped = stop
        return stop

    def trace(self, method: str, x: np.ndarray, **extra) -> SolverTrace:
        return SolverTrace(
            method=method,
            mode=self.config.mode,
            x=np.asarray(x, dtype=float).copy(),
            iterations=self.iteration,
            converged=self.stopped,
            max_delta=np.array(self._max_delta),
            frozen_count=np.array(self._frozen, dtype=int),
            floats_sent=np.array(self._floats, dtype=int),
            cumulative_cb=np.array(self._cb),
            cb_seconds=self.cb,
            parallel_seconds=self.parallel,
            mask=self.mask.copy(),
            history=self.history,
            extra=extra,
        )


# -- communication plans ------------------------------------------------------


def broadcast_receivers(views: Sequence[AreaView], n: int) -> np.ndarray:
    """Per global state: number of other areas that replicate it."""
    rec = np.zeros(n, dtype=int)
    for v in views:
        for s in v.replicated:
            rec[s] += 1
    return rec


def state_owners(views: Sequence[AreaView], n: int) -> np.ndarray:
    own = np.full(n, -1, dtype=int)
    for v in views:
        own[list(v.owned)] = v.k
    return own


def comm_volume(mask: FreezeMask, views: Sequence[AreaView]) -> int:
    """Floats sent this iteration: one per unfrozen shared state per receiving area.

    ``mask`` is indexed by global state (each state belongs to its owning area).
    """
    rec = broadcast_receivers(views, mask.frozen.size)
    return int(rec[~mask.frozen].sum())


def overall_time(iterations: int, cb: float, tdelay: float = 0.5) -> float:
    """Overall time: communication delay per iteration plus computation burden."""
    if iterations < 0 or cb < 0 or tdelay < 0:
        raise ValueError("iterations, cb and tdelay must be non-negative")
    return tdelay * iterations + cb


def solution_metrics(x_cent: np.ndarray, x_dist: np.ndarray) -> tuple[float, float]:
    """(sum of absolute differences, max absolute difference)."""
    a, b = np.asarray(x_cent, dtype=float), np.asarray(x_dist, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = np.abs(a - b)
    return float(d.sum()), float(d.max(initial=0.0))
