"""Fixed-point solvers on the gain system: diagonal matrix splitting and gossip gradient steps."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .errors import DSEError, NonConvergentSplitError
from .governor import Governor, GovernorConfig, SolverTrace, state_owners
from .network import AreaView
from .wls import GainSystem


def power_iteration(
    matvec: Callable[[np.ndarray], np.ndarray],
    n: int,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    seed: int = 0,
) -> float:
    """Largest eigenvalue magnitude of a symmetric operator.

    Uses ||B v|| for unit v, which converges even when +lambda and -lambda
    are both dominant.
    """
    rng = np.random.default_rng(seed)
    v = 1.0 + 0.1 * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est


def split_radius(A: np.ndarray, m_diag: np.ndarray) -> float:
    """Spectral radius of M^-1 N = M^-1 A - I for SPD ``A`` and diagonal ``M``.

    With S = M^-1/2 A M^-1/2 the eigenvalues of M^-1 N are lambda(S) - 1, so
    rho = max(1 - lambda_min(S), lambda_max(S) - 1).  lambda_min comes from
    inverse iteration, which stays accurate when rho is within 1e-5 of one.
    """
    s = 1.0 / np.sqrt(m_diag)
    S = s[:, None] * A * s[None, :]
    n = len(m_diag)
    lam_max = power_iteration(lambda v: S @ v, n)
    try:
        chol = linalg.cho_factor(S)
    except linalg.LinAlgError as exc:
        raise DSEError("gain matrix is not positive definite") from exc
    lam_min = 1.0 / power_iteration(lambda v: linalg.cho_solve(chol, v), n)
    return max(1.0 - lam_min, lam_max - 1.0)


@dataclass(frozen=True)
class SplitSystem:
    m_diag: np.ndarray
    N: np.ndarray
    y: np.ndarray
    rho: float

    @property
    def M(self) -> np.ndarray:
        return np.diag(self.m_diag)


def split_gain(gain: GainSystem | np.ndarray, alpha: float = 1.0, y: np.ndarray | None = None) -> SplitSystem:
    """A = M + N with M = diag(A) + alpha * diag(row sums of |offdiag(A)|).

    Warns when the iteration matrix M^-1 N has spectral radius >= 1.
    """
    if isinstance(gain, GainSystem):
        A, y = gain.A, gain.u if y is None else y
    else:
        A = np.asarray(gain, dtype=float)
        y = np.zeros(A.shape[0]) if y is None else np.asarray(y, dtype=float)
    d = np.diag(A).copy()
    E = A - np.diag(d)
    extra = alpha * np.abs(E).sum(axis=1)
    m_diag = d + extra
    if np.any(m_diag <= 0):
        raise DSEError("splitting produced a non-positive diagonal; gain must be SPD")
    N = E - np.diag(extra)
    rho = split_radius(A, m_diag)
    if rho >= 1.0:
        warnings.warn(f"splitting is not contractive: rho = {rho:.6f} >= 1", RuntimeWarning, stacklevel=2)
    return SplitSystem(m_diag, N, np.asarray(y, dtype=float), rho)


def _area_rows(owners: np.ndarray) -> list[np.ndarray]:
    return [np.flatnonzero(owners == k) for k in np.unique(owners)]


def gain_receivers(A: np.ndarray, owners: np.ndarray | None = None) -> np.ndarray:
    """Floats needed to publish each state to the agents whose rows it enters.

    Without an area assignment every bus is its own agent (one float per gain-graph
    neighbour); with one, one float per distinct neighbouring area.
    """
    coupled = (A != 0) & ~np.eye(A.shape[0], dtype=bool)
    if owners is None:
        return coupled.sum(axis=1)
    out = np.zeros(A.shape[0], dtype=int)
    for s in range(A.shape[0]):
        areas = set(owners[coupled[s]].tolist())
        areas.discard(int(owners[s]))
        out[s] = len(areas)
    return out


def splitting_run(
    split: SplitSystem,
    x0: np.ndarray | None = None,
    config: GovernorConfig = GovernorConfig(),
    views: Sequence[AreaView] | None = None,
    force: bool = False,
    history_every: int = 0,
) -> SolverTrace:
    """Iterate x <- M^-1 (y - N x) with each area updating the rows it owns."""
    if split.rho >= 1.0 and not force:
        raise NonConvergentSplitError(f"rho(M^-1 N) = {split.rho:.6f} >= 1")
    n = len(split.y)
    owners = state_owners(views, n) if views else np.zeros(n, dtype=int)
    A = split.N + np.diag(split.m_diag)
    receivers = gain_receivers(A, owners if views else None)
    gov = Governor(config, n, receivers, owners, history_every)
    blocks = [(r, split.N[r], split.y[r], split.m_diag[r]) for r in _area_rows(owners)]

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    while not gov.done:
        x_new = np.empty(n)
        for rows, N_r, y_r, m_r in blocks:
            with gov.clock():
                x_new[rows] = (y_r - N_r @ x) / m_r
        gov.step(x, x_new)
        x = x_new
    return gov.trace("splitting", x, rho=split.rho)


def choose_tau(gain: GainSystem | np.ndarray, fraction: float = 0.5) -> float:
    """Step size ``fraction * 2 / ||L||_2`` for the gradient iteration."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    L = gain.A if isinstance(gain, GainSystem) else np.asarray(gain, dtype=float)
    norm = power_iteration(lambda v: L @ v, L.shape[0])
    return fraction * 2.0 / norm


@dataclass(frozen=True)
class GossipConfig:
    tau: float
    seed: int = 0
    synchronous: bool = False
    # True: every round all areas refresh interior states and only the activated
    # pair refreshes its boundary states; False: the pair refreshes all it owns.
    shared_only: bool = False


def area_pairs(views: Sequence[AreaView]) -> list[tuple[int, int]]:
    """Adjacent area pairs (sharing a tie line), sorted."""
    pairs = set()
    for a in views:
        for b in views:
            if a.k < b.k and set(a.tie_lines) & set(b.tie_lines):
                pairs.add((a.k, b.k))
    return sorted(pairs)


def gossip_run(
    gain: GainSystem,
    views: Sequence[AreaView],
    config: GossipConfig,
    governor: GovernorConfig = GovernorConfig(),
    x0: np.ndarray | None = None,
    history_every: int = 0,
) -> SolverTrace:
    """Randomised pairwise gradient iteration x <- x - tau (L x - u).

    Each round one uniformly drawn pair of adjacent areas updates; the pair then
    publishes its boundary states (one float per unfrozen boundary state).
    """
    L, u = gain.A, gain.u
    n = len(u)
    limit = 2.0 / power_iteration(lambda v: L @ v, n)
    if not 0.0 < config.tau < limit:
        raise ValueError(f"tau = {config.tau:g} outside (0, {limit:g})")
    pairs = area_pairs(views)
    if len(views) < 2 or not pairs:
        raise DSEError("gossip needs at least two adjacent areas")

    owners = state_owners(views, n)
    boundary = gain_receivers(L, owners) > 0
    gov = Governor(governor, n, boundary.astype(int), owners, history_every)
    rows_of = {v.k: np.asarray(v.owned, dtype=int) for v in views}
    interior = {k: r[~boundary[r]] for k, r in rows_of.items()}
    edge = {k: r[boundary[r]] for k, r in rows_of.items()}
    rng = np.random.default_rng(config.seed)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    while not gov.done:
        if config.synchronous:
            chosen = set(rows_of)
        else:
            chosen = set(pairs[rng.integers(len(pairs))])
        if config.shared_only:
            work = {k: np.concatenate([interior[k], edge[k]]) if k in chosen else interior[k] for k in rows_of}
        else:
            work = {k: rows_of[k] for k in chosen}
        x_new = x.copy()
        active = np.zeros(n, dtype=bool)
        for k in sorted(work):
            r = work[k]
            if r.size == 0:
                continue
            with gov.clock():
                x_new[r] = x[r] - config.tau * (L[r] @ x - u[r])
            active[r] = True
        gov.step(x, x_new, active)
        x = x_new
    return gov.trace("gossip", x, tau=config.tau)
