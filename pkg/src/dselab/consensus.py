"""Area-decomposed estimators with explicit coupling between neighbours.

Both solvers give each area a local vector over its ``AreaView.local`` states
(owned plus replicated neighbour states) and a closed-form local solve, since
the DC objective is quadratic.

* Decomposition: each area minimises its weighted measurement residuals plus
  ``omega_x * (x_s - b_s)**2`` for every replicated state ``s``, where ``b_s``
  is the value last broadcast by the owner of ``s``.
* ADMM: areas agree on every state they share through per-pair auxiliary
  variables and dual multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import DSEError, ObservabilityError, OscillationError
from .governor import Governor, GovernorConfig, SolverTrace, broadcast_receivers
from .network import AreaView, MeasurementModel

DEFAULT_OMEGA_X = 1e4
OSCILLATION_PATIENCE = 50


def _factor(H: np.ndarray, what: str):
    try:
        return linalg.cho_factor(H)
    except linalg.LinAlgError as exc:
        raise ObservabilityError(f"{what}: local system is singular") from exc


class _LocalData:
    """Measurement block of one area restricted to its local states."""

    def __init__(self, view: AreaView, model: MeasurementModel):
        self.view = view
        self.local = np.asarray(view.local, dtype=int)
        rows = np.asarray(view.measurements, dtype=int)
        self.rows = rows
        self.F = model.F[np.ix_(rows, self.local)] if rows.size else np.zeros((0, self.local.size))
        self.w = model.weights[rows]
        self.H = (self.F.T * self.w) @ self.F
        pos = {s: i for i, s in enumerate(self.local)}
        self.owned_pos = np.array([pos[s] for s in view.owned], dtype=int)
        self.rep_pos = np.array([pos[s] for s in view.replicated], dtype=int)

    def g(self, z: np.ndarray) -> np.ndarray:
        return (self.F.T * self.w) @ z[self.rows]

    def residual_objective(self, z: np.ndarray, x_local: np.ndarray) -> float:
        r = z[self.rows] - self.F @ x_local
        return float(r @ (self.w * r))


# -- decomposition ------------------------------------------------------------


class DecompositionArea:
    """Pre-factored local problem for one area; ``solve`` is the per-iteration work."""

    def __init__(self, view: AreaView, model: MeasurementModel, omega_x: float = DEFAULT_OMEGA_X):
        if not omega_x > 0:
            raise ValueError("omega_x must be positive")
        self.data = _LocalData(view, model)
        self.omega_x = omega_x
        H = self.data.H.copy()
        H[self.data.rep_pos, self.data.rep_pos] += omega_x
        self._chol = _factor(H, f"area {view.k}")

    def solve(self, z: np.ndarray, broadcast: np.ndarray) -> np.ndarray:
        d = self.data
        rhs = d.g(z)
        rhs[d.rep_pos] += self.omega_x * broadcast[d.local[d.rep_pos]]
        return linalg.cho_solve(self._chol, rhs)

    def objective(self, z: np.ndarray, x_local: np.ndarray, broadcast: np.ndarray) -> float:
        d = self.data
        gap = x_local[d.rep_pos] - broadcast[d.local[d.rep_pos]]
        return d.residual_objective(z, x_local) + self.omega_x * float(gap @ gap)


def decomposition_local_solve(
    view: AreaView,
    model: MeasurementModel,
    z: np.ndarray,
    broadcast: np.ndarray,
    omega_x: float = DEFAULT_OMEGA_X,
) -> np.ndarray:
    """Exact minimiser of one area's penalised objective, ordered as ``view.local``.

    ``broadcast`` is a full-length state vector; only replicated entries are read.
    """
    return DecompositionArea(view, model, omega_x).solve(np.asarray(z, float), np.asarray(broadcast, float))


def _layout(views: Sequence[AreaView]):
    starts = np.cumsum([0] + [len(v.local) for v in views])
    area = np.concatenate([np.full(len(v.local), v.k) for v in views])
    state = np.concatenate([np.asarray(v.local, dtype=int) for v in views])
    return starts, area, state


def decomposition_run(
    views: Sequence[AreaView],
    model: MeasurementModel,
    z: np.ndarray,
    omega_x: float = DEFAULT_OMEGA_X,
    config: GovernorConfig = GovernorConfig(max_iter=1000),
    schedule: str = "jacobi",
    history_every: int = 0,
) -> SolverTrace:
    """Iterate local solves and boundary broadcasts until the governor stops.

    ``schedule="jacobi"``: all areas solve against last iteration's broadcasts.
    ``schedule="gauss-seidel"``: areas solve in order and publish immediately.
    """
    if schedule not in ("jacobi", "gauss-seidel"):
        raise ValueError(f"unknown schedule {schedule!r}")
    z = np.asarray(z, dtype=float)
    n = model.n
    areas = [DecompositionArea(v, model, omega_x) for v in views]
    starts, entry_area, entry_state = _layout(views)
    rec = broadcast_receivers(views, n)
    owned_entry = np.zeros(entry_state.size, dtype=bool)
    for area, s0 in zip(areas, starts):
        owned_entry[s0 + area.data.owned_pos] = True
    receivers = np.where(owned_entry, rec[entry_state], 0)
    gov = Governor(config, entry_state.size, receivers, entry_area, history_every)

    broadcast = np.zeros(n)
    local = np.zeros(entry_state.size)
    joint_prev = np.inf
    step_prev = np.inf
    rising = 0
    objective_path = []
    while not gov.done:
        prev = local.copy()
        new = local.copy()
        frozen = gov.mask.frozen
        for i, area in enumerate(areas):
            sl = slice(starts[i], starts[i + 1])
            with gov.clock():
                xk = area.solve(z, broadcast)
            if schedule == "gauss-seidel":
                xk = np.where(frozen[sl], prev[sl], xk)
                broadcast[area.data.local[area.data.owned_pos]] = xk[area.data.owned_pos]
            new[sl] = xk
        gov.step(prev, new)
        local = new
        broadcast[entry_state[owned_entry]] = local[owned_entry]

        joint = sum(
            a.objective(z, local[starts[i]:starts[i + 1]], broadcast) for i, a in enumerate(areas)
        )
        objective_path.append(joint)
        # a contracting iteration can approach its fixed point from below, so a
        # rising objective only counts while the step size is not shrinking
        step = float(np.abs(local - prev).max(initial=0.0))
        rising = rising + 1 if joint > joint_prev and step >= step_prev else 0
        joint_prev, step_prev = joint, step
        if rising >= OSCILLATION_PATIENCE:
            raise OscillationError(f"joint objective rose for {rising} consecutive iterations")

    return gov.trace(
        "decomposition",
        broadcast.copy(),
        joint_objective=np.array(objective_path),
        local=local,
        disagreement=_disagreement(local, entry_state, broadcast),
    )


def _disagreement(local, entry_state, reference) -> float:
    return float(np.abs(local - reference[entry_state]).max(initial=0.0))


# -- ADMM ---------------------------------------------------------------------


@dataclass
class SharedPair:
    """States shared by areas k < l, with one auxiliary value and two duals per state."""

    k: int
    l: int
    states: np.ndarray
    pos_k: np.ndarray
    pos_l: np.ndarray
    aux: np.ndarray
    v_kl: np.ndarray
    v_lk: np.ndarray


@dataclass
class AdmmState:
    x: list[np.ndarray]
    pairs: list[SharedPair]
    c: float
    iteration: int = 0


@dataclass
class AdmmProblem:
    """Per-area factorizations of 2 H_k + c diag(share counts)."""

    views: Sequence[AreaView]
    model: MeasurementModel
    z: np.ndarray
    c: float
    data: list[_LocalData] = field(init=False)
    counts: list[np.ndarray] = field(init=False)
    chol: list = field(init=False)
    g: list[np.ndarray] = field(init=False)

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("ADMM penalty c must be positive")
        self.z = np.asarray(self.z, dtype=float)
        self.data = [_LocalData(v, self.model) for v in self.views]
        self.counts = [np.zeros(d.local.size) for d in self.data]
        for p in shared_pairs(self.views):
            self.counts[p.k][p.pos_k] += 1
            self.counts[p.l][p.pos_l] += 1
        self.chol = [
            _factor(2.0 * d.H + self.c * np.diag(cnt), f"area {d.view.k}") for d, cnt in zip(self.data, self.counts)
        ]
        self.g = [d.g(self.z) for d in self.data]

    def init_state(self) -> AdmmState:
        return AdmmState([np.zeros(d.local.size) for d in self.data], shared_pairs(self.views), self.c)


def shared_pairs(views: Sequence[AreaView]) -> list[SharedPair]:
    out = []
    for a in views:
        for b in views:
            if a.k >= b.k:
                continue
            common = np.intersect1d(a.local, b.local)
            if common.size == 0:
                continue
            pa = np.searchsorted(a.local, common)
            pb = np.searchsorted(b.local, common)
            zeros = np.zeros(common.size)
            out.append(SharedPair(a.k, b.k, common, pa, pb, zeros.copy(), zeros.copy(), zeros.copy()))
    return out


def _pair_terms(state: AdmmState, k: int, size: int):
    """sum_l (v_kl, aux_kl) scattered onto area k's local vector."""
    v = np.zeros(size)
    a = np.zeros(size)
    for p in state.pairs:
        if p.k == k:
            np.add.at(v, p.pos_k, p.v_kl)
            np.add.at(a, p.pos_k, p.aux)
        elif p.l == k:
            np.add.at(v, p.pos_l, p.v_lk)
            np.add.at(a, p.pos_l, p.aux)
    return v, a


def admm_local_update(state: AdmmState, problem: AdmmProblem, k: int) -> np.ndarray:
    size = problem.data[k].local.size
    v, a = _pair_terms(state, k, size)
    rhs = 2.0 * problem.g[k] - v + state.c * a
    return linalg.cho_solve(problem.chol[k], rhs)


def admm_x_update(state: AdmmState, problem: AdmmProblem) -> list[np.ndarray]:
    """Exact minimisation of the augmented Lagrangian over every area's x_k."""
    return [admm_local_update(state, problem, k) for k in range(len(problem.data))]


def admm_aux_update(state: AdmmState) -> list[np.ndarray]:
    """aux_kl = mean of the two copies + (v_kl + v_lk) / (2c)."""
    return [
        0.5 * (state.x[p.k][p.pos_k] + state.x[p.l][p.pos_l]) + (p.v_kl + p.v_lk) / (2.0 * state.c)
        for p in state.pairs
    ]


def admm_dual_update(state: AdmmState) -> list[tuple[np.ndarray, np.ndarray]]:
    """v_kl <- v_kl + c (x_k[l] - aux_kl), and the same for v_lk."""
    return [
        (
            p.v_kl + state.c * (state.x[p.k][p.pos_k] - p.aux),
            p.v_lk + state.c * (state.x[p.l][p.pos_l] - p.aux),
        )
        for p in state.pairs
    ]


def local_lagrangian(state: AdmmState, problem: AdmmProblem, k: int, x_k: np.ndarray) -> float:
    d = problem.data[k]
    val = d.residual_objective(problem.z, x_k)
    for p in state.pairs:
        if k in (p.k, p.l):
            pos, v = (p.pos_k, p.v_kl) if p.k == k else (p.pos_l, p.v_lk)
            gap = x_k[pos] - p.aux
            val += float(v @ gap) + 0.5 * state.c * float(gap @ gap)
    return val


def augmented_lagrangian(state: AdmmState, problem: AdmmProblem) -> float:
    return sum(local_lagrangian(state, problem, k, state.x[k]) for k in range(len(state.x)))


def primal_residual(state: AdmmState) -> float:
    r = 0.0
    for p in state.pairs:
        r = max(r, float(np.abs(state.x[p.k][p.pos_k] - p.aux).max(initial=0.0)))
        r = max(r, float(np.abs(state.x[p.l][p.pos_l] - p.aux).max(initial=0.0)))
    return r


def admm_run(
    views: Sequence[AreaView],
    model: MeasurementModel,
    z: np.ndarray,
    c: float = 1.0,
    config: GovernorConfig = GovernorConfig(max_iter=5000),
    history_every: int = 0,
) -> SolverTrace:
    """Consensus ADMM; each iteration is x-update, aux-update, dual-update."""
    problem = AdmmProblem(views, model, z, c)
    state = problem.init_state()
    if not state.pairs:
        raise DSEError("no area shares a state with another; nothing to coordinate")
    starts = np.cumsum([0] + [d.local.size for d in problem.data])
    entry_area = np.concatenate([np.full(d.local.size, d.view.k) for d in problem.data])
    receivers = np.concatenate([cnt.astype(int) for cnt in problem.counts])
    gov = Governor(config, int(starts[-1]), receivers, entry_area, history_every)

    while not gov.done:
        prev = np.concatenate(state.x)
        new_x = []
        for k in range(len(problem.data)):
            with gov.clock():
                new_x.append(admm_local_update(state, problem, k))
        new = np.concatenate(new_x)
        gov.step(prev, new)
        state.x = [new[starts[k]:starts[k + 1]] for k in range(len(problem.data))]
        with gov.clock():
            for p, aux in zip(state.pairs, admm_aux_update(state)):
                p.aux = aux
            for p, (vkl, vlk) in zip(state.pairs, admm_dual_update(state)):
                p.v_kl, p.v_lk = vkl, vlk
        state.iteration += 1

    x = np.zeros(model.n)
    for d, xk in zip(problem.data, state.x):
        x[d.local[d.owned_pos]] = xk[d.owned_pos]
    dual_sum = max((float(np.abs(p.v_kl + p.v_lk).max(initial=0.0)) for p in state.pairs), default=0.0)
    return gov.trace(
        "admm",
        x,
        primal_residual=primal_residual(state),
        disagreement=max(
            float(np.abs(state.x[p.k][p.pos_k] - state.x[p.l][p.pos_l]).max(initial=0.0)) for p in state.pairs
        ),
        dual_sum=dual_sum,
        state=state,
    )
