"""K-way bus-to-area assignment minimising the weighted cut under a minimum area size.

Cost convention: area k pays the weight of every edge leaving it, so a cut edge
is charged to both of its areas and the total is twice the cut weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import CaseError, InfeasiblePartitionError
from .network import Network, Partition

TOL = 1e-12


def connection_matrix(network: Network) -> np.ndarray:
    """Symmetric 0/1 adjacency in ``bus_ids`` order; parallel branches collapse."""
    pos = {b: i for i, b in enumerate(network.bus_ids)}
    C = np.zeros((network.n_buses, network.n_buses), dtype=int)
    for br in network.branches:
        i, j = pos[br.from_bus], pos[br.to_bus]
        C[i, j] = C[j, i] = 1
    return C


def weight_matrix(
    network: Network,
    w: float | Mapping[tuple[int, int], float] = 0.01,
    default: float = 0.01,
) -> np.ndarray:
    """Edge weights on the connection pattern.

    ``w`` is either a uniform weight or a mapping ``{(bus_i, bus_j): weight}``;
    edges missing from the mapping get ``default``.
    """
    C = connection_matrix(network)
    if not isinstance(w, Mapping):
        return C * float(w)
    pos = {b: i for i, b in enumerate(network.bus_ids)}
    W = C * float(default)
    for (a, b), val in w.items():
        i, j = pos[a], pos[b]
        if C[i, j]:
            W[i, j] = W[j, i] = float(val)
    return W


@dataclass(frozen=True)
class PartitionResult:
    partition: Partition
    per_area_cost: tuple[float, ...]
    total_cost: float
    initial_cost: float | None = None


def _labels(partition: Partition, bus_ids: Sequence[int]) -> np.ndarray:
    owner = partition.area_of()
    missing = [b for b in bus_ids if b not in owner]
    if missing or len(owner) != len(bus_ids):
        raise CaseError(f"partition does not cover exactly the buses (missing {missing})")
    return np.array([owner[b] for b in bus_ids])


def area_costs(labels: np.ndarray, T: np.ndarray, K: int) -> list[float]:
    costs = []
    for k in range(K):
        inside = labels == k
        costs.append(math.fsum(T[np.ix_(inside, ~inside)].ravel()))
    return costs


def cut_cost(
    partition: Partition,
    C: np.ndarray,
    W: np.ndarray,
    bus_ids: Sequence[int] | None = None,
) -> PartitionResult:
    """J_k = sum over i in area k, j outside area k of c_ij * w_ij."""
    M = C.shape[0]
    bus_ids = list(range(1, M + 1)) if bus_ids is None else list(bus_ids)
    labels = _labels(partition, bus_ids)
    J = area_costs(labels, C * W, partition.K)
    return PartitionResult(partition, tuple(J), math.fsum(J))


# -- search -------------------------------------------------------------------


def _canonical(labels: np.ndarray) -> tuple[int, ...]:
    """Relabel areas by order of first appearance."""
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(int(k), len(seen)) for k in labels)


def _total(labels: np.ndarray, ei: np.ndarray, ej: np.ndarray, ew: np.ndarray) -> float:
    return 2.0 * math.fsum(ew[labels[ei] != labels[ej]])


def _random_start(M: int, K: int, b_lim: int, rng: np.random.Generator) -> np.ndarray:
    order = rng.permutation(M)
    labels = np.empty(M, dtype=int)
    labels[order[: K * b_lim]] = np.repeat(np.arange(K), b_lim)
    labels[order[K * b_lim:]] = rng.integers(0, K, M - K * b_lim)
    return labels


def _descend(labels: np.ndarray, T: np.ndarray, K: int, b_lim: int) -> np.ndarray:
    """Steepest descent over single-bus moves and pairwise swaps."""
    M = len(labels)
    idx = np.arange(M)
    while True:
        onehot = np.zeros((M, K))
        onehot[idx, labels] = 1.0
        G = T @ onehot  # G[i, k]: weight from bus i into area k
        own = G[idx, labels]
        sizes = np.bincount(labels, minlength=K)

        # move i: a -> b changes the cut weight by G[i, a] - G[i, b]
        move = own[:, None] - G
        move[idx, labels] = np.inf
        move[sizes[labels] <= b_lim] = np.inf
        i_mv, k_mv = np.unravel_index(np.argmin(move), move.shape)
        best_move = move[i_mv, k_mv]

        # swap i (area a) <-> j (area b): (G[i,a]-G[i,b]) + (G[j,b]-G[j,a]) + 2 T[i,j]
        Gi_b = G[:, labels]  # [i, j] -> G[i, label_j]
        swap = own[:, None] - Gi_b + own[None, :] - Gi_b.T + 2.0 * T
        swap[labels[:, None] == labels[None, :]] = np.inf
        i_sw, j_sw = np.unravel_index(np.argmin(swap), swap.shape)
        best_swap = swap[i_sw, j_sw]

        if min(best_move, best_swap) >= -TOL:
            return labels
        labels = labels.copy()
        if best_move <= best_swap:
            labels[i_mv] = k_mv
        else:
            labels[i_sw], labels[j_sw] = labels[j_sw], labels[i_sw]


def _edges(T: np.ndarray):
    ei, ej = np.nonzero(np.triu(T, 1))
    return ei, ej, T[ei, ej]


def _result(labels, bus_ids, T, K, initial_cost=None) -> PartitionResult:
    part = Partition.from_labels(bus_ids, _canonical(labels))
    J = area_costs(np.array(_canonical(labels)), T, K)
    return PartitionResult(part, tuple(J), math.fsum(J), initial_cost)


def _check_feasible(M: int, K: int, b_lim: int) -> None:
    if K < 2:
        raise InfeasiblePartitionError("need at least two areas")
    if b_lim < 1:
        raise InfeasiblePartitionError("b_lim must be at least 1")
    if K * b_lim > M:
        raise InfeasiblePartitionError(f"{K} areas of at least {b_lim} buses do not fit in {M} buses")


def exhaustive_partition(
    network: Network, K: int, b_lim: int, w: float | Mapping = 0.01
) -> PartitionResult:
    """Enumerate every K-block assignment (restricted growth strings). Small M only."""
    M = network.n_buses
    _check_feasible(M, K, b_lim)
    if M > 12:
        raise ValueError("exhaustive enumeration is limited to 12 buses")
    T = connection_matrix(network) * weight_matrix(network, w)
    ei, ej, ew = _edges(T)
    rows = []

    def grow(prefix: list[int], used: int):
        i = len(prefix)
        if i == M:
            if used == K:
                rows.append(list(prefix))
            return
        if K - used > M - i:
            return
        for k in range(min(used + 1, K)):
            prefix.append(k)
            grow(prefix, max(used, k + 1))
            prefix.pop()

    grow([], 0)
    labels = np.array(rows, dtype=int)
    sizes = np.stack([(labels == k).sum(axis=1) for k in range(K)], axis=1)
    labels = labels[(sizes >= b_lim).all(axis=1)]
    if labels.size == 0:
        raise InfeasiblePartitionError("no feasible assignment")
    cut = (labels[:, ei] != labels[:, ej]).astype(float) @ ew
    best = np.flatnonzero(cut <= cut.min() + TOL)[0]  # rows are generated in lexicographic order
    return _result(labels[best], network.bus_ids, T, K)


def optimize_partition(
    network: Network,
    K: int,
    b_lim: int,
    w: float | Mapping = 0.01,
    seed: int = 0,
    restarts: int = 20,
    method: str = "local",
) -> PartitionResult:
    """Minimise the total cut cost subject to |area| >= b_lim.

    ``method="local"`` runs seeded multi-start steepest descent (moves + swaps);
    ``method="exhaustive"`` enumerates (M <= 12).  The best result wins, ties
    going to the lexicographically smallest canonical assignment.
    """
    if method == "exhaustive":
        return exhaustive_partition(network, K, b_lim, w)
    if method != "local":
        raise ValueError(f"unknown method {method!r}")
    M = network.n_buses
    _check_feasible(M, K, b_lim)
    T = connection_matrix(network) * weight_matrix(network, w)
    ei, ej, ew = _edges(T)
    rng = np.random.default_rng(seed)

    best_key = None
    best_labels = None
    initial_cost = None
    for _ in range(max(1, restarts)):
        start = _random_start(M, K, b_lim, rng)
        if initial_cost is None:
            initial_cost = _total(start, ei, ej, ew)
        labels = _descend(start, T, K, b_lim)
        key = (round(_total(labels, ei, ej, ew), 12), _canonical(labels))
        if best_key is None or key < best_key:
            best_key, best_labels = key, labels
    return _result(best_labels, network.bus_ids, T, K, initial_cost)
