"""DC network model: case loading, ground truth, measurements and area views."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import CaseError, ObservabilityError

DEFAULT_VARIANCE = 1e-4


@dataclass(frozen=True)
class Bus:
    id: int
    injection: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    x: float

    @property
    def b(self) -> float:
        return 1.0 / self.x


@dataclass(frozen=True)
class Network:
    """Validated bus/branch topology with a designated slack bus.

    State vectors throughout the package are indexed by ``state_buses``:
    the bus ids in ascending order with the slack removed.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    slack: int
    name: str = ""

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise CaseError("duplicate bus ids")
        known = set(ids)
        if self.slack not in known:
            raise CaseError(f"slack bus {self.slack} is not a bus")
        for k, br in enumerate(self.branches):
            if br.from_bus not in known or br.to_bus not in known:
                raise CaseError(f"branch {k} ({br.from_bus}-{br.to_bus}) references a missing bus")
            if br.from_bus == br.to_bus:
                raise CaseError(f"branch {k} is a self-loop at bus {br.from_bus}")
            if not br.x > 0:
                raise CaseError(f"branch {k} has non-positive reactance {br.x}")
        n = len(ids)
        pos = {b: i for i, b in enumerate(sorted(ids))}
        rows = [pos[br.from_bus] for br in self.branches]
        cols = [pos[br.to_bus] for br in self.branches]
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        ncomp, _ = connected_components(graph, directed=False)
        if ncomp != 1:
            raise CaseError(f"network graph is disconnected ({ncomp} components)")

    @property
    def bus_ids(self) -> list[int]:
        return sorted(b.id for b in self.buses)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def state_buses(self) -> list[int]:
        return [b for b in self.bus_ids if b != self.slack]

    @property
    def n_states(self) -> int:
        return len(self.buses) - 1

    def state_index(self) -> dict[int, int]:
        """Map bus id -> position in the state vector (slack excluded)."""
        return {b: i for i, b in enumerate(self.state_buses)}

    def injections(self) -> np.ndarray:
        """Injections in ``bus_ids`` order."""
        by_id = {b.id: b.injection for b in self.buses}
        return np.array([by_id[i] for i in self.bus_ids])

    def susceptance_matrix(self) -> np.ndarray:
        """Full nodal DC susceptance matrix in ``bus_ids`` order."""
        pos = {b: i for i, b in enumerate(self.bus_ids)}
        B = np.zeros((self.n_buses, self.n_buses))
        for br in self.branches:
            i, j = pos[br.from_bus], pos[br.to_bus]
            B[i, i] += br.b
            B[j, j] += br.b
            B[i, j] -= br.b
            B[j, i] -= br.b
        return B

    def neighbors(self) -> dict[int, set[int]]:
        adj: dict[int, set[int]] = {b: set() for b in self.bus_ids}
        for br in self.branches:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
        return adj


def data_path(name: str | Path) -> Path:
    """Resolve ``name`` as a filesystem path, falling back to the bundled data directory."""
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("dselab") / "data" / path.name
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no such case or partition file: {name}")


def network_from_dict(data: dict) -> Network:
    try:
        buses = tuple(Bus(int(b["id"]), float(b.get("injection", 0.0))) for b in data["buses"])
        branches = tuple(Branch(int(b["from"]), int(b["to"]), float(b["x"])) for b in data["branches"])
        slack = int(data["slack"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseError(f"case data does not match the schema: {exc!r}") from exc
    return Network(buses, branches, slack, str(data.get("name", "")))


def load_case(path: str | Path) -> Network:
    """Read a JSON case file (bundled names such as ``ieee14.json`` also resolve)."""
    path = data_path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CaseError(f"{path}: not valid JSON ({exc})") from exc
    return network_from_dict(data)


def dc_power_flow(network: Network) -> np.ndarray:
    """Solve the DC power flow; the slack bus absorbs any injection imbalance.

    Returns the non-slack phase angles (radians), slack angle fixed at 0.
    """
    keep = [i for i, b in enumerate(network.bus_ids) if b != network.slack]
    B = network.susceptance_matrix()[np.ix_(keep, keep)]
    P = network.injections()[keep]
    try:
        return linalg.solve(B, P, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise ObservabilityError("reduced susceptance matrix is singular") from exc


# -- measurements -----------------------------------------------------------


@dataclass(frozen=True)
class Measurement:
    kind: str  # "flow" | "injection"
    location: int  # branch index for flows, bus id for injections
    true_value: float

    def label(self, network: Network) -> str:
        if self.kind == "flow":
            br = network.branches[self.location]
            return f"P{br.from_bus}-{br.to_bus}"
        return f"P{self.location}"


@dataclass(frozen=True)
class MeasurementModel:
    network: Network
    measurements: tuple[Measurement, ...]
    F: np.ndarray
    variances: np.ndarray
    truth: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.measurements)

    @property
    def n(self) -> int:
        return self.F.shape[1]

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.variances)

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / self.variances

    @property
    def true_values(self) -> np.ndarray:
        return np.array([meas.true_value for meas in self.measurements])

    def labels(self) -> list[str]:
        return [meas.label(self.network) for meas in self.measurements]


def measurement_rows(network: Network, measurements: Iterable[tuple[str, int]]) -> np.ndarray:
    """DC linearisation over *all* buses (slack column included, ``bus_ids`` order)."""
    pos = {b: i for i, b in enumerate(network.bus_ids)}
    B = network.susceptance_matrix()
    rows = []
    for kind, loc in measurements:
        row = np.zeros(network.n_buses)
        if kind == "flow":
            br = network.branches[loc]
            row[pos[br.from_bus]] = br.b
            row[pos[br.to_bus]] = -br.b
        elif kind == "injection":
            row[:] = B[pos[loc]]
        else:
            raise ValueError(f"unknown measurement kind {kind!r}")
        rows.append(row)
    return np.array(rows).reshape(-1, network.n_buses)


def build_measurement_model(
    network: Network,
    flows: bool | Iterable[int] = True,
    injections: bool | Iterable[int] = True,
    variance: float = DEFAULT_VARIANCE,
) -> MeasurementModel:
    """Assemble the linear model ``z = F x + noise``.

    ``flows`` selects from-side branch flows (``True`` = every branch, or an
    iterable of branch indices); ``injections`` selects buses (``True`` = all,
    or an iterable of bus ids).  Flows come first, then injections.
    """
    if not variance > 0:
        raise ValueError("measurement variance must be positive")
    if flows is True:
        flow_idx = list(range(len(network.branches)))
    elif flows is False:
        flow_idx = []
    else:
        flow_idx = list(flows)
    if injections is True:
        inj_buses = network.bus_ids
    elif injections is False:
        inj_buses = []
    else:
        inj_buses = list(injections)

    spec = [("flow", k) for k in flow_idx] + [("injection", b) for b in inj_buses]
    full = measurement_rows(network, spec)
    slack_col = network.bus_ids.index(network.slack)
    F = np.delete(full, slack_col, axis=1)
    if len(spec) == 0 or np.linalg.matrix_rank(F) < network.n_states:
        raise ObservabilityError(
            f"measurement set is unobservable: rank {np.linalg.matrix_rank(F) if len(spec) else 0}"
            f" < {network.n_states} states"
        )
    truth = dc_power_flow(network)
    values = F @ truth
    measurements = tuple(Measurement(kind, loc, float(v)) for (kind, loc), v in zip(spec, values))
    F.setflags(write=False)
    variances = np.full(len(spec), float(variance))
    variances.setflags(write=False)
    return MeasurementModel(network, measurements, F, variances, truth)


def simulate_measurements(
    model: MeasurementModel, seed: int, noise_variance: float | None = None
) -> np.ndarray:
    """Noisy measurement vector, deterministic in ``seed``.

    ``noise_variance`` overrides the model variances for noise generation only;
    ``0`` returns the exact true values.
    """
    z = model.true_values.copy()
    if noise_variance == 0:
        return z
    std = np.sqrt(model.variances if noise_variance is None else np.full(model.m, noise_variance))
    rng = np.random.default_rng(seed)
    return z + rng.normal(0.0, 1.0, model.m) * std


# -- partitions and area views ---------------------------------------------


@dataclass(frozen=True)
class Partition:
    areas: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "areas", tuple(tuple(int(b) for b in a) for a in self.areas))
        seen: set[int] = set()
        for a in self.areas:
            if not a:
                raise CaseError("partition contains an empty area")
            dup = seen.intersection(a)
            if dup or len(set(a)) != len(a):
                raise CaseError(f"bus(es) {sorted(dup) or a} assigned to more than one area")
            seen.update(a)

    @property
    def K(self) -> int:
        return len(self.areas)

    def area_of(self) -> dict[int, int]:
        return {b: k for k, a in enumerate(self.areas) for b in a}

    def labels(self, bus_ids: Sequence[int]) -> np.ndarray:
        owner = self.area_of()
        return np.array([owner[b] for b in bus_ids])

    def check(self, network: Network, b_lim: int = 1) -> None:
        if self.K < 2:
            raise CaseError(f"a partition needs at least 2 areas, got {self.K}")
        covered = set(self.area_of())
        buses = set(network.bus_ids)
        if covered != buses:
            missing, extra = sorted(buses - covered), sorted(covered - buses)
            raise CaseError(f"partition does not match network buses (missing {missing}, unknown {extra})")
        small = [k for k, a in enumerate(self.areas) if len(a) < b_lim]
        if small:
            raise CaseError(f"areas {small} have fewer than {b_lim} buses")

    @classmethod
    def from_labels(cls, bus_ids: Sequence[int], labels: Sequence[int]) -> "Partition":
        groups: dict[int, list[int]] = {}
        for b, k in zip(bus_ids, labels):
            groups.setdefault(int(k), []).append(int(b))
        return cls(tuple(tuple(groups[k]) for k in sorted(groups)))


def load_partition(path: str | Path) -> Partition:
    path = data_path(path)
    try:
        data = json.loads(path.read_text())
        return Partition(tuple(tuple(a) for a in data["areas"]))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CaseError(f"{path}: not a valid partition file ({exc!r})") from exc


def save_partition(partition: Partition, path: str | Path, **extra) -> None:
    payload = {"areas": [list(a) for a in partition.areas], **extra}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


@dataclass(frozen=True)
class AreaView:
    """What one area sees: its own states, the neighbour states its measurements touch,
    and the measurements it is responsible for.  Index fields are state-vector positions."""

    k: int
    buses: tuple[int, ...]
    owned: tuple[int, ...]
    replicated: tuple[int, ...]
    measurements: tuple[int, ...]
    tie_lines: tuple[int, ...]

    @property
    def local(self) -> tuple[int, ...]:
        return tuple(sorted(self.owned + self.replicated))


def make_area_views(network: Network, model: MeasurementModel, partition: Partition) -> list[AreaView]:
    partition.check(network)
    owner = partition.area_of()
    sidx = network.state_index()

    assigned: list[list[int]] = [[] for _ in range(partition.K)]
    for i, meas in enumerate(model.measurements):
        if meas.kind == "flow":
            bus = network.branches[meas.location].from_bus
        else:
            bus = meas.location
        assigned[owner[bus]].append(i)

    views = []
    for k, area in enumerate(partition.areas):
        owned = sorted(sidx[b] for b in area if b != network.slack)
        rows = assigned[k]
        touched = np.flatnonzero(np.any(model.F[rows] != 0, axis=0)) if rows else []
        replicated = sorted(set(int(s) for s in touched) - set(owned))
        ties = [
            j for j, br in enumerate(network.branches)
            if (owner[br.from_bus] == k) != (owner[br.to_bus] == k)
        ]
        views.append(AreaView(k, tuple(sorted(area)), tuple(owned), tuple(replicated), tuple(rows), tuple(ties)))
    return views


def area_adjacency(network: Network, partition: Partition) -> list[tuple[int, int]]:
    """Sorted list of area pairs joined by at least one tie line."""
    owner = partition.area_of()
    pairs = set()
    for br in network.branches:
        a, b = owner[br.from_bus], owner[br.to_bus]
        if a != b:
            pairs.add((min(a, b), max(a, b)))
    return sorted(pairs)


def chain_network(n_buses: int = 3, x: float = 1.0, injections: Sequence[float] | None = None) -> Network:
    """Radial chain 1-2-...-n, handy for toy examples and tests."""
    inj = list(injections) if injections is not None else [0.0] * n_buses
    buses = tuple(Bus(i + 1, float(p)) for i, p in enumerate(inj))
    branches = tuple(Branch(i, i + 1, x) for i in range(1, n_buses))
    return Network(buses, branches, 1, f"chain{n_buses}")
