"""Experiment runner and report writer for method x mode x seed grids."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import DSEError
from .governor import Mode, SolverTrace, overall_time, solution_metrics
from .methods import METHODS, MethodParams, governor_for, run_method
from .network import (
    Network,
    Partition,
    build_measurement_model,
    load_case,
    load_partition,
    make_area_views,
    simulate_measurements,
)
from .partition import optimize_partition
from .wls import estimate, objective

log = logging.getLogger(__name__)

CSV_COLUMNS = ["method", "mode", "iter", "eps1", "eps2", "cb_seconds", "ot_seconds", "ov"]


@dataclass
class ExperimentConfig:
    case: str
    partition: str = "optimize"
    k: int = 4
    b_lim: int = 3
    w: float = 0.01
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    modes: list[str] = field(default_factory=lambda: ["WOCC", "WCC"])
    epsilon: float = 1e-6
    seeds: list[int] = field(default_factory=lambda: [0])
    tdelay: float = 0.5
    out: str | None = None
    max_iter: dict[str, int] = field(default_factory=dict)
    noiseless: bool = False
    params: MethodParams = MethodParams()

    def __post_init__(self):
        if not self.methods:
            raise ValueError("at least one method is required")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        self.modes = [Mode(m).value for m in self.modes]
        if isinstance(self.params, dict):
            self.params = MethodParams(**self.params)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls(**json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsRow:
    method: str
    mode: str
    iter: float
    eps1: float
    eps2: float
    cb_seconds: float
    ot_seconds: float
    ov: float
    seed: int | None = None
    floats: float = 0
    converged: bool = True
    error: str = ""

    def csv_values(self) -> list[str]:
        return [
            self.method, self.mode, _fmt(self.iter, "g"), _fmt(self.eps1), _fmt(self.eps2),
            _fmt(self.cb_seconds, ".12g"), _fmt(self.ot_seconds, ".12g"), _fmt(self.ov, ".10g"),
        ]


def _fmt(v, spec: str = ".6e") -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return format(v, spec)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    partition: Partition
    rows: list[MetricsRow]
    runs: list[MetricsRow]
    traces: dict[tuple[str, str, int], SolverTrace] = field(repr=False, default_factory=dict)
    centralized_ov: dict[int, float] = field(default_factory=dict)

    @property
    def all_failed(self) -> bool:
        return all(r.error for r in self.runs)


def resolve_partition(config: ExperimentConfig, network: Network) -> Partition:
    if config.partition == "optimize":
        return optimize_partition(network, config.k, config.b_lim, config.w, seed=config.seeds[0]).partition
    return load_partition(config.partition)


def metrics_row(trace: SolverTrace, x_cent, model, z, tdelay: float, seed: int) -> MetricsRow:
    eps1, eps2 = solution_metrics(x_cent, trace.x)
    return MetricsRow(
        method=trace.method,
        mode=trace.mode.value,
        iter=trace.iterations,
        eps1=eps1,
        eps2=eps2,
        cb_seconds=trace.cb_seconds,
        ot_seconds=overall_time(trace.iterations, trace.cb_seconds, tdelay),
        ov=objective(model, z, trace.x),
        seed=seed,
        floats=trace.total_floats,
        converged=trace.converged,
    )


def aggregate(runs: Sequence[MetricsRow], tdelay: float) -> list[MetricsRow]:
    """Median across seeds per (method, mode); OT is recomputed from the medians."""
    groups: dict[tuple[str, str], list[MetricsRow]] = {}
    for r in runs:
        groups.setdefault((r.method, r.mode), []).append(r)
    out = []
    for (method, mode), rs in groups.items():
        ok = [r for r in rs if not r.error]
        if not ok:
            out.append(MetricsRow(method, mode, *(math.nan,) * 6, error=rs[0].error))
            continue
        med = {f: statistics.median(getattr(r, f) for r in ok) for f in ("iter", "eps1", "eps2", "cb_seconds", "ov", "floats")}
        out.append(MetricsRow(
            method, mode, med["iter"], med["eps1"], med["eps2"], med["cb_seconds"],
            overall_time(med["iter"], med["cb_seconds"], tdelay), med["ov"],
            floats=med["floats"], converged=all(r.converged for r in ok),
        ))
    return out


def run_experiment(config: ExperimentConfig, keep_traces: bool = True) -> ExperimentResult:
    network = load_case(config.case)
    model = build_measurement_model(network)
    partition = resolve_partition(config, network)
    views = make_area_views(network, model, partition)

    runs: list[MetricsRow] = []
    traces = {}
    cent_ov = {}
    for method in config.methods:
        for mode in config.modes:
            for seed in config.seeds:
                z = simulate_measurements(model, seed, 0 if config.noiseless else None)
                x_cent = estimate(model, z)
                cent_ov[seed] = objective(model, z, x_cent)
                gov = governor_for(method, config.epsilon, mode, config.tdelay, config.max_iter.get(method))
                try:
                    trace = run_method(method, model, views, z, gov, config.params, seed)
                except (DSEError, ValueError) as exc:
                    log.warning("%s/%s seed %s failed: %s", method, mode, seed, exc)
                    runs.append(MetricsRow(method, mode, *(math.nan,) * 6, seed=seed, converged=False, error=str(exc)))
                    continue
                runs.append(metrics_row(trace, x_cent, model, z, config.tdelay, seed))
                if keep_traces:
                    traces[(method, mode, seed)] = trace
    return ExperimentResult(config, partition, aggregate(runs, config.tdelay), runs, traces, cent_ov)


def metrics_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_values())
    return buf.getvalue()


def metrics_markdown(rows: Sequence[MetricsRow]) -> str:
    head = ["Method", "Mode", "Iter", "eps1", "eps2", "CB (s)", "OT (s)", "OV"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        lines.append("| " + " | ".join(r.csv_values()) + " |")
    lines.append("")
    lines.append("CB and OT are wall-clock measurements and differ between machines and runs.")
    return "\n".join(lines) + "\n"


def emit_report(
    rows: Sequence[MetricsRow],
    outdir: str | Path,
    formats: Sequence[str] = ("csv", "markdown"),
    result: ExperimentResult | None = None,
    figures: bool = True,
) -> list[Path]:
    """Write metrics.csv / metrics.md, plus per-run traces, runs.csv and figures when ``result`` is given."""
    if not rows:
        raise ValueError("nothing to report")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        p = outdir / "metrics.csv"
        p.write_text(metrics_csv(rows))
        written.append(p)
    if "markdown" in formats:
        p = outdir / "metrics.md"
        p.write_text(metrics_markdown(rows))
        written.append(p)
    if result is None:
        return written

    p = outdir / "runs.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS + ["seed", "floats", "converged", "error"])
        for r in result.runs:
            w.writerow(r.csv_values() + [r.seed, _fmt(r.floats, "g"), int(r.converged), r.error])
    written.append(p)
    tdir = outdir / "traces"
    tdir.mkdir(exist_ok=True)
    for (method, mode, seed), tr in sorted(result.traces.items()):
        tp = tdir / f"{method}_{mode}_seed{seed}.csv"
        tr.to_csv(tp)
        written.append(tp)
    if figures and result.traces:
        from .plotting import plot_convergence

        written.append(plot_convergence([result.traces[k] for k in sorted(result.traces)], outdir / "convergence.svg"))
    return written
