import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dselab.errors import DivergenceError
from dselab.governor import (
    FreezeMask,
    Governor,
    GovernorConfig,
    Mode,
    comm_volume,
    governor_step,
    overall_time,
    solution_metrics,
)
from dselab.methods import METHODS, governor_for, run_method
from dselab.network import simulate_measurements

WCC = GovernorConfig(epsilon=1e-6, mode=Mode.WCC)
WOCC = GovernorConfig(epsilon=1e-6, mode=Mode.WOCC)


class TestGovernorStep:
    def test_freezes_small_change(self):
        mask, stop = governor_step([1.0, 2.0], [1.0 + 5e-7, 2.1], FreezeMask.active(2), WCC)
        assert mask.frozen.tolist() == [True, False]
        assert mask.frozen_at.tolist() == [1, -1]
        assert not stop

    def test_no_change_stops(self):
        mask, stop = governor_step([1.0, 2.0], [1.0, 2.0], FreezeMask.active(2), WCC)
        assert mask.frozen.all() and stop

    def test_wocc_never_freezes(self):
        mask, stop = governor_step([1.0, 2.0], [1.0 + 5e-7, 2.1], FreezeMask.active(2), WOCC)
        assert not mask.frozen.any() and not stop
        _, stop = governor_step([1.0, 2.0], [1.0 + 5e-7, 2.0 - 5e-7], FreezeMask.active(2), WOCC)
        assert stop

    def test_input_mask_untouched(self):
        mask = FreezeMask.active(2)
        governor_step([0.0, 0.0], [0.0, 0.0], mask, WCC)
        assert not mask.frozen.any()

    def test_nan_aborts(self):
        with pytest.raises(DivergenceError):
            governor_step([0.0, 0.0], [np.nan, 0.0], FreezeMask.active(2), WCC)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            governor_step([0.0], [0.0, 1.0], FreezeMask.active(2), WCC)

    def test_frozen_entries_ignored(self):
        mask = FreezeMask.active(2)
        mask.frozen[1] = True
        _, stop = governor_step([0.0, 0.0], [0.0, 5.0], mask, WCC)
        assert stop


@pytest.mark.parametrize(
    "kwargs", [dict(epsilon=0.0), dict(epsilon=-1.0), dict(max_iter=0), dict(tdelay=-0.1), dict(mode="XYZ")]
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        GovernorConfig(**kwargs)


def test_config_with():
    cfg = WOCC.with_(mode="WCC", max_iter=7)
    assert cfg.mode is Mode.WCC and cfg.max_iter == 7 and cfg.epsilon == 1e-6


class TestGovernorDriver:
    def test_pins_frozen_and_counts(self):
        gov = Governor(WCC, 3, receivers=[1, 2, 3])
        prev = np.zeros(3)
        curr = np.array([1e-7, 1.0, 1.0])
        gov.step(prev, curr)
        assert curr[0] == 0.0  # pinned to the previous iterate
        assert gov._floats == [5]
        curr2 = np.array([0.5, 1.0, 1.5])
        gov.step(curr.copy(), curr2)
        assert curr2[0] == 0.0
        assert gov.mask.frozen.tolist() == [True, True, False]
        assert gov._floats == [5, 3]

    def test_divergence(self):
        gov = Governor(WOCC, 1)
        with pytest.raises(DivergenceError):
            gov.step(np.zeros(1), np.array([1e13]))

    def test_max_iter_cap(self):
        gov = Governor(WOCC.with_(max_iter=3), 1)
        x = np.zeros(1)
        while not gov.done:
            gov.step(x, x + 1.0)
            x = x + 1.0
        tr = gov.trace("t", x)
        assert tr.iterations == 3 and not tr.converged

    def test_clock_accumulates(self):
        gov = Governor(WOCC, 1)
        for _ in range(2):
            with gov.clock():
                sum(range(1000))
        gov.step(np.zeros(1), np.ones(1))
        tr = gov.trace("t", np.ones(1))
        assert tr.cb_seconds > 0 and tr.parallel_seconds <= tr.cb_seconds
        assert tr.cumulative_cb[-1] == tr.cb_seconds


class TestCommVolume:
    def test_toy_all_active(self, toy_views):
        assert comm_volume(FreezeMask.active(2), toy_views) == 2

    def test_all_frozen(self, toy_views):
        m = FreezeMask.active(2)
        m.frozen[:] = True
        assert comm_volume(m, toy_views) == 0

    def test_half_frozen(self, case1_views):
        full = comm_volume(FreezeMask.active(13), case1_views)
        shared = sorted({s for v in case1_views for s in v.replicated})
        m = FreezeMask.active(13)
        m.frozen[shared[::2]] = True
        remaining = [s for s in shared if not m.frozen[s]]
        per_state = {s: sum(s in v.replicated for v in case1_views) for s in shared}
        assert comm_volume(m, case1_views) == sum(per_state[s] for s in remaining) < full


class TestOverallTime:
    def test_table_cells(self):
        assert overall_time(40, 2.87, 0.5) == pytest.approx(22.87, abs=1e-12)
        assert round(overall_time(213, 0.38293, 0.5), 2) == 106.88

    def test_zero_iterations(self):
        assert overall_time(0, 1.25, 0.5) == 1.25

    def test_negative(self):
        with pytest.raises(ValueError):
            overall_time(-1, 0.0)


class TestSolutionMetrics:
    def test_identical(self):
        assert solution_metrics(np.ones(4), np.ones(4)) == (0.0, 0.0)

    def test_arithmetic(self):
        e1, e2 = solution_metrics(np.zeros(3), np.array([0.1, -0.2, 0.05]))
        assert e1 == pytest.approx(0.35) and e2 == pytest.approx(0.2)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            solution_metrics(np.zeros(3), np.zeros(4))

    @given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e3, 1e3)))
    def test_norm_inequality(self, d):
        e1, e2 = solution_metrics(np.zeros_like(d), d)
        assert e2 <= e1 + 1e-12 <= d.size * e2 + 2e-12


@pytest.mark.parametrize("method", METHODS)
def test_trace_invariants(method, ieee14_model, case1_views):
    z = simulate_measurements(ieee14_model, 3)
    cap = 3000
    wcc = run_method(method, ieee14_model, case1_views, z, governor_for(method, 1e-6, "WCC", max_iter=cap), seed=3, history_every=1)
    wocc = run_method(method, ieee14_model, case1_views, z, governor_for(method, 1e-6, "WOCC", max_iter=cap), seed=3)

    # monotone freezing and frozen-value immutability
    assert np.all(np.diff(wcc.frozen_count) >= 0)
    hist = np.array(wcc.history)
    at = wcc.mask.frozen_at
    for e in np.flatnonzero(wcc.mask.frozen):
        assert np.all(hist[at[e] - 1:, e] == hist[at[e] - 1, e])
    assert wcc.iterations <= cap

    # WOCC never freezes; a converged WOCC run saw a final change of at most epsilon
    assert not wocc.mask.frozen.any()
    if wocc.converged:
        assert wocc.max_delta[-1] <= 1e-6
    assert wcc.total_floats <= wocc.total_floats
    if method != "gossip":  # gossip activates a random pair per round
        assert np.all(np.diff(wcc.floats_sent) <= 0)


def test_trace_csv(tmp_path, toy_model, toy_views):
    z = toy_model.true_values
    tr = run_method("admm", toy_model, toy_views, z, governor_for("admm", 1e-6, "WCC"))
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["iteration", "max_delta", "frozen_count", "floats_sent", "cumulative_cb_seconds"]
    assert len(rows) == tr.iterations + 1
    assert [int(r[0]) for r in rows[1:]] == list(range(1, tr.iterations + 1))
