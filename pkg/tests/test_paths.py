import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lenglart.errors import InconsistentLeftLimit, NonMonotoneTimes
from lenglart.models import RngStream, simulate_brownian, simulate_poisson
from lenglart.paths import (
    CadlagPath,
    StoppingTimeObs,
    align,
    concat_batches,
    make_path,
    read_csv,
    stop,
    write_csv,
)

from conftest import event_times, jump_path


def test_constant_path_has_no_jumps():
    p = make_path([0, 1], [2.5, 2.5], [2.5, 2.5], [False, False])
    assert np.all(p.jumps == 0)
    assert np.all(p.continuous_increments == 0)


def test_single_unit_jump_at_one():
    p = make_path([0, 1], [1, 2], [1, 1], [False, True])
    np.testing.assert_array_equal(p.values, [1, 2])
    np.testing.assert_array_equal(p.left_limits, [1, 1])
    assert p.jumps[1] == 1 and p.jump_flags[1]
    assert p.value_at(1.0) == 2 and p.left_limit_at(1.0) == 1


def test_duplicate_times_rejected():
    with pytest.raises(NonMonotoneTimes):
        make_path([0, 0.5, 0.5], [0, 0, 0], [0, 0, 0], [False] * 3)


def test_times_must_start_at_zero():
    with pytest.raises(NonMonotoneTimes):
        make_path([0.1, 0.5], [0, 0], [0, 0], [False, False])


def test_unflagged_jump_rejected():
    with pytest.raises(InconsistentLeftLimit):
        make_path([0, 1], [0, 1], [0, 0], [False, False])


def test_paths_are_read_only():
    p = make_path([0, 1], [0, 1], [0, 0], [False, True])
    with pytest.raises(ValueError):
        p.values[0] = 3.0


def test_lookup_between_grid_points_carries_forward():
    p = make_path([0, 0.5, 1], [0, 1, 3], [0, 0, 1], [False, True, True])
    assert p.value_at(0.7) == 1
    assert p.left_limit_at(0.7) == 1
    assert p.left_limit_at(1.0) == 1


def test_stop_at_infinity_is_identity():
    p = jump_path([0, 0.3, 1], [1.0, -2.0])
    s = stop(p, np.inf)
    np.testing.assert_array_equal(s.values, p.values)
    np.testing.assert_array_equal(s.left_limits, p.left_limits)


def test_stop_at_zero_is_constant():
    p = jump_path([0, 0.3, 1], [1.0, -2.0], x0=4.0)
    s = stop(p, 0.0)
    assert np.all(s.values == 4.0) and np.all(s.left_limits == 4.0)


def test_poisson_stopped_at_first_jump_is_one_afterwards():
    ps = simulate_poisson(1.0, 5.0, RngStream(3, 0), paths=200, n=10)
    tau = ps.tau1
    s = stop(ps.N, tau)
    t = s.times
    tv = np.asarray(tau.value)[:, None]
    after = t >= tv
    assert np.all(s.values[after] == 1.0)
    assert np.all(s.values[~after] == 0.0)


def test_stop_inserts_missing_time():
    p = jump_path([0, 0.5, 1], [1.0, 1.0], drift=0.0)
    s = stop(p, 0.25)
    assert 0.25 in s.times
    assert np.all(s.values == 0.0)


def test_align_single_path_keeps_data():
    p = jump_path([0, 0.3, 1], [1.0, 2.0])
    panel = align([p])
    np.testing.assert_array_equal(panel["0"].values, p.values)


def test_align_disjoint_jump_times():
    a = jump_path([0, 0.3, 1], [1.0, 0.0])
    b = jump_path([0, 0.7, 1], [2.0, 0.0])
    panel = align({"a": a, "b": b})
    np.testing.assert_array_equal(panel.times, [0, 0.3, 0.7, 1])
    np.testing.assert_array_equal(panel["a"].values, [0, 1, 1, 1])
    np.testing.assert_array_equal(panel["b"].values, [0, 0, 2, 2])
    assert panel["a"].jumps[2] == 0 and panel["b"].jumps[1] == 0


def test_stopping_time_kinds():
    assert StoppingTimeObs.never().kind == "never"
    with pytest.raises(ValueError):
        StoppingTimeObs(np.inf, "jump")
    with pytest.raises(ValueError):
        StoppingTimeObs(-1.0)


def test_csv_round_trip_single(tmp_path):
    p = jump_path([0, 0.25, 0.5, 1], [1.0, -0.5, 2.0], x0=0.1)
    f = tmp_path / "p.csv"
    write_csv(p, f)
    assert f.read_text().splitlines()[0] == "time,left_limit,value,jump_flag"
    q = read_csv(f, fv_continuous=True)
    np.testing.assert_array_equal(q.values, p.values)
    np.testing.assert_array_equal(q.left_limits, p.left_limits)
    np.testing.assert_array_equal(q.jump_flags, p.jump_flags)


def test_csv_round_trip_batch(tmp_path):
    ps = simulate_poisson(2.0, 1.0, RngStream(1, 0), paths=4, n=5)
    f = tmp_path / "b.csv"
    write_csv(ps.M, f)
    q = read_csv(f)
    np.testing.assert_array_equal(q.values, ps.M.values)
    np.testing.assert_array_equal(q.times, ps.M.times)


def test_concat_batches_stacks_rows():
    a = simulate_brownian(1.0, 8, RngStream(2, 0), paths=2)
    b = simulate_brownian(1.0, 8, RngStream(2, 1), paths=3)
    both = concat_batches([a, b])
    assert both.batch_shape == (5,)
    np.testing.assert_array_equal(both.values[2:], b.values)


# ----------------------------------------------------------------------
# properties

@st.composite
def paths(draw):
    times = draw(event_times())
    k = len(times) - 1
    jumps = draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=k, max_size=k))
    drift = draw(st.floats(-2, 2, allow_nan=False))
    return jump_path(times, jumps, x0=draw(st.floats(-3, 3)), drift=drift)


@given(paths())
def test_lookup_consistency(p):
    for k, t in enumerate(p.times):
        assert p.value_at(t) == p.values[k]
        assert p.left_limit_at(t) == p.left_limits[k]


@given(paths(), st.floats(0, 1.5, allow_nan=False))
def test_stop_is_idempotent(p, sigma):
    once = stop(p, sigma)
    twice = stop(once, sigma)
    np.testing.assert_array_equal(once.times, twice.times)
    np.testing.assert_array_equal(once.values, twice.values)
    np.testing.assert_array_equal(once.left_limits, twice.left_limits)


@given(paths(), paths(), paths())
def test_align_idempotent_and_order_free(a, b, c):
    p1 = align({"a": a, "b": b, "c": c})
    p2 = align({"c": c, "a": a, "b": b})
    for n in "abc":
        np.testing.assert_array_equal(p1[n].values, p2[n].values)
        np.testing.assert_array_equal(p1[n].left_limits, p2[n].left_limits)
    p3 = align(p1.components)
    np.testing.assert_array_equal(p3.times, p1.times)
    for n in "abc":
        np.testing.assert_array_equal(p3[n].values, p1[n].values)


@given(paths(), paths())
def test_alignment_preserves_lookups(a, b):
    panel = align({"a": a, "b": b})
    for t in panel.times:
        assert panel["a"].value_at(t) == a.value_at(t)
        assert panel["a"].left_limit_at(t) == a.left_limit_at(t)
