import math

import numpy as np
import pytest
from scipy import stats

from lenglart.calculus import quadratic_covariation, stochastic_integral
from lenglart.errors import BadHorizon
from lenglart.models import (
    RngStream,
    build_continuous_control,
    build_killed_exponential,
    build_sec5_1,
    build_usual_orth,
    event_grid,
    simulate_brownian,
    simulate_poisson,
    stochastic_exponential,
)
from lenglart.tolerances import tol_c

from conftest import jump_path


# ----------------------------------------------------------------------
# generators

def test_one_step_brownian_is_normal_with_variance_T():
    W = simulate_brownian(2.0, 1, RngStream(11, 0), paths=20_000)
    x = W.values[:, -1]
    assert stats.kstest(x / math.sqrt(2.0), "norm").pvalue > 1e-3


def test_brownian_terminal_mean_clt_bound():
    W = simulate_brownian(1.0, 4, RngStream(12, 0), paths=100_000)
    assert abs(W.values[:, -1].mean()) <= 4 * 1.0 / 10 ** 2.5


def test_generators_are_deterministic():
    a = simulate_brownian(1.0, 50, RngStream(5, 2), paths=3)
    b = simulate_brownian(1.0, 50, RngStream(5, 2), paths=3)
    assert a.values.tobytes() == b.values.tobytes()
    c = simulate_brownian(1.0, 50, RngStream(5, 3), paths=3)
    assert not np.array_equal(a.values, c.values)


def test_poisson_survival_law():
    T = 0.7
    ps = simulate_poisson(1.0, T, RngStream(13, 0), paths=100_000, n=1)
    surv = np.asarray(ps.tau1.value) > T
    se = math.sqrt(math.exp(-T) * (1 - math.exp(-T)) / surv.size)
    assert abs(surv.mean() - math.exp(-T)) <= 4 * se


def test_compensated_poisson_construction():
    ps = simulate_poisson(1.5, 2.0, RngStream(14, 0), paths=50, n=20)
    assert np.all(ps.M.values[:, 0] == 0)
    np.testing.assert_allclose(ps.M.jumps.sum(axis=-1), ps.N.values[:, -1])


def test_compensated_poisson_mean_zero():
    ps = simulate_poisson(1.0, 1.0, RngStream(15, 0), paths=100_000, n=1)
    mt = ps.M.values[:, -1]
    assert abs(mt.mean()) <= 4 * mt.std(ddof=1) / math.sqrt(mt.size)


def test_event_grid_contains_events_and_extras():
    ev = np.array([[0.2, 0.9], [0.5, 3.0]])
    times, flags = event_grid(1.0, 4, ev, extra=[0.33])
    for r in range(2):
        for e in ev[r]:
            if e <= 1.0:
                assert e in times[r] and flags[r][times[r] == e][0]
        assert 0.33 in times[r]
    assert np.all(np.diff(times, axis=-1) > 0)


# ----------------------------------------------------------------------
# stochastic exponential

def test_exponential_of_zero_is_one():
    z = jump_path([0, 0.5, 1], [0.0, 0.0])
    e = stochastic_exponential(z)
    assert np.all(e.values == 1.0)


def test_usual_orth_closed_forms():
    n = 2000
    s = build_usual_orth(1.0, n, RngStream(101, 7), paths=40)
    tol = tol_c("stoch_exp_usual", n)
    for name in ("X", "Y"):
        sim, cf = s[name].values, s.closed_forms[name].values
        pos = cf > 0
        rel = np.abs(sim[pos] / cf[pos] - 1)
        assert rel.max() <= tol


def test_usual_orth_y_vanishes_at_first_jump():
    s = build_usual_orth(1.0, 200, RngStream(3, 3), paths=200)
    tau = np.asarray(s.stopping_times["tau"].value)
    t = s["Y"].times
    after = t >= tau[:, None]
    assert np.all(s["Y"].values[after] == 0.0)
    assert np.all(s["Y"].values[~after] > 0) and np.all(s["X"].values > 0)


def test_usual_orth_jump_sizes_at_tau():
    s = build_usual_orth(1.0, 200, RngStream(4, 3), paths=200)
    tau = np.asarray(s.stopping_times["tau"].value)
    hit = tau <= 1.0
    X, Y = s["X"], s["Y"]
    at = X.times == tau[:, None]
    np.testing.assert_allclose(X.jumps[at], X.left_limits[at], rtol=1e-12)
    np.testing.assert_allclose(Y.jumps[at], -Y.left_limits[at], rtol=1e-12)
    assert at.sum() == hit.sum()


def test_usual_orth_bracket_identity():
    from lenglart.calculus import IntegrandPath, relative_row_sup

    n = 2000
    s = build_usual_orth(1.0, n, RngStream(102, 9), paths=40)
    X, Y = s["X"], s["Y"]
    res = quadratic_covariation(X, Y) + stochastic_integral(IntegrandPath(X * Y), s["M"])
    assert relative_row_sup(res, X * Y) <= tol_c("usual_bracket", n)


# ----------------------------------------------------------------------
# the single-jump scenario

@pytest.fixture(scope="module")
def sec():
    return build_sec5_1(0.25, 3, RngStream(21, 0), paths=4000, horizon=30.0)


def test_sec5_1_x_matches_closed_form_exactly(sec):
    X, cf = sec["X"], sec.closed_forms["X"]
    assert np.max(np.abs(X.values - cf.values)) <= 1e-12
    assert np.max(np.abs(X.left_limits - cf.left_limits)) <= 1e-12


def test_sec5_1_density_is_one_plus_stopped_integral(sec):
    Z = sec["Z"]
    HX = stochastic_integral(sec.integrands["H"], sec["X"])
    assert np.max(np.abs(Z.values - (1.0 + HX.values))) <= 1e-12


def test_sec5_1_density_dies_exactly_when_no_jump_by_quarter(sec):
    tau = np.asarray(sec.stopping_times["tau1"].value)
    zT = np.asarray(sec["Z"].value_at(0.25))
    assert np.all(zT[tau > 0.25] == 0.0)
    assert np.all(zT[tau <= 0.25] > 0.0)


def test_sec5_1_bracket_square_root_identity(sec):
    tau = np.asarray(sec.stopping_times["tau1"].value)
    qv = quadratic_covariation(sec["X"], sec["X"]).values[:, -1]
    ok = tau <= 30.0
    assert np.max(np.abs(np.sqrt(qv[ok]) - 1 / np.sqrt(tau[ok]))) <= 1e-12


def test_sec5_1_rejects_long_horizon():
    with pytest.raises(BadHorizon):
        build_sec5_1(0.3)


def test_killed_exponential_density_jumps_to_zero():
    s = build_killed_exponential(2.0, 50, RngStream(8, 0), paths=300)
    tau = np.asarray(s.stopping_times["tau"].value)
    Z = s["Z"]
    after = Z.times >= tau[:, None]
    assert np.all(Z.values[after] == 0.0)
    before = ~after
    np.testing.assert_allclose(Z.values[before], np.exp(Z.times[before]), rtol=1e-9)


def test_continuous_control_density_closed_form():
    s = build_continuous_control(1.0, 100, RngStream(9, 0), paths=10, theta=0.5)
    W, Z = s["X"], s["Z"]
    np.testing.assert_allclose(Z.values, np.exp(0.5 * W.values - 0.125 * W.times))
