import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lenglart.errors import DegenerateSE
from lenglart.mc import (
    DriftTestConfig,
    covariation_martingale_test,
    drift_test,
    estimator,
    parse_estimator,
)
from lenglart.models import (
    RngStream,
    Scenario,
    build_continuous_control,
    build_independent_jumps,
    build_sec5_1,
)
from lenglart.paths import CadlagPath, align

CFG = DriftTestConfig(checkpoints=(0.25, 0.5, 0.75, 1.0))


def _chunks(builder, seed, total, size, n=4, **kw):
    return [builder(1.0, n, RngStream(seed, i), paths=min(size, total - s), first_id=s,
                    checkpoints=CFG.checkpoints, **kw)
            for i, s in enumerate(range(0, total, size))]


def _drifted(c):
    def target(scn):
        X = scn["X"]
        return X.with_data(X.values + c * X.times, X.left_limits + c * X.times)
    return target


# ----------------------------------------------------------------------
# estimators

def test_parse_estimator():
    assert parse_estimator("mean") == ("mean", 1)
    assert parse_estimator("median_of_means") == ("median_of_means", 32)
    assert parse_estimator("median_of_means(8)") == ("median_of_means", 8)
    for bad in ("median", "median_of_means(0)", "median_of_means(x)"):
        with pytest.raises(ValueError):
            parse_estimator(bad)


@pytest.mark.parametrize("mode", ["mean", "median_of_means"])
def test_constant_samples(mode):
    assert estimator(mode, np.full(320, 2.5)) == (2.5, 0.0)


def test_mean_of_normal_samples_within_clt_bound():
    x = np.random.default_rng(8).normal(0.3, 2.0, 100_000)
    m, se = estimator("mean", x)
    assert se == pytest.approx(2.0 / math.sqrt(1e5), rel=0.02)
    assert abs(m - 0.3) <= 4 * se


def test_median_of_means_se_matches_spread_of_repeats():
    rng = np.random.default_rng(9)
    est = [estimator("median_of_means(32)", rng.normal(size=3200)) for _ in range(400)]
    vals = np.array([e[0] for e in est])
    ses = np.array([e[1] for e in est])
    assert np.median(ses) == pytest.approx(vals.std(), rel=0.25)


def test_median_of_means_needs_k_samples():
    with pytest.raises(ValueError):
        estimator("median_of_means", np.ones(10))


# ----------------------------------------------------------------------
# drift tests

def test_config_validation():
    for bad in [dict(checkpoints=()), dict(checkpoints=(0.5, 0.25)), dict(checkpoints=(0.0, 1.0)),
                dict(checkpoints=(1.0,), z_max=0), dict(checkpoints=(1.0,), functionals=("x",)),
                dict(checkpoints=(1.0,), estimator="median")]:
        with pytest.raises(ValueError):
            DriftTestConfig(**bad)
    with pytest.raises(ValueError):
        DriftTestConfig(checkpoints=(2.0,)).check_horizon(1.0)


def test_brownian_passes_and_drift_fails():
    batches = _chunks(build_continuous_control, 50, 20_000, 5_000)
    ok = drift_test("X", batches, "P", CFG)
    assert ok.passed
    bad = drift_test(_drifted(0.5), batches, "P", CFG, test_id="drift")
    assert not bad.passed and bad.max_abs_z > 20


def test_q_drift_of_density_tilted_brownian():
    batches = _chunks(build_continuous_control, 51, 20_000, 10_000)
    assert not drift_test("X", batches, "Q", CFG).passed
    assert drift_test(_drifted(-0.5), batches, "Q", CFG, test_id="Xprime").passed


def test_reports_do_not_depend_on_chunking_or_order():
    one = build_continuous_control(1.0, 4, RngStream(52, 0), paths=3000,
                                   checkpoints=CFG.checkpoints)

    def piece(lo, hi):
        comps = {n: CadlagPath(p.times[lo:hi], p.values[lo:hi], p.left_limits[lo:hi],
                               p.jump_flags[lo:hi]) for n, p in one.panel.components.items()}
        return Scenario(align(comps), 1.0, one.meta, path_ids=np.arange(lo, hi))

    a = drift_test("X", [one], "P", CFG)
    b = drift_test("X", [piece(2000, 3000), piece(0, 700), piece(700, 2000)], "P", CFG)
    assert json.dumps(a.to_dict()["cells"]) == json.dumps(b.to_dict()["cells"])


def test_repeated_ids_are_rejected():
    s = build_continuous_control(1.0, 4, RngStream(53, 0), paths=10, checkpoints=CFG.checkpoints)
    with pytest.raises(ValueError):
        drift_test("X", [s, s], "P", CFG)


def test_degenerate_cell_raises():
    s = build_continuous_control(1.0, 4, RngStream(54, 0), paths=100, checkpoints=CFG.checkpoints)
    clock = lambda scn: scn["X"].with_data(scn["X"].times, scn["X"].times)
    with pytest.raises(DegenerateSE):
        drift_test(clock, s, "P", DriftTestConfig(checkpoints=(0.5, 1.0), functionals=("const",)),
                   test_id="clock")


def test_independent_jumps_product_and_bracket():
    batches = _chunks(build_independent_jumps, 55, 40_000, 10_000, n=1)
    assert covariation_martingale_test(("X", "Y"), batches, "P", CFG).passed
    assert covariation_martingale_test(("X", "Y"), batches, "P", CFG, target="bracket").passed


def test_brownian_pair_bracket_is_martingale():
    batches = _chunks(build_continuous_control, 56, 20_000, 5_000, n=200)
    rep = covariation_martingale_test(("X", "X2"), batches, "P", CFG, target="product")
    assert rep.passed


def test_heavy_tail_warning():
    s = build_sec5_1(0.25, 1, RngStream(57, 0), paths=200, checkpoints=(0.125, 0.25))
    with pytest.warns(RuntimeWarning, match="heavy-tailed"):
        drift_test("X", s, "P", DriftTestConfig(checkpoints=(0.125, 0.25)))


def test_report_serialises():
    s = build_continuous_control(1.0, 4, RngStream(58, 0), paths=2000, checkpoints=CFG.checkpoints)
    rep = drift_test("X", s, "P", CFG)
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["passed"] == rep.passed and d["n_paths"] == 2000
    assert len(d["cells"]) == rep.functional_count == len(rep.csv_rows())
    assert "family-wise" in d["bonferroni"]
    # const and zbin cells in every window; sign cells from the second window on
    assert rep.functional_count == 4 * 4 + 3


# ----------------------------------------------------------------------
# properties

@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=60),
       st.floats(-10, 10, allow_nan=False), st.floats(0.1, 10, allow_nan=False))
def test_mean_is_affine_equivariant(xs, a, b):
    x = np.asarray(xs)
    m, se = estimator("mean", x)
    m2, se2 = estimator("mean", a + b * x)
    assert m2 == pytest.approx(a + b * m, abs=1e-9 * (1 + abs(a) + b * np.abs(x).max()))
    assert se2 == pytest.approx(b * se, rel=1e-9, abs=1e-9)
