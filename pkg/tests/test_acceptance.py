"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The long Monte Carlo runs are marked ``slow`` but are part of the default
run.  ``pytest tests/test_acceptance.py -v`` shows the criterion lines.
"""

import time
from fractions import Fraction

import pytest

from lenglart.cli import execute
from lenglart.config import RunConfig
from lenglart.identities import residual
from lenglart.mc import DriftTestConfig, drift_test
from lenglart.models import RngStream, build_continuous_control
from lenglart.tolerances import tol_c


@pytest.fixture
def say(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def _run(**kw):
    started = time.perf_counter()
    report, _ = execute(RunConfig(**kw))
    return report, time.perf_counter() - started


def _checks(report):
    return {c["name"]: c for c in report["checks"]}


@pytest.fixture(scope="module")
def sec5_1():
    return _run(preset="sec5-1", paths=1_000_000)[0]


@pytest.fixture(scope="module")
def finite():
    return _run(preset="dimension-finite")


# ----------------------------------------------------------------------

def test_criterion_1_strong_orth_exact(say):
    _run(preset="strong-orth")  # warm the sympy and numpy code paths
    report, secs = _run(preset="strong-orth", p=Fraction(3, 10))
    c = _checks(report)
    ok = (report["passed"] and secs < 1.0
          and c["compensator_jump_X"]["value"] == "-3/20"
          and c["bracket_jump_e0+"]["value"] == "-3/20"
          and c["bracket_jump_e0-"]["value"] == "3/20"
          and c["Xhat_Q_martingale"]["value"] == "0" and c["Yhat_Q_martingale"]["value"] == "0"
          and c["verdict"]["value"] == "not strongly orthogonal under Q")
    assert say(1, ok, f"compensator jump {c['compensator_jump_X']['value']}, "
                      f"bracket jumps {c['bracket_jump_e0+']['value']} / "
                      f"{c['bracket_jump_e0-']['value']}, {c['verdict']['value']}, {secs:.3f} s")


@pytest.mark.slow
def test_criterion_2_sqrt_pi(say, sec5_1):
    c = _checks(sec5_1)
    ident, quad, mc = c["bracket_sqrt_identity"], c["sqrt_pi_quadrature"], c["sqrt_pi_mc"]
    ok = (ident["passed"] and ident["value"] <= 1e-12
          and abs(quad["value"] - 1.772454) <= 1e-6
          and mc["passed"] and mc["detail"]["relative_error"] <= 0.05
          and sec5_1["settings"]["estimator"] == "median_of_means")
    assert say(2, ok, f"identity max err {ident['value']:.2e}, quadrature {quad['value']:.7f}, "
                      f"median-of-means {mc['value']:.4f} (rel err {mc['detail']['relative_error']:.4f})")


@pytest.mark.slow
def test_criterion_3_divergence(say, sec5_1):
    c = _checks(sec5_1)
    trunc, growth = c["truncated_mean_vs_quadrature"], c["growth_per_decade"]
    ok = (trunc["passed"] and max(trunc["detail"]["relative_errors"]) <= 0.05
          and growth["passed"] and all(abs(g - 2.30) <= 0.05 for g in growth["value"]))
    assert say(3, ok, f"max rel err {max(trunc['detail']['relative_errors']):.4f}, growth per decade "
                      + ", ".join(f"{g:.4f}" for g in growth["value"]))


@pytest.mark.slow
def test_criterion_4_closed_form_and_q_drift(say, sec5_1):
    c = _checks(sec5_1)
    rep = next(r for r in sec5_1["reports"] if r["test_id"] == "Xhat")
    ok = (c["xhat_closed_form"]["value"] <= 1e-10 and rep["passed"]
          and rep["measure"] == "Q" and rep["estimator"] == "median_of_means"
          and rep["n_paths"] >= 100_000 and rep["max_abs_z"] <= 4)
    assert say(4, ok, f"closed form max err {c['xhat_closed_form']['value']:.2e} on "
                      f"{rep['n_paths']} paths, Q drift max|z| {rep['max_abs_z']:.2f}")


@pytest.mark.slow
def test_criterion_5_classical(say, sec5_1):
    refused = _checks(sec5_1)["classical_not_applicable"]
    n = 1000
    r = residual("classical_vs_lenglart", n, seed=2024)
    ok = refused["passed"] and r <= tol_c("classical_vs_lenglart", n)
    assert say(5, ok, f"sec5-1 refused ({refused['value'][:50]}...), continuous residual "
                      f"{r:.2e} <= {tol_c('classical_vs_lenglart', n):.2e}")


@pytest.mark.slow
def test_criterion_6_identities(say):
    report, secs = _run(preset="identities")
    c = _checks(report)
    wanted = ["ito_jumps_sec5_1", "ito_continuous", "ito_fv_sec5_1", "commutation",
              "roundtrip_sec5_1", "roundtrip_continuous", "roundtrip_usual"]
    ok = report["passed"] and all(c[w]["passed"] for w in wanted)
    assert say(6, ok, ", ".join(f"{w} {c[w]['value']:.1e}" for w in wanted) + f" ({secs:.1f} s)")


@pytest.mark.slow
def test_criterion_7_representation(say, sec5_1, finite):
    fc = _checks(finite[0])
    sc = _checks(sec5_1)
    ok = (fc["finite_mrp_residual"]["value"] == 0 and fc["finite_mrp_negative_control"]["passed"]
          and sc["representation"]["passed"] and sc["representation_negative_control"]["passed"])
    assert say(7, ok, f"finite residual {fc['finite_mrp_residual']['value']}, "
                      f"sec5-1 residual {sc['representation']['value']:.2e} <= "
                      f"{sc['representation']['tolerance']:.2e}, negative controls "
                      f"{fc['finite_mrp_negative_control']['value']} / "
                      f"{sc['representation_negative_control']['value']:.2f}")


@pytest.mark.slow
def test_criterion_8_usual_orth(say):
    report, secs = _run(preset="usual-orth", paths=100_000)
    c = _checks(report)
    v = report["expected_failures"][0]
    vc = next(r for r in report["reports"] if r["test_id"] == "V_compensated")
    ok = (c["bracket_identity"]["passed"] and v["max_abs_z"] > 4 and vc["passed"]
          and vc["n_paths"] == 100_000)
    assert say(8, ok, f"bracket residual {c['bracket_identity']['value']:.3f} <= "
                      f"{c['bracket_identity']['tolerance']:.3f}, V max|z| {v['max_abs_z']:.1f}, "
                      f"compensated V max|z| {vc['max_abs_z']:.2f} ({secs:.0f} s)")


def test_criterion_9_finite_inequalities(say, finite):
    report, secs = finite
    c = _checks(report)
    bayes, dims = c["bayes_equivalence"], c["dimension_inequality"]
    ok = (bayes["value"] == 0 and bayes["detail"]["processes"] == 50
          and dims["value"] == 0
          and dims["detail"]["reweightings"] == 20 and secs < 10)
    assert say(9, ok, f"Bayes counterexamples {c['bayes_equivalence']['value']}/50, dimension "
                      f"counterexamples {c['dimension_inequality']['value']}/20, {secs:.2f} s")


@pytest.mark.slow
def test_criterion_10_calibration(say):
    cps = (0.25, 0.5, 0.75, 1.0)
    cfg = DriftTestConfig(checkpoints=cps)
    paths, chunk = 100_000, 50_000

    def batches(seed):
        return [build_continuous_control(1.0, 4, RngStream(seed, i), paths=chunk,
                                         first_id=i * chunk)
                for i in range(paths // chunk)]

    def drifted(scn):
        X = scn["X"]
        return X.with_data(X.values + 0.5 * X.times, X.left_limits + 0.5 * X.times)

    passed = failed = 0
    for seed in range(100):
        b = batches(seed)
        passed += drift_test("X", b, "P", cfg).passed
        failed += not drift_test(drifted, b, "P", cfg, test_id="drift").passed
    ok = passed >= 95 and failed == 100
    assert say(10, ok, f"Brownian passes {passed}/100 seeds, drift 0.5 fails {failed}/100 "
                       f"({paths} paths per seed)")
