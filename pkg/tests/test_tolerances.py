import math

import pytest

from lenglart.identities import CHECKS, EXACT_CHECKS, residual
from lenglart.tolerances import EXACT, FLOOR, calibration_info, constants, tol_c

UNSEEN_SEEDS = (41, 977)


def test_every_check_has_a_constant():
    assert set(constants()) == set(CHECKS)
    assert all(c > 0 for c in constants().values())


def test_rate_and_floor():
    C = constants()["brownian_qv"]
    assert tol_c("brownian_qv", 400) == pytest.approx(C / 20)
    assert tol_c("brownian_qv", 1600) == pytest.approx(tol_c("brownian_qv", 400) / 2)
    assert tol_c("commutation", 10**6) == FLOOR


def test_unknown_check():
    with pytest.raises(KeyError):
        tol_c("nope", 100)


def test_calibration_metadata():
    info = calibration_info()
    for entry in info["checks"].values():
        assert entry["C"] == pytest.approx(4 * entry["max_scaled_residual"])


@pytest.mark.parametrize("check", sorted(CHECKS))
@pytest.mark.parametrize("seed", UNSEEN_SEEDS)
def test_budget_holds_at_unseen_seeds(check, seed):
    n = 1000
    assert residual(check, n, seed) <= tol_c(check, n)


@pytest.mark.parametrize("check", sorted(EXACT_CHECKS))
@pytest.mark.parametrize("n", [1, 10, 1000])
def test_exact_checks_hold_on_any_grid(check, n):
    assert residual(check, n, seed=UNSEEN_SEEDS[0]) <= EXACT


def test_residual_shrinks_with_grid():
    coarse = residual("brownian_qv", 250, seed=UNSEEN_SEEDS[1], paths=50)
    fine = residual("brownian_qv", 16_000, seed=UNSEEN_SEEDS[1], paths=50)
    assert fine < coarse / 3
    assert fine * math.sqrt(16_000) <= constants()["brownian_qv"]
