"""Discretization budgets ``tol_c(n) = C n^{-1/2}``.

The constants ``C`` live in ``data/tol_c.json`` and are produced by
``python -m lenglart.calibrate``: for each check, ``C`` is four times the
largest ``residual * sqrt(n)`` seen over the calibration seeds and grids.
A tolerance never drops below ``FLOOR`` so that checks which are exact up
to rounding are not held to a budget smaller than float precision.
"""

from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources

FLOOR = 1e-10
EXACT = 1e-10


@lru_cache(maxsize=1)
def _table() -> dict:
    text = resources.files("lenglart").joinpath("data/tol_c.json").read_text()
    return json.loads(text)


def constants() -> dict[str, float]:
    return {k: float(v["C"]) for k, v in _table()["checks"].items()}


def tol_c(check: str, n: int) -> float:
    """Budget for ``check`` on a base grid of ``n`` steps."""
    try:
        C = float(_table()["checks"][check]["C"])
    except KeyError:
        raise KeyError(f"no calibrated constant for {check!r}") from None
    return max(C / math.sqrt(n), FLOOR)


def calibration_info() -> dict:
    return dict(_table())
