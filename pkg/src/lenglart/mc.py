"""Monte Carlo martingale-drift tests.

For checkpoints ``0 = s_0 < s_1 < ... < s_m`` and a test functional ``g``
measurable at ``s_j``, a martingale ``M`` satisfies

    E[w (M_{s_{j+1}} - M_{s_j}) g] = 0,

with ``w = 1`` under ``P`` and ``w = Z_{s_{j+1}}`` for ``Q``-statistics
computed from ``P``-samples.  Each (window, functional) cell yields a
z-score; a report passes when every ``|z| <= z_max``.

Samples are kept per path id and sorted before reduction, so a report does
not depend on how the batch was chunked or ordered.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateSE

__all__ = [
    "DriftTestConfig",
    "TestReport",
    "CellResult",
    "drift_test",
    "covariation_martingale_test",
    "estimator",
    "parse_estimator",
    "FUNCTIONALS",
]

FUNCTIONALS = ("const", "sign", "zbin")
MAD_TO_SD = 1.4826


@dataclass(frozen=True)
class DriftTestConfig:
    checkpoints: tuple[float, ...]
    functionals: tuple[str, ...] = FUNCTIONALS
    z_max: float = 4.0
    batch: int = 100_000
    estimator: str = "mean"

    def __post_init__(self):
        cps = tuple(float(c) for c in self.checkpoints)
        if not cps or cps[0] <= 0 or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoints must be increasing times in (0, T]")
        if self.z_max <= 0:
            raise ValueError("z_max must be positive")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        bad = [f for f in self.functionals if f not in FUNCTIONALS]
        if bad:
            raise ValueError(f"unknown functionals {bad}")
        parse_estimator(self.estimator)
        object.__setattr__(self, "checkpoints", cps)
        object.__setattr__(self, "functionals", tuple(self.functionals))

    def check_horizon(self, T: float) -> None:
        if self.checkpoints[-1] > T + 1e-12:
            raise ValueError(f"checkpoint {self.checkpoints[-1]} beyond horizon {T}")


def parse_estimator(mode: str) -> tuple[str, int]:
    """``"mean"``, ``"median_of_means"`` (k = 32) or ``"median_of_means(k)"``."""
    if mode == "mean":
        return "mean", 1
    if mode == "median_of_means":
        return "median_of_means", 32
    if mode.startswith("median_of_means(") and mode.endswith(")"):
        k = int(mode[len("median_of_means("):-1])
        if k < 1:
            raise ValueError("k must be >= 1")
        return "median_of_means", k
    raise ValueError(f"unknown estimator {mode!r}")


def estimator(mode: str, samples, k: int | None = None) -> tuple[float, float]:
    """Location estimate and its standard error.

    ``mean``: sample mean and ``sd / sqrt(n)``.  ``median_of_means``: the
    median of ``k`` block means (the remainder ``n mod k`` is trimmed) and a
    standard error built from the median absolute deviation of the block
    means, ``1.4826 MAD sqrt(pi / (2k))``.
    """
    name, k0 = parse_estimator(mode)
    if k is not None:
        k0 = int(k)
    x = np.asarray(samples, dtype=float).reshape(-1)
    if name == "mean":
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
        return float(np.mean(x)), sd / math.sqrt(n)
    kk = k0
    m = (x.size // kk) * kk
    if m == 0:
        raise ValueError(f"need at least k={kk} samples")
    blocks = x[:m].reshape(kk, -1).mean(axis=1)
    med = float(np.median(blocks))
    mad = float(np.median(np.abs(blocks - med)))
    return med, MAD_TO_SD * mad * math.sqrt(math.pi / (2 * kk))


@dataclass
class CellResult:
    window: tuple[float, float]
    functional: str
    value: float
    se: float
    z: float
    n: int


@dataclass
class TestReport:
    test_id: str
    measure: str
    estimator: str
    z_max: float
    cells: list[CellResult]
    n_paths: int
    excluded: int
    seeds: list = field(default_factory=list)
    runtime: float = 0.0
    meta: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def passed(self) -> bool:
        return all(abs(c.z) <= self.z_max for c in self.cells)

    @property
    def max_abs_z(self) -> float:
        return max((abs(c.z) for c in self.cells), default=0.0)

    @property
    def functional_count(self) -> int:
        return len(self.cells)

    @property
    def bonferroni_note(self) -> str:
        p_one = math.erfc(self.z_max / math.sqrt(2))
        return (f"{self.functional_count} cells at z_max={self.z_max:g}: family-wise false "
                f"alarm rate <= {self.functional_count * p_one:.2e} under normality")

    def to_dict(self) -> dict:
        return {
            "test_id": self.test_id,
            "measure": self.measure,
            "estimator": self.estimator,
            "z_max": self.z_max,
            "passed": self.passed,
            "max_abs_z": self.max_abs_z,
            "n_paths": self.n_paths,
            "excluded_paths": self.excluded,
            "seeds": list(self.seeds),
            "bonferroni": self.bonferroni_note,
            "cells": [
                {"window": list(c.window), "functional": c.functional, "value": c.value,
                 "se": c.se, "z": c.z, "n": c.n}
                for c in self.cells
            ],
            "meta": self.meta,
        }

    def csv_rows(self) -> list[dict]:
        return [{"test_id": self.test_id, "measure": self.measure, "s": c.window[0],
                 "t": c.window[1], "functional": c.functional, "value": c.value,
                 "se": c.se, "z": c.z, "n": c.n, "passed": abs(c.z) <= self.z_max}
                for c in self.cells]


def _functional_values(name: str, M0, Ms, Zs) -> list[tuple[str, np.ndarray]]:
    if name == "const":
        return [("const", np.ones_like(Ms))]
    if name == "sign":
        return [("sign", np.sign(Ms - M0))]
    if Zs is None:
        return []
    return [("zbin<0.5", (Zs < 0.5).astype(float)),
            ("zbin[0.5,1.5)", ((Zs >= 0.5) & (Zs < 1.5)).astype(float)),
            ("zbin>=1.5", (Zs >= 1.5).astype(float))]


def _window_samples(M, Z, cfg: DriftTestConfig, measure: str):
    """Per-path samples for every (window, functional) cell of one batch."""
    grid = (0.0,) + cfg.checkpoints
    vals = [np.asarray(M.value_at(s), dtype=float).reshape(-1) for s in grid]
    zvals = None
    if Z is not None:
        zvals = [np.asarray(Z.value_at(s), dtype=float).reshape(-1) for s in grid]
    out = {}
    excluded = np.zeros(vals[0].shape, bool)
    for j in range(len(grid) - 1):
        inc = vals[j + 1] - vals[j]
        if measure == "Q":
            w = zvals[j + 1]
        else:
            w = np.ones_like(inc)
        for fname in cfg.functionals:
            for label, g in _functional_values(fname, vals[0], vals[j],
                                               zvals[j] if zvals is not None else None):
                if fname == "sign" and j == 0:
                    continue  # sign(M_0 - M_0) is identically zero
                s = w * inc * g
                live = w != 0
                bad = live & np.isnan(s)
                excluded |= bad
                s = np.where(live, s, 0.0)
                out[((grid[j], grid[j + 1]), label)] = s
    return out, excluded


def _as_batches(batches) -> Iterable:
    if hasattr(batches, "panel"):
        return [batches]
    return batches


def drift_test(component, batches, measure: str = "P", cfg: DriftTestConfig | None = None,
               test_id: str | None = None, density: str = "Z"):
    """Run drift tests on one or several target paths.

    ``component`` is a component name, or a callable taking a scenario and
    returning a path or a dict of named paths.  With a dict, the result is a
    dict of reports keyed by the same names.  ``batches`` is a scenario or an
    iterable of scenarios (chunks with disjoint path ids).
    """
    if measure not in ("P", "Q"):
        raise ValueError("measure must be 'P' or 'Q'")
    if cfg is None:
        raise ValueError("a DriftTestConfig is required")
    started = time.perf_counter()
    store: dict[str, dict] = {}
    ids: list[np.ndarray] = []
    excluded: dict[str, list] = {}
    seeds: set = set()
    multi = False
    meta: dict = {}
    for scn in _as_batches(batches):
        cfg.check_horizon(scn.horizon)
        if scn.meta.get("heavy_tailed") and parse_estimator(cfg.estimator)[0] == "mean":
            warnings.warn(f"scenario {scn.meta.get('model')!r} is heavy-tailed; plain mean "
                          "standard errors are unreliable, use median_of_means",
                          RuntimeWarning, stacklevel=2)
        if callable(component):
            got = component(scn)
        else:
            got = scn[component]
        if isinstance(got, Mapping):
            multi = True
            targets = dict(got)
        else:
            targets = {test_id or str(component): got}
        Z = scn[density] if density in scn.panel else None
        if measure == "Q" and Z is None:
            raise ValueError("Q-weighted tests need a density component")
        pid = scn.path_ids if scn.path_ids is not None else np.arange(scn.n_paths)
        ids.append(np.asarray(pid))
        seeds.add(int(scn.meta.get("seed", -1)))
        meta = {k: v for k, v in scn.meta.items() if k not in ("stream_id", "paths")}
        for name, path in targets.items():
            samples, exc = _window_samples(path, Z, cfg, measure)
            for key, s in samples.items():
                store.setdefault(name, {}).setdefault(key, []).append(s)
            excluded.setdefault(name, []).append(exc)
    if not ids:
        raise ValueError("no batches")
    all_ids = np.concatenate(ids)
    order = np.argsort(all_ids, kind="stable")
    if np.any(np.diff(all_ids[order]) == 0):
        raise ValueError("path ids repeat across batches")
    reports = {}
    for name, cells in store.items():
        exc = np.concatenate(excluded[name])[order]
        results = []
        for (window, label), parts in cells.items():
            s = np.concatenate(parts)[order]
            s = s[~exc]
            value, se = estimator(cfg.estimator, s)
            if se == 0:
                if value != 0:
                    raise DegenerateSE(f"zero standard error with mean {value} in {label} {window}")
                z = 0.0
            else:
                z = value / se
            results.append(CellResult(tuple(float(w) for w in window), label, float(value),
                                      float(se), float(z), int(s.size)))
        reports[name] = TestReport(name, measure, cfg.estimator, cfg.z_max, results,
                                   int(all_ids.size), int(exc.sum()), sorted(seeds),
                                   0.0, meta)
    runtime = time.perf_counter() - started
    for r in reports.values():
        r.runtime = runtime
    if multi:
        return reports
    return next(iter(reports.values()))


def covariation_martingale_test(pair: Sequence[str], batches, measure: str = "P",
                                cfg: DriftTestConfig | None = None, target: str | Callable = "product",
                                density: str = "Z"):
    """Drift test of ``X^i X^j - X^i_0 X^j_0`` (``product``) or ``[X^i, X^j]`` (``bracket``).

    ``target`` may also be a callable ``(scenario) -> path``.
    """
    from .calculus import quadratic_covariation

    a, b = pair

    def build(scn):
        if callable(target):
            return target(scn)
        if target == "product":
            return scn[a] * scn[b]
        if target == "bracket":
            return quadratic_covariation(scn[a], scn[b])
        raise ValueError(f"unknown target {target!r}")

    tid = f"{target if isinstance(target, str) else 'custom'}[{a},{b}]"
    return drift_test(build, batches, measure, cfg, test_id=tid, density=density)
