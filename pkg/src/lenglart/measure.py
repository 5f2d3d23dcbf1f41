"""Density processes, the times zeta and eta, compensators and transforms.

For a density ``Z`` of ``Q`` with respect to ``P``:

* ``zeta`` is the first time ``Z`` or ``Z-`` vanishes, and ``eta`` keeps only
  the paths where ``Z`` jumps to zero from a positive left limit;
* the transform ``X - (1/Z) . [X, Z] + A`` reads ``1/Z`` at its running value
  and adds the compensator ``A`` of the jump of ``X`` at ``eta``;
* the classical form ``X - (1/Z-) . <X, Z>`` is kept separate.  The two
  differ whenever ``X`` and ``Z`` jump together, so neither is written in
  terms of the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .calculus import (
    DEFAULT_FLOOR,
    IntegrandPath,
    optional_integral,
    quadratic_covariation,
    stochastic_integral,
    time_integral,
)
from .errors import ModeMismatch, NotApplicable, ZeroDensity
from .paths import CadlagPath, StoppingTimeObs, _co_grid

__all__ = [
    "StoppingTimeRecord",
    "CompensatorSpec",
    "CompensatorPath",
    "NULL_JUSTIFICATIONS",
    "detect_zeta_eta",
    "compensator",
    "lenglart_transform",
    "girsanov_classical",
    "inverse_transform",
    "q_expectation",
    "QEstimate",
    "excluded_rows",
]

NULL_JUSTIFICATIONS = frozenset({"eta_infinite", "q_loc_equiv", "quasi_left_continuous",
                                 "no_jump_at_zero_set"})
ACCESSIBILITY = ("accessible", "totally_inaccessible", "infinite")


@dataclass(frozen=True)
class StoppingTimeRecord:
    zeta: StoppingTimeObs
    eta: StoppingTimeObs
    lambda_flag: np.ndarray | bool
    accessibility: np.ndarray | str

    def __post_init__(self):
        lam = np.asarray(self.lambda_flag, dtype=bool)
        z = np.asarray(self.zeta.value, dtype=float)
        e = np.asarray(self.eta.value, dtype=float)
        if np.any(lam & (e != z)) or np.any(~lam & np.isfinite(e)):
            raise ValueError("eta must equal zeta on Lambda and be infinite off it")
        if np.any(np.isfinite(e) & ~np.isfinite(z)):
            raise ValueError("finite eta needs finite zeta")

    @property
    def eta_finite(self) -> np.ndarray:
        return np.isfinite(np.asarray(self.eta.value, dtype=float))


def detect_zeta_eta(Z: CadlagPath, accessibility: str = "accessible") -> StoppingTimeRecord:
    """Locate ``zeta`` and ``eta`` on each path of ``Z``.

    ``accessibility`` is declared by the model and applied to every path
    with finite ``eta``; other paths are tagged ``infinite``.
    """
    if accessibility not in ACCESSIBILITY[:2]:
        raise ValueError(f"accessibility must be one of {ACCESSIBILITY[:2]}")
    zero = (Z.left_limits == 0) | (Z.values == 0)
    hit = np.any(zero, axis=-1)
    k = np.argmax(zero, axis=-1)
    t_hit = np.take_along_axis(Z.times, np.asarray(k)[..., None], axis=-1)[..., 0]
    left_hit = np.take_along_axis(Z.left_limits, np.asarray(k)[..., None], axis=-1)[..., 0]
    zeta = np.where(hit, t_hit, np.inf)
    lam = hit & (left_hit > 0)
    eta = np.where(lam, zeta, np.inf)
    zkind = np.where(~hit, "never", np.where(lam, "jump", "hit"))
    ekind = np.where(lam, "jump", "never")
    acc = np.where(lam, accessibility, "infinite")
    if not Z.batch_shape:
        return StoppingTimeRecord(
            StoppingTimeObs(float(zeta), str(zkind)), StoppingTimeObs(float(eta), str(ekind)),
            bool(lam), str(acc))
    return StoppingTimeRecord(StoppingTimeObs(zeta, zkind.astype(object)),
                              StoppingTimeObs(eta, ekind.astype(object)), lam, acc.astype(object))


# ----------------------------------------------------------------------
# compensators

@dataclass(frozen=True)
class CompensatorSpec:
    """Declaration of the compensator of ``dX_eta 1_{[eta, inf)}``.

    * ``null``: zero, with a ``justification`` naming why no correction is
      needed;
    * ``intensity``: ``t -> int_0^{t ∧ eta} jump_size(s) intensity(s) ds``
      where ``jump_size(state, s)`` gives the jump ``X`` would make at ``s``
      from the pre-jump ``state`` (a dict of left limits on the grid);
    * ``finite_exact``: exact discrete compensator on a finite space.
    """

    mode: str
    intensity: Callable | None = None
    jump_size: Callable | None = None
    justification: str | None = None

    def __post_init__(self):
        if self.mode not in ("null", "intensity", "finite_exact"):
            raise ValueError(f"unknown compensator mode {self.mode!r}")
        if self.mode == "null" and self.justification not in NULL_JUSTIFICATIONS:
            raise ValueError(
                f"mode null needs a justification from {sorted(NULL_JUSTIFICATIONS)}")
        if self.mode == "intensity" and (self.intensity is None or self.jump_size is None):
            raise ValueError("mode intensity needs intensity and jump_size")


@dataclass(frozen=True, eq=False)
class CompensatorPath:
    path: CadlagPath
    mode: str
    details: Mapping[str, object] = field(default_factory=dict)


def compensator(spec: CompensatorSpec, record: StoppingTimeRecord, panel) -> CompensatorPath:
    """Build the compensator path declared by ``spec``.

    ``panel`` is a :class:`~lenglart.paths.PathPanel` (``X`` and ``Z``
    components) for the null and intensity modes, and a
    :class:`~lenglart.finite.FiniteModel` for ``finite_exact``.
    """
    acc = np.asarray(record.accessibility, dtype=object)
    finite_eta = record.eta_finite
    if spec.mode == "null":
        if spec.justification == "eta_infinite" and np.any(finite_eta):
            raise ModeMismatch("eta is finite on some paths")
        if spec.justification == "quasi_left_continuous" and np.any(acc == "accessible"):
            raise ModeMismatch("accessible eta with quasi-left-continuity claimed")
        like = panel["X"]
        zero = np.zeros(like.values.shape)
        return CompensatorPath(like.with_data(zero, zero.copy(), fv_continuous=True), "null",
                               {"justification": spec.justification})
    if spec.mode == "intensity":
        if np.any(acc == "accessible"):
            raise ModeMismatch("intensity mode needs a totally inaccessible eta")
        like = panel["X"]
        state = {n: panel[n].left_limits for n in panel.names}
        rate = np.asarray(spec.intensity(like.times), dtype=float) * np.ones(like.times.shape)
        size = np.asarray(spec.jump_size(state, like.times), dtype=float) * np.ones(like.times.shape)
        eta = np.asarray(record.eta.value, dtype=float)
        # the killing time is a grid event; integrate up to it
        A = time_integral(size * rate, like, until=eta)
        return CompensatorPath(A, "intensity", {"rule": "trapezoid"})
    # finite_exact
    from .finite import FiniteModel, eta_jump_compensator

    if not isinstance(panel, FiniteModel):
        raise ModeMismatch("finite_exact mode needs a finite model")
    if np.any(acc == "totally_inaccessible"):
        raise ModeMismatch("finite filtrations have only accessible times")
    proc = eta_jump_compensator(panel, spec.jump_size)
    return CompensatorPath(panel.to_path(proc), "finite_exact", {"process": proc})


# ----------------------------------------------------------------------
# transforms

def _guarded_reciprocal(Z: CadlagPath, need_values: np.ndarray, need_left: np.ndarray,
                        floor: float, on_zero: str) -> tuple[CadlagPath, np.ndarray]:
    """``1/Z`` with a check on the entries that will actually be used.

    Returns the reciprocal path and a boolean array marking entries where a
    divisor at or below ``floor`` was needed.
    """
    bad_v = need_values & (np.abs(Z.values) <= floor)
    bad_l = need_left & (np.abs(Z.left_limits) <= floor)
    bad = bad_v | bad_l
    if np.any(bad) and on_zero == "raise":
        raise ZeroDensity(f"division by a density at or below {floor:g}")
    obj = Z.values.dtype == object
    one = 1 if obj else 1.0
    safe_v = np.where(np.abs(Z.values) <= floor, one, Z.values)
    safe_l = np.where(np.abs(Z.left_limits) <= floor, one, Z.left_limits)
    inv_v = one / safe_v
    inv_l = one / safe_l
    if obj:
        inv_v = inv_v.astype(object)
        inv_l = inv_l.astype(object)
    inv = Z.with_data(inv_v, np.where(Z.jump_flags, inv_l, inv_v))
    return inv, bad


def _mask_from(path: CadlagPath, bad: np.ndarray) -> CadlagPath:
    """Set every entry from the first bad entry onward to NaN."""
    after = np.cumsum(bad, axis=-1) > 0
    if not np.any(after):
        return path
    nan = np.nan
    vals = np.where(after, nan, path.values)
    left = np.where(after, nan, path.left_limits)
    if path.values.dtype == object:
        vals = vals.astype(object)
        left = left.astype(object)
    return path.with_data(vals, left)


def excluded_rows(path: CadlagPath) -> np.ndarray:
    """Rows of a masked result that were cut off at a zero density."""
    v = path.values
    if v.dtype == object:
        isn = np.vectorize(lambda x: x != x, otypes=[bool])(v)
    else:
        isn = np.isnan(v)
    return np.any(isn, axis=-1)


def _optional_divide(A: CadlagPath, Z: CadlagPath, floor: float, on_zero: str):
    """``(1/Z) . A`` with the divisor checked only where ``A`` moves."""
    a, z = _co_grid(A, Z)
    c = a.continuous_increments
    d = a.jumps
    need_v = np.zeros(c.shape, bool)
    need_v[..., :-1] = c[..., 1:] != 0
    need_v |= d != 0
    inv, bad = _guarded_reciprocal(z, need_v, np.zeros(c.shape, bool), floor, on_zero)
    return optional_integral(inv, a), bad


def lenglart_transform(X: CadlagPath, Z: CadlagPath, comp: CompensatorPath | None = None,
                       floor: float = DEFAULT_FLOOR, on_zero: str = "raise") -> CadlagPath:
    """``X - (1/Z) . [X, Z] + comp`` with ``1/Z`` at its running value.

    With ``on_zero="mask"`` a path that needs a division by a vanishing
    density is set to NaN from that time on instead of raising; count such
    rows with :func:`excluded_rows`.
    """
    if on_zero not in ("raise", "mask"):
        raise ValueError("on_zero must be 'raise' or 'mask'")
    bracket = quadratic_covariation(X, Z)
    corr0, bad = _optional_divide(bracket, Z, floor, on_zero)
    x, corr = _co_grid(X, corr0)
    out = x - corr
    if comp is not None:
        out = out + comp.path
    if on_zero == "mask":
        out = _mask_from(out, _regrid_bad(bad, corr0, out))
    return out


def _regrid_bad(bad: np.ndarray, src: CadlagPath, dst: CadlagPath) -> np.ndarray:
    if bad.shape == dst.times.shape and np.array_equal(src.times, dst.times):
        return bad
    first = np.where(np.any(bad, axis=-1), np.take_along_axis(
        src.times, np.argmax(bad, axis=-1)[..., None], axis=-1)[..., 0], np.inf)
    return dst.times >= np.asarray(first)[..., None]


def girsanov_classical(X: CadlagPath, Z: CadlagPath, predictable_cov: CadlagPath | None,
                       meta: Mapping[str, object] | None = None,
                       floor: float = DEFAULT_FLOOR) -> CadlagPath:
    """Classical correction ``X - (1/Z-) . <X, Z>``.

    Refuses scenarios whose bracket ``[X, Z]`` is declared not locally
    integrable, and calls without a predictable covariation.
    """
    if meta is not None and meta.get("bracket_locally_integrable") is False:
        raise NotApplicable(
            f"scenario {meta.get('model')!r}: [X, Z] is not locally integrable, "
            "so <X, Z> does not exist")
    if predictable_cov is None:
        raise NotApplicable("no predictable covariation supplied")
    x, z = _co_grid(X, Z)
    p, z = _co_grid(predictable_cov, z)
    c = p.continuous_increments
    d = p.jumps
    need_v = np.zeros(c.shape, bool)
    need_v[..., :-1] = c[..., 1:] != 0
    inv, _ = _guarded_reciprocal(z, need_v, d != 0, floor, "raise")
    corr = stochastic_integral(IntegrandPath(inv), p)
    x, corr = _co_grid(x, corr)
    return x - corr


def inverse_transform(Xhat: CadlagPath, Z: CadlagPath, floor: float = DEFAULT_FLOOR) -> CadlagPath:
    """``Xhat - Z . [Xhat, 1/Z]``, recovering ``X`` when ``Z > 0``."""
    need = np.ones(Z.values.shape, bool)
    inv, _ = _guarded_reciprocal(Z, need, Z.jump_flags, floor, "raise")
    bracket = quadratic_covariation(Xhat, inv)
    corr = optional_integral(Z, bracket)
    xh, corr = _co_grid(Xhat, corr)
    return xh - corr


# ----------------------------------------------------------------------
# Q-expectations

@dataclass(frozen=True)
class QEstimate:
    estimate: float
    std_error: float
    excluded: int
    n: int


def q_expectation(f, batch, t: float, mode: str = "weighted", density: str = "Z") -> QEstimate:
    """Estimate ``E_Q[f]`` for ``f`` measurable at time ``t``.

    ``f`` is a callable taking the batch and returning one value per path,
    or an array of such values.  In ``weighted`` mode the estimate is the
    ``P``-average of ``Z_t f``; paths with ``Z_t = 0`` contribute zero even if
    ``f`` is undefined there.  In ``direct`` mode the paths are taken to be
    ``Q``-samples and rows where ``f`` is NaN are excluded and counted.
    """
    vals = np.asarray(f(batch) if callable(f) else f, dtype=float).reshape(-1)
    if mode == "weighted":
        Z = batch[density] if not isinstance(batch, CadlagPath) else batch
        w = np.asarray(Z.value_at(t), dtype=float).reshape(-1)
        s = np.where(w == 0, 0.0, w * np.where(np.isnan(vals), 0.0, vals))
        if np.any(np.isnan(vals) & (w != 0)):
            raise ZeroDensity("functional undefined on a path with positive weight")
        n = s.size
        se = float(np.std(s, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return QEstimate(float(np.mean(s)), se, 0, n)
    if mode == "direct":
        keep = ~np.isnan(vals)
        v = vals[keep]
        n = v.size
        se = float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return QEstimate(float(np.mean(v)) if n else float("nan"), se, int((~keep).sum()), n)
    raise ValueError(f"unknown mode {mode!r}")
