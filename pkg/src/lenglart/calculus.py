"""Pathwise stochastic integrals, brackets and Ito-formula residuals.

Conventions on a grid ``t_0 < t_1 < ... < t_K``:

* the increment of an integrator over ``(t_{k-1}, t_k]`` splits into a
  continuous part ``left_limits[k] - values[k-1]`` and a jump
  ``values[k] - left_limits[k]``;
* a predictable integrand multiplies the continuous part by its value at
  ``t_{k-1}`` and the jump by its left limit at ``t_k``;
* an optional integrand (used against finite-variation brackets, as in
  ``(1/Z) . [X, Z]``) multiplies the jump by its right value at ``t_k``.

Products are only formed where the increment is nonzero, so an integrand that
is infinite or undefined where nothing moves contributes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ZeroDensity
from .paths import CadlagPath, _co_grid

__all__ = [
    "IntegrandPath",
    "stochastic_integral",
    "optional_integral",
    "quadratic_covariation",
    "reciprocal",
    "ito_reciprocal_check",
    "divergence_probe",
    "DivergenceReport",
    "time_integral",
    "step_integrand",
    "exp_over_u_integral",
    "relative_row_sup",
]

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True)
class IntegrandPath:
    """A path read through predictable evaluation.

    Between grid times the integrand is frozen at its value at the left
    endpoint; at a grid time it is evaluated through its left limit.
    """

    path: CadlagPath
    tag: str | None = None

    @classmethod
    def from_function(cls, func: Callable, times, tag: str | None = None) -> "IntegrandPath":
        """Deterministic continuous integrand ``u -> func(u)`` on ``times``."""
        times = np.asarray(times, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.asarray(func(times), dtype=float) * np.ones_like(times)
        return cls(CadlagPath(times, vals, vals.copy(), np.zeros(times.shape, bool)), tag)

    @classmethod
    def constant(cls, c: float, like: CadlagPath, tag: str | None = None) -> "IntegrandPath":
        vals = np.full(like.times.shape, c, dtype=float)
        return cls(CadlagPath(like.times, vals, vals.copy(), like.jump_flags), tag)

    @classmethod
    def from_arrays(cls, times, step_values, jump_values, tag: str | None = None) -> "IntegrandPath":
        """Build from the two arrays actually used in integration.

        ``step_values[..., k]`` is used on ``(t_k, t_{k+1})`` and
        ``jump_values[..., k]`` at ``t_k``.
        """
        times = np.asarray(times, dtype=float)
        step = np.array(step_values, copy=True)
        jump = np.array(jump_values, copy=True)
        jump[..., 0] = step[..., 0]
        flags = np.ones(times.shape, bool)
        flags[..., 0] = False
        return cls(CadlagPath(times, step, jump, flags), tag)

    @property
    def times(self) -> np.ndarray:
        return self.path.times

    @property
    def step_values(self) -> np.ndarray:
        return self.path.values

    @property
    def jump_values(self) -> np.ndarray:
        return self.path.left_limits

    def __mul__(self, other: "IntegrandPath | float") -> "IntegrandPath":
        if isinstance(other, IntegrandPath):
            return IntegrandPath(_mul_paths(self.path, other.path), self.tag)
        return IntegrandPath(self.path * other, self.tag)

    __rmul__ = __mul__


def _mul_paths(a: CadlagPath, b: CadlagPath) -> CadlagPath:
    a, b = _co_grid(a, b)
    flags = np.ones(a.times.shape, bool)
    flags[..., 0] = False
    return CadlagPath(a.times, a.values * b.values, a.left_limits * b.left_limits, flags)


def _as_integrand(h) -> IntegrandPath:
    if isinstance(h, IntegrandPath):
        return h
    if isinstance(h, CadlagPath):
        return IntegrandPath(h)
    raise TypeError(f"cannot use {type(h).__name__} as an integrand")


def _masked_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise ``a * b`` with zero wherever ``b`` is zero."""
    a, b = np.broadcast_arrays(a, b)
    dtype = object if (a.dtype == object or b.dtype == object) else np.result_type(a, b, float)
    out = np.zeros(b.shape, dtype=dtype)
    if dtype == object:
        out[...] = 0
    mask = b != 0
    out[mask] = a[mask] * b[mask]
    return out


def _accumulate(integrator: CadlagPath, cont: np.ndarray, jump: np.ndarray,
                fv: bool) -> CadlagPath:
    vals = np.cumsum(cont + jump, axis=-1)
    return CadlagPath(integrator.times, vals, vals - jump, integrator.jump_flags, fv)


def _integrate(step_vals, jump_vals, integrator: CadlagPath, fv: bool) -> CadlagPath:
    c = integrator.continuous_increments
    d = integrator.jumps
    step = np.zeros_like(step_vals)
    step[..., 1:] = step_vals[..., :-1]
    return _accumulate(integrator, _masked_mul(step, c), _masked_mul(jump_vals, d), fv)


def stochastic_integral(H, M: CadlagPath) -> CadlagPath:
    """Left-point integral ``(H . M)_t`` started at 0.

    At jump events the contribution is exactly ``H(t-) * dM(t)``.
    """
    if np.isscalar(H):
        H = IntegrandPath.constant(float(H), M)
    H = _as_integrand(H)
    hp, mp = _co_grid(H.path, M)
    return _integrate(hp.values, hp.left_limits, mp, mp.fv_continuous)


def optional_integral(G: CadlagPath, A: CadlagPath) -> CadlagPath:
    """Stieltjes integral ``(G . A)`` with ``G`` read at its running value.

    Meant for finite-variation integrators such as brackets: at a jump of
    ``A`` the contribution is ``G(t) * dA(t)`` with the right value of ``G``.
    """
    gp, ap = _co_grid(G, A)
    return _integrate(gp.values, gp.values, ap, ap.fv_continuous)


def quadratic_covariation(X: CadlagPath, Y: CadlagPath) -> CadlagPath:
    """Realized covariation ``[X, Y]`` started at 0.

    Jump events contribute ``dX * dY`` exactly.  Continuous increments
    contribute their products unless either path declares a finite-variation
    continuous part.
    """
    x, y = _co_grid(X, Y)
    d = x.jumps * y.jumps
    if x.fv_continuous or y.fv_continuous:
        c = np.zeros_like(d)
    else:
        c = x.continuous_increments * y.continuous_increments
    flags = x.jump_flags | y.jump_flags
    vals = np.cumsum(c + d, axis=-1)
    return CadlagPath(x.times, vals, vals - d, flags, True)


def time_integral(f_step: np.ndarray, like: CadlagPath, until=None, rule: str = "trapezoid") -> CadlagPath:
    """``t -> int_0^{t ∧ until} f(s) ds`` on the grid of ``like``.

    ``f_step`` holds the integrand at every grid time.  Intervals
    ``(t_{k-1}, t_k]`` with ``t_k > until`` are dropped, so ``until`` should
    be a grid time (event times always are).
    """
    t = like.times
    dt = np.zeros_like(t)
    dt[..., 1:] = np.diff(t, axis=-1)
    f = np.asarray(f_step, dtype=float)
    if rule == "trapezoid":
        area = np.zeros_like(t)
        area[..., 1:] = 0.5 * (f[..., 1:] + f[..., :-1]) * dt[..., 1:]
    elif rule == "left":
        area = np.zeros_like(t)
        area[..., 1:] = f[..., :-1] * dt[..., 1:]
    else:
        raise ValueError(f"unknown rule {rule!r}")
    if until is not None:
        u = np.asarray(until, dtype=float)
        if u.ndim:
            u = u[..., None]
        area = np.where(t <= u, area, 0.0)
    vals = np.cumsum(area, axis=-1)
    return CadlagPath(t, vals, vals.copy(), like.jump_flags, True)


def reciprocal(Z: CadlagPath, floor: float = DEFAULT_FLOOR) -> CadlagPath:
    """The path ``1/Z``; raises :class:`ZeroDensity` if ``Z`` or ``Z-`` is small."""
    if np.any(np.abs(Z.values) <= floor) or np.any(np.abs(Z.left_limits) <= floor):
        raise ZeroDensity(f"density at or below floor {floor:g}")
    one = 1 if Z.values.dtype == object else 1.0
    return Z.with_data(one / Z.values, one / Z.left_limits)


def ito_reciprocal_check(Z: CadlagPath, floor: float = DEFAULT_FLOOR, jumps_only: bool = False) -> float:
    """Sup-norm residual of ``1/Z = 1/Z_0 - (1/Z_-^2) . (Z - (1/Z) . [Z])``.

    With ``jumps_only`` the residual compares only the jumps of the two sides
    at jump events, which is exact algebra and free of grid error.
    """
    inv = reciprocal(Z, floor)
    inv_sq = Z.with_data(inv.values ** 2, inv.left_limits ** 2)
    inner = Z - optional_integral(inv, quadratic_covariation(Z, Z))
    rhs = stochastic_integral(IntegrandPath(inv_sq), inner)
    rhs = rhs.with_data(inv.values[..., :1] - rhs.values, inv.values[..., :1] - rhs.left_limits)
    if jumps_only:
        diff = np.abs(np.where(Z.jump_flags, inv.jumps - rhs.jumps, 0.0))
    else:
        diff = np.maximum(np.abs(inv.values - rhs.values), np.abs(inv.left_limits - rhs.left_limits))
    return float(np.max(diff)) if diff.size else 0.0


# ----------------------------------------------------------------------
# non-integrability probe

def exp_over_u_integral(eps: float, t: float) -> float:
    """``int_eps^t e^{-u}/u du`` by adaptive quadrature (log substitution)."""
    if t <= eps:
        return 0.0
    val, _ = integrate.quad(lambda s: np.exp(-np.exp(s)), np.log(eps), np.log(t),
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(val)


@dataclass
class DivergenceReport:
    t: float
    truncations: list[float]
    mc_values: list[float]
    mc_spread: list[float]
    quadrature: list[float]
    estimator: str

    @property
    def growth_per_decade(self) -> list[float]:
        """Quadrature increase per factor-10 decrease of the truncation."""
        out = []
        for (e0, q0), (e1, q1) in zip(zip(self.truncations, self.quadrature),
                                      zip(self.truncations[1:], self.quadrature[1:])):
            out.append((q1 - q0) / np.log10(e0 / e1))
        return out

    @property
    def relative_errors(self) -> list[float]:
        return [abs(m - q) / q if q else abs(m) for m, q in zip(self.mc_values, self.quadrature)]

    @property
    def monotone(self) -> bool:
        order = np.argsort(self.truncations)[::-1]
        q = np.asarray(self.quadrature)[order]
        return bool(np.all(np.diff(q) > 0))

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "truncations": self.truncations,
            "mc_values": self.mc_values,
            "mc_spread": self.mc_spread,
            "quadrature": self.quadrature,
            "growth_per_decade": self.growth_per_decade,
            "relative_errors": self.relative_errors,
            "estimator": self.estimator,
        }


def divergence_probe(increments_of: CadlagPath | Sequence[CadlagPath], tau, t: float,
                     truncations: Sequence[float], estimator: str = "median_of_means",
                     k: int = 32) -> DivergenceReport:
    """Truncated means ``E[[X, Z]_t 1{tau > eps}]`` against quadrature.

    ``increments_of`` is the bracket path batch (or a list of batch chunks)
    and ``tau`` the matching first-jump times.  The quadrature column is
    ``int_eps^t e^{-u}/u du``, which diverges like ``log(1/eps)``.
    """
    from .mc import estimator as estimate  # circular at import time

    chunks = [increments_of] if isinstance(increments_of, CadlagPath) else list(increments_of)
    taus = [tau] if not isinstance(tau, (list, tuple)) else list(tau)
    at_t = np.concatenate([c.value_at(t) for c in chunks])
    tau_all = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)) for x in taus])
    mc, spread, quad = [], [], []
    for eps in truncations:
        samples = np.where(tau_all > eps, at_t, 0.0)
        v, s = estimate(estimator, samples, k=k)
        mc.append(float(v))
        spread.append(float(s))
        quad.append(exp_over_u_integral(eps, t))
    return DivergenceReport(float(t), [float(e) for e in truncations], mc, spread, quad, estimator)


def step_integrand(breaks, levels, like: CadlagPath, tag: str | None = None) -> IntegrandPath:
    """Left-continuous step integrand ``sum_i levels_i 1_{(breaks_i, breaks_{i+1}]}``.

    ``breaks`` is increasing (shape ``(m+1,)``); ``levels`` has shape
    ``(m,)`` or ``(..., m)`` for path-dependent levels, which must be known
    at the left end of their interval for the integrand to be predictable.
    """
    b = np.asarray(breaks, dtype=float)
    lv = np.asarray(levels, dtype=float)
    t = like.times
    m = len(b) - 1
    if lv.shape[-1] != m:
        raise ValueError("one level per interval")
    i_step = np.searchsorted(b, t, side="right") - 1      # b_i <= t < b_{i+1}
    i_jump = np.searchsorted(b, t, side="left") - 1       # b_i < t <= b_{i+1}
    ok_s = (i_step >= 0) & (i_step < m)
    ok_j = (i_jump >= 0) & (i_jump < m)
    lvb = np.broadcast_to(lv, t.shape[:-1] + (m,)) if lv.ndim > 1 or t.ndim > 1 else lv
    if t.ndim > 1:
        step = np.where(ok_s, np.take_along_axis(lvb, np.clip(i_step, 0, m - 1), axis=-1), 0.0)
        jump = np.where(ok_j, np.take_along_axis(lvb, np.clip(i_jump, 0, m - 1), axis=-1), 0.0)
    else:
        step = np.where(ok_s, lv[np.clip(i_step, 0, m - 1)], 0.0)
        jump = np.where(ok_j, lv[np.clip(i_jump, 0, m - 1)], 0.0)
    return IntegrandPath.from_arrays(t, step, jump, tag=tag or "step")


def relative_row_sup(diff: CadlagPath, scale: CadlagPath) -> float:
    """Largest per-path ``sup |diff|`` divided by ``max(1, sup |scale|)`` on that path."""
    d = np.maximum(np.abs(diff.values), np.abs(diff.left_limits)).max(axis=-1)
    s = np.maximum(np.abs(scale.values), np.abs(scale.left_limits)).max(axis=-1)
    return float(np.max(d / np.maximum(1.0, s)))
