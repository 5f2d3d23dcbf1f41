"""Representation integrands for the transformed driver.

Given ``Z = Z_0 + H . X`` and, for a localizing sequence ``tau_n``,
``(Z N)^{tau_n} = (Z N)_0 + K^n . X``, the integrand

    phi = sum_n phi^n 1_{(tau_{n-1}, tau_n]},
    phi^n = (K^n - N_- H) / Z_-,

represents ``N`` against ``Xhat``.  Vector drivers are handled componentwise:
``H`` and each ``K^n`` may be sequences of integrands, one per component.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate

from .calculus import (DEFAULT_FLOOR, IntegrandPath, quadratic_covariation, relative_row_sup,
                       stochastic_integral)
from .errors import MissingLocalization, ZeroDensity
from .paths import CadlagPath, StoppingTimeObs, _co_grid

__all__ = [
    "LocalizationSequence",
    "RepresentationCert",
    "localize",
    "construct_integrand",
    "single_jump_mrp_integrand",
    "SingleJumpMRP",
    "verify_representation",
    "strong_orthogonality_check",
    "OrthogonalityVerdict",
    "usual_orthogonality_drift",
    "finite_representation",
    "finite_q_martingale",
]


def _tau_values(t) -> np.ndarray:
    if isinstance(t, StoppingTimeObs):
        return np.asarray(t.value, dtype=float)
    return np.asarray(t, dtype=float)


@dataclass(frozen=True, eq=False)
class LocalizationSequence:
    """Stopping times ``0 = tau_0 <= tau_1 <= ...`` and integrands ``K^1, K^2, ...``.

    ``taus[0]`` is ``tau_0``; ``K[n - 1]`` belongs to ``tau_n``.  Each entry of
    ``K`` is an :class:`IntegrandPath` or a sequence of them (vector driver).
    """

    taus: Sequence
    K: Sequence

    def __post_init__(self):
        vals = [_tau_values(t) for t in self.taus]
        if len(vals) < 2 or len(self.K) != len(vals) - 1:
            raise ValueError("need tau_0, ..., tau_m and K^1, ..., K^m")
        if np.any(vals[0] != 0):
            raise ValueError("tau_0 must be 0")
        for a, b in zip(vals, vals[1:]):
            if np.any(b < a):
                raise ValueError("localizing times must be nondecreasing")
        object.__setattr__(self, "taus", tuple(vals))

    @property
    def last(self) -> np.ndarray:
        return self.taus[-1]


def localize(ZN: CadlagPath, T: float, max_level: int = 80) -> list[np.ndarray]:
    """``tau_n = min(T, first grid time with |Z N| > 2^n)``, from ``tau_0 = 0``.

    The levels stop once every path reaches ``T``.
    """
    a = np.abs(np.asarray(ZN.values, dtype=float))
    taus = [np.zeros(ZN.batch_shape)]
    for n in range(max_level + 1):
        over = a > 2.0 ** n
        first = np.where(np.any(over, axis=-1),
                         np.take_along_axis(ZN.times, np.argmax(over, axis=-1)[..., None], axis=-1)[..., 0],
                         np.inf)
        taus.append(np.maximum(np.minimum(first, T), taus[-1]))
        if np.all(taus[-1] >= T):
            break
    return taus


def _as_list(x):
    if isinstance(x, (IntegrandPath, CadlagPath)):
        return [x if isinstance(x, IntegrandPath) else IntegrandPath(x)], False
    return [k if isinstance(k, IntegrandPath) else IntegrandPath(k) for k in x], True


def _step_jump(ip: IntegrandPath, like: CadlagPath) -> tuple[np.ndarray, np.ndarray]:
    p, _ = _co_grid(ip.path, like)
    return p.values, p.left_limits


def construct_integrand(H, loc: LocalizationSequence, Z: CadlagPath, N: CadlagPath,
                        floor: float = DEFAULT_FLOOR, on_zero: str = "raise",
                        T: float | None = None):
    """Glue ``phi^n = (K^n - N_- H) / Z_-`` over ``(tau_{n-1}, tau_n]``.

    Paths whose last localizing time falls short of ``T`` (default: the
    grid horizon) while ``Z`` stays positive raise
    :class:`MissingLocalization`.  A needed divisor at or below ``floor``
    raises :class:`ZeroDensity`; with ``on_zero="mask"`` the affected
    entries become NaN instead, which marks the path as not surviving.
    """
    Hs, vector = _as_list(H)
    Ks = [_as_list(k)[0] for k in loc.K]
    if any(len(k) != len(Hs) for k in Ks):
        raise ValueError("every K^n needs one integrand per driver component")
    times = Z.times
    T = float(np.max(Z.horizon)) if T is None else float(T)
    taus = [np.asarray(t)[..., None] if np.ndim(t) else np.asarray(t) for t in loc.taus]
    surviving = np.all(Z.values > floor, axis=-1) if Z.values.dtype != object else \
        np.all(Z.values > 0, axis=-1)
    short = (np.asarray(loc.last) < T) & surviving
    if np.any(short):
        raise MissingLocalization(f"{int(np.sum(short))} surviving paths are not covered up to T")

    # which n is active on each interval: step entries (t_k, t_{k+1}], jumps at t_k
    m = len(Ks)
    n_step = np.full(times.shape, -1)
    n_jump = np.full(times.shape, -1)
    for n in range(m, 0, -1):
        lo, hi = taus[n - 1], taus[n]
        n_step = np.where((times >= lo) & (times < hi), n - 1, n_step)
        n_jump = np.where((times > lo) & (times <= hi), n - 1, n_jump)

    zs, zj = Z.values, Z.left_limits
    Ns, Nj = N.values, N.left_limits
    obj = zs.dtype == object
    bad_s = (n_step >= 0) & (np.abs(zs) <= floor)
    bad_j = (n_jump >= 0) & (np.abs(zj) <= floor)
    if np.any(bad_s | bad_j) and on_zero == "raise":
        raise ZeroDensity("representation integrand needs 1/Z_- where Z_- vanishes")
    one = 1 if obj else 1.0
    zero = 0 if obj else 0.0
    inv_s = one / np.where(np.abs(zs) <= floor, one, zs)
    inv_j = one / np.where(np.abs(zj) <= floor, one, zj)
    out = []
    for c, h in enumerate(Hs):
        hs, hj = _step_jump(h, Z)
        step = np.full(times.shape, zero, dtype=object if obj else float)
        jump = np.full(times.shape, zero, dtype=object if obj else float)
        for n in range(m):
            ks, kj = _step_jump(Ks[n][c], Z)
            ps = (ks - Ns * hs) * inv_s
            pj = (kj - Nj * hj) * inv_j
            step = np.where(n_step == n, ps, step)
            jump = np.where(n_jump == n, pj, jump)
        if on_zero == "mask":
            step = np.where(bad_s, np.nan, step)
            jump = np.where(bad_j, np.nan, jump)
        if obj:
            step, jump = step.astype(object), jump.astype(object)
        out.append(IntegrandPath.from_arrays(times, step, jump, tag="phi"))
    return out if vector else out[0]


# ----------------------------------------------------------------------
# single-jump filtration

class SingleJumpMRP(NamedTuple):
    """Pre-jump value ``h`` and representation integrand for ``E[g(tau) | F_t]``.

    ``martingale(times, tau)`` builds the path of ``N_t = E[g(tau) | F_t]``.
    ``integrand(times)`` is ``g(t) - h(t)`` against the compensated jump
    ``1{tau <= t} - rate (t ∧ tau)``.
    """

    h: Callable[[np.ndarray], np.ndarray]
    martingale: Callable[[np.ndarray, np.ndarray], CadlagPath]
    integrand: Callable[[np.ndarray], IntegrandPath]


def single_jump_mrp_integrand(g: Callable, rate: float = 1.0, breakpoints: Sequence[float] = (),
                              upper: float = np.inf) -> SingleJumpMRP:
    """Closed-form ingredients of the representation in a single-jump filtration.

    ``h(t) = e^{rate t} int_t^inf g(u) rate e^{-rate u} du`` by adaptive
    quadrature.  ``g`` must be integrable against the exponential law; pass
    its discontinuities as ``breakpoints`` and ``upper`` when ``g`` vanishes
    beyond a finite point.
    """
    brk = sorted({float(b) for b in breakpoints if np.isfinite(b)})

    def tail(t: float) -> float:
        if t >= upper:
            return 0.0
        cuts = [t] + [b for b in brk if t < b < upper] + [upper]
        total = 0.0
        for a, b in zip(cuts, cuts[1:]):
            if np.isinf(b):
                val, _ = integrate.quad(lambda u: g(u) * rate * np.exp(-rate * (u - t)), a, np.inf,
                                        epsabs=1e-13, epsrel=1e-12, limit=200)
            else:
                val, _ = integrate.quad(lambda u: g(u) * rate * np.exp(-rate * (u - t)), a, b,
                                        epsabs=1e-13, epsrel=1e-12, limit=200)
            total += val
        return total

    cache: dict[float, float] = {}

    def h(times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        uniq = np.unique(t)
        for u in uniq:
            if u not in cache:
                cache[float(u)] = tail(float(u))
        return np.vectorize(lambda u: cache[float(u)], otypes=[float])(t)

    def gv(t):
        return np.vectorize(lambda u: float(g(u)), otypes=[float])(np.asarray(t, dtype=float))

    def martingale(times, tau) -> CadlagPath:
        times = np.asarray(times, dtype=float)
        tc = np.asarray(tau, dtype=float)
        if tc.ndim:
            tc = tc[..., None]
        hv = h(times)
        gt = gv(np.broadcast_to(tc, times.shape))
        vals = np.where(times >= tc, gt, hv)
        left = np.where(times > tc, gt, hv)
        flags = times == tc
        return CadlagPath(times, vals, left, flags)

    def integrand(times) -> IntegrandPath:
        times = np.asarray(times, dtype=float)
        val = gv(times) - h(times)
        return IntegrandPath.from_arrays(times, val, val, tag="g - h")

    return SingleJumpMRP(h, martingale, integrand)


# ----------------------------------------------------------------------
# finite spaces

def finite_q_martingale(model, terminal, density: str = "Z"):
    """``N_k = E_Q[terminal | F_k]``, set to 0 on cells of zero ``Q``-weight."""
    from fractions import Fraction

    from .finite import DiscreteProcess, conditional_expectation, q_weights

    sp = model.space
    qw = q_weights(model, density)
    tab = np.empty((sp.n_atoms, sp.n_stages), dtype=object)
    for k in range(sp.n_stages):
        ce = conditional_expectation(terminal, sp, k, qw, zero_cells="none")
        tab[:, k] = [Fraction(0) if c is None else c for c in ce]
    return DiscreteProcess(sp, tab, "N")


def finite_representation(model, terminal, drivers: Sequence[str], density: str = "Z",
                          zero_integrand: bool = False) -> RepresentationCert:
    """Represent ``N = E_Q[terminal | F_.]`` against the transformed drivers, exactly.

    ``H`` (density against the drivers) and ``K`` (``Z N`` against the
    drivers) are solved cell by cell under ``P``; the transforms use the
    exact compensator of the jumps at ``eta``.  Atoms where the density
    ends at zero are not surviving and are left out of the residual.
    With ``zero_integrand`` the integrand is replaced by 0 (negative control).
    """
    from .finite import DiscreteProcess, mrp_integrands
    from .measure import CompensatorSpec, compensator, detect_zeta_eta, lenglart_transform

    Zp = model.to_path(density)
    rec = detect_zeta_eta(Zp, "accessible")
    Xh = []
    for d in drivers:
        comp = compensator(CompensatorSpec("finite_exact", jump_size=d), rec, model)
        Xh.append(lenglart_transform(model.to_path(d), Zp, comp, on_zero="mask"))
    Zd = model[density]
    N = finite_q_martingale(model, terminal, density)
    ZN = DiscreteProcess(model.space, Zd.table * N.table, "ZN")
    times = Zp.times

    def as_integrand(proc):
        return IntegrandPath.from_arrays(times, proc.table, proc.table)

    H = [as_integrand(k) for k in mrp_integrands(model, Zd, drivers)]
    K = [as_integrand(k) for k in mrp_integrands(model, ZN, drivers)]
    T = float(times[0, -1])
    loc = LocalizationSequence([np.zeros(model.space.n_atoms), np.full(model.space.n_atoms, T)], [K])
    phi = construct_integrand(H, loc, Zp, model.to_path(N), on_zero="mask", T=T)
    if zero_integrand:
        zero = np.zeros(times.shape)
        phi = [IntegrandPath.from_arrays(times, zero, zero) for _ in drivers]
    surviving = np.array([z != 0 for z in Zd.table[:, -1]])
    return verify_representation(model.to_path(N), phi, Xh, surviving=surviving,
                                 scope="exact", tolerance=0.0)


# ----------------------------------------------------------------------
# verification

@dataclass(frozen=True, eq=False)
class RepresentationCert:
    N: CadlagPath
    phi: object
    residual: float
    scope: str
    tolerance: float
    surviving: int = 0
    excluded: int = 0

    def __post_init__(self):
        if not self.residual >= 0:
            raise ValueError("residual must be nonnegative")

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance

    def to_dict(self) -> dict:
        return {"residual": float(self.residual), "scope": self.scope,
                "tolerance": float(self.tolerance), "passed": self.passed,
                "surviving_paths": self.surviving, "excluded_paths": self.excluded}


def _rows_finite(a: np.ndarray) -> np.ndarray:
    if a.dtype == object:
        ok = np.vectorize(lambda x: x == x, otypes=[bool])(a)
    else:
        ok = np.isfinite(a)
    return np.all(ok, axis=-1)


def verify_representation(N: CadlagPath, phi, Xhat, surviving: np.ndarray | None = None,
                          scope: str | None = None, tolerance: float | None = None) -> RepresentationCert:
    """Sup over surviving paths of ``|N - N_0 - phi . Xhat|``.

    ``phi`` and ``Xhat`` may be sequences (vector driver).  Paths with any
    NaN in the integrand or the driver count as excluded.  ``scope`` is
    ``exact`` (tolerance ``1e-10``) unless given.
    """
    phis = list(phi) if isinstance(phi, (list, tuple)) else [phi]
    xs = list(Xhat) if isinstance(Xhat, (list, tuple)) else [Xhat]
    if len(phis) != len(xs):
        raise ValueError("one integrand per driver component")
    total = None
    keep = np.ones(N.batch_shape, bool) if N.batch_shape else np.array(True)
    for p, x in zip(phis, xs):
        p = p if isinstance(p, IntegrandPath) else IntegrandPath(p)
        keep = keep & _rows_finite(p.step_values) & _rows_finite(p.jump_values) & _rows_finite(x.values)
        part = stochastic_integral(p, x)
        total = part if total is None else total + part
    if surviving is not None:
        keep = keep & np.asarray(surviving, dtype=bool)
    n, t = _co_grid(N, total)
    diff = n.values - n.values[..., :1] - t.values
    diff_l = n.left_limits - n.values[..., :1] - t.left_limits
    if diff.dtype == object:
        mag = np.vectorize(lambda v: abs(v) if v == v else 0, otypes=[object])
        d = np.maximum(mag(diff), mag(diff_l))
        d = np.where(keep[..., None] if N.batch_shape else keep, d, 0)
        res = max(d.reshape(-1), default=0)
        res = float(res)
    else:
        d = np.maximum(np.abs(diff), np.abs(diff_l))
        d = np.where(keep[..., None] if N.batch_shape else keep, d, 0.0)
        res = float(np.nanmax(d)) if d.size else 0.0
    scope = scope or "exact"
    tol = tolerance if tolerance is not None else 1e-10
    n_keep = int(np.sum(keep))
    return RepresentationCert(N, phi, res, scope, tol, n_keep, int(np.size(keep) - n_keep))


@dataclass(frozen=True)
class OrthogonalityVerdict:
    pair: tuple[str, str]
    sup_bracket: float
    orthogonal: bool


def strong_orthogonality_check(components: dict, tolerance: float, surviving=None,
                               eta_jumps: dict | None = None) -> dict:
    """Sup-norm of ``[Xhat^i, Xhat^j]`` for each pair over surviving paths.

    ``eta_jumps`` maps component names to the jumps of the original
    components at an accessible ``eta`` (one entry per path, zero or NaN
    where ``eta`` is infinite); the hypothesis "no jump at the accessible
    zero time" holds when all of them vanish.
    """
    names = list(components)
    verdicts = []
    for a, b in itertools.combinations(names, 2):
        br = quadratic_covariation(components[a], components[b])
        v = br.values
        keep = _rows_finite(v) if v.ndim > 1 else np.array(True)
        if surviving is not None:
            keep = keep & np.asarray(surviving, dtype=bool)
        if v.dtype == object:
            mags = [abs(x) for row, k in zip(np.atleast_2d(v), np.atleast_1d(keep)) if k for x in row]
            sup = float(max(mags, default=0))
        else:
            vv = np.where(keep[..., None] if v.ndim > 1 else keep, np.abs(v), 0.0)
            sup = float(np.nanmax(vv)) if vv.size else 0.0
        verdicts.append(OrthogonalityVerdict((a, b), sup, sup <= tolerance))
    hyp = True
    if eta_jumps is not None:
        for arr in eta_jumps.values():
            vals = [x for x in np.asarray(arr, dtype=object).reshape(-1) if x == x]
            if any(x != 0 for x in vals):
                hyp = False
    return {
        "pairs": verdicts,
        "strongly_orthogonal": all(v.orthogonal for v in verdicts),
        "hypothesis_no_jump_at_accessible_eta": hyp,
        "tolerance": tolerance,
    }


# ----------------------------------------------------------------------
# usual orthogonality

def _vhat_paths(scn):
    from .measure import lenglart_transform

    X, Y, Z = scn["X"], scn["Y"], scn["Z"]
    Xh = lenglart_transform(X, Z)
    Yh = lenglart_transform(Y, Z)
    return X, Y, Z, Xh, Yh


def usual_orth_targets(scn) -> dict[str, CadlagPath]:
    """``V = [Xhat, Yhat] X^tau`` and its intensity-compensated version.

    Also returns the bracket residual ``[X, Y] + (X_- Y_-) . M``.  The
    drift report helper below scales it per path by ``max(1, sup |X Y|)``,
    since both terms grow with the product.
    """
    from .calculus import time_integral

    X, Y, Z, Xh, Yh = _vhat_paths(scn)
    br = quadratic_covariation(Xh, Yh)
    V = br * Z
    tau = np.asarray(scn.stopping_times["tau"].value, dtype=float)
    comp = time_integral(0.5 * X.values ** 2 * Y.values, X, until=tau)
    # no drift accrues after tau: Y vanishes there, and time_integral stops at tau
    Vc = V - comp
    prod = IntegrandPath(X * Y)
    orth = quadratic_covariation(X, Y) + stochastic_integral(prod, scn["M"])
    return {"V": V, "V_compensated": Vc, "bracket_residual": orth}


def usual_orthogonality_drift(batches, cfg=None, measure: str = "P") -> dict:
    """Drift reports for ``V`` and its compensated version, plus the bracket check.

    ``batches`` is a usual-orth scenario or an iterable of them.  Returns a
    dict with the two reports and the largest bracket residual seen.
    """
    from .mc import DriftTestConfig, drift_test

    if cfg is None:
        cfg = DriftTestConfig(checkpoints=(0.25, 0.5, 0.75, 1.0), functionals=("const",))
    worst = [0.0]

    def targets(scn):
        got = usual_orth_targets(scn)
        worst[0] = max(worst[0], relative_row_sup(got["bracket_residual"], scn["X"] * scn["Y"]))
        return {"V": got["V"], "V_compensated": got["V_compensated"]}

    reports = drift_test(targets, batches, measure, cfg)
    return {"V": reports["V"], "V_compensated": reports["V_compensated"],
            "bracket_residual": worst[0]}
