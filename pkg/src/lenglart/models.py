"""Path generators for the example processes.

Each builder returns a :class:`Scenario`: an aligned panel of component
paths over a batch of independent paths, plus the stopping times, integrands
and closed-form solutions that the oracle checks compare against.

Every row of a batch lives on its own grid: a uniform base grid of ``n``
steps on ``[0, horizon]``, any extra deterministic times (checkpoints, the
density horizon ``T``), and the row's own jump times.  Rows are padded to a
common width with neutral points placed in the last base interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .calculus import IntegrandPath, stochastic_integral, time_integral
from .errors import BadHorizon
from .paths import CadlagPath, PathPanel, StoppingTimeObs, align, stop

__all__ = [
    "RngStream",
    "Scenario",
    "event_grid",
    "simulate_brownian",
    "simulate_poisson",
    "PoissonSample",
    "stochastic_exponential",
    "build_sec5_1",
    "build_usual_orth",
    "build_continuous_control",
    "build_independent_jumps",
    "build_killed_exponential",
    "BUILDERS",
]


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def generator(self, *sub: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *map(int, sub)))
        return np.random.default_rng(ss)

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


@dataclass(frozen=True, eq=False)
class Scenario:
    panel: PathPanel
    horizon: float
    meta: Mapping[str, object]
    stopping_times: Mapping[str, StoppingTimeObs] = field(default_factory=dict)
    integrands: Mapping[str, IntegrandPath] = field(default_factory=dict)
    closed_forms: Mapping[str, CadlagPath] = field(default_factory=dict)
    predictable_covariations: Mapping[str, CadlagPath] = field(default_factory=dict)
    path_ids: np.ndarray | None = None

    def __getitem__(self, name: str) -> CadlagPath:
        return self.panel[name]

    @property
    def n_paths(self) -> int:
        return self.panel.components[self.panel.names[0]].n_paths

    @property
    def times(self) -> np.ndarray:
        return self.panel.times


# ----------------------------------------------------------------------
# grids

def _base_times(horizon: float, n: int, extra: Sequence[float] = ()) -> np.ndarray:
    base = np.linspace(0.0, horizon, n + 1)
    base[-1] = horizon
    extra = [float(x) for x in extra if 0.0 < float(x) < horizon]
    return np.union1d(base, extra) if extra else base


def event_grid(horizon: float, n: int, events: np.ndarray,
               extra: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Per-row grids containing the base grid and every event in ``(0, horizon]``.

    ``events`` has shape ``(P, m)``; entries outside ``(0, horizon]`` (use
    ``inf`` for "no event") are ignored.  Returns ``(times, is_event)`` of
    shape ``(P, K)`` with ``K = len(base) + m``.
    """
    base = _base_times(horizon, n, extra)
    ev = np.atleast_2d(np.asarray(events, dtype=float))
    P, m = ev.shape
    B = len(base)
    if m == 0:
        return np.broadcast_to(base, (P, B)).copy(), np.zeros((P, B), bool)
    on_base = np.isin(ev, base)
    valid = (ev > 0) & (ev <= horizon) & ~on_base
    gap = base[-1] - base[-2]
    fillers = base[-1] - gap * (np.arange(m) + 1) / (m + 1)
    cand_ev = np.where(valid, ev, fillers)
    cand = np.concatenate([np.broadcast_to(base, (P, B)), cand_ev], axis=1)
    is_ev = np.concatenate([np.zeros((P, B), bool), valid], axis=1)
    # an event that coincides with a base point flags that point instead
    base_hit = np.zeros((P, B), bool)
    if np.any(on_base & (ev > 0) & (ev <= horizon)):
        rows, cols = np.nonzero(on_base & (ev > 0) & (ev <= horizon))
        base_hit[rows, np.searchsorted(base, ev[rows, cols])] = True
        is_ev[:, :B] = base_hit
    order = np.argsort(cand, axis=1, kind="stable")
    times = np.take_along_axis(cand, order, axis=1)
    flags = np.take_along_axis(is_ev, order, axis=1)
    dup = np.any(np.diff(times, axis=1) <= 0, axis=1)
    for r in np.nonzero(dup)[0]:
        t = np.union1d(base, cand_ev[r][valid[r]])
        miss = cand.shape[1] - len(t)
        j = int(np.argmax(np.diff(t)))
        extra_pts = t[j] + (t[j + 1] - t[j]) * np.arange(1, miss + 1) / (miss + 1)
        times[r] = np.sort(np.concatenate([t, extra_pts]))
        flags[r] = np.isin(times[r], ev[r][(ev[r] > 0) & (ev[r] <= horizon)])
    return times, flags


def _ids(paths: int, first_id: int) -> np.ndarray:
    return np.arange(first_id, first_id + paths, dtype=np.int64)


# ----------------------------------------------------------------------
# primitive processes

def simulate_brownian(T: float, n: int, stream: RngStream, paths: int | None = None,
                      times: np.ndarray | None = None, sub: int = 1) -> CadlagPath:
    """Brownian motion sampled on a uniform grid of ``n`` steps (or on ``times``).

    With ``paths=None`` a single path is returned; otherwise a batch.
    """
    if T <= 0 or n < 1:
        raise ValueError("need T > 0 and n >= 1")
    if times is None:
        t = _base_times(T, n)
        times = t if paths is None else np.broadcast_to(t, (paths, len(t))).copy()
    times = np.asarray(times, dtype=float)
    dt = np.diff(times, axis=-1)
    z = stream.generator(sub).standard_normal(dt.shape)
    w = np.zeros(times.shape)
    w[..., 1:] = np.cumsum(np.sqrt(dt) * z, axis=-1)
    return CadlagPath(times, w, w.copy(), np.zeros(times.shape, bool))


def _arrivals(rate: float, T: float, gen: np.random.Generator, P: int) -> np.ndarray:
    m = int(rate * T + 6.0 * math.sqrt(rate * T) + 8)
    arr = np.cumsum(gen.exponential(1.0 / rate, (P, m)), axis=1)
    while np.any(arr[:, -1] <= T):
        more = arr[:, -1:] + np.cumsum(gen.exponential(1.0 / rate, (P, m)), axis=1)
        arr = np.concatenate([arr, more], axis=1)
    return arr


@dataclass(frozen=True, eq=False)
class PoissonSample:
    N: CadlagPath
    M: CadlagPath
    tau1: StoppingTimeObs
    arrivals: np.ndarray


def simulate_poisson(rate: float, T: float, stream: RngStream, paths: int | None = None,
                     n: int = 1, extra: Sequence[float] = (), sub: int = 2) -> PoissonSample:
    """Poisson process with jump times drawn as exponential spacings.

    Jump times are event points of the grid, so ``N`` and the compensated
    path ``M = N - rate*t`` are exact.  ``tau1`` is the first arrival, which
    may lie beyond ``T``.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    P = 1 if paths is None else paths
    arr = _arrivals(rate, T, stream.generator(sub), P)
    tau1 = arr[:, 0].copy()
    inside = np.where(arr <= T, arr, np.inf)
    width = max(1, int(np.max(np.sum(arr <= T, axis=1))))
    times, flags = event_grid(T, n, inside[:, :width], extra)
    counts = np.cumsum(flags, axis=1).astype(float)
    N = CadlagPath(times, counts, counts - flags, flags, True)
    comp = rate * times
    M = CadlagPath(times, counts - comp, counts - flags - comp, flags, True)
    if paths is None:
        return PoissonSample(N.row(0), M.row(0), StoppingTimeObs(float(tau1[0])), arr[0])
    return PoissonSample(N, M, StoppingTimeObs(tau1, "jump"), arr)


def stochastic_exponential(driver: CadlagPath) -> CadlagPath:
    """Doleans-Dade exponential of ``driver`` started at 1.

    Continuous increments ``c`` multiply by ``exp(c - c^2/2)`` (``exp(c)``
    when the driver's continuous part has finite variation); a jump ``d``
    multiplies by ``1 + d`` exactly.  A factor of zero (to rounding) is absorbing.
    """
    c = driver.continuous_increments
    d = driver.jumps
    cont = np.exp(c) if driver.fv_continuous else np.exp(c - 0.5 * c * c)
    factor = 1.0 + d
    # a jump of -1 recovered as a difference of values is only -1 up to rounding
    factor[np.abs(factor) <= 8 * np.finfo(float).eps * np.maximum(1.0, np.abs(d))] = 0.0
    step = cont * factor
    vals = np.cumprod(step, axis=-1)
    left = np.empty_like(vals)
    left[..., 0] = 1.0
    left[..., 1:] = vals[..., :-1] * cont[..., 1:]
    left = np.where(driver.jump_flags, left, vals)
    return CadlagPath(driver.times, vals, left, driver.jump_flags, driver.fv_continuous)


def _indicator_integrand(times: np.ndarray, upto: float) -> IntegrandPath:
    """Predictable ``1_{[0, upto]}`` on the given grid."""
    return IntegrandPath.from_arrays(times, (times < upto).astype(float),
                                     (times <= upto).astype(float), tag=f"1[0,{upto:g}]")


# ----------------------------------------------------------------------
# scenario builders

def build_sec5_1(T: float = 0.25, n: int = 1, stream: RngStream | None = None,
                 paths: int = 1, horizon: float | None = None,
                 checkpoints: Sequence[float] = (), first_id: int = 0) -> Scenario:
    """Compensated single jump integrated against ``1/sqrt(u)``, with ``Z = 1 + X^T``.

    ``X_t = 1{tau1 <= t}/sqrt(tau1) - 2 sqrt(t ∧ tau1)``.  The jump part is
    computed by the engine's stochastic integral; the drift part is the exact
    antiderivative, so every grid value of ``X`` is exact whatever ``n`` is.
    ``Z`` stays nonnegative because ``T <= 1/4``.
    """
    if not (0.0 < T <= 0.25):
        raise BadHorizon(f"T must lie in (0, 1/4], got {T}")
    stream = stream or RngStream(0)
    horizon = T if horizon is None else float(horizon)
    if horizon < T:
        raise BadHorizon("simulation horizon must be >= T")
    u = stream.generator(0).random(paths)
    tau = -np.log1p(-u)
    times, flags = event_grid(horizon, n, tau[:, None], extra=[T, *checkpoints])
    tc = tau[:, None]
    hit = times >= tc
    jump_cnt = hit.astype(float)
    Nst = CadlagPath(times, jump_cnt, jump_cnt - flags, flags, True)
    inv_sqrt = IntegrandPath.from_function(lambda s: 1.0 / np.sqrt(s), times, tag="1/sqrt(u)")
    jumps = stochastic_integral(inv_sqrt, Nst)
    drift = -2.0 * np.sqrt(np.minimum(times, tc))
    X = jumps.with_data(jumps.values + drift, jumps.left_limits + drift)
    Mst = CadlagPath(times, jump_cnt - np.minimum(times, tc),
                     jump_cnt - flags - np.minimum(times, tc), flags, True)
    Z = stop(X, T) + 1.0
    rt = np.sqrt(tau)[:, None]
    x_cf_v = np.where(hit, 1.0 / rt - 2.0 * rt, -2.0 * np.sqrt(times))
    x_cf_l = np.where(times > tc, 1.0 / rt - 2.0 * rt, -2.0 * np.sqrt(np.minimum(times, tc)))
    xhat_corr = 1.0 / (rt * (1.0 + rt - 2.0 * tau[:, None]))
    upto = np.minimum(times, T)
    xh_v = x_cf_v - np.where(tc <= upto, xhat_corr, 0.0)
    xh_l = np.where(flags, x_cf_l - np.where((tc < times) & (tc <= T), xhat_corr, 0.0), xh_v)
    closed = {
        "X": CadlagPath(times, x_cf_v, np.where(flags, x_cf_l, x_cf_v), flags, True),
        "Xhat": CadlagPath(times, xh_v, xh_l, flags, True),
    }
    panel = align({"X": X, "Z": Z, "M": Mst})
    zeta_v = np.where(tau <= T, np.inf, T) if T == 0.25 else np.full(paths, np.inf)
    meta = {
        "model": "sec5-1", "T": T, "n": n, "horizon": horizon,
        "seed": stream.seed, "stream_id": stream.stream_id, "paths": paths,
        "pure_jump": True, "bracket_locally_integrable": False,
        "zero_hit": "hit", "eta_accessibility": "infinite", "heavy_tailed": True,
    }
    return Scenario(
        panel=panel, horizon=horizon, meta=meta,
        stopping_times={"tau1": StoppingTimeObs(tau, "jump"),
                        "zero_time": StoppingTimeObs(zeta_v, np.where(np.isinf(zeta_v), "never", "hit"))},
        integrands={"H": _indicator_integrand(times, T)},
        closed_forms=closed,
        path_ids=_ids(paths, first_id),
    )


def build_usual_orth(T: float = 1.0, n: int = 1000, stream: RngStream | None = None,
                     paths: int = 1, first_id: int = 0,
                     checkpoints: Sequence[float] = ()) -> Scenario:
    """``X = E(W + M)``, ``Y = E(W - M)`` and ``Z = X^tau`` for a unit Poisson ``N``.

    ``M = N - t`` and ``tau`` is the first jump of ``N``.
    """
    if T <= 0:
        raise BadHorizon("T must be positive")
    stream = stream or RngStream(0)
    ps = simulate_poisson(1.0, T, stream, paths=paths, n=n, extra=checkpoints)
    W = simulate_brownian(T, n, stream, times=ps.N.times)
    W = W.with_data(W.values, W.left_limits, ps.N.jump_flags)
    X = stochastic_exponential(W + ps.M)
    Y = stochastic_exponential(W - ps.M)
    tau = np.asarray(ps.tau1.value)
    Z = stop(X, tau)
    t = ps.N.times
    xc = np.exp(W.values - 1.5 * t) * 2.0 ** ps.N.values
    xl = np.exp(W.left_limits - 1.5 * t) * 2.0 ** ps.N.left_limits
    yc = np.exp(W.values + 0.5 * t) * (t < tau[:, None])
    yl = np.exp(W.left_limits + 0.5 * t) * (t <= tau[:, None])
    flags = ps.N.jump_flags
    closed = {"X": CadlagPath(t, xc, xl, flags), "Y": CadlagPath(t, yc, yl, flags)}
    panel = align({"X": X, "Y": Y, "Z": Z, "W": W, "M": ps.M, "N": ps.N})
    meta = {
        "model": "usual-orth", "T": T, "n": n, "horizon": T,
        "seed": stream.seed, "stream_id": stream.stream_id, "paths": paths,
        "pure_jump": False, "bracket_locally_integrable": True,
        "zero_hit": "none", "eta_accessibility": "infinite", "heavy_tailed": False,
    }
    return Scenario(panel=panel, horizon=T, meta=meta,
                    stopping_times={"tau": StoppingTimeObs(tau, "jump")},
                    closed_forms=closed, path_ids=_ids(paths, first_id))


def build_continuous_control(T: float = 1.0, n: int = 1000, stream: RngStream | None = None,
                             paths: int = 1, theta: float = 0.5, first_id: int = 0,
                             checkpoints: Sequence[float] = ()) -> Scenario:
    """``X = W``, second factor ``W2``, density ``Z = E(theta W)`` in closed form."""
    stream = stream or RngStream(0)
    t = _base_times(T, n, checkpoints)
    times = np.broadcast_to(t, (paths, len(t))).copy()
    W = simulate_brownian(T, n, stream, times=times, sub=1)
    W2 = simulate_brownian(T, n, stream, times=times, sub=3)
    zv = np.exp(theta * W.values - 0.5 * theta * theta * times)
    Z = W.with_data(zv, zv.copy())
    pcov = time_integral(theta * zv, Z)
    panel = align({"X": W, "X2": W2, "Z": Z})
    meta = {
        "model": "continuous", "T": T, "n": n, "horizon": T, "theta": theta,
        "seed": stream.seed, "stream_id": stream.stream_id, "paths": paths,
        "pure_jump": False, "bracket_locally_integrable": True,
        "zero_hit": "none", "eta_accessibility": "infinite", "heavy_tailed": False,
    }
    xprime = W.values - theta * times
    return Scenario(panel=panel, horizon=T, meta=meta,
                    closed_forms={"Xprime": W.with_data(xprime, xprime.copy())},
                    predictable_covariations={"X,Z": pcov, "X2,Z": Z.with_data(np.zeros_like(zv), np.zeros_like(zv), fv_continuous=True)},
                    path_ids=_ids(paths, first_id))


def build_independent_jumps(T: float = 1.0, n: int = 1, stream: RngStream | None = None,
                            paths: int = 1, rate: float = 1.0, first_id: int = 0,
                            checkpoints: Sequence[float] = ()) -> Scenario:
    """Two independent compensated single jumps ``1{tau_i <= t} - rate (t ∧ tau_i)``."""
    stream = stream or RngStream(0)
    g = stream.generator(4)
    taus = g.exponential(1.0 / rate, (paths, 2))
    times, flags = event_grid(T, n, taus, checkpoints)
    comps = {}
    for i, name in enumerate(("X", "Y")):
        tc = taus[:, i:i + 1]
        fl = flags & (times == tc)
        cnt = (times >= tc).astype(float)
        comp = rate * np.minimum(times, tc)
        comps[name] = CadlagPath(times, cnt - comp, cnt - fl - comp, fl, True)
    panel = align(comps)
    meta = {
        "model": "independent-jumps", "T": T, "n": n, "horizon": T, "rate": rate,
        "seed": stream.seed, "stream_id": stream.stream_id, "paths": paths,
        "pure_jump": True, "bracket_locally_integrable": True,
        "zero_hit": "none", "eta_accessibility": "infinite", "heavy_tailed": False,
    }
    return Scenario(panel=panel, horizon=T, meta=meta,
                    stopping_times={"tau_X": StoppingTimeObs(taus[:, 0], "jump"),
                                    "tau_Y": StoppingTimeObs(taus[:, 1], "jump")},
                    path_ids=_ids(paths, first_id))


def build_killed_exponential(T: float = 1.0, n: int = 100, stream: RngStream | None = None,
                             paths: int = 1, first_id: int = 0,
                             checkpoints: Sequence[float] = ()) -> Scenario:
    """Density killed at an exponential time.

    ``X = 1{tau <= t} - (t ∧ tau)`` and ``Z = E(-X) = e^{t ∧ tau} 1{t < tau}``,
    so ``Z`` jumps to zero from a positive left limit at the totally
    inaccessible time ``tau``.
    """
    stream = stream or RngStream(0)
    tau = stream.generator(5).exponential(1.0, paths)
    times, flags = event_grid(T, n, tau[:, None], checkpoints)
    tc = tau[:, None]
    cnt = (times >= tc).astype(float)
    X = CadlagPath(times, cnt - np.minimum(times, tc), cnt - flags - np.minimum(times, tc), flags, True)
    Z = stochastic_exponential(-X)
    panel = align({"X": X, "Z": Z})
    meta = {
        "model": "killed-exponential", "T": T, "n": n, "horizon": T,
        "seed": stream.seed, "stream_id": stream.stream_id, "paths": paths,
        "pure_jump": True, "bracket_locally_integrable": True,
        "zero_hit": "jump", "eta_accessibility": "totally_inaccessible", "heavy_tailed": False,
        "intensity": 1.0,
    }
    return Scenario(panel=panel, horizon=T, meta=meta,
                    stopping_times={"tau": StoppingTimeObs(tau, "jump")},
                    path_ids=_ids(paths, first_id))


BUILDERS = {
    "sec5-1": build_sec5_1,
    "usual-orth": build_usual_orth,
    "continuous": build_continuous_control,
    "independent-jumps": build_independent_jumps,
    "killed-exponential": build_killed_exponential,
}
