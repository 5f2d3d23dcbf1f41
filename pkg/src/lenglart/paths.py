"""Cadlag paths on event-augmented grids.

A :class:`CadlagPath` stores, for every grid time, the right value and the
left limit of the path, together with a flag marking genuine jump events.
Arrays may carry leading batch axes: ``times[..., k]`` is the k-th grid time
of each path, so a batch of ``P`` paths has arrays of shape ``(P, K)``.  Rows
may have different grids, which lets every path carry its own jump times
exactly.

Grid points that are not events are *neutral*: inserting a point whose right
value and left limit both carry the previous value forward changes none of
the Riemann sums or bracket sums computed on the path.  Batches use such
points to pad rows to a common width.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InconsistentLeftLimit, NonMonotoneTimes

__all__ = [
    "CadlagPath",
    "StoppingTimeObs",
    "PathPanel",
    "make_path",
    "stop",
    "align",
    "write_csv",
    "read_csv",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _is_float(a: np.ndarray) -> bool:
    return a.dtype.kind == "f"


def _same(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if _is_float(a) and _is_float(b):
        return (a == b) | (np.isnan(a) & np.isnan(b))
    return a == b


@dataclass(frozen=True, eq=False)
class CadlagPath:
    """One realized path, or a batch of paths along the leading axes.

    ``fv_continuous`` declares that the part of the path between events has
    finite variation (a deterministic drift, a compensator).  Such parts do
    not contribute to quadratic covariations.
    """

    times: np.ndarray
    values: np.ndarray
    left_limits: np.ndarray
    jump_flags: np.ndarray
    fv_continuous: bool = False

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values)
        left = np.asarray(self.left_limits)
        flags = np.asarray(self.jump_flags, dtype=bool)
        if values.dtype.kind in "iub":
            values = values.astype(float)
        if left.dtype.kind in "iub":
            left = left.astype(float)
        if not (times.shape == values.shape == left.shape == flags.shape):
            raise ValueError(
                f"shape mismatch: times {times.shape}, values {values.shape}, "
                f"left_limits {left.shape}, jump_flags {flags.shape}"
            )
        if times.ndim == 0 or times.shape[-1] == 0:
            raise ValueError("a path needs at least one time")
        if np.any(times[..., 0] != 0.0):
            raise NonMonotoneTimes("times must start at 0")
        if times.shape[-1] > 1 and np.any(np.diff(times, axis=-1) <= 0):
            raise NonMonotoneTimes("times must be strictly increasing")
        if not np.all(_same(left[..., 0], values[..., 0])):
            raise InconsistentLeftLimit("left limit at time 0 must equal the initial value")
        still = ~flags
        if np.any(still & ~_same(values, left)):
            raise InconsistentLeftLimit("non-jump entry with value != left limit")
        for name, arr in (("times", times), ("values", values),
                          ("left_limits", left), ("jump_flags", flags)):
            object.__setattr__(self, name, _freeze(arr))

    # -- shape helpers -------------------------------------------------
    @property
    def batch_shape(self) -> tuple:
        return self.times.shape[:-1]

    @property
    def n_paths(self) -> int:
        return int(np.prod(self.batch_shape)) if self.batch_shape else 1

    @property
    def horizon(self):
        return self.times[..., -1]

    def __len__(self) -> int:
        return self.times.shape[-1]

    def row(self, i) -> "CadlagPath":
        return CadlagPath(self.times[i], self.values[i], self.left_limits[i],
                          self.jump_flags[i], self.fv_continuous)

    def take(self, rows) -> "CadlagPath":
        rows = np.asarray(rows)
        return CadlagPath(self.times[rows], self.values[rows], self.left_limits[rows],
                          self.jump_flags[rows], self.fv_continuous)

    # -- increments ----------------------------------------------------
    @property
    def jumps(self) -> np.ndarray:
        """Jump sizes ``value - left_limit`` at every grid time."""
        return self.values - self.left_limits

    @property
    def continuous_increments(self) -> np.ndarray:
        """Increment between consecutive grid times, excluding the jump.

        Entry ``k`` is ``left_limits[k] - values[k-1]``; entry 0 is zero.
        """
        inc = np.zeros_like(self.values)
        inc[..., 1:] = self.left_limits[..., 1:] - self.values[..., :-1]
        return inc

    # -- evaluation ----------------------------------------------------
    def _index_le(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("evaluation time must be nonnegative")
        if t.ndim:
            t = t[..., None]
        return np.sum(self.times <= t, axis=-1) - 1

    def value_at(self, t) -> np.ndarray:
        """Right value at time ``t`` (scalar, or one time per path)."""
        idx = self._index_le(t)
        if not self.batch_shape:
            return self.values[int(idx)]
        return np.take_along_axis(self.values, idx[..., None], axis=-1)[..., 0]

    def left_limit_at(self, t) -> np.ndarray:
        """Left limit at time ``t`` (carry-forward between grid times)."""
        idx = self._index_le(t)
        if not self.batch_shape:
            i = int(idx)
            return self.left_limits[i] if self.times[i] == float(t) else self.values[i]
        idx = np.asarray(idx)[..., None]
        tt = np.take_along_axis(self.times, idx, axis=-1)[..., 0]
        lv = np.take_along_axis(self.left_limits, idx, axis=-1)[..., 0]
        rv = np.take_along_axis(self.values, idx, axis=-1)[..., 0]
        return np.where(tt == np.asarray(t, dtype=float), lv, rv)

    # -- construction helpers ------------------------------------------
    def with_data(self, values, left_limits, jump_flags=None, fv_continuous=None) -> "CadlagPath":
        return CadlagPath(
            self.times,
            values,
            left_limits,
            self.jump_flags if jump_flags is None else jump_flags,
            self.fv_continuous if fv_continuous is None else fv_continuous,
        )

    def apply(self, func) -> "CadlagPath":
        """Apply ``func`` elementwise to right values and left limits."""
        return self.with_data(func(self.values), func(self.left_limits))

    def jump_part(self) -> "CadlagPath":
        """The pure-jump path ``t -> sum_{s <= t} jump(s)``."""
        cum = np.cumsum(self.jumps, axis=-1)
        return self.with_data(cum, cum - self.jumps, fv_continuous=True)

    def shift_to_zero(self) -> "CadlagPath":
        x0 = self.values[..., :1]
        return self.with_data(self.values - x0, self.left_limits - x0)

    # -- arithmetic ----------------------------------------------------
    def _binary(self, other, op, fv_rule) -> "CadlagPath":
        if isinstance(other, CadlagPath):
            a, b = _co_grid(self, other)
            return CadlagPath(a.times, op(a.values, b.values), op(a.left_limits, b.left_limits),
                              a.jump_flags | b.jump_flags, fv_rule(a.fv_continuous, b.fv_continuous))
        other = np.asarray(other)
        if other.ndim:
            other = other[..., None]
        return self.with_data(op(self.values, other), op(self.left_limits, other))

    def __add__(self, other):
        return self._binary(other, np.add, lambda a, b: a and b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract, lambda a, b: a and b)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self.with_data(-self.values, -self.left_limits)

    def __mul__(self, other):
        return self._binary(other, np.multiply, lambda a, b: a and b)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, CadlagPath):
            raise TypeError("path division must go through a density guard")
        return self._binary(other, np.true_divide, lambda a, b: a and b)

    def __repr__(self) -> str:
        kind = f"batch{self.batch_shape}" if self.batch_shape else "path"
        return f"CadlagPath({kind}, K={len(self)}, jumps={int(self.jump_flags.sum())})"


def make_path(times, values, left_limits, jump_flags, fv_continuous: bool = False) -> CadlagPath:
    """Validate and build a :class:`CadlagPath` from copies of the inputs."""
    return CadlagPath(
        np.array(times, dtype=float, copy=True),
        np.array(values, copy=True),
        np.array(left_limits, copy=True),
        np.array(jump_flags, dtype=bool, copy=True),
        fv_continuous,
    )


@dataclass(frozen=True)
class StoppingTimeObs:
    """Observed value of a stopping time on one path or on a batch.

    ``kind`` labels finite outcomes (``hit`` for a continuous approach,
    ``jump`` for a jump event).  Infinite entries are of kind ``never``.
    """

    value: float | np.ndarray
    kind: str | np.ndarray = "jump"

    def __post_init__(self):
        v = np.asarray(self.value, dtype=float)
        if np.any(np.isnan(v)) or np.any(v < 0):
            raise ValueError("stopping time must be >= 0")
        k = np.asarray(self.kind, dtype=object)
        if k.ndim == 0:
            if v.ndim == 0:
                if (str(k) == "never") != math.isinf(float(v)):
                    raise ValueError("kind 'never' iff value is +infinity")
            k = np.where(np.isinf(v), "never", str(k)) if v.ndim else k
        else:
            if k.shape != v.shape:
                raise ValueError("kind array must match value shape")
            if np.any((k == "never") != np.isinf(v)):
                raise ValueError("kind 'never' iff value is +infinity")
        object.__setattr__(self, "value", float(v) if v.ndim == 0 else _freeze(v))
        object.__setattr__(self, "kind", str(k) if np.ndim(k) == 0 else k)

    @classmethod
    def never(cls, shape=()) -> "StoppingTimeObs":
        if shape:
            return cls(np.full(shape, np.inf), np.full(shape, "never", dtype=object))
        return cls(math.inf, "never")

    @property
    def finite(self):
        return np.isfinite(self.value)


@dataclass(frozen=True, eq=False)
class PathPanel:
    """Named components sharing one time grid and one set of jump flags."""

    times: np.ndarray
    components: Mapping[str, CadlagPath]

    def __post_init__(self):
        comps = dict(self.components)
        for name, p in comps.items():
            if p.times.shape != self.times.shape or not np.array_equal(p.times, self.times):
                raise ValueError(f"component {name!r} is not on the panel grid")
        flags = [p.jump_flags for p in comps.values()]
        if flags and any(not np.array_equal(f, flags[0]) for f in flags):
            raise ValueError("components must share jump flags")
        object.__setattr__(self, "components", comps)

    def __getitem__(self, name: str) -> CadlagPath:
        return self.components[name]

    def __contains__(self, name: str) -> bool:
        return name in self.components

    @property
    def names(self) -> list[str]:
        return list(self.components)

    def with_component(self, name: str, path: CadlagPath) -> "PathPanel":
        return align({**self.components, name: path})


# ----------------------------------------------------------------------
# resampling and alignment

def _resample_row(times, values, left, flags, new_times):
    pos = np.searchsorted(times, new_times, side="right") - 1
    exact = times[pos] == new_times
    v = values[pos]
    lv = np.where(exact, left[pos], values[pos])
    f = np.where(exact, flags[pos], False)
    return v, lv, f


def _pad_times(t: np.ndarray, width: int) -> np.ndarray:
    """Add neutral points inside the largest gap until ``len == width``."""
    m = width - len(t)
    if m <= 0:
        return t
    if len(t) == 1:
        raise ValueError("cannot pad a single-point grid")
    gaps = np.diff(t)
    j = int(np.argmax(gaps))
    extra = t[j] + gaps[j] * np.arange(1, m + 1) / (m + 1)
    return np.sort(np.concatenate([t, extra]))


def _co_grid(a: CadlagPath, b: CadlagPath) -> tuple[CadlagPath, CadlagPath]:
    if a.times is b.times or (a.times.shape == b.times.shape and np.array_equal(a.times, b.times)):
        return a, b
    panel = align([a, b])
    return panel.components["0"], panel.components["1"]


def align(paths: Sequence[CadlagPath] | Mapping[str, CadlagPath]) -> PathPanel:
    """Merge the grids of ``paths`` into one panel.

    Every event time of every input is kept.  Each component is carried
    forward exactly onto the merged grid and all components receive the union
    of the jump flags.  A list input yields components named ``"0"``, ``"1"``...
    """
    if isinstance(paths, Mapping):
        named = dict(paths)
    else:
        named = {str(i): p for i, p in enumerate(paths)}
    if not named:
        raise ValueError("nothing to align")
    plist = list(named.values())
    bshape = plist[0].batch_shape
    if any(p.batch_shape != bshape for p in plist):
        raise ValueError("paths must share the batch shape")

    first = plist[0].times
    if all(p.times.shape == first.shape and np.array_equal(p.times, first) for p in plist):
        times = first
        flags = np.logical_or.reduce([p.jump_flags for p in plist])
        comps = {n: p.with_data(p.values, p.left_limits, flags) for n, p in named.items()}
        return PathPanel(times, comps)

    if not bshape:
        times = plist[0].times
        for p in plist[1:]:
            times = np.union1d(times, p.times)
        parts = {n: _resample_row(p.times, p.values, p.left_limits, p.jump_flags, times)
                 for n, p in named.items()}
        flags = np.logical_or.reduce([f for _, _, f in parts.values()])
        comps = {n: CadlagPath(times, v, lv, flags, named[n].fv_continuous)
                 for n, (v, lv, _) in parts.items()}
        return PathPanel(times, comps)

    flat = {n: CadlagPath(p.times.reshape(-1, len(p)), p.values.reshape(-1, len(p)),
                          p.left_limits.reshape(-1, len(p)),
                          p.jump_flags.reshape(-1, len(p)), p.fv_continuous)
            for n, p in named.items()}
    nrows = plist[0].n_paths
    unions = []
    for r in range(nrows):
        t = flat[next(iter(flat))].times[r]
        for p in list(flat.values())[1:]:
            t = np.union1d(t, p.times[r])
        unions.append(t)
    width = max(len(t) for t in unions)
    unions = [_pad_times(t, width) for t in unions]
    new_t = np.stack(unions)
    out = {}
    flag_acc = np.zeros(new_t.shape, dtype=bool)
    for n, p in flat.items():
        vals, lefts, fl = [], [], []
        for r in range(nrows):
            v, lv, f = _resample_row(p.times[r], p.values[r], p.left_limits[r],
                                     p.jump_flags[r], new_t[r])
            vals.append(v)
            lefts.append(lv)
            fl.append(f)
        fl = np.stack(fl)
        flag_acc |= fl
        out[n] = (np.stack(vals), np.stack(lefts))
    shape = bshape + (width,)
    times = new_t.reshape(shape)
    flags = flag_acc.reshape(shape)
    comps = {n: CadlagPath(times, v.reshape(shape), lv.reshape(shape), flags, flat[n].fv_continuous)
             for n, (v, lv) in out.items()}
    return PathPanel(times, comps)


# ----------------------------------------------------------------------
# stopping

def _sigma_array(sigma) -> np.ndarray:
    if isinstance(sigma, StoppingTimeObs):
        return np.asarray(sigma.value, dtype=float)
    return np.asarray(sigma, dtype=float)


def stop(path: CadlagPath, sigma) -> CadlagPath:
    """The stopped path ``t -> path(t ∧ sigma)``.

    ``sigma`` is a :class:`StoppingTimeObs`, a number, or one time per path.
    A finite ``sigma`` inside the horizon that is not a grid time is inserted
    as a grid time (values carried forward from the previous grid time).
    The jump at ``sigma`` itself, if any, is kept.
    """
    sig = _sigma_array(sigma)
    if np.any(sig < 0):
        raise ValueError("stopping time must be >= 0")
    times, values, left, flags = path.times, path.values, path.left_limits, path.jump_flags

    if not path.batch_shape:
        s = float(sig)
        if s < times[-1] and not np.any(times == s):
            new_t = np.sort(np.append(times, s))
            values, left, flags = _resample_row(times, values, left, flags, new_t)
            times = new_t
        idx = int(np.sum(times <= s)) - 1
        after = np.arange(len(times)) > idx
    else:
        sig = np.broadcast_to(sig, path.batch_shape)
        present = np.any(times == sig[..., None], axis=-1)
        need = (sig < times[..., -1]) & ~present
        if np.any(need):
            gaps = np.diff(times, axis=-1)
            j = np.argmax(gaps, axis=-1)[..., None]
            filler = (np.take_along_axis(times, j, axis=-1)
                      + 0.5 * np.take_along_axis(gaps, j, axis=-1))[..., 0]
            ins = np.where(need, sig, filler)
            cand = np.concatenate([times, ins[..., None]], axis=-1)
            order = np.argsort(cand, axis=-1, kind="stable")
            new_t = np.take_along_axis(cand, order, axis=-1)
            # the inserted point (never at position 0) copies its predecessor
            is_new = order == times.shape[-1]
            prev = np.concatenate([order[..., :1], order[..., :-1]], axis=-1)
            src = np.where(is_new, prev, order)
            v = np.take_along_axis(values, src, axis=-1)
            lv = np.where(is_new, v, np.take_along_axis(left, src, axis=-1))
            fl = np.where(is_new, False, np.take_along_axis(flags, src, axis=-1))
            times, values, left, flags = new_t, v, lv, fl
        idx = np.sum(times <= sig[..., None], axis=-1) - 1
        after = np.arange(times.shape[-1]) > idx[..., None]

    if not np.any(after):
        return CadlagPath(times, values, left, flags, path.fv_continuous)
    if path.batch_shape:
        frozen = np.take_along_axis(values, np.asarray(idx)[..., None], axis=-1)
    else:
        frozen = values[idx]
    values = np.where(after, frozen, values)
    left = np.where(after, frozen, left)
    flags = np.where(after, False, flags)
    return CadlagPath(times, values, left, flags, path.fv_continuous)


# ----------------------------------------------------------------------
# CSV serialization

CSV_COLUMNS = ("time", "left_limit", "value", "jump_flag")


def write_csv(path: CadlagPath, file: str | Path) -> None:
    """Write a path as CSV with columns ``time,left_limit,value,jump_flag``.

    Batches get a leading ``path`` column holding the row index.
    """
    file = Path(file)
    with file.open("w", newline="") as fh:
        w = csv.writer(fh)
        if not path.batch_shape:
            w.writerow(CSV_COLUMNS)
            for t, l, v, f in zip(path.times, path.left_limits, path.values, path.jump_flags):
                w.writerow([repr(float(t)), repr(float(l)), repr(float(v)), int(f)])
            return
        flat = path.times.reshape(-1, len(path))
        fl = path.left_limits.reshape(flat.shape)
        fv = path.values.reshape(flat.shape)
        ff = path.jump_flags.reshape(flat.shape)
        w.writerow(("path",) + CSV_COLUMNS)
        for r in range(flat.shape[0]):
            for t, l, v, f in zip(flat[r], fl[r], fv[r], ff[r]):
                w.writerow([r, repr(float(t)), repr(float(l)), repr(float(v)), int(f)])


def read_csv(file: str | Path, fv_continuous: bool = False) -> CadlagPath:
    with Path(file).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("empty path file")
    if "path" not in rows[0]:
        cols = {c: [r[c] for r in rows] for c in CSV_COLUMNS}
        return make_path([float(x) for x in cols["time"]], [float(x) for x in cols["value"]],
                         [float(x) for x in cols["left_limit"]],
                         [bool(int(x)) for x in cols["jump_flag"]], fv_continuous)
    by_row: dict[int, list] = {}
    for r in rows:
        by_row.setdefault(int(r["path"]), []).append(r)
    lens = {len(v) for v in by_row.values()}
    if len(lens) != 1:
        raise ValueError("batch rows must have equal length")
    keys = sorted(by_row)

    def col(name, conv):
        return [[conv(r[name]) for r in by_row[k]] for k in keys]

    return make_path(col("time", float), col("value", float), col("left_limit", float),
                     col("jump_flag", lambda x: bool(int(x))), fv_continuous)


def concat_batches(paths: Iterable[CadlagPath]) -> CadlagPath:
    """Stack 2-D batches with equal grid width along the path axis."""
    plist = list(paths)
    return CadlagPath(
        np.concatenate([p.times for p in plist]),
        np.concatenate([p.values for p in plist]),
        np.concatenate([p.left_limits for p in plist]),
        np.concatenate([p.jump_flags for p in plist]),
        all(p.fv_continuous for p in plist),
    )
