"""Exact computations on finite filtered probability spaces.

A space is a list of atoms with weights and an increasing list of stages.
Each stage carries a partition of the atoms, and each partition refines the
one before.  A stage written ``t-`` is a predictable stage: it holds the
information available just before ``t``.  Processes are atom-by-stage tables.

Arithmetic is exact: rational weights and values are stored as
:class:`fractions.Fraction` in object arrays, and linear solves go through
sympy.  Float inputs are accepted and then carried as floats.

To use the path engine on a finite space, stage ``j`` is mapped to time
``j`` and every stage transition becomes a jump.  With that mapping,
predictable evaluation reads the previous stage and optional evaluation
reads the current stage, which are exactly the discrete-time conventions.

Text format (one directive per line, ``#`` starts a comment)::

    atom <id> <weight>
    stage <label> <time> [predictable]
    partition <label> : <ids> | <ids> | ...
    process <name> <label> : <id>=<value> <id>=<value> ...

Weights and values are integers, fractions ``a/b`` or decimals.  Stages are
listed in increasing order.  Every process needs a line for every stage.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import sympy

from .errors import ZeroCell
from .paths import CadlagPath

__all__ = [
    "FiniteSpace",
    "DiscreteProcess",
    "FiniteModel",
    "MartingaleCheck",
    "conditional_expectation",
    "predictable_compensator_discrete",
    "martingale_check_exact",
    "dimension_check",
    "span_rank",
    "eta_jump_compensator",
    "mrp_integrands",
    "q_weights",
    "example_521",
    "parse_model",
    "load_model",
    "dump_model",
    "random_space",
    "random_adapted",
    "random_martingale",
    "random_density",
]


def _num(x):
    if isinstance(x, (Fraction, int, np.integer)):
        return Fraction(int(x)) if not isinstance(x, Fraction) else x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, sympy.Rational):
        return Fraction(int(x.p), int(x.q))
    return x


def _obj(values) -> np.ndarray:
    arr = np.empty(np.shape(values), dtype=object)
    flat = np.asarray(values, dtype=object).reshape(-1)
    arr.reshape(-1)[:] = [_num(v) for v in flat]
    return arr


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    atoms: tuple[str, ...]
    weights: np.ndarray
    stages: tuple[str, ...]
    stage_times: tuple[float, ...]
    predictable: tuple[bool, ...]
    partitions: tuple[tuple[frozenset, ...], ...]

    def __post_init__(self):
        w = _obj(self.weights)
        object.__setattr__(self, "weights", w)
        n = len(self.atoms)
        if len(set(self.atoms)) != n or w.shape != (n,):
            raise ValueError("atom ids must be unique, one weight per atom")
        if any(x < 0 for x in w):
            raise ValueError("weights must be nonnegative")
        total = sum(w)
        exact = all(isinstance(x, Fraction) for x in w)
        if (exact and total != 1) or (not exact and abs(float(total) - 1.0) > 1e-14):
            raise ValueError(f"weights sum to {total}, not 1")
        k = len(self.stages)
        if not (k == len(self.stage_times) == len(self.predictable) == len(self.partitions)):
            raise ValueError("one time, flag and partition per stage")
        if any(b < a for a, b in zip(self.stage_times, self.stage_times[1:])):
            raise ValueError("stage times must be nondecreasing")
        everyone = frozenset(range(n))
        for s, part in zip(self.stages, self.partitions):
            cells = list(part)
            if frozenset().union(*cells) != everyone or sum(len(c) for c in cells) != n:
                raise ValueError(f"stage {s!r}: partition must cover every atom once")
        if k and len(self.partitions[0]) != 1:
            raise ValueError("the first partition must be trivial")
        for a, b, s in zip(self.partitions, self.partitions[1:], self.stages[1:]):
            if not all(any(c <= d for d in a) for c in b):
                raise ValueError(f"stage {s!r} does not refine the previous stage")

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def stage_index(self, stage) -> int:
        if isinstance(stage, (int, np.integer)):
            return int(stage)
        return self.stages.index(stage)

    def cells(self, stage) -> tuple[frozenset, ...]:
        return self.partitions[self.stage_index(stage)]

    def atom_index(self, atom_id: str) -> int:
        return self.atoms.index(atom_id)

    def with_weights(self, weights) -> "FiniteSpace":
        return FiniteSpace(self.atoms, _obj(weights), self.stages, self.stage_times,
                           self.predictable, self.partitions)


@dataclass(frozen=True, eq=False)
class DiscreteProcess:
    space: FiniteSpace
    table: np.ndarray
    name: str = ""

    def __post_init__(self):
        t = _obj(self.table)
        if t.shape != (self.space.n_atoms, self.space.n_stages):
            raise ValueError("table must be atoms x stages")
        object.__setattr__(self, "table", t)

    def measurable_at(self, stage) -> bool:
        k = self.space.stage_index(stage)
        col = self.table[:, k]
        return all(len({col[i] for i in cell}) == 1 for cell in self.space.partitions[k])

    @property
    def adapted(self) -> bool:
        return all(self.measurable_at(k) for k in range(self.space.n_stages))

    def column(self, stage) -> np.ndarray:
        return self.table[:, self.space.stage_index(stage)]

    def __add__(self, other):
        o = other.table if isinstance(other, DiscreteProcess) else other
        return DiscreteProcess(self.space, self.table + o, self.name)

    def __sub__(self, other):
        o = other.table if isinstance(other, DiscreteProcess) else other
        return DiscreteProcess(self.space, self.table - o, self.name)

    def __mul__(self, other):
        o = other.table if isinstance(other, DiscreteProcess) else other
        return DiscreteProcess(self.space, self.table * o, self.name)

    __rmul__ = __mul__

    def __neg__(self):
        return DiscreteProcess(self.space, -self.table, self.name)


@dataclass(frozen=True, eq=False)
class FiniteModel:
    """A finite space with named processes on it."""

    space: FiniteSpace
    processes: Mapping[str, DiscreteProcess] = field(default_factory=dict)

    def __getitem__(self, name: str) -> DiscreteProcess:
        return self.processes[name]

    def __contains__(self, name: str) -> bool:
        return name in self.processes

    def with_process(self, name: str, proc: DiscreteProcess) -> "FiniteModel":
        return FiniteModel(self.space, {**self.processes, name: proc})

    @property
    def times(self) -> np.ndarray:
        k = self.space.n_stages
        return np.broadcast_to(np.arange(k, dtype=float), (self.space.n_atoms, k)).copy()

    def to_path(self, proc: DiscreteProcess | str) -> CadlagPath:
        """Atoms as rows, stage ``j`` at time ``j``, every transition a jump."""
        if isinstance(proc, str):
            proc = self.processes[proc]
        v = proc.table
        left = v.copy()
        left[:, 1:] = v[:, :-1]
        flags = np.ones(v.shape, bool)
        flags[:, 0] = False
        return CadlagPath(self.times, v, left, flags)

    def from_path(self, path: CadlagPath, name: str = "") -> DiscreteProcess:
        return DiscreteProcess(self.space, path.values, name)


@dataclass(frozen=True)
class MartingaleCheck:
    ok: bool
    violation: object

    def __bool__(self) -> bool:
        return self.ok


# ----------------------------------------------------------------------
# core oracle operations

def _weights(space: FiniteSpace, weights) -> np.ndarray:
    return space.weights if weights is None else _obj(weights)


def conditional_expectation(column, space: FiniteSpace, stage, weights=None,
                            zero_cells: str = "raise") -> np.ndarray:
    """Cellwise weighted average of ``column`` over the partition at ``stage``.

    A cell of zero weight raises :class:`ZeroCell`, or is left as ``None``
    with ``zero_cells="none"``.
    """
    w = _weights(space, weights)
    col = _obj(column)
    out = np.empty(space.n_atoms, dtype=object)
    for cell in space.cells(stage):
        idx = sorted(cell)
        mass = sum(w[i] for i in idx)
        if mass == 0:
            if zero_cells == "raise":
                raise ZeroCell(f"cell {[space.atoms[i] for i in idx]} has zero weight")
            val = None
        else:
            val = sum(w[i] * col[i] for i in idx) / mass
        for i in idx:
            out[i] = val
    return out


def predictable_compensator_discrete(A: DiscreteProcess, weights=None) -> DiscreteProcess:
    """``A^p_k = sum_{j <= k} E[A_j - A_{j-1} | F_{j-1}]`` with ``A^p_0 = 0``."""
    sp = A.space
    out = np.empty(A.table.shape, dtype=object)
    out[:, 0] = Fraction(0)
    for j in range(1, sp.n_stages):
        inc = A.table[:, j] - A.table[:, j - 1]
        ce = conditional_expectation(inc, sp, j - 1, weights, zero_cells="none")
        ce = np.array([Fraction(0) if c is None else c for c in ce], dtype=object)
        out[:, j] = out[:, j - 1] + ce
    return DiscreteProcess(sp, out, f"{A.name}^p")


def martingale_check_exact(X: DiscreteProcess, weights=None) -> MartingaleCheck:
    """Check ``E[X_{k+1} | F_k] = X_k`` on every cell of positive weight.

    Atoms of zero weight are ignored, so the check under an absolutely
    continuous measure only looks at its support.  Returns the largest
    absolute violation.
    """
    sp = X.space
    w = _weights(sp, weights)
    worst = Fraction(0)
    for k in range(sp.n_stages - 1):
        for cell in sp.partitions[k]:
            idx = sorted(cell)
            mass = sum(w[i] for i in idx)
            if mass == 0:
                continue
            nxt = sum(w[i] * X.table[i, k + 1] for i in idx) / mass
            for i in idx:
                if w[i] == 0:
                    continue
                v = abs(nxt - X.table[i, k])
                if v > worst:
                    worst = v
    return MartingaleCheck(worst == 0, worst)


def _children(space: FiniteSpace, k: int, cell: frozenset, w) -> list[list[int]]:
    kids = [sorted(c) for c in space.partitions[k + 1] if c <= cell]
    return [c for c in kids if sum(w[i] for i in c) != 0]


def dimension_check(space: FiniteSpace, weights=None) -> int:
    """Minimal number of generators of the martingale space.

    On each cell of positive weight the martingale increments to the next
    stage form a space of dimension ``(children of positive weight) - 1``.
    The minimal driver dimension is the largest of these.
    """
    w = _weights(space, weights)
    d = 0
    for k in range(space.n_stages - 1):
        for cell in space.partitions[k]:
            if sum(w[i] for i in cell) == 0:
                continue
            d = max(d, len(_children(space, k, cell, w)) - 1)
    return d


def _increment_matrix(procs: Sequence[DiscreteProcess], k: int, kids: list[list[int]]):
    rows = []
    for p in procs:
        rows.append([sympy.Rational(str(p.table[c[0], k + 1] - p.table[c[0], k]))
                     if isinstance(p.table[c[0], k], Fraction)
                     else sympy.nsimplify(p.table[c[0], k + 1] - p.table[c[0], k])
                     for c in kids])
    return sympy.Matrix(rows).T  # children x generators


def span_rank(generators: Sequence[DiscreteProcess], weights=None) -> int:
    """Largest per-cell rank of the increments of ``generators``.

    Integrals against the generators reach exactly the martingale increments
    in their span, so this is the dimension that the generators represent.
    """
    sp = generators[0].space
    w = _weights(sp, weights)
    r = 0
    for k in range(sp.n_stages - 1):
        for cell in sp.partitions[k]:
            if sum(w[i] for i in cell) == 0:
                continue
            kids = _children(sp, k, cell, w)
            if len(kids) < 2:
                continue
            r = max(r, _increment_matrix(generators, k, kids).rank())
    return r


def q_weights(model: FiniteModel, density: str = "Z") -> np.ndarray:
    """Atom weights of ``Q`` given by the terminal value of the density."""
    z = model[density].table[:, -1]
    return model.space.weights * z


def eta_jump_compensator(model: FiniteModel, component: str | None = None,
                         density: str = "Z") -> DiscreteProcess:
    """Exact compensator of ``dX_eta 1_{[eta, inf)}`` under ``P``.

    ``eta`` is the stage at which the density jumps to zero from a positive
    value.
    """
    name = component or "X"
    X = model[name].table
    Z = model[density].table
    sp = model.space
    A = np.empty(X.shape, dtype=object)
    A[:, 0] = Fraction(0)
    for j in range(1, sp.n_stages):
        at_eta = [(Z[i, j] == 0) and (Z[i, j - 1] > 0) for i in range(sp.n_atoms)]
        A[:, j] = A[:, j - 1] + np.array(
            [(X[i, j] - X[i, j - 1]) if at_eta[i] else Fraction(0) for i in range(sp.n_atoms)],
            dtype=object)
    return predictable_compensator_discrete(DiscreteProcess(sp, A, f"jump of {name} at eta"))


def mrp_integrands(model: FiniteModel, target: DiscreteProcess, drivers: Sequence[str],
                   weights=None) -> list[DiscreteProcess]:
    """Solve ``target = target_0 + sum_i K^i . driver^i`` exactly.

    Column ``k`` of each returned table is the integrand used on the
    transition into stage ``k`` (so it is measurable at stage ``k - 1``).
    Free directions are set to zero.  Raises ``ValueError`` when the target
    increment is outside the span of the driver increments on some cell.
    """
    sp = model.space
    w = _weights(sp, weights)
    procs = [model[d] for d in drivers]
    K = [np.full((sp.n_atoms, sp.n_stages), Fraction(0), dtype=object) for _ in drivers]
    for k in range(sp.n_stages - 1):
        for cell in sp.partitions[k]:
            if sum(w[i] for i in cell) == 0:
                continue
            kids = _children(sp, k, cell, w)
            if len(kids) < 2:
                if kids:
                    i0 = kids[0][0]
                    if target.table[i0, k + 1] != target.table[i0, k]:
                        raise ValueError("target moves on a cell with a single child")
                continue
            A = _increment_matrix(procs, k, kids)
            b = _increment_matrix([target], k, kids)
            sol, params = A.gauss_jordan_solve(b)
            sol = sol.subs({p: 0 for p in params})
            for g in range(len(drivers)):
                val = _num(sympy.Rational(sol[g, 0]))
                for i in cell:
                    K[g][i, k + 1] = val
    return [DiscreteProcess(sp, K[g], f"K[{d}]") for g, d in enumerate(drivers)]


# ----------------------------------------------------------------------
# the two-coin example

EXAMPLE_521_ATOMS = ("e1+", "e1-", "e0+", "e0-")


def example_521(p=Fraction(3, 10), third_driver: bool = False) -> FiniteModel:
    """Coins ``eps ~ Bernoulli(p)`` and ``xi = +-1``, independent.

    ``X = 1 + eps xi 1_{[1, inf)}``, ``Y = 1 + (1 - eps) xi 1_{[1, inf)}`` and
    ``Z = X``.  Stages are ``0``, ``1-`` and ``1``; the information about the
    coins arrives at ``1``.  With ``third_driver`` the model also carries
    ``E = (eps - p) 1_{[1, inf)}``, which completes ``(X, Y)`` to a driver with
    the representation property under ``P``.
    """
    p = _num(p)
    half = Fraction(1, 2)
    w = [p * half, p * half, (1 - p) * half, (1 - p) * half]
    eps = [1, 1, 0, 0]
    xi = [1, -1, 1, -1]
    full = frozenset(range(4))
    sp = FiniteSpace(EXAMPLE_521_ATOMS, w, ("0", "1-", "1"), (0.0, 1.0, 1.0),
                     (False, True, False),
                     ((full,), (full,), tuple(frozenset({i}) for i in range(4))))
    one = Fraction(1)
    X = [[one, one, one + e * x] for e, x in zip(eps, xi)]
    Y = [[one, one, one + (1 - e) * x] for e, x in zip(eps, xi)]
    procs = {
        "X": DiscreteProcess(sp, X, "X"),
        "Y": DiscreteProcess(sp, Y, "Y"),
        "Z": DiscreteProcess(sp, X, "Z"),
    }
    if third_driver:
        procs["E"] = DiscreteProcess(sp, [[0, 0, e - p] for e in eps], "E")
    return FiniteModel(sp, procs)


# ----------------------------------------------------------------------
# text format

_LINE = re.compile(r"\s+")


def parse_model(text: str) -> FiniteModel:
    atoms: list[str] = []
    weights: list = []
    stages: list[str] = []
    times: list[float] = []
    pred: list[bool] = []
    parts: dict[str, tuple] = {}
    raw_procs: dict[str, dict[str, dict[str, object]]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        try:
            if head == "atom":
                aid, wt = _LINE.split(rest.strip())
                atoms.append(aid)
                weights.append(_parse_number(wt))
            elif head == "stage":
                bits = _LINE.split(rest.strip())
                if len(bits) not in (2, 3) or (len(bits) == 3 and bits[2] != "predictable"):
                    raise ValueError("expected: stage <label> <time> [predictable]")
                stages.append(bits[0])
                times.append(float(bits[1]))
                pred.append(len(bits) == 3)
            elif head == "partition":
                label, _, body = rest.partition(":")
                cells = []
                for chunk in body.split("|"):
                    ids = _LINE.split(chunk.strip())
                    cells.append(frozenset(atoms.index(a) for a in ids if a))
                parts[label.strip()] = tuple(cells)
            elif head == "process":
                lhs, _, body = rest.partition(":")
                name, label = _LINE.split(lhs.strip())
                entries = {}
                for item in _LINE.split(body.strip()):
                    a, _, v = item.partition("=")
                    entries[a] = _parse_number(v)
                raw_procs.setdefault(name, {})[label] = entries
            else:
                raise ValueError(f"unknown directive {head!r}")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    missing = [s for s in stages if s not in parts]
    if missing:
        raise ValueError(f"no partition for stages {missing}")
    sp = FiniteSpace(tuple(atoms), weights, tuple(stages), tuple(times), tuple(pred),
                     tuple(parts[s] for s in stages))
    procs = {}
    for name, by_stage in raw_procs.items():
        tab = np.empty((sp.n_atoms, sp.n_stages), dtype=object)
        for k, s in enumerate(stages):
            if s not in by_stage:
                raise ValueError(f"process {name!r} has no values at stage {s!r}")
            for i, a in enumerate(atoms):
                if a not in by_stage[s]:
                    raise ValueError(f"process {name!r} misses atom {a!r} at stage {s!r}")
                tab[i, k] = by_stage[s][a]
        procs[name] = DiscreteProcess(sp, tab, name)
    return FiniteModel(sp, procs)


def _parse_number(s: str):
    s = s.strip()
    if re.fullmatch(r"[-+]?\d+(/\d+)?", s):
        return Fraction(s)
    return float(s)


def load_model(file: str | Path) -> FiniteModel:
    return parse_model(Path(file).read_text())


def dump_model(model: FiniteModel) -> str:
    sp = model.space
    out = []
    for a, w in zip(sp.atoms, sp.weights):
        out.append(f"atom {a} {w}")
    for s, t, pr in zip(sp.stages, sp.stage_times, sp.predictable):
        out.append(f"stage {s} {t:g}" + (" predictable" if pr else ""))
    for s, part in zip(sp.stages, sp.partitions):
        cells = [" ".join(sp.atoms[i] for i in sorted(c)) for c in sorted(part, key=min)]
        out.append(f"partition {s} : " + " | ".join(cells))
    for name, proc in model.processes.items():
        for k, s in enumerate(sp.stages):
            vals = " ".join(f"{a}={proc.table[i, k]}" for i, a in enumerate(sp.atoms))
            out.append(f"process {name} {s} : {vals}")
    return "\n".join(out) + "\n"


# ----------------------------------------------------------------------
# random instances for property checks

def _random_fraction(rng: np.random.Generator, lo: int = -5, hi: int = 5, den: int = 4) -> Fraction:
    return Fraction(int(rng.integers(lo, hi + 1)), int(rng.integers(1, den + 1)))


def random_space(rng: np.random.Generator, n_atoms: int = 6, n_times: int = 2) -> FiniteSpace:
    """Random space with stages ``0, 1-, 1, 2-, 2, ...`` and rational weights."""
    raw = [int(rng.integers(1, 10)) for _ in range(n_atoms)]
    tot = sum(raw)
    weights = [Fraction(r, tot) for r in raw]
    stages, times, pred, parts = ["0"], [0.0], [False], [(frozenset(range(n_atoms)),)]
    current = [list(range(n_atoms))]
    for t in range(1, n_times + 1):
        for label, is_pred in ((f"{t}-", True), (f"{t}", False)):
            nxt = []
            for cell in current:
                if len(cell) > 1 and rng.random() < 0.7:
                    perm = list(rng.permutation(cell))
                    cut = int(rng.integers(1, len(cell)))
                    nxt.extend([sorted(perm[:cut]), sorted(perm[cut:])])
                else:
                    nxt.append(cell)
            current = nxt
            stages.append(label)
            times.append(float(t))
            pred.append(is_pred)
            parts.append(tuple(frozenset(c) for c in current))
    ids = tuple(f"w{i}" for i in range(n_atoms))
    return FiniteSpace(ids, weights, tuple(stages), tuple(times), tuple(pred), tuple(parts))


def random_adapted(space: FiniteSpace, rng: np.random.Generator, name: str = "X") -> DiscreteProcess:
    tab = np.empty((space.n_atoms, space.n_stages), dtype=object)
    for k, part in enumerate(space.partitions):
        for cell in part:
            v = _random_fraction(rng)
            for i in cell:
                tab[i, k] = v
    return DiscreteProcess(space, tab, name)


def random_martingale(space: FiniteSpace, rng: np.random.Generator, weights=None,
                      name: str = "M") -> DiscreteProcess:
    """``E[xi | F_k]`` for a random terminal ``xi``; zero-weight cells get 0."""
    xi = random_adapted(space, rng).table[:, -1]
    tab = np.empty((space.n_atoms, space.n_stages), dtype=object)
    for k in range(space.n_stages):
        ce = conditional_expectation(xi, space, k, weights, zero_cells="none")
        tab[:, k] = [Fraction(0) if c is None else c for c in ce]
    return DiscreteProcess(space, tab, name)


def random_density(space: FiniteSpace, rng: np.random.Generator, zero_prob: float = 0.3,
                   name: str = "Z") -> DiscreteProcess:
    """Density process of a random ``Q << P`` (some atoms get ``Q``-weight 0)."""
    w = space.weights
    while True:
        raw = [Fraction(0) if rng.random() < zero_prob else Fraction(int(rng.integers(1, 6)))
               for _ in range(space.n_atoms)]
        mass = sum(r * wi for r, wi in zip(raw, w))
        if mass != 0:
            break
    zT = np.array([r / mass for r in raw], dtype=object)
    tab = np.empty((space.n_atoms, space.n_stages), dtype=object)
    for k in range(space.n_stages):
        tab[:, k] = conditional_expectation(zT, space, k)
    return DiscreteProcess(space, tab, name)
