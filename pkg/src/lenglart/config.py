"""Run configuration and its flat text format.

A config file holds one ``key = value`` pair per line.  Blank lines and
anything after ``#`` are ignored, keys are case-sensitive, and a key may
appear only once.  Recognised keys:

==============  ========================================================
``preset``      name of a preset (see ``lenglart list-presets``)
``model``       inline scenario: a model name from ``lenglart.models``
``target``      inline scenario: component to drift-test (default ``X``)
``measure``     inline scenario: ``P`` or ``Q`` (default ``P``)
``paths``       number of simulated paths (integer >= 1)
``grid``        base grid steps ``n`` (integer >= 1)
``T``           horizon (float > 0)
``seed``        root seed (integer >= 0)
``p``           coin probability for the finite presets, ``a/b`` or decimal
``estimator``   ``mean``, ``median_of_means`` or ``median_of_means(k)``
``batch``       paths per simulation chunk (integer >= 1)
``z_max``       z-score threshold for drift tests (float > 0)
``checkpoints`` comma-separated increasing times for drift tests
``out``         output directory
``format``      comma-separated subset of ``json``, ``csv``
==============  ========================================================

Exactly one of ``preset`` and ``model`` must be set.  Command-line flags
override file values.  Unset numeric fields fall back to the preset's
defaults.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError

OUT_ENV = "LENGLART_OUT"
DEFAULT_OUT = "lenglart-reports"

_INT = {"paths", "grid", "seed", "batch"}
_FLOAT = {"T", "z_max"}
_STR = {"preset", "model", "target", "measure", "estimator", "out"}
KEYS = _INT | _FLOAT | _STR | {"p", "checkpoints", "format"}


@dataclass(frozen=True)
class RunConfig:
    preset: str | None = None
    model: str | None = None
    target: str | None = None
    measure: str | None = None
    paths: int | None = None
    grid: int | None = None
    T: float | None = None
    seed: int | None = None
    p: Fraction | None = None
    estimator: str | None = None
    batch: int | None = None
    z_max: float | None = None
    checkpoints: tuple[float, ...] | None = None
    out: str | None = None
    formats: tuple[str, ...] = ("json",)

    def validate(self) -> "RunConfig":
        if (self.preset is None) == (self.model is None):
            raise ConfigError("set exactly one of preset and model")
        for name in ("paths", "grid", "batch"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be >= 1, got {v}")
        if self.seed is not None and self.seed < 0:
            raise ConfigError("seed must be >= 0")
        for name in ("T", "z_max"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.p is not None and not (0 < self.p < 1):
            raise ConfigError(f"p must lie in (0, 1), got {self.p}")
        if self.measure is not None and self.measure not in ("P", "Q"):
            raise ConfigError("measure must be P or Q")
        if self.estimator is not None:
            from .mc import parse_estimator

            try:
                parse_estimator(self.estimator)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.checkpoints is not None:
            cps = self.checkpoints
            if not cps or cps[0] <= 0 or any(b <= a for a, b in zip(cps, cps[1:])):
                raise ConfigError("checkpoints must be increasing positive times")
        bad = [f for f in self.formats if f not in ("json", "csv")]
        if bad or not self.formats:
            raise ConfigError(f"format must be json and/or csv, got {list(self.formats)}")
        return self

    def merged(self, **overrides) -> "RunConfig":
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def out_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)

    def echo(self) -> dict:
        d = asdict(self)
        d["p"] = None if self.p is None else str(self.p)
        d["checkpoints"] = None if self.checkpoints is None else list(self.checkpoints)
        d["formats"] = list(self.formats)
        d.pop("out")  # where the report goes does not change what it says
        return d


def _convert(key: str, raw: str, where: str):
    try:
        if key in _INT:
            return int(raw)
        if key in _FLOAT:
            return float(raw)
        if key == "p":
            return Fraction(raw)
        if key == "checkpoints":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if key == "format":
            return tuple(x.strip() for x in raw.split(",") if x.strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{where}: bad value {raw!r} for {key}") from None
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        if "=" not in body:
            raise ConfigError(f"{where}: expected key = value")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        name = "formats" if key == "format" else key
        if name in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        values[name] = _convert(key, raw, where)
    return RunConfig(**values)


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p))


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for key, value in cfg.echo().items():
        if value is None:
            continue
        if key == "formats":
            key, value = "format", ",".join(value)
        elif key == "checkpoints":
            value = ",".join(repr(float(c)) for c in value)
        lines.append(f"{key} = {value}")
    if cfg.out is not None:
        lines.append(f"out = {cfg.out}")
    return "\n".join(lines) + "\n"
