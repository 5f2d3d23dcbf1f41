"""Measure changes for semimartingales that may lose equivalence.

The package simulates cadlag paths with exact jump bookkeeping, computes the
generalized Girsanov correction of a martingale under an absolutely
continuous change of measure, builds representation integrands, and checks
all of it against exact finite-space computations and Monte Carlo tests.
"""

from .errors import (
    BadHorizon, CheckFailure, ConfigError, DegenerateSE, InconsistentLeftLimit,
    LenglartError, MissingLocalization, ModeMismatch, NonMonotoneTimes, NotApplicable,
    ZeroCell, ZeroDensity,
)
from .paths import CadlagPath, PathPanel, StoppingTimeObs, align, make_path, read_csv, stop, write_csv
from .calculus import IntegrandPath, quadratic_covariation, stochastic_integral

__version__ = "0.1.0"
