"""Monte Carlo failure-frequency curves for three identifiability examples.

Each grid cell ``(m, n)`` runs ``trials_per_cell`` independent trials.  Trial
``t`` of cell ``(m, n)`` draws from its own counter-based Philox stream keyed by
``(master_seed, m, n)`` with ``t`` in the counter, so the outcome of a trial
never depends on which worker ran it or in what order.  Work is cut into
chunks of fixed size and counts are summed, which keeps results bit-identical
for any worker count.

Examples:

``A``  bi-orthogonal signals, exhaustive scan of the coordinate-plane family.
``B``  sign vectors, soft projection test against the sign-pattern family.
``C``  Gaussian signals, low-rank search in the convolution kernel.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from .bilinear_core import RankOneInstance, lift_linear_convolution
from .ensembles import (BERNOULLI, BIORTHOGONAL, GAUSSIAN, EnsembleSpec, cell_key,
                        sample_many, trial_generator)
from .identifiability import DEFAULT_DELTA_TEST, detect_ambiguity_exhaustive
from .null_space import conv_rank2_element, family_bernoulli, family_biorthogonal
from .solver import InfeasibleError, SolverConfig, kernel_basis, solve_min_rank_near

__all__ = [
    "EXAMPLES",
    "GENERIC",
    "PLANTED",
    "DEFAULT_TRIALS",
    "CHUNK_SIZE",
    "ExperimentConfig",
    "CellResult",
    "FailureCurve",
    "SlopeFit",
    "InsufficientDataError",
    "trial_signals",
    "trial_failure",
    "run_experiment",
    "run_example_A",
    "run_example_B",
    "run_example_C",
    "fit_slope",
    "fit_slopes",
    "curve_to_csv",
    "slope_record",
]

EXAMPLES = ("A", "B", "C")
GENERIC = "generic"
PLANTED = "planted"
DEFAULT_TRIALS = {"A": 10_000, "B": 5_000, "C": 500}
CHUNK_SIZE = 250
MIN_TRIALS = 100
_EXAMPLE_CODE = {"A": 1, "B": 2, "C": 3}


class InsufficientDataError(ValueError):
    """Fewer than three cells with nonzero failures are available for a fit."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo sweep.

    ``instance`` only matters for Example C: ``"generic"`` draws Gaussian
    signals, ``"planted"`` draws a unit rank-one matrix that sits exactly at
    distance ``sigma_2`` from a rank-two kernel element, so the ambiguity event
    is guaranteed to be reachable.
    """

    example: str
    m_values: tuple[int, ...]
    n_values: tuple[int, ...]
    trials_per_cell: int | None = None
    master_seed: int = 0
    tau: float = 0.2
    delta_prime: float = 0.3
    mu: float = 0.8
    delta_test: float = DEFAULT_DELTA_TEST
    solver: SolverConfig = field(default_factory=SolverConfig)
    instance: str = GENERIC

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise ValueError(f"example must be one of {EXAMPLES}, got {self.example!r}")
        object.__setattr__(self, "m_values", tuple(int(v) for v in self.m_values))
        object.__setattr__(self, "n_values", tuple(int(v) for v in self.n_values))
        if not self.m_values or not self.n_values:
            raise ValueError("m_values and n_values must be non-empty")
        if self.trials_per_cell is None:
            object.__setattr__(self, "trials_per_cell", DEFAULT_TRIALS[self.example])
        if int(self.trials_per_cell) != self.trials_per_cell or self.trials_per_cell < MIN_TRIALS:
            raise ValueError(f"trials_per_cell must be an integer of at least {MIN_TRIALS}")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.instance not in (GENERIC, PLANTED):
            raise ValueError(f"instance must be {GENERIC!r} or {PLANTED!r}")
        if self.instance == PLANTED and self.example != "C":
            raise ValueError("planted instances are only defined for Example C")
        if isinstance(self.solver, dict):
            object.__setattr__(self, "solver", SolverConfig.from_mapping(self.solver))
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 0.0 <= self.delta_prime < 1.0:
            raise ValueError("delta_prime must lie in [0, 1)")
        if not 0.0 <= self.delta_test < 1.0:
            raise ValueError("delta_test must lie in [0, 1)")
        if not self.cells():
            raise ValueError("the grid has no admissible cells")

    def cells(self) -> list[tuple[int, int]]:
        """Grid cells in row-major order; Example C keeps only ``n >= m``."""
        return [(m, n) for m in self.m_values for n in self.n_values
                if self.example != "C" or n >= m]

    def solver_config(self) -> SolverConfig:
        return replace(self.solver, mu=self.mu)

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown experiment keys: {sorted(unknown)}")
        missing = {"example", "m_values", "n_values"} - set(data)
        if missing:
            raise KeyError(f"missing experiment keys: {sorted(missing)}")
        data = dict(data)
        if "solver" in data:
            data["solver"] = SolverConfig.from_mapping(dict(data["solver"]))
        return cls(**data)


@dataclass(frozen=True)
class CellResult:
    m: int
    n: int
    trials: int
    failures: int
    unconverged: int = 0
    infeasible: int = 0

    @property
    def failure_rate(self) -> float:
        return self.failures / self.trials

    @property
    def stderr(self) -> float:
        p = self.failure_rate
        return math.sqrt(p * (1.0 - p) / self.trials)


@dataclass(frozen=True)
class FailureCurve:
    example: str
    cells: tuple[CellResult, ...]

    def cell(self, m: int, n: int) -> CellResult:
        for c in self.cells:
            if (c.m, c.n) == (m, n):
                return c
        raise KeyError((m, n))

    def for_m(self, m: int) -> list[CellResult]:
        return sorted((c for c in self.cells if c.m == m), key=lambda c: c.n)

    @property
    def m_values(self) -> list[int]:
        return sorted({c.m for c in self.cells})


@dataclass(frozen=True)
class SlopeFit:
    mode: str
    slope: float
    intercept: float
    r_squared: float
    m: int | None = None
    used_cells: int = 0
    excluded_cells: int = 0
    log_base: float = 10.0


# --------------------------------------------------------------------------
# single trials

@lru_cache(maxsize=None)
def _bio_family(m, n):
    return family_biorthogonal(m, n)


@lru_cache(maxsize=None)
def _sign_family(m, n, tau):
    return family_bernoulli(m, n, tau)


@lru_cache(maxsize=None)
def _conv_setup(m, n):
    op = lift_linear_convolution(m, n)
    return op, kernel_basis(op)


def _key(cfg: ExperimentConfig, m: int, n: int):
    return cell_key(cfg.master_seed, _EXAMPLE_CODE[cfg.example], m, n)


def trial_signals(cfg: ExperimentConfig, m: int, n: int, trial: int):
    """The random inputs of one trial.

    Returns ``(x, y)`` for generic trials and ``(u, v)``, the parameters of the
    planted kernel element, for planted Example C trials.
    """
    rng = trial_generator(_key(cfg, m, n), trial)
    if cfg.example == "C" and cfg.instance == PLANTED:
        return rng.standard_normal(m - 1), rng.standard_normal(n - 1)
    kind = {"A": BIORTHOGONAL, "B": BERNOULLI, "C": GAUSSIAN}[cfg.example]
    x = sample_many(EnsembleSpec(kind, m), rng, 1)[0]
    y = sample_many(EnsembleSpec(kind, n), rng, 1)[0]
    return x, y


def _planted_matrix(u, v):
    X = conv_rank2_element(u, v).matrix()
    U, _, Vt = np.linalg.svd(X)
    return np.outer(U[:, 0], Vt[0])


def trial_failure(cfg: ExperimentConfig, m: int, n: int, trial: int) -> tuple[bool, bool, bool]:
    """``(failed, converged, infeasible)`` for one trial."""
    a, b = trial_signals(cfg, m, n, trial)
    if cfg.example == "A":
        M = RankOneInstance.from_signals(a, b)
        return detect_ambiguity_exhaustive(M, _bio_family(m, n), cfg.delta_test) is not None, True, False
    if cfg.example == "B":
        M = RankOneInstance.from_signals(a, b)
        family = _sign_family(m, n, cfg.tau)
        return detect_ambiguity_exhaustive(M, family, cfg.delta_prime) is not None, True, False
    op, basis = _conv_setup(m, n)
    M = _planted_matrix(a, b) if cfg.instance == PLANTED else RankOneInstance.from_signals(a, b).normalized().matrix()
    try:
        res = solve_min_rank_near(op, M, cfg.solver_config(), basis)
    except InfeasibleError:
        return False, True, True
    failed = res.converged and res.numerical_rank == 2 and res.singular_values[0] > 0.0
    return failed, res.converged, False


def _run_chunk(task):
    cfg, m, n, start, stop = task
    failures = unconverged = infeasible = 0
    for t in range(start, stop):
        failed, converged, infeas = trial_failure(cfg, m, n, t)
        failures += bool(failed)
        unconverged += not converged
        infeasible += bool(infeas)
    return failures, unconverged, infeasible


def _tasks(cfg: ExperimentConfig):
    T = cfg.trials_per_cell
    return [(cfg, m, n, s, min(s + CHUNK_SIZE, T))
            for m, n in cfg.cells() for s in range(0, T, CHUNK_SIZE)]


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> FailureCurve:
    """Run every cell of ``cfg`` and aggregate per-cell counts."""
    if int(workers) != workers or workers < 1:
        raise ValueError("workers must be a positive integer")
    if cfg.example == "B":
        for m, n in cfg.cells():
            _sign_family(m, n, cfg.tau)  # surfaces parameter errors before any work
    tasks = _tasks(cfg)
    if workers == 1:
        outcomes = [_run_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            outcomes = list(pool.map(_run_chunk, tasks))
    totals: dict[tuple[int, int], list[int]] = {c: [0, 0, 0] for c in cfg.cells()}
    for (_, m, n, _, _), out in zip(tasks, outcomes):
        acc = totals[(m, n)]
        for i, v in enumerate(out):
            acc[i] += v
    cells = tuple(CellResult(m, n, cfg.trials_per_cell, *totals[(m, n)]) for m, n in cfg.cells())
    return FailureCurve(cfg.example, cells)


def _require(cfg, example):
    if cfg.example != example:
        raise ValueError(f"configuration is for Example {cfg.example}, not {example}")


def run_example_A(cfg: ExperimentConfig, workers: int = 1) -> FailureCurve:
    _require(cfg, "A")
    return run_experiment(cfg, workers)


def run_example_B(cfg: ExperimentConfig, workers: int = 1) -> FailureCurve:
    _require(cfg, "B")
    return run_experiment(cfg, workers)


def run_example_C(cfg: ExperimentConfig, workers: int = 1) -> FailureCurve:
    _require(cfg, "C")
    return run_experiment(cfg, workers)


# --------------------------------------------------------------------------
# fits and output

def fit_slope(curve: FailureCurve, mode: str, m: int | None = None,
              log_base: float = 10.0) -> SlopeFit:
    """Least-squares line through ``(log n or n, log failure_rate)`` at fixed ``m``.

    Cells without failures are dropped and counted in ``excluded_cells``.
    ``log_base`` sets the logarithm used on the failure axis (and on the ``n``
    axis in log-log mode, where the slope does not depend on it).
    """
    if mode not in ("loglog", "semilog"):
        raise ValueError("mode must be 'loglog' or 'semilog'")
    if m is None:
        ms = curve.m_values
        if len(ms) != 1:
            raise ValueError("curve has several m values; pass m")
        m = ms[0]
    cells = curve.for_m(m)
    live = [c for c in cells if c.failures > 0]
    if len(live) < 3:
        raise InsufficientDataError(f"only {len(live)} cells with failures at m = {m}")
    lb = math.log(log_base)
    n = np.array([c.n for c in live], dtype=float)
    x = np.log(n) / lb if mode == "loglog" else n
    y = np.log([c.failure_rate for c in live]) / lb
    X = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(mode, float(slope), float(intercept), r2, m, len(live),
                    len(cells) - len(live), log_base)


def fit_slopes(curve: FailureCurve, mode: str, log_base: float = 10.0) -> dict[int, SlopeFit | None]:
    """One fit per ``m``; ``None`` where too few cells have failures."""
    out = {}
    for m in curve.m_values:
        try:
            out[m] = fit_slope(curve, mode, m, log_base)
        except InsufficientDataError:
            out[m] = None
    return out


def curve_to_csv(curve: FailureCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["example", "m", "n", "trials", "failures", "failure_rate", "stderr"])
    for c in curve.cells:
        w.writerow([curve.example, c.m, c.n, c.trials, c.failures,
                    repr(float(c.failure_rate)), repr(float(c.stderr))])
    return buf.getvalue()


def slope_record(fit: SlopeFit) -> str:
    """``key=value`` lines describing one fit."""
    rows = [("mode", fit.mode), ("m", fit.m), ("slope", repr(fit.slope)),
            ("intercept", repr(fit.intercept)), ("r_squared", repr(fit.r_squared)),
            ("used_cells", fit.used_cells), ("excluded_cells", fit.excluded_cells),
            ("log_base", repr(fit.log_base))]
    return "".join(f"{k}={v}\n" for k, v in rows)
