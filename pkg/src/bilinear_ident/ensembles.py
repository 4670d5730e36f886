"""Random signal ensembles and Monte Carlo checks of their moment assumptions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BIORTHOGONAL",
    "GAUSSIAN",
    "BERNOULLI",
    "MagnitudeLaw",
    "EnsembleSpec",
    "ValidationReport",
    "sample",
    "sample_many",
    "validate_assumptions",
    "trial_generator",
    "cell_key",
]

BIORTHOGONAL = "biorthogonal_uniform"
GAUSSIAN = "gaussian_iid"
BERNOULLI = "bernoulli_iid"
_KINDS = (BIORTHOGONAL, GAUSSIAN, BERNOULLI)


@dataclass(frozen=True)
class MagnitudeLaw:
    """Discrete law for ``||x||``: ``values[k]`` with probability ``probs[k]``."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be non-empty and of equal length")
        if any(v <= 0 for v in self.values) or any(p < 0 for p in self.probs):
            raise ValueError("magnitudes must be positive and probabilities non-negative")
        if not math.isclose(sum(self.probs), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError("probabilities must sum to one")

    @classmethod
    def constant(cls, value: float) -> "MagnitudeLaw":
        return cls((float(value),), (1.0,))

    @classmethod
    def two_point(cls, low: float, high: float) -> "MagnitudeLaw":
        return cls((float(low), float(high)), (0.5, 0.5))

    @property
    def second_moment(self) -> float:
        return sum(p * v * v for v, p in zip(self.values, self.probs))

    @property
    def floor(self) -> float:
        """Almost-sure lower bound on ``||x||``."""
        return min(v for v, p in zip(self.values, self.probs) if p > 0)

    def draw(self, rng: np.random.Generator, size=None):
        if len(self.values) == 1:
            return np.full(size, self.values[0]) if size is not None else self.values[0]
        return rng.choice(np.asarray(self.values), size=size, p=np.asarray(self.probs))


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    """Description of a random vector in ``R^dim``.

    For the bi-orthogonal kind ``x = r * s * b_J`` where ``J`` is uniform over
    the columns of ``basis`` (canonical by default), ``s`` is a fair sign and
    ``r`` is drawn from ``magnitude_law`` independently of ``(J, s)``.  The
    default magnitude is the constant ``sqrt(dim)``, which gives identity
    covariance and a norm floor of ``sqrt(dim)``.
    """

    kind: str
    dim: int
    basis: np.ndarray | None = None
    magnitude_law: MagnitudeLaw | None = field(default=None)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.kind != BIORTHOGONAL:
            if self.basis is not None or self.magnitude_law is not None:
                raise ValueError("basis and magnitude law only apply to the bi-orthogonal ensemble")
            return
        if self.basis is not None:
            B = np.array(self.basis, dtype=float)
            if B.shape != (self.dim, self.dim) or not np.allclose(B.T @ B, np.eye(self.dim),
                                                                 atol=1e-10, rtol=0):
                raise ValueError("basis must be a dim x dim orthonormal matrix")
            B.setflags(write=False)
            object.__setattr__(self, "basis", B)
        law = self.magnitude_law or MagnitudeLaw.constant(math.sqrt(self.dim))
        if not math.isclose(law.second_moment, self.dim, rel_tol=1e-9):
            raise ValueError("magnitude law must satisfy E||x||^2 = dim")
        object.__setattr__(self, "magnitude_law", law)

    @property
    def norm_floor(self) -> float:
        """Almost-sure lower bound on ``||x||`` (0 when none exists)."""
        if self.kind == BERNOULLI:
            return math.sqrt(self.dim)
        if self.kind == BIORTHOGONAL:
            return self.magnitude_law.floor
        return 0.0


def sample_many(spec: EnsembleSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` independent draws stacked as rows."""
    m = spec.dim
    if spec.kind == GAUSSIAN:
        return rng.standard_normal((count, m))
    if spec.kind == BERNOULLI:
        return 2.0 * rng.integers(0, 2, size=(count, m)) - 1.0
    idx = rng.integers(0, m, size=count)
    sign = 2.0 * rng.integers(0, 2, size=count) - 1.0
    mag = spec.magnitude_law.draw(rng, size=count)
    out = np.zeros((count, m))
    out[np.arange(count), idx] = sign * mag
    if spec.basis is not None:
        out = out @ spec.basis.T
    return out


def sample(spec: EnsembleSpec, rng: np.random.Generator) -> np.ndarray:
    return sample_many(spec, rng, 1)[0]


@dataclass(frozen=True)
class ValidationReport:
    empirical_mean_norm: float
    covariance_deviation: float
    min_norm_observed: float
    norm_direction_corr: float
    trials: int
    dim: int

    def mean_ok(self, factor: float = 3.0) -> bool:
        return self.empirical_mean_norm <= factor * math.sqrt(self.dim / self.trials)

    def covariance_ok(self, factor: float = 5.0) -> bool:
        return self.covariance_deviation <= factor * math.sqrt(self.dim / self.trials)

    def passes(self) -> bool:
        return self.mean_ok() and self.covariance_ok()


def validate_assumptions(spec: EnsembleSpec, trials: int, rng: np.random.Generator) -> ValidationReport:
    """Monte Carlo estimates of zero mean, identity covariance and norm behaviour."""
    if trials < 1000:
        raise ValueError("at least 1000 trials are required")
    X = sample_many(spec, rng, trials)
    m = spec.dim
    mean = X.mean(axis=0)
    second = X.T @ X / trials
    norms = np.linalg.norm(X, axis=1)
    dirs = np.abs(X) / np.where(norms > 0, norms, 1.0)[:, None]
    corr = 0.0
    if norms.std() > 1e-12 * norms.mean():  # constant norms carry no dependence
        zn = (norms - norms.mean()) / norms.std()
        sd = dirs.std(axis=0)
        live = sd > 0
        if live.any():
            zd = (dirs[:, live] - dirs[:, live].mean(axis=0)) / sd[live]
            corr = float(np.abs(zn @ zd / trials).max())
    return ValidationReport(
        empirical_mean_norm=float(np.linalg.norm(mean)),
        covariance_deviation=float(np.linalg.norm(second - np.eye(m)) / math.sqrt(m)),
        min_norm_observed=float(norms.min()),
        norm_direction_corr=corr,
        trials=int(trials),
        dim=m,
    )


def cell_key(master_seed: int, *labels: int) -> np.ndarray:
    """128-bit Philox key for one grid cell, derived from the master seed."""
    seq = np.random.SeedSequence(int(master_seed) % 2**64, spawn_key=tuple(int(v) for v in labels))
    return seq.generate_state(2, dtype=np.uint64)


def trial_generator(key: np.ndarray, trial: int) -> np.random.Generator:
    """Counter-based stream for one trial: the trial index sits in the top counter word."""
    counter = np.array([0, 0, 0, int(trial)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
