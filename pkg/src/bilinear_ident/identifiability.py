"""Deterministic identifiability tests against rank-two null-space families."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bilinear_core import RankOneInstance
from .null_space import NullSpaceFamily, ZIPPED

__all__ = [
    "IDENTIFIABLE",
    "SUFFICIENT_CONDITION_FAILED",
    "UNKNOWN",
    "DEFAULT_DELTA_TEST",
    "EXHAUSTIVE_BUDGET",
    "UnsupportedFamilyError",
    "NotApplicableError",
    "BudgetExceededError",
    "IdentifiabilityVerdict",
    "Corollary2Analysis",
    "projection_margins",
    "check_universal",
    "check_sufficient_instance",
    "check_corollary2",
    "detect_ambiguity_exhaustive",
]

IDENTIFIABLE = "identifiable"
SUFFICIENT_CONDITION_FAILED = "sufficient_condition_failed"
UNKNOWN = "unknown"

DEFAULT_DELTA_TEST = 1e-9
EXHAUSTIVE_BUDGET = 10**7
EQUAL_SV_TOL = 1e-8
# Margins of structured signals (sign vectors, say) are rational and can equal the
# threshold exactly; this slack makes such ties count as reached despite rounding.
TIE_TOL = 1e-12


class UnsupportedFamilyError(TypeError):
    """The requested test is not defined for this kind of family."""


class NotApplicableError(ValueError):
    """The instance falls outside the hypotheses of the test."""


class BudgetExceededError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class IdentifiabilityVerdict:
    """Outcome of a scan over a finite family.

    ``column_margins[i]`` is ``||P_C u||^2`` for column frame ``i`` and
    ``row_margins[j]`` is ``||P_R v||^2`` for row frame ``j``; the pair for
    part ``k`` is available through :meth:`part_margins` or, for all parts
    at once, :attr:`margins`.
    """

    outcome: str
    witness: object
    column_margins: np.ndarray
    row_margins: np.ndarray
    family: NullSpaceFamily
    delta_test: float

    @property
    def failed(self) -> bool:
        return self.outcome == SUFFICIENT_CONDITION_FAILED

    def part_margins(self, k: int) -> tuple[float, float]:
        i, j = self.family.frame_indices(k)
        return float(self.column_margins[i]), float(self.row_margins[j])

    @property
    def margins(self) -> np.ndarray:
        if self.family.pairing == ZIPPED:
            return np.column_stack([self.column_margins, self.row_margins])
        a, b = self.column_margins.size, self.row_margins.size
        return np.column_stack([np.repeat(self.column_margins, b), np.tile(self.row_margins, a)])


@dataclass(frozen=True)
class Corollary2Analysis:
    sigma1: float
    sigma2: float
    alpha: tuple[float, float, float, float]
    inner: float


def projection_margins(family: NullSpaceFamily, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Squared projection norms of unit ``u``, ``v`` onto every frame."""
    if not family.is_finite:
        raise UnsupportedFamilyError("margins are only defined for finite families")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (family.m,) or v.shape != (family.n,):
        raise ValueError(f"instance shape ({u.size}, {v.size}) does not match family ({family.m}, {family.n})")
    cm = np.einsum("kij,i->kj", family.column_frames, u)
    rm = np.einsum("kij,i->kj", family.row_frames, v)
    return (cm * cm).sum(axis=1), (rm * rm).sum(axis=1)


def _first_failing_part(family, col_hit, row_hit):
    if family.pairing == ZIPPED:
        both = np.flatnonzero(col_hit & row_hit)
        return int(both[0]) if both.size else None
    rows = np.flatnonzero(row_hit)
    cols = np.flatnonzero(col_hit)
    if rows.size == 0 or cols.size == 0:
        return None
    return int(cols[0]) * row_hit.size + int(rows[0])


def check_universal(family: NullSpaceFamily) -> bool:
    """Every instance is identifiable exactly when the family has no parts."""
    if not family.is_finite:
        raise UnsupportedFamilyError(
            f"parametric family with {family.dof} degrees of freedom is nontrivial by construction")
    return family.f == 0


def _scan(M: RankOneInstance, family: NullSpaceFamily, delta_test: float):
    if not 0.0 <= delta_test < 1.0:
        raise ValueError("delta_test must lie in [0, 1)")
    cm, rm = projection_margins(family, M.u, M.v)
    thresh = 1.0 - delta_test - TIE_TOL
    k = _first_failing_part(family, cm >= thresh, rm >= thresh)
    return k, cm, rm


def check_sufficient_instance(M: RankOneInstance, family: NullSpaceFamily,
                              delta_test: float = DEFAULT_DELTA_TEST) -> IdentifiabilityVerdict:
    """Soft form of the instance-level sufficient condition.

    A part fails when both ``||P_C u||^2`` and ``||P_R v||^2`` reach
    ``1 - delta_test``.  Without a failing part the instance is identifiable.
    """
    k, cm, rm = _scan(M, family, delta_test)
    if k is None:
        return IdentifiabilityVerdict(IDENTIFIABLE, None, cm, rm, family, delta_test)
    return IdentifiabilityVerdict(SUFFICIENT_CONDITION_FAILED, family.label(k), cm, rm,
                                  family, delta_test)


def detect_ambiguity_exhaustive(M: RankOneInstance, family: NullSpaceFamily,
                                delta_test: float = DEFAULT_DELTA_TEST,
                                budget: int = EXHAUSTIVE_BUDGET):
    """Label of the first failing part in lexicographic order, or ``None``."""
    if not family.is_finite:
        raise UnsupportedFamilyError("exhaustive search needs a finite family")
    if family.f > budget:
        raise BudgetExceededError(f"family has {family.f} parts, budget is {budget}")
    k, _, _ = _scan(M, family, delta_test)
    return None if k is None else family.label(k)


def check_corollary2(M: RankOneInstance, X, tol: float = EQUAL_SV_TOL):
    """Sharp test for a kernel element with two equal singular values.

    Writes ``u = a1 u1 + a2 u2`` and ``v = a3 v1 + a4 v2`` in the singular
    bases of ``X`` and returns the analysis together with ``a1 a3 + a2 a4 <= 0``
    (True means ``M`` cannot be traded for a rank-one ``M - t X``, ``t > 0``).
    An inner product within ``tol`` of zero counts as zero.

    The inner product equals ``u^T X v / sigma``, so it does not depend on
    which orthonormal pair the SVD picks inside the repeated singular space.
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (M.m, M.n):
        raise ValueError(f"X has shape {X.shape}, expected {(M.m, M.n)}")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0.0:
        raise NotApplicableError("X is zero")
    if s.size > 2 and s[2] > tol * s[0]:
        raise NotApplicableError("X has rank above two")
    if abs(s[0] - s[1]) > tol * s[0]:
        raise UnsupportedFamilyError(
            "singular values differ; only the equal-singular-value test is implemented")
    a12 = U[:, :2].T @ M.u
    a34 = Vt[:2] @ M.v
    if a12 @ a12 < 1.0 - tol or a34 @ a34 < 1.0 - tol:
        raise NotApplicableError("u or v lies outside the singular subspaces of X")
    inner = float(a12 @ a34)
    analysis = Corollary2Analysis(float(s[0]), float(s[1]),
                                  (float(a12[0]), float(a12[1]), float(a34[0]), float(a34[1])),
                                  inner)
    return analysis, inner <= tol
