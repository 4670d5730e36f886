"""Rank-two null-space families.

Two kinds of families are provided:

* finite families, described by a list of column-space/row-space pairs
  (the synthetic operators used in the small and large complexity
  experiments are only ever known through such a list), and
* the parametric family of rank-two kernel elements of linear convolution.

Finite families are stored as two stacks of orthonormal 2-frames plus a
pairing rule, so that a product family with ``a * b`` parts only stores
``a + b`` frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

__all__ = [
    "RankTwoElement",
    "SubspacePair",
    "NullSpaceFamily",
    "conv_rank2_element",
    "subspace_pair",
    "family_biorthogonal",
    "family_bernoulli",
    "family_convolution",
    "empty_family",
    "binary_word",
]

SUBSPACE_TOL = 1e-8


def _ro(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RankTwoElement:
    """Factored matrix ``X = U V^T`` with two columns per factor."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U, V = _ro(self.U), _ro(self.V)
        if U.ndim != 2 or V.ndim != 2 or U.shape[1] != 2 or V.shape[1] != 2:
            raise ValueError("factors must have exactly two columns")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    def matrix(self) -> np.ndarray:
        return self.U @ self.V.T


@dataclass(frozen=True, eq=False)
class SubspacePair:
    """Orthonormal 2-frames for the column space and the row space."""

    C_basis: np.ndarray
    R_basis: np.ndarray

    def __post_init__(self):
        C, R = _ro(self.C_basis), _ro(self.R_basis)
        for name, B in (("column", C), ("row", R)):
            if B.ndim != 2 or B.shape[1] != 2:
                raise ValueError(f"{name} basis must have two columns")
            if not np.allclose(B.T @ B, np.eye(2), atol=1e-10, rtol=0):
                raise ValueError(f"{name} basis is not orthonormal")
        object.__setattr__(self, "C_basis", C)
        object.__setattr__(self, "R_basis", R)

    def column_projector(self) -> np.ndarray:
        return self.C_basis @ self.C_basis.T

    def row_projector(self) -> np.ndarray:
        return self.R_basis @ self.R_basis.T


def _orthonormal_frame(cols: np.ndarray, tol: float = SUBSPACE_TOL) -> np.ndarray:
    """Orthonormal basis of the span of two columns, refusing rank deficiency."""
    Q, s, _ = np.linalg.svd(cols, full_matrices=False)
    if s[0] == 0.0 or s[1] < tol * s[0]:
        raise ValueError("factor columns are numerically dependent")
    return Q[:, :2]


PRODUCT = "product"
ZIPPED = "zipped"
PARAMETRIC = "parametric"


class NullSpaceFamily:
    """Restricted rank-two null space, finite or parametric.

    Finite families hold ``column_frames`` (shape ``(a, m, 2)``) and
    ``row_frames`` (shape ``(b, n, 2)``).  With ``pairing="product"`` part
    ``k`` pairs column frame ``k // b`` with row frame ``k % b`` (so parts are
    enumerated in lexicographic ``(i, j)`` order); with ``pairing="zipped"``
    part ``k`` pairs frame ``k`` with frame ``k``.

    The parametric variant wraps a generator ``(u, v) -> RankTwoElement``
    with ``dof`` free parameters.
    """

    def __init__(self, m, n, *, column_frames=None, row_frames=None,
                 pairing=PRODUCT, label_base=0, generator=None, dof=None, name=""):
        self.m, self.n = int(m), int(n)
        self.name = name
        self.pairing = PARAMETRIC if generator is not None else pairing
        self.generator: Callable[..., RankTwoElement] | None = generator
        self.dof = dof
        self.label_base = int(label_base)
        if generator is not None:
            self.column_frames = self.row_frames = None
            return
        if pairing not in (PRODUCT, ZIPPED):
            raise ValueError(f"unknown pairing {pairing!r}")
        cf = _ro(np.zeros((0, self.m, 2)) if column_frames is None else column_frames)
        rf = _ro(np.zeros((0, self.n, 2)) if row_frames is None else row_frames)
        if cf.shape[1:] != (self.m, 2) or rf.shape[1:] != (self.n, 2):
            raise ValueError("frame stacks do not match the family dimensions")
        if pairing == ZIPPED and cf.shape[0] != rf.shape[0]:
            raise ValueError("zipped families need as many column as row frames")
        self.column_frames, self.row_frames = cf, rf

    # -- size -------------------------------------------------------------
    @property
    def is_finite(self) -> bool:
        return self.pairing != PARAMETRIC

    @property
    def f(self) -> float:
        """Number of parts (``math.inf`` for the parametric variant)."""
        if not self.is_finite:
            return math.inf
        if self.pairing == ZIPPED:
            return self.column_frames.shape[0]
        return self.column_frames.shape[0] * self.row_frames.shape[0]

    def __len__(self) -> int:
        if not self.is_finite:
            raise TypeError("parametric family has no finite length")
        return int(self.f)

    # -- parts ------------------------------------------------------------
    def frame_indices(self, k: int) -> tuple[int, int]:
        self._require_finite()
        if not 0 <= k < self.f:
            raise IndexError(k)
        if self.pairing == ZIPPED:
            return k, k
        return divmod(k, self.row_frames.shape[0])

    def part(self, k: int) -> SubspacePair:
        i, j = self.frame_indices(k)
        return SubspacePair(self.column_frames[i], self.row_frames[j])

    def label(self, k: int):
        """Human-facing identifier of part ``k``: ``(i, j)`` or ``k``."""
        if self.pairing == ZIPPED:
            return k + self.label_base
        i, j = self.frame_indices(k)
        return i + self.label_base, j + self.label_base

    def parts(self) -> Iterator[SubspacePair]:
        for k in range(len(self)):
            yield self.part(k)

    def sample(self, rng: np.random.Generator) -> RankTwoElement:
        """Draw a parametric element with i.i.d. Gaussian parameters."""
        if self.is_finite:
            raise TypeError("sampling is only defined for parametric families")
        return self.generator(rng.standard_normal(self.m - 1), rng.standard_normal(self.n - 1))

    def _require_finite(self):
        if not self.is_finite:
            raise TypeError("operation requires a finite family")

    def __repr__(self) -> str:
        size = f"dof={self.dof}" if not self.is_finite else f"f={self.f}"
        return f"NullSpaceFamily({self.name or self.pairing}, m={self.m}, n={self.n}, {size})"


def conv_rank2_element(u, v) -> RankTwoElement:
    """Rank-two matrix annihilated by the ``(len(u)+1, len(v)+1)`` convolution.

    ``U = [(u; 0), (0; -u)]`` and ``V = [(0; v), (v; 0)]``: along each
    anti-diagonal the two terms cancel.
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.size == 0 or v.size == 0:
        raise ValueError("u and v must be non-empty")
    z1, z2 = np.zeros(1), np.zeros(1)
    U = np.column_stack([np.concatenate([u, z1]), np.concatenate([z1, -u])])
    V = np.column_stack([np.concatenate([z2, v]), np.concatenate([v, z2])])
    return RankTwoElement(U, V)


def subspace_pair(X, tol: float = SUBSPACE_TOL) -> SubspacePair:
    """Column and row 2-frames of a numerically rank-two matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or min(X.shape) < 2:
        raise ValueError("need a matrix with at least two rows and columns")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s[0] == 0.0 or s[1] < tol * s[0]:
        raise ValueError("matrix has rank below two at the given tolerance")
    if s.size > 2 and s[2] >= tol * s[0]:
        raise ValueError("matrix has rank above two at the given tolerance")
    return SubspacePair(U[:, :2], Vt[:2].T)


def empty_family(m: int, n: int) -> NullSpaceFamily:
    return NullSpaceFamily(m, n, name="empty")


def family_biorthogonal(m: int, n: int) -> NullSpaceFamily:
    """Product family of ``floor(sqrt m) * floor(sqrt n)`` coordinate 2-planes.

    Part ``(i, j)`` (1-based) has column space ``span{e_i, e_{i+1}}`` and row
    space ``span{f_j, f_{j+1}}``.
    """
    if m < 4 or n < 4:
        raise ValueError("the bi-orthogonal family needs m, n >= 4")

    def frames(dim):
        k = math.isqrt(dim)
        out = np.zeros((k, dim, 2))
        idx = np.arange(k)
        out[idx, idx, 0] = 1.0
        out[idx, idx + 1, 1] = 1.0
        return out

    return NullSpaceFamily(m, n, column_frames=frames(m), row_frames=frames(n),
                           label_base=1, name="biorthogonal")


def binary_word(i: int, bits: int) -> np.ndarray:
    """Bits of ``i``, most significant first, over the alphabet {-1, +1}."""
    if not 0 <= i < 2 ** bits:
        raise ValueError(f"{i} does not fit in {bits} bits")
    digits = (i >> np.arange(bits - 1, -1, -1)) & 1
    return 2.0 * digits - 1.0


def family_bernoulli(m: int, n: int, tau: float) -> NullSpaceFamily:
    """Product family of ``2**floor(tau m) * 2**floor(tau n)`` sign-pattern parts.

    With ``a = floor(tau m)`` the left factor is the block matrix
    ``[[g, 0], [1, -g], [0, -1]]`` whose row blocks have heights
    ``a, a, m - 2a`` (the middle block must hold ``-g``), so its columns are
    ``(g; 1_a; 0)`` and ``(0; -g; -1_{m-2a})``.  The right factor
    ``[[0, h^T, 1^T], [h^T, 1^T, 0]]`` likewise has column blocks of widths
    ``b, b, n - 2b`` giving rows ``(0; h; 1)`` and ``(h; 1_b; 0)``.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    a, b = math.floor(tau * m), math.floor(tau * n)
    if a < 1 or b < 1:
        raise ValueError("floor(tau*m) and floor(tau*n) must be at least one")
    if m < 2 * a or n < 2 * b:
        raise ValueError("tau too large: the two sign-pattern blocks do not fit")

    def column_frame(g):
        k = g.size
        c1 = np.concatenate([g, np.ones(k), np.zeros(m - 2 * k)])
        c2 = np.concatenate([np.zeros(k), -g, -np.ones(m - 2 * k)])
        return _orthonormal_frame(np.column_stack([c1, c2]))

    def row_frame(h):
        k = h.size
        r1 = np.concatenate([np.zeros(k), h, np.ones(n - 2 * k)])
        r2 = np.concatenate([h, np.ones(k), np.zeros(n - 2 * k)])
        return _orthonormal_frame(np.column_stack([r1, r2]))

    cf = np.stack([column_frame(binary_word(i, a)) for i in range(2 ** a)])
    rf = np.stack([row_frame(binary_word(j, b)) for j in range(2 ** b)])
    return NullSpaceFamily(m, n, column_frames=cf, row_frames=rf, label_base=0, name="bernoulli")


def family_convolution(m: int, n: int) -> NullSpaceFamily:
    if m < 2 or n < 2:
        raise ValueError("the convolution family needs m, n >= 2")

    def generator(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if u.shape != (m - 1,) or v.shape != (n - 1,):
            raise ValueError(f"expected parameters of length {m - 1} and {n - 1}")
        return conv_rank2_element(u, v)

    return NullSpaceFamily(m, n, generator=generator, dof=m + n - 3, name="convolution")
