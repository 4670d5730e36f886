"""Bilinear maps and their lifted linear operators.

A bilinear map ``S(x, y)`` with ``q`` outputs is represented through ``q``
basis matrices ``S_j`` of shape ``(m, n)`` so that ``z_j = x^T S_j y``.  The
same numbers are obtained by the linear map ``W -> <W, S_j>`` applied to the
rank-one matrix ``W = x y^T``; that linear map is the lifted operator.

All objects here are immutable once built and every function is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "GENERIC",
    "LINEAR_CONVOLUTION",
    "DICTIONARY_TRANSFORMED",
    "LiftedOperator",
    "SignalPair",
    "RankOneInstance",
    "Observation",
    "lift_linear_convolution",
    "lift_from_matrices",
    "apply_lifted",
    "apply_bilinear",
    "transform_with_dictionaries",
    "adjoint_apply",
]

GENERIC = "generic"
LINEAR_CONVOLUTION = "linear_convolution"
DICTIONARY_TRANSFORMED = "dictionary_transformed"
_KINDS = (GENERIC, LINEAR_CONVOLUTION, DICTIONARY_TRANSFORMED)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LiftedOperator:
    """Linear operator on ``m x n`` matrices given by ``q`` basis matrices.

    Parameters
    ----------
    basis : ndarray, shape (q, m, n)
        Stacked basis matrices.  Output ``j`` of the operator is the trace
        inner product of its argument with ``basis[j]``.
    kind : str
        One of ``"generic"``, ``"linear_convolution"`` or
        ``"dictionary_transformed"``.
    """

    basis: np.ndarray
    kind: str = GENERIC
    _flat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        basis = _frozen(self.basis)
        if basis.ndim != 3 or basis.shape[0] == 0:
            raise ValueError("basis must be a non-empty stack of matrices, shape (q, m, n)")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        q, m, n = basis.shape
        if self.kind == LINEAR_CONVOLUTION:
            if q != m + n - 1 or not np.array_equal(basis, _convolution_stack(m, n)):
                raise ValueError("basis is not the linear convolution basis")
        object.__setattr__(self, "basis", basis)
        flat = basis.reshape(q, m * n)
        flat.setflags(write=False)
        object.__setattr__(self, "_flat", flat)

    @property
    def q(self) -> int:
        return self.basis.shape[0]

    @property
    def m(self) -> int:
        return self.basis.shape[1]

    @property
    def n(self) -> int:
        return self.basis.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.m, self.n

    def matrix(self) -> np.ndarray:
        """The operator as a ``q x (m*n)`` matrix acting on row-major vectors."""
        return self._flat

    def __repr__(self) -> str:
        return f"LiftedOperator(m={self.m}, n={self.n}, q={self.q}, kind={self.kind!r})"


@dataclass(frozen=True, eq=False)
class SignalPair:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x, y = _frozen(self.x), _frozen(self.y)
        if x.ndim != 1 or y.ndim != 1:
            raise ValueError("signals must be one-dimensional")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def outer(self) -> np.ndarray:
        return np.outer(self.x, self.y)


@dataclass(frozen=True, eq=False)
class Observation:
    z: np.ndarray

    def __post_init__(self):
        z = _frozen(self.z)
        if z.ndim != 1:
            raise ValueError("observation must be a vector")
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return self.z.shape[0]


@dataclass(frozen=True, eq=False)
class RankOneInstance:
    """A signal pair together with the SVD of its outer product.

    ``x y^T = sigma * u v^T`` with unit ``u`` and ``v``.  The sign is fixed so
    that the first nonzero entry of ``u`` is positive, which makes two members
    of the same scaling class compare equal.
    """

    x: np.ndarray
    y: np.ndarray
    sigma: float
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def from_signals(cls, x, y) -> "RankOneInstance":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or y.ndim != 1:
            raise ValueError("signals must be one-dimensional")
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        if nx == 0.0 or ny == 0.0:
            raise ValueError("a rank-one instance needs nonzero x and y")
        u, v = x / nx, y / ny
        lead = u[np.flatnonzero(u)[0]]
        if lead < 0:
            u, v = -u, -v
        return cls(_frozen(x), _frozen(y), float(nx * ny), _frozen(u), _frozen(v))

    @property
    def m(self) -> int:
        return self.u.shape[0]

    @property
    def n(self) -> int:
        return self.v.shape[0]

    def matrix(self) -> np.ndarray:
        return self.sigma * np.outer(self.u, self.v)

    def normalized(self) -> "RankOneInstance":
        """Same instance rescaled so that ``||M||_F = 1``."""
        return RankOneInstance(self.u, self.v, 1.0, self.u, self.v)

    def same_class(self, other: "RankOneInstance", rtol: float = 1e-12) -> bool:
        """True when both instances have the same lifted matrix."""
        return (
            self.u.shape == other.u.shape
            and self.v.shape == other.v.shape
            and np.allclose(self.matrix(), other.matrix(), rtol=0.0,
                            atol=rtol * max(self.sigma, other.sigma))
        )


def _convolution_stack(m: int, n: int) -> np.ndarray:
    q = m + n - 1
    stack = np.zeros((q, m, n))
    i, j = np.indices((m, n))
    # zero-based: entry (i, j) feeds output i + j
    stack[i + j, i, j] = 1.0
    return stack


def lift_linear_convolution(m: int, n: int) -> LiftedOperator:
    """Lifted operator of the full linear convolution of lengths ``m`` and ``n``."""
    if int(m) != m or int(n) != n or m < 1 or n < 1:
        raise ValueError("convolution lengths must be positive integers")
    return LiftedOperator(_convolution_stack(int(m), int(n)), LINEAR_CONVOLUTION)


def lift_from_matrices(basis: Sequence) -> LiftedOperator:
    mats = [np.asarray(b, dtype=float) for b in basis]
    if not mats:
        raise ValueError("at least one basis matrix is required")
    if any(b.ndim != 2 for b in mats):
        raise ValueError("basis entries must be matrices")
    if len({b.shape for b in mats}) != 1:
        raise ValueError("basis matrices have inconsistent shapes")
    return LiftedOperator(np.stack(mats), GENERIC)


def _check_matrix(op: LiftedOperator, W: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.shape != op.shape:
        raise ValueError(f"expected a {op.shape} matrix, got {W.shape}")
    return W


def apply_lifted(op: LiftedOperator, W) -> Observation:
    W = _check_matrix(op, W)
    return Observation(op.matrix() @ W.ravel())


def apply_bilinear(op: LiftedOperator, pair: SignalPair) -> Observation:
    """Evaluate ``z_j = x^T S_j y`` without forming ``x y^T``."""
    x, y = pair.x, pair.y
    if x.shape[0] != op.m or y.shape[0] != op.n:
        raise ValueError(f"signal lengths {x.shape[0]}, {y.shape[0]} do not match operator {op.shape}")
    if op.kind == LINEAR_CONVOLUTION:
        return Observation(np.convolve(x, y))
    return Observation(np.einsum("i,kij,j->k", x, op.basis, y))


def transform_with_dictionaries(op: LiftedOperator, A, B) -> LiftedOperator:
    """Absorb ``x = A beta`` and ``y = B gamma`` into the basis: ``A^T S_j B``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != op.m:
        raise ValueError(f"left dictionary needs {op.m} rows")
    if B.ndim != 2 or B.shape[0] != op.n:
        raise ValueError(f"right dictionary needs {op.n} rows")
    return LiftedOperator(np.einsum("ip,kij,jr->kpr", A, op.basis, B), DICTIONARY_TRANSFORMED)


def adjoint_apply(op: LiftedOperator, z) -> np.ndarray:
    z = z.z if isinstance(z, Observation) else np.asarray(z, dtype=float)
    if z.shape != (op.q,):
        raise ValueError(f"expected {op.q} observations, got shape {z.shape}")
    return (z @ op.matrix()).reshape(op.shape)
