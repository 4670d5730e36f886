"""Low-rank search in the kernel of a lifted operator.

Approximately solves

    minimize rank(X)  subject to  ||X - M||_F <= mu,  S(X) = 0

with the reweighted nuclear norm heuristic and declares the ambiguity event
when the result has rank exactly two.

Reweighting.  After each outer pass the current iterate ``X = U diag(s) V^T``
defines left and right weights ``L = U diag((s + g)^-1/2) U^T`` and
``R = V diag((s + g)^-1/2) V^T`` (singular values padded with zeros so the
weights are full rank).  The next pass minimizes ``||L X R||_*``, which for a
matrix sharing the singular vectors of the previous iterate equals
``sum_i s_i(X) / (s_i^prev + g)``.  This keeps every subproblem convex.

Inner solver.  The feasible set is a Euclidean ball inside the kernel: with
``P`` the orthogonal projector onto ``ker S`` it is centred at ``P(M)`` with
radius ``sqrt(mu^2 - ||M - P(M)||^2)``.  Writing ``X = sum_k c_k B_k`` in an
orthonormal kernel basis, ADMM splits ``Y = L X R`` and alternates
singular value shrinkage on ``Y`` with an exact projection of ``c`` onto the
ball in the metric induced by the weights (a trust-region step solved by a
scalar secular equation).

Convergence.  Every iterate is feasible by construction, so ``converged``
asks for two things: the reweighted objective never increased between
passes, and the run settled, meaning either the last subproblem met the
primal and dual tolerances or the numerical rank stayed the same over the
last few passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numba
import numpy as np

from .bilinear_core import LiftedOperator, RankOneInstance, apply_lifted

__all__ = [
    "SolverConfig",
    "SolverResult",
    "NullSpaceBasis",
    "InfeasibleError",
    "KERNEL_BUDGET",
    "kernel_basis",
    "project_onto_kernel",
    "distance_to_kernel",
    "solve_min_rank_near",
    "detect_event_E2",
]

KERNEL_BUDGET = 10_000
RANK_STABLE_PASSES = 3

_RELAX = 1.6
_BALANCE_EVERY = 10
_BALANCE_RATIO = 5.0


class InfeasibleError(ValueError):
    """The ball around ``M`` does not reach the kernel."""

    def __init__(self, distance: float, mu: float):
        super().__init__(f"distance {distance:.6g} from M to the kernel exceeds mu = {mu:.6g}")
        self.distance = distance
        self.mu = mu


@dataclass(frozen=True)
class SolverConfig:
    """Tuning of the reweighted search.

    ``weight_smoothing`` is the offset ``g`` added to singular values when
    forming weights, expressed relative to the largest singular value of the
    first iterate; ``gamma_floor`` bounds it from below in absolute terms.
    Tolerances are relative to the size of the iterates.
    """

    mu: float = 0.8
    weight_smoothing: float = 1e-2
    gamma_floor: float = 1e-8
    outer_iters: int = 20
    inner_iters: int = 500
    primal_tol: float = 1e-7
    dual_tol: float = 1e-7
    rank_rel_threshold: float = 1e-3

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")
        if not self.rank_rel_threshold < 1:
            raise ValueError("rank_rel_threshold must be below one")
        for name in ("outer_iters", "inner_iters"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ValueError(f"{name} must be an integer")

    @classmethod
    def from_mapping(cls, data: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**data)

    def to_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, eq=False)
class SolverResult:
    X: np.ndarray
    singular_values: np.ndarray
    numerical_rank: int
    converged: bool
    constraint_residuals: tuple[float, float]
    outer_iterations: int = 0
    inner_iterations: int = 0
    gamma: float = 0.0
    objective_history: tuple[float, ...] = field(default=())
    monotone: bool = True


class NullSpaceBasis:
    """Orthonormal basis of ``ker S`` under the trace inner product."""

    def __init__(self, matrices: np.ndarray, shape: tuple[int, int]):
        self.shape = tuple(shape)
        mats = np.array(matrices, dtype=float).reshape(-1, *self.shape)
        mats.setflags(write=False)
        self.matrices = mats
        rows = np.ascontiguousarray(mats.reshape(mats.shape[0], self.shape[0] * self.shape[1]))
        rows.setflags(write=False)
        self.rows = rows

    @property
    def dim(self) -> int:
        return self.matrices.shape[0]

    def __len__(self) -> int:
        return self.dim

    def __iter__(self):
        return iter(self.matrices)

    def coordinates(self, W) -> np.ndarray:
        return self.rows @ np.asarray(W, dtype=float).ravel()

    def synthesize(self, c) -> np.ndarray:
        return (np.asarray(c) @ self.rows).reshape(self.shape)


def kernel_basis(op: LiftedOperator) -> NullSpaceBasis:
    mn = op.m * op.n
    if mn > KERNEL_BUDGET:
        raise ValueError(f"m*n = {mn} exceeds the dense factorization budget {KERNEL_BUDGET}")
    A = op.matrix()
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    tol = max(A.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int((s > tol).sum())
    return NullSpaceBasis(Vt[rank:], op.shape)


def project_onto_kernel(basis: NullSpaceBasis, W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.shape != basis.shape:
        raise ValueError(f"expected a {basis.shape} matrix, got {W.shape}")
    return basis.synthesize(basis.coordinates(W))


def distance_to_kernel(basis: NullSpaceBasis, W) -> float:
    W = np.asarray(W, dtype=float)
    return float(np.linalg.norm(W - project_onto_kernel(basis, W)))


# --------------------------------------------------------------------------
# numerical kernels

@numba.njit(cache=True)
def _ball_step(lam, h, rad):
    """Smallest ``t >= 0`` with ``||h / (lam + t)|| <= rad``; returns ``h / (lam + t)``."""
    e = h / lam
    if np.sqrt((e * e).sum()) <= rad:
        return e
    t = 0.0
    for _ in range(200):
        d = lam + t
        e = h / d
        ne = np.sqrt((e * e).sum())
        # Newton on 1/||e(t)|| - 1/rad, which is concave and increasing in t
        slope = (e * e / d).sum() / (ne * ne * ne)
        tn = t + (1.0 / rad - 1.0 / ne) / slope
        if tn <= t:
            break
        if tn - t <= 1e-15 * tn:
            t = tn
            break
        t = tn
    e = h / (lam + t)
    ne = np.sqrt((e * e).sum())
    if ne > rad:
        e *= rad / ne
    return e


@numba.njit(cache=True)
def _admm(A, Q, lam, c0, rad, c, m, n, iters, ptol, dtol):
    """Over-relaxed ADMM for ``min ||Y||_*`` s.t. ``Y = A c`` and ``||c - c0|| <= rad``."""
    QtAt = Q.T @ A.T
    lam_c0 = lam * (Q.T @ c0)
    Ac = (A @ c).reshape(m, n)
    Y = Ac.copy()
    U = np.zeros((m, n))
    rho = 1.0 / max(np.sqrt((Y * Y).sum()), 1e-300)
    converged = False
    it = 0
    for it in range(1, iters + 1):
        h = QtAt @ (Y - U).ravel() - lam_c0
        c = c0 + Q @ _ball_step(lam, h, rad)
        Ac = (A @ c).reshape(m, n)
        Ah = _RELAX * Ac + (1.0 - _RELAX) * Y
        Uu, s, Vt = np.linalg.svd(Ah + U, full_matrices=False)
        Yp = Y
        Y = (Uu * np.maximum(s - 1.0 / rho, 0.0)) @ Vt
        U = U + Ah - Y
        r = np.sqrt(((Ac - Y) ** 2).sum())
        sd = rho * np.sqrt(((A.T @ (Y - Yp).ravel()) ** 2).sum())
        rel_p = r / max(np.sqrt((Ac * Ac).sum()), np.sqrt((Y * Y).sum()), 1e-300)
        rel_d = sd / max(rho * np.sqrt(((A.T @ U.ravel()) ** 2).sum()), 1e-300)
        if rel_p <= ptol and rel_d <= dtol:
            converged = True
            break
        # residual balancing on the relative residuals, kept infrequent so
        # the scaled dual variable has time to settle between changes
        if it % _BALANCE_EVERY == 0:
            if rel_p > _BALANCE_RATIO * rel_d:
                rho *= 2.0
                U /= 2.0
            elif rel_d > _BALANCE_RATIO * rel_p:
                rho /= 2.0
                U *= 2.0
    return c, it, converged


def _weights(X, gamma):
    m, n = X.shape
    U, s, Vt = np.linalg.svd(X, full_matrices=True)
    sl = np.zeros(m)
    sr = np.zeros(n)
    k = s.size
    sl[:k] = s
    sr[:k] = s
    L = (U / np.sqrt(sl + gamma)) @ U.T
    R = (Vt.T / np.sqrt(sr + gamma)) @ Vt
    return L, R


def _nuclear(Z):
    return float(np.linalg.svd(Z, compute_uv=False).sum())


def _numerical_rank(s, cfg):
    return 0 if s[0] == 0.0 else int((s >= cfg.rank_rel_threshold * s[0]).sum())


def _result(op, M, X, cfg, converged, **extra):
    s = np.linalg.svd(X, compute_uv=False)
    rank = _numerical_rank(s, cfg)
    kernel_res = float(np.abs(apply_lifted(op, X).z).max())
    ball_res = max(0.0, float(np.linalg.norm(X - M)) - cfg.mu)
    X = np.array(X)
    X.setflags(write=False)
    return SolverResult(X, s, rank, bool(converged), (kernel_res, ball_res), **extra)


def solve_min_rank_near(op: LiftedOperator, M, cfg: SolverConfig = SolverConfig(),
                        basis: NullSpaceBasis | None = None) -> SolverResult:
    """Reweighted nuclear-norm search for a low-rank kernel element near ``M``.

    Raises :class:`InfeasibleError` when ``M`` is farther than ``mu`` from the
    kernel.  A run that exhausts its budget, or whose reweighted objective
    increases between passes, is returned with ``converged=False``.
    """
    M = M.matrix() if isinstance(M, RankOneInstance) else np.asarray(M, dtype=float)
    if M.shape != op.shape:
        raise ValueError(f"M has shape {M.shape}, operator expects {op.shape}")
    norm_m = float(np.linalg.norm(M))
    if norm_m == 0.0:
        raise ValueError("M must be nonzero")
    basis = kernel_basis(op) if basis is None else basis
    m, n = op.shape
    if norm_m <= cfg.mu:
        # zero is feasible and has rank zero
        return _result(op, M, np.zeros((m, n)), cfg, True)

    K = basis.rows
    c0 = K @ M.ravel()
    dist2 = max(float(M.ravel() @ M.ravel() - c0 @ c0), 0.0)
    if dist2 > cfg.mu ** 2:
        raise InfeasibleError(math.sqrt(dist2), cfg.mu)
    rad = math.sqrt(cfg.mu ** 2 - dist2)
    if basis.dim == 0:
        return _result(op, M, np.zeros((m, n)), cfg, True)

    c = c0.copy()
    L, R = np.eye(m), np.eye(n)
    gamma = None
    history = []
    ranks = []
    monotone = True
    total_inner = 0
    inner_ok = False
    X_prev = basis.synthesize(c)
    outer = 0
    for outer in range(1, cfg.outer_iters + 1):
        A = np.ascontiguousarray(np.einsum("ij,kjl,lp->kip", L, basis.matrices, R)
                                 .reshape(basis.dim, m * n).T)
        lam, Q = np.linalg.eigh(A.T @ A)
        c, its, inner_ok = _admm(A, np.ascontiguousarray(Q), lam, c0, rad, c, m, n,
                                 int(cfg.inner_iters), cfg.primal_tol, cfg.dual_tol)
        total_inner += its
        X = basis.synthesize(c)
        ranks.append(_numerical_rank(np.linalg.svd(X, compute_uv=False), cfg))
        before = _nuclear(L @ X_prev @ R)
        after = _nuclear(L @ X @ R)
        history.append(after)
        if after > before * (1.0 + 1e-6):
            monotone = False
        if gamma is None:
            s1 = np.linalg.svd(X, compute_uv=False)[0]
            gamma = max(cfg.weight_smoothing * s1, cfg.gamma_floor)
        step = np.linalg.norm(X - X_prev)
        X_prev = X
        if outer > 1 and inner_ok and step <= 1e-9 * max(np.linalg.norm(X), 1e-300):
            break
        L, R = _weights(X, gamma)

    settled = inner_ok or (len(ranks) >= RANK_STABLE_PASSES
                           and len(set(ranks[-RANK_STABLE_PASSES:])) == 1)
    return _result(op, M, X_prev, cfg, settled and monotone,
                   outer_iterations=outer, inner_iterations=total_inner, gamma=float(gamma),
                   objective_history=tuple(history), monotone=monotone)


def detect_event_E2(op: LiftedOperator, M, cfg: SolverConfig = SolverConfig(),
                    basis: NullSpaceBasis | None = None) -> bool:
    """True when the search converges to a nonzero matrix of numerical rank two."""
    if isinstance(M, RankOneInstance):
        M = M.normalized().matrix()
    res = solve_min_rank_near(op, M, cfg, basis)
    return res.converged and res.numerical_rank == 2 and res.singular_values[0] > 0.0
