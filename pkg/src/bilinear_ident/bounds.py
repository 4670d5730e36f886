"""Closed-form probability bounds and scaling laws.

Every function returns the raw value of its formula.  Values outside
``[0, 1]`` are kept as they are: a bound above one (or a success probability
below zero) simply means the estimate is uninformative in that regime, which
:func:`is_vacuous` reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundParams",
    "is_vacuous",
    "lemma1_bound",
    "lemma2_bound",
    "lemma3_gaussian_bound",
    "lemma4_bernoulli_bound",
    "theorem3_prob",
    "corollary3_prob",
    "delta_from_prime",
    "default_theta",
    "convolution_entropy",
    "theorem4_prob",
    "theorem5_failure_term",
    "theorem5_prob",
    "covering_number_bounds",
    "figure1_curve",
    "figure1_log10_curve",
    "theorem5_log_failure_term",
]


@dataclass(frozen=True)
class BoundParams:
    """Bundle of the constants that appear across the bounds.

    Only the fields a given bound needs have to be meaningful.
    """

    m: int = 0
    n: int = 0
    delta: float = 0.0
    delta_prime: float = 0.0
    epsilon: float = 0.1
    p: float = 0.0
    p_c: float = 0.0
    p_r: float = 0.0
    f: int = 0
    r_x: float = 1.0
    r_y: float = 1.0
    theta_constant: float | None = None

    @property
    def theta(self) -> float:
        return default_theta(self.epsilon) if self.theta_constant is None else self.theta_constant


def _exp(x: float) -> float:
    # raw values are kept, so overflow becomes +inf instead of an exception
    return math.exp(x) if x < 709.0 else math.inf


def is_vacuous(value: float, kind: str = "failure") -> bool:
    """True when a failure bound is at least one or a success bound is at most zero."""
    if kind == "failure":
        return not value < 1.0
    if kind == "success":
        return not value > 0.0
    raise ValueError("kind must be 'failure' or 'success'")


def _half_open(delta, name="delta"):
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"{name} must lie in [0, 1)")


def _open(delta, name="delta"):
    if not 0.0 < delta < 1.0:
        raise ValueError(f"{name} must lie in (0, 1)")


def lemma1_bound(m, delta):
    """Markov bound ``2 / (m (1 - delta))`` on a unit direction hugging a 2-plane."""
    _half_open(delta)
    return 2.0 / (m * (1.0 - delta))


def lemma2_bound(r, delta):
    """Same as :func:`lemma1_bound` with the norm floor ``r`` in place of ``sqrt(m)``."""
    _half_open(delta)
    return 2.0 / (r * r * (1.0 - delta))


def lemma3_gaussian_bound(m, delta):
    _open(delta)
    expo = (-m * math.log(1.0 / math.sqrt(delta)) + 2.0 * math.log(m) - 2.0 / m + 2.0
            - math.log(2.0 * delta / (1.0 - delta)))
    return _exp(expo)


def lemma4_bernoulli_bound(m, delta):
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    return _exp(-m * (1.0 - delta) / 4.0 + math.log(4.0))


def theorem3_prob(f, m, n, delta):
    """Lower bound ``1 - 4 f / (m n (1 - delta))`` on the success probability."""
    _half_open(delta)
    return 1.0 - 4.0 * f / (m * n * (1.0 - delta))


def corollary3_prob(f, r_x, r_y, delta):
    _half_open(delta)
    return 1.0 - 4.0 * f / (r_x ** 2 * r_y ** 2 * (1.0 - delta))


def delta_from_prime(delta_prime, epsilon):
    """Threshold after moving from a net point back to the true subspace.

    ``delta = 1 - (sqrt(1 - delta') - sqrt(2) eps)^2`` for
    ``0 <= delta' <= 1 - 2 eps^2``.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must lie in [0, 1)")
    if not 0.0 <= delta_prime <= 1.0 - 2.0 * epsilon ** 2:
        raise ValueError("delta_prime must lie in [0, 1 - 2 epsilon^2]")
    return 1.0 - (math.sqrt(1.0 - delta_prime) - math.sqrt(2.0) * epsilon) ** 2


def default_theta(epsilon):
    """Value used for the covering growth ``Theta(1/eps)``: the upper covering base ``2 + 1/eps``."""
    return 2.0 + 1.0 / epsilon


def convolution_entropy(m, n):
    """Metric entropy coefficient of the convolution rank-two family: ``m + n - 3``."""
    return m + n - 3


def _theta(epsilon, theta_constant):
    return default_theta(epsilon) if theta_constant is None else theta_constant


def theorem4_prob(p, m, n, epsilon, delta_prime, theta_constant=None):
    """Success lower bound ``1 - 16 exp{p log(theta) - (m+n)(1-delta)/4}`` for sign vectors."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    delta = delta_from_prime(delta_prime, epsilon)
    theta = _theta(epsilon, theta_constant)
    return 1.0 - 16.0 * _exp(p * math.log(theta) - (m + n) * (1.0 - delta) / 4.0)


def theorem5_log_failure_term(p, m, n, epsilon, delta, theta_constant=None):
    """Natural log of :func:`theorem5_failure_term`; finite where the value underflows."""
    _open(delta)
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    theta = _theta(epsilon, theta_constant)
    log_c = 2.0 * math.log(m * n) + 4.0 - 2.0 * math.log(2.0 * delta / (1.0 - delta))
    return log_c + p * math.log(theta) - (m + n) * math.log(1.0 / math.sqrt(delta))


def theorem5_failure_term(p, m, n, epsilon, delta, theta_constant=None):
    """``C(m,n,delta) exp{p log(theta) - (m+n) log(1/sqrt delta)}`` in log space.

    ``theta`` stands for the covering growth ``Theta(1/eps)`` and defaults to
    ``2 + 1/eps``.
    """
    return _exp(theorem5_log_failure_term(p, m, n, epsilon, delta, theta_constant))


def theorem5_prob(p, m, n, epsilon, delta_prime, theta_constant=None):
    """Success lower bound for Gaussian signals; ``delta`` derived from ``delta_prime``."""
    delta = delta_from_prime(delta_prime, epsilon)
    return 1.0 - theorem5_failure_term(p, m, n, epsilon, delta, theta_constant)


def covering_number_bounds(n, epsilon):
    """Lower and upper covering numbers ``((1/eps)^n, (2 + 1/eps)^n)``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    return (1.0 / epsilon) ** n, (2.0 + 1.0 / epsilon) ** n


def figure1_curve(m, n_range, epsilon=0.1, delta=1e-4, theta_constant=None):
    """Gaussian failure bound for the convolution family along ``n``.

    Uses ``p = m + n - 3`` and takes ``delta`` directly (no conversion from a
    net threshold).  Returns a list of ``(n, failure_bound)`` pairs.
    """
    return [(int(n), theorem5_failure_term(convolution_entropy(m, n), m, n, epsilon, delta,
                                           theta_constant))
            for n in np.asarray(list(n_range), dtype=int)]


def figure1_log10_curve(m, n_range, epsilon=0.1, delta=1e-4, theta_constant=None):
    """Same curve as :func:`figure1_curve` as ``(n, log10 failure_bound)`` pairs.

    The bound drops below the smallest double well inside plotting ranges, so
    the log form is what a semilog plot should be drawn from.
    """
    return [(int(n), float(theorem5_log_failure_term(convolution_entropy(m, n), m, n, epsilon, delta,
                                                     theta_constant)) / math.log(10.0))
            for n in np.asarray(list(n_range), dtype=int)]
