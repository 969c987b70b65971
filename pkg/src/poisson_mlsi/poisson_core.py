"""Numerically stable Poisson primitives.

Everything here works on scalars or numpy arrays. Poisson weights are kept in
log space; sums over the nonnegative integers are truncated with a Poisson
upper-tail bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import DomainError, TruncationError

__all__ = [
    "SeriesTolerance",
    "DEFAULT_TOLERANCE",
    "poisson_log_pmf",
    "poisson_log_tail_bound",
    "series_length",
    "phi",
    "phi_prime",
    "relent_poisson",
    "bregman_phi",
    "theta",
    "weighted_series_sum",
    "log_weighted_series_sum",
]


@dataclass(frozen=True)
class SeriesTolerance:
    """Truncation policy for infinite Poisson-weighted sums.

    Attributes:
        rel_tail: relative tail-mass cutoff.
        abs_floor: absolute underflow floor; a tail below it is ignored.
    """

    rel_tail: float = 1e-14
    abs_floor: float = 1e-300

    def __post_init__(self):
        if not (0.0 < self.rel_tail <= 1e-6):
            raise DomainError(f"rel_tail must lie in (0, 1e-6], got {self.rel_tail!r}")
        if not self.abs_floor > 0.0:
            raise DomainError(f"abs_floor must be positive, got {self.abs_floor!r}")


DEFAULT_TOLERANCE = SeriesTolerance()


def _as_float(x):
    return float(x) if np.ndim(x) == 0 else x


def poisson_log_pmf(t, k):
    """Log of the Poisson(t) probability of ``k``.

    ``t = 0`` is the point mass at zero: the result is 0 for ``k = 0`` and
    ``-inf`` otherwise. Broadcasts over arrays.
    """
    t_arr = np.asarray(t, dtype=float)
    k_arr = np.asarray(k)
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise DomainError(f"Poisson intensity must be nonnegative, got {t!r}")
    if np.any(k_arr < 0):
        raise DomainError(f"Poisson index must be nonnegative, got {k!r}")
    k_f = k_arr.astype(float)
    out = xlogy(k_f, t_arr) - t_arr - gammaln(k_f + 1.0)
    return _as_float(out)


def poisson_log_tail_bound(t: float, n: int) -> float:
    """Log of an upper bound on P(Poisson(t) >= n), valid for n >= 2t.

    Successive pmf ratios t/(j+1) are at most 1/2 beyond n, so the tail is at
    most twice the pmf at n.
    """
    if n < 2.0 * t:
        raise DomainError(f"tail bound needs n >= 2t (n={n}, t={t})")
    return math.log(2.0) + poisson_log_pmf(t, n)


def series_length(rate: float, log_rel: float) -> int:
    """Smallest ``n >= 2*rate`` with ``rate + log P(Poisson(rate) >= n) <= log_rel``.

    ``rate`` enters twice because callers bound a sum whose terms are dominated
    by ``exp(rate) * pi_rate(n)`` relative to its leading term.
    """
    if rate < 0:
        raise DomainError(f"rate must be nonnegative, got {rate!r}")
    if rate == 0.0:
        return 1
    n = max(1, math.ceil(2.0 * rate))
    while rate + poisson_log_tail_bound(rate, n) > log_rel:
        n += 1
    return n


def phi(x):
    """Rate function x log x - x + 1, extended by phi(0) = 1."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(np.isnan(x_arr)):
        raise DomainError(f"phi is defined on [0, inf), got {x!r}")
    return _as_float(xlogy(x_arr, x_arr) - x_arr + 1.0)


def phi_prime(x):
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise DomainError(f"phi' is defined on (0, inf), got {x!r}")
    return _as_float(np.log(x_arr))


def _require_positive(name, *values):
    for v in values:
        a = np.asarray(v, dtype=float)
        if np.any(~(a > 0)):
            raise DomainError(f"{name} requires positive arguments, got {v!r}")


def relent_poisson(alpha, beta):
    """Relative entropy H(pi_alpha | pi_beta) = beta - alpha + alpha log(alpha/beta)."""
    _require_positive("relent_poisson", alpha, beta)
    a = np.asarray(alpha, dtype=float)
    b = np.asarray(beta, dtype=float)
    return _as_float(b - a + a * np.log(a / b))


def bregman_phi(y, x):
    """Bregman divergence of phi: phi(y) - phi(x) - phi'(x) (y - x)."""
    _require_positive("bregman_phi", y, x)
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return _as_float(phi(y) - phi(x) - np.log(x) * (y - x))


def theta(c, z):
    """Stability modulus Theta_c(z) for c > 0, z >= 0.

    Theta_c(z) = z^2/(1+cz) log(1/(1+cz)) - z^2/(1+cz) + z^2.
    """
    c_arr = np.asarray(c, dtype=float)
    z_arr = np.asarray(z, dtype=float)
    if np.any(~(c_arr > 0)):
        raise DomainError(f"theta needs c > 0, got {c!r}")
    if np.any(~(z_arr >= 0)):
        raise DomainError(f"theta needs z >= 0, got {z!r}")
    z2 = z_arr * z_arr
    a = z2 / (1.0 + c_arr * z_arr)
    return _as_float(-a * np.log1p(c_arr * z_arr) - a + z2)


def _check_intensity(t):
    if not (t >= 0) or math.isinf(t):
        raise DomainError(f"Poisson intensity must be finite and nonnegative, got {t!r}")


def weighted_series_sum(
    term: Callable[[int], float],
    t: float,
    tol: SeriesTolerance = DEFAULT_TOLERANCE,
    k_limit: int = 100_000,
) -> float:
    """Sum ``term(k) * pi_t(k)`` over k = 0, 1, 2, ...

    Summation stops once k >= 2t, the weighted terms have started to shrink
    geometrically, and the tail estimate ``2 pi_t(k+1) max|term|`` drops
    below ``rel_tail * |partial sum|`` (or below ``abs_floor``).

    Raises:
        TruncationError: a non-finite term, or weighted terms that keep
            growing far past the Poisson bulk (the series does not converge
            at a usable rate).
    """
    _check_intensity(t)
    if t == 0.0:
        v = float(term(0))
        if not math.isfinite(v):
            raise TruncationError(f"term(0) is not finite: {v!r}")
        return v

    parts = []
    running = 0.0
    max_term = 0.0
    prev = None
    growing = 0
    guard_start = 4.0 * t + 20.0
    for k in range(k_limit + 1):
        v = float(term(k))
        if not math.isfinite(v):
            raise TruncationError(f"term({k}) is not finite: {v!r}")
        max_term = max(max_term, abs(v))
        a = v * math.exp(poisson_log_pmf(t, k))
        parts.append(a)
        running += a
        if k >= 2.0 * t and prev is not None:
            shrinking = abs(a) <= 0.5 * abs(prev) or a == 0.0
            tail = 2.0 * math.exp(poisson_log_pmf(t, k + 1)) * max_term
            s = abs(running)
            if shrinking and (tail <= tol.rel_tail * s or tail <= tol.abs_floor):
                return math.fsum(parts)
            if k > guard_start:
                growing = growing + 1 if abs(a) > abs(prev) else 0
                if growing >= 25:
                    raise TruncationError(
                        f"weighted terms still growing at k={k} (t={t}); "
                        "term grows faster than the Poisson weights decay"
                    )
        prev = a
    raise TruncationError(f"series did not converge within k_limit={k_limit} (t={t})")


def log_weighted_series_sum(
    log_term: Callable[[int], float],
    t: float,
    tol: SeriesTolerance = DEFAULT_TOLERANCE,
    k_limit: int = 100_000,
) -> float:
    """Log of ``sum_k exp(log_term(k)) * pi_t(k)`` for positive terms.

    Same stopping rule as :func:`weighted_series_sum`, carried out with a
    running max-shifted exponential sum so that tiny or huge terms do not
    under/overflow.
    """
    _check_intensity(t)
    if t == 0.0:
        v = float(log_term(0))
        if math.isnan(v) or v == math.inf:
            raise TruncationError(f"log_term(0) is not finite: {v!r}")
        return v

    run_max = -math.inf
    run_sum = 0.0
    max_log_term = -math.inf
    prev = None
    growing = 0
    guard_start = 4.0 * t + 20.0
    for k in range(k_limit + 1):
        lt = float(log_term(k))
        if math.isnan(lt) or lt == math.inf:
            raise TruncationError(f"log_term({k}) is not finite: {lt!r}")
        max_log_term = max(max_log_term, lt)
        la = lt + poisson_log_pmf(t, k)
        if la > run_max:
            run_sum = run_sum * math.exp(run_max - la) + 1.0
            run_max = la
        elif la > -math.inf:
            run_sum += math.exp(la - run_max)
        if k >= 2.0 * t and prev is not None:
            shrinking = la <= prev - math.log(2.0)
            log_tail = math.log(2.0) + poisson_log_pmf(t, k + 1) + max_log_term
            log_s = run_max + math.log(run_sum)
            if shrinking and log_tail <= math.log(tol.rel_tail) + log_s:
                return log_s
            if k > guard_start:
                growing = growing + 1 if la > prev else 0
                if growing >= 25:
                    raise TruncationError(
                        f"weighted terms still growing at k={k} (t={t}); "
                        "term grows faster than the Poisson weights decay"
                    )
        prev = la
    raise TruncationError(f"series did not converge within k_limit={k_limit} (t={t})")
