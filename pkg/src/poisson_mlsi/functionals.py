"""Inequality-level quantities: entropy, Wu's bound, the deficit, stability.

All sums run over ``k = 0..k_reach`` (plus one for forward differences) of
the problem spec, so the neglected tail of ``mu = f pi_T / Z`` is below the
spec's ``rel_tail``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, PreconditionError
from .poisson_core import phi, poisson_log_pmf, theta
from .semigroup import DensityFunction, ProblemSpec

__all__ = [
    "DeficitReport",
    "CounterexampleRow",
    "entropy_functional",
    "wu_rhs",
    "deficit",
    "ulc_violation",
    "is_ultra_log_concave",
    "beta_log_concavity",
    "mean_of_mu",
    "stability_lower_bound",
    "counterexample_demo",
    "deficit_report",
    "extension_mass",
    "random_positive_table",
    "random_ulc_table",
]

INEQUALITY_SLACK = 1e-10
ULC_LOG_SLACK = 1e-12


@dataclass(frozen=True)
class DeficitReport:
    entropy: float
    wu_rhs: float
    deficit: float
    is_ulc: bool
    ulc_violation_index: int | None
    beta: float | None
    mean_mu: float
    stability_bound: float
    margin: float

    @property
    def wu_holds(self) -> bool:
        return self.deficit >= -INEQUALITY_SLACK

    @property
    def stability_holds(self) -> bool:
        return not self.is_ulc or self.margin >= -INEQUALITY_SLACK


@dataclass(frozen=True)
class CounterexampleRow:
    a: float
    T: float
    deficit: float
    beta: float
    conjectured_bound: float
    theta_form: float

    @property
    def violation(self) -> float:
        """How far the deficit falls short of the conjectured lower bound."""
        return self.conjectured_bound - self.deficit


class _Weights:
    """``log f`` and ``mu`` on ``0..K+1`` for a spec."""

    def __init__(self, spec: ProblemSpec):
        k = np.arange(spec.k_reach + 2)
        self.k = k
        self.log_f = np.asarray(spec.log_f(k), dtype=float)
        lw = self.log_f[:-1] + poisson_log_pmf(spec.T, k[:-1])
        self.log_mass = float(logsumexp(lw))
        self.mu = np.exp(lw - self.log_mass)


def entropy_functional(spec: ProblemSpec) -> float:
    """``Ent_{pi_T}[f] = sum f log f pi_T - Z log Z`` with ``Z = sum f pi_T``.

    Computed as ``Z * H(mu | pi_T)``, which equals the relative entropy itself
    for a normalized spec.
    """
    w = _Weights(spec)
    h = float(np.sum(w.mu * (w.log_f[:-1] - w.log_mass)))
    return math.exp(w.log_mass) * h


def wu_rhs(spec: ProblemSpec) -> float:
    """``T sum_k pi_T(k) f(k) phi(f(k+1)/f(k))``, Wu's upper bound on the entropy."""
    w = _Weights(spec)
    ratios = np.exp(np.diff(w.log_f))
    return spec.T * math.exp(w.log_mass) * float(np.sum(w.mu * phi(ratios)))


def deficit(spec: ProblemSpec) -> float:
    """Wu's bound minus the entropy. Nonnegative up to roundoff."""
    w = _Weights(spec)
    ratios = np.exp(np.diff(w.log_f))
    rhs = spec.T * float(np.sum(w.mu * phi(ratios)))
    ent = float(np.sum(w.mu * (w.log_f[:-1] - w.log_mass)))
    return math.exp(w.log_mass) * (rhs - ent)


def ulc_violation(log_values, slack: float = ULC_LOG_SLACK) -> int | None:
    """First ``k >= 1`` where ``k g(k)^2 >= (k+1) g(k+1) g(k-1)`` fails, else ``None``.

    ``log_values`` holds ``log g(0..n)``; indices ``1..n-1`` are checked.
    """
    lv = np.asarray(log_values, dtype=float)
    if lv.size < 3:
        return None
    k = np.arange(1, lv.size - 1)
    lhs = np.log(k) + 2.0 * lv[1:-1]
    rhs = np.log(k + 1.0) + lv[2:] + lv[:-2]
    bad = np.nonzero(lhs < rhs - slack)[0]
    return int(k[bad[0]]) if bad.size else None


def _default_k_check(f: DensityFunction) -> int:
    return max(50, f.k_max or 0)


def is_ultra_log_concave(f: DensityFunction, k_check: int | None = None) -> tuple[bool, int | None]:
    """Check ``k f(k)^2 >= (k+1) f(k+1) f(k-1)`` for ``1 <= k <= k_check``.

    Comparisons run in log space with slack 1e-12. Returns ``(ok, first_bad_k)``.
    """
    if k_check is None:
        k_check = _default_k_check(f)
    if k_check < 1:
        raise DomainError(f"k_check must be at least 1, got {k_check!r}")
    bad = ulc_violation(f.log_value(np.arange(k_check + 2)))
    return bad is None, bad


def beta_log_concavity(spec: ProblemSpec, k_check: int = 50) -> float:
    """Largest ``beta`` with ``(mu(k+1)^2 - mu(k+2)mu(k)) / (mu(k+1)mu(k+2)) >= beta``
    for ``0 <= k <= k_check``."""
    # With r_k = f(k)/f(k+1) the quantity is ((k+2) r_{k+1} - (k+1) r_k) / T.
    # Writing r_{k+1} - r_k = r_k expm1(-(second difference of log f)) keeps
    # it exact for geometric f instead of losing k ulps to cancellation.
    lr = np.asarray(spec.f.log_ratio(np.arange(k_check + 2)), dtype=float)
    k = np.arange(k_check + 1, dtype=float)
    r = np.exp(-lr)
    out = (k + 1.0) * r[:-1] * np.expm1(-(lr[1:] - lr[:-1])) + r[1:]
    return float(np.min(out)) / spec.T


def mean_of_mu(spec: ProblemSpec) -> float:
    w = _Weights(spec)
    return float(np.sum(w.k[:-1] * w.mu))


def stability_lower_bound(spec: ProblemSpec, k_check: int | None = None) -> float:
    """``(T^2/2) Theta_{f(0)/f(1)}(E[mu]/T)``, the ULC lower bound on the deficit.

    Raises:
        PreconditionError: ``f`` is not ultra-log-concave, or ``spec`` is not
            normalized (the bound concerns the deficit of ``f / Z``).
    """
    ok, bad = is_ultra_log_concave(spec.f, k_check)
    if not ok:
        raise PreconditionError(f"stability bound needs an ultra-log-concave f (fails at k={bad})")
    if not spec.normalize:
        raise PreconditionError("stability bound is stated for normalized f")
    c = math.exp(spec.log_f(0) - spec.log_f(1))
    return spec.T**2 / 2.0 * theta(c, mean_of_mu(spec) / spec.T)


def deficit_report(spec: ProblemSpec, k_check: int | None = None) -> DeficitReport:
    if k_check is None:
        k_check = _default_k_check(spec.f)
    ent = entropy_functional(spec)
    rhs = wu_rhs(spec)
    ok, bad = is_ultra_log_concave(spec.f, k_check)
    m = mean_of_mu(spec)
    beta = beta_log_concavity(spec, k_check)
    if ok and spec.normalize:
        bound = stability_lower_bound(spec, k_check)
    else:
        bound = float("nan")
    d = deficit(spec)
    return DeficitReport(
        entropy=ent,
        wu_rhs=rhs,
        deficit=d,
        is_ulc=ok,
        ulc_violation_index=bad,
        beta=beta,
        mean_mu=m,
        stability_bound=bound,
        margin=d - bound if ok else float("nan"),
    )


def counterexample_demo(a_grid, T: float = 1.0) -> list[CounterexampleRow]:
    """Geometric equality cases against the conjectured beta-log-concave bound.

    Each row has zero deficit while ``(1 - log 2) / (4 beta^2)`` grows without
    bound as ``beta = 1/(T e^a)`` shrinks.
    """
    rows = []
    for a in a_grid:
        spec = ProblemSpec(T, DensityFunction.geometric(a, 0.0))
        beta = beta_log_concavity(spec)
        rows.append(
            CounterexampleRow(
                a=float(a),
                T=float(T),
                deficit=deficit(spec),
                beta=beta,
                conjectured_bound=(1.0 - math.log(2.0)) / (4.0 * beta * beta),
                theta_form=T * T / 2.0 * theta(T * beta, 1.0 / (T * beta)),
            )
        )
    return rows


def extension_mass(spec: ProblemSpec) -> float:
    """Mass of ``mu`` carried by extrapolated table values (0 for closed forms)."""
    km = spec.f.k_max
    if km is None:
        return 0.0
    w = _Weights(spec)
    return float(np.sum(w.mu[km + 1 :]))


def random_positive_table(
    rng: np.random.Generator, k_max: int = 40, spread: float = 2.0
) -> DensityFunction:
    """Table with i.i.d. ``log f(k) ~ U[-spread, spread]`` and a geometric tail."""
    return DensityFunction.table(np.exp(rng.uniform(-spread, spread, size=k_max + 1)))


def random_ulc_table(rng: np.random.Generator, k_max: int = 20) -> DensityFunction:
    """Random ultra-log-concave table with the ULC-preserving tail.

    ``f(k) k!`` is log-concave by construction: its log-increments start in
    ``[-1, 1.5]`` and then decrease by random amounts.
    """
    incr = rng.uniform(-1.0, 1.5) - np.concatenate([[0.0], np.cumsum(rng.uniform(0.0, 0.6, k_max - 1))])
    log_g = rng.uniform(-1.0, 1.0) + np.concatenate([[0.0], np.cumsum(incr)])
    k = np.arange(k_max + 1)
    log_f = log_g - np.array([math.lgamma(j + 1.0) for j in k])
    return DensityFunction.table(np.exp(log_f), extension="ulc")
