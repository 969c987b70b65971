"""Deterministic checks of the entropy representation and the deficit identity.

The Poisson-Follmer process has the explicit marginal law
``X_t ~ (P_{T-t} f) pi_t``, so every path expectation ``E[g(t, X_t)]`` is a
weighted series. Time integrals over ``[0, T]`` are then done by adaptive
Simpson quadrature; no randomness is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, InvariantViolation, NormalizationError, PreconditionError, QuadratureError
from .functionals import (
    INEQUALITY_SLACK,
    deficit,
    entropy_functional,
    is_ultra_log_concave,
    stability_lower_bound,
    ulc_violation,
)
from .poisson_core import phi, poisson_log_pmf, relent_poisson
from .semigroup import F_equation_residual, G_equation_residual, ProblemSpec, heat_residual, log_semigroup

__all__ = [
    "QuadratureConfig",
    "IdentityReport",
    "MarginalLaw",
    "StabilityChainReport",
    "adaptive_simpson",
    "law_at",
    "expectation_at_time",
    "verify_entropy_representation",
    "verify_deficit_identity",
    "verify_phi_derivative_identity",
    "verify_stability_chain",
    "wu_jensen_check",
    "fubini_residual",
    "convergence_order",
    "trapezoid_entropy_bias",
    "verify_all",
]

MASS_TOL = 1e-10
ENTROPY_REP_TOL = 1e-8
DEFICIT_REL_TOL = 1e-6
DEFICIT_ABS_TOL = 1e-10
ZERO_LHS = 1e-8


@dataclass(frozen=True)
class QuadratureConfig:
    tol: float = 1e-11
    max_depth: int = 30
    k_cap: int | None = None

    def __post_init__(self):
        if not (0 < self.tol <= 1e-8):
            raise DomainError(f"quadrature tol must lie in (0, 1e-8], got {self.tol!r}")
        if self.max_depth < 20:
            raise DomainError(f"max_depth must be at least 20, got {self.max_depth!r}")


@dataclass(frozen=True)
class IdentityReport:
    name: str
    lhs: float
    rhs: float
    abs_residual: float
    rel_residual: float
    passed: bool
    note: str = ""

    @classmethod
    def compare(cls, name: str, lhs: float, rhs: float, passed: bool, note: str = "") -> "IdentityReport":
        r = abs(lhs - rhs)
        rel = r / abs(lhs) if lhs != 0 else (0.0 if r == 0 else math.inf)
        return cls(name, float(lhs), float(rhs), float(r), float(rel), bool(passed), note)


def adaptive_simpson(
    func: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-11,
    max_depth: int = 30,
) -> tuple[float, float]:
    """Integrate ``func`` over ``[a, b]`` by adaptive Simpson with Richardson correction.

    Each accepted panel satisfies ``|S2 - S1| <= 15 tol_panel`` where the
    tolerance halves at every split. Returns ``(value, error_estimate)``.

    Raises:
        QuadratureError: a panel reached ``max_depth`` without meeting its
            tolerance.
    """
    if a == b:
        return 0.0, 0.0
    fa, fm, fb = func(a), func(0.5 * (a + b)), func(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    pieces = []
    errors = []
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s_whole, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        fl = func(0.5 * (lo + mid))
        fr = func(0.5 * (mid + hi))
        left = (mid - lo) / 6.0 * (flo + 4.0 * fl + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * fr + fhi)
        delta = left + right - s_whole
        if abs(delta) <= 15.0 * eps:
            pieces.append(left + right + delta / 15.0)
            errors.append(abs(delta) / 15.0)
        elif depth >= max_depth:
            raise QuadratureError(
                f"adaptive Simpson did not converge on [{lo:.6g}, {hi:.6g}] at depth {depth}"
            )
        else:
            stack.append((mid, hi, fmid, fr, fhi, right, eps / 2.0, depth + 1))
            stack.append((lo, mid, flo, fl, fmid, left, eps / 2.0, depth + 1))
    return math.fsum(pieces), math.fsum(errors)


class MarginalLaw:
    """The law ``(P_{T-t} f) pi_t`` of ``X_t`` on ``0..K`` plus the semigroup
    values ``F(t, k)`` on ``0..K+2`` needed by G, DG and D^2F."""

    def __init__(self, spec: ProblemSpec, t: float, k_cap: int | None = None):
        if not spec.normalize:
            raise PreconditionError("the Follmer marginal law needs a normalized spec")
        if not (0 <= t <= spec.T):
            raise DomainError(f"time must lie in [0, T={spec.T}], got {t!r}")
        K = spec.k_reach if k_cap is None else k_cap
        self.t = float(t)
        self.k = np.arange(K + 1)
        self.F = np.asarray(log_semigroup(spec, spec.T - t, np.arange(K + 3)), dtype=float)
        self.weights = np.exp(self.F[: K + 1] + poisson_log_pmf(t, self.k))
        self.mass = float(np.sum(self.weights))
        if abs(self.mass - 1.0) > MASS_TOL:
            raise NormalizationError(
                f"law of X_t at t={t} has total mass {self.mass!r} (|1 - mass| > {MASS_TOL})"
            )

    @property
    def G(self) -> np.ndarray:
        return np.exp(self.F[1:-1] - self.F[:-2])

    @property
    def DG(self) -> np.ndarray:
        g = np.exp(np.diff(self.F))
        return g[1:] - g[:-1]

    @property
    def second_difference_exponent(self) -> np.ndarray:
        return np.exp(self.F[2:] - 2.0 * self.F[1:-1] + self.F[:-2])

    def expect(self, values) -> float:
        return float(np.sum(self.weights * np.asarray(values, dtype=float)))


def law_at(spec: ProblemSpec, t: float, qcfg: QuadratureConfig | None = None) -> MarginalLaw:
    return MarginalLaw(spec, t, None if qcfg is None else qcfg.k_cap)


def expectation_at_time(spec: ProblemSpec, t: float, g: Callable, qcfg: QuadratureConfig | None = None) -> float:
    """``E[g(t, X_t)] = sum_k g(t, k) P_{T-t} f(k) pi_t(k)``.

    ``g`` receives ``t`` and the integer array of states. The law's total
    mass is checked on every call.
    """
    law = law_at(spec, t, qcfg)
    return law.expect(g(t, law.k))


def _phi_of_lambda(law: MarginalLaw) -> float:
    return law.expect(phi(law.G))


def _deficit_density(law: MarginalLaw) -> float:
    g = law.G
    return law.expect(g * g * relent_poisson(law.second_difference_exponent, 1.0))


def _integrate(spec: ProblemSpec, integrand: Callable[[float], float], qcfg: QuadratureConfig) -> float:
    value, _ = adaptive_simpson(integrand, 0.0, spec.T, qcfg.tol, qcfg.max_depth)
    return value


def verify_entropy_representation(spec: ProblemSpec, qcfg: QuadratureConfig = QuadratureConfig()) -> IdentityReport:
    """``H(mu | pi_T)`` against ``int_0^T E[phi(lambda_t)] dt``; passes at 1e-8."""
    lhs = entropy_functional(spec)
    rhs = _integrate(spec, lambda t: _phi_of_lambda(law_at(spec, t, qcfg)), qcfg)
    r = IdentityReport.compare("entropy_representation", lhs, rhs, False)
    return IdentityReport.compare(r.name, lhs, rhs, r.abs_residual <= ENTROPY_REP_TOL)


def verify_deficit_identity(spec: ProblemSpec, qcfg: QuadratureConfig = QuadratureConfig()) -> IdentityReport:
    """Deficit against ``int_0^T s E[lambda_s^2 H(pi_{exp D^2F(s,X_s)} | pi_1)] ds``.

    The double integral over ``0 <= t <= s <= T`` is collapsed to the single
    integral with weight ``s``. Passes at relative 1e-6, or absolute 1e-10
    when the deficit itself is below 1e-8.
    """
    lhs = deficit(spec)
    rhs = _integrate(spec, lambda s: s * _deficit_density(law_at(spec, s, qcfg)), qcfg)
    r = abs(lhs - rhs)
    if abs(lhs) < ZERO_LHS:
        ok = r <= DEFICIT_ABS_TOL
    else:
        ok = r <= DEFICIT_REL_TOL * abs(lhs)
    return IdentityReport.compare("deficit_identity", lhs, rhs, ok)


def verify_phi_derivative_identity(spec: ProblemSpec, s: float, h: float, qcfg: QuadratureConfig | None = None) -> IdentityReport:
    """Central difference of ``t -> E[phi(lambda_t)]`` at ``s`` against
    ``E[G (phi(G + DG) - phi(G) - phi'(G) DG)]``.

    The report's ``passed`` flag only says the residual is finite; the
    convergence claim needs two step sizes (see :func:`convergence_order`).
    """
    if not (0 < h and h <= s <= spec.T - h):
        raise DomainError(f"need h <= s <= T - h, got s={s!r}, h={h!r}")
    lhs = (_phi_of_lambda(law_at(spec, s + h, qcfg)) - _phi_of_lambda(law_at(spec, s - h, qcfg))) / (2 * h)
    law = law_at(spec, s, qcfg)
    g = law.G
    dg = law.DG
    rhs = law.expect(g * (phi(g + dg) - phi(g) - np.log(g) * dg))
    return IdentityReport.compare("phi_derivative_identity", lhs, rhs, math.isfinite(lhs - rhs), note=f"h={h:g}")


def convergence_order(residuals, steps, expected: float, floor: float = 1e-10) -> tuple[bool, float]:
    """Observed order of a finite-difference residual between two step sizes.

    Passes when the order is at least ``expected - 0.3``, or when the residual
    at the larger step is already below ``floor`` (nothing left to resolve,
    e.g. when the exact derivative is constant).
    """
    (r1, r2), (h1, h2) = residuals, steps
    if r1 <= floor:
        return True, math.nan
    if r2 <= 0:
        return True, math.inf
    order = math.log(r1 / r2) / math.log(h1 / h2)
    return order >= expected - 0.3, order


@dataclass(frozen=True)
class StabilityChainReport:
    exponent_bound_violation: float
    eta_increase: float
    ulc_failures: int
    n_times: int
    n_states: int

    @property
    def exponent_bound_ok(self) -> bool:
        return self.exponent_bound_violation <= 1e-12

    @property
    def eta_monotone_ok(self) -> bool:
        return self.eta_increase <= 1e-12

    @property
    def ulc_preserved_ok(self) -> bool:
        return self.ulc_failures == 0

    @property
    def passed(self) -> bool:
        return self.exponent_bound_ok and self.eta_monotone_ok and self.ulc_preserved_ok


def verify_stability_chain(
    spec: ProblemSpec,
    qcfg: QuadratureConfig = QuadratureConfig(),
    n_times: int = 41,
    raise_on_failure: bool = True,
) -> StabilityChainReport:
    """Grid check of the three facts behind the ULC stability bound.

    (i)   ``exp(D^2 F(s, k)) <= 1 / (1 + (f(0)/f(1)) G(s, k)) + 1e-12``
    (ii)  ``eta(s) = P_{T-s} f(0) / P_{T-s} f(1)`` is non-increasing
    (iii) ``P_{T-s} f`` is ultra-log-concave

    States run over ``0..K`` where the law of every ``X_s`` puts mass at
    least ``1 - rel_tail`` on that range.

    Raises:
        PreconditionError: ``f`` is not ultra-log-concave.
        InvariantViolation: one of the three checks fails (when
            ``raise_on_failure``).
    """
    ok, bad = is_ultra_log_concave(spec.f)
    if not ok:
        raise PreconditionError(f"stability chain needs an ultra-log-concave f (fails at k={bad})")
    K = spec.k_reach if qcfg.k_cap is None else qcfg.k_cap
    c = math.exp(spec.log_f(0) - spec.log_f(1))
    times = np.linspace(0.0, spec.T, n_times)
    worst = -math.inf
    etas = []
    ulc_failures = 0
    for s in times:
        F = np.asarray(log_semigroup(spec, spec.T - s, np.arange(K + 3)), dtype=float)
        g = np.exp(F[1:-1] - F[:-2])
        e2 = np.exp(F[2:] - 2.0 * F[1:-1] + F[:-2])
        worst = max(worst, float(np.max(e2 - 1.0 / (1.0 + c * g))))
        etas.append(math.exp(F[0] - F[1]))
        if ulc_violation(F) is not None:
            ulc_failures += 1
    etas = np.asarray(etas)
    increase = float(np.max(np.diff(etas) / etas[:-1])) if len(etas) > 1 else -math.inf
    report = StabilityChainReport(worst, increase, ulc_failures, n_times, K + 1)
    if raise_on_failure:
        if not report.exponent_bound_ok:
            raise InvariantViolation("second_difference_bound", f"max excess {worst:.3e}")
        if not report.eta_monotone_ok:
            raise InvariantViolation("eta_monotone", f"max relative increase {increase:.3e}")
        if not report.ulc_preserved_ok:
            raise InvariantViolation("ulc_preserved", f"{ulc_failures} grid times fail")
    return report


def wu_jensen_check(spec: ProblemSpec, qcfg: QuadratureConfig = QuadratureConfig()) -> IdentityReport:
    """``int_0^T E[phi(lambda_t)] dt <= T E[phi(lambda_T)]`` (up to 1e-10)."""
    lhs = _integrate(spec, lambda t: _phi_of_lambda(law_at(spec, t, qcfg)), qcfg)
    rhs = spec.T * _phi_of_lambda(law_at(spec, spec.T, qcfg))
    return IdentityReport.compare("wu_jensen", lhs, rhs, lhs <= rhs + 1e-10, note="inequality lhs <= rhs")


def fubini_residual(h: Callable[[float], float], T: float, tol: float = 1e-11) -> tuple[float, float]:
    """Nested ``int_0^T int_t^T h(s) ds dt`` and the collapsed ``int_0^T s h(s) ds``."""
    nested, _ = adaptive_simpson(lambda t: adaptive_simpson(h, t, T, tol)[0], 0.0, T, tol)
    collapsed, _ = adaptive_simpson(lambda s: s * h(s), 0.0, T, tol)
    return nested, collapsed


def phi_lambda_curve(spec: ProblemSpec, times, qcfg: QuadratureConfig | None = None) -> np.ndarray:
    """Deterministic ``E[phi(lambda_t)]`` at the given times."""
    return np.array([_phi_of_lambda(law_at(spec, t, qcfg)) for t in times])


def trapezoid_entropy_bias(spec: ProblemSpec, grid, qcfg: QuadratureConfig | None = None) -> float:
    """Trapezoid rule of ``E[phi(lambda_t)]`` on ``grid`` minus the exact entropy."""
    grid = np.asarray(grid, dtype=float)
    return float(np.trapezoid(phi_lambda_curve(spec, grid, qcfg), grid)) - entropy_functional(spec)


PDE_STEPS = (1e-3, 1e-4)


def _order_report(name: str, residuals, expected: float) -> IdentityReport:
    ok, order = convergence_order(residuals, PDE_STEPS, expected)
    r1, r2 = residuals
    return IdentityReport(
        name, order, expected, abs(order - expected) if math.isfinite(order) else math.nan,
        math.nan, ok, note=f"residuals {r1:.3e}, {r2:.3e} at h={PDE_STEPS[0]:g}, {PDE_STEPS[1]:g}",
    )


def verify_all(spec: ProblemSpec, qcfg: QuadratureConfig = QuadratureConfig(), states=(0, 1, 2)) -> list[IdentityReport]:
    """Every deterministic check available for ``spec``, one report each.

    Finite-difference rows report the observed convergence order as ``lhs``
    and the expected order as ``rhs``; the worst state in ``states`` counts.
    The stability rows only appear for an ultra-log-concave ``f``.
    """
    out = [
        verify_entropy_representation(spec, qcfg),
        verify_deficit_identity(spec, qcfg),
        wu_jensen_check(spec, qcfg),
    ]
    t = spec.T / 2.0
    for name, fn, expected in (
        ("heat_equation_order", heat_residual, 1.0),
        ("F_equation_order", F_equation_residual, 2.0),
        ("G_equation_order", G_equation_residual, 2.0),
    ):
        reps = [_order_report(name, [fn(spec, t, k, h) for h in PDE_STEPS], expected) for k in states]
        out.append(min(reps, key=lambda r: (r.passed, r.lhs if math.isfinite(r.lhs) else math.inf)))
    deriv = [abs(verify_phi_derivative_identity(spec, t, h, qcfg).abs_residual) for h in PDE_STEPS]
    out.append(_order_report("phi_derivative_order", deriv, 2.0))

    if is_ultra_log_concave(spec.f)[0] and spec.normalize:
        d = deficit(spec)
        bound = stability_lower_bound(spec)
        out.append(
            IdentityReport.compare("stability_bound", d, bound, d >= bound - INEQUALITY_SLACK, note="inequality lhs >= rhs")
        )
        chain = verify_stability_chain(spec, qcfg, raise_on_failure=False)
        out.append(
            IdentityReport.compare(
                "chain_second_difference_bound", chain.exponent_bound_violation, 0.0, chain.exponent_bound_ok,
                note="max of exp(D2F) - 1/(1 + c G); must be <= 1e-12",
            )
        )
        out.append(
            IdentityReport.compare(
                "chain_eta_monotone", chain.eta_increase, 0.0, chain.eta_monotone_ok,
                note="max relative increase of eta; must be <= 1e-12",
            )
        )
        out.append(
            IdentityReport.compare(
                "chain_ulc_preserved", float(chain.ulc_failures), 0.0, chain.ulc_preserved_ok,
                note=f"grid times where P_(T-s) f is not ultra-log-concave, of {chain.n_times}",
            )
        )
    return out
