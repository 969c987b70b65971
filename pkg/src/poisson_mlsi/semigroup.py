"""Density model and the Poisson semigroup.

``P_s f(k) = sum_n f(k+n) pi_s(n)``. With a horizon ``T`` fixed by the
problem, ``F(t, k) = log P_{T-t} f(k)`` and ``G(t, k) = exp(D F(t, k))`` is the
intensity of the Poisson-Follmer process at state ``k`` and time ``t``.

Two evaluation routes exist on purpose. :func:`apply_semigroup` sums one
value adaptively term by term; :func:`log_semigroup` evaluates whole arrays
with an a-priori series length derived from the density's maximal growth
ratio. The test-suite checks them against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DomainError, TruncationError
from .poisson_core import (
    DEFAULT_TOLERANCE,
    SeriesTolerance,
    log_weighted_series_sum,
    poisson_log_pmf,
    series_length,
)

__all__ = [
    "DensityFunction",
    "ProblemSpec",
    "apply_semigroup",
    "semigroup_of",
    "log_semigroup",
    "difference",
    "log_semigroup_F",
    "ratio_G",
    "second_difference_exponent",
    "eta_ratio",
    "heat_residual",
    "F_equation_residual",
    "G_equation_residual",
]

FAMILIES = ("geometric", "gaussian_like", "poisson_kernel", "table")
EXTENSIONS = ("geometric", "ulc")
MAX_RATE = 1e4


@dataclass(frozen=True)
class DensityFunction:
    """A strictly positive function on the nonnegative integers.

    Build instances with the family constructors rather than directly:

    * ``geometric(a, b)``: ``exp(a k + b)``
    * ``gaussian_like(q, s)``: ``q**(k**2) * s**k`` with ``0 < q < 1``
    * ``poisson_kernel(c)``: ``c**k / k!``
    * ``table(values, extension)``: explicit values on ``0..k_max``, then
      either a geometric tail with the last ratio (``"geometric"``) or a
      Poisson-kernel-shaped tail that keeps ``k f(k)^2 = (k+1) f(k+1) f(k-1)``
      (``"ulc"``).
    """

    kind: str
    params: tuple = ()
    values: tuple = ()
    extension: str = "geometric"

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise DomainError(f"unknown density family {self.kind!r}")
        if self.kind == "table":
            if not self.values:
                raise DomainError("table density needs at least one value")
            if any(not (v > 0) or math.isinf(v) for v in self.values):
                raise DomainError("table values must be finite and strictly positive")
            if self.extension not in EXTENSIONS:
                raise DomainError(f"unknown table extension {self.extension!r}")
            if self.extension == "ulc" and len(self.values) < 2:
                raise DomainError("ulc extension needs at least two table values")

    @classmethod
    def geometric(cls, a: float, b: float = 0.0) -> "DensityFunction":
        if not (math.isfinite(a) and math.isfinite(b)):
            raise DomainError("geometric parameters must be finite")
        return cls("geometric", (float(a), float(b)))

    @classmethod
    def gaussian_like(cls, q: float, s: float = 1.0) -> "DensityFunction":
        if not (0.0 < q < 1.0):
            raise DomainError(f"gaussian_like needs 0 < q < 1, got {q!r}")
        if not (s > 0 and math.isfinite(s)):
            raise DomainError(f"gaussian_like needs s > 0, got {s!r}")
        return cls("gaussian_like", (float(q), float(s)))

    @classmethod
    def poisson_kernel(cls, c: float) -> "DensityFunction":
        if not (c > 0 and math.isfinite(c)):
            raise DomainError(f"poisson_kernel needs c > 0, got {c!r}")
        return cls("poisson_kernel", (float(c),))

    @classmethod
    def table(cls, values, extension: str = "geometric") -> "DensityFunction":
        return cls("table", (), tuple(float(v) for v in values), extension)

    @classmethod
    def constant(cls) -> "DensityFunction":
        return cls.table([1.0])

    @property
    def k_max(self) -> int | None:
        """Last tabulated index for table densities, ``None`` otherwise."""
        return len(self.values) - 1 if self.kind == "table" else None

    @cached_property
    def _table_logs(self) -> np.ndarray:
        return np.log(np.asarray(self.values, dtype=float))

    def _last_log_ratio(self) -> float:
        lv = self._table_logs
        return float(lv[-1] - lv[-2]) if len(lv) > 1 else 0.0

    def log_value(self, k):
        """``log f(k)``; broadcasts over integer arrays."""
        k_arr = np.asarray(k)
        if np.any(k_arr < 0):
            raise DomainError(f"density index must be nonnegative, got {k!r}")
        kf = k_arr.astype(float)
        if self.kind == "geometric":
            a, b = self.params
            out = a * kf + b
        elif self.kind == "gaussian_like":
            q, s = self.params
            out = kf * kf * math.log(q) + kf * math.log(s)
        elif self.kind == "poisson_kernel":
            (c,) = self.params
            out = kf * math.log(c) - gammaln(kf + 1.0)
        else:
            lv = self._table_logs
            km = len(lv) - 1
            inside = np.minimum(k_arr, km).astype(int)
            out = lv[inside]
            beyond = kf - km
            lr = self._last_log_ratio()
            if self.extension == "geometric":
                ext = lv[-1] + beyond * lr
            else:
                ext = (
                    lv[-1]
                    + beyond * (lr + math.log(km))
                    - (gammaln(kf + 1.0) - gammaln(km + 1.0))
                )
            out = np.where(k_arr > km, ext, out)
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, k):
        return np.exp(self.log_value(k))

    def log_ratio(self, k):
        """``log f(k+1) - log f(k)`` in closed form where the family has one."""
        k_arr = np.asarray(k)
        if np.any(k_arr < 0):
            raise DomainError(f"density index must be nonnegative, got {k!r}")
        kf = k_arr.astype(float)
        if self.kind == "geometric":
            out = np.full(kf.shape, self.params[0])
        elif self.kind == "gaussian_like":
            q, s = self.params
            out = (2.0 * kf + 1.0) * math.log(q) + math.log(s)
        elif self.kind == "poisson_kernel":
            out = math.log(self.params[0]) - np.log1p(kf)
        else:
            lv = self._table_logs
            km = len(lv) - 1
            lr = self._last_log_ratio()
            inner = np.diff(lv)[np.minimum(k_arr, max(km - 1, 0))] if km else np.zeros(kf.shape)
            if self.extension == "geometric":
                ext = np.full(kf.shape, lr)
            else:
                ext = lr + math.log(max(km, 1)) - np.log1p(kf)
            out = np.where(k_arr >= km, ext, inner)
        return float(out) if np.ndim(out) == 0 else out

    def max_log_ratio(self) -> float:
        """``log sup_k f(k+1)/f(k)``, the growth rate that bounds every tail."""
        if self.kind == "geometric":
            return self.params[0]
        if self.kind == "gaussian_like":
            q, s = self.params
            return math.log(q) + math.log(s)
        if self.kind == "poisson_kernel":
            return math.log(self.params[0])
        lv = self._table_logs
        if len(lv) == 1:
            return 0.0
        inner = float(np.max(np.diff(lv)))
        km = len(lv) - 1
        if self.extension == "geometric":
            return inner
        return max(inner, self._last_log_ratio() + math.log(km / (km + 1.0)))

    def to_dict(self) -> dict:
        if self.kind == "geometric":
            return {"family": "geometric", "a": self.params[0], "b": self.params[1]}
        if self.kind == "gaussian_like":
            return {"family": "gaussian_like", "q": self.params[0], "s": self.params[1]}
        if self.kind == "poisson_kernel":
            return {"family": "poisson_kernel", "c": self.params[0]}
        return {"family": "table", "values": list(self.values), "extension": self.extension}

    def describe(self) -> str:
        d = self.to_dict()
        fam = d.pop("family")
        if fam == "table":
            return f"table(k_max={self.k_max}, extension={self.extension})"
        return f"{fam}(" + ", ".join(f"{k}={v!r}" for k, v in d.items()) + ")"


@dataclass(frozen=True)
class ProblemSpec:
    """Horizon, density and numerical policy for one problem.

    With ``normalize`` set, every functional sees ``f / Z`` where
    ``Z = sum_k f(k) pi_T(k)``, so ``mu = f pi_T / Z`` is a probability law.
    ``k_reach`` defaults to the smallest index past which the tail mass of
    ``mu`` is provably below ``tol.rel_tail``.
    """

    T: float
    f: DensityFunction
    normalize: bool = True
    tol: SeriesTolerance = field(default=DEFAULT_TOLERANCE)
    k_reach: int | None = None

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise DomainError(f"horizon T must be positive and finite, got {self.T!r}")
        if self.T * self.growth > MAX_RATE:
            raise TruncationError(
                f"T * sup f(k+1)/f(k) = {self.T * self.growth:.3g} exceeds {MAX_RATE:g}; "
                "Poisson-weighted sums would need an impractical number of terms"
            )
        if self.k_reach is None:
            object.__setattr__(self, "k_reach", self.default_reach())
        elif self.k_reach < 2:
            raise DomainError(f"k_reach must be at least 2, got {self.k_reach!r}")

    @property
    def growth(self) -> float:
        """``max(1, sup f(k+1)/f(k))``; intensities never exceed ``T * growth``."""
        return math.exp(max(0.0, self.f.max_log_ratio()))

    def default_reach(self) -> int:
        # sum_{k>=K} f(k) pi_T(k) <= f(0) e^{T(R-1)} P(Poisson(TR) >= K)
        # while Z >= f(0) e^{-T}.
        return series_length(self.T * self.growth, math.log(self.tol.rel_tail))

    @cached_property
    def n_terms(self) -> int:
        """Series length used by :func:`log_semigroup` for any ``s <= T``."""
        return series_length(self.T * self.growth, math.log(self.tol.rel_tail))

    @cached_property
    def log_norm(self) -> float:
        """``log Z`` when normalizing, else 0."""
        if not self.normalize:
            return 0.0
        return self.raw_log_mass()

    def raw_log_mass(self) -> float:
        k = np.arange(self.k_reach + 1)
        return float(logsumexp(self.f.log_value(k) + poisson_log_pmf(self.T, k)))

    @cached_property
    def _log_f_table(self) -> np.ndarray:
        k = np.arange(self.k_reach + self.n_terms + 4)
        return np.asarray(self.f.log_value(k), dtype=float) - self.log_norm

    def log_f(self, k):
        """``log f(k)`` of the (possibly normalized) density."""
        k_arr = np.asarray(k)
        tab = self._log_f_table
        if k_arr.size and int(np.max(k_arr)) < len(tab):
            out = tab[k_arr]
        else:
            out = np.asarray(self.f.log_value(k_arr), dtype=float) - self.log_norm
        return float(out) if np.ndim(out) == 0 else out

    def with_tolerance(self, rel_tail: float) -> "ProblemSpec":
        return ProblemSpec(self.T, self.f, self.normalize, SeriesTolerance(rel_tail, self.tol.abs_floor))


def _check_time(spec: ProblemSpec, t) -> None:
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > spec.T * (1 + 1e-15)):
        raise DomainError(f"time must lie in [0, T={spec.T}], got {t!r}")


def semigroup_of(
    log_g: Callable[[int], float],
    s: float,
    k: int,
    tol: SeriesTolerance = DEFAULT_TOLERANCE,
) -> float:
    """``log P_s g(k)`` for a positive function given by its logarithm."""
    if k < 0:
        raise DomainError(f"index must be nonnegative, got {k!r}")
    return log_weighted_series_sum(lambda n: log_g(k + n), s, tol)


def apply_semigroup(spec: ProblemSpec, t: float, k: int) -> float:
    """``P_t f(k)`` by adaptive summation. ``P_0 f = f`` exactly."""
    if t < 0:
        raise DomainError(f"semigroup time must be nonnegative, got {t!r}")
    if t == 0:
        return float(spec.f(k)) if not spec.normalize else math.exp(spec.log_f(k))
    return math.exp(semigroup_of(spec.log_f, t, k, spec.tol))


def log_semigroup(spec: ProblemSpec, s, k):
    """Vectorized ``log P_s f(k)``; ``s`` and ``k`` broadcast together.

    The series is cut at ``spec.n_terms``, which is a rigorous relative bound
    for every ``s <= T``: terms are at most ``f(k) R^n pi_s(n)`` with ``R`` the
    density's maximal growth ratio, while the sum is at least ``f(k) e^{-s}``.
    """
    s_arr = np.asarray(s, dtype=float)
    k_arr = np.asarray(k)
    if np.any(s_arr < 0):
        raise DomainError(f"semigroup time must be nonnegative, got {s!r}")
    s_max = float(np.max(s_arr)) if s_arr.size else 0.0
    n_terms = spec.n_terms
    if s_max > spec.T * (1 + 1e-12):
        n_terms = series_length(s_max * spec.growth, math.log(spec.tol.rel_tail))
    s_b, k_b = np.broadcast_arrays(s_arr, k_arr)
    n = np.arange(n_terms)
    terms = spec.log_f(k_b[..., None] + n) + poisson_log_pmf(s_b[..., None], n)
    out = logsumexp(terms, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def difference(g: Callable[[int], float], k: int) -> float:
    """Forward difference ``g(k+1) - g(k)``."""
    if k < 0:
        raise DomainError(f"index must be nonnegative, got {k!r}")
    return g(k + 1) - g(k)


def log_semigroup_F(spec: ProblemSpec, t, k):
    """``F(t, k) = log P_{T-t} f(k)`` for ``0 <= t <= T``."""
    _check_time(spec, t)
    return log_semigroup(spec, np.maximum(spec.T - np.asarray(t, dtype=float), 0.0), k)


def _F_stack(spec: ProblemSpec, t, k, width: int):
    """``F(t, k + j)`` for j < width, stacked on a trailing axis."""
    _check_time(spec, t)
    t_arr = np.asarray(t, dtype=float)
    k_arr = np.asarray(k)
    t_b, k_b = np.broadcast_arrays(t_arr, k_arr)
    s = np.maximum(spec.T - t_b, 0.0)
    j = np.arange(width)
    return log_semigroup(spec, s[..., None], k_b[..., None] + j)


def ratio_G(spec: ProblemSpec, t, k):
    """``G(t, k) = P_{T-t} f(k+1) / P_{T-t} f(k)``, the Follmer intensity."""
    F = _F_stack(spec, t, k, 2)
    out = np.exp(F[..., 1] - F[..., 0])
    return float(out) if np.ndim(out) == 0 else out


def second_difference_exponent(spec: ProblemSpec, t, k):
    """``exp(D^2 F(t, k)) = P f(k+2) P f(k) / P f(k+1)^2`` with ``P = P_{T-t}``."""
    F = _F_stack(spec, t, k, 3)
    out = np.exp(F[..., 2] - 2.0 * F[..., 1] + F[..., 0])
    return float(out) if np.ndim(out) == 0 else out


def eta_ratio(spec: ProblemSpec, s):
    """``P_{T-s} f(0) / P_{T-s} f(1)``; non-increasing in ``s`` for ULC ``f``."""
    F = _F_stack(spec, s, 0, 2)
    out = np.exp(F[..., 0] - F[..., 1])
    return float(out) if np.ndim(out) == 0 else out


def heat_residual(spec: ProblemSpec, t: float, k: int, h: float) -> float:
    """``|(P_{t+h}f(k) - P_t f(k))/h - D(P_t f)(k)|`` (forward difference in t)."""
    if not h > 0:
        raise DomainError(f"step must be positive, got {h!r}")
    lp = log_semigroup(spec, np.array([t, t, t + h]), np.array([k, k + 1, k]))
    p_t, p_t1, p_th = np.exp(lp)
    return float(abs((p_th - p_t) / h - (p_t1 - p_t)))


def F_equation_residual(spec: ProblemSpec, t: float, k: int, h: float) -> float:
    """Central-difference residual of ``d/dt F = 1 - G``."""
    if not (0 < h and h <= t <= spec.T - h):
        raise DomainError(f"need h <= t <= T - h, got t={t!r}, h={h!r}")
    f_plus = log_semigroup_F(spec, t + h, k)
    f_minus = log_semigroup_F(spec, t - h, k)
    return abs((f_plus - f_minus) / (2 * h) - (1.0 - ratio_G(spec, t, k)))


def G_equation_residual(spec: ProblemSpec, t: float, k: int, h: float) -> float:
    """Central-difference residual of ``d/dt G = -G DG``."""
    if not (0 < h and h <= t <= spec.T - h):
        raise DomainError(f"need h <= t <= T - h, got t={t!r}, h={h!r}")
    g = ratio_G(spec, np.array([t + h, t - h, t, t]), np.array([k, k, k, k + 1]))
    dg = g[3] - g[2]
    return float(abs((g[0] - g[1]) / (2 * h) + g[2] * dg))

