"""Monte Carlo simulation of the Poisson-Follmer process.

``X`` starts at 0 and jumps by +1 with intensity ``lambda_t = G(t, X_t)``.
Paths are drawn by per-slice thinning, vectorized over blocks of paths. Each
path owns a counter-based random stream keyed by ``(seed, path index)``, so a
path's record never depends on which other paths share its block or on the
number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .errors import DiagnosticError, DomainError, PreconditionError, ReachError, SimulationError
from .functionals import entropy_functional, mean_of_mu
from .poisson_core import phi
from .quadrature import law_at, trapezoid_entropy_bias
from .semigroup import ProblemSpec, ratio_G

__all__ = [
    "SimConfig",
    "PathRecord",
    "PathBatch",
    "McEstimate",
    "LawTest",
    "DiagnosticsTable",
    "MartingaleCheck",
    "EntropyCheck",
    "SubmartingaleReport",
    "ConcordanceSummary",
    "DIAGNOSTIC_COLUMNS",
    "simulate_paths",
    "simulate_path",
    "marginal_law_test",
    "martingale_diagnostics",
    "martingale_check",
    "mc_entropy_estimate",
    "entropy_check",
    "submartingale_check",
    "concordance",
]

DIAGNOSTIC_COLUMNS = (
    "t",
    "mean_lambda",
    "se_lambda",
    "mean_xtilde",
    "se_xtilde",
    "mean_phi_lambda",
    "se_phi_lambda",
)
N_SE = 3.0
# added to every 3-SE band: deterministic quantities (lambda_0, X~_0, a
# constant intensity) have SE exactly 0 but still carry roundoff
SE_FLOOR = 1e-9
TV_TOL = 0.01
BLOCK_SIZE = 4096
_SLICE_POINTS = np.linspace(0.0, 1.0, 9)
# Horner evaluation of the semigroup series stays finite while s * R <= this
_HORNER_MAX_RATE = 500.0


# -- configuration and records ----------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """Sampler settings.

    ``slice_len`` and ``diag_grid`` may be left as ``None`` and are filled in
    by :meth:`resolve` (``T/64`` and ``grid_points`` equispaced times).
    """

    n_paths: int
    seed: int = 0
    slice_len: float | None = None
    safety: float = 1.5
    diag_grid: tuple[float, ...] | None = None
    grid_points: int = 9

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError(f"n_paths must be positive, got {self.n_paths!r}")
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if not self.safety >= 1.2:
            raise DomainError(f"safety must be at least 1.2, got {self.safety!r}")
        if self.diag_grid is None and self.grid_points < 2:
            raise DomainError(f"need at least 2 grid points, got {self.grid_points!r}")

    def resolve(self, T: float) -> "SimConfig":
        L = T / 64.0 if self.slice_len is None else float(self.slice_len)
        if not 0 < L <= T:
            raise DomainError(f"slice_len must lie in (0, T={T}], got {L!r}")
        if self.diag_grid is None:
            grid = tuple(float(x) for x in np.linspace(0.0, T, self.grid_points))
        else:
            grid = tuple(float(x) for x in self.diag_grid)
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise DomainError("diag_grid must be strictly increasing")
            if grid[0] != 0.0 or grid[-1] != T:
                raise DomainError(f"diag_grid must start at 0 and end at T={T}")
        return SimConfig(self.n_paths, self.seed, L, self.safety, grid, len(grid))


@dataclass(frozen=True)
class PathRecord:
    jump_times: np.ndarray
    states: np.ndarray
    lambda_at_grid: np.ndarray
    compensator_at_grid: np.ndarray


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n: int


@dataclass(frozen=True)
class PathBatch:
    """All simulated paths, jump times stored flat.

    Jumps of path ``i`` are ``jump_times[offsets[i]:offsets[i+1]]``; the
    state after the j-th jump is ``j``.
    """

    T: float
    grid: np.ndarray
    jump_times: np.ndarray
    offsets: np.ndarray
    x_at_grid: np.ndarray
    lambda_at_grid: np.ndarray
    compensator_at_grid: np.ndarray
    config: SimConfig = field(repr=False)

    @property
    def n_paths(self) -> int:
        return len(self.offsets) - 1

    @property
    def xtilde_at_grid(self) -> np.ndarray:
        return self.x_at_grid - self.compensator_at_grid

    @property
    def phi_lambda_at_grid(self) -> np.ndarray:
        return phi(self.lambda_at_grid)

    def record(self, i: int) -> PathRecord:
        jt = self.jump_times[self.offsets[i] : self.offsets[i + 1]]
        return PathRecord(
            jump_times=jt,
            states=np.arange(1, len(jt) + 1),
            lambda_at_grid=self.lambda_at_grid[i],
            compensator_at_grid=self.compensator_at_grid[i],
        )

    def first_jumps(self) -> np.ndarray:
        """First jump time of every path that jumps at all."""
        has = np.diff(self.offsets) > 0
        return self.jump_times[self.offsets[:-1][has]]


# -- counter-based streams ----------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(x: np.ndarray) -> np.ndarray:
    # SplitMix64 output function; uint64 array arithmetic wraps mod 2^64
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _path_keys(seed: int, paths: np.ndarray) -> np.ndarray:
    base = _mix64(np.array([seed], dtype=np.uint64))
    return _mix64(base ^ _mix64(paths.astype(np.uint64)))


def _uniforms(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Uniforms in (0, 1), one per (key, counter) pair."""
    bits = _mix64(keys + counters * _GOLDEN)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


# -- intensity evaluation -----------------------------------------------------


class _Intensity:
    """``G(t, k)`` for ``0 <= k <= k_reach`` by Horner evaluation.

    With ``S_k(s) = sum_n f(k+n)/f(k) s^n/n!`` (all coefficients positive),
    ``G(t, k) = f(k+1)/f(k) * S_{k+1}(T-t) / S_k(T-t)``. The series length is
    the rigorous ``spec.n_terms`` for every call, so a value never depends
    on what else is evaluated alongside it. Large rates fall back to
    log-space evaluation.
    """

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.T = spec.T
        K = spec.k_reach
        N = spec.n_terms
        lf = np.asarray(spec.log_f(np.arange(K + N + 2)), dtype=float)
        self.horner = spec.T * spec.growth <= _HORNER_MAX_RATE
        k = np.arange(K + 2)
        n = np.arange(N)[:, None]
        self.coef = np.exp(lf[k + n] - lf[k] - gammaln(n + 1.0))
        self.ratio = np.exp(lf[1 : K + 2] - lf[: K + 1])

    def __call__(self, t, k) -> np.ndarray:
        t, k = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(k))
        if not self.horner:
            return np.asarray(ratio_G(self.spec, t, k), dtype=float)
        s = np.maximum(self.T - t, 0.0)
        k1 = k + 1
        c = self.coef
        a0 = c[-1].take(k)
        a1 = c[-1].take(k1)
        for row in c[-2::-1]:
            a0 *= s
            a0 += row.take(k)
            a1 *= s
            a1 += row.take(k1)
        a1 /= a0
        a1 *= self.ratio.take(k)
        return a1


# -- thinning -----------------------------------------------------------------


def _thin_block(ev: _Intensity, keys: np.ndarray, cfg: SimConfig, k_reach: int):
    """Jump times of one block, as (local path index, time) pairs in
    per-path time order."""
    T, L, safety = ev.T, cfg.slice_len, cfg.safety
    n = len(keys)
    t = np.zeros(n)
    k = np.zeros(n, dtype=np.int64)
    ctr = np.zeros(n, dtype=np.uint64)
    slice_end = np.zeros(n)
    M = np.zeros(n)
    need = np.ones(n, dtype=bool)
    active = np.arange(n)
    jp, jt = [], []
    one = np.uint64(1)
    while active.size:
        idx = active[need[active]]
        if idx.size:
            lo = t[idx]
            hi = np.minimum(lo + L, T)
            pts = lo[:, None] + (hi - lo)[:, None] * _SLICE_POINTS
            g = ev(pts, k[idx][:, None])
            M[idx] = safety * g.max(axis=1)
            slice_end[idx] = hi
            need[idx] = False

        u = _uniforms(keys[active], ctr[active])
        ctr[active] += one
        tau = t[active] - np.log(u) / M[active]
        over = tau >= slice_end[active]
        i_over = active[over]
        t[i_over] = slice_end[i_over]
        need[i_over] = True

        i_in = active[~over]
        if i_in.size:
            tau_in = tau[~over]
            g = ev(tau_in, k[i_in])
            breach = g > M[i_in]
            if np.any(breach):
                j = int(np.argmax(g / M[i_in]))
                raise SimulationError(
                    f"intensity {g[j]:.6g} exceeds dominating rate {M[i_in][j]:.6g} "
                    f"at t={tau_in[j]:.6g}, state {int(k[i_in][j])}; "
                    "use a smaller slice_len or a larger safety factor"
                )
            u2 = _uniforms(keys[i_in], ctr[i_in])
            ctr[i_in] += one
            acc = u2 * M[i_in] <= g
            t[i_in] = tau_in
            ia = i_in[acc]
            if ia.size:
                jp.append(ia)
                jt.append(tau_in[acc])
                k[ia] += 1
                need[ia] = True
                if int(k[ia].max()) > k_reach:
                    raise ReachError(
                        f"a path reached state {int(k[ia].max())} > k_reach={k_reach}; "
                        "lower rel_tail or raise k_reach"
                    )
        active = active[t[active] < T]

    if jp:
        p = np.concatenate(jp)
        times = np.concatenate(jt)
        order = np.argsort(p, kind="stable")
        return p[order], times[order]
    return np.zeros(0, dtype=np.int64), np.zeros(0)


def _grid_quantities(ev: _Intensity, grid: np.ndarray, L: float, n: int, jpath: np.ndarray, jtime: np.ndarray):
    """``X``, ``lambda`` and the Simpson compensator on the grid for ``n`` paths."""
    m = len(grid)
    counts = np.bincount(jpath, minlength=n)
    pid = np.concatenate([np.repeat(np.arange(n), m), jpath])
    tim = np.concatenate([np.tile(grid, n), jtime])
    typ = np.concatenate([np.ones(n * m, dtype=np.int8), np.zeros(len(jpath), dtype=np.int8)])
    # jumps sort before a grid point at the same time: X is right-continuous
    order = np.lexsort((typ, tim, pid))
    pid, tim, is_grid = pid[order], tim[order], typ[order] == 1
    sizes = m + counts
    start = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    pos = np.arange(len(pid)) - np.repeat(start, sizes)
    cum = np.cumsum(~is_grid)
    state = cum - np.repeat(cum[start] - (~is_grid[start]), sizes)

    # segments between consecutive points of one path, split into pieces of
    # length <= L and integrated by Simpson's rule on each piece
    same = pid[:-1] == pid[1:]
    a, b, ks = tim[:-1][same], tim[1:][same], state[:-1][same]
    pieces = np.maximum(1, np.ceil((b - a) / L).astype(np.int64))
    seg = np.repeat(np.arange(len(a)), pieces)
    first = np.concatenate([[0], np.cumsum(pieces)[:-1]])
    j = np.arange(len(seg)) - np.repeat(first, pieces)
    h = (b - a)[seg] / pieces[seg]
    lo = a[seg] + j * h
    kk = ks[seg]
    g = ev(np.stack([lo, lo + 0.5 * h, lo + h]), kk)
    vals = h / 6.0 * (g[0] + 4.0 * g[1] + g[2])
    seg_int = np.add.reduceat(vals, first) if len(vals) else np.zeros(0)

    # per-path running integral, padded so no sum crosses paths
    width = int(sizes.max())
    incr = np.zeros((n, width))
    end_idx = np.nonzero(same)[0] + 1
    incr[pid[end_idx], pos[end_idx]] = seg_int
    run = np.cumsum(incr, axis=1)

    gi = np.nonzero(is_grid)[0]
    x = state[gi].reshape(n, m)
    comp = run[pid[gi], pos[gi]].reshape(n, m)
    lam = ev(np.broadcast_to(grid, (n, m)), x)
    return counts, x, lam, comp


def _run_block(ev: _Intensity, cfg: SimConfig, paths: np.ndarray, k_reach: int):
    keys = _path_keys(cfg.seed, paths)
    jpath, jtime = _thin_block(ev, keys, cfg, k_reach)
    counts, x, lam, comp = _grid_quantities(ev, np.asarray(cfg.diag_grid), cfg.slice_len, len(paths), jpath, jtime)
    return jtime, counts, x, lam, comp


def _check_spec(spec: ProblemSpec) -> None:
    if not spec.normalize:
        raise PreconditionError("the Follmer process needs a normalized spec")


def _simulate(spec: ProblemSpec, cfg: SimConfig, paths: np.ndarray, workers: int) -> PathBatch:
    _check_spec(spec)
    cfg = cfg.resolve(spec.T)
    if workers < 1:
        raise DomainError(f"workers must be positive, got {workers!r}")
    ev = _Intensity(spec)
    blocks = [paths[i : i + BLOCK_SIZE] for i in range(0, len(paths), BLOCK_SIZE)]

    def run(block):
        with np.errstate(divide="ignore"):
            return _run_block(ev, cfg, block, spec.k_reach)

    if workers == 1 or len(blocks) == 1:
        results = [run(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, blocks))

    counts = np.concatenate([r[1] for r in results])
    return PathBatch(
        T=spec.T,
        grid=np.asarray(cfg.diag_grid),
        jump_times=np.concatenate([r[0] for r in results]),
        offsets=np.concatenate([[0], np.cumsum(counts)]),
        x_at_grid=np.concatenate([r[2] for r in results]),
        lambda_at_grid=np.concatenate([r[3] for r in results]),
        compensator_at_grid=np.concatenate([r[4] for r in results]),
        config=cfg,
    )


def simulate_paths(spec: ProblemSpec, cfg: SimConfig, workers: int = 1) -> PathBatch:
    """Simulate ``cfg.n_paths`` paths on ``[0, T]``.

    Paths are processed in blocks of 4096, spread over ``workers`` threads.
    The result is bitwise identical for any ``workers``.

    Raises:
        SimulationError: an evaluated intensity exceeded its slice's
            dominating rate.
        ReachError: a path left ``0..k_reach``.
    """
    return _simulate(spec, cfg, np.arange(cfg.n_paths), workers)


def simulate_path(spec: ProblemSpec, cfg: SimConfig, index: int) -> PathRecord:
    """Path ``index`` of the run described by ``cfg``, simulated alone."""
    if not 0 <= index:
        raise DomainError(f"path index must be nonnegative, got {index!r}")
    return _simulate(spec, cfg, np.array([index]), 1).record(0)


# -- diagnostics --------------------------------------------------------------


def _mean_se(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = values.shape[0]
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def _grid_index(batch: PathBatch, t: float) -> int:
    hit = np.nonzero(np.isclose(batch.grid, t, rtol=0.0, atol=1e-12 * max(1.0, batch.T)))[0]
    if not hit.size:
        raise DomainError(f"t={t!r} is not on the diagnostic grid {batch.grid.tolist()}")
    return int(hit[0])


@dataclass(frozen=True)
class LawTest:
    t: float
    tv_distance: float
    chi_square: float
    dof: int
    p_value: float
    n_paths: int

    @property
    def passed(self) -> bool:
        return self.tv_distance <= TV_TOL


def marginal_law_test(batch: PathBatch, spec: ProblemSpec, t: float, min_expected: float = 5.0) -> LawTest:
    """Empirical law of ``X_t`` against ``(P_{T-t} f) pi_t``.

    States beyond ``k_reach`` are pooled into one bin. The chi-square
    statistic uses the bins with expected count at least ``min_expected``;
    the remaining bins are pooled together when their joint expected count
    clears the same bar.

    Raises:
        DiagnosticError: fewer than two usable bins.
    """
    j = _grid_index(batch, t)
    law = law_at(spec, batch.grid[j])
    K = len(law.weights) - 1
    p = np.append(law.weights, max(0.0, 1.0 - law.weights.sum()))
    x = batch.x_at_grid[:, j]
    obs = np.bincount(np.minimum(x, K + 1), minlength=K + 2).astype(float)
    n = batch.n_paths
    tv = 0.5 * float(np.abs(obs / n - p).sum())

    exp_counts = n * p
    big = exp_counts >= min_expected
    o, e = list(obs[big]), list(exp_counts[big])
    if exp_counts[~big].sum() >= min_expected:
        o.append(obs[~big].sum())
        e.append(exp_counts[~big].sum())
    if len(e) < 2:
        raise DiagnosticError(
            f"only {len(e)} bin(s) with expected count >= {min_expected} at t={t} "
            f"with {n} paths; the chi-square test needs more paths"
        )
    o, e = np.array(o), np.array(e)
    chi = float(np.sum((o - e) ** 2 / e))
    dof = len(e) - 1
    return LawTest(float(batch.grid[j]), tv, chi, dof, float(stats.chi2.sf(chi, dof)), n)


@dataclass(frozen=True)
class DiagnosticsTable:
    t: np.ndarray
    mean_lambda: np.ndarray
    se_lambda: np.ndarray
    mean_xtilde: np.ndarray
    se_xtilde: np.ndarray
    mean_phi_lambda: np.ndarray
    se_phi_lambda: np.ndarray

    def rows(self) -> list[tuple[float, ...]]:
        cols = [getattr(self, c) for c in DIAGNOSTIC_COLUMNS]
        return [tuple(float(c[i]) for c in cols) for i in range(len(self.t))]


def martingale_diagnostics(batch: PathBatch) -> DiagnosticsTable:
    """Means and standard errors of ``lambda_t``, ``X~_t`` and ``phi(lambda_t)``
    at each grid time."""
    ml, sl = _mean_se(batch.lambda_at_grid)
    mx, sx = _mean_se(batch.xtilde_at_grid)
    mp, sp = _mean_se(batch.phi_lambda_at_grid)
    return DiagnosticsTable(batch.grid.copy(), ml, sl, mx, sx, mp, sp)


@dataclass(frozen=True)
class MartingaleCheck:
    expected_lambda: float
    lambda_z: np.ndarray
    drift_z: np.ndarray
    xtilde_z: np.ndarray

    @property
    def lambda_ok(self) -> bool:
        return bool(np.all(self.lambda_z <= N_SE))

    @property
    def constant_ok(self) -> bool:
        return bool(np.all(self.drift_z <= N_SE))

    @property
    def xtilde_ok(self) -> bool:
        return bool(np.all(self.xtilde_z <= N_SE))

    @property
    def passed(self) -> bool:
        return self.lambda_ok and self.constant_ok and self.xtilde_ok


def _z(dev, se) -> np.ndarray:
    # deviation in units of the 3-SE band, rescaled so that N_SE is the bar
    return N_SE * np.abs(dev) / (N_SE * np.asarray(se) + SE_FLOOR)


def martingale_check(table: DiagnosticsTable, spec: ProblemSpec) -> MartingaleCheck:
    """``E[lambda_t] = E[mu]/T`` and ``E[X~_t] = 0`` at every grid time, 3 SE.

    Constancy is also checked against ``t = 0``, where ``lambda_0`` is
    deterministic.
    """
    target = mean_of_mu(spec) / spec.T
    return MartingaleCheck(
        expected_lambda=target,
        lambda_z=_z(table.mean_lambda - target, table.se_lambda),
        drift_z=_z(table.mean_lambda - table.mean_lambda[0], table.se_lambda),
        xtilde_z=_z(table.mean_xtilde, table.se_xtilde),
    )


def mc_entropy_estimate(batch: PathBatch) -> McEstimate:
    """Per-path trapezoid rule of ``phi(lambda_t)`` over the grid, averaged."""
    per_path = np.trapezoid(batch.phi_lambda_at_grid, batch.grid, axis=1)
    mean, se = _mean_se(per_path[:, None])
    return McEstimate(float(mean[0]), float(se[0]), batch.n_paths)


@dataclass(frozen=True)
class EntropyCheck:
    estimate: McEstimate
    exact: float
    trapezoid_bias: float

    @property
    def passed(self) -> bool:
        band = N_SE * self.estimate.std_error + abs(self.trapezoid_bias) + SE_FLOOR
        return abs(self.estimate.value - self.exact) <= band


def entropy_check(estimate: McEstimate, spec: ProblemSpec, grid) -> EntropyCheck:
    """Compare against ``H(mu | pi_T)``, allowing the deterministic bias of the
    trapezoid rule on ``grid`` on top of 3 SE."""
    return EntropyCheck(estimate, entropy_functional(spec), trapezoid_entropy_bias(spec, grid))


@dataclass(frozen=True)
class SubmartingaleReport:
    t: np.ndarray
    mean_phi: np.ndarray
    increments: np.ndarray
    increment_se: np.ndarray

    @property
    def non_decreasing(self) -> bool:
        return bool(np.all(self.increments >= -(N_SE * self.increment_se + SE_FLOOR)))

    @property
    def constant(self) -> bool:
        """Mean of ``phi(lambda_t)`` flat over the grid within 3 SE."""
        return bool(np.all(np.abs(self.increments) <= N_SE * self.increment_se + SE_FLOOR))


def submartingale_check(batch: PathBatch) -> SubmartingaleReport:
    """Monotonicity of ``t -> E[phi(lambda_t)]``.

    Increments between neighbouring grid times are estimated path by path,
    so their standard errors account for the correlation along each path.
    """
    ph = batch.phi_lambda_at_grid
    mean, _ = _mean_se(ph)
    inc, inc_se = _mean_se(np.diff(ph, axis=1))
    return SubmartingaleReport(batch.grid.copy(), mean, inc, inc_se)


@dataclass(frozen=True)
class ConcordanceSummary:
    law: LawTest
    martingale: MartingaleCheck
    entropy: EntropyCheck
    submartingale: SubmartingaleReport
    table: DiagnosticsTable

    @property
    def passed(self) -> bool:
        return (
            self.law.passed
            and self.martingale.passed
            and self.entropy.passed
            and self.submartingale.non_decreasing
        )


def concordance(batch: PathBatch, spec: ProblemSpec) -> ConcordanceSummary:
    """All Monte Carlo diagnostics of one run, law test taken at ``t = T``."""
    table = martingale_diagnostics(batch)
    return ConcordanceSummary(
        law=marginal_law_test(batch, spec, spec.T),
        martingale=martingale_check(table, spec),
        entropy=entropy_check(mc_entropy_estimate(batch), spec, batch.grid),
        submartingale=submartingale_check(batch),
        table=table,
    )
