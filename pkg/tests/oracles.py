"""Brute-force high-precision references, independent of the package."""

import mpmath as mp

mp.mp.dps = 40


def f_value(kind, params, k):
    if kind == "geometric":
        a, b = params
        return mp.e ** (mp.mpf(a) * k + b)
    if kind == "gaussian_like":
        q, s = params
        return mp.mpf(q) ** (k * k) * mp.mpf(s) ** k
    if kind == "poisson_kernel":
        (c,) = params
        return mp.mpf(c) ** k / mp.factorial(k)
    raise ValueError(kind)


def pmf(t, k):
    t = mp.mpf(t)
    return mp.e ** (-t) * t**k / mp.factorial(k)


def semigroup(fv, s, k, n=120):
    """P_s f(k) for a callable f on the integers."""
    return mp.fsum(fv(k + j) * pmf(s, j) for j in range(n))


def wu_quantities(fv, T, n=150):
    """(entropy, wu_rhs, deficit, mean) for the normalized density."""
    w = [fv(k) * pmf(T, k) for k in range(n)]
    Z = mp.fsum(w)
    mu = [x / Z for x in w]
    ent = mp.fsum(m * mp.log(fv(k) / Z) for k, m in enumerate(mu))
    ph = lambda x: x * mp.log(x) - x + 1
    rhs = T * mp.fsum(m * ph(fv(k + 1) / fv(k)) for k, m in enumerate(mu))
    mean = mp.fsum(k * m for k, m in enumerate(mu))
    return ent, rhs, rhs - ent, mean
