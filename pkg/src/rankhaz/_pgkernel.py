"""Compiled scalar loop for exact ``PG(b, c)`` draws with small integer ``b``.

Same algorithm as the vectorised path in :mod:`rankhaz.randkit`, compiled
with numba; the generator state is shared with the caller's
``numpy.random.Generator``.
"""

import math

import numba
import numpy as np

_TRUNC = 0.64
_PI2 = math.pi ** 2


@numba.njit(cache=True)
def _a_coef(n, x):
    k = n + 0.5
    if x <= _TRUNC:
        return math.exp(math.log(math.pi * k) + 1.5 * math.log(2.0 / (math.pi * x)) - 2.0 * k * k / x)
    return math.pi * k * math.exp(-k * k * _PI2 * x / 2.0)


@numba.njit(cache=True)
def _ndtri(p):
    # inverse normal CDF via erfinv-free Newton polish of an Acklam start
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    if p < 0.02425:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    for _ in range(2):
        e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
        u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
        x = x - u / (1.0 + x * u / 2.0)
    return x


@numba.njit(cache=True)
def _rtigauss(z, rng):
    t = _TRUNC
    if z < 1.0 / t:
        tail = 0.5 * math.erfc(1.0 / math.sqrt(t) / math.sqrt(2.0))
        while True:
            u = 1.0 - rng.random()
            n = _ndtri(u * tail)
            x = 1.0 / (n * n)
            if rng.random() <= math.exp(-0.5 * z * z * x):
                return x
    mu = 1.0 / z
    while True:
        y = rng.standard_normal()
        y = y * y
        muy = mu * y
        x = mu + 0.5 * mu * muy - 0.5 * mu * math.sqrt(4.0 * muy + muy * muy)
        if rng.random() > mu / (mu + x):
            x = mu * mu / x
        if x < t:
            return x


@numba.njit(cache=True)
def _pg1(z, mass, fz, rng):
    while True:
        if rng.random() < mass:
            x = _TRUNC + rng.standard_exponential() / fz
        else:
            x = _rtigauss(z, rng)
        s = _a_coef(0, x)
        y = rng.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _a_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _a_coef(n, x)
                if y > s:
                    break


@numba.njit(cache=True)
def pg_convolution(c, mass, reps, rng):
    """``sum_{k < reps[i]} PG(1, c[i])`` for each i; ``mass`` precomputed per i."""
    out = np.zeros(c.shape[0])
    for i in range(c.shape[0]):
        z = 0.5 * abs(c[i])
        fz = _PI2 / 8.0 + z * z / 2.0
        acc = 0.0
        for _ in range(reps[i]):
            acc += _pg1(z, mass[i], fz, rng)
        out[i] = acc
    return out
