"""Truncated Conway-Maxwell-Poisson distribution on {0, ..., T}.

The pmf is ``lam**x / (x!)**nu / G_T(lam, nu)`` with the finite normaliser
``G_T = sum_{r=0}^{T} lam**r / (r!)**nu``.  Because the support is finite the
mean is a smooth, strictly increasing function of ``log lam`` whose derivative
is the variance, so the mean parameterisation can be inverted exactly with a
safeguarded Newton iteration on ``log lam``.

The scalar kernels are compiled with numba and shared with the regression
model, which calls them for every record on every MCMC proposal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

T_MAX = 10

SOLVER_TOL = 1e-10
SOLVER_MAX_ITER = 200
LOG_LAMBDA_MAX = 700.0

# kernel status codes
OK = 0
DOMAIN = 1
OVERFLOW = 2
NO_CONVERGENCE = 3


class CmpDomainError(ValueError):
    """Parameter or argument outside the distribution's domain."""


class SolverError(RuntimeError):
    """The mean-to-rate solve failed (overflow guard or iteration cap)."""


def log_factorials(t_max: int = T_MAX) -> np.ndarray:
    """``log r!`` for r = 0..t_max by running sum."""
    out = np.zeros(t_max + 1)
    acc = 0.0
    for r in range(1, t_max + 1):
        acc += math.log(r)
        out[r] = acc
    return out


_LF10 = log_factorials(T_MAX)


@dataclass(frozen=True)
class TruncCmpParams:
    lam: float
    nu: float
    t_max: int = T_MAX

    def __post_init__(self):
        if not (self.lam >= 0.0) or not math.isfinite(self.lam):
            raise CmpDomainError(f"rate must be finite and >= 0, got {self.lam}")
        if not (self.nu > 0.0) or not math.isfinite(self.nu):
            raise CmpDomainError(f"dispersion must be finite and > 0, got {self.nu}")
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise CmpDomainError(f"truncation point must be an integer >= 1, got {self.t_max}")

    @property
    def log_lam(self) -> float:
        return -math.inf if self.lam == 0.0 else math.log(self.lam)


@dataclass(frozen=True)
class MeanParams:
    mu: float
    nu: float
    t_max: int = T_MAX

    def __post_init__(self):
        if not (0.0 < self.mu < self.t_max):
            raise CmpDomainError(f"mean must lie in (0, {self.t_max}), got {self.mu}")
        if not (self.nu > 0.0) or not math.isfinite(self.nu):
            raise CmpDomainError(f"dispersion must be finite and > 0, got {self.nu}")


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def log_stats(a, nu, lf):
    """(log G, mean, variance) at log-rate ``a`` by log-sum-exp."""
    if a == -np.inf:
        return 0.0, 0.0, 0.0
    n = lf.shape[0]
    m = -np.inf
    rm = 0
    for r in range(n):
        t = r * a - nu * lf[r]
        if t > m:
            m = t
            rm = r
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    for r in range(n):
        e = math.exp(r * a - nu * lf[r] - m)
        d = r - rm
        s0 += e
        s1 += d * e
        s2 += d * d * e
    c = s1 / s0
    v = s2 / s0 - c * c
    if v < 0.0:
        v = 0.0
    return m + math.log(s0), rm + c, v


@nb.njit(cache=True)
def fast_stats(a, nu, c, lf):
    """Same as :func:`log_stats` using a precomputed ``c[r] = exp(-nu lf[r])``.

    One exponential per call; falls back to log-sum-exp where ``lam**T`` or
    ``c[T]`` would leave double range.
    """
    n = c.shape[0]
    if a == -np.inf:
        return 0.0, 0.0, 0.0
    if a > 60.0 or a < -60.0 or nu * lf[n - 1] > 600.0:
        return log_stats(a, nu, lf)
    q = math.exp(a)
    w = 1.0
    s0 = c[0]
    s1 = 0.0
    s2 = 0.0
    for r in range(1, n):
        w *= q
        e = w * c[r]
        s0 += e
        s1 += r * e
        s2 += r * r * e
    mn = s1 / s0
    v = s2 / s0 - mn * mn
    if v < 0.0:
        v = 0.0
    return math.log(s0), mn, v


@nb.njit(cache=True)
def _moments(a, nu, c, lf):
    """Raw pieces for the solver: ``(shift, s0, mean, var, third)``.

    ``log G = shift + log(s0)``; the logarithm is left to the caller so the
    iteration does not pay for it.  ``third`` is the third central moment.
    """
    n = c.shape[0]
    if a > -60.0 and a < 60.0 and nu * lf[n - 1] <= 600.0:
        q = math.exp(a)
        w = 1.0
        s0 = c[0]
        s1 = 0.0
        s2 = 0.0
        s3 = 0.0
        for r in range(1, n):
            w *= q
            e = w * c[r]
            s0 += e
            re = r * e
            s1 += re
            s2 += r * re
            s3 += r * r * re
        m1 = s1 / s0
        m2 = s2 / s0
        v = m2 - m1 * m1
        k3 = s3 / s0 - 3.0 * m1 * m2 + 2.0 * m1 * m1 * m1
        return 0.0, s0, m1, (v if v > 0.0 else 0.0), k3
    m = -np.inf
    rm = 0
    for r in range(n):
        t = r * a - nu * lf[r]
        if t > m:
            m = t
            rm = r
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    s3 = 0.0
    for r in range(n):
        e = math.exp(r * a - nu * lf[r] - m)
        d = r - rm
        s0 += e
        s1 += d * e
        s2 += d * d * e
        s3 += d * d * d * e
    c1 = s1 / s0
    c2 = s2 / s0
    v = c2 - c1 * c1
    k3 = s3 / s0 - 3.0 * c1 * c2 + 2.0 * c1 * c1 * c1
    return m, s0, rm + c1, (v if v > 0.0 else 0.0), k3


@nb.njit(cache=True)
def solve_log_lambda(mu, nu, c, lf, a0, tol, max_iter):
    """Solve mean(exp(a), nu) = mu for a = log lam.

    Halley steps on ``a`` (the mean's first two derivatives are the variance
    and the third central moment) inside a bracket that is tightened at every
    evaluation; steps leaving the bracket bisect, or move by ``log 2`` (rate
    doubling) while one side is still open.
    Returns ``(a, log G, variance, status)``.
    """
    t = c.shape[0] - 1
    if not (mu > 0.0 and mu < t):
        return np.nan, np.nan, np.nan, DOMAIN
    a = a0
    if not math.isfinite(a):
        a = math.log(mu) if mu <= 1.0 else nu * math.log(mu)
    lo = -np.inf
    hi = np.inf
    for _ in range(max_iter):
        if a > LOG_LAMBDA_MAX or a < -LOG_LAMBDA_MAX:
            return a, np.nan, np.nan, OVERFLOW
        shift, s0, mn, v, k3 = _moments(a, nu, c, lf)
        f = mn - mu
        if f < 0.0:
            lo = a
        else:
            hi = a
        if abs(f) <= tol:
            # one more step takes the iteration to round-off
            if v > 0.0 and abs(f) > 1e-13:
                a2 = a - f / v
                if a2 > lo and a2 < hi:
                    a = a2
                    shift, s0, mn, v, k3 = _moments(a, nu, c, lf)
            return a, shift + math.log(s0), v, OK
        if v > 0.0:
            step = -f / v
            denom = 1.0 + 0.5 * step * k3 / v
            if denom > 0.5:
                step /= denom
        else:
            step = 1.0 if f < 0.0 else -1.0
        if not (math.isfinite(lo) and math.isfinite(hi)):
            step = min(max(step, -10.0), 10.0)
        an = a + step
        if not (an > lo and an < hi):
            if math.isfinite(lo) and math.isfinite(hi):
                an = 0.5 * (lo + hi)
            else:
                jump = min(max(abs(step), math.log(2.0)), 10.0)
                an = a + jump if f < 0.0 else a - jump
        if an == a:
            return a, shift + math.log(s0), v, OK
        a = an
    return a, np.nan, np.nan, NO_CONVERGENCE


@nb.njit(cache=True)
def pmf_row(a, nu, lf, out):
    """Write the pmf over 0..T at log-rate ``a`` into ``out``."""
    lg, mn, v = log_stats(a, nu, lf)
    if a == -np.inf:
        out[:] = 0.0
        out[0] = 1.0
        return
    for r in range(lf.shape[0]):
        out[r] = math.exp(r * a - nu * lf[r] - lg)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def _lf(p) -> np.ndarray:
    return _LF10 if p.t_max == T_MAX else log_factorials(p.t_max)


def log_normalizer(p: TruncCmpParams) -> float:
    """log G_T(lam, nu)."""
    return log_stats(p.log_lam, p.nu, _lf(p))[0]


def log_pmf(x: int, p: TruncCmpParams) -> float:
    if int(x) != x or not (0 <= x <= p.t_max):
        raise CmpDomainError(f"count {x} outside support 0..{p.t_max}")
    x = int(x)
    if p.lam == 0.0:
        return 0.0 if x == 0 else -math.inf
    lf = _lf(p)
    return x * p.log_lam - p.nu * lf[x] - log_stats(p.log_lam, p.nu, lf)[0]


def pmf(p: TruncCmpParams) -> np.ndarray:
    """Probabilities for 0..T as an array."""
    out = np.empty(p.t_max + 1)
    pmf_row(p.log_lam, p.nu, _lf(p), out)
    return out


def mean(p: TruncCmpParams) -> float:
    return log_stats(p.log_lam, p.nu, _lf(p))[1]


def variance(p: TruncCmpParams) -> float:
    return log_stats(p.log_lam, p.nu, _lf(p))[2]


def solve_log_lambda_checked(mu: float, nu: float, t_max: int = T_MAX, a0: float = math.nan) -> float:
    lf = _LF10 if t_max == T_MAX else log_factorials(t_max)
    c = np.exp(-nu * lf)
    a, _, _, status = solve_log_lambda(mu, nu, c, lf, a0, SOLVER_TOL, SOLVER_MAX_ITER)
    if status == DOMAIN:
        raise CmpDomainError(f"mean must lie in (0, {t_max}), got {mu}")
    if status == OVERFLOW:
        raise SolverError(f"log-rate exceeded {LOG_LAMBDA_MAX} solving mu={mu}, nu={nu}")
    if status == NO_CONVERGENCE:
        raise SolverError(f"no convergence in {SOLVER_MAX_ITER} iterations for mu={mu}, nu={nu}")
    return a


def solve_lambda(m: MeanParams) -> float:
    """The unique rate whose truncated mean equals ``m.mu``."""
    return math.exp(solve_log_lambda_checked(m.mu, m.nu, m.t_max))


def sample(p: TruncCmpParams, rng: np.random.Generator, size=None):
    """Inverse-CDF draws; a scalar int when ``size`` is None."""
    cdf = np.cumsum(pmf(p))
    cdf[-1] = 1.0
    u = rng.random(size)
    draws = np.searchsorted(cdf, u, side="right")
    if size is None:
        return int(draws)
    return draws.astype(np.int64)
