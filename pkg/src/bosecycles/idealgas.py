"""Exact and limiting cycle statistics of the free Bose gas on a torus.

Canonical partition functions are kept in log form throughout: Q_N grows like
exp(cN) and overflows double precision a few hundred particles in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy import special

from .kernels import (DomainError, SystemParams, log_q_cycle, q_cycle, q_minus_one,
                      zeta)


class TooLarge(ValueError):
    """Requested enumeration is beyond the configured size limit."""


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecursionTable:
    """log Q_0 ... log Q_N for fixed box and temperature."""
    logQ: np.ndarray
    params: SystemParams

    @property
    def N(self) -> int:
        return len(self.logQ) - 1

    def ratio(self, n: int = 1) -> float:
        """Q_{N-n} / Q_N."""
        return math.exp(self.logQ[self.N - n] - self.logQ[self.N])


@dataclass
class CycleDistribution:
    """P(xi_1 = n) for n = 1..len(mass).

    ``provenance`` is ``"exact"``, ``"limit"`` or ``"sampled"``.  Limit laws
    carry the analytic mass beyond ``len(mass)`` in ``tail``; sampled laws carry
    standard errors.
    """
    mass: np.ndarray
    provenance: str
    stderr: np.ndarray | None = None
    tail: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(math.fsum(self.mass) + self.tail)

    @property
    def deficit(self) -> float:
        return 1.0 - self.total


@dataclass(frozen=True)
class MuSolution:
    mu: float
    beta_mu: float
    saturated: bool


@dataclass(frozen=True)
class OccupationResult:
    logQ: float
    abs_bound: float
    n_modes: int
    n_states: int


# ---------------------------------------------------------------------------
# recursion
# ---------------------------------------------------------------------------

def _log_recursion(log_w: np.ndarray, N: int) -> np.ndarray:
    """log A_M for A_M = (1/M) sum_{n<=M} w_n A_{M-n}, A_0 = 1."""
    out = np.zeros(N + 1)
    for M in range(1, N + 1):
        out[M] = logsumexp(log_w[:M] + out[M - 1::-1]) - math.log(M)
    return out


def recursion_table(params: SystemParams, N: int | None = None) -> RecursionTable:
    """Canonical free-boson partition functions up to N via the cycle recursion."""
    N = params.n_particles if N is None else N
    if N == 0:
        return RecursionTable(np.zeros(1), params)
    lq = log_q_cycle(np.arange(1, N + 1), params)
    return RecursionTable(_log_recursion(np.atleast_1d(lq), N), params)


def log_increment_table(params: SystemParams, N: int | None = None) -> np.ndarray:
    """log(Q_N - Q_{N-1}) for N = 0..N, with Q_{-1} = 0.

    The increments obey the same recursion with weights q_n - 1, so they stay
    accurate even where Q_N and Q_{N-1} agree to every printed digit.
    """
    N = params.n_particles if N is None else N
    if N == 0:
        return np.zeros(1)
    qm1 = np.atleast_1d(q_minus_one(np.arange(1, N + 1), params))
    with np.errstate(divide="ignore"):
        return _log_recursion(np.log(qm1), N)


def generalized_recursion(a, N: int) -> np.ndarray:
    """A_0..A_N for A_M = (1/M) sum_{n=1}^M a_n A_{M-n}, linear arithmetic."""
    a = np.asarray(a, dtype=float)
    A = np.zeros(N + 1)
    A[0] = 1.0
    for M in range(1, N + 1):
        A[M] = np.dot(a[:M], A[M - 1::-1]) / M
    return A


def increment_identity_check(a, N: int) -> float:
    """Max |dA_M - (1/M) sum (a_n - 1) dA_{M-n}| with dA_M = A_M - A_{M-1}, A_{-1} = 0."""
    a = np.asarray(a, dtype=float)
    A = generalized_recursion(a, N)
    dA = np.diff(np.concatenate(([0.0], A)))
    res = 0.0
    for M in range(1, N + 1):
        rhs = np.dot(a[:M] - 1.0, dA[M - 1::-1]) / M
        res = max(res, abs(dA[M] - rhs))
    return res


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------

def integer_partitions(n: int, largest: int | None = None):
    """Partitions of n as non-increasing tuples."""
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for first in range(min(n, largest), 0, -1):
        for rest in integer_partitions(n - first, first):
            yield (first,) + rest


def brute_force_partition(params: SystemParams, N: int | None = None) -> float:
    """log Q_N summed over conjugacy classes of S_N (N <= 10).

    Q_N = sum over cycle types {m_c} of prod_c q_c^{m_c} / (m_c! c^{m_c}).
    """
    N = params.n_particles if N is None else N
    if N > 10:
        raise TooLarge("class sum limited to N <= 10")
    if N == 0:
        return 0.0
    lq = np.atleast_1d(log_q_cycle(np.arange(1, N + 1), params))
    terms = []
    for part in integer_partitions(N):
        t = 0.0
        for c in set(part):
            m = part.count(c)
            t += m * lq[c - 1] - math.lgamma(m + 1) - m * math.log(c)
        terms.append(t)
    return float(logsumexp(terms))


def occupation_partition(params: SystemParams, cutoff_sq: int,
                         max_states: int = 10**7, N: int | None = None) -> OccupationResult:
    """log Q_N as a sum over occupation numbers of box momenta.

    Momenta k = 2 pi m / L with |m|^2 <= ``cutoff_sq``.  The sum over
    occupation sets is accumulated mode by mode as the coefficient of x^N in
    prod_k 1/(1 - x e^{-beta eps_k}).  ``abs_bound`` bounds the mass of the
    discarded momenta: sum_j S^j Q_trunc(N-j), S the discarded one-body weight.
    """
    N = params.n_particles if N is None else N
    if N > 6:
        raise TooLarge("occupation sum limited to N <= 6")
    d = params.d
    a = (params.lam / params.L)**2
    R = int(math.isqrt(cutoff_sq))
    grid = np.arange(-R, R + 1)
    m2 = sum(np.meshgrid(*([grid**2] * d), indexing="ij")).ravel()
    m2 = np.sort(m2[m2 <= cutoff_sq])
    n_modes = len(m2)
    n_states = math.comb(n_modes + N - 1, N)
    if n_states > max_states:
        raise TooLarge(f"{n_states} occupation sets exceed the limit {max_states}")
    w = np.exp(-np.pi * a * m2)
    c = np.zeros(N + 1)
    c[0] = 1.0
    for wk in w:
        for j in range(1, N + 1):
            c[j] += wk * c[j - 1]
    q1 = float(q_cycle(1, params))
    excluded = max(q1 - math.fsum(w), 0.0) + 4e-16 * q1
    bound = math.fsum(excluded**j * c[N - j] for j in range(1, N + 1))
    return OccupationResult(math.log(c[N]), bound, n_modes, n_states)


# ---------------------------------------------------------------------------
# finite-N cycle statistics
# ---------------------------------------------------------------------------

def cycle_distribution_exact(params: SystemParams,
                             table: RecursionTable | None = None) -> CycleDistribution:
    """P(xi_1 = n) = q_n Q_{N-n} / (N Q_N)."""
    table = recursion_table(params) if table is None else table
    N = table.N
    if N == 0:
        raise DomainError("no particles")
    lq = np.atleast_1d(log_q_cycle(np.arange(1, N + 1), params))
    lQ = table.logQ
    mass = np.exp(lq + lQ[N - 1::-1] - lQ[N] - math.log(N))
    return CycleDistribution(mass, "exact", meta={"N": N, "L_over_lambda": params.ratio})


def condensate_fraction_finite(params: SystemParams,
                               table: RecursionTable | None = None) -> float:
    """<N_0>/N = (1/N) sum_n Q_{N-n}/Q_N."""
    table = recursion_table(params) if table is None else table
    N = table.N
    lQ = table.logQ
    return float(math.fsum(np.exp(lQ[N - 1::-1] - lQ[N])) / N)


def tail_probability(params: SystemParams, thresholds, absolute: bool = False,
                     dist: CycleDistribution | None = None) -> dict:
    """P(xi_1 > t N) for each relative threshold t, or P(xi_1 > t) if ``absolute``."""
    dist = cycle_distribution_exact(params) if dist is None else dist
    N = len(dist.mass)
    out = {}
    for t in thresholds:
        cut = t if absolute else t * N
        n = np.arange(1, N + 1)
        out[t] = float(math.fsum(dist.mass[n > cut]))
    return out


def finite_size_scan(rho_lam_d: float, d: int = 3, ladder=(64, 216, 512, 1000),
                     eps: float = 0.1, k_exponent: float = 0.5,
                     eps_diffusive: float | None = None) -> list[dict]:
    """Finite-N cycle observables at fixed density, box side L = (N / rho)^(1/d).

    Each row holds P(xi_1 > eps N), the lower target rho_0/rho - eps,
    P(xi_1 <= K_N) with K_N = floor(N^k_exponent), the condensate fraction, the
    limit-law deficit and optionally P(xi_1 > eps' (L/lambda)^2).
    """
    lim = limit_cycle_distribution(rho_lam_d, 1.0, d, n_max=1)
    rho0_frac = max(0.0, 1.0 - zeta(d / 2) / rho_lam_d)
    rows = []
    for N in ladder:
        p = SystemParams.natural(d=d, l_over_lam=(N / rho_lam_d)**(1.0 / d), N=N)
        table = recursion_table(p)
        dist = cycle_distribution_exact(p, table)
        K = int(math.floor(N**k_exponent + 1e-12))
        row = {
            "N": N,
            "L_over_lambda": p.ratio,
            "p_tail_eps": tail_probability(p, [eps], dist=dist)[eps],
            "tail_target": rho0_frac - eps,
            "K": K,
            "p_le_K": float(math.fsum(dist.mass[:K])),
            "condensate_fraction": condensate_fraction_finite(p, table),
            "limit_deficit": lim.deficit,
        }
        if eps_diffusive is not None:
            row["p_tail_diffusive"] = tail_probability(
                p, [eps_diffusive * p.ratio**2], absolute=True, dist=dist)[eps_diffusive * p.ratio**2]
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# thermodynamic limit
# ---------------------------------------------------------------------------

def _polylog_series(s: float, z: float) -> float:
    if z == 0.0:
        return 0.0
    # remainder after n terms is below z^(n+1) / ((1 - z) n^s)
    n_terms = int(math.log(1e-18 * (1.0 - z)) / math.log(z)) + 2
    n = np.arange(1, max(n_terms, 2) + 1, dtype=float)
    return float(np.sum(np.exp(n * math.log(z) - s * np.log(n))))


def _polylog_near_one(s: float, alpha: float, kmax: int = 20) -> float:
    """g_s(e^-alpha) for small alpha, expansion in powers of alpha."""
    total = 0.0
    m = round(s)
    if abs(s - m) < 1e-12:
        m = int(m)
        harmonic = math.fsum(1.0 / j for j in range(1, m))
        total += (-alpha)**(m - 1) / math.factorial(m - 1) * (harmonic - math.log(alpha))
        for k in range(kmax):
            if k != m - 1:
                total += float(special.zeta(m - k)) * (-alpha)**k / math.factorial(k)
        return total
    total += special.gamma(1.0 - s) * alpha**(s - 1.0)
    for k in range(kmax):
        total += float(special.zeta(s - k)) * (-alpha)**k / math.factorial(k)
    return total


def polylog(s: float, z):
    """g_s(z) = sum_n z^n / n^s for 0 <= z <= 1."""
    zs = np.asarray(z, dtype=float)
    out = np.empty(zs.shape).ravel()
    for i, zi in enumerate(zs.ravel()):
        if zi < 0 or zi > 1:
            raise DomainError("polylog evaluated for 0 <= z <= 1 only")
        if zi == 1.0:
            out[i] = zeta(s)
        elif zi <= 0.9999:
            out[i] = _polylog_series(s, zi)
        else:
            out[i] = _polylog_near_one(s, -math.log(zi))
    out = out.reshape(zs.shape)
    return float(out) if out.ndim == 0 else out


def mu_ideal(rho: float, beta: float, d: int, lam: float = 1.0) -> MuSolution:
    """Chemical potential of the infinite free Bose gas at density rho."""
    if d <= 2:
        raise DomainError("no critical density for d <= 2")
    if not rho > 0:
        raise DomainError("density must be positive")
    s = d / 2
    x = rho * lam**d
    if x >= zeta(s):
        return MuSolution(0.0, 0.0, True)
    lo, hi = math.log(x) - 5.0, 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if polylog(s, math.exp(mid)) > x:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-13:
            break
    bm = 0.5 * (lo + hi)
    return MuSolution(bm / beta, bm, False)


def limit_cycle_distribution(rho: float, beta: float, d: int, n_max: int,
                             lam: float = 1.0) -> CycleDistribution:
    """P(xi_1 = n) = e^(n beta mu) / (rho lam^d n^(d/2)) in infinite volume."""
    sol = mu_ideal(rho, beta, d, lam)
    x = rho * lam**d
    s = d / 2
    n = np.arange(1, n_max + 1, dtype=float)
    mass = np.exp(n * sol.beta_mu - s * np.log(n)) / x
    if sol.saturated:
        tail = float(special.zeta(s, n_max + 1)) / x
    else:
        tail = max(polylog(s, math.exp(sol.beta_mu)) / x - math.fsum(mass), 0.0)
    return CycleDistribution(mass, "limit", tail=tail,
                             meta={"rho_lambda_d": x, "beta_mu": sol.beta_mu})


def f0_limit(rho: float, beta: float, d: int, lam: float = 1.0) -> float:
    """Free-energy density of the saturated free gas, -zeta(1+d/2) / (beta lam^d)."""
    if d <= 2:
        raise DomainError("no critical density for d <= 2")
    if rho * lam**d < zeta(d / 2):
        raise DomainError("density below the critical value")
    return -zeta(1 + d / 2) / (beta * lam**d)


def ideal_free_energy(rho: float, beta: float, d: int, lam: float = 1.0):
    """(f, saturated): f0 above the critical density, rho mu - p below it."""
    sol = mu_ideal(rho, beta, d, lam)
    if sol.saturated:
        return f0_limit(rho, beta, d, lam), True
    p = polylog(1 + d / 2, math.exp(sol.beta_mu)) / (beta * lam**d)
    return rho * sol.mu - p, False


def fixedL_limit(params: SystemParams, tol: float = 1e-17):
    """log lim_{N->inf} Q_N at fixed box, as (product form, series form).

    Product: -sum_{z != 0} log(1 - exp(-pi (lam/L)^2 z^2)).
    Series:  sum_{n >= 1} (q_n - 1) / n.
    """
    a = (params.lam / params.L)**2
    d = params.d
    zmax = int(math.ceil(math.sqrt(-math.log(tol) / (math.pi * a)))) + 1
    z = np.arange(-zmax, zmax + 1)
    z2 = sum(np.meshgrid(*([z**2] * d), indexing="ij")).ravel()
    z2 = z2[z2 > 0]
    prod = -math.fsum(np.log1p(-np.exp(-np.pi * a * z2)))
    # q_n - 1 ~ 2d exp(-pi n a): stop once below tol
    nmax = int(math.ceil(-math.log(tol / (2 * d)) / (math.pi * a))) + 1
    n = np.arange(1, nmax + 1)
    series = math.fsum(np.atleast_1d(q_minus_one(n, params)) / n)
    return prod, series


# ---------------------------------------------------------------------------
# resolution of unity over marked cycles
# ---------------------------------------------------------------------------

def _nested(M, one, depth_cache=None):
    # (1/M)(1 + sum_{n=1}^{M-1} nested(M-n)), evaluated without memoisation
    if M == 1:
        return one
    acc = one
    for n in range(1, M):
        acc = acc + _nested(M - n, one)
    return acc / M


def resolution_identity_check(N: int, exact: bool = False) -> float:
    """|S(N) - 1| for the nested sum S(M) = (1/M)(1 + sum_{n<M} S(M - n))."""
    if N > 12:
        raise TooLarge("nested sum limited to N <= 12")
    if exact:
        return float(abs(_nested(N, Fraction(1)) - 1))
    return abs(_nested(N, 1.0) - 1.0)


def permutation_count_identity(N: int) -> int:
    """sum over lengths n of the cycle through a marked element of (N-1)!/(N-n)! T(N-n).

    Equals N! since every permutation is counted once.
    """
    @lru_cache(maxsize=None)
    def T(M):
        if M == 0:
            return 1
        return sum(math.factorial(M - 1) // math.factorial(M - n) * T(M - n)
                   for n in range(1, M + 1))
    return T(N)
