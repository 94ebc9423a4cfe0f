"""Jensen-type upper bounds for integrable pair potentials.

Everything is radial: u(x) = u(|x|) and integrals over R^d reduce to
omega_d int r^{d-1} u(r) (...) dr.  Lengths are measured with the thermal
wavelength lam = lambda_beta.

    alpha_{n,k}     (1/k + 1/(n-k)) / lam^2
    phi_upper(n)    1/2 sum_k alpha^{d/2} int u exp(-pi alpha x^2)
    psi_upper       rho int u
    h_beta(x)       sum_k k^{-d/2} exp(-pi x^2 / (k lam^2))
    f_upper         rho^2/2 int u + rho lam^-d int u h_beta + f0
    f_adams         rho^2 int u + (rho/beta) ln(rho lam^d)

The auxiliary partition function Q^-_N obeys the free cycle recursion with
each n-cycle penalized by exp(-C[n(N-n) + n(n-1)/2] - D n); telescoping gives
log Q^-_N = -C N(N-1)/2 - D N + log Q^0_N, which ``qminus_identity`` checks.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, special
from scipy.special import logsumexp

from .idealgas import ideal_free_energy, recursion_table
from .kernels import (DomainError, Gaussian, PotentialSpec, SoftSphere, SystemParams, Zero,
                      log_q_cycle, zeta)

__all__ = [
    "BoundReport", "alpha", "integral", "psi_upper", "phi_upper", "stability_constant",
    "h_beta_kernel", "integral_with_h", "f_upper", "qminus_identity",
]

K_MAX = 2000
_TAYLOR = 6          # even: degree 5 below, 6 above
_CUT = 1e-14          # |u| below this fraction of its scale is dropped
_EPS = np.finfo(float).eps


def _sphere_area(d: int) -> float:
    return 2.0 * math.pi**(d / 2) / math.gamma(d / 2)


def alpha(n: int, k: int, lam: float = 1.0) -> float:
    if not 1 <= k <= n - 1:
        raise DomainError(f"need 1 <= k <= n-1, got n={n}, k={k}")
    return (1.0 / k + 1.0 / (n - k)) / (lam * lam)


# ------------------------------------------------------------------ radial integrals

def _support(u: PotentialSpec) -> float:
    """Radius beyond which |u| < 1e-14 of its scale (the Gaussian tail is added analytically)."""
    if isinstance(u, Zero):
        return 0.0
    if isinstance(u, SoftSphere):
        return float(u.range)
    if isinstance(u, Gaussian):
        return u.width * math.sqrt(-2.0 * math.log(_CUT))
    raise DomainError(f"{u.kind} potential is not integrable")


def _gauss_tail(u: Gaussian, R: float, d: int) -> float:
    """omega_d int_R^inf r^{d-1} u(r) dr, exact."""
    c = 2.0 * u.width**2
    return u.amplitude * _sphere_area(d) * 0.5 * c**(d / 2) * special.gamma(d / 2) * \
        special.gammaincc(d / 2, R * R / c)


def _radial_quad(u, d, R, weight=None):
    area = _sphere_area(d)
    if weight is None:
        f = lambda r: area * r**(d - 1) * float(u(r))
    else:
        f = lambda r: area * r**(d - 1) * float(u(r)) * weight(r)
    return integrate.quad(f, 0.0, R, epsabs=0.0, epsrel=1e-13, limit=200)


def integral(u: PotentialSpec, d: int):
    """(int_{R^d} u, error estimate)."""
    R = _support(u)
    if R == 0.0:
        return 0.0, 0.0
    val, err = _radial_quad(u, d, R)
    if isinstance(u, Gaussian):
        val += _gauss_tail(u, R, d)
    return val, err


def _weighted_integral(u, d, a):
    """int u(x) exp(-pi a x^2) dx with an error estimate."""
    R = _support(u)
    if R == 0.0:
        return 0.0, 0.0
    val, err = _radial_quad(u, d, R, lambda r: math.exp(-math.pi * a * r * r))
    if isinstance(u, Gaussian):
        # exp(-pi a x^2) <= 1 beyond R
        err += abs(_gauss_tail(u, R, d))
    return val, err


def psi_upper(rho: float, u: PotentialSpec, d: int = 3) -> float:
    return rho * integral(u, d)[0]


def phi_upper(n: int, u: PotentialSpec, d: int = 3, lam: float = 1.0) -> dict:
    """Upper bound on the cycle self-energy phi_n, and its n-uniform relaxation."""
    iu, _ = integral(u, d)
    uniform = zeta(d / 2) / lam**d * iu if d > 2 else math.inf
    if iu == 0.0 and isinstance(u, Zero):
        return {"value": 0.0, "uniform": 0.0, "error": 0.0, "n": n}
    total, err = 0.0, 0.0
    for k in range(1, n // 2 + 1):
        a = alpha(n, k, lam)
        v, e = _weighted_integral(u, d, a)
        mult = 1 if 2 * k == n else 2     # k and n-k give the same term
        total += mult * a**(d / 2) * v
        err += mult * a**(d / 2) * e
    return {"value": 0.5 * total, "uniform": uniform, "error": 0.5 * err, "n": n}


def stability_constant(u: PotentialSpec, A: float | None = None) -> float:
    """Smallest A with sum_{i<j} u(x_i - x_j) >= -A N, when it is known.

    For positive-definite u this is u(0)/2; other kinds need A from the caller.
    """
    if A is not None:
        return float(A)
    if isinstance(u, Zero):
        return 0.0
    if isinstance(u, Gaussian) and u.amplitude >= 0:
        return 0.5 * u.amplitude
    raise DomainError(f"stability constant of a {u.kind} potential must be supplied")


# ------------------------------------------------------------------ h_beta

def _h_rows(y, s, K):
    k = np.arange(1, K + 1, dtype=float)
    ks = k**-s
    out = np.empty(len(y))
    step = max(1, 2**22 // K)
    for i in range(0, len(y), step):
        out[i:i + step] = (ks * np.exp(-y[i:i + step, None] / k)).sum(axis=1)
    return out


def h_beta_kernel(x, d: int, lam: float = 1.0, k_max: int = K_MAX) -> dict:
    """sum_{k>=1} k^{-d/2} exp(-pi x^2 / (k lam^2)) with a rigorous bracket.

    Terms up to K = max(k_max, 50 y), y = pi x^2/lam^2, are summed.  For
    t >= 0 the Taylor polynomials of e^{-t} of odd and even degree lie below
    and above it, so degrees 5 and 6 bracket the tail, each power of y/k
    summing to a Hurwitz zeta value.
    """
    if d <= 2:
        raise DomainError("h_beta diverges for d <= 2")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = d / 2
    y = math.pi * x * x / (lam * lam)
    Ks = np.maximum(int(k_max), np.ceil(50 * y)).astype(np.int64)
    partial = np.empty_like(y)
    lower = np.empty_like(y)
    upper = np.empty_like(y)
    for K in np.unique(Ks):
        sel = Ks == K
        ys = y[sel]
        p = _h_rows(ys, s, int(K))
        terms = [(-ys)**j / math.factorial(j) * special.zeta(s + j, K + 1)
                 for j in range(_TAYLOR + 1)]
        lo = sum(terms[:-1])
        partial[sel] = p
        lower[sel] = p + lo
        upper[sel] = p + lo + terms[-1]
    # pairwise summation rounding
    rnd = (np.log2(Ks) + 2) * _EPS * partial
    value = 0.5 * (lower + upper)
    error = 0.5 * (upper - lower) + rnd
    out = {"value": value, "error": error, "lower": lower - rnd, "upper": upper + rnd}
    if scalar:
        out = {k: float(v[0]) for k, v in out.items()}
    return out


def _gl_panels(R, d, width, extra=()):
    """Composite Gauss-Legendre nodes on [0, R], geometrically graded near 0."""
    n_uni = max(8, int(math.ceil(R / width)))
    edges = set(np.linspace(0.0, R, n_uni + 1).tolist())
    first = R / n_uni
    edges.update(first * 2.0**-np.arange(1, 30))
    edges.update(e for e in extra if 0 < e < R)
    edges = np.array(sorted(edges))
    return edges


def _composite(f, edges, order):
    t, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * t + 0.5 * (b + a)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return float(np.dot(weights, f(nodes)))


def integral_with_h(u: PotentialSpec, d: int, lam: float = 1.0, k_max: int = K_MAX):
    """(int u h_beta, error estimate) on a composite Gauss-Legendre radial grid."""
    if d <= 2:
        raise DomainError("h_beta diverges for d <= 2")
    R = _support(u)
    if R == 0.0:
        return 0.0, 0.0
    area = _sphere_area(d)
    width = u.width / 2 if isinstance(u, Gaussian) else R / 8
    edges = _gl_panels(R, d, width, extra=(lam,))
    hmax = 0.0

    def f(r):
        nonlocal hmax
        h = h_beta_kernel(r, d, lam, k_max)
        hmax = max(hmax, float(np.max(h["error"])))
        return area * r**(d - 1) * np.asarray(u(r), float) * h["value"]

    coarse = _composite(f, edges, 12)
    val = _composite(f, edges, 20)
    iu_abs = abs(integral(u, d)[0]) if isinstance(u, (Gaussian, SoftSphere)) else 0.0
    err = abs(val - coarse) + hmax * iu_abs
    if isinstance(u, Gaussian):
        err += zeta(d / 2) * abs(_gauss_tail(u, R, d))
    return val, err


# ------------------------------------------------------------------ free energy

@dataclass
class BoundReport:
    rho: float
    beta: float
    d: int
    lam: float
    f_upper: float
    f_adams: float
    f0: float
    mean_field: float
    cycle_term: float
    psi_upper: float
    phi_uniform: float
    f0_substituted: bool
    tighter: str
    errors: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("f_upper", "f_adams", "f0", "mean_field", "cycle_term", "psi_upper",
                     "phi_uniform"):
            setattr(self, name, float(getattr(self, name)))
        self.errors = {k: float(v) for k, v in self.errors.items()}

    def to_dict(self) -> dict:
        return asdict(self)


def f_upper(rho: float, beta: float, u: PotentialSpec, d: int = 3,
            lam: float | None = None) -> BoundReport:
    """Mean-field upper bound on the free-energy density next to the Adams bound.

    ``lam`` is lambda_beta; by default sqrt(beta), i.e. lengths in units of
    the wavelength at beta = 1.  Below the critical density the saturated f0
    is replaced by the unsaturated ideal free energy rho mu - p (flagged).
    """
    if not (rho > 0 and beta > 0):
        raise DomainError("rho and beta must be positive")
    lam = math.sqrt(beta) if lam is None else float(lam)
    iu, e1 = integral(u, d)
    iuh, e2 = integral_with_h(u, d, lam)
    f0, saturated = ideal_free_energy(rho, beta, d, lam)
    mean_field = 0.5 * rho * rho * iu
    cycle_term = rho / lam**d * iuh
    fu = mean_field + cycle_term + f0
    fa = rho * rho * iu + rho / beta * math.log(rho * lam**d)
    return BoundReport(
        rho=rho, beta=beta, d=d, lam=lam, f_upper=fu, f_adams=fa, f0=f0,
        mean_field=mean_field, cycle_term=cycle_term, psi_upper=rho * iu,
        phi_uniform=zeta(d / 2) / lam**d * iu, f0_substituted=not saturated,
        tighter="f_upper" if fu <= fa else "adams",
        errors={"int_u": e1, "int_u_h": e2},
    )


def qminus_identity(params: SystemParams, u: PotentialSpec | None = None,
                    C: float | None = None, D: float | None = None) -> dict:
    """Build log Q^-_M for M <= N by recursion and compare with the closed form.

    C = beta L^-d int u and D = beta lam^-d int u h_beta unless given.
    """
    if u is None and (C is None or D is None):
        raise ValueError("give a potential or both couplings C and D")
    d, L, lam, beta = params.d, params.L, params.lam, params.beta
    if C is None:
        C = beta * integral(u, d)[0] / L**d
    if D is None:
        D = beta * integral_with_h(u, d, lam)[0] / lam**d
    N = params.n_particles
    ref0 = recursion_table(params, N).logQ
    if N == 0:
        return {"residual": 0.0, "C": C, "D": D, "N": 0}
    lq = np.atleast_1d(log_q_cycle(np.arange(1, N + 1), params))
    out = np.zeros(N + 1)
    for M in range(1, N + 1):
        n = np.arange(1, M + 1, dtype=float)
        pen = C * (n * (M - n) + 0.5 * n * (n - 1)) + D * n
        out[M] = logsumexp(lq[:M] + out[M - 1::-1] - pen) - math.log(M)
    Ms = np.arange(N + 1, dtype=float)
    ref = -C * Ms * (Ms - 1) / 2 - D * Ms + ref0
    diff = np.abs(out - ref)
    return {"residual": float(diff.max()), "C": C, "D": D, "N": N,
            "logQ_minus": out, "closed_form": ref}
