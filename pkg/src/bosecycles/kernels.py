"""Special functions, heat-kernel sums and pair potentials.

Everything here is a pure function of its arguments.  Lengths are in units of
the thermal wavelength when ``units="natural"``; in physical units lengths are
in angstrom, temperatures in kelvin and masses in amu.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import constants, special


class DomainError(ValueError):
    """Argument outside the domain where the quantity is defined."""


class HardCoreContact(DomainError):
    """Two particles sit on top of each other under a potential that diverges at 0."""


HE4_MASS_AMU = 4.002602
AMU = constants.physical_constants["atomic mass constant"][0]


def wavelength_constant(mass_amu: float = HE4_MASS_AMU) -> float:
    """C_m in lambda_T = C_m / sqrt(T), angstrom * kelvin^(1/2)."""
    m = mass_amu * AMU
    return constants.h / math.sqrt(2.0 * math.pi * m * constants.k) * 1e10


# ---------------------------------------------------------------------------
# system parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemParams:
    """Box, temperature and particle content of a periodic system.

    ``units="natural"``: ``lam`` (thermal wavelength) is given directly and
    ``beta`` only sets the energy scale.  ``units="physical"``: ``temperature``
    in K and ``mass_amu`` fix the wavelength (angstrom), ``beta = 1/T``.
    Exactly one of ``N`` and ``rho`` may be given; the other follows from
    N = rho L^d.
    """
    d: int
    L: float
    N: int | None = None
    rho: float | None = None
    lam: float | None = None
    beta: float = 1.0
    units: str = "natural"
    temperature: float | None = None
    mass_amu: float = HE4_MASS_AMU

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.d}")
        if not self.L > 0:
            raise DomainError(f"box side must be positive, got {self.L}")
        if self.N is not None and self.rho is not None:
            raise DomainError("give either N or rho, not both")
        if self.N is not None and (int(self.N) != self.N or self.N < 0):
            raise DomainError(f"N must be a non-negative integer, got {self.N}")
        if self.rho is not None and not self.rho > 0:
            raise DomainError(f"density must be positive, got {self.rho}")
        if self.units == "natural":
            if self.lam is None:
                object.__setattr__(self, "lam", 1.0)
            if not self.lam > 0:
                raise DomainError(f"thermal wavelength must be positive, got {self.lam}")
            if not self.beta > 0:
                raise DomainError(f"beta must be positive, got {self.beta}")
        elif self.units == "physical":
            if self.temperature is None or not self.temperature > 0:
                raise DomainError(f"temperature must be positive, got {self.temperature}")
            object.__setattr__(self, "beta", 1.0 / self.temperature)
            object.__setattr__(
                self, "lam", wavelength_constant(self.mass_amu) / math.sqrt(self.temperature))
        else:
            raise DomainError(f"unknown unit system {self.units!r}")

    @classmethod
    def natural(cls, d: int, l_over_lam: float, N: int | None = None,
                rho: float | None = None, beta: float = 1.0) -> "SystemParams":
        """Box measured in thermal wavelengths (lam = 1)."""
        return cls(d=d, L=float(l_over_lam), N=N, rho=rho, lam=1.0, beta=beta)

    @property
    def n_particles(self) -> int:
        if self.N is not None:
            return int(self.N)
        if self.rho is None:
            raise DomainError("particle number not set")
        return int(round(self.rho * self.L**self.d))

    @property
    def density(self) -> float:
        if self.rho is not None:
            return float(self.rho)
        if self.N is None:
            raise DomainError("density not set")
        return self.N / self.L**self.d

    @property
    def ratio(self) -> float:
        """L / lambda."""
        return self.L / self.lam

    def replace(self, **kw) -> "SystemParams":
        cur = dict(d=self.d, L=self.L, N=self.N, rho=self.rho, lam=self.lam,
                   beta=self.beta, units=self.units, temperature=self.temperature,
                   mass_amu=self.mass_amu)
        if "N" in kw:
            cur["rho"] = None
        if "rho" in kw:
            cur["N"] = None
        cur.update(kw)
        if cur["units"] == "physical":
            cur["lam"] = None
        return SystemParams(**cur)


def thermal_wavelength(params: SystemParams) -> float:
    """lambda_beta = sqrt(2 pi hbar^2 beta / m) in the active unit system."""
    return float(params.lam)


# ---------------------------------------------------------------------------
# theta function and zeta
# ---------------------------------------------------------------------------

def _theta_tail(b: np.ndarray) -> np.ndarray:
    """sum_{z>=1} exp(-pi b z^2) for b >= 1."""
    zmax = int(math.ceil(6.0 / math.sqrt(float(np.min(b))))) if b.size else 1
    z2 = np.arange(1, zmax + 1, dtype=float)**2
    return np.exp(-np.pi * np.multiply.outer(b, z2)).sum(axis=-1)


def log_theta(a):
    """log of theta(a) = sum_z exp(-pi a z^2).

    Direct sum for a >= 1, Poisson dual a^(-1/2) theta(1/a) otherwise, so the
    series is always evaluated at an argument >= 1 and a handful of terms do.
    """
    arr = np.asarray(a, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("theta(a) needs a > 0")
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    big = flat >= 1.0
    if big.any():
        out[big] = np.log1p(2.0 * _theta_tail(flat[big]))
    if (~big).any():
        b = 1.0 / flat[~big]
        out[~big] = 0.5 * np.log(b) + np.log1p(2.0 * _theta_tail(b))
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def theta_sum(a):
    """theta(a) = sum_{z in Z} exp(-pi a z^2)."""
    return np.exp(log_theta(a))


def theta_direct(a, zmax: int | None = None):
    """Plain two-sided sum of exp(-pi a z^2) without the dual switch."""
    arr = np.asarray(a, dtype=float)
    if zmax is None:
        zmax = int(math.ceil(math.sqrt(40.0 / (math.pi * float(np.min(arr)))))) + 1
    z2 = np.arange(1, zmax + 1, dtype=float)**2
    out = 1.0 + 2.0 * np.exp(-np.pi * np.multiply.outer(arr, z2)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def zeta(s: float) -> float:
    """Riemann zeta for real s > 1."""
    if not s > 1:
        raise DomainError(f"zeta(s) diverges for s <= 1 (s = {s})")
    return float(special.zeta(s, 1))


# ---------------------------------------------------------------------------
# cycle weights q_n
# ---------------------------------------------------------------------------

def log_q_cycle(n, params: SystemParams):
    """log q_n with q_n = theta(n lam^2 / L^2)^d."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise DomainError("cycle length must be >= 1")
    return params.d * log_theta(n * (params.lam / params.L)**2)


def q_cycle(n, params: SystemParams):
    """One-particle partition function at inverse temperature n*beta on the torus."""
    return np.exp(log_q_cycle(n, params))


def q_minus_one(n, params: SystemParams):
    """q_n - 1 without cancellation (q_n -> 1 exponentially fast in n)."""
    return np.expm1(log_q_cycle(n, params))


def q_cycle_forms(n, params: SystemParams):
    """q_n evaluated both as a momentum (winding) sum and as its Poisson dual.

    Returns ``(winding, dual)``, each a direct sum with no switching.
    """
    n = np.asarray(n, dtype=float)
    a = n * (params.lam / params.L)**2
    d = params.d
    winding = np.array([theta_direct(x) for x in np.atleast_1d(a)])**d
    dual = (params.L / params.lam)**d * np.atleast_1d(n)**(-d / 2) * \
        np.array([theta_direct(1.0 / x) for x in np.atleast_1d(a)])**d
    return winding.reshape(n.shape), dual.reshape(n.shape)


# ---------------------------------------------------------------------------
# pair potentials
# ---------------------------------------------------------------------------

def _sphere_area(d: int) -> float:
    return 2.0 * math.pi**(d / 2) / math.gamma(d / 2)


def _kappa(shells: int, d: int) -> float:
    # image z with |z|_inf > shells sits at distance >= L*kappa*|y| for y in its unit cell
    return 1.0 - math.sqrt(d) / (shells + 0.5)


@dataclass(frozen=True)
class Zero:
    kind: str = field(default="zero", init=False)

    def __call__(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def tail_bound(self, L, shells, d):
        return 0.0

    diverges_at_origin = False
    integrable = True


@dataclass(frozen=True)
class LennardJones:
    """4 eps [(d0/r)^12 - (d0/r)^6]."""
    epsilon: float
    d0: float
    kind: str = field(default="lennard_jones", init=False)

    def __post_init__(self):
        if not (self.epsilon > 0 and self.d0 > 0):
            raise DomainError("Lennard-Jones parameters must be positive")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            s6 = (self.d0 / r)**6
        return 4.0 * self.epsilon * (s6 * s6 - s6)

    def tail_bound(self, L, shells, d):
        """Bound on sum over images with |z|_inf > shells, from |u| <= 4 eps d0^6 / r^6."""
        eta = 6 - d
        kap = _kappa(shells, d)
        if eta <= 0 or kap <= 0 or L * kap * (shells + 0.5) < self.d0:
            return math.inf
        C = 4.0 * self.epsilon * self.d0**6
        return C * _sphere_area(d) * (L * kap)**-(d + eta) * (shells + 0.5)**-eta / eta

    diverges_at_origin = True
    integrable = False


@dataclass(frozen=True)
class SoftSphere:
    """Penetrable sphere: ``amplitude`` for r < ``range``, zero outside."""
    amplitude: float
    range: float
    kind: str = field(default="soft_sphere", init=False)

    def __post_init__(self):
        if not self.range > 0:
            raise DomainError("soft-sphere range must be positive")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.range, self.amplitude, 0.0)

    def tail_bound(self, L, shells, d):
        kap = _kappa(shells, d)
        return 0.0 if kap > 0 and L * kap * (shells + 0.5) >= self.range else math.inf

    diverges_at_origin = False
    integrable = True


@dataclass(frozen=True)
class Gaussian:
    """amplitude * exp(-r^2 / (2 width^2))."""
    amplitude: float
    width: float
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        if not self.width > 0:
            raise DomainError("Gaussian width must be positive")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.amplitude * np.exp(-0.5 * (r / self.width)**2)

    def tail_bound(self, L, shells, d):
        kap = _kappa(shells, d)
        if kap <= 0:
            return math.inf
        c = (L * kap)**2 / (2.0 * self.width**2)
        r0 = shells + 0.5
        return abs(self.amplitude) * _sphere_area(d) * 0.5 * c**(-d / 2) * \
            special.gamma(d / 2) * special.gammaincc(d / 2, c * r0 * r0)

    diverges_at_origin = False
    integrable = True


@dataclass(frozen=True)
class LatticeNN:
    """Lattice gas couplings: on-site ``u0`` (may be inf) and anisotropy ``c``.

    Nearest neighbours attract with -4c.
    """
    u0: float
    c: float
    kind: str = field(default="lattice_nn", init=False)


PotentialSpec = Union[Zero, LennardJones, SoftSphere, Gaussian, LatticeNN]


def make_potential(kind: str, **kw) -> PotentialSpec:
    kinds = {"zero": Zero, "lennard_jones": LennardJones, "lj": LennardJones,
             "soft_sphere": SoftSphere, "gaussian": Gaussian, "lattice_nn": LatticeNN}
    try:
        cls = kinds[kind.lower()]
    except KeyError:
        raise DomainError(f"unknown potential kind {kind!r}") from None
    return cls(**kw)


def _cube(shells: int, d: int) -> np.ndarray:
    z = np.arange(-shells, shells + 1)
    return np.stack(np.meshgrid(*([z] * d), indexing="ij"), -1).reshape(-1, d)


def reduce_to_cell(x, L):
    """Map positions into the centred cell [-L/2, L/2)."""
    x = np.asarray(x, dtype=float)
    return x - L * np.floor(x / L + 0.5)


def image_shells(u: PotentialSpec, L: float, d: int, tol: float,
                 max_shells: int = 40) -> int:
    """Smallest image cube whose tail bound is below ``tol``."""
    shells = 1
    while u.tail_bound(L, shells, d) > tol:
        shells += 1
        if shells > max_shells:
            raise DomainError("image sum did not reach the requested tolerance")
    return shells


def periodize_potential(u: PotentialSpec, x, L: float, tol: float = 1e-12,
                        shells: int | None = None, max_shells: int = 40):
    """u_L(x) = sum_z u(x + L z).

    With ``shells`` given the image cube |z|_inf <= shells is summed as is;
    otherwise the cube grows until the tail bound drops below ``tol``.
    ``x`` may carry leading batch axes.
    """
    if isinstance(u, LatticeNN):
        raise DomainError("lattice couplings have no continuum periodization")
    if isinstance(u, Zero):
        return 0.0
    x = reduce_to_cell(x, L)
    d = x.shape[-1]
    if u.diverges_at_origin and np.any(np.all(x == 0.0, axis=-1)):
        raise HardCoreContact("particles at zero separation")
    if shells is None:
        shells = image_shells(u, L, d, tol, max_shells)
    r = np.linalg.norm(x[..., None, :] + L * _cube(shells, d), axis=-1)
    if x.ndim == 1:
        return math.fsum(u(r))
    return u(r).sum(axis=-1)
