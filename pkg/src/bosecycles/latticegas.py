"""Bosons on the discrete torus.

Heat kernels and bridge weights on Lambda = {0..L-1}^d, long-cycle sums for
the lattice ideal gas, and exact diagonalization of the hard-core lattice gas
(equivalently the spin-1/2 XXZ family)

    H = -sum_x sum_{|y-x|=1} (s+_x s-_y + s+_y s-_x - 2 s+_x s-_x)
        - 4c sum_<xy> n_x n_y - 4d(1-c) N

in fixed-N sectors. A site that is occupied is a spin pointing up.

Nearest-neighbour bonds are the multiset {(x, x+e_j)}, so on the L = 2 torus
the two bonds joining x and x+e_j are both kept and every site has 2d
neighbours, as in the L > 2 case.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse, special
from scipy.sparse import linalg as splinalg

from .idealgas import TooLarge
from .kernels import DomainError, PotentialSpec, Zero, periodize_potential

__all__ = [
    "LatticeParams", "SpinSector", "TooLarge", "bonds", "dispersion", "momenta",
    "lattice_q", "bessel_mean", "q_limit", "sandwich_check", "kn_bound_check",
    "lattice_bridge", "continuum_bridge", "continuum_bridge_quadrature",
    "skellam_tail_bound", "winding_identity", "positivity_sweep",
    "build_sector", "sector_spectrum", "sector_free_energy", "particle_hole_check",
    "condensate_observable", "one_body_spectrum", "sample_scatterers",
]

MAX_SECTOR_DIM = 10**5
DENSE_MAX = 2000
_GL_NODES = 200


@dataclass(frozen=True)
class LatticeParams:
    d: int
    L: int
    beta: float
    c: float = 0.0
    u0: float = math.inf
    m0: int = 2

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.d}")
        if int(self.L) != self.L or self.L < 2 or self.L % 2:
            raise DomainError(f"L must be an even integer >= 2, got {self.L}")
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")
        if not self.u0 >= 0:
            raise DomainError(f"u0 must be nonnegative, got {self.u0}")
        if int(self.m0) != self.m0 or self.m0 < 1:
            raise DomainError(f"m0 must be a positive integer, got {self.m0}")

    @property
    def volume(self) -> int:
        return self.L**self.d

    @property
    def hard_core(self) -> bool:
        return math.isinf(self.u0)


def bonds(L: int, d: int) -> list[tuple[int, int]]:
    """Bond multiset (x, x + e_j) as pairs of row-major site indices."""
    coords = np.indices((L,) * d).reshape(d, -1).T
    out = []
    for x in coords:
        i = int(np.ravel_multi_index(tuple(x), (L,) * d))
        for j in range(d):
            y = x.copy()
            y[j] = (y[j] + 1) % L
            out.append((i, int(np.ravel_multi_index(tuple(y), (L,) * d))))
    return out


# ------------------------------------------------------------------ kernels

def dispersion(k) -> np.ndarray | float:
    """eps_k = 2 sum_j (1 - cos k_j), last axis is the coordinate."""
    k = np.asarray(k, dtype=float)
    e = 2.0 * (1.0 - np.cos(k)).sum(axis=-1)
    return float(e) if e.ndim == 0 else e


def momenta(L: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(L) / L


def lattice_q(n, params: LatticeParams):
    """sum_k exp(-n beta eps_k) over the L^d momenta (factorizes per axis)."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise DomainError("cycle length must be >= 1")
    k = momenta(params.L)
    one = np.exp(-2.0 * params.beta * n[..., None] * (1.0 - np.cos(k))).sum(-1)
    out = one**params.d
    return float(out) if out.ndim == 0 else out


def _gl_rule():
    x, w = np.polynomial.legendre.leggauss(_GL_NODES)
    return x, w


_GL_X, _GL_W = _gl_rule()


def bessel_mean(t):
    """(1/pi) int_0^pi exp(-t (1 - cos k)) dk  (= exp(-t) I_0(t)).

    Gauss-Legendre on [0, k*], where k* = arccos(1 - 40/t) cuts the integrand
    at exp(-40) relative to its peak. Large t then keeps the nodes where the
    mass is.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("argument must be nonnegative")
    kmax = np.where(t > 20.0, np.arccos(1.0 - 40.0 / np.maximum(t, 20.0)), np.pi)
    half = 0.5 * kmax[..., None]
    k = half * (_GL_X + 1.0)
    val = (half * _GL_W * np.exp(-t[..., None] * (1.0 - np.cos(k)))).sum(-1) / np.pi
    return float(val) if val.ndim == 0 else val


def q_limit(rho: float, n, beta: float, d: int):
    """Infinite-volume q_n / N on the lattice: (1/rho) [e^{-2nb} I_0(2nb)]^d."""
    if not rho > 0:
        raise DomainError("density must be positive")
    n = np.asarray(n, dtype=float)
    return bessel_mean(2.0 * n * beta)**d / rho


def sandwich_check(rho: float, betas, ds, sides, n_values) -> dict:
    """q_limit [1 -/+ (4 sqrt(n beta)/L)^{1/d}]^d against q_n/N.

    The bracket is only meaningful while 4 sqrt(n beta) <= L; points beyond
    that are counted as skipped.
    """
    checked, skipped, viol = 0, 0, []
    worst = 0.0
    for d in ds:
        for L in sides:
            N = rho * L**d
            for beta in betas:
                p = LatticeParams(d=d, L=L, beta=beta)
                for n in n_values:
                    r = 4.0 * math.sqrt(n * beta) / L
                    if r > 1.0:
                        skipped += 1
                        continue
                    lim = q_limit(rho, n, beta, d)
                    val = lattice_q(n, p) / N
                    lo = lim * (1 - r**(1 / d))**d
                    hi = lim * (1 + r**(1 / d))**d
                    checked += 1
                    worst = max(worst, abs(val / lim - 1))
                    if not (lo * (1 - 1e-13) <= val <= hi * (1 + 1e-13)):
                        viol.append((d, L, beta, n, val, lo, hi))
    return {"checked": checked, "skipped": skipped, "violations": viol,
            "max_rel_deviation": worst}


def kn_bound_check(rho: float, beta: float, sides, d: int = 3, exponent: float = 0.5,
                   k_rule: str = "power") -> list[dict]:
    """sum_{n <= K_N} |q_n/N - q_limit(rho, n beta)| along a ladder of sides.

    k_rule: "power" (K = floor(N^exponent)), "one" (K = 1) or "all" (K = N, the
    negative control outside the sublinear regime).
    """
    if beta < 1:
        raise DomainError("the long-cycle bound is stated for beta >= 1")
    rows = []
    for L in sides:
        N = rho * L**d
        if abs(N - round(N)) > 1e-9:
            raise DomainError(f"rho L^d = {N} is not an integer")
        N = int(round(N))
        if k_rule == "power":
            K = max(1, int(math.floor(N**exponent + 1e-12)))
        elif k_rule == "one":
            K = 1
        elif k_rule == "all":
            K = N
        else:
            raise ValueError(f"unknown k_rule {k_rule!r}")
        n = np.arange(1, K + 1)
        p = LatticeParams(d=d, L=L, beta=beta)
        dev = np.abs(lattice_q(n, p) / N - q_limit(rho, n, beta, d))
        rows.append({"L": L, "N": N, "K": K, "sum": math.fsum(np.atleast_1d(dev))})
    return rows


# ------------------------------------------------------------------ bridges

def _w1_fourier(beta, x, L):
    k = momenta(L)
    x = np.asarray(x, dtype=float)
    terms = np.cos(x[..., None] * k) * np.exp(-2.0 * beta * (1.0 - np.cos(k)))
    return terms.sum(-1) / L


def lattice_bridge(beta: float, x, L: int):
    """L^-d sum_k exp(i k.x - beta eps_k) for integer x (last axis = coordinate)."""
    x = np.asarray(x)
    out = np.prod(_w1_fourier(beta, x, L), axis=-1)
    return float(out) if out.ndim == 0 else out


def continuum_bridge(beta: float, x):
    """Nearest-neighbour walk kernel on Z^d: prod_j e^{-2 beta} I_{x_j}(2 beta)."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.prod(special.ive(x, 2.0 * beta), axis=-1)
    return float(out) if out.ndim == 0 else out


def continuum_bridge_quadrature(beta: float, x):
    """Same kernel from the cosine integral, Gauss-Legendre on [0, pi]."""
    x = np.abs(np.asarray(x, dtype=float))
    nodes = max(_GL_NODES, int(4 * x.max(initial=0)) + 64)
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    k = 0.5 * np.pi * (gx + 1.0)
    w = 0.5 * gw
    f = np.exp(-2.0 * beta * (1.0 - np.cos(k)))
    one = (w * f * np.cos(x[..., None] * k)).sum(-1)
    out = np.prod(one, axis=-1)
    return float(out) if out.ndim == 0 else out


def skellam_tail_bound(beta: float, nu):
    """Chernoff bound on P(X >= nu) for X ~ Skellam(beta, beta), nu > 0."""
    nu = np.asarray(nu, dtype=float)
    r = nu / (2.0 * beta)
    val = np.exp(-nu * np.arcsinh(r) + 2.0 * beta * (np.sqrt(1.0 + r * r) - 1.0))
    return np.where(nu > 0, val, 1.0)


def winding_identity(beta: float, x, L: int, zmax: int = 8):
    """Torus kernel two ways: Fourier sum and images sum_{|z|<=zmax} P(x + L z).

    Returns (fourier, images, tail) where tail bounds the images left out.
    """
    x = np.asarray(x)
    z = np.arange(-zmax, zmax + 1)
    shifted = np.abs(x[..., None] + L * z).astype(float)
    per_axis = special.ive(shifted, 2.0 * beta).sum(-1)
    # images with |z| > zmax lie at distance >= L(zmax+1) -/+ x
    far = L * (zmax + 1)
    b = skellam_tail_bound(beta, far + x) + skellam_tail_bound(beta, far - x)
    images = np.prod(per_axis, axis=-1)
    tail = np.prod(per_axis + b, axis=-1) - images
    return lattice_bridge(beta, x, L), images, tail


def positivity_sweep(sides=(4, 8, 16), betas=(0.1, 1.0, 10.0), ds=(1, 2, 3),
                     zmax: int = 8) -> dict:
    """Every torus weight W(x), x in Lambda, on a grid of (L, beta, d)."""
    rows = []
    for d in ds:
        for L in sides:
            x = np.indices((L,) * d).reshape(d, -1).T - L // 2
            for beta in betas:
                W, img, tail = winding_identity(beta, x, L, zmax)
                ok = bool(np.all(np.abs(W - img) <= tail + 64 * np.finfo(float).eps))
                rows.append({"d": d, "L": L, "beta": beta, "min_image": float(img.min()),
                             "min_fourier": float(W.min()), "max_residual": float(np.max(np.abs(W - img))),
                             "max_tail": float(tail.max()), "identity_ok": ok})
    return {"rows": rows,
            "min_weight": min(r["min_image"] for r in rows),
            "min_fourier": min(r["min_fourier"] for r in rows),
            "identity_ok": all(r["identity_ok"] for r in rows)}


# ------------------------------------------------------------------ sectors

@dataclass
class SpinSector:
    params: LatticeParams
    N: int
    basis: np.ndarray          # (dim, L^d) occupation numbers
    H: sparse.csr_matrix
    codes: np.ndarray = field(repr=False)
    _evals: np.ndarray | None = field(default=None, repr=False)
    _evecs: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def volume(self) -> int:
        return self.params.volume


def _hard_core_basis(V, N):
    combos = list(itertools.combinations(range(V), N))
    combos = np.array(combos, dtype=np.int64).reshape(len(combos), N)
    occ = np.zeros((len(combos), V), dtype=np.int64)
    np.put_along_axis(occ, combos, 1, axis=1)
    return occ


def _bosonic_basis(V, N, cap):
    rows = []

    def rec(prefix, left, sites):
        if sites == 1:
            if left <= cap:
                rows.append(prefix + [left])
            return
        for k in range(min(cap, left), -1, -1):
            rec(prefix + [k], left - k, sites - 1)

    rec([], N, V)
    return np.array(rows, dtype=np.int64).reshape(-1, V)


def _sector_size(V, N, cap):
    # number of occupation vectors with entries <= cap summing to N
    poly = np.zeros(N + 1, dtype=object)
    poly[0] = 1
    for _ in range(V):
        new = np.zeros(N + 1, dtype=object)
        for k in range(min(cap, N) + 1):
            new[k:] += poly[:N + 1 - k]
        poly = new
    return int(poly[N])


def build_sector(params: LatticeParams, N: int) -> SpinSector:
    V, d = params.volume, params.d
    if not 0 <= N <= (V if params.hard_core else V * params.m0):
        raise DomainError(f"particle number {N} outside the sector range")
    cap = 1 if params.hard_core else params.m0
    size = math.comb(V, N) if cap == 1 else _sector_size(V, N, cap)
    if size > MAX_SECTOR_DIM:
        raise TooLarge(f"sector dimension {size} exceeds {MAX_SECTOR_DIM}")
    occ = _hard_core_basis(V, N) if cap == 1 else _bosonic_basis(V, N, cap)
    weights = (cap + 1) ** np.arange(V, dtype=np.int64)
    codes = occ @ weights
    order = np.argsort(codes)
    occ, codes = occ[order], codes[order]

    rows, cols, vals = [], [], []
    diag = np.full(len(codes), 4.0 * d * N - 4.0 * d * (1.0 - params.c) * N)
    for x, y in bonds(params.L, d):
        diag -= 4.0 * params.c * occ[:, x] * occ[:, y]
        # a+_x a_y and its adjoint
        src = np.nonzero((occ[:, y] > 0) & (occ[:, x] < cap))[0]
        if len(src):
            tgt = np.searchsorted(codes, codes[src] + weights[x] - weights[y])
            amp = -2.0 * np.sqrt((occ[src, x] + 1.0) * occ[src, y])
            rows += [tgt, src]
            cols += [src, tgt]
            vals += [amp, amp]
    if not params.hard_core and params.u0 > 0:
        diag += 0.5 * params.u0 * (occ * (occ - 1)).sum(1)
    rows.append(np.arange(len(codes)))
    cols.append(np.arange(len(codes)))
    vals.append(diag)
    H = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(len(codes),) * 2).tocsr()
    H.sum_duplicates()
    return SpinSector(params=params, N=N, basis=occ, H=H, codes=codes)


def sector_spectrum(sector: SpinSector, vectors: bool = False):
    """Full spectrum (dense); thermal traces need every eigenvalue."""
    if sector.dim > DENSE_MAX:
        raise TooLarge(f"full spectrum of dimension {sector.dim} exceeds dense limit {DENSE_MAX}")
    if sector._evals is None or (vectors and sector._evecs is None):
        ev, vec = linalg.eigh(sector.H.toarray())
        sector._evals, sector._evecs = ev, vec
    return (sector._evals, sector._evecs) if vectors else sector._evals


def ground_energy(sector: SpinSector, k: int = 1) -> np.ndarray:
    if sector.dim <= DENSE_MAX:
        return sector_spectrum(sector)[:k]
    ev = splinalg.eigsh(sector.H.astype(float), k=k, which="SA", return_eigenvectors=False)
    return np.sort(ev)


def sector_free_energy(sector: SpinSector, beta: float | None = None) -> float:
    """log Q_N = log sum_i exp(-beta E_i)."""
    beta = sector.params.beta if beta is None else beta
    return float(special.logsumexp(-beta * sector_spectrum(sector)))


def particle_hole_check(params: LatticeParams) -> dict:
    if not params.hard_core:
        raise DomainError("particle-hole symmetry needs the hard-core lattice gas")
    V = params.volume
    sectors = [build_sector(params, N) for N in range(V + 1)]
    logQ = np.array([sector_free_energy(s, params.beta) for s in sectors])
    spec_res = 0.0
    for N in range(V // 2 + 1):
        a, b = sector_spectrum(sectors[N]), sector_spectrum(sectors[V - N])
        spec_res = max(spec_res, float(np.max(np.abs(a - b))))
    h = V // 2
    mu_half = (logQ[h - 1] - logQ[h + 1]) / (2.0 * params.beta)
    return {"logQ": logQ, "logQ_residual": float(np.max(np.abs(logQ - logQ[::-1]))),
            "spectrum_residual": spec_res, "mu_half": float(mu_half)}


# ------------------------------------------------------------------ condensate

def _zero_mode_matrix(sector: SpinSector) -> np.ndarray:
    """N_0 = L^-d sum_{x,y} s+_x s-_y in the sector basis (occupation bit ops)."""
    occ, codes = sector.basis, sector.codes
    V = sector.volume
    w = 2 ** np.arange(V, dtype=np.int64)
    M = np.zeros((sector.dim, sector.dim))
    M[np.diag_indices(sector.dim)] = occ.sum(1)
    for x in range(V):
        for y in range(V):
            if x == y:
                continue
            src = np.nonzero((occ[:, y] == 1) & (occ[:, x] == 0))[0]
            tgt = np.searchsorted(codes, codes[src] + w[x] - w[y])
            M[tgt, src] += 1.0
    return M / V


def _planar_matrix(sector: SpinSector) -> np.ndarray:
    """(S^1)^2 + (S^2)^2 from Pauli Kronecker products, projected on the sector."""
    V = sector.volume
    if V > 20:
        raise TooLarge("Kronecker construction limited to L^d <= 20 sites")
    s1 = sparse.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex))
    s2 = sparse.csr_matrix(np.array([[0, -1j], [1j, 0]]))
    one = sparse.identity(2, dtype=complex, format="csr")

    def total(op):
        acc = sparse.csr_matrix((2**V, 2**V), dtype=complex)
        for x in range(V):
            m = sparse.identity(1, dtype=complex, format="csr")
            for s in range(V):
                m = sparse.kron(m, op if s == x else one, format="csr")
            acc = acc + m
        return 0.5 * acc

    S1, S2 = total(s1), total(s2)
    P = (S1 @ S1 + S2 @ S2).tocsr()
    # Kronecker index: site s is the (V-1-s)-th binary digit, digit 0 = spin up = occupied
    idx = ((1 - sector.basis) * (2 ** np.arange(V - 1, -1, -1, dtype=np.int64))).sum(1)
    block = P[idx][:, idx].toarray()
    if np.max(np.abs(block.imag)) > 1e-12:
        raise ArithmeticError("planar spin operator not real on the sector")
    return block.real


def _thermal(evals, evecs, A, beta):
    w = np.exp(-beta * (evals - evals[0]))
    w /= w.sum()
    diag = np.einsum("ij,ik,kj->j", evecs, A, evecs)
    return float(w @ diag)


def condensate_observable(sector: SpinSector, beta: float | None = None) -> dict:
    """Thermal <N_0> in a hard-core sector, two independent routes.

    Direct: N_0 = L^-d sum_{x,y} s+_x s-_y from bit operations.
    Spin: (S^1)^2 + (S^2)^2 = S+S- - S^3 = N_0 L^d - (N - L^d/2), so
    N_0 = [(S^1)^2 + (S^2)^2 + S^3] / L^d. At half filling S^3 = 0 and the
    planar term alone gives N_0 L^d.
    """
    if not sector.params.hard_core:
        raise DomainError("condensate observable is defined for the hard-core gas")
    beta = sector.params.beta if beta is None else beta
    V, N = sector.volume, sector.N
    evals, evecs = sector_spectrum(sector, vectors=True)
    n0 = _thermal(evals, evecs, _zero_mode_matrix(sector), beta)
    planar = _thermal(evals, evecs, _planar_matrix(sector), beta)
    s3 = N - V / 2
    n0_spin = (planar + s3) / V
    casimir = planar + s3 * s3
    cap = V * V / 4 + V / 2
    rho = N / V
    return {
        "N": N, "n0": n0, "n0_spin": n0_spin,
        "route_residual": abs(n0 - n0_spin),
        "planar_over_volume": planar / V,
        "casimir": casimir, "casimir_slack": cap - casimir,
        # bound written with N_0 L^d in place of the planar term
        "uncorrected_slack": cap - (n0 * V + N * N + V * V / 4 - N * V),
        "rho0_bound": rho * (1 - rho) + rho / V,
        "rho0_slack": rho * (1 - rho) + rho / V - n0 / V,
    }


# ------------------------------------------------------------------ one-body probe

def sample_scatterers(box: float, d: int, count: int, min_dist: float,
                      rng: np.random.Generator, max_attempts: int = 100000) -> np.ndarray:
    """Random sequential addition of hard spheres on the torus [0, box)^d."""
    pts = np.empty((0, d))
    tries = 0
    while len(pts) < count:
        tries += 1
        if tries > max_attempts:
            raise DomainError(f"placed {len(pts)} of {count} points in {max_attempts} attempts")
        p = rng.uniform(0.0, box, size=d)
        if len(pts):
            diff = pts - p
            diff -= box * np.round(diff / box)
            if np.min(np.einsum("ij,ij->i", diff, diff)) < min_dist**2:
                continue
        pts = np.vstack([pts, p])
    return pts


def lattice_laplacian(L: int, d: int) -> sparse.csr_matrix:
    """-Delta on the torus: 2d on the diagonal, -1 per neighbour direction."""
    V = L**d
    idx = np.arange(V).reshape((L,) * d)
    A = sparse.identity(V, format="csr") * (2.0 * d)
    for j in range(d):
        for s in (1, -1):
            nb = np.roll(idx, -s, axis=j).ravel()
            A = A - sparse.csr_matrix((np.ones(V), (idx.ravel(), nb)), shape=(V, V))
    return A.tocsr()


def one_body_spectrum(L: int, d: int, scatterers, potential: PotentialSpec, beta: float,
                      n_values, n_eigs: int = 64, tol: float = 1e-12) -> dict:
    """Spectrum of -Delta + V on the grid, V(x) = sum_s u_L(x - s).

    Returns eigenvalues, ground state (sign fixed positive), overlaps with the
    constant state, ||phi_0||_1^2 / L^d and the curve
    sum_{j>=1} exp(-n beta (e_j - e_0)) over n_values.
    """
    if int(L) != L or L < 1 or int(d) != d or d < 1:
        raise DomainError(f"grid must have positive integer side and dimension, got L={L}, d={d}")
    V = L**d
    grid = np.indices((L,) * d).reshape(d, -1).T.astype(float)
    sc = np.asarray(scatterers, dtype=float).reshape(-1, d)
    pot = np.zeros(V)
    if len(sc) and not isinstance(potential, Zero):
        for s in sc:
            pot += periodize_potential(potential, grid - s, float(L), tol=tol)
    H = lattice_laplacian(L, d) + sparse.diags(pot)
    if V <= DENSE_MAX:
        ev, vec = linalg.eigh(H.toarray())
        partial = False
    else:
        k = min(n_eigs, V - 2)
        ev, vec = splinalg.eigsh(H, k=k, which="SA")
        o = np.argsort(ev)
        ev, vec = ev[o], vec[:, o]
        partial = True
    phi0 = vec[:, 0] * np.sign(vec[:, 0].sum())
    overlaps = (vec.sum(0) / math.sqrt(V))**2
    n = np.asarray(n_values, dtype=float)
    gaps = ev[1:] - ev[0]
    decay = np.exp(-np.outer(n, beta * gaps)).sum(1)
    return {"eigenvalues": ev, "ground_state": phi0, "overlaps": overlaps,
            "l1_sq": float(np.abs(phi0).sum()**2 / V), "n_values": n, "decay": decay,
            "potential": pot, "perron_positive": bool(np.all(phi0 > 0)), "partial": partial}
