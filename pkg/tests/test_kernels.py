import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import constants, optimize

from bosecycles import kernels as K


# ---------------------------------------------------------------- oracles

def theta_bruteforce(a, zmax=40):
    return math.fsum(math.exp(-math.pi * a * z * z) for z in range(-zmax, zmax + 1))


def q_bruteforce_3d(n, l_over_lam, zmax=20):
    a = n / l_over_lam**2
    z = np.arange(-zmax, zmax + 1)
    z2 = z[:, None, None]**2 + z[None, :, None]**2 + z[None, None, :]**2
    return math.fsum(np.exp(-np.pi * a * z2).ravel())


def zeta_bruteforce(s, nmax=10**7):
    total = 0.0
    for start in range(1, nmax + 1, 10**6):
        n = np.arange(start, min(start + 10**6, nmax + 1), dtype=float)
        total += np.sum(n**-s)
    # Euler-Maclaurin tail beyond nmax
    N = float(nmax)
    tail = N**(1 - s) / (s - 1) - N**-s / 2 + s * N**(-s - 1) / 12
    return total + tail


# ---------------------------------------------------------------- wavelength

def test_natural_units_passthrough():
    p = K.SystemParams(d=3, L=2.0, lam=1.0, N=8)
    assert K.thermal_wavelength(p) == 1.0


def test_physical_wavelength_matches_codata_formula():
    m = 4.002602 * constants.physical_constants["atomic mass constant"][0]
    for T in (1.5, 2.17, 4.22):
        lam = constants.h / math.sqrt(2 * math.pi * m * constants.k * T) * 1e10
        p = K.SystemParams(d=3, L=10.0, units="physical", temperature=T)
        assert K.thermal_wavelength(p) == pytest.approx(lam, rel=1e-12)


def test_wavelength_scales_as_inverse_sqrt_temperature():
    c = K.wavelength_constant()
    p = K.SystemParams(d=3, L=10.0, units="physical", temperature=4.0)
    assert K.thermal_wavelength(p) == pytest.approx(c / 2.0, rel=1e-14)


def test_nonpositive_temperature_rejected():
    with pytest.raises(K.DomainError):
        K.SystemParams(d=3, L=1.0, units="physical", temperature=0.0)
    with pytest.raises(K.DomainError):
        K.SystemParams(d=3, L=1.0, lam=-1.0)


def test_density_and_count_are_exclusive():
    with pytest.raises(K.DomainError):
        K.SystemParams(d=3, L=2.0, lam=1.0, N=8, rho=1.0)
    p = K.SystemParams(d=3, L=2.0, lam=1.0, rho=1.0)
    assert p.n_particles == 8
    p = K.SystemParams(d=3, L=2.0, lam=1.0, N=8)
    assert p.density == pytest.approx(1.0)


# ---------------------------------------------------------------- theta

def test_theta_large_argument():
    assert K.theta_sum(50.0) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("a", [0.1, 0.5, 1.0, 2.0, 7.0])
def test_theta_against_bruteforce(a):
    assert K.theta_sum(a) == pytest.approx(theta_bruteforce(a), rel=1e-14)


@pytest.mark.parametrize("a", [0.1, 0.5, 2.0, 7.0])
def test_theta_duality_examples(a):
    assert abs(K.theta_sum(a) - a**-0.5 * K.theta_sum(1 / a)) < 1e-12


def test_theta_duality_grid():
    a = np.logspace(-3, 3, 61)
    lhs = K.theta_sum(a)
    rhs = a**-0.5 * K.theta_sum(1 / a)
    assert np.max(np.abs(lhs - rhs) / lhs) < 1e-12


def test_log_theta_consistent():
    a = np.logspace(-3, 3, 31)
    assert np.allclose(np.exp(K.log_theta(a)), K.theta_sum(a), rtol=1e-14)


def test_theta_rejects_nonpositive():
    with pytest.raises(K.DomainError):
        K.theta_sum(0.0)
    with pytest.raises(K.DomainError):
        K.theta_sum(np.array([1.0, -2.0]))


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1e-3, max_value=1e3))
def test_theta_duality_property(a):
    assert abs(K.theta_sum(a) - a**-0.5 * K.theta_sum(1 / a)) <= 1e-12 * K.theta_sum(a)


# ---------------------------------------------------------------- zeta

def test_zeta_values():
    assert K.zeta(2.0) == pytest.approx(math.pi**2 / 6, rel=1e-14)
    assert abs(K.zeta(1.5) - 2.612) < 1e-3


def test_zeta_against_truncated_sum():
    assert K.zeta(2.5) == pytest.approx(zeta_bruteforce(2.5), rel=1e-12)


def test_zeta_domain():
    with pytest.raises(K.DomainError):
        K.zeta(1.0)
    with pytest.raises(K.DomainError):
        K.zeta(0.5)


# ---------------------------------------------------------------- q_n

def test_q_cycle_bruteforce():
    p = K.SystemParams.natural(d=3, l_over_lam=2.0, N=8)
    assert K.q_cycle(4, p) == pytest.approx(q_bruteforce_3d(4, 2.0), rel=1e-12)


def test_q_cycle_large_box_limit():
    p = K.SystemParams.natural(d=3, l_over_lam=50.0)
    assert K.q_cycle(4, p) == pytest.approx(50.0**3 * 4**-1.5, rel=1e-2)


def test_q_cycle_strictly_decreasing():
    p = K.SystemParams.natural(d=3, l_over_lam=3.0)
    q = K.q_cycle(np.arange(1, 21), p)
    assert np.all(np.diff(q) < 0)


@pytest.mark.parametrize("ratio", [0.5, 1.0, 1.5, 2.0, 5.0])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_q_cycle_both_forms_agree(ratio, d):
    p = K.SystemParams.natural(d=d, l_over_lam=ratio)
    n = np.arange(1, 60)
    winding, dual = K.q_cycle_forms(n, p)
    assert np.max(np.abs(winding / dual - 1)) < 1e-12
    assert np.allclose(K.q_cycle(n, p), winding, rtol=1e-12)


def test_q_cycle_tends_to_one():
    p = K.SystemParams.natural(d=3, l_over_lam=2.0)
    assert K.q_cycle(10**4, p) == pytest.approx(1.0, abs=1e-12)
    assert np.all(K.q_minus_one(np.arange(1, 200), p) > 0.0)
    n = np.arange(1, 30)
    assert np.allclose(K.q_minus_one(n, p), K.q_cycle(n, p) - 1, rtol=1e-10)


# ---------------------------------------------------------------- potentials

def test_lennard_jones_shape():
    lj = K.LennardJones(epsilon=10.22, d0=2.556)
    assert abs(lj(2.556)) < 1e-12
    res = optimize.minimize_scalar(lj, bounds=(2.6, 4.0), method="bounded",
                                   options={"xatol": 1e-10})
    assert res.x == pytest.approx(2**(1 / 6) * 2.556, rel=1e-6)
    assert res.fun == pytest.approx(-10.22, rel=1e-10)


def test_lennard_jones_positive_parameters():
    with pytest.raises(K.DomainError):
        K.LennardJones(epsilon=-1.0, d0=1.0)


def test_zero_potential_periodized():
    x = np.array([0.3, -0.1, 0.2])
    assert K.periodize_potential(K.Zero(), x, 2.0) == 0.0


def test_soft_sphere_periodized_against_wide_sum():
    L = 4.0
    u = K.SoftSphere(amplitude=2.5, range=L / 4)
    for x in (np.zeros(3), np.array([0.7, -0.3, 0.9]), np.array([1.9, 1.9, -1.9])):
        z = np.arange(-5, 6)
        zz = np.stack(np.meshgrid(z, z, z, indexing="ij"), -1).reshape(-1, 3)
        wide = u(np.linalg.norm(x + L * zz, axis=1)).sum()
        narrow = K.periodize_potential(u, x, L, shells=1)
        assert abs(narrow - wide) < 1e-12


def test_lennard_jones_periodized_tail():
    lj = K.LennardJones(epsilon=1.0, d0=1.0)
    L = 20.0
    x = np.array([1.0, 0.0, 0.0])
    val = K.periodize_potential(lj, x, L, tol=1e-10)
    assert abs(val) < 1e-4
    # image sum on a very wide cube as oracle
    z = np.arange(-25, 26)
    zz = np.stack(np.meshgrid(z, z, z, indexing="ij"), -1).reshape(-1, 3)
    wide = math.fsum(lj(np.linalg.norm(x + L * zz, axis=1)))
    assert abs(val - wide) < 1e-10 + K.LennardJones(1.0, 1.0).tail_bound(L, 25, 3)


@pytest.mark.parametrize("L", [6.0, 10.0])
def test_declared_tail_bound_holds(L):
    lj = K.LennardJones(epsilon=1.0, d0=1.0)
    x = np.array([1.3, -0.4, 2.0])
    z = np.arange(-30, 31)
    zz = np.stack(np.meshgrid(z, z, z, indexing="ij"), -1).reshape(-1, 3)
    wide = math.fsum(lj(np.linalg.norm(x + L * zz, axis=1)))
    for shells in (2, 3, 5):
        narrow = K.periodize_potential(lj, x, L, shells=shells, tol=np.inf)
        assert abs(narrow - wide) <= lj.tail_bound(L, shells, 3) + 1e-14


def test_gaussian_tail_bound_holds():
    g = K.Gaussian(amplitude=1.0, width=1.5)
    L = 4.0
    x = np.array([1.0, 1.0, -1.5])
    z = np.arange(-12, 13)
    zz = np.stack(np.meshgrid(z, z, z, indexing="ij"), -1).reshape(-1, 3)
    wide = math.fsum(g(np.linalg.norm(x + L * zz, axis=1)))
    for shells in (2, 3):
        narrow = K.periodize_potential(g, x, L, shells=shells, tol=np.inf)
        assert abs(narrow - wide) <= g.tail_bound(L, shells, 3) + 1e-14


def test_hard_core_contact_signalled():
    lj = K.LennardJones(epsilon=1.0, d0=1.0)
    with pytest.raises(K.HardCoreContact):
        K.periodize_potential(lj, np.zeros(3), 10.0)


def test_lattice_potential_not_periodizable():
    with pytest.raises(K.DomainError):
        K.periodize_potential(K.LatticeNN(u0=np.inf, c=0.0), np.zeros(3), 4.0)
