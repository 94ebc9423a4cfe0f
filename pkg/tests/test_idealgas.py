import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bosecycles import idealgas as ig
from bosecycles import kernels as K

Z32 = K.zeta(1.5)


# ---------------------------------------------------------------- oracles

def permutation_oracle(params):
    """Q_N and P(xi_1 = n) by walking every permutation of S_N."""
    N = params.n_particles
    q = {n: K.q_cycle(n, params) for n in range(1, N + 1)}
    Q = 0.0
    mass = np.zeros(N + 1)
    for perm in itertools.permutations(range(N)):
        seen = [False] * N
        w = 1.0
        len0 = 0
        for s in range(N):
            if seen[s]:
                continue
            n, j = 0, s
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                n += 1
            w *= q[n]
            if s == 0:
                len0 = n
        Q += w
        mass[len0] += w
    return Q / math.factorial(N), mass[1:] / Q


def polylog_bruteforce(s, z, nterms=10**6):
    n = np.arange(1, nterms + 1, dtype=float)
    return np.sum(z**n / n**s)


def bisect(f, lo, hi, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def natural(ratio, N, d=3):
    return K.SystemParams.natural(d=d, l_over_lam=ratio, N=N)


def ladder_params(rho_lam_d, N, d=3):
    return natural((N / rho_lam_d)**(1 / d), N, d)


# ---------------------------------------------------------------- recursion

def test_empty_and_single():
    assert list(ig.recursion_table(natural(2.0, 0)).logQ) == [0.0]
    p = natural(2.0, 1)
    assert ig.recursion_table(p).logQ[1] == pytest.approx(K.log_q_cycle(1, p), rel=1e-15)


@pytest.mark.parametrize("ratio", [1.0, 1.5, 2.0, 3.0])
@pytest.mark.parametrize("N", [2, 3, 4, 5, 6])
def test_recursion_matches_permutation_walk(ratio, N):
    p = natural(ratio, N)
    Q, _ = permutation_oracle(p)
    assert ig.recursion_table(p).logQ[N] == pytest.approx(math.log(Q), rel=1e-12)


def test_brute_force_small_cases():
    p = natural(1.7, 2)
    q1, q2 = K.q_cycle([1, 2], p)
    assert ig.brute_force_partition(p) == pytest.approx(math.log((q1 * q1 + q2) / 2), rel=1e-14)
    p1 = natural(1.7, 1)
    assert ig.brute_force_partition(p1) == pytest.approx(K.log_q_cycle(1, p1), rel=1e-14)


@pytest.mark.parametrize("ratio", [1.2, 1.5, 2.0, 4.0])
@pytest.mark.parametrize("N", range(1, 11))
def test_recursion_matches_partition_sum(ratio, N):
    p = natural(ratio, N)
    exact = ig.brute_force_partition(p)
    assert abs(ig.recursion_table(p).logQ[N] - exact) <= 1e-10 * abs(exact) + 1e-14


def test_brute_force_refuses_large_N():
    with pytest.raises(ig.TooLarge):
        ig.brute_force_partition(natural(2.0, 11))


def test_integer_partitions_count():
    # partition numbers p(n)
    counts = [sum(1 for _ in ig.integer_partitions(n)) for n in range(1, 13)]
    assert counts == [1, 2, 3, 5, 7, 11, 15, 22, 30, 42, 56, 77]


# ---------------------------------------------------------------- occupation sum

def test_occupation_single_particle():
    p = natural(1.5, 1)
    res = ig.occupation_partition(p, cutoff_sq=10)
    q1 = K.q_cycle(1, p)
    assert math.exp(res.logQ) <= q1 * (1 + 1e-14)
    assert q1 - math.exp(res.logQ) <= res.abs_bound * (1 + 1e-12) + 1e-14


def test_occupation_ground_state_limit():
    p = natural(0.05, 3)
    res = ig.occupation_partition(p, cutoff_sq=2)
    assert math.exp(res.logQ) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("N,ratio,cut", [(4, 1.2, 8), (2, 1.5, 12), (3, 1.0, 10), (4, 0.8, 6)])
def test_occupation_agrees_within_bound(N, ratio, cut):
    p = natural(ratio, N)
    res = ig.occupation_partition(p, cutoff_sq=cut)
    Q_rec = math.exp(ig.recursion_table(p).logQ[N])
    Q_occ = math.exp(res.logQ)
    assert Q_occ <= Q_rec * (1 + 1e-12)
    assert Q_rec - Q_occ <= res.abs_bound * (1 + 1e-9) + 1e-12 * Q_rec


def test_occupation_refuses_huge_state_space():
    with pytest.raises(ig.TooLarge):
        ig.occupation_partition(natural(3.0, 6), cutoff_sq=60)
    with pytest.raises(ig.TooLarge):
        ig.occupation_partition(natural(3.0, 7), cutoff_sq=1)


# ---------------------------------------------------------------- increment identity

def test_increment_identity_constant_sequence():
    a = np.ones(50)
    assert ig.increment_identity_check(a, 50) == 0.0


def test_increment_identity_on_cycle_weights():
    p = natural(2.0, 200)
    a = K.q_cycle(np.arange(1, 201), p)
    A = ig.generalized_recursion(a, 200)
    assert ig.increment_identity_check(a, 200) < 1e-10 * np.max(np.abs(A))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=2.0), min_size=100, max_size=100))
def test_increment_identity_random_sequences(vals):
    a = np.array(vals)
    A = ig.generalized_recursion(a, 100)
    assert ig.increment_identity_check(a, 100) <= 1e-12 * max(np.max(np.abs(A)), 1.0)


def test_increment_table_positive_and_bounded_below():
    p = natural(2.0, 50)
    lh = ig.log_increment_table(p)
    lq = ig.recursion_table(p).logQ
    # Q_N - Q_{N-1} recomputed directly where the subtraction is still accurate
    direct = np.exp(lq[1:16]) - np.exp(lq[:15])
    assert np.allclose(np.exp(lh[1:16]), direct, rtol=1e-9)
    q1m = K.q_minus_one(1, p)
    N = np.arange(1, 51)
    floor = N * math.log(q1m) - np.array([math.lgamma(n + 1) for n in N])
    assert lh[1] == pytest.approx(floor[0], rel=1e-13)
    assert np.all(lh[2:] > floor[1:])


# ---------------------------------------------------------------- exact cycle law

def test_cycle_distribution_single_particle():
    dist = ig.cycle_distribution_exact(natural(2.0, 1))
    assert list(dist.mass) == [1.0]
    assert dist.provenance == "exact"


@pytest.mark.parametrize("ratio,N", [(1.5, 5), (2.0, 6), (3.0, 4)])
def test_cycle_distribution_matches_permutation_walk(ratio, N):
    p = natural(ratio, N)
    _, mass = permutation_oracle(p)
    assert np.allclose(ig.cycle_distribution_exact(p).mass, mass, rtol=1e-11, atol=1e-15)


def test_cycle_distribution_matches_partition_oracle():
    p = natural(2.0, 8)
    logQN = ig.brute_force_partition(p)
    expect = []
    for n in range(1, 9):
        logrest = ig.brute_force_partition(p.replace(N=8 - n)) if n < 8 else 0.0
        expect.append(math.exp(K.log_q_cycle(n, p) + logrest - logQN) / 8)
    assert np.allclose(ig.cycle_distribution_exact(p).mass, expect, rtol=1e-10)


@pytest.mark.parametrize("rho_lam", [0.5, 2 * Z32])
@pytest.mark.parametrize("N", [64, 216, 1000, 2000])
def test_exact_distribution_sums_to_one(rho_lam, N):
    dist = ig.cycle_distribution_exact(ladder_params(rho_lam, N))
    assert np.all(dist.mass >= 0)
    assert abs(dist.mass.sum() - 1) < 1e-12


def test_classical_limit_concentrates_on_one():
    dist = ig.cycle_distribution_exact(natural(200.0, 10))
    assert dist.mass[0] > 1 - 1e-5


# ---------------------------------------------------------------- table invariants

@pytest.mark.parametrize("ratio,N", [(2.0, 2000), (1.0, 2000), (4.0, 1000)])
def test_table_monotone_and_concave(ratio, N):
    p = natural(ratio, N)
    lq = ig.recursion_table(p).logQ
    assert lq[0] == 0.0
    # strict increase lives in the increment table; the log table itself
    # saturates at fixed L and may only wobble by an ulp
    assert np.all(np.isfinite(ig.log_increment_table(p)[1:]))
    assert np.all(np.diff(lq) >= -1e-14 * np.maximum(1.0, np.abs(lq[1:])))
    assert np.max(np.diff(lq, 2)) <= 1e-12


@pytest.mark.parametrize("N", [64, 512, 2000])
def test_scaling_table_increments_positive(N):
    p = ladder_params(2 * Z32, N)
    lq = ig.recursion_table(p).logQ
    lh = ig.log_increment_table(p)
    assert np.all(np.isfinite(lh))
    assert np.all(np.diff(lq) >= -1e-14 * np.maximum(1.0, np.abs(lq[1:])))
    assert np.max(np.diff(lq, 2)) <= 1e-12
    # early increments are resolvable directly and must be strictly positive
    assert np.all(np.diff(lq[:N // 4]) > 0)


# ---------------------------------------------------------------- chemical potential

def test_polylog_series_against_direct_sum():
    for s, z in [(1.5, 0.3), (2.5, 0.9), (1.5, 0.99)]:
        assert ig.polylog(s, z) == pytest.approx(polylog_bruteforce(s, z), rel=1e-12)


def test_polylog_branches_meet():
    for s in (1.5, 2.5, 2.0, 3.0):
        z = 0.9999
        series = ig._polylog_series(s, z)
        expansion = ig._polylog_near_one(s, -math.log(z))
        assert series == pytest.approx(expansion, rel=1e-12)
        g = ig.polylog(s, np.array([0.99989, 0.99991]))
        assert g[1] > g[0]
        assert ig.polylog(s, 1.0) == pytest.approx(K.zeta(s), rel=1e-14)
        assert ig.polylog(s, 1 - 1e-9) < K.zeta(s)


def test_mu_saturated_at_boundary():
    sol = ig.mu_ideal(Z32, beta=1.0, d=3)
    assert sol.saturated and sol.mu == 0.0
    sol = ig.mu_ideal(Z32 * (1 - 1e-9), beta=1.0, d=3)
    assert not sol.saturated and sol.mu < 0


def test_mu_dilute_asymptote():
    sol = ig.mu_ideal(0.01, beta=1.0, d=3)
    assert sol.beta_mu == pytest.approx(math.log(0.01), rel=1e-2)


def test_mu_against_independent_bisection():
    sol = ig.mu_ideal(1.0, beta=2.0, d=3)
    n = np.arange(1, 10**6 + 1, dtype=float)
    slog = 1.5 * np.log(n)
    x = bisect(lambda x: np.sum(np.exp(n * x - slog)) - 1.0, -5.0, 0.0, iters=60)
    assert sol.beta_mu == pytest.approx(x, abs=1e-9)
    assert sol.mu == pytest.approx(x / 2.0, abs=1e-9)


def test_mu_domain():
    with pytest.raises(K.DomainError):
        ig.mu_ideal(1.0, beta=1.0, d=2)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=1e-3, max_value=5.0), st.floats(min_value=1e-3, max_value=5.0))
def test_mu_monotone_in_density(r1, r2):
    lo, hi = sorted((r1, r2))
    a, b = ig.mu_ideal(lo, 1.0, 3), ig.mu_ideal(hi, 1.0, 3)
    assert a.beta_mu <= b.beta_mu + 1e-12
    assert a.saturated == (lo >= Z32) and b.saturated == (hi >= Z32)


# ---------------------------------------------------------------- limit law

def test_limit_unsaturated_total_one():
    dist = ig.limit_cycle_distribution(Z32 / 2, beta=1.0, d=3, n_max=50)
    assert dist.total == pytest.approx(1.0, abs=1e-10)
    assert dist.provenance == "limit"


def test_limit_saturated_half():
    dist = ig.limit_cycle_distribution(2 * Z32, beta=1.0, d=3, n_max=100)
    assert dist.total == pytest.approx(0.5, abs=1e-10)
    assert 1 - dist.total == pytest.approx(0.5, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.05, max_value=10.0), st.sampled_from([3, 4, 5]))
def test_limit_total_mass(rho_lam, d):
    dist = ig.limit_cycle_distribution(rho_lam, beta=1.0, d=d, n_max=30)
    assert dist.total == pytest.approx(min(1.0, K.zeta(d / 2) / rho_lam), abs=1e-10)
    assert dist.total <= 1 + 1e-12


def test_finite_size_converges_to_limit():
    lim = ig.limit_cycle_distribution(2 * Z32, 1.0, 3, n_max=10).mass
    errs = []
    for N in (64, 216, 512):
        m = ig.cycle_distribution_exact(ladder_params(2 * Z32, N)).mass[:10]
        errs.append(np.abs(m - lim))
    errs = np.array(errs)
    assert np.all(errs[1] < errs[0]) and np.all(errs[2] < errs[1])


# ---------------------------------------------------------------- condensate fraction

def test_condensate_single_particle():
    # one particle: the k = 0 occupation probability 1/q_1
    p = natural(2.0, 1)
    assert ig.condensate_fraction_finite(p) == pytest.approx(1 / K.q_cycle(1, p), rel=1e-14)
    assert ig.condensate_fraction_finite(natural(0.05, 1)) == pytest.approx(1.0, abs=1e-12)


def test_condensate_low_temperature():
    assert ig.condensate_fraction_finite(natural(0.05, 20)) == pytest.approx(1.0, abs=1e-12)


def test_condensate_trend():
    vals = [ig.condensate_fraction_finite(ladder_params(2 * Z32, N)) for N in (64, 216, 512)]
    assert vals[0] > vals[1] > vals[2] > 0.5


# ---------------------------------------------------------------- tail scans

def test_tail_beyond_N_is_zero():
    p = ladder_params(2 * Z32, 64)
    t = ig.tail_probability(p, [1.0, 1.5])
    assert t[1.0] == 0.0 and t[1.5] == 0.0


def test_tail_lower_bound_gap_shrinks():
    # rho_0/rho - eps = 0.4 is approached from above
    gaps = []
    for N in (64, 216, 512):
        t = ig.tail_probability(ladder_params(2 * Z32, N), [0.1])[0.1]
        gaps.append(t - 0.4)
    assert 0 < gaps[2] < gaps[1] < gaps[0]


def test_tail_absolute_cutoff():
    p = ladder_params(2 * Z32, 64)
    dist = ig.cycle_distribution_exact(p)
    t = ig.tail_probability(p, [8], absolute=True)[8]
    assert t == pytest.approx(dist.mass[8:].sum(), rel=1e-14)


def test_scan_rows():
    rows = ig.finite_size_scan(2 * Z32, d=3, ladder=(64, 216, 512, 1000), eps=0.1)
    assert [r["N"] for r in rows] == [64, 216, 512, 1000]
    le = [r["p_le_K"] for r in rows]
    assert all(abs(b - 0.5) < abs(a - 0.5) for a, b in zip(le, le[1:]))
    for r in rows:
        assert r["limit_deficit"] == pytest.approx(0.5, abs=1e-10)
        assert r["K"] == math.isqrt(r["N"])


# ---------------------------------------------------------------- free energy, fixed L

def test_fixed_box_limit_forms_agree():
    prod, series = ig.fixedL_limit(natural(2.0, None))
    assert prod == pytest.approx(series, abs=1e-10)
    q1 = K.q_cycle(1, natural(2.0, None))
    assert prod > q1 - 1


def test_fixed_box_limit_is_large_N_value():
    p = natural(2.0, 400)
    prod, _ = ig.fixedL_limit(p)
    assert ig.recursion_table(p).logQ[-1] == pytest.approx(prod, abs=1e-10)


def test_f0_limit():
    f = ig.f0_limit(2 * Z32, beta=2.0, d=3, lam=1.3)
    assert -2.0 * f * 1.3**3 == pytest.approx(K.zeta(2.5), rel=1e-14)
    with pytest.raises(K.DomainError):
        ig.f0_limit(1.0, beta=1.0, d=3)


def test_ideal_free_energy_continuous_at_critical_density():
    below = ig.ideal_free_energy(Z32 * (1 - 1e-10), 1.0, 3)
    at = ig.ideal_free_energy(Z32, 1.0, 3)
    assert below[1] is False and at[1] is True
    assert below[0] == pytest.approx(at[0], rel=1e-8)


# ---------------------------------------------------------------- resolution of unity

def test_resolution_small():
    assert ig.resolution_identity_check(1) == 0.0
    assert ig.resolution_identity_check(5) < 1e-14


@pytest.mark.parametrize("N", range(1, 13))
def test_resolution_up_to_twelve(N):
    assert ig.resolution_identity_check(N) < 1e-12
    assert ig.resolution_identity_check(N, exact=True) == 0.0
    assert ig.permutation_count_identity(N) == math.factorial(N)


def test_resolution_refuses_large():
    with pytest.raises(ig.TooLarge):
        ig.resolution_identity_check(13)


def test_marked_cycle_uniform_over_permutations():
    # the cycle through a marked element of a uniform random permutation has uniform length
    N = 6
    counts = np.zeros(N)
    for perm in itertools.permutations(range(N)):
        n, j = 1, perm[0]
        while j != 0:
            j = perm[j]
            n += 1
        counts[n - 1] += 1
    assert np.all(counts == math.factorial(N) // N)
