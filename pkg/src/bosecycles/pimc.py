"""Path-integral Monte Carlo for bosons on the torus.

State: a permutation pi, one strand of M+1 time slices per particle and an
integer winding vector per strand.  Lengths are in units of the thermal
wavelength at beta, imaginary time in units of beta, so a free step over a
time fraction t has variance t / (2 pi) per coordinate.

Strands are stored unwrapped.  Slice 0 of strand i is the particle position
X_i in the primary cell [0, L)^d and

    paths[i, M] = X_{pi(i)} + L * windings[i].

The sampled measure is prod_i prod_s g(step) * exp(-dtau sum_{s<M} U(s)), the
discretized Feynman-Kac weight (trapezoid rule; the configuration at time
beta is a relabeling of the one at time 0, so U(beta) = U(0)).

Moves
    swap       pi -> pi o (i j), both strands redrawn from the free bridge
               law; acceptance is the ratio of torus kernels times
               exp(-dS).  Merges or splits cycles.
    bridge     resample X_i together with the two strands meeting at it (a
               2-beta free bridge from X_{pi^-1(i)} to X_{pi(i)}); for a
               1-cycle the strand alone is redrawn.  Heat bath, exp(-dS).
    translate  rigid shift of a whole cycle, exp(-dS).
    relabel    exchange the labels of two particles; an exact symmetry.

Windings are drawn from the discrete Gaussian truncated at |z_j| <= zmax;
with zmax = 6 the dropped mass is below e^{-36 pi (L/lambda)^2} per axis.
"""
from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .idealgas import CycleDistribution
from .kernels import (DomainError, HardCoreContact, LatticeNN, PotentialSpec, SystemParams,
                      Zero, image_shells, periodize_potential, q_cycle)

__all__ = [
    "PIMCConfig", "WorldLines", "Proposal", "Chain", "RunStats",
    "sample_bridge", "log_torus_kernel", "action", "cycle_counts",
    "run", "run_chains", "merge_stats", "hotelling_test", "cycle_chi2",
    "estimate_cycles", "estimate_mu_ratio", "long_cycle_mass",
    "save_checkpoint", "load_checkpoint",
]

MOVES = ("swap", "bridge", "translate", "relabel")
CHECKPOINT_MAGIC = b"BCWL"
CHECKPOINT_VERSION = 1


def _potential_dict(u) -> dict:
    d = dataclasses.asdict(u)
    d["kind"] = u.kind
    return d


@dataclass(frozen=True)
class PIMCConfig:
    d: int = 3
    N: int = 8
    L_over_lambda: float = 2.0
    beta: float = 1.0
    M: int = 32
    potential: PotentialSpec = Zero()
    u_max: float = math.inf
    image_tol: float = 1e-8
    sweeps: int = 10**5
    discard: float = 0.2
    batches: int = 32
    moves: tuple = (("swap", 0.5), ("bridge", 0.3), ("translate", 0.1), ("relabel", 0.1))
    seed: int = 0
    zmax: int = 6
    trace_points: int = 1000

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError("dimension must be a positive integer")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError("need at least one particle")
        if not self.L_over_lambda > 0 or not self.beta > 0:
            raise DomainError("L/lambda and beta must be positive")
        if self.M < 2 or self.M & (self.M - 1):
            raise DomainError(f"M must be a power of two >= 2, got {self.M}")
        if isinstance(self.potential, LatticeNN):
            raise DomainError("lattice couplings cannot drive continuum paths")
        if not 0 <= self.discard < 1:
            raise DomainError("discard fraction must lie in [0, 1)")
        if self.sweeps < 1 or self.batches < 2:
            raise DomainError("need at least one sweep and two batches")
        names = [m for m, _ in self.moves]
        if any(m not in MOVES for m in names) or not any(w > 0 for _, w in self.moves):
            raise DomainError(f"move mix must use {MOVES} with some positive weight")
        object.__setattr__(self, "moves", tuple((str(m), float(w)) for m, w in self.moves))

    @property
    def L(self) -> float:
        return float(self.L_over_lambda)

    @property
    def equilibration(self) -> int:
        return int(math.ceil(self.sweeps * self.discard / (1.0 - self.discard)))

    def replace(self, **kw) -> "PIMCConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out["potential"] = _potential_dict(self.potential)
        out["moves"] = [list(m) for m in self.moves]
        out["u_max"] = repr(float(self.u_max))
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class WorldLines:
    pi: np.ndarray          # (N,) int
    paths: np.ndarray       # (N, M+1, d) unwrapped
    windings: np.ndarray    # (N, d) int

    def copy(self) -> "WorldLines":
        return WorldLines(self.pi.copy(), self.paths.copy(), self.windings.copy())

    @property
    def M(self) -> int:
        return self.paths.shape[1] - 1

    def continuity_residual(self, L: float) -> float:
        """max |paths[i, M] - L w_i - paths[pi(i), 0]|."""
        gap = self.paths[:, -1] - L * self.windings - self.paths[self.pi, 0]
        return float(np.max(np.abs(gap)))

    def reduced(self, L: float) -> np.ndarray:
        return np.mod(self.paths, L)


# ------------------------------------------------------------------ free bridges

def _winding_logweights(delta, L, t, zmax, lam=1.0):
    z = np.arange(-zmax, zmax + 1)
    return z, -math.pi * (np.asarray(delta, float)[..., None] + L * z)**2 / (lam * lam * t)


def _log_kernel_rows(delta, L, t, zmax, lam=1.0):
    # one value per leading index; the last axis of delta is the coordinate
    _, lw = _winding_logweights(delta, L, t, zmax, lam)
    top = lw.max(axis=-1, keepdims=True)
    per_axis = np.log(np.exp(lw - top).sum(-1)) + top[..., 0]
    return per_axis.sum(-1) - 0.5 * delta.shape[-1] * math.log(lam * lam * t)


def log_torus_kernel(delta, L: float, t: float, zmax: int = 6, lam: float = 1.0) -> float:
    """log of prod_j lambda_t^-1 sum_{|z|<=zmax} exp(-pi (delta_j + L z)^2 / lambda_t^2)."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    return float(_log_kernel_rows(delta, L, t, zmax, lam))


def _levy_fill(path, var_step, rng):
    M = path.shape[0] - 1
    noise = rng.standard_normal((M - 1, path.shape[1]))
    used = 0
    h = M
    while h > 1:
        half = h // 2
        k = M // h
        path[half::h] = 0.5 * (path[0:M:h] + path[h::h]) + \
            math.sqrt(var_step * h / 4.0) * noise[used:used + k]
        used += k
        h = half
    return path


def sample_bridge(x, y, n_beta: float, M: int, L: float, rng: np.random.Generator,
                  zmax: int = 6, lam: float = 1.0):
    """Free bridge of duration n_beta (in units of beta) from x to an image of y.

    The winding z is drawn with weight exp(-pi |y - x + L z|^2 / lambda_t^2)
    per axis; the interior is filled by Levy midpoint refinement.  Returns
    (path of shape (M+1, d), z).
    """
    if M < 2 or M & (M - 1):
        raise DomainError(f"M must be a power of two >= 2, got {M}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z_grid, lw = _winding_logweights(y - x, L, n_beta, zmax, lam)
    lw = lw - lw.max(axis=-1, keepdims=True)
    w = np.exp(lw)
    cdf = np.cumsum(w, axis=-1)
    u = rng.random(x.shape[0]) * cdf[:, -1]
    z = z_grid[np.minimum((cdf < u[:, None]).sum(-1), len(z_grid) - 1)]
    path = np.empty((M + 1, x.shape[0]))
    path[0] = x
    path[M] = y + L * z
    _levy_fill(path, lam * lam * n_beta / (2.0 * math.pi * M), rng)
    return path, z


# ------------------------------------------------------------------ action

class _PairPotential:
    def __init__(self, u, L, d, u_max=math.inf, tol=1e-8, shells=None):
        self.u, self.L, self.u_max = u, float(L), float(u_max)
        self.zero = isinstance(u, Zero)
        self.shells = None if self.zero else (
            shells if shells is not None else image_shells(u, L, d, tol))
        self.tail = 0.0 if self.zero else float(u.tail_bound(L, self.shells, d))

    def __call__(self, sep):
        try:
            v = periodize_potential(self.u, sep, self.L, shells=self.shells)
        except HardCoreContact:
            return math.inf
        return np.minimum(v, self.u_max)

    def subset_energy(self, X, C):
        """sum over slices of the pair energy involving members of C; X is (N, M, d)."""
        if self.zero:
            return 0.0
        C = np.asarray(C)
        rest = np.setdiff1d(np.arange(X.shape[0]), C)
        total = 0.0
        if len(rest):
            total += float(np.sum(self(X[C][:, None] - X[rest][None])))
        if len(C) > 1:
            a, b = np.triu_indices(len(C), 1)
            total += float(np.sum(self(X[C[a]] - X[C[b]])))
        return total


def action(wl: WorldLines, u: PotentialSpec, L: float, beta: float,
           u_max: float = math.inf, tol: float = 1e-8, shells: int | None = None) -> float:
    """Trapezoid action dtau sum_{s<M} sum_{i<j} u_L(x_i(s) - x_j(s)).

    Error O(dtau^2) for paths with kinks at the slice-0 junction.  A pair at
    zero separation with a diverging potential gives +inf.
    """
    if isinstance(u, Zero):
        return 0.0
    N, M = wl.paths.shape[0], wl.M
    pot = _PairPotential(u, L, wl.paths.shape[2], u_max, tol, shells)
    if N < 2:
        return 0.0
    X = wl.paths[:, :M]
    a, b = np.triu_indices(N, 1)
    return float(beta / M * np.sum(pot(X[a] - X[b])))


def cycle_counts(pi) -> np.ndarray:
    """Entry n-1: number of particles sitting in cycles of length n."""
    pi = np.asarray(pi)
    N = len(pi)
    seen = np.zeros(N, bool)
    out = np.zeros(N, dtype=np.int64)
    for s in range(N):
        if seen[s]:
            continue
        n, j = 0, s
        while not seen[j]:
            seen[j] = True
            j = pi[j]
            n += 1
        out[n - 1] += n
    return out


def _cycle_of(pi, i):
    cyc = [i]
    j = pi[i]
    while j != i:
        cyc.append(j)
        j = pi[j]
    return np.array(cyc)


# ------------------------------------------------------------------ chain

@dataclass
class Proposal:
    state: WorldLines
    log_accept: float
    changed: tuple = ()
    delta_action: float = 0.0


class Chain:
    """A single Markov chain; strictly sequential."""

    def __init__(self, cfg: PIMCConfig, wl: WorldLines | None = None,
                 rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self.pot = _PairPotential(cfg.potential, cfg.L, cfg.d, cfg.u_max, cfg.image_tol)
        self.dtau = cfg.beta / cfg.M
        self.wl = self._initial_state() if wl is None else wl
        self.current_action = action(self.wl, cfg.potential, cfg.L, cfg.beta, cfg.u_max,
                                     shells=self.pot.shells)
        self.accepted = {m: 0 for m in MOVES}
        self.attempted = {m: 0 for m in MOVES}
        names = [m for m, _ in cfg.moves]
        w = np.array([wt for _, wt in cfg.moves], float)
        if cfg.N == 1:
            w = np.where(np.isin(names, ["swap", "relabel"]), 0.0, w)
            if not w.any():
                w = np.where(np.array(names) == "bridge", 1.0, 0.0)
                if not w.any():
                    names, w = ["bridge"], np.array([1.0])
        self._move_names = names
        self._move_p = w / w.sum()

    def _initial_state(self) -> WorldLines:
        cfg = self.cfg
        X = self.rng.uniform(0.0, cfg.L, size=(cfg.N, cfg.d))
        paths = np.empty((cfg.N, cfg.M + 1, cfg.d))
        wind = np.zeros((cfg.N, cfg.d), dtype=np.int64)
        for i in range(cfg.N):
            paths[i], wind[i] = sample_bridge(X[i], X[i], 1.0, cfg.M, cfg.L, self.rng, cfg.zmax)
        return WorldLines(np.arange(cfg.N), paths, wind)

    # -- helpers
    def _delta_action(self, new: WorldLines, C) -> float:
        if self.pot.zero:
            return 0.0
        M = self.cfg.M
        e_old = self.pot.subset_energy(self.wl.paths[:, :M], C)
        e_new = self.pot.subset_energy(new.paths[:, :M], C)
        if math.isinf(e_new):
            return math.inf
        if math.isinf(e_old):
            return -math.inf
        return self.dtau * (e_new - e_old)

    # -- proposals
    def propose_swap(self, i: int, j: int) -> Proposal:
        cfg, wl = self.cfg, self.wl
        X0 = wl.paths[:, 0]
        new = wl.copy()
        new.pi[i], new.pi[j] = wl.pi[j], wl.pi[i]
        for a in (i, j):
            new.paths[a], new.windings[a] = sample_bridge(
                X0[a], X0[new.pi[a]], 1.0, cfg.M, cfg.L, self.rng, cfg.zmax)
        ij = np.array([i, j])
        deltas = np.concatenate([X0[new.pi[ij]] - X0[ij], X0[wl.pi[ij]] - X0[ij]])
        lk = _log_kernel_rows(deltas, cfg.L, 1.0, cfg.zmax)
        log_a = float(lk[0] + lk[1] - lk[2] - lk[3])
        dS = self._delta_action(new, [i, j])
        return Proposal(new, log_a - dS, (i, j), dS)

    def propose_bridge(self, i: int) -> Proposal:
        cfg, wl = self.cfg, self.wl
        M, L = cfg.M, cfg.L
        new = wl.copy()
        X0 = wl.paths[:, 0]
        if wl.pi[i] == i:
            new.paths[i], new.windings[i] = sample_bridge(X0[i], X0[i], 1.0, M, L, self.rng, cfg.zmax)
            C = [i]
        else:
            k = int(np.nonzero(wl.pi == i)[0][0])
            end = X0[wl.pi[i]]
            long, ztot = sample_bridge(X0[k], end, 2.0, 2 * M, L, self.rng, cfg.zmax)
            mid = long[M]
            xi = np.mod(mid, L)
            xi[xi >= L] = 0.0
            wk = np.rint((mid - xi) / L).astype(np.int64)
            new.paths[k] = long[:M + 1]
            new.paths[k, M] = xi + L * wk
            new.paths[i] = long[M:] - L * wk
            new.paths[i, 0] = xi
            new.windings[k] = wk
            new.windings[i] = ztot - wk
            new.paths[i, M] = new.paths[new.pi[i], 0] + L * new.windings[i]
            C = [k, i]
        dS = self._delta_action(new, C)
        return Proposal(new, -dS if dS else 0.0, tuple(C), dS)

    def propose_translate(self, i: int, shift=None) -> Proposal:
        cfg, wl = self.cfg, self.wl
        L = cfg.L
        s = self.rng.uniform(0.0, L, cfg.d) if shift is None else np.asarray(shift, float)
        cyc = _cycle_of(wl.pi, i)
        new = wl.copy()
        moved = wl.paths[cyc, 0] + s
        start = np.mod(moved, L)
        start[start >= L] = 0.0
        off = np.zeros((cfg.N, cfg.d), dtype=np.int64)
        off[cyc] = np.rint((moved - start) / L).astype(np.int64)
        new.paths[cyc] = wl.paths[cyc] + (s - L * off[cyc])[:, None, :]
        new.paths[cyc, 0] = start
        new.windings[cyc] = wl.windings[cyc] + off[wl.pi[cyc]] - off[cyc]
        new.paths[cyc, -1] = new.paths[wl.pi[cyc], 0] + L * new.windings[cyc]
        dS = self._delta_action(new, cyc)
        return Proposal(new, -dS if dS else 0.0, tuple(cyc), dS)

    def propose_relabel(self, a: int, b: int) -> Proposal:
        wl = self.wl
        tau = np.arange(len(wl.pi))
        tau[a], tau[b] = b, a
        new = WorldLines(tau[wl.pi[tau]], wl.paths[tau].copy(), wl.windings[tau].copy())
        return Proposal(new, 0.0, (a, b), 0.0)

    # -- dynamics
    def _accept(self, prop: Proposal) -> bool:
        if prop.log_accept >= 0.0 or self.rng.random() < math.exp(prop.log_accept):
            self.wl = prop.state
            self.current_action += prop.delta_action
            return True
        return False

    def step(self, move: str) -> bool:
        N = self.cfg.N
        i = int(self.rng.integers(N))
        if move in ("swap", "relabel"):
            j = int(self.rng.integers(N - 1))
            j += j >= i
            prop = self.propose_swap(i, j) if move == "swap" else self.propose_relabel(i, j)
        elif move == "bridge":
            prop = self.propose_bridge(i)
        else:
            prop = self.propose_translate(i)
        self.attempted[move] += 1
        ok = self._accept(prop)
        self.accepted[move] += ok
        return ok

    def sweep(self) -> None:
        """N move attempts drawn from the configured mix."""
        kinds = self.rng.choice(len(self._move_names), size=self.cfg.N, p=self._move_p)
        for k in kinds:
            self.step(self._move_names[k])


# ------------------------------------------------------------------ statistics

@dataclass
class RunStats:
    config: dict
    digest: str
    seeds: tuple
    counts: np.ndarray              # summed over all measurement sweeps
    batch_fractions: np.ndarray     # (B, N)
    accepted: dict
    attempted: dict
    action_trace: list
    sweeps: int
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.counts)

    @property
    def mean(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @property
    def stderr(self) -> np.ndarray:
        B = self.batch_fractions.shape[0]
        return self.batch_fractions.std(axis=0, ddof=1) / math.sqrt(B)

    @property
    def acceptance(self) -> dict:
        return {m: (self.accepted[m] / self.attempted[m] if self.attempted[m] else None)
                for m in MOVES}

    def distribution(self) -> CycleDistribution:
        return CycleDistribution(self.mean, "sampled", stderr=self.stderr,
                                 meta={"digest": self.digest, "seeds": list(self.seeds)})

    def to_dict(self) -> dict:
        return {"config": self.config, "digest": self.digest, "seeds": list(self.seeds),
                "sweeps": self.sweeps, "counts": self.counts.tolist(),
                "mean": self.mean.tolist(), "stderr": self.stderr.tolist(),
                "batch_fractions": self.batch_fractions.tolist(),
                "accepted": self.accepted, "attempted": self.attempted,
                "acceptance": self.acceptance, "action_trace": self.action_trace,
                "meta": self.meta}


def run(cfg: PIMCConfig, chain: Chain | None = None) -> RunStats:
    ch = Chain(cfg) if chain is None else chain
    for _ in range(cfg.equilibration):
        ch.sweep()
    for m in MOVES:
        ch.accepted[m] = ch.attempted[m] = 0
    B = min(cfg.batches, cfg.sweeps)
    batch_counts = np.zeros((B, cfg.N), dtype=np.int64)
    sizes = np.zeros(B, dtype=np.int64)
    every = max(1, cfg.sweeps // max(1, cfg.trace_points))
    trace = []
    for s in range(cfg.sweeps):
        ch.sweep()
        b = s * B // cfg.sweeps
        batch_counts[b] += cycle_counts(ch.wl.pi)
        sizes[b] += 1
        if s % every == 0:
            trace.append(float(ch.current_action))
    meta = {"equilibration_sweeps": cfg.equilibration,
            "continuity_residual": ch.wl.continuity_residual(cfg.L),
            "image_shells": ch.pot.shells, "image_tail_bound": ch.pot.tail,
            "u_max": repr(float(cfg.u_max))}
    return RunStats(config=cfg.to_dict(), digest=cfg.digest(), seeds=(cfg.seed,),
                    counts=batch_counts.sum(0), batch_fractions=batch_counts / (sizes[:, None] * cfg.N),
                    accepted=dict(ch.accepted), attempted=dict(ch.attempted),
                    action_trace=trace, sweeps=cfg.sweeps, meta=meta)


def run_chains(cfgs, jobs: int = 1) -> list[RunStats]:
    """Independent chains, optionally in worker processes; order follows cfgs."""
    cfgs = list(cfgs)
    if jobs <= 1 or len(cfgs) == 1:
        return [run(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=min(jobs, len(cfgs))) as ex:
        return list(ex.map(run, cfgs))


def merge_stats(runs) -> RunStats:
    """Pool independent chains of the same physics; independent of input order."""
    runs = sorted(runs, key=lambda r: (r.seeds, r.digest))
    if len({r.N for r in runs}) != 1:
        raise ValueError("cannot merge runs with different N")
    acc = {m: sum(r.accepted[m] for r in runs) for m in MOVES}
    att = {m: sum(r.attempted[m] for r in runs) for m in MOVES}
    return RunStats(config=runs[0].config, digest=runs[0].digest,
                    seeds=tuple(s for r in runs for s in r.seeds),
                    counts=sum(r.counts for r in runs),
                    batch_fractions=np.vstack([r.batch_fractions for r in runs]),
                    accepted=acc, attempted=att,
                    action_trace=[t for r in runs for t in r.action_trace],
                    sweeps=sum(r.sweeps for r in runs),
                    meta={"merged": len(runs), "digests": [r.digest for r in runs]})


def hotelling_test(batches, p_exact, min_expected: float = 10.0, n_draws: float | None = None) -> dict:
    """Hotelling T^2 of batch-mean vectors against a reference law.

    Categories whose expected count is below ``min_expected`` are pooled into
    the remainder, which is dropped along with the sum constraint.
    """
    batches = np.asarray(batches, float)
    p_exact = np.asarray(p_exact, float)
    B = batches.shape[0]
    n_draws = 1e4 * B if n_draws is None else n_draws
    keep = np.nonzero(p_exact * n_draws >= min_expected)[0]
    if len(keep) == len(p_exact):
        keep = keep[:-1]
    k = len(keep)
    if k == 0:
        return {"T2": 0.0, "F": 0.0, "df": (0, B), "p_value": 1.0, "categories": []}
    if B <= k:
        raise ValueError(f"need more batches ({B}) than categories ({k})")
    diff = batches[:, keep].mean(0) - p_exact[keep]
    S = np.atleast_2d(np.cov(batches[:, keep].T, ddof=1))
    T2 = float(B * diff @ np.linalg.pinv(S) @ diff)
    F = (B - k) / (k * (B - 1)) * T2
    return {"T2": T2, "F": F, "df": (k, B - k), "p_value": float(stats.f.sf(F, k, B - k)),
            "categories": (keep + 1).tolist()}


def cycle_chi2(st: RunStats, exact_mass) -> dict:
    return hotelling_test(st.batch_fractions, exact_mass, n_draws=float(st.counts.sum()))


def estimate_cycles(cfg: PIMCConfig) -> tuple[CycleDistribution, RunStats]:
    st = run(cfg)
    dist = st.distribution()
    se = st.stderr
    dist.meta["flagged_wide"] = bool(np.any((se > 0.5 * st.mean) & (st.mean > 0)))
    return dist, st


def _params(st: RunStats) -> SystemParams:
    c = st.config
    return SystemParams.natural(d=c["d"], l_over_lam=c["L_over_lambda"], N=c["N"])


def estimate_mu_ratio(st: RunStats, G1: float = 1.0) -> dict:
    """Q_{N-1}/Q_N from N P(xi_1 = 1) / (q_1 G1).

    G1 = 1 is exact for the ideal gas; interacting runs report the value with
    that assumption flagged.
    """
    N = st.N
    q1 = float(q_cycle(1, _params(st)))
    p1, se = float(st.mean[0]), float(st.stderr[0])
    scale = N / (q1 * G1)
    available = p1 > 0 and (se == 0.0 or p1 > 2.0 * se)
    return {"ratio": scale * p1 if available else math.nan, "stderr": scale * se,
            "available": available, "q1": q1, "G1": G1,
            "G1_assumed": st.config["potential"]["kind"] != "zero"}


def long_cycle_mass(st: RunStats, threshold: int) -> tuple[float, float]:
    """P(xi_1 >= threshold) with its batch-means error."""
    per_batch = st.batch_fractions[:, threshold - 1:].sum(1)
    return float(st.mean[threshold - 1:].sum()), float(per_batch.std(ddof=1) / math.sqrt(len(per_batch)))


# ------------------------------------------------------------------ checkpoints

def save_checkpoint(chain: Chain, path) -> None:
    buf = io.BytesIO()
    state = json.dumps(chain.rng.bit_generator.state)
    np.savez(buf, pi=chain.wl.pi, paths=chain.wl.paths, windings=chain.wl.windings,
             rng=np.frombuffer(state.encode(), dtype=np.uint8),
             action=np.array([chain.current_action]))
    body = buf.getvalue()
    blob = (CHECKPOINT_MAGIC + struct.pack("<H", CHECKPOINT_VERSION)
            + bytes.fromhex(chain.cfg.digest()) + struct.pack("<Q", len(body)) + body)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path, cfg: PIMCConfig) -> Chain:
    with open(path, "rb") as fh:
        blob = fh.read()
    head = len(CHECKPOINT_MAGIC) + 2 + 32 + 8
    if len(blob) < head or blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a world-line checkpoint")
    (version,) = struct.unpack("<H", blob[4:6])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if blob[6:38].hex() != cfg.digest():
        raise ValueError("checkpoint was written under a different configuration")
    (n,) = struct.unpack("<Q", blob[38:46])
    data = np.load(io.BytesIO(blob[46:46 + n]))
    rng = np.random.default_rng()
    rng.bit_generator.state = json.loads(bytes(data["rng"]).decode())
    wl = WorldLines(data["pi"].copy(), data["paths"].copy(), data["windings"].copy())
    ch = Chain(cfg, wl=wl, rng=rng)
    ch.current_action = float(data["action"][0])
    return ch
