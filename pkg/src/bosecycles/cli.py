"""Command-line driver.

    bosecycles <subcommand> [--config FILE] [--out DIR] [--seed S] [--format csv|json|both] [--jobs J]

Config files are flat ``key = value`` text; values parse as int, float, bool,
or comma lists of those, anything else stays a string.  Each run writes its
tables plus ``manifest.json`` (resolved config, version, digest, output
hashes, validation results).  Exit status is 0 iff every validation passes,
1 if one fails, 2 on a usage error and 3 on a domain error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import bounds as bd
from . import idealgas as ig
from . import kernels as kn
from . import latticegas as lg
from . import pimc

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2, 3


class UsageError(ValueError):
    pass


# ------------------------------------------------------------------ config

def parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def parse_value(text: str):
    if "," in text:
        return [parse_scalar(p) for p in text.split(",") if p.strip()]
    return parse_scalar(text)


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"line {lineno}: empty key")
        out[key] = parse_value(val)
    return out


def _coerce(key, value, default):
    """Give ``value`` the type of ``default`` (lists stay lists)."""
    try:
        if isinstance(default, list):
            items = value if isinstance(value, list) else [value]
            proto = default[0] if default else None
            return [_coerce(key, v, proto) for v in items] if proto is not None else items
        if isinstance(value, list):
            raise UsageError(f"config key {key!r} takes a single value")
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise UsageError(f"config key {key!r} must be true or false")
            return value
        if isinstance(default, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            if not isinstance(value, int) or isinstance(value, bool):
                raise UsageError(f"config key {key!r} must be an integer, got {value!r}")
            return value
        if isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise UsageError(f"config key {key!r} must be a number, got {value!r}")
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"config key {key!r}: {exc}") from None


def resolve(defaults: dict, given: dict) -> dict:
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise UsageError(f"unknown config key {unknown[0]!r}")
    out = dict(defaults)
    for k, v in given.items():
        out[k] = _coerce(k, v, defaults[k])
    return out


# ------------------------------------------------------------------ output

def fmt_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        s = format(float(v), ".17g")
        # keep floats recognizable as floats on the way back in
        return s if any(c in s for c in ".enia") else s + ".0"
    return str(v)


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt_cell(v) for v in r])
    return buf.getvalue()


def read_csv(text: str):
    """(columns, rows) with cells parsed back to int/float/bool/str."""
    rd = csv.reader(io.StringIO(text))
    columns = next(rd)
    return columns, [[parse_scalar(c) for c in r] for r in rd]


def _json_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def to_json(columns, rows, meta=None) -> str:
    doc = {"columns": list(columns), "rows": [[_json_cell(v) for v in r] for r in rows],
           "meta": meta or {}}
    return json.dumps(doc, indent=1, sort_keys=True, default=_json_cell) + "\n"


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


class Output:
    def __init__(self, outdir: str, fmt: str):
        self.outdir, self.fmt = outdir, fmt
        self.files = {}

    def table(self, name, columns, rows, meta=None):
        rows = [list(r) for r in rows]
        if self.fmt in ("csv", "both"):
            self._put(name + ".csv", to_csv(columns, rows))
        if self.fmt in ("json", "both"):
            self._put(name + ".json", to_json(columns, rows, meta))

    def _put(self, fname, text):
        atomic_write(os.path.join(self.outdir, fname), text)
        self.files[fname] = _sha(text)


def config_digest(subcommand: str, config: dict, seed: int) -> str:
    blob = json.dumps({"subcommand": subcommand, "config": config, "seed": seed,
                       "version": __version__}, sort_keys=True, default=_json_cell)
    return _sha(blob)


# ------------------------------------------------------------------ helpers

def _pool_map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _potential(cfg: dict):
    kind = cfg["potential"].lower()
    if kind == "zero":
        return kn.Zero()
    if kind == "gaussian":
        return kn.Gaussian(amplitude=cfg["amplitude"], width=cfg["width"])
    if kind == "soft_sphere":
        return kn.SoftSphere(amplitude=cfg["amplitude"], range=cfg["range"])
    if kind in ("lennard_jones", "lj"):
        return kn.LennardJones(epsilon=cfg["epsilon"], d0=cfg["d0"])
    raise UsageError(f"config key 'potential': unknown kind {cfg['potential']!r}")


POTENTIAL_KEYS = {"potential": "zero", "amplitude": 1.0, "width": 0.5, "range": 0.5,
                  "epsilon": 1.0, "d0": 1.0}

ZETA32 = kn.zeta(1.5)


# ------------------------------------------------------------------ helium

HELIUM_DENSITY_CM3 = 2.2e22
HELIUM_REFERENCE = {
    "lambda_T(4.22K)": 4.22, "lambda_T(2.17K)": 5.89, "lambda_T(1.5K)": 7.05,
    "rho*lambda_Tc^3": 4.49, "Tc0": 3.12, "rho^(-1/3)": 3.57,
}


def helium_table(mass_amu: float = kn.HE4_MASS_AMU, density_cm3: float = HELIUM_DENSITY_CM3,
                 tc: float = 2.17) -> list[tuple]:
    """(quantity, computed, reference, relative deviation) for liquid helium-4 data."""
    cm = kn.wavelength_constant(mass_amu)
    rho = density_cm3 * 1e-24             # per cubic angstrom
    lam = lambda T: cm / math.sqrt(T)
    vals = {
        "lambda_T(4.22K)": lam(4.22), "lambda_T(2.17K)": lam(2.17), "lambda_T(1.5K)": lam(1.5),
        "rho*lambda_Tc^3": rho * lam(tc)**3,
        "Tc0": (cm * (rho / ZETA32)**(1 / 3))**2,
        "rho^(-1/3)": rho**(-1 / 3),
    }
    return [(k, vals[k], ref, abs(vals[k] - ref) / ref) for k, ref in HELIUM_REFERENCE.items()]


def cmd_helium_table(cfg, out, ctx):
    rows = [r + (r[3] <= cfg["tolerance"],) for r in
            helium_table(cfg["mass_amu"], cfg["density_cm3"], cfg["tc"])]
    out.table("helium_table", ["quantity", "computed", "reference", "rel_dev", "ok"], rows,
              {"wavelength_constant": kn.wavelength_constant(cfg["mass_amu"])})
    return {r[0]: bool(r[4]) for r in rows}


# ------------------------------------------------------------------ ideal gas

def cmd_ideal_scan(cfg, out, ctx):
    cols = ["rho_lambda_d", "N", "L_over_lambda", "p_tail_eps", "tail_target", "K", "p_le_K",
            "condensate_fraction", "limit_deficit"]
    rows, ok = [], True
    for x in cfg["rho_lambda_d"]:
        for r in ig.finite_size_scan(x, d=cfg["d"], ladder=tuple(cfg["ladder"]), eps=cfg["eps"],
                                     k_exponent=cfg["k_exponent"]):
            row = [x] + [r[c] for c in cols[1:]]
            rows.append(row)
            probs = [r["p_tail_eps"], r["p_le_K"], r["condensate_fraction"], r["limit_deficit"]]
            ok &= all(-1e-12 <= p <= 1 + 1e-12 for p in probs)
    out.table("ideal_scan", cols, rows)
    return {"probabilities_in_unit_interval": ok}


def cmd_cycle_dist(cfg, out, ctx):
    p = kn.SystemParams.natural(d=cfg["d"], l_over_lam=cfg["l_over_lam"], N=cfg["N"])
    dist = ig.cycle_distribution_exact(p)
    rows = [(n + 1, m) for n, m in enumerate(dist.mass)]
    out.table("cycle_dist", ["n", "p_exact"], rows, {"N": cfg["N"], "d": cfg["d"]})
    return {"normalized": abs(math.fsum(dist.mass) - 1.0) < 1e-12}


# ------------------------------------------------------------------ lattice

def _lattice_point(args):
    d, L, c, beta = args
    par = lg.LatticeParams(d=d, L=L, beta=beta, c=c)
    ph = lg.particle_hole_check(par)
    sec = lg.build_sector(par, par.volume // 2)
    co = lg.condensate_observable(sec, beta)
    return (c, beta, ph["spectrum_residual"], ph["logQ_residual"], ph["mu_half"],
            co["n0"], co["route_residual"], co["casimir_slack"], co["rho0_slack"])


def cmd_lattice_ed(cfg, out, ctx):
    pts = [(cfg["d"], cfg["L"], c, b) for c in cfg["c"] for b in cfg["beta"]]
    rows = _pool_map(_lattice_point, pts, ctx["jobs"])
    cols = ["c", "beta", "spectrum_residual", "logQ_residual", "mu_half", "n0_half",
            "route_residual", "casimir_slack", "rho0_slack"]
    out.table("lattice_ed", cols, rows, {"L": cfg["L"], "d": cfg["d"]})
    tol = cfg["tolerance"]
    return {
        "particle_hole": all(r[2] <= tol and r[3] <= tol for r in rows),
        "mu_half_zero": all(abs(r[4]) <= tol for r in rows),
        "n0_identity": all(r[6] <= tol for r in rows),
        "casimir_slack_nonnegative": all(r[7] >= -tol for r in rows),
    }


def cmd_probe(cfg, out, ctx):
    rng = np.random.default_rng(ctx["seed"])
    u = _potential(cfg)
    sc = lg.sample_scatterers(float(cfg["L"]), cfg["d"], cfg["count"], cfg["min_dist"], rng)
    res = lg.one_body_spectrum(cfg["L"], cfg["d"], sc, u, cfg["beta"], cfg["n_values"],
                               n_eigs=cfg["n_eigs"])
    ev = res["eigenvalues"]
    out.table("probe_spectrum", ["j", "eigenvalue", "overlap_constant"],
              [(j, ev[j], res["overlaps"][j]) for j in range(len(ev))],
              {"l1_sq": res["l1_sq"], "partial": res["partial"]})
    out.table("probe_decay", ["n", "decay"], zip(res["n_values"], res["decay"]))
    out.table("probe_scatterers", [f"x{i}" for i in range(cfg["d"])], sc.tolist())
    return {"perron_positive": res["perron_positive"]}


# ------------------------------------------------------------------ pimc

def cmd_pimc(cfg, out, ctx):
    u = _potential(cfg)
    base = pimc.PIMCConfig(d=cfg["d"], N=cfg["N"], L_over_lambda=cfg["L_over_lambda"],
                           beta=cfg["beta"], M=cfg["M"], potential=u, u_max=cfg["u_max"],
                           sweeps=cfg["sweeps"], discard=cfg["discard"], batches=cfg["batches"],
                           seed=ctx["seed"])
    cfgs = [base.replace(seed=ctx["seed"] + i) for i in range(cfg["chains"])]
    st = pimc.merge_stats(pimc.run_chains(cfgs, ctx["jobs"]))
    ideal = isinstance(u, kn.Zero)
    exact = None
    if ideal:
        p = kn.SystemParams.natural(d=cfg["d"], l_over_lam=cfg["L_over_lambda"], N=cfg["N"])
        exact = ig.cycle_distribution_exact(p).mass
    rows = [(n + 1, st.mean[n], st.stderr[n], exact[n] if ideal else math.nan)
            for n in range(st.N)]
    meta = {"digest": st.digest, "seeds": list(st.seeds), "acceptance": st.acceptance}
    out.table("pimc_cycles", ["n", "p_sampled", "stderr", "p_exact"], rows, meta)
    checks = {"continuity": st.meta.get("continuity_residual", 0.0) < 1e-9}
    summary = [("continuity_residual", st.meta.get("continuity_residual", 0.0))]
    summary += [(f"acceptance_{m}", a if a is not None else math.nan)
                for m, a in st.acceptance.items()]
    if ideal:
        h = pimc.cycle_chi2(st, exact)
        summary += [("hotelling_T2", h["T2"]), ("hotelling_p", h["p_value"])]
        checks["hotelling_p_gt_0.01"] = h["p_value"] > 0.01
    out.table("pimc_summary", ["quantity", "value"], summary)
    return checks


# ------------------------------------------------------------------ bounds

def _bounds_point(args):
    rho, beta, d, u = args
    return bd.f_upper(rho, beta, u, d).to_dict()


def cmd_bounds(cfg, out, ctx):
    u = _potential(cfg)
    d = cfg["d"]
    pts = [(r, b, d, u) for r in cfg["rho"] for b in cfg["beta"]]
    reps = _pool_map(_bounds_point, pts, ctx["jobs"])
    cols = ["rho", "beta", "f_upper", "f_adams", "f0", "mean_field", "cycle_term",
            "psi_upper", "tighter", "f0_substituted"]
    out.table("bounds", cols, [[r[c] for c in cols] for r in reps])
    checks = {}
    nonneg = isinstance(u, kn.Zero) or (getattr(u, "amplitude", 0.0) >= 0)
    if nonneg:
        checks["f_upper_ge_f0"] = all(r["f_upper"] >= r["f0"] for r in reps)
    if cfg["qminus_N"] > 0:
        par = kn.SystemParams.natural(d=d, l_over_lam=cfg["qminus_l_over_lam"], N=cfg["qminus_N"])
        q = bd.qminus_identity(par, u=u)
        out.table("qminus", ["N", "C", "D", "residual"], [(q["N"], q["C"], q["D"], q["residual"])])
        checks["qminus_residual"] = q["residual"] < 1e-9
    return checks


# ------------------------------------------------------------------ selftest

def selftest_rows() -> list[tuple]:
    """(check, value, threshold, passed): fast cross-checks over every module."""
    rows = []
    rows.append(("zeta(3/2)", abs(ZETA32 - 2.612), 1e-3))
    a = np.array([0.05, 0.3, 1.0, 4.0])
    duality = np.max(np.abs(kn.log_theta(a) - (kn.log_theta(1 / a) - 0.5 * np.log(a))))
    rows.append(("theta_duality", float(duality), 1e-12))
    p = kn.SystemParams.natural(d=3, l_over_lam=1.3, N=6)
    t = ig.recursion_table(p)
    bf = ig.brute_force_partition(p)
    rows.append(("recursion_vs_brute_force", abs(math.expm1(t.logQ[-1] - bf)), 1e-10))
    rows.append(("resolution_identity", ig.resolution_identity_check(10), 1e-12))
    par = lg.LatticeParams(d=2, L=2, beta=1.0, c=0.5)
    ph = lg.particle_hole_check(par)
    rows.append(("particle_hole", ph["spectrum_residual"], 1e-10))
    four, img, tail = lg.winding_identity(1.0, np.array([1, 0, 0]), 4)
    rows.append(("winding_identity", abs(float(four) - float(img)) - float(tail), 0.0))
    q = bd.qminus_identity(kn.SystemParams.natural(d=3, l_over_lam=2.0, N=60), C=0.1, D=0.5)
    rows.append(("qminus_identity", q["residual"], 1e-9))
    rep = bd.f_upper(3.0, 1.0, kn.Zero(), 3)
    rows.append(("f_upper_zero_potential", abs(rep.f_upper - rep.f0), 0.0))
    return [(n, float(v), th, bool(v <= th)) for n, v, th in rows]


def cmd_selftest(cfg, out, ctx):
    rows = selftest_rows()
    out.table("selftest", ["check", "value", "threshold", "passed"], rows)
    return {r[0]: r[3] for r in rows}


# ------------------------------------------------------------------ dispatch

COMMANDS = {
    "helium-table": (cmd_helium_table, {"mass_amu": kn.HE4_MASS_AMU,
                                        "density_cm3": HELIUM_DENSITY_CM3, "tc": 2.17,
                                        "tolerance": 0.01}),
    "ideal-scan": (cmd_ideal_scan, {"rho_lambda_d": [2 * ZETA32], "d": 3,
                                    "ladder": [64, 216, 512, 1000], "eps": 0.1,
                                    "k_exponent": 0.5}),
    "cycle-dist": (cmd_cycle_dist, {"d": 3, "l_over_lam": 2.0, "N": 8}),
    "lattice-ed": (cmd_lattice_ed, {"d": 3, "L": 2, "c": [0.0], "beta": [1.0],
                                    "tolerance": 1e-10}),
    "pimc": (cmd_pimc, {"d": 3, "N": 4, "L_over_lambda": 1.5, "beta": 1.0, "M": 32,
                        "sweeps": 10000, "discard": 0.2, "batches": 32, "chains": 1,
                        "u_max": math.inf, **POTENTIAL_KEYS}),
    "bounds": (cmd_bounds, {"rho": [0.5, 1.0, 2.0], "beta": [0.5, 1.0, 2.0], "d": 3,
                            "qminus_N": 0, "qminus_l_over_lam": 3.0,
                            **{**POTENTIAL_KEYS, "potential": "gaussian", "amplitude": 0.5,
                               "width": 0.4}}),
    "probe": (cmd_probe, {"L": 8, "d": 3, "count": 4, "min_dist": 2.0, "beta": 1.0,
                          "n_values": [1, 2, 4, 8, 16], "n_eigs": 64,
                          **{**POTENTIAL_KEYS, "potential": "soft_sphere", "amplitude": 2.0,
                             "range": 1.0}}),
    "selftest": (cmd_selftest, {}),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bosecycles", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value file")
        sp.add_argument("--out", default=os.path.join("runs", name))
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=("csv", "json", "both"), default="csv")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key")
    return ap


def run_command(name: str, given: dict, outdir: str, seed: int = 0, fmt: str = "csv",
                jobs: int = 1) -> dict:
    """Run one subcommand and write its manifest; returns the manifest."""
    fn, defaults = COMMANDS[name]
    cfg = resolve(defaults, given)
    if seed < 0 or seed >= 2**64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    out = Output(outdir, fmt)
    checks = fn(cfg, out, {"seed": seed, "jobs": max(1, jobs)})
    manifest = {
        "subcommand": name, "config": cfg, "seed": seed, "format": fmt,
        "version": __version__, "digest": config_digest(name, cfg, seed),
        "outputs": dict(sorted(out.files.items())),
        "validations": {k: bool(v) for k, v in checks.items()},
        "passed": all(checks.values()),
    }
    atomic_write(os.path.join(outdir, "manifest.json"),
                 json.dumps(manifest, indent=1, sort_keys=True, default=_json_cell) + "\n")
    return manifest


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        given = {}
        if args.config:
            with open(args.config) as f:
                given.update(parse_config(f.read()))
        if args.set:
            given.update(parse_config("\n".join(args.set)))
        man = run_command(args.command, given, args.out, args.seed, args.format, args.jobs)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except kn.DomainError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    for k, v in man["validations"].items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    return EXIT_OK if man["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
