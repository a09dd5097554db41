"""Command line entry point: one subcommand per experiment.

Every subcommand writes its outputs plus a manifest.json (resolved config,
version, wall-clock, sha256 of every output) into the --out directory.
Exit codes: 0 success, 1 a checked property failed, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config

def _parse_value(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("inf", "infinity"):
        return float("inf")
    if "," in text:
        return tuple(_parse_value(t) for t in text.split(",") if t.strip())
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_config(path):
    """Flat key = value file; '#' starts a comment."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    out = {}
    for n, line in enumerate(p.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = _parse_value(v)
    return out


def _take(cfg, allowed, defaults):
    unknown = set(cfg) - set(allowed)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    res = dict(defaults)
    res.update(cfg)
    return res


def _tuple(v):
    return tuple(v) if isinstance(v, (tuple, list)) else (v,)


# ---------------------------------------------------------------- manifest

@dataclass
class RunManifest:
    subcommand: str
    config: dict
    version: str = __version__
    wall_clock: float = 0.0
    outputs: dict = field(default_factory=dict)

    def write(self, out_dir):
        out_dir = Path(out_dir)
        self.outputs = {}
        for f in sorted(out_dir.iterdir()):
            if f.is_file() and f.name != MANIFEST:
                self.outputs[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
        (out_dir / MANIFEST).write_text(json.dumps(asdict(self), indent=2, default=_jsonable) + "\n")


def verify_manifest(out_dir):
    """True iff the manifest digests match the files in out_dir."""
    out_dir = Path(out_dir)
    m = json.loads((out_dir / MANIFEST).read_text())
    files = {f.name for f in out_dir.iterdir() if f.is_file() and f.name != MANIFEST}
    if files != set(m["outputs"]):
        return False
    return all(hashlib.sha256((out_dir / k).read_bytes()).hexdigest() == v
               for k, v in m["outputs"].items())


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return str(x)


def _dump(obj):
    return json.dumps(obj, indent=2, default=_jsonable, allow_nan=True) + "\n"


def _out_target(out, default_name):
    """--out may name a directory or a file inside one."""
    if out is None:
        raise UsageError("--out is required")
    p = Path(out)
    if p.suffix in (".csv", ".json"):
        return p.parent if str(p.parent) else Path("."), p.name
    return p, default_name


def _prepare_dir(d):
    d.mkdir(parents=True, exist_ok=True)
    stale = d / MANIFEST
    if stale.exists():
        stale.unlink()


def _write_csv(path, header, rows, footer=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
        if footer is not None:
            fh.write("# " + json.dumps(footer, default=_jsonable) + "\n")


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("CATENOID_TAILS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError("CATENOID_TAILS_THREADS must be an integer")
    return 1


# ---------------------------------------------------------------- subcommands

def cmd_verify(args, cfg):
    from .operator_algebra import verify_identity_suite

    _take(cfg, (), {})
    recs = verify_identity_suite(corrupt=args.corrupt)
    if args.json:
        for r in recs:
            print(json.dumps(r.to_json()))
    else:
        width = max(len(r.name) for r in recs)
        print(f"{'identity':<{width}}  status  residual")
        for r in recs:
            print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.residual}")
    if args.out:
        d, name = _out_target(args.out, "verify.json")
        _prepare_dir(d)
        (d / name).write_text(_dump([r.to_json() for r in recs]))
        args.manifest_dir = d
    args.resolved = {"corrupt": args.corrupt}
    return EXIT_OK if all(r.passed for r in recs) else EXIT_FAIL


def _parse_grid(text):
    try:
        a, b, m = text.split(":")
        return np.linspace(float(a), float(b), int(m))
    except ValueError:
        raise UsageError("--grid must be start:stop:count")


def cmd_profile(args, cfg):
    from .geometry import CatenoidProfile, metric_arrays

    c = _take(cfg, ("n", "grid"), {"n": args.n, "grid": args.grid})
    rho = _parse_grid(str(c["grid"]))
    n = int(c["n"])
    prof = CatenoidProfile(n)
    m = metric_arrays(rho, n)
    d, name = _out_target(args.out, "profile.csv")
    _prepare_dir(d)
    rows = zip(rho, prof.Z(rho), m["g_rr"], m["F_rho"], m["II2"])
    _write_csv(d / name, ["rho", "Z", "g_rr", "F_rho", "II2"], rows)
    args.manifest_dir = d
    args.resolved = {"n": n, "grid": c["grid"], "S": prof.S}
    if args.json:
        print(_dump({"n": n, "S": prof.S, "rows": len(rho)}), end="")
    return EXIT_OK


def cmd_spectrum(args, cfg):
    from .spectrum import assemble, default_grid, morse_index, spectrum, zero_mode_residual

    c = _take(cfg, ("n", "lmax", "nodes", "k"),
              {"n": args.n, "lmax": args.lmax, "nodes": args.nodes, "k": 4})
    n, lmax, nodes = int(c["n"]), int(c["lmax"]), int(c["nodes"])
    grid = default_grid(nodes)

    def one(l):
        return spectrum(assemble(l, n, grid), k=int(c["k"]))

    with ThreadPoolExecutor(args.nthreads) as ex:
        results = dict(zip(range(lmax + 1), ex.map(one, range(lmax + 1))))
    zres = zero_mode_residual(n, grid)
    recs = [res.to_json(zres if l == 1 else None) for l, res in results.items()]
    index = morse_index(results)
    for r in recs:
        if args.json:
            print(json.dumps(r, default=_jsonable))
        else:
            mu = "-" if r["mu2"] is None else f"{r['mu2']:.10g}"
            print(f"l={r['l']}  top={r['eigenvalues'][-1]:.6g}  mu2={mu}")
    if not args.json:
        print(f"morse index {index}")
    if args.out:
        d, name = _out_target(args.out, "spectrum.json")
        _prepare_dir(d)
        (d / name).write_text(_dump({"sectors": recs, "morse_index": index}))
        args.manifest_dir = d
    args.resolved = {"n": n, "lmax": lmax, "nodes": nodes, "k": int(c["k"])}
    return EXIT_OK if index == 1 else EXIT_FAIL


F0_KEYS = ("amp", "scale", "R_f", "delta1", "tau", "theta", "rmin", "rmax", "nr", "fd_step", "frozen")


def cmd_f0_decay(args, cfg):
    from .foliation import FoliationChart, f0_radial_fit

    c = _take(cfg, F0_KEYS, {"amp": 0.05, "scale": 10.0, "R_f": 20.0, "delta1": 0.5, "tau": 0.0,
                             "theta": (0.3, 1.2, 0.7), "rmin": 50.0, "rmax": 400.0, "nr": 8,
                             "fd_step": 0.25, "frozen": False})
    e = np.eye(4)[0]
    if c["frozen"]:
        chart = FoliationChart.frozen(c["amp"] * e, R_f=c["R_f"], delta1=c["delta1"])
    else:
        chart = FoliationChart.tanh_profile(c["amp"], c["scale"], e, R_f=c["R_f"], delta1=c["delta1"])
    radii = np.geomspace(c["rmin"], c["rmax"], int(c["nr"]))
    theta = list(_tuple(c["theta"]))
    fit = f0_radial_fit(c["tau"], theta, chart, radii, c["fd_step"])
    d, name = _out_target(args.out, "f0.csv")
    _prepare_dir(d)
    th = " ".join(repr(float(t)) for t in theta)
    footer = {"fitted_slope": fit.slope, "leading": fit.leading, "subleading": fit.subleading}
    _write_csv(d / name, ["tau", "r", "theta", "F0"],
               ((float(c["tau"]), r, th, f) for r, f in zip(fit.radii, fit.values)), footer)
    args.manifest_dir = d
    args.resolved = c
    print(_dump(footer) if args.json else f"fitted slope {fit.slope:.4f}", end="" if args.json else "\n")
    return EXIT_OK


EVOLVE_KEYS = ("l", "rmin", "rmax", "nodes", "dtau", "tmax", "source.kind", "source.amp", "source.q",
               "source.s", "observers", "p_list", "compactify", "R", "cfl", "record_every",
               "bump.center", "bump.width", "bump.amp", "tau_start")


def evolve_config(c):
    from .evolution import Bump, EvolutionConfig, Source

    compact = bool(c.get("compactify", True))
    bump = Bump(**{k: float(c[f"bump.{k}"]) for k in ("center", "width", "amp") if f"bump.{k}" in c})
    src = Source(**{k: (str(c[f"source.{k}"]) if k == "kind" else float(c[f"source.{k}"]))
                    for k in ("kind", "amp", "q", "s") if f"source.{k}" in c})
    kw = dict(l=int(c.get("l", 0)), r_min=float(c.get("rmin", 0.1)), nodes=int(c.get("nodes", 2001)),
              tmax=float(c.get("tmax", 10.0)), compactify=compact, bump=bump, source=src,
              observers=tuple(float(x) for x in _tuple(c.get("observers", 2.0))),
              p_list=tuple(float(x) for x in _tuple(c["p_list"])) if "p_list" in c else (),
              R=float(c.get("R", 10.0)), cfl=float(c.get("cfl", 0.5)),
              record_every=int(c.get("record_every", 1)))
    if "dtau" in c:
        kw["dtau"] = float(c["dtau"])
    if "rmax" in c:
        kw["r_max"] = float(c["rmax"])
    cfg = EvolutionConfig(**kw)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(f"invalid evolution config: {exc}")
    return cfg


def cmd_evolve(args, cfg):
    from .evolution import P_RANGE_Y, default_windows, hierarchy_check, run, tail_fit

    if not cfg:
        raise UsageError("evolve needs --config")
    c = _take(cfg, EVOLVE_KEYS, {})
    config = evolve_config(c)
    d, _ = _out_target(args.out, "")
    _prepare_dir(d)
    out = run(config)
    every = config.record_every
    U = out.U[::every]
    header = ["tau"]
    cols = [out.tau[::every]]
    led = out.ledger
    ok = True
    if led is not None:
        for p in config.p_list:
            header.append(f"E^{p:g}")
            cols.append(led.series[p]["E"])
        for p in config.p_list:
            header.append(f"tildeE^{p:g}")
            cols.append(led.series[p]["EY_intro"])
            # intro form is coercive for p <= 3/2; E^p is a sum of squares
            if p <= 1.5 and np.any(led.series[p]["EY_intro"] < 0):
                ok = False
            if np.any(led.series[p]["E"] < 0):
                ok = False
    for j, r in enumerate(out.observers):
        header.append(f"u({r:g})")
        cols.append(U[:, j])
    _write_csv(d / "timeseries.csv", header, zip(*cols))

    tails = []
    for j, r in enumerate(out.observers):
        tf = tail_fit(out.tau, out.U[:, j], r, tau_start=c.get("tau_start"), seed=args.seed)
        tails.append({"observer": r, "exponent": tf.exponent, "spread": tf.spread, "r2": tf.r2,
                      "decades": tf.decades, "sufficient": tf.sufficient})
    (d / "tails.json").write_text(_dump(tails))

    hier = []
    if led is not None:
        for p in config.p_list:
            for form in ("u", "Y"):
                if form == "u" and not 0 < p < 2 or form == "Y" and not P_RANGE_Y[0] < p < P_RANGE_Y[1]:
                    continue
                for w in default_windows(led.tau):
                    rep = hierarchy_check(led, p, w, form=form)
                    hier.append({"form": form, "p": p, "window": rep.window, "lhs": rep.lhs,
                                 "rhs": rep.rhs, "energy_start": rep.energy_start,
                                 "ratio": rep.ratio, "energy_ratio": rep.energy_ratio,
                                 "identity_residual": rep.identity_residual})
    (d / "hierarchy.json").write_text(_dump(hier))
    args.manifest_dir = d
    args.resolved = c
    summary = {"steps": out.steps, "tails": tails, "positivity": ok}
    print(_dump(summary) if args.json else
          "\n".join(f"observer {t['observer']:g}: exponent {t['exponent']:.4f}" for t in tails))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_hardy(args, cfg):
    from .inequalities import hardy_check, optimizer_ratio, random_bump_sum

    c = _take(cfg, ("p_list", "q_list", "trials", "r0", "r1", "nodes", "eps"),
              {"p_list": (0.0, 0.5, 1.5), "q_list": (2.0, 3.0, 5.5), "trials": 100, "r0": 1.0,
               "r1": 11.0, "nodes": 4001, "eps": 0.01})
    rng = np.random.default_rng(args.seed)
    r = np.linspace(c["r0"], c["r1"], int(c["nodes"]))
    rows = []
    for variant, plist in ((False, _tuple(c["p_list"])), (True, _tuple(c["q_list"]))):
        for p in plist:
            worst, fails = 0.0, 0
            for _ in range(int(c["trials"])):
                phi, dphi = random_bump_sum(rng, c["r0"], c["r1"])
                res = hardy_check(phi(r), p, c["r0"], c["r1"], r=r, dphi=dphi(r), variant=variant)
                fails += not res.passed
                worst = max(worst, res.lhs / res.rhs if res.rhs > 0 else 0.0)
            opt = optimizer_ratio(p, c["eps"], variant=variant)
            rows.append({"variant": variant, "p": p, "trials": int(c["trials"]), "failures": fails,
                         "worst_ratio": worst, "optimizer_ratio": opt,
                         "pass": fails == 0 and 0.9 <= opt <= 1 + 1e-9})
    for row in rows:
        if args.json:
            print(json.dumps(row, default=_jsonable))
        else:
            kind = "q" if row["variant"] else "p"
            print(f"{kind}={row['p']:<4g} failures={row['failures']} worst={row['worst_ratio']:.4f} "
                  f"optimizer={row['optimizer_ratio']:.4f} {'PASS' if row['pass'] else 'FAIL'}")
    if args.out:
        d, name = _out_target(args.out, "hardy.json")
        _prepare_dir(d)
        (d / name).write_text(_dump(rows))
        args.manifest_dir = d
    args.resolved = c
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_FAIL


def cmd_shoot(args, cfg):
    from .modulation import KAPPA, band_audit, shoot

    c = _take(cfg, ("mu", "lambda0", "eps", "T", "kappa"),
              {"mu": 1.0, "lambda0": 1.0, "eps": 1e-3, "T": 50.0, "kappa": KAPPA})
    lam0, eps = float(c["lambda0"]), float(c["eps"])

    def g(t):
        return eps * lam0 * (1 + t * t) ** (-9 / 8) * np.sin(t)

    try:
        res = shoot(c["mu"], g, lam0, kappa=c["kappa"], T=c["T"])
    except ValueError as exc:
        print(f"shoot: {exc}", file=sys.stderr)
        return EXIT_FAIL
    n_band, bad = band_audit(res.tau, res.b, c["mu"], g, lam0, c["kappa"])
    ok = res.width < 2.0 ** -40 * lam0 and bad == 0 and bool(np.all(np.abs(res.b) < res.envelope))
    summary = {"b0": res.b0, "b0_backward": res.b0_backward, "width": res.width,
               "iterations": res.iterations, "forward_exit": res.forward_exit,
               "band_samples": n_band, "band_violations": bad, "pass": ok}
    print(_dump(summary) if args.json else
          f"b0 = {res.b0:.15e}  width = {res.width:.3g}  band violations {bad}/{n_band}")
    if args.out:
        d, _ = _out_target(args.out, "")
        _prepare_dir(d)
        _write_csv(d / "trajectory.csv", ["tau", "b", "envelope"], zip(res.tau, res.b, res.envelope))
        (d / "shoot.json").write_text(_dump(summary))
        args.manifest_dir = d
    args.resolved = c
    return EXIT_OK if ok else EXIT_FAIL


def cmd_smooth(args, cfg):
    from .modulation import Kernel, identity_defect, smooth_S

    c = _take(cfg, ("panels", "tmax", "samples"), {"panels": 400, "tmax": 5.0, "samples": 51})
    k = Kernel(panels=int(c["panels"]))
    t = np.linspace(0.0, float(c["tmax"]), int(c["samples"]))
    cubic = lambda s: 1 + 2 * s - 0.5 * s ** 2 + 0.1 * s ** 3
    defect = identity_defect(cubic, t, k)
    t1 = t[t >= 1]
    const_err = float(np.max(np.abs(smooth_S(lambda s: 3.0 + 0 * s, t1, k) - 3.0)))
    ok = defect <= 1e-8 and const_err <= 1e-14
    summary = {"identity_defect_cubic": defect, "constant_error": const_err, "pass": ok}
    print(_dump(summary) if args.json else
          f"identity defect {defect:.3g}  constant error {const_err:.3g}")
    if args.out:
        d, name = _out_target(args.out, "smooth.json")
        _prepare_dir(d)
        (d / name).write_text(_dump(summary))
        args.manifest_dir = d
    args.resolved = c
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- dispatch

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config")
    common.add_argument("--out")
    common.add_argument("--json", action="store_true")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int)
    ap = _Parser(prog="catenoid-tails", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", parser_class=_Parser)
    p = sub.add_parser("verify", parents=[common], help="exact operator identities")
    p.add_argument("--corrupt", action="store_true", help="self-test with a corrupted commuted operator")
    p = sub.add_parser("profile", parents=[common], help="catenoid profile and induced metric")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--grid", default="0:10:101")
    p = sub.add_parser("spectrum", parents=[common], help="mode operator spectra")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--lmax", type=int, default=6)
    p.add_argument("--nodes", type=int, default=2000)
    sub.add_parser("f0-decay", parents=[common], help="radial decay of the foliation source")
    sub.add_parser("evolve", parents=[common], help="characteristic mode evolution")
    sub.add_parser("hardy", parents=[common], help="weighted Hardy inequalities")
    sub.add_parser("shoot", parents=[common], help="shooting for the trapped mode")
    sub.add_parser("smooth", parents=[common], help="time smoothing operators")
    return ap


COMMANDS = {"verify": cmd_verify, "profile": cmd_profile, "spectrum": cmd_spectrum,
            "f0-decay": cmd_f0_decay, "evolve": cmd_evolve, "hardy": cmd_hardy,
            "shoot": cmd_shoot, "smooth": cmd_smooth}


def dispatch(argv):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.cmd is None:
            raise UsageError(ap.format_usage())
        args.nthreads = _threads(args)
        cfg = read_config(args.config)
        args.manifest_dir = None
        args.resolved = {}
        t0 = time.perf_counter()
        code = COMMANDS[args.cmd](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.manifest_dir is not None:
        resolved = dict(args.resolved)
        resolved.update(seed=args.seed, threads=args.nthreads)
        RunManifest(args.cmd, resolved, wall_clock=time.perf_counter() - t0).write(args.manifest_dir)
    return code


def main(argv=None):
    try:
        code = dispatch(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:  # --help / --version
        code = exc.code if isinstance(exc.code, int) else EXIT_OK
    sys.exit(code)


if __name__ == "__main__":
    main()
