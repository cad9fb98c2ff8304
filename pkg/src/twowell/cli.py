"""Command-line front end.

Every run takes a flat ``key = value`` config file and/or ``--key value``
flags (flags win), writes its artifacts to an output directory and finishes
with ``manifest.json`` listing each artifact with its sha256.

Exit codes: 0 success, 1 domain error or failed check, 2 configuration error.
"""
import argparse
import csv
import hashlib
import json
import math
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import analysis, calibrate, energy, gridperturb, lattice, layers, spin
from .lattice import ConfigurationError
from .optimize import MinimizeOptions, initialize, minimize, write_checkpoint
from .wells import make_wells

OUT_ENV = "TWOWELL_OUT"
COMMANDS = ("wells", "energy", "minimize", "layer", "scaling", "surface-scaling", "spin", "coarea",
            "rigidity", "perturb-grid", "verify", "calibrate", "export")


class ConfigError(ValueError):
    """Malformed or out-of-range configuration (exit code 2)."""


class CheckFailed(RuntimeError):
    """A verification suite reported failures (exit code 1)."""


# -- typed keys -----------------------------------------------------------------


def _int_list(text):
    vals = [int(v) for v in str(text).replace(" ", "").split(",") if v]
    if not vals:
        raise ValueError("empty list")
    return vals


def _float_list(text):
    vals = [float(v) for v in str(text).replace(" ", "").split(",") if v]
    if not vals:
        raise ValueError("empty list")
    return vals


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*opts):
    def parse(text):
        if text not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return text
    return parse


# name -> (parser, default, help)
KEYS = {
    "a": (float, math.sqrt(2.0), "well stretch a (b = 1/a)"),
    "lam": (float, 0.5, "boundary mixing lambda in (0,1]"),
    "n": (int, 16, "lattice resolution"),
    "n_list": (_int_list, [16, 32], "comma separated resolutions for studies"),
    "d": (float, 4.0, "domain length along the interface normal"),
    "l": (float, 1.0, "domain width"),
    "sign": (_choice("+", "-"), "+", "domain orientation"),
    "density": (_choice("tilde", "truncated", "one_well"), "truncated", "energy density"),
    "init": (_choice("affine", "laminate", "perturbed", "profile"), "affine", "starting state when no input file is given"),
    "input": (str, "", "deformation file to load instead of building one"),
    "interfaces": (int, 1, "interfaces of a laminate start"),
    "amplitude": (float, 0.02, "bump amplitude of perturbed starts"),
    "noise": (float, 0.02, "per-node jitter of perturbed starts (lattice spacings)"),
    "method": (_choice("lbfgs", "gradient_descent"), "lbfgs", "descent method"),
    "max_iters": (int, 0, "iteration cap (0 = 50 n^2)"),
    "grad_tol": (float, 0.0, "gradient tolerance (0 = 1e-8 n)"),
    "memory": (int, 10, "L-BFGS memory"),
    "seed": (int, 0, "random seed"),
    "restarts": (int, 5, "perturbed restarts for surface scaling"),
    "kind": (_choice(*layers.KINDS), "C_minus", "layer problem"),
    "V1": (_choice("U0", "U1", "QU1", "QtU1", "F"), "U0", "left far-field gradient"),
    "V2": (_choice("U0", "U1", "QU1", "QtU1", "F"), "QtU1", "right far-field gradient"),
    "m1": (float, 1.0, "layer domain length"),
    "m2": (float, 1.0, "layer domain width"),
    "m1_list": (_float_list, [1.0, 2.0], "layer lengths of a scaling study"),
    "m2_list": (_float_list, [1.0, 2.0], "layer widths of a scaling study"),
    "theta": (float, 0.25, "bad-pair fraction of the grid perturbation"),
    "chain_length": (int, 50, "intervals in the chain simulation"),
    "resolution": (int, 1000, "cells per interval"),
    "mode": (_choice("worst", "random"), "worst", "bad-pair placement"),
    "samples": (int, 10_000, "rigidity pairs"),
    "alpha": (float, 0.1, "rigidity disc radius fraction"),
    "suite_size": (int, 200, "random configurations per verify suite"),
    "quick": (_bool, False, "smaller calibration samples"),
    "out": (str, "", f"output directory (default ${OUT_ENV} or ./twowell_out)"),
    "fixtures": (str, "", "fixture file (default: the packaged one)"),
}


def _validate(v):
    if not v["a"] > 0:
        raise ConfigError("a must satisfy a > 0")
    if abs(v["a"] - 1.0) < 1e-12:
        raise ConfigError("a must differ from 1")
    if not 0.0 < v["lam"] <= 1.0:
        raise ConfigError("λ ∈ (0,1] required (lam)")
    for k in ("n", "interfaces", "restarts", "memory", "samples", "suite_size", "chain_length"):
        if v[k] < (0 if k == "interfaces" else 1):
            raise ConfigError(f"{k} must be at least {0 if k == 'interfaces' else 1}")
    if any(n < 1 for n in v["n_list"]):
        raise ConfigError("n_list entries must be at least 1")
    for k in ("d", "l", "m1", "m2"):
        if not v[k] > 0:
            raise ConfigError(f"{k} must be positive")
    if not 0.0 <= v["theta"] < 1.0:
        raise ConfigError("theta ∈ [0,1) required")
    if not 0.0 < v["alpha"] < 0.125:
        raise ConfigError("alpha ∈ (0,1/8) required")
    if v["max_iters"] < 0 or v["grad_tol"] < 0:
        raise ConfigError("max_iters and grad_tol must be nonnegative")
    if v["resolution"] < 1000:
        raise ConfigError("resolution must be at least 1000")
    if v["input"] and not Path(v["input"]).is_file():
        raise ConfigError(f"input file {v['input']} does not exist")
    if v["fixtures"] and not Path(v["fixtures"]).is_file():
        raise ConfigError(f"fixture file {v['fixtures']} does not exist")


def read_config_file(path):
    """Parse ``key = value`` lines; returns {key: (raw value, 'file:path:line')}."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "command":
            out[key] = (val, f"file:{path}:{ln}")
            continue
        if key not in KEYS:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        out[key] = (val, f"file:{path}:{ln}")
    return out


class RunConfig:
    """Validated values plus, per key, where the value came from."""

    def __init__(self, command, values, provenance):
        self.command = command
        self.values = values
        self.provenance = provenance

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def echo(self):
        return {"command": self.command,
                "values": {k: self.values[k] for k in sorted(self.values)},
                "provenance": {k: self.provenance[k] for k in sorted(self.provenance)}}


def build_parser():
    p = argparse.ArgumentParser(prog="twowell", description="Two-well lattice energy tools.")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="flat key = value config file")
    for key, (_, default, hlp) in KEYS.items():
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, help=f"{hlp} [{default}]")
    return p


def parse_config(argv=None):
    """Merge defaults, the config file and flags into a :class:`RunConfig`."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise ConfigError("invalid command line (see usage above)") from None
    raw = {k: (default, "default") for k, (_, default, _) in KEYS.items()}
    command = None
    if ns.config:
        fromfile = read_config_file(ns.config)
        if "command" in fromfile:
            command = fromfile.pop("command")[0]
        raw.update(fromfile)
    for key in KEYS:
        val = getattr(ns, key)
        if val is not None:
            raw[key] = (val, f"flag:--{key.replace('_', '-')}")
    if ns.command:
        command = ns.command
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}")
    values, prov = {}, {}
    for key, (val, src) in raw.items():
        if src == "default":
            values[key] = val
        else:
            try:
                values[key] = KEYS[key][0](val)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{src}: bad value {val!r} for {key}: {exc}") from None
        prov[key] = src
    if not values["out"]:
        values["out"] = os.environ.get(OUT_ENV) or "twowell_out"
        prov["out"] = f"env:{OUT_ENV}" if os.environ.get(OUT_ENV) else "default"
    _validate(values)
    return RunConfig(command, values, prov)


# -- output helpers --------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


class Artifacts:
    def __init__(self, root, meta):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.meta = meta
        self.paths = []

    def path(self, name):
        p = self.root / name
        self.paths.append(p)
        return p

    def csv(self, name, header, rows):
        keys = list(self.meta)
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(header) + keys)
            for r in rows:
                w.writerow([_fmt(x) for x in r] + [self.meta[k] for k in keys])

    def json(self, name, obj):
        d = {"meta": self.meta}
        d.update(obj)
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(calibrate.scrub_timing(d)), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def manifest(self, cfg, status, extra=None):
        entries = []
        for p in self.paths:
            data = p.read_bytes()
            entries.append({"path": p.name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
        man = {"schema": "twowell-manifest/1", "command": cfg.command, "status": status,
               "config": cfg.echo(), "meta": self.meta, "artifacts": entries}
        if extra:
            man.update(extra)
        with open(self.root / "manifest.json", "w") as fh:
            json.dump(_jsonable(man), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return man


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# -- state construction ------------------------------------------------------------------


def _matrix(name, wells, lam):
    return {"U0": wells.U0, "U1": wells.U1, "QU1": wells.QU1, "QtU1": wells.QtU1, "F": wells.F(lam)}[name]


def build_state(cfg, wells, n=None):
    if cfg.input:
        return lattice.load(cfg.input)
    n = n or cfg.n
    D = lattice.build_domain(cfg.d, cfg.l, cfg.sign, n)
    lam = cfg.lam
    if cfg.init == "affine":
        return initialize(D, "affine", wells, lam)
    if cfg.init == "profile":
        V2 = wells.QU1 if cfg.sign == "+" else wells.QtU1
        return initialize(D, "profile", wells, lam, V1=wells.U0, V2=V2)
    if cfg.init == "laminate":
        k = cfg.interfaces
        other = wells.QU1 if cfg.sign == "+" else wells.QtU1
        grads = [(wells.U0, other)[t % 2] for t in range(k + 1)]
        h = D.d / math.sqrt(2.0)
        offs = list(np.linspace(-h, h, k + 2)[1:-1]) if k else []
        cx, cy = D.center
        nu = np.array([1.0, 1.0 if cfg.sign == "+" else -1.0]) / math.sqrt(2.0)
        base = cx * nu[0] + cy * nu[1]
        return initialize(D, "laminate", wells, lam, gradients=grads, offsets=[base + t for t in offs])
    base = initialize(D, "affine", wells, lam)
    return initialize(D, "perturbed", wells, lam, base=base, amplitude=cfg.amplitude, seed=cfg.seed, noise=cfg.noise)


def _opts(cfg):
    return MinimizeOptions(max_iters=cfg.max_iters or None, grad_tol=cfg.grad_tol or None, method=cfg.method,
                           memory=cfg.memory, seed=cfg.seed)


def _fixtures(cfg):
    return calibrate.load_fixtures(cfg.fixtures or None)


# -- commands ----------------------------------------------------------------------------------


def cmd_wells(cfg, wells, art):
    nu_p = wells.jump(+1)
    nu_m = wells.jump(-1)
    art.json("wells.json", {
        "wells": wells.to_dict(),
        "F_lambda": wells.F(cfg.lam),
        "QU1": wells.QU1,
        "QtU1": wells.QtU1,
        "rank_one": {"plus": {"amplitude": nu_p[0], "normal": nu_p[1]}, "minus": {"amplitude": nu_m[0], "normal": nu_m[1]}},
    })
    return 0


def cmd_energy(cfg, wells, art):
    u = build_state(cfg, wells)
    rep = energy.hamiltonian(u, wells, cfg.density)
    art.csv("energy_sites.csv", ["i", "j", "h_site", "dist_K", "bracket_U0", "bracket_U1"], rep.rows())
    art.json("energy.json", rep.summary())
    return 0


def cmd_minimize(cfg, wells, art):
    u = build_state(cfg, wells)
    res = minimize(u, wells, cfg.density, _opts(cfg))
    n = u.domain.n
    art.csv("trace.csv", ["iteration", "energy", "rescaled"], ((k, e, n * e) for k, e in enumerate(res.energy_trace)))
    ck = art.path("final.txt")
    write_checkpoint(res, ck, cfg.seed)
    art.paths.append(Path(str(ck) + ".json"))
    summ = analysis.interface_extract(res.final, wells)
    bulk, count = analysis.bulk_well_distance(res.final, wells, summ)
    art.json("minimize.json", {"energy": res.energy, "rescaled": res.rescaled, "iterations": res.iterations,
                               "termination": res.termination, "admissible": res.admissible,
                               "grad_norm": res.grad_norm, "interfaces": summ.to_dict(),
                               "bulk_mean_dist": bulk, "bulk_triangles": count})
    return 0


def cmd_layer(cfg, wells, art):
    V1, V2 = _matrix(cfg.V1, wells, cfg.lam), _matrix(cfg.V2, wells, cfg.lam)
    lam = cfg.lam if cfg.kind.startswith("B") else None
    est = layers.estimate_layer_energy(cfg.kind, V1, V2, wells, cfg.m1, cfg.m2, cfg.n_list, lam, cfg.density, _opts(cfg), cfg.seed)
    art.csv("layer.csv", ["n_res", "m1", "m2", "estimate", "residual"],
            ([k, cfg.m1, cfg.m2, est.per_n[k], est.fit_residual] for k in sorted(est.per_n)))
    art.json("layer.json", est.to_dict())
    layers.write_plot_script(art.path("plot_study.py"))
    return 0 if not est.failures else 1


def cmd_scaling(cfg, wells, art):
    V1, V2 = _matrix(cfg.V1, wells, cfg.lam), _matrix(cfg.V2, wells, cfg.lam)
    lam = cfg.lam if cfg.kind.startswith("B") else None
    rep = layers.scaling_study(cfg.kind, V1, V2, wells, cfg.m1_list, cfg.m2_list, cfg.n, lam, _opts(cfg), cfg.density, cfg.seed)
    art.csv("scaling.csv", ["m1", "m2", "estimate", "iterations", "termination"],
            ([r["m1"], r["m2"], r["estimate"], r["iterations"], r["termination"]] for r in rep.table))
    art.json("scaling.json", {"m1_spread": rep.m1_spread, "m2_ratio": rep.m2_ratio, "m1_ok": rep.m1_ok,
                              "m2_ok": rep.m2_ok, "table": rep.table})
    layers.write_plot_script(art.path("plot_study.py"))
    return 0


def cmd_surface(cfg, wells, art):
    rows = layers.surface_scaling_study(cfg.lam, wells, cfg.n_list, cfg.restarts, cfg.seed, _opts(cfg), cfg.density)
    flat = []
    for r in rows:
        for p in r.per_start:
            flat.append([r.n, p["start"], p["rescaled"], p["iterations"], p["termination"], r.best])
    art.csv("surface_scaling.csv", ["n_res", "start", "rescaled", "iterations", "termination", "best_rescaled"], flat)
    ok, ratio = layers.surface_bounded(rows)
    art.json("surface_scaling.json", {"bounded": ok, "max_over_min": ratio,
                                      "rows": [{"n": r.n, "best": r.best, "best_start": r.best_start,
                                                "failures": r.failures} for r in rows]})
    layers.write_plot_script(art.path("plot_study.py"))
    return 0


def cmd_spin(cfg, wells, art):
    u = build_state(cfg, wells)
    rep = energy.hamiltonian(u, wells, "truncated")
    sf = spin.spin_field(u, rep, wells)
    try:
        fx = _fixtures(cfg)
        C, K = fx["spin_C"], fx["perimeter_C"]
    except (OSError, KeyError):
        C = K = None
    rec = spin.comparison_check(u, wells, C, K, report=rep)
    art.csv("spin.csv", ["i", "j", "sigma"], sf.rows())
    art.json("spin.json", rec.to_dict())
    return 0 if rec.edges_ok and rec.ratio_ok and rec.perimeter_ok else 1


def cmd_coarea(cfg, wells, art):
    u = build_state(cfg, wells)
    rep = energy.hamiltonian(u, wells, cfg.density)
    f = analysis.ScalarLatticeField(u.domain, rep.site_density)
    try:
        bound = _fixtures(cfg)["coarea_C"]
    except (OSError, KeyError):
        bound = None
    res = analysis.coarea_check(f, bound=bound)
    art.json("coarea.json", {"lhs": res.lhs, "rhs": res.rhs, "ratio": res.ratio, "bound": res.bound, "ok": res.ok})
    return 0 if res.ok else 1


def cmd_rigidity(cfg, wells, art):
    g = calibrate.RIGIDITY_GEOMETRY
    u = lattice.load(cfg.input) if cfg.input else calibrate.rigidity_configuration(cfg.n, wells, cfg.seed)
    c = _fixtures(cfg)["rigidity_c"]
    res = analysis.rigidity_sample(u, wells, g["x0"], g["y0"], cfg.alpha, cfg.samples, cfg.seed, c=c)
    art.csv("rigidity_pairs.csv", ["pair", "ratio", "deviation_over_mu"],
            ((k, r, d) for k, (r, d) in enumerate(zip(res.ratios, res.deviation_over_mu))))
    art.json("rigidity.json", res.summary())
    return 0 if res.fraction_within >= 0.9 else 1


def cmd_perturb_grid(cfg, wells, art):
    tr = gridperturb.recursion_sequence(cfg.theta)
    seq = tr.sequence
    stride = max(1, len(seq) // 10000)
    idx = list(range(0, len(seq), stride))
    if idx[-1] != len(seq) - 1:
        idx.append(len(seq) - 1)
    art.csv("recursion.csv", ["step", "x_m", "feasible_fraction"], ((k, seq[k], 1.0 - seq[k]) for k in idx))
    out = {"recursion": gridperturb.summary(tr)}
    try:
        ch = gridperturb.simulate_chain_selection(cfg.theta, cfg.chain_length, cfg.seed, cfg.resolution, cfg.mode, strict=False)
        art.csv("chain.csv", ["step", "feasible_fraction", "bad_fraction"], ch.rows())
        out["chain"] = gridperturb.summary(ch)
    except ValueError as exc:
        out["chain"] = {"error": str(exc)}
    art.json("perturb_grid.json", out)
    layers.write_plot_script(art.path("plot_study.py"))
    return 0


def cmd_verify(cfg, wells, art):
    fx = _fixtures(cfg)
    checks = calibrate.run_verify(fx, wells, cfg.suite_size, seed=calibrate.SUITE_SEED + cfg.seed)
    art.csv("verify.csv", ["check", "passed", "detail"], ((c.name, c.passed, json.dumps(_jsonable(c.detail), sort_keys=True)) for c in checks))
    art.json("verify.json", {"checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks]})
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def cmd_calibrate(cfg, wells, art):
    fx = calibrate.calibrate(wells, quick=cfg.quick, layer_n=tuple(cfg.n_list), log=lambda m: print(m, file=sys.stderr))
    calibrate.write_fixtures(fx, art.path("fixtures.json"))
    return 0


def cmd_export(cfg, wells, art):
    u = build_state(cfg, wells)
    lattice.save(u, art.path("deformation.txt"))
    D = u.domain
    I, J = D.index_grid
    X = D.coords
    m = D.exists
    art.csv("nodes.csv", ["i", "j", "role", "x", "y", "ux", "uy"],
            zip(I[m], J[m], D.role[m], X[m][:, 0], X[m][:, 1], u.P[m][:, 0], u.P[m][:, 1]))
    layers.write_plot_script(art.path("plot_study.py"))
    return 0


HANDLERS = {
    "wells": cmd_wells, "energy": cmd_energy, "minimize": cmd_minimize, "layer": cmd_layer,
    "scaling": cmd_scaling, "surface-scaling": cmd_surface, "spin": cmd_spin, "coarea": cmd_coarea,
    "rigidity": cmd_rigidity, "perturb-grid": cmd_perturb_grid, "verify": cmd_verify,
    "calibrate": cmd_calibrate, "export": cmd_export,
}


def dispatch(cfg):
    """Run one command; returns the exit status. Raises on errors."""
    wells = make_wells(cfg.a)
    meta = {"n": cfg.n, "a": repr(cfg.a), "lam": repr(cfg.lam), "seed": cfg.seed,
            "fixture_version": calibrate.FIXTURE_VERSION}
    art = Artifacts(cfg.out, meta)
    art.json("config.json", cfg.echo())
    status = HANDLERS[cfg.command](cfg, wells, art)
    art.manifest(cfg, "ok" if status == 0 else "failed", {"exit_code": status})
    return status


def _error(code, exc, out=None):
    err = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(err, ensure_ascii=False), file=sys.stderr)
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(json.dumps(err, indent=2, ensure_ascii=False) + "\n")
        except OSError:
            pass
    return code


def main(argv=None):
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        return _error(2, exc)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return dispatch(cfg)
    except (ConfigError, ConfigurationError) as exc:
        return _error(2, exc, cfg.out)
    except Exception as exc:  # domain failure: report it machine-readably
        if os.environ.get("TWOWELL_DEBUG"):
            traceback.print_exc()
        return _error(1, exc, cfg.out)


if __name__ == "__main__":
    sys.exit(main())
