"""Boundary and internal layer energies on strip domains, and the limiting surface energy."""
import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import energy
from .lattice import ConfigurationError, Deformation, apply_boundary, blank, build_domain, standard_domain
from .optimize import (
    Constraints,
    MinimizeOptions,
    initialize,
    interface_normal,
    minimize,
    piecewise_affine,
    rank_one_defect,
)

KINDS = ("B_plus", "B_minus", "C_plus", "C_minus")
FIXTURE_VERSION = 1
AFFINE_FLOOR = 1e-9


def well_label(V, wells, tol=1e-9):
    """Name of a known matrix (U0, U1, QU1, QtU1, F) or None."""
    for name, M in (("U0", wells.U0), ("U1", wells.U1), ("QU1", wells.QU1), ("QtU1", wells.QtU1)):
        if np.allclose(V, M, atol=tol):
            return name
    return None


def _pin_width(domain):
    """Number of diagonal layers in each pinned far strip (1/8 of the full extent)."""
    return int(round(domain.n * domain.d / 4.0))


def layer_problem(kind, V1, V2, m1, m2, n, wells=None, lam=None, sign=None):
    """Starting profile and constraints for one layer-energy minimization.

    ``C_plus``/``C_minus``: profile V1 | V2 across the centre line of
    Omega^sign_{m1,m2}, far strips pinned to V1 x (left) and V2 x + b + c (right).
    ``B_plus``: F_lam on the left bc layer, V = V2 inside, right strip pinned up to c.
    ``B_minus``: V = V1 inside with the left strip pinned, F_lam + c on the right bc layer.
    """
    if kind not in KINDS:
        raise ConfigurationError(f"unknown layer kind {kind!r}")
    if kind.startswith("B"):
        if wells is None or lam is None:
            raise ConfigurationError("boundary layers need wells and lambda")
        sign = "+"
        F = wells.F(lam)
        if kind == "B_plus":
            V1 = F
        else:
            V2 = F
    else:
        sign = "+" if kind == "C_plus" else "-"
    V1 = np.asarray(V1, float)
    V2 = np.asarray(V2, float)
    nu = interface_normal(sign)
    defect = rank_one_defect(V1, V2, nu)
    if defect > 1e-9:
        raise ConfigurationError(f"V1 and V2 are not rank-one connected across the {sign} normal (defect {defect:.3e})")
    D = build_domain(m1, m2, sign, n, ghosts=kind.startswith("B"))
    X = D.coords
    E = D.exists
    T = D.diag_index()
    tlo = int(T[D.node].min())
    thi = int(T[D.node].max())
    w = _pin_width(D)
    if kind == "B_plus":
        offset = -m1 / np.sqrt(2.0)
        left = D.left_side
        right = E & (T >= thi - w)
    elif kind == "B_minus":
        offset = m1 / np.sqrt(2.0)
        left = E & (T <= tlo + w)
        right = D.right_side
    else:
        offset = 0.0
        left = E & (T <= tlo + w)
        right = E & (T >= thi - w)
    P = blank(D)
    P[E] = piecewise_affine(X[E], [V1, V2], [offset], nu)
    defo = Deformation(D, P, np.zeros(2), lam)
    free = E & ~(left | right)
    cons = Constraints(free=free, shift=right, shift_base=P[right].copy())
    return defo, cons


@dataclass
class LayerEnergyEstimate:
    kind: str
    wells: tuple
    geometry: tuple
    per_n: dict
    extrapolated: float
    fit_slope: float
    fit_residual: float
    failures: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["per_n"] = {str(k): v for k, v in self.per_n.items()}
        return d


def fit_inverse_n(ns, vals):
    """Least-squares fit vals = E_inf + A / n. Returns (E_inf, A, rms residual)."""
    ns = np.asarray(ns, float)
    vals = np.asarray(vals, float)
    if len(ns) == 1:
        return float(vals[0]), 0.0, float("nan")
    M = np.column_stack([np.ones_like(ns), 1.0 / ns])
    coef, *_ = np.linalg.lstsq(M, vals, rcond=None)
    res = vals - M @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res**2)))


def layer_minimum(kind, V1, V2, m1, m2, n, wells, lam=None, density="truncated", opts=None, seed=0, noise=0.02):
    """Rescaled minimum n H_n of one layer problem; returns (value, MinimizeResult).

    The exact profile sits on kinks of the angle terms where descent stalls,
    so the free nodes get a seeded jitter of ``noise`` lattice spacings first.
    A profile with exactly zero energy is returned as is.
    """
    from .optimize import MinimizeResult, perturb

    defo, cons = layer_problem(kind, V1, V2, m1, m2, n, wells, lam)
    if kind == "B_plus":
        V1 = wells.F(lam)
    elif kind == "B_minus":
        V2 = wells.F(lam)
    # a globally affine profile at a well is a zero-energy state; its computed
    # energy is rounding only (b = 1/a and rotated wells are inexact in binary)
    if np.allclose(V1, V2, atol=1e-12) and energy.total_energy(defo, wells, density) <= AFFINE_FLOOR:
        return 0.0, MinimizeResult(defo, [0.0], 0, "converged", True, 0.0)
    opts = opts or MinimizeOptions(max_iters=3000)
    if noise:
        defo = perturb(defo, 0.0, seed, free=cons.free, noise=noise)
    res = minimize(defo, wells, density, opts, constraints=cons)
    return n * res.energy, res


def estimate_layer_energy(kind, V1, V2, wells, m1=1.0, m2=1.0, n_list=(16, 32, 64), lam=None, density="truncated", opts=None, seed=0):
    """Layer energy at each resolution and its E_inf + A/n extrapolation."""
    per_n, fails, info = {}, {}, {}
    for n in n_list:
        t0 = time.time()
        try:
            val, res = layer_minimum(kind, V1, V2, m1, m2, n, wells, lam, density, opts, seed)
        except ConfigurationError:
            raise
        except Exception as exc:  # partial result with a failure flag
            fails[n] = repr(exc)
            continue
        per_n[n] = float(val)
        info[n] = {"iterations": res.iterations, "termination": res.termination, "seconds": time.time() - t0}
    ns = sorted(per_n)
    if ns:
        einf, slope, resid = fit_inverse_n(ns, [per_n[k] for k in ns])
    else:
        einf, slope, resid = float("nan"), float("nan"), float("nan")
    labels = (well_label(V1, wells) or "F", well_label(V2, wells) or "F")
    return LayerEnergyEstimate(kind, labels, (m1, m2), per_n, max(einf, 0.0), slope, resid, fails, info)


@dataclass
class ScalingReport:
    table: list
    m1_spread: float
    m2_ratio: float
    m1_ok: bool
    m2_ok: bool

    @property
    def ok(self):
        return self.m1_ok and self.m2_ok


def scaling_study(kind, V1, V2, wells, m1_list=(1, 2), m2_list=(1, 2), n=64, lam=None, opts=None, density="truncated", seed=0):
    """Layer minima over an m1 x m2 grid: checks m1-invariance and m2-linearity.

    Only the cells needed for the two checks are run: every m1 at the smallest
    m2, and every m2 at the smallest m1.
    """
    m1_list, m2_list = sorted(m1_list), sorted(m2_list)
    cells = [(m1, m2_list[0]) for m1 in m1_list] + [(m1_list[0], m2) for m2 in m2_list[1:]]
    table = []
    vals = {}
    for m1, m2 in cells:
        t0 = time.time()
        v, res = layer_minimum(kind, V1, V2, m1, m2, n, wells, lam, density, opts, seed)
        vals[(m1, m2)] = v
        table.append({"n": n, "m1": m1, "m2": m2, "estimate": v, "iterations": res.iterations,
                      "termination": res.termination, "seconds": time.time() - t0})
    row = np.array([vals[(m1, m2_list[0])] for m1 in m1_list])
    mean = row.mean()
    spread = float((row.max() - row.min()) / mean) if mean > 0 else 0.0
    base = vals[(m1_list[0], m2_list[0])]
    if len(m2_list) > 1 and base > 0:
        ratio = vals[(m1_list[0], m2_list[1])] / base
        expect = m2_list[1] / m2_list[0]
        m2_ok = 0.9 * expect <= ratio <= 1.1 * expect
    else:
        ratio, m2_ok = float("nan"), True
        if len(m2_list) > 1:
            ratio = 0.0
            m2_ok = vals[(m1_list[0], m2_list[1])] == 0.0
    return ScalingReport(table, spread, float(ratio), spread <= 0.10, bool(m2_ok))


# -- surface scaling on the standard domain -----------------------------------------------


def restart_states(domain, wells, lam, k, seed, amplitude=0.02, noise=0.02):
    """The k-th perturbed starting state of a restart sweep.

    The sweep cycles through: one U0|QU1 interface, pure U0, pure QU1,
    QU1|U0|QU1 and the homogeneous F_lam state.
    """
    U0, QU1 = wells.U0, wells.QU1
    d = domain.d / np.sqrt(2.0)
    kinds = [
        ("laminate-1", [U0, QU1], [0.0]),
        ("single-U0", [U0], []),
        ("single-QU1", [QU1], []),
        ("laminate-2", [QU1, U0, QU1], [-d / 3, d / 3]),
        ("affine-F", None, None),
    ]
    name, grads, offs = kinds[k % len(kinds)]
    if grads is None:
        base = initialize(domain, "affine", wells, lam)
    else:
        base = initialize(domain, "laminate", wells, lam, gradients=grads, offsets=offs)
    return name, initialize(domain, "perturbed", wells, lam, base=base, amplitude=amplitude, seed=seed * 1000 + k, noise=noise)


@dataclass
class SurfaceRow:
    n: int
    best: float
    best_start: str
    per_start: list
    failures: list
    best_result: object = field(default=None, repr=False)


def surface_scaling_study(lam, wells, n_list=(16, 32, 64), restarts=5, seed=0, opts=None, density="truncated", keep_best=False):
    """Best rescaled energy n H_n over perturbed restarts at each n."""
    rows = []
    for n in n_list:
        D = standard_domain(n)
        per, fails = [], []
        best, best_name, best_res = np.inf, None, None
        for k in range(restarts):
            try:
                name, st = restart_states(D, wells, lam, k, seed)
                if lam == 1.0 and name == "affine-F":
                    st = initialize(D, "affine", wells, lam)
                res = minimize(st, wells, density, opts)
            except Exception as exc:
                fails.append((k, repr(exc)))
                continue
            val = n * res.energy
            per.append({"start": name, "rescaled": val, "iterations": res.iterations, "termination": res.termination})
            if val < best:
                best, best_name, best_res = val, name, res
        rows.append(SurfaceRow(n, float(best), best_name, per, fails, best_res if keep_best else None))
    return rows


def surface_bounded(rows, factor=3.0):
    vals = np.array([r.best for r in rows])
    if np.all(vals == 0):
        return True, 1.0
    ratio = float(vals.max() / vals.min()) if vals.min() > 0 else np.inf
    return ratio <= factor, ratio


# -- limiting energy --------------------------------------------------------------------------


def fixture_key(kind, V1, V2, wells):
    a = well_label(V1, wells)
    b = well_label(V2, wells)
    if kind.startswith("C"):
        # point reflection through the interface swaps the two sides
        a, b = sorted([a, b])
    return f"{kind}:{a}|{b}"


def assemble_limit_energy(phases, lam, fixtures, wells, tol=1e-9):
    """Limiting surface energy of a laminate with gradients ``phases`` (left to right).

    Sum of the left boundary layer, one internal layer per jump between
    consecutive phases, and the right boundary layer. Returns a dict with the
    total, its 1/sqrt(2) rescaling and the individual terms.
    """
    if not phases:
        raise ConfigurationError("need at least one phase")
    phases = [np.asarray(V, float) for V in phases]
    F = wells.F(lam)
    table = fixtures.get("layers", fixtures)
    terms = []

    def lookup(kind, A, B):
        if np.allclose(A, B, atol=tol):
            return 0.0
        key = fixture_key(kind, A if kind != "B_plus" else B, B if kind != "B_minus" else A, wells)
        if kind.startswith("B"):
            flam = fixtures.get("lambda")
            if flam is not None and abs(flam - lam) > 1e-12:
                raise ConfigurationError(f"boundary fixtures were computed for lambda = {flam}, not {lam}")
            key = f"{kind}:{well_label(B if kind == 'B_plus' else A, wells)}"
        if key not in table:
            raise ConfigurationError(f"no fixture for {key}")
        v = table[key]
        return float(v["extrapolated"] if isinstance(v, dict) else v)

    terms.append(("B_plus", lookup("B_plus", F, phases[0])))
    for A, B in zip(phases[:-1], phases[1:]):
        if rank_one_defect(A, B, interface_normal("+")) <= tol:
            kind = "C_plus"
        elif rank_one_defect(A, B, interface_normal("-")) <= tol:
            kind = "C_minus"
        else:
            raise ConfigurationError("consecutive phases are not rank-one connected")
        terms.append((kind, lookup(kind, A, B)))
    terms.append(("B_minus", lookup("B_minus", phases[-1], F)))
    total = float(sum(v for _, v in terms))
    return {"total": total, "per_unit_length": total / np.sqrt(2.0), "terms": terms}


# -- output ------------------------------------------------------------------------------------


def write_scaling_csv(report, path, **meta):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        keys = list(meta)
        w.writerow(["n", "m1", "m2", "estimate", "residual"] + keys)
        for row in report.table:
            w.writerow([row["n"], row["m1"], row["m2"], repr(row["estimate"]), ""] + [meta[k] for k in keys])


def write_estimate_csv(est, path, **meta):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        keys = list(meta)
        w.writerow(["n", "m1", "m2", "estimate", "residual"] + keys)
        for n in sorted(est.per_n):
            w.writerow([n, est.geometry[0], est.geometry[1], repr(est.per_n[n]), repr(est.fit_residual)] + [meta[k] for k in keys])


def write_fixture_json(estimates, path, lam, a, n_list, seeds=()):
    out = {
        "version": FIXTURE_VERSION,
        "a": a,
        "lambda": lam,
        "n_list": list(n_list),
        "seeds": list(seeds),
        "layers": {},
    }
    for key, est in estimates.items():
        out["layers"][key] = est.to_dict()
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
    return out


PLOT_SCRIPT = '''"""Plot study CSVs written by twowell (needs matplotlib)."""
import csv
import sys

import matplotlib.pyplot as plt

for path in sys.argv[1:]:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    x = [float(r.get("n") or r.get("step")) for r in rows]
    ycol = next(k for k in ("estimate", "best_rescaled", "feasible_fraction") if k in rows[0])
    y = [float(r[ycol]) for r in rows]
    plt.plot(x, y, "o-", label=path)
plt.legend()
plt.savefig("study.png", dpi=120)
'''


def write_plot_script(path):
    with open(path, "w") as fh:
        fh.write(PLOT_SCRIPT)
