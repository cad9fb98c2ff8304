"""Bad-set recursion for perturbed grids and a Monte Carlo model of chain selection.

A chain of unit intervals is linked pairwise by sets of admissible ("rigid")
pairs of measure 1 - theta. Starting from a whole interval, the points of the
next interval that still have an admissible partner form the feasible set.
In the adversarial placement the bad volume fraction follows
x_m = theta / (1 - x_{m-1}).
"""
import csv
import json
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit

CONVERGED, DIVERGED, MAX_STEPS = "converged", "diverged", "max_steps"


@dataclass
class RecursionTrace:
    theta: float
    sequence: np.ndarray = field(repr=False)
    status: str
    limit: float = None

    @property
    def steps(self):
        return len(self.sequence) - 1


@njit(cache=True)
def _iterate(theta, m_max, tol, out):
    out[0] = theta
    if theta >= 1.0:
        return 0, 1
    for m in range(1, m_max + 1):
        x = theta / (1.0 - out[m - 1])
        out[m] = x
        if x >= 1.0 or x < 0.0:
            return m, 1
        if abs(x - out[m - 1]) <= tol:
            return m, 0
    return m_max, 2


def recursion_sequence(theta, m_max=2_000_000, tol=1e-12):
    """Iterate x_m = theta / (1 - x_{m-1}) from x_0 = theta.

    Stops when |x_m - x_{m-1}| <= tol (converged) or x_m >= 1 (diverged).
    """
    theta = float(theta)
    if not 0.0 <= theta < 1.0:
        raise ValueError("theta must lie in [0, 1)")
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    buf = np.empty(int(m_max) + 1)
    last, code = _iterate(theta, int(m_max), float(tol), buf)
    seq = buf[: last + 1].copy()
    status = (CONVERGED, DIVERGED, MAX_STEPS)[code]
    return RecursionTrace(theta, seq, status, float(seq[-1]) if status == CONVERGED else None)


@dataclass
class LimitResult:
    theta: float
    value: float
    diverges: bool


def recursion_limit(theta):
    """Closed-form limit (1 - sqrt(1 - 4 theta)) / 2, flagged divergent for theta > 1/4."""
    theta = float(theta)
    if not 0.0 <= theta < 1.0:
        raise ValueError("theta must lie in [0, 1)")
    if theta > 0.25:
        return LimitResult(theta, float("nan"), True)
    return LimitResult(theta, 0.5 * (1.0 - np.sqrt(1.0 - 4.0 * theta)), False)


class Falsification(RuntimeError):
    pass


@dataclass
class ChainTrace:
    theta: float
    mode: str
    resolution: int
    feasible: np.ndarray
    bound: float
    ok: bool
    seed: int = None
    neighbors: int = 1

    @property
    def bad(self):
        return 1.0 - self.feasible

    def rows(self):
        for k, f in enumerate(self.feasible):
            yield k, float(f), float(1.0 - f)


def simulate_chain_selection(theta, chain_length, seed=0, resolution=1000, mode="worst", neighbors=1, strict=True):
    """Feasible fraction of each interval along a chain of admissible-pair sets.

    ``mode='worst'`` spends the bad-pair budget theta * R^2 on whole columns
    above the current feasible set, killing floor(theta R^2 / |F|) points of
    the next interval. ``mode='random'`` marks each pair bad independently
    with probability theta; a point survives if one of its pairs with the
    current feasible set is good. Several neighbours share the budget, so the
    per-pair rate becomes theta / neighbors.

    Step k of the returned trace is the feasible fraction of interval k
    (interval 0 is entirely feasible).
    """
    theta = float(theta)
    if not 0.0 <= theta < 1.0:
        raise ValueError("theta must lie in [0, 1)")
    if resolution < 1000:
        raise ValueError("resolution must be at least 1000 cells")
    if mode not in ("worst", "random"):
        raise ValueError("mode must be 'worst' or 'random'")
    R = int(resolution)
    th = theta / max(int(neighbors), 1)
    rng = np.random.default_rng(int(seed))
    F = R
    out = [1.0]
    for _ in range(int(chain_length)):
        if F == 0:
            out.append(0.0)
            continue
        if mode == "worst":
            budget = int(np.floor(th * R * R + 1e-9))
            killed = min(R, budget // F)
            F = R - killed
        else:
            bad_counts = rng.binomial(F, th, size=R)
            F = int(np.sum(bad_counts < F))
        out.append(F / R)
    feas = np.array(out)
    lim = recursion_limit(min(th, 0.25))
    bound = 1.0 - lim.value - 2.0 / R if th <= 0.25 else 0.0
    ok = bool(np.all(feas >= bound)) if th <= 0.25 else True
    if strict and th <= 0.25 and np.any(feas <= 0.0):
        raise Falsification(f"feasible set exhausted at theta = {theta} ({mode} mode)")
    return ChainTrace(theta, mode, R, feas, bound, ok, int(seed), int(neighbors))


def write_trace_csv(trace, path, **meta):
    keys = list(meta)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "feasible_fraction", "bad_fraction"] + keys)
        for k, f, b in trace.rows():
            w.writerow([k, repr(f), repr(b)] + [meta[key] for key in keys])


def write_recursion_csv(trace, path, **meta):
    keys = list(meta)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "feasible_fraction", "bad_fraction"] + keys)
        seq = trace.sequence
        stride = max(1, len(seq) // 10000)
        idx = list(range(0, len(seq), stride))
        if idx[-1] != len(seq) - 1:
            idx.append(len(seq) - 1)
        for k in idx:
            w.writerow([k, repr(float(1.0 - seq[k])), repr(float(seq[k]))] + [meta[key] for key in keys])


def summary(trace):
    if isinstance(trace, RecursionTrace):
        return {"theta": trace.theta, "status": trace.status, "limit": trace.limit, "steps": trace.steps,
                "closed_form": recursion_limit(trace.theta).value}
    return {"theta": trace.theta, "mode": trace.mode, "resolution": trace.resolution, "final": float(trace.feasible[-1]),
            "min": float(trace.feasible.min()), "bound": trace.bound, "ok": trace.ok, "seed": trace.seed}


def write_summary_json(trace, path, **meta):
    d = dict(meta)
    d.update(summary(trace))
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
