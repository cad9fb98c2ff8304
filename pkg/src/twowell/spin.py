"""Spin representation of a deformation and the comparison with the elastic energy."""
import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .energy import hamiltonian
from .lattice import StructureError, node_gradients
from .wells import dist_to_well_batch


class Falsification(AssertionError):
    """A per-edge density bound that is supposed to always hold was violated."""


@dataclass
class SpinField:
    domain: object
    sigma: np.ndarray = field(repr=False)
    mismatch_edges: np.ndarray = field(repr=False)
    h_spin: float = 0.0

    @property
    def n_mismatch(self):
        return len(self.mismatch_edges)

    @property
    def perimeter(self):
        """Total length of mismatch edges: count / n."""
        return self.n_mismatch / self.domain.n

    def rows(self):
        I, J = self.domain.index_grid
        m = self.domain.node
        return zip(I[m], J[m], self.sigma[m])


def _edges(mask):
    """Unordered nearest-neighbour node pairs as two boolean maps (horizontal, vertical)."""
    eh = np.zeros_like(mask)
    ev = np.zeros_like(mask)
    eh[:-1, :] = mask[:-1, :] & mask[1:, :]
    ev[:, :-1] = mask[:, :-1] & mask[:, 1:]
    return eh, ev


def spin_field(defo, report, wells):
    """sigma = +1 where h <= cbar/10 and dist(grad u, SO(2)U0) <= cbar/10, else -1."""
    D = defo.domain
    if report.domain is not D:
        raise StructureError("energy report was computed on a different domain")
    thr = wells.cbar / 10.0
    G = node_gradients(defo)
    m = D.node
    sigma = np.zeros(D.shape, dtype=np.int8)
    d0 = np.full(D.shape, np.inf)
    d0[m] = dist_to_well_batch(G[m], wells.U0)
    h = report.site_density
    plus = m & (h <= thr) & (d0 <= thr)
    sigma[m] = -1
    sigma[plus] = 1
    eh, ev = _edges(m)
    mh = eh.copy()
    mh[:-1, :] &= sigma[:-1, :] != sigma[1:, :]
    mv = ev.copy()
    mv[:, :-1] &= sigma[:, :-1] != sigma[:, 1:]
    a, b = np.nonzero(mh)
    c, d = np.nonzero(mv)
    i0, j0 = D.i0, D.j0
    edges = np.concatenate(
        [
            np.stack([a + i0, b + j0, a + 1 + i0, b + j0], axis=1),
            np.stack([c + i0, d + j0, c + i0, d + 1 + j0], axis=1),
        ]
    ).astype(np.int64)
    sf = SpinField(D, sigma, edges)
    sf.h_spin = spin_hamiltonian(sf)
    return sf


def spin_hamiltonian(sf):
    """Sum over ordered neighbour pairs of n^-2 (sigma - sigma')^2 = 8 (mismatch count) / n^2."""
    return 8.0 * sf.n_mismatch / sf.domain.n**2


def spin_hamiltonian_direct(sf):
    """Same value from the double sum over nodes and their four neighbours."""
    D = sf.domain
    s = sf.sigma.astype(float)
    m = D.node
    tot = 0.0
    for sh in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = np.roll(s, shift=(-sh[0], -sh[1]), axis=(0, 1))
        mn = np.roll(m, shift=(-sh[0], -sh[1]), axis=(0, 1))
        both = m & mn
        tot += np.sum((s[both] - nb[both]) ** 2)
    return tot / D.n**2


@dataclass
class ComparisonRecord:
    edge_violations: list
    min_minus_density: float
    energy: float
    h_spin: float
    ratio: float
    perimeter: float
    perimeter_ratio: float
    bound_C: float = None
    ratio_ok: bool = True
    perimeter_bound: float = None
    perimeter_ok: bool = True

    @property
    def edges_ok(self):
        return not self.edge_violations

    def to_dict(self):
        return {
            "edge_violations": len(self.edge_violations),
            "min_minus_density": self.min_minus_density,
            "energy": self.energy,
            "h_spin": self.h_spin,
            "ratio": self.ratio,
            "perimeter": self.perimeter,
            "perimeter_ratio": self.perimeter_ratio,
            "bound_C": self.bound_C,
            "ratio_ok": self.ratio_ok,
        }


def comparison_check(defo, wells, C=None, perimeter_bound=None, strict=False, report=None):
    """Per-edge density exceedance at the -1 endpoint and the ratio H_n / H_n^s.

    With ``strict`` an edge violation raises :class:`Falsification`.
    """
    D = defo.domain
    if report is None:
        report = hamiltonian(defo, wells, "truncated")
    sf = spin_field(defo, report, wells)
    thr = wells.cbar / 100.0 - 1e-12
    h = report.site_density
    viol = []
    mins = np.inf
    for e in sf.mismatch_edges:
        p = D.idx(e[0], e[1])
        q = D.idx(e[2], e[3])
        minus = q if sf.sigma[q] == -1 else p
        hv = float(h[minus])
        mins = min(mins, hv)
        if not hv > thr:
            viol.append((tuple(int(x) for x in e), hv))
    if viol and strict:
        raise Falsification(f"mismatch edge {viol[0][0]} has density {viol[0][1]!r} at its -1 endpoint")
    H = report.total
    hs = sf.h_spin
    ratio = H / hs if hs > 0 else np.inf
    nH = D.n * H
    prat = sf.perimeter / nH if nH > 0 else (0.0 if sf.perimeter == 0 else np.inf)
    rec = ComparisonRecord(viol, float(mins), H, hs, float(ratio), sf.perimeter, float(prat))
    if C is not None:
        rec.bound_C = C
        rec.ratio_ok = bool(H >= C * hs)
    if perimeter_bound is not None:
        rec.perimeter_bound = perimeter_bound
        rec.perimeter_ok = bool(sf.perimeter <= perimeter_bound * nH)
    return rec


def write_csv(sf, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "sigma"])
        for i, j, s in sf.rows():
            w.writerow([int(i), int(j), int(s)])


def write_json(sf, path, **extra):
    out = {"h_spin": sf.h_spin, "mismatch_count": sf.n_mismatch, "perimeter": sf.perimeter}
    out.update(extra)
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True, default=float)
