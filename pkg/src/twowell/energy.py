"""Stencil densities, lattice Hamiltonians and their gradients."""
import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kernels import ONE_WELL, TILDE, TRUNCATED, cutoffs
from .lattice import node_gradients
from .wells import _optimal_rotation, dist_to_K_batch, dist_to_well_batch


class ContractViolation(ValueError):
    pass


@dataclass
class Stencil:
    """The four difference vectors entering one site density.

    ``entries`` rows: d1 u^{i,j}, d1 u^{i-1,j}, d2 u^{i,j}, d2 u^{i,j-1}.
    """

    entries: np.ndarray
    present: np.ndarray = field(default_factory=lambda: np.ones(4, dtype=bool))

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float).reshape(4, 2)
        self.present = np.asarray(self.present, dtype=bool).reshape(4)

    @classmethod
    def from_gradient(cls, F):
        F = np.asarray(F, dtype=float)
        return cls(np.array([F[:, 0], F[:, 0], F[:, 1], F[:, 1]]))

    @property
    def norm(self):
        e = self.entries[self.present]
        return float(np.sqrt(np.sum(e * e)))


def _eval(s, wells, kind):
    (r0, r1), (w0, w1) = cutoffs(wells.cbar)
    if kind == ONE_WELL:
        r0, r1 = w0, w1
    h, A, B, _ = kernels.stencil_density(s.entries, s.present, wells.a, wells.b, wells.cbar, kind, r0, r1)
    return float(h), float(A), float(B)


def bracket_U0(s, wells):
    return _eval(s, wells, TILDE)[1]


def bracket_U1(s, wells):
    return _eval(s, wells, TILDE)[2]


def density_tilde(s, wells):
    """Product of the two well brackets."""
    return _eval(s, wells, TILDE)[0]


def density_truncated(s, wells):
    """Smoothly cut-off density with quadratic growth beyond 20 (cbar + 1)."""
    return _eval(s, wells, TRUNCATED)[0]


def density_one_well(s, wells):
    return _eval(s, wells, ONE_WELL)[0]


def _resolve(density):
    if callable(density):
        if not getattr(density, "lower_bound_contract", False):
            raise ContractViolation(
                "plugin density must declare lower_bound_contract = True "
                "(it has to dominate a multiple of the truncated density)"
            )
        return None
    try:
        return kernels.DENSITY_CODES[density]
    except KeyError:
        raise ValueError(f"unknown density {density!r}") from None


def site_fields(defo, wells, density="truncated", want_grad=False, backend=None):
    """(h, A, B, G) arrays on the domain's padded index box."""
    D = defo.domain
    code = _resolve(density)
    if code is None:
        ent, pres = kernels._stencil_numpy(defo.P, D.exists, float(D.n))
        h_in = np.asarray(density(ent, pres, wells), dtype=float)
        s_in = D.node[1:-1, 1:-1]
        if np.any(h_in[s_in] < 0):
            raise ContractViolation("plugin density returned negative values")
        _, A_in, B_in, _ = kernels.stencil_density(ent, pres, wells.a, wells.b, wells.cbar, TILDE, 0.0, 1.0)
        h = np.zeros(D.shape)
        A = np.zeros(D.shape)
        B = np.zeros(D.shape)
        h[1:-1, 1:-1] = np.where(s_in, h_in, 0.0)
        A[1:-1, 1:-1] = np.where(s_in, A_in, 0.0)
        B[1:-1, 1:-1] = np.where(s_in, B_in, 0.0)
        if want_grad:
            raise ValueError("gradients are only available for the built-in densities")
        return h, A, B, None
    return kernels.site_energy(defo.P, D.exists, D.node, D.n, wells.a, wells.b, wells.cbar, code, want_grad, backend)


@dataclass
class EnergyReport:
    total: float
    rescaled: float
    n: int
    a: float
    lam: float
    density: str
    site_density: np.ndarray = field(repr=False)
    dist_field: np.ndarray = field(repr=False)
    bracket_U0: np.ndarray = field(repr=False)
    bracket_U1: np.ndarray = field(repr=False)
    domain: object = field(repr=False, default=None)

    def rows(self):
        D = self.domain
        I, J = D.index_grid
        m = D.node
        return zip(I[m], J[m], self.site_density[m], self.dist_field[m], self.bracket_U0[m], self.bracket_U1[m])

    def summary(self):
        return {
            "total": self.total,
            "rescaled": self.rescaled,
            "n": self.n,
            "a": self.a,
            "lambda": self.lam,
            "density": self.density,
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "h_site", "dist_K", "bracket_U0", "bracket_U1"])
            for i, j, h, d, b0, b1 in self.rows():
                w.writerow([int(i), int(j), repr(float(h)), repr(float(d)), repr(float(b0)), repr(float(b1))])

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def hamiltonian(defo, wells, density="truncated", backend=None):
    """Total lattice energy sum over nodes of n^-2 h^{ij}, with per-site fields."""
    D = defo.domain
    h, A, B, _ = site_fields(defo, wells, density, backend=backend)
    total = float(np.sum(h[D.node])) / D.n**2
    dist = np.full(D.shape, np.nan)
    G = node_gradients(defo)
    ok = D.node & np.all(np.isfinite(G), axis=(-2, -1))
    dist[ok] = dist_to_K_batch(G[ok], wells)
    name = density if isinstance(density, str) else getattr(density, "__name__", "plugin")
    return EnergyReport(
        total=total,
        rescaled=D.n * total,
        n=D.n,
        a=wells.a,
        lam=defo.lam,
        density=name,
        site_density=np.where(D.node, h, np.nan),
        dist_field=dist,
        bracket_U0=np.where(D.node, A, np.nan),
        bracket_U1=np.where(D.node, B, np.nan),
        domain=D,
    )


def total_energy(defo, wells, density="truncated", backend=None):
    h, _, _, _ = site_fields(defo, wells, density, backend=backend)
    return float(np.sum(h[defo.domain.node])) / defo.domain.n**2


def raw_gradient(defo, wells, density="truncated", backend=None):
    """(H, dH/dP) with respect to every stored position, bc and ghosts included."""
    D = defo.domain
    h, _, _, G = site_fields(defo, wells, density, want_grad=True, backend=backend)
    return float(np.sum(h[D.node])) / D.n**2, G


def energy_gradient(defo, wells, density="truncated", backend=None):
    """Gradient restricted to free nodes, plus the derivative in the right translation.

    Returns ``(G, dc)``: ``G`` is zero on bc layers and ghosts; ``dc`` sums the
    raw gradient over the right bc layer and its ghosts.
    """
    D = defo.domain
    _, G = raw_gradient(defo, wells, density, backend)
    right = D.right_side
    dc = G[right].sum(axis=0)
    G = G.copy()
    G[D.left_side | right | ~D.exists] = 0.0
    return G, dc


def well_distance_fields(defo, wells):
    """Node-gradient distances to SO(2)U0 and SO(2)U1."""
    D = defo.domain
    G = node_gradients(defo)
    ok = D.node & np.all(np.isfinite(G), axis=(-2, -1))
    d0 = np.full(D.shape, np.nan)
    d1 = np.full(D.shape, np.nan)
    d0[ok] = dist_to_well_batch(G[ok], wells.U0)
    d1[ok] = dist_to_well_batch(G[ok], wells.U1)
    return d0, d1


def stencil_well_distance(ent, pres, wells):
    """Distance of a stencil to the nearest rigid copy of a well stencil.

    min over k and R in SO(2) of the sum over present entries of
    |entry - R U_k e|^2 (entries 0, 1 against the first column, 2, 3 against
    the second), returned as its square root. Vectorised over leading axes.
    """
    ent = np.asarray(ent, float)
    pres = np.asarray(pres, bool)
    w = pres[..., None]
    x = np.where(w, ent, 0.0)
    best = None
    for U in (wells.U0, wells.U1):
        cols = np.stack([U[:, 0], U[:, 0], U[:, 1], U[:, 1]])
        y = np.where(w, cols, 0.0)
        M = np.einsum("...ea,...eb->...ab", x, y)
        R = _optimal_rotation(M)
        r = x - np.einsum("...ab,...eb->...ea", R, y)
        d2 = np.sum(r * r, axis=(-2, -1))
        best = d2 if best is None else np.minimum(best, d2)
    return np.sqrt(best)


def site_stencils(defo):
    """Stencil entries (NI-2, NJ-2, 4, 2) and presence mask on the interior of the index box."""
    D = defo.domain
    return kernels._stencil_numpy(defo.P, D.exists, float(D.n))
