"""Discrete diagnostics: gradients, second differences, coarea, rigidity and interfaces."""
import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .lattice import ConfigurationError, interpolate, node_gradients, triangle_gradients
from .wells import dist_to_K_batch, dist_to_well_batch

NORMALS = {
    "(1,1)": np.array([1.0, 1.0]) / np.sqrt(2.0),
    "(1,-1)": np.array([1.0, -1.0]) / np.sqrt(2.0),
}


@dataclass
class ScalarLatticeField:
    domain: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.shape:
            raise ValueError("field shape does not match the domain index box")

    @classmethod
    def from_function(cls, domain, fn):
        v = np.full(domain.shape, np.nan)
        I, J = domain.index_grid
        m = domain.node
        v[m] = fn(I[m], J[m])
        return cls(domain, v)

    def __add__(self, other):
        return ScalarLatticeField(self.domain, self.values + other.values)

    def __mul__(self, s):
        return ScalarLatticeField(self.domain, self.values * s)

    __rmul__ = __mul__


# -- discrete gradient ----------------------------------------------------------


def discrete_gradient(f):
    """Forward differences (n(f^{i+1,j} - f^{ij}), n(f^{i,j+1} - f^{ij})).

    Returns ``(grad, missing)``. A component whose forward neighbour is not a
    node is NaN in ``grad`` and flagged in ``missing``.
    """
    D = f.domain
    n = D.n
    v = f.values
    m = D.node
    grad = np.full(D.shape + (2,), np.nan)
    missing = np.zeros(D.shape + (2,), dtype=bool)
    c = v[1:-1, 1:-1]
    for k, (nb, mk) in enumerate(((v[2:, 1:-1], m[2:, 1:-1]), (v[1:-1, 2:], m[1:-1, 2:]))):
        ok = m[1:-1, 1:-1] & mk
        grad[1:-1, 1:-1, k] = np.where(ok, n * (nb - c), np.nan)
        missing[1:-1, 1:-1, k] = m[1:-1, 1:-1] & ~mk
    return grad, missing


def gradient_norm(f):
    """|grad_n f| per node, omitted components counted as zero."""
    g, _ = discrete_gradient(f)
    out = np.sqrt(np.nansum(g * g, axis=-1))
    out[~f.domain.node] = np.nan
    return out


# -- second differences -----------------------------------------------------------


def second_differences(defo):
    """The three second-difference magnitudes, each scaled by n^2, NaN where undefined."""
    D = defo.domain
    n2 = D.n**2
    P = defo.P
    E = D.exists
    N = D.node
    out = np.full((3,) + D.shape, np.nan)
    c = P[1:-1, 1:-1]
    s = np.s_[1:-1, 1:-1]
    d11 = n2 * np.linalg.norm(P[2:, 1:-1] + P[:-2, 1:-1] - 2 * c, axis=-1)
    d22 = n2 * np.linalg.norm(P[1:-1, 2:] + P[1:-1, :-2] - 2 * c, axis=-1)
    # mixed: u^{i+1,j+1} - u^{i,j+1} - u^{i+1,j} + u^{ij}
    Pp = np.full_like(P, np.nan)
    Pp[:-1, :-1] = P[1:, 1:]
    d12 = n2 * np.linalg.norm(Pp[1:-1, 1:-1] - P[1:-1, 2:] - P[2:, 1:-1] + c, axis=-1)
    Epp = np.zeros_like(E)
    Epp[:-1, :-1] = E[1:, 1:]
    ok11 = N[s] & E[2:, 1:-1] & E[:-2, 1:-1]
    ok22 = N[s] & E[1:-1, 2:] & E[1:-1, :-2]
    ok12 = N[s] & Epp[s] & E[1:-1, 2:] & E[2:, 1:-1]
    out[0][s] = np.where(ok11, d11, np.nan)
    out[1][s] = np.where(ok22, d22, np.nan)
    out[2][s] = np.where(ok12, d12, np.nan)
    return out


def _safe_ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    r = np.where((num == 0) & np.isfinite(num), 0.0, r)
    return r


@dataclass
class SecondDiffRecord:
    max_ratio: float
    max_by_kind: tuple
    argmax: tuple
    bound: float = None
    ok: bool = True
    ratios: np.ndarray = field(default=None, repr=False)


def second_diff_ratios(defo, report):
    """Per-node ratios of the second differences against n sqrt(h)."""
    D = defo.domain
    n = D.n
    h = np.where(D.node, report.site_density, np.nan)
    sq = np.sqrt(np.maximum(h, 0.0))
    sd = second_differences(defo)
    r = np.full(sd.shape, np.nan)
    r[0] = _safe_ratio(sd[0], n * sq)
    r[1] = _safe_ratio(sd[1], n * sq)
    nb = np.full(D.shape, np.nan)
    nb[1:-1, 1:-1] = sq[1:-1, 1:-1] + sq[2:, 1:-1] + sq[:-2, 1:-1]
    r[2] = _safe_ratio(sd[2], n * nb)
    return r


def second_diff_check(defo, report, bound=None):
    """Largest ratio n^2 |second difference| / (n sqrt(h)), optionally tested against ``bound``."""
    if report.domain is not defo.domain:
        raise ConfigurationError("energy report belongs to a different domain")
    r = second_diff_ratios(defo, report)
    by_kind = tuple(float(np.nanmax(rk)) if np.any(np.isfinite(rk) | np.isinf(rk)) else 0.0 for rk in r)
    flat = np.where(np.isnan(r), -1.0, r)
    k, a, b = np.unravel_index(int(np.argmax(flat)), flat.shape)
    D = defo.domain
    mx = max(by_kind)
    ok = True if bound is None else bool(mx <= bound)
    return SecondDiffRecord(mx, by_kind, (int(k), int(a + D.i0), int(b + D.j0)), bound, ok, r)


def second_gradient_budget(defo):
    """sum over nodes of n^-2 |grad_n^2 u|^2 using the three second differences."""
    D = defo.domain
    sd = second_differences(defo)
    return float(np.nansum(sd**2)) / D.n**2


# -- coarea ---------------------------------------------------------------------------


def _edges_in(mask):
    """Horizontal and vertical lattice edges with both endpoints in ``mask``."""
    eh = mask[:-1, :] & mask[1:, :]
    ev = mask[:, :-1] & mask[:, 1:]
    return eh, ev


def level_set_perimeter(f, M, t):
    """Lattice perimeter in M of {f >= t}: boundary edge count / n."""
    S = (f.values >= t) & M
    eh, ev = _edges_in(M)
    cut = np.sum(eh & (S[:-1, :] != S[1:, :])) + np.sum(ev & (S[:, :-1] != S[:, 1:]))
    return cut / f.domain.n


@dataclass
class CoareaResult:
    lhs: float
    rhs: float
    ratio: float
    bound: float = None
    ok: bool = True


def coarea_check(f, M=None, bound=None):
    """Integral over t of the super-level perimeters against sum n^-2 |grad_n f|.

    The left side is integrated exactly: the perimeter is constant between
    consecutive distinct values of f.
    """
    D = f.domain
    if M is None:
        M = D.node
    M = M & D.node
    vals = f.values[M]
    if np.any(vals < 0):
        raise ValueError("coarea check needs a nonnegative field")
    levels = np.unique(vals)
    levels = levels[levels > 0]
    # perimeter of {f >= t} counts edges with min < t <= max; sweep the sorted levels
    eh, ev = _edges_in(M)
    v = np.where(M, f.values, 0.0)
    lo = np.concatenate([np.minimum(v[:-1, :], v[1:, :])[eh], np.minimum(v[:, :-1], v[:, 1:])[ev]])
    hi = np.concatenate([np.maximum(v[:-1, :], v[1:, :])[eh], np.maximum(v[:, :-1], v[:, 1:])[ev]])
    lo.sort()
    hi.sort()
    per = (np.searchsorted(lo, levels, side="left") - np.searchsorted(hi, levels, side="left")) / D.n
    widths = np.diff(np.concatenate([[0.0], levels]))
    lhs = float(np.sum(widths * per))
    g, _ = discrete_gradient(f)
    gm = np.sqrt(np.nansum(g * g, axis=-1))
    rhs = float(np.sum(gm[M])) / D.n**2
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    ok = True if bound is None else bool(lhs <= bound * rhs)
    return CoareaResult(float(lhs), rhs, float(ratio), bound, ok)


# -- two-well rigidity ------------------------------------------------------------------


def stadium_mask(domain, x0, y0, radius):
    """Nodes of the convex hull of two discs of equal ``radius``."""
    X = domain.coords
    x0, y0 = np.asarray(x0, float), np.asarray(y0, float)
    d = y0 - x0
    L2 = d @ d
    t = np.clip(((X - x0) @ d) / L2, 0.0, 1.0) if L2 > 0 else np.zeros(X.shape[:-1])
    proj = x0 + t[..., None] * d
    return domain.node & (np.linalg.norm(X - proj, axis=-1) <= radius + 1e-12)


def _uniform_disc(rng, center, radius, m):
    r = radius * np.sqrt(rng.random(m))
    phi = 2 * np.pi * rng.random(m)
    return np.asarray(center) + np.column_stack([r * np.cos(phi), r * np.sin(phi)])


@dataclass
class RigidityResult:
    ratios: np.ndarray = field(repr=False)
    mu: float
    eta: float
    r: float
    alpha: float
    c: float = None
    fraction_within: float = None
    deviation_over_mu: np.ndarray = field(default=None, repr=False)

    def summary(self):
        q = np.quantile(self.ratios, [0.0, 0.01, 0.5, 0.99, 1.0])
        return {
            "mu": self.mu,
            "eta": self.eta,
            "r": self.r,
            "alpha": self.alpha,
            "c": self.c,
            "fraction_within": self.fraction_within,
            "ratio_quantiles": dict(zip(["min", "q01", "median", "q99", "max"], map(float, q))),
        }


def rigidity_sample(defo, wells, x0, y0, alpha, samples, seed, c=None, one_well=None):
    """Sample |u(x)-u(y)| / |U0(x-y)| for x, y drawn from discs around x0, y0.

    ``one_well`` is a precomputed one-well site density field; it is
    evaluated here when omitted.
    """
    from .energy import hamiltonian

    D = defo.domain
    x0, y0 = np.asarray(x0, float), np.asarray(y0, float)
    if not 0 < alpha < 0.125:
        raise ConfigurationError("alpha must lie in (0, 1/8)")
    r = float(np.linalg.norm(x0 - y0))
    if r <= 0:
        raise ConfigurationError("x0 and y0 must differ")
    R2 = 2 * alpha * r
    phi_ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    ring = np.column_stack([np.cos(phi_ang), np.sin(phi_ang)])
    for p in (x0, y0):
        if not np.all(D.contains_point(p + R2 * ring)):
            raise ConfigurationError("the discs of radius 2 alpha r must lie inside the domain")
    M = stadium_mask(D, x0, y0, R2)
    n2 = D.n**2
    G = node_gradients(defo)
    ok = M & np.all(np.isfinite(G), axis=(-2, -1))
    mu = float(np.sum(dist_to_K_batch(G[ok], wells))) / n2 / r**2
    if one_well is None:
        one_well = hamiltonian(defo, wells, "one_well").site_density
    phi = ScalarLatticeField(D, np.where(D.node, one_well, np.nan))
    gphi = gradient_norm(phi)
    eta = float(np.sum(phi.values[M] / r**2 + gphi[M] / r)) / n2
    rng = np.random.default_rng(int(seed))
    X = _uniform_disc(rng, x0, alpha * r, samples)
    Y = _uniform_disc(rng, y0, alpha * r, samples)
    du = interpolate(defo, X) - interpolate(defo, Y)
    ratios = np.linalg.norm(du, axis=1) / np.linalg.norm((X - Y) @ wells.U0.T, axis=1)
    dev = np.abs(ratios - 1.0) / mu if mu > 0 else np.where(np.abs(ratios - 1) > 0, np.inf, 0.0)
    frac = None
    if c is not None:
        frac = float(np.mean(np.abs(ratios - 1.0) <= c * mu))
    return RigidityResult(ratios, mu, eta, r, float(alpha), c, frac, dev)


# -- interfaces ----------------------------------------------------------------------------


@dataclass
class InterfaceSummary:
    segments: list
    normals: list
    angles_to_normals: list
    status: str = "ok"
    unclassified_fraction: float = 0.0
    labels: tuple = field(default=None, repr=False)
    boundary_points: np.ndarray = field(default=None, repr=False)

    @property
    def max_angle(self):
        """Largest over segments of the angle to the nearer of the two normals (degrees)."""
        if not self.angles_to_normals:
            return 0.0
        return float(max(min(a) for a in self.angles_to_normals))

    def to_dict(self):
        return {
            "status": self.status,
            "unclassified_fraction": self.unclassified_fraction,
            "segments": [
                {
                    "points": len(s),
                    "start": list(map(float, s[0])),
                    "end": list(map(float, s[-1])),
                    "normal": list(map(float, nrm)),
                    "angle_to_(1,1)": float(ang[0]),
                    "angle_to_(1,-1)": float(ang[1]),
                }
                for s, nrm, ang in zip(self.segments, self.normals, self.angles_to_normals)
            ],
        }


def triangle_labels(defo, wells, tol):
    """Nearest-well label per triangle (0 or 1, -1 where absent) and a classifiable flag."""
    gp, gm = triangle_gradients(defo)
    out = []
    for g, tri in ((gp, defo.domain.tri_plus), (gm, defo.domain.tri_minus)):
        lab = np.full(tri.shape, -1, dtype=np.int8)
        cls = np.zeros(tri.shape, dtype=bool)
        d0 = dist_to_well_batch(g[tri], wells.U0)
        d1 = dist_to_well_batch(g[tri], wells.U1)
        lab[tri] = np.where(d1 < d0, 1, 0)
        cls[tri] = ((d0 < tol) & (d1 > 2 * tol)) | ((d1 < tol) & (d0 > 2 * tol))
        out.append((lab, cls))
    return out


def _phase_boundary_edges(D, lp, lm):
    """Lattice edges shared by two triangles with different labels, as index pairs."""
    edges = []
    NI, NJ = D.shape
    A, B = np.meshgrid(np.arange(NI), np.arange(NJ), indexing="ij")
    # Delta+ at (a,b) vs Delta- at (a+1,b+1): edge (a+1,b)-(a,b+1)
    m = np.zeros_like(D.tri_plus)
    m[:-1, :-1] = D.tri_plus[:-1, :-1] & D.tri_minus[1:, 1:] & (lp[:-1, :-1] != lm[1:, 1:])
    edges.append(np.stack([A[m] + 1, B[m], A[m], B[m] + 1], axis=1))
    # Delta+ at (a,b) vs Delta- at (a+1,b): edge (a,b)-(a+1,b)
    m = np.zeros_like(D.tri_plus)
    m[:-1, :] = D.tri_plus[:-1, :] & D.tri_minus[1:, :] & (lp[:-1, :] != lm[1:, :])
    edges.append(np.stack([A[m], B[m], A[m] + 1, B[m]], axis=1))
    # Delta+ at (a,b) vs Delta- at (a,b+1): edge (a,b)-(a,b+1)
    m = np.zeros_like(D.tri_plus)
    m[:, :-1] = D.tri_plus[:, :-1] & D.tri_minus[:, 1:] & (lp[:, :-1] != lm[:, 1:])
    edges.append(np.stack([A[m], B[m], A[m], B[m] + 1], axis=1))
    return np.concatenate(edges, axis=0)


def _fit(points):
    c = points.mean(axis=0)
    C = (points - c).T @ (points - c)
    w, V = np.linalg.eigh(C)
    return c, V[:, 1], V[:, 0]


def _split(points, spacing, min_points):
    """Recursive straight-segment splitting of a point cloud (Douglas-Peucker on the principal axis)."""
    if len(points) < min_points:
        return []
    c, t, nrm = _fit(points)
    order = np.argsort((points - c) @ t)
    pts = points[order]
    dev = np.abs((pts - c) @ nrm)
    k = int(np.argmax(dev))
    if dev[k] <= 1.5 * spacing or len(pts) < 2 * min_points:
        return [pts]
    p0, p1 = pts[0], pts[-1]
    chord = p1 - p0
    L = np.linalg.norm(chord)
    if L > 0:
        perp = np.array([-chord[1], chord[0]]) / L
        k = int(np.argmax(np.abs((pts - p0) @ perp)))
    k = min(max(k, min_points), len(pts) - min_points)
    return _split(pts[: k + 1], spacing, min_points) + _split(pts[k:], spacing, min_points)


def _angle(nrm, ref):
    c = abs(float(nrm @ ref))
    return float(np.degrees(np.arccos(min(1.0, c))))


def interface_extract(defo, wells, tol=None, min_edges=3):
    """Phase boundaries between nearest-well triangle labels, fitted as straight segments.

    Components with fewer than ``min_edges`` lattice edges are dropped.
    Returns status ``'unclassifiable'`` when more than half of the triangles
    are not clearly close to one well.
    """
    D = defo.domain
    if tol is None:
        tol = 0.25 * wells.cbar
    (lp, cp), (lm, cm) = triangle_labels(defo, wells, tol)
    ntri = D.n_triangles
    unclassified = 1.0 - (cp.sum() + cm.sum()) / max(ntri, 1)
    status = "ok" if unclassified <= 0.5 else "unclassifiable"
    E = _phase_boundary_edges(D, lp, lm)
    X = D.coords
    if len(E) == 0:
        return InterfaceSummary([], [], [], status, float(unclassified), (lp, lm), np.zeros((0, 2)))
    NJ = D.shape[1]
    va = E[:, 0] * NJ + E[:, 1]
    vb = E[:, 2] * NJ + E[:, 3]
    verts, inv = np.unique(np.concatenate([va, vb]), return_inverse=True)
    ia, ib = inv[: len(E)], inv[len(E) :]
    g = coo_matrix((np.ones(len(E)), (ia, ib)), shape=(len(verts), len(verts)))
    ncomp, comp = connected_components(g, directed=False)
    edge_comp = comp[ia]
    mids = 0.5 * (X[E[:, 0], E[:, 1]] + X[E[:, 2], E[:, 3]])
    segs, normals, angles = [], [], []
    for k in range(ncomp):
        sel = edge_comp == k
        if sel.sum() < min_edges:
            continue
        for pts in _split(mids[sel], 1.0 / D.n, min_edges):
            _, t, nrm = _fit(pts)
            if nrm[1] < 0 or (nrm[1] == 0 and nrm[0] < 0):
                nrm = -nrm
            nrm = nrm / np.linalg.norm(nrm)
            segs.append(pts)
            normals.append(nrm)
            angles.append((_angle(nrm, NORMALS["(1,1)"]), _angle(nrm, NORMALS["(1,-1)"])))
    return InterfaceSummary(segs, normals, angles, status, float(unclassified), (lp, lm), mids)


def triangle_centroids(domain):
    """Centroids of Delta^+ and Delta^- triangles in physical coordinates."""
    X = domain.coords
    h = 1.0 / domain.n
    cp = X + np.array([h, h]) / 3.0
    cm = X - np.array([h, h]) / 3.0
    return cp, cm


def boundary_distance(domain, pts):
    """Euclidean distance from points inside the parallelogram to its boundary."""
    cx, cy = domain.center
    dx, dy = pts[..., 0] - cx, pts[..., 1] - cy
    t = dx + dy if domain.sign == "+" else dx - dy
    return np.minimum((domain.d - np.abs(t)) / np.sqrt(2.0), domain.l - np.abs(dy))


def bulk_well_distance(defo, wells, summary, margin=3):
    """Mean dist(grad u, K) over triangles farther than ``margin`` lattice spacings
    from phase boundaries and from the domain boundary. Returns (mean, count)."""
    D = defo.domain
    h = margin / D.n
    gp, gm = triangle_gradients(defo)
    cp, cm = triangle_centroids(D)
    tree = cKDTree(summary.boundary_points) if len(summary.boundary_points) else None
    vals = []
    for g, c, tri in ((gp, cp, D.tri_plus), (gm, cm, D.tri_minus)):
        pts = c[tri]
        keep = boundary_distance(D, pts) > h
        if tree is not None:
            dist, _ = tree.query(pts)
            keep &= dist > h
        vals.append(dist_to_K_batch(g[tri][keep], wells))
    v = np.concatenate(vals)
    return (float(v.mean()) if v.size else np.nan), int(v.size)


# -- export ------------------------------------------------------------------------------------


def write_json(record, path, **meta):
    out = dict(meta)
    out.update(record)
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True, default=float)


def write_polylines(summary, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment", "k", "x", "y"])
        for s, pts in enumerate(summary.segments):
            for k, (x, y) in enumerate(pts):
                w.writerow([s, k, repr(float(x)), repr(float(y))])
