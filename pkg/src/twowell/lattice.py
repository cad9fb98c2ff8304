"""Parallelogram lattice domains, deformations and admissibility.

Nodes live on a padded rectangular index box: array index ``[i - i0, j - j0]``
holds lattice point ``(i, j)``. The box carries one empty cell of padding on
every side so stencil neighbours can always be addressed.
"""
from dataclasses import dataclass, field, replace

import numpy as np

OUTSIDE, INTERIOR, LEFT_BC, RIGHT_BC, LATERAL, GHOST_LEFT, GHOST_RIGHT = range(7)
ROLE_NAMES = {
    OUTSIDE: "outside",
    INTERIOR: "interior",
    LEFT_BC: "left-bc",
    RIGHT_BC: "right-bc",
    LATERAL: "lateral-free",
    GHOST_LEFT: "ghost",
    GHOST_RIGHT: "ghost",
}
_EPS = 1e-9


class ConfigurationError(ValueError):
    pass


class StructureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LatticeDomain:
    n: int
    d: float
    l: float
    sign: str
    center: tuple
    i0: int
    j0: int
    node: np.ndarray = field(repr=False)
    ghost: np.ndarray = field(repr=False)
    role: np.ndarray = field(repr=False)
    tri_plus: np.ndarray = field(repr=False)
    tri_minus: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.node.shape

    @property
    def exists(self):
        return self.node | self.ghost

    @property
    def index_grid(self):
        NI, NJ = self.shape
        I, J = np.meshgrid(np.arange(NI) + self.i0, np.arange(NJ) + self.j0, indexing="ij")
        return I, J

    @property
    def coords(self):
        I, J = self.index_grid
        return np.stack([I / self.n, J / self.n], axis=-1)

    def diag_index(self):
        """Lattice coordinate across the bc sides: i+j for '+', i-j for '-'."""
        I, J = self.index_grid
        return I + J if self.sign == "+" else I - J

    def idx(self, i, j):
        return i - self.i0, j - self.j0

    def has_node(self, i, j):
        a, b = self.idx(i, j)
        if 0 <= a < self.shape[0] and 0 <= b < self.shape[1]:
            return bool(self.node[a, b])
        return False

    def node_list(self):
        I, J = self.index_grid
        return np.stack([I[self.node], J[self.node]], axis=1)

    @property
    def n_nodes(self):
        return int(self.node.sum())

    @property
    def n_triangles(self):
        return int(self.tri_plus.sum() + self.tri_minus.sum())

    @property
    def left_bc(self):
        return self.role == LEFT_BC

    @property
    def right_bc(self):
        return self.role == RIGHT_BC

    @property
    def left_side(self):
        """Left bc layer plus its ghost layer."""
        return (self.role == LEFT_BC) | (self.role == GHOST_LEFT)

    @property
    def right_side(self):
        return (self.role == RIGHT_BC) | (self.role == GHOST_RIGHT)

    def describe(self):
        return {
            "n": self.n,
            "d": self.d,
            "l": self.l,
            "sign": self.sign,
            "center": list(self.center),
        }

    def contains_point(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cx, cy = self.center
        dx, dy = x[:, 0] - cx, x[:, 1] - cy
        t = dx + dy if self.sign == "+" else dx - dy
        return (np.abs(t) <= self.d + _EPS) & (np.abs(dy) <= self.l + _EPS)


def _integral(v, what):
    r = round(v)
    if abs(v - r) > 1e-9:
        raise ConfigurationError(f"{what} = {v!r} must be an integer")
    return int(r)


def build_domain(d, l, sign="+", n=1, center=(0.0, 0.0), ghosts=True):
    """Lattice nodes of the parallelogram with half-extents ``d`` (across the
    bc sides) and ``l`` (vertical), scaled by ``n``.

    ``sign='+'`` gives the sides normal to (1,1); ``'-'`` the sides normal to
    (1,-1). One ghost diagonal layer is attached beyond each bc side.
    """
    if sign not in ("+", "-"):
        raise ConfigurationError("sign must be '+' or '-'")
    if not (d > 0 and l > 0):
        raise ConfigurationError("degenerate shape: d and l must be positive")
    n = int(n)
    if n < 1:
        raise ConfigurationError("n must be a positive integer")
    _integral(n * d, "n*d")
    _integral(n * l, "n*l")
    cx, cy = float(center[0]), float(center[1])
    ncx, ncy = n * cx, n * cy
    jlo = int(np.ceil(ncy - n * l - _EPS))
    jhi = int(np.floor(ncy + n * l + _EPS))
    tc = ncx + ncy if sign == "+" else ncx - ncy
    tlo = int(np.ceil(tc - n * d - _EPS))
    thi = int(np.floor(tc + n * d + _EPS))
    # include one ghost layer and one cell of padding
    if sign == "+":
        ilo, ihi = (tlo - 1) - jhi - 1, (thi + 1) - jlo + 1
    else:
        ilo, ihi = (tlo - 1) + jlo - 1, (thi + 1) + jhi + 1
    j0 = jlo - 1
    NI, NJ = ihi - ilo + 1, (jhi + 1) - j0 + 1
    I, J = np.meshgrid(np.arange(NI) + ilo, np.arange(NJ) + j0, indexing="ij")
    T = I + J if sign == "+" else I - J
    inj = (J >= jlo) & (J <= jhi)
    node = inj & (T >= tlo) & (T <= thi)
    role = np.zeros((NI, NJ), dtype=np.int8)
    role[node] = INTERIOR
    role[node & ((J == jlo) | (J == jhi))] = LATERAL
    role[node & (T == tlo)] = LEFT_BC
    role[node & (T == thi)] = RIGHT_BC
    ghost = np.zeros_like(node)
    if ghosts:
        gl = inj & (T == tlo - 1)
        gr = inj & (T == thi + 1)
        ghost = gl | gr
        role[gl] = GHOST_LEFT
        role[gr] = GHOST_RIGHT
    tri_plus = np.zeros_like(node)
    tri_minus = np.zeros_like(node)
    tri_plus[1:-1, 1:-1] = node[1:-1, 1:-1] & node[2:, 1:-1] & node[1:-1, 2:]
    tri_minus[1:-1, 1:-1] = node[1:-1, 1:-1] & node[:-2, 1:-1] & node[1:-1, :-2]
    return LatticeDomain(
        n=n, d=float(d), l=float(l), sign=sign, center=(cx, cy), i0=ilo, j0=j0,
        node=node, ghost=ghost, role=role, tri_plus=tri_plus, tri_minus=tri_minus,
    )


def standard_domain(n):
    """The reference domain with d = 4, l = 1 and bc sides normal to (1,1)."""
    return build_domain(4, 1, "+", n)


@dataclass(eq=False)
class Deformation:
    domain: LatticeDomain
    P: np.ndarray = field(repr=False)
    c: np.ndarray = field(default_factory=lambda: np.zeros(2))
    lam: float = None

    def copy(self):
        return replace(self, P=self.P.copy(), c=np.array(self.c, dtype=float))

    def position(self, i, j):
        a, b = self.domain.idx(i, j)
        return self.P[a, b].copy()

    def positions(self):
        """(m, 4) array of rows ``i j ux uy`` over nodes and ghosts."""
        I, J = self.domain.index_grid
        m = self.domain.exists
        return np.column_stack([I[m], J[m], self.P[m, 0], self.P[m, 1]])


def blank(domain):
    return np.full(domain.shape + (2,), np.nan)


def from_function(domain, fn, c=(0.0, 0.0), lam=None):
    """Sample ``fn(x) -> u`` (vectorised over the last axis) on nodes and ghosts."""
    X = domain.coords
    P = blank(domain)
    m = domain.exists
    P[m] = fn(X[m])
    return Deformation(domain, P, np.array(c, dtype=float), lam)


def affine(domain, F, b=(0.0, 0.0), lam=None):
    F = np.asarray(F, dtype=float)
    b = np.asarray(b, dtype=float)
    return from_function(domain, lambda X: X @ F.T + b, lam=lam)


def transform(defo, R, b=(0.0, 0.0)):
    """Image motion x -> R x + b applied to every position."""
    out = defo.copy()
    m = defo.domain.exists
    out.P[m] = defo.P[m] @ np.asarray(R, dtype=float).T + np.asarray(b, dtype=float)
    return out


def _require_positions(defo):
    m = defo.domain.exists
    if not np.all(np.isfinite(defo.P[m])):
        raise StructureError("deformation is missing node positions")


def triangle_dets(defo):
    """Orientation determinants of all Delta^+ and Delta^- triangles.

    Vertex order is (i,j),(i+1,j),(i,j+1) for Delta^+ and (i,j),(i-1,j),(i,j-1)
    for Delta^-. Entries without a triangle are NaN.
    """
    D = defo.domain
    P = defo.P
    dp = np.full(D.shape, np.nan)
    dm = np.full(D.shape, np.nan)
    c = P[1:-1, 1:-1]
    e1 = P[2:, 1:-1] - c
    e2 = P[1:-1, 2:] - c
    f1 = P[:-2, 1:-1] - c
    f2 = P[1:-1, :-2] - c
    with np.errstate(invalid="ignore"):
        dp[1:-1, 1:-1] = np.where(D.tri_plus[1:-1, 1:-1], e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0], np.nan)
        dm[1:-1, 1:-1] = np.where(D.tri_minus[1:-1, 1:-1], f1[..., 0] * f2[..., 1] - f1[..., 1] * f2[..., 0], np.nan)
    return dp, dm


@dataclass
class AdmissibilityReport:
    ok: bool
    violations: list

    def __bool__(self):
        return self.ok


def check_admissible(defo):
    """Positive orientation of every triangle's image."""
    _require_positions(defo)
    dp, dm = triangle_dets(defo)
    viol = []
    D = defo.domain
    for kind, arr in (("+", dp), ("-", dm)):
        bad = np.argwhere(np.isfinite(arr) & (arr <= 0))
        for a, b in bad:
            viol.append((kind, int(a + D.i0), int(b + D.j0), float(arr[a, b])))
    return AdmissibilityReport(ok=not viol, violations=viol)


def is_admissible(defo):
    from .kernels import min_triangle_det

    D = defo.domain
    return bool(min_triangle_det(defo.P, D.tri_plus, D.tri_minus) > 0)


def triangle_gradients(defo):
    """Constant gradients on Delta^+ and Delta^- triangles, shape (NI, NJ, 2, 2).

    Column k is the derivative along the k-th lattice direction.
    """
    D = defo.domain
    n = D.n
    P = defo.P
    gp = np.full(D.shape + (2, 2), np.nan)
    gm = np.full(D.shape + (2, 2), np.nan)
    c = P[1:-1, 1:-1]
    mp = D.tri_plus[1:-1, 1:-1]
    mm = D.tri_minus[1:-1, 1:-1]
    gp_in = np.stack([n * (P[2:, 1:-1] - c), n * (P[1:-1, 2:] - c)], axis=-1)
    gm_in = np.stack([n * (c - P[:-2, 1:-1]), n * (c - P[1:-1, :-2])], axis=-1)
    gp[1:-1, 1:-1][mp] = gp_in[mp]
    gm[1:-1, 1:-1][mm] = gm_in[mm]
    return gp, gm


def gradient_on_triangle(defo, kind, i, j):
    D = defo.domain
    a, b = D.idx(i, j)
    tri = D.tri_plus if kind == "+" else D.tri_minus
    if not (0 <= a < D.shape[0] and 0 <= b < D.shape[1]) or not tri[a, b]:
        raise StructureError(f"no triangle {kind} at ({i}, {j})")
    gp, gm = triangle_gradients(defo)
    return (gp if kind == "+" else gm)[a, b].copy()


def node_gradients(defo):
    """Node-level gradient: forward differences, falling back to backward
    differences where a forward neighbour is missing. NaN where neither exists."""
    D = defo.domain
    n = D.n
    E = D.exists
    P = defo.P
    G = np.full(D.shape + (2, 2), np.nan)
    c = P[1:-1, 1:-1]
    fwd1 = n * (P[2:, 1:-1] - c)
    bwd1 = n * (c - P[:-2, 1:-1])
    fwd2 = n * (P[1:-1, 2:] - c)
    bwd2 = n * (c - P[1:-1, :-2])
    e1 = np.where(E[2:, 1:-1, None], fwd1, bwd1)
    e2 = np.where(E[1:-1, 2:, None], fwd2, bwd2)
    G[1:-1, 1:-1, :, 0] = e1
    G[1:-1, 1:-1, :, 1] = e2
    G[~D.node] = np.nan
    return G


def interpolate(defo, x):
    """Piecewise affine interpolant at points ``x`` (shape (2,) or (m, 2))."""
    D = defo.domain
    n = D.n
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if not np.all(D.contains_point(X)):
        raise ValueError("point outside the domain")
    s = X * n
    base = np.floor(s + 1e-12).astype(int)
    fr = s - base
    upper = fr.sum(axis=1) > 1.0
    i, j = base[:, 0], base[:, 1]
    a, b = i - D.i0, j - D.j0
    P = defo.P
    out = np.empty_like(X)
    lo = ~upper
    if np.any(lo):
        ok = D.tri_plus[a[lo], b[lo]]
        if not np.all(ok):
            raise ValueError("point not covered by a lattice triangle")
        p0 = P[a[lo], b[lo]]
        out[lo] = p0 + fr[lo, :1] * (P[a[lo] + 1, b[lo]] - p0) + fr[lo, 1:] * (P[a[lo], b[lo] + 1] - p0)
    if np.any(upper):
        au, bu = a[upper] + 1, b[upper] + 1
        ok = D.tri_minus[au, bu]
        if not np.all(ok):
            raise ValueError("point not covered by a lattice triangle")
        p0 = P[au, bu]
        g1 = 1.0 - fr[upper, :1]
        g2 = 1.0 - fr[upper, 1:]
        out[upper] = p0 + g1 * (P[au - 1, bu] - p0) + g2 * (P[au, bu - 1] - p0)
    return out[0] if single else out


def apply_boundary(defo, wells, lam, c=(0.0, 0.0)):
    """Overwrite bc layers and ghosts with F_lam x (left) and F_lam x + c (right)."""
    if not 0.0 < lam <= 1.0:
        raise ConfigurationError("lambda must lie in (0, 1]")
    out = defo.copy()
    D = defo.domain
    F = wells.F(lam)
    X = D.coords
    c = np.asarray(c, dtype=float)
    L, R = D.left_side, D.right_side
    out.P[L] = X[L] @ F.T
    out.P[R] = X[R] @ F.T + c
    out.c = c.copy()
    out.lam = float(lam)
    return out


# -- text serialisation -------------------------------------------------------

_HEADER = "# twowell deformation v1"


def dumps(defo):
    D = defo.domain
    lines = [
        _HEADER,
        f"n {D.n}",
        f"shape {D.sign} {D.d!r} {D.l!r} {D.center[0]!r} {D.center[1]!r}",
        f"ghosts {int(D.ghost.any())}",
        f"lambda {'none' if defo.lam is None else repr(float(defo.lam))}",
        f"c {float(defo.c[0])!r} {float(defo.c[1])!r}",
    ]
    rows = defo.positions()
    lines.append(f"nodes {len(rows)}")
    for i, j, x, y in rows:
        lines.append(f"{int(i)} {int(j)} {float(x)!r} {float(y)!r}")
    return "\n".join(lines) + "\n"


def loads(text):
    it = iter(text.splitlines())
    if next(it).strip() != _HEADER:
        raise StructureError("not a deformation record")
    hdr = {}
    for key in ("n", "shape", "ghosts", "lambda", "c", "nodes"):
        parts = next(it).split()
        if parts[0] != key:
            raise StructureError(f"expected header field {key!r}, got {parts[0]!r}")
        hdr[key] = parts[1:]
    n = int(hdr["n"][0])
    sign, d, l, cx, cy = hdr["shape"]
    D = build_domain(float(d), float(l), sign, n, (float(cx), float(cy)), ghosts=bool(int(hdr["ghosts"][0])))
    lam = None if hdr["lambda"][0] == "none" else float(hdr["lambda"][0])
    c = np.array([float(v) for v in hdr["c"]])
    P = blank(D)
    count = int(hdr["nodes"][0])
    for _ in range(count):
        i, j, x, y = next(it).split()
        a, b = D.idx(int(i), int(j))
        P[a, b] = (float(x), float(y))
    defo = Deformation(D, P, c, lam)
    _require_positions(defo)
    return defo


def save(defo, path):
    with open(path, "w") as fh:
        fh.write(dumps(defo))


def load(path):
    with open(path) as fh:
        return loads(fh.read())
