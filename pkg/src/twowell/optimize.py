"""Initial states and an admissibility-preserving energy minimizer."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import energy, kernels
from .lattice import (
    ConfigurationError,
    Deformation,
    apply_boundary,
    blank,
    check_admissible,
    is_admissible,
    save,
)

NU_PLUS = np.array([1.0, 1.0]) / np.sqrt(2.0)
NU_MINUS = np.array([-1.0, 1.0]) / np.sqrt(2.0)


class MinimizationError(RuntimeError):
    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


def interface_normal(sign):
    """Unit normal of the interfaces (and bc lines) of an Omega^sign domain."""
    return NU_PLUS if sign == "+" else np.array([1.0, -1.0]) / np.sqrt(2.0)


def rank_one_defect(A, B, nu):
    """Size of the part of A - B not of the form a (x) nu."""
    D = np.asarray(B, float) - np.asarray(A, float)
    nu = np.asarray(nu, float) / np.linalg.norm(nu)
    return float(np.linalg.norm(D - np.outer(D @ nu, nu)))


# -- initial states -----------------------------------------------------------


def piecewise_affine(X, gradients, offsets, nu, b=(0.0, 0.0)):
    """Continuous map with gradient ``gradients[k]`` between consecutive offsets along nu.

    The first gradient applies for x.nu below ``offsets[0]``. Consecutive
    gradients must differ by a rank-one matrix with normal nu.
    """
    gradients = [np.asarray(G, float) for G in gradients]
    if len(offsets) != len(gradients) - 1:
        raise ConfigurationError("need one offset per interface")
    if np.any(np.diff(offsets) < 0):
        raise ConfigurationError("interface offsets must be nondecreasing")
    for k in range(len(offsets)):
        d = rank_one_defect(gradients[k], gradients[k + 1], nu)
        if d > 1e-9:
            raise ConfigurationError(f"gradients {k} and {k + 1} are not rank-one connected across the normal (defect {d:.3e})")
    X = np.asarray(X, float)
    s = X @ nu
    U = X @ gradients[0].T + np.asarray(b, float)
    for k, t in enumerate(offsets):
        a = (gradients[k + 1] - gradients[k]) @ nu
        U = U + np.maximum(s - t, 0.0)[..., None] * a
    return U


def _bc_offsets(domain):
    nu = interface_normal(domain.sign)
    cx, cy = domain.center
    base = (cx * nu[0] + cy * nu[1])
    h = domain.d / np.sqrt(2.0)
    return base - h, base + h


def laminate_state(domain, wells, lam, gradients, offsets):
    """Laminate of ``gradients`` between F_lam boundary layers.

    Offsets are positions of the interior interfaces along the domain normal.
    The kinks to F_lam sit on the two bc lines, so the state is continuous and
    the right translation c is read off from the right bc layer.
    """
    nu = interface_normal(domain.sign)
    F = wells.F(lam)
    lo, hi = _bc_offsets(domain)
    grads = [F] + list(gradients) + [F]
    offs = [lo] + list(offsets) + [hi]
    X = domain.coords
    P = blank(domain)
    m = domain.exists
    P[m] = piecewise_affine(X[m], grads, offs, nu)
    R = domain.right_side
    c = (P[R] - X[R] @ F.T).mean(axis=0) if R.any() else np.zeros(2)
    return apply_boundary(Deformation(domain, P, c, lam), wells, lam, c)


def bump_field(domain, amplitude, rng, bumps=6):
    """Smooth random displacement: a sum of Gaussian bumps of width ~ domain size / 4."""
    X = domain.coords
    cx, cy = domain.center
    scale = max(domain.l, 0.25)
    V = np.zeros(X.shape)
    span = np.array([domain.d + domain.l, domain.l])
    for _ in range(bumps):
        p = np.array([cx, cy]) + (2 * rng.random(2) - 1) * span
        amp = rng.standard_normal(2)
        w = scale * (0.5 + rng.random())
        r2 = np.sum((X - p) ** 2, axis=-1)
        V += np.exp(-r2 / (2 * w * w))[..., None] * amp
    return amplitude * V / np.sqrt(bumps)


def perturb(defo, amplitude, seed, free=None, max_attempts=100, noise=0.0):
    """Add a smooth random bump field to the free nodes, resampling until admissible.

    ``noise`` adds independent per-node jitter of that size (in units of 1/n).
    """
    D = defo.domain
    if free is None:
        free = D.exists & ~(D.left_side | D.right_side)
    for attempt in range(max_attempts):
        rng = np.random.default_rng([int(seed), attempt])
        V = bump_field(D, amplitude, rng)
        if noise:
            V = V + noise / D.n * rng.standard_normal(V.shape)
        out = defo.copy()
        out.P[free] += V[free]
        if is_admissible(out):
            return out
    raise ConfigurationError(f"no admissible perturbation found after {max_attempts} attempts")


def initialize(domain, mode, wells, lam=None, **kw):
    """Build a starting deformation.

    Modes: ``affine`` (F, b), ``profile`` (V1, V2, offset), ``laminate``
    (gradients, offsets) and ``perturbed`` (base, amplitude, seed). When
    ``lam`` is given the bc layers carry F_lam data.
    """
    if mode == "affine":
        F = np.asarray(kw.get("F", wells.F(lam if lam is not None else 1.0)), float)
        b = np.asarray(kw.get("b", (0.0, 0.0)), float)
        X = domain.coords
        P = blank(domain)
        m = domain.exists
        P[m] = X[m] @ F.T + b
        out = Deformation(domain, P, np.zeros(2), lam)
        if lam is not None:
            R = domain.right_side
            c = (P[R] - X[R] @ wells.F(lam).T).mean(axis=0) if R.any() else np.zeros(2)
            L = domain.left_side
            out.P[m] -= (P[L] - X[L] @ wells.F(lam).T).mean(axis=0) if L.any() else 0.0
            c = c - ((P[L] - X[L] @ wells.F(lam).T).mean(axis=0) if L.any() else 0.0)
            out = apply_boundary(out, wells, lam, c)
        return out
    if mode == "profile":
        V1, V2 = kw["V1"], kw["V2"]
        t = float(kw.get("offset", 0.0))
        nu = interface_normal(domain.sign)
        cx, cy = domain.center
        t += cx * nu[0] + cy * nu[1]
        if lam is not None:
            return laminate_state(domain, wells, lam, [V1, V2], [t])
        X = domain.coords
        P = blank(domain)
        m = domain.exists
        P[m] = piecewise_affine(X[m], [V1, V2], [t], nu)
        return Deformation(domain, P, np.zeros(2), None)
    if mode == "laminate":
        return laminate_state(domain, wells, lam, kw["gradients"], kw["offsets"])
    if mode == "perturbed":
        base = kw["base"]
        if not is_admissible(base):
            raise ConfigurationError("perturbation base is not admissible")
        return perturb(base, kw.get("amplitude", 0.01), kw.get("seed", 0), noise=kw.get("noise", 0.0))
    raise ConfigurationError(f"unknown initialization mode {mode!r}")


# -- constrained problem ------------------------------------------------------


@dataclass
class Constraints:
    """Which positions move: ``free`` nodes individually, ``shift`` nodes rigidly by c."""

    free: np.ndarray
    shift: np.ndarray
    shift_base: np.ndarray

    @classmethod
    def standard(cls, defo, wells=None):
        D = defo.domain
        R = D.right_side
        if wells is not None and defo.lam is not None:
            base = D.coords[R] @ wells.F(defo.lam).T
        else:
            base = defo.P[R] - np.asarray(defo.c)
        return cls(D.exists & ~(D.left_side | R), R, base)


class _Problem:
    def __init__(self, defo, wells, density, cons, backend):
        self.defo = defo.copy()
        self.wells = wells
        self.density = density
        self.cons = cons
        self.backend = backend
        self.fidx = np.flatnonzero(cons.free)
        self.sidx = np.flatnonzero(cons.shift)
        self.nf = self.fidx.size
        self.has_shift = self.sidx.size > 0
        self.flat = self.defo.P.reshape(-1, 2)

    def pack(self, defo):
        x = defo.P.reshape(-1, 2)[self.fidx].ravel()
        c = np.asarray(defo.c, float) if self.has_shift else np.zeros(0)
        return np.concatenate([x, c])

    def unpack(self, x):
        d = self.defo
        self.flat[self.fidx] = x[: 2 * self.nf].reshape(-1, 2)
        if self.has_shift:
            d.c = x[2 * self.nf :].copy()
            self.flat[self.sidx] = self.cons.shift_base + d.c
        return d

    def value_grad(self, x):
        d = self.unpack(x)
        H, G = energy.raw_gradient(d, self.wells, self.density, self.backend)
        G = G.reshape(-1, 2)
        g = G[self.fidx].ravel()
        if self.has_shift:
            g = np.concatenate([g, G[self.sidx].sum(axis=0)])
        return H, g

    def admissible(self, x):
        d = self.unpack(x)
        D = d.domain
        return kernels.min_triangle_det(d.P, D.tri_plus, D.tri_minus, self.backend) > 0


@dataclass
class MinimizeOptions:
    max_iters: int = None
    grad_tol: float = None
    step0: float = None
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    seed: int = 0
    method: str = "lbfgs"
    memory: int = 10
    max_halvings: int = 60
    max_move: float = 0.25
    backend: str = None

    def resolved(self, n):
        o = MinimizeOptions(**asdict(self))
        if o.max_iters is None:
            o.max_iters = 50 * n * n
        if o.grad_tol is None:
            o.grad_tol = 1e-8 * n
        if o.step0 is None:
            o.step0 = 1e-2 / (n * n)
        o.validate()
        return o

    def validate(self):
        if self.method not in ("gradient_descent", "lbfgs"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if not 0 < self.backtrack_factor < 1:
            raise ConfigurationError("backtrack_factor must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ConfigurationError("armijo_c must lie in (0, 1)")
        for k in ("max_iters", "grad_tol", "step0"):
            v = getattr(self, k)
            if v is not None and v <= 0:
                raise ConfigurationError(f"{k} must be positive")


@dataclass
class MinimizeResult:
    final: Deformation
    energy_trace: list
    iterations: int
    termination: str
    admissible: bool
    grad_norm: float = np.nan
    halvings: int = 0
    info: dict = field(default_factory=dict)

    @property
    def energy(self):
        return self.energy_trace[-1]

    @property
    def rescaled(self):
        return self.final.domain.n * self.energy_trace[-1]


def minimize(defo, wells, density="truncated", opts=None, constraints=None, callback=None):
    """Descend the lattice energy over free nodes and the right translation c.

    Every accepted iterate is admissible and lowers the energy. A trial step
    that flips a triangle is halved (``max_halvings`` times at most) and the
    quasi-Newton memory is cleared.
    """
    D = defo.domain
    opts = (opts or MinimizeOptions()).resolved(D.n)
    if not check_admissible(defo):
        raise ConfigurationError("initial deformation is not admissible")
    cons = constraints or Constraints.standard(defo, wells)
    prob = _Problem(defo, wells, density, cons, opts.backend)
    x = prob.pack(defo)
    f, g = prob.value_grad(x)
    if not np.isfinite(f):
        raise MinimizationError("non-finite initial energy", prob.unpack(x).copy())
    trace = [f]
    # S holds ring-buffer rows of the stored curvature pairs, oldest first
    S = []
    Sbuf = np.empty((opts.memory, x.size)) if opts.method == "lbfgs" else None
    Ybuf = np.empty_like(Sbuf) if Sbuf is not None else None
    step = opts.step0
    halvings_total = 0
    termination = "max_iters"
    it = 0
    for it in range(opts.max_iters + 1):
        gmax = float(np.max(np.abs(g))) if g.size else 0.0
        if gmax <= opts.grad_tol:
            termination = "converged"
            break
        if it == opts.max_iters:
            break
        # search direction
        if opts.method == "lbfgs" and S:
            q = kernels.two_loop(Sbuf, Ybuf, S, g, opts.backend)
            p = -q
            t = 1.0
        else:
            p = -g
            t = step
        slope = g @ p
        if slope >= 0:
            S = []
            p, slope, t = -g, -(g @ g), step
        # never move a node by more than max_move lattice spacings in one step
        pmax = float(np.max(np.abs(p)))
        if pmax > 0:
            t = min(t, opts.max_move / (D.n * pmax))
        # admissibility safeguard
        halved = 0
        while not prob.admissible(x + t * p):
            t *= 0.5
            halved += 1
            if halved > opts.max_halvings:
                break
        if halved > opts.max_halvings:
            if S:
                S = []
                continue
            termination = "stalled_by_admissibility"
            break
        if halved:
            halvings_total += halved
            S = []
        # Armijo backtracking
        accepted = False
        for _ in range(80):
            xn = x + t * p
            fn, gn = prob.value_grad(xn)
            if np.isfinite(fn) and fn <= f + opts.armijo_c * t * slope and fn < f:
                accepted = True
                break
            if not np.isfinite(fn):
                t *= 0.5
            else:
                t *= opts.backtrack_factor
        if not accepted:
            if S:
                S = []
                prob.unpack(x)
                continue
            termination = "stalled_line_search"
            break
        s_vec, y_vec = xn - x, gn - g
        if opts.method == "lbfgs" and s_vec @ y_vec > 1e-16 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            slot = (S[-1] + 1) % opts.memory if S else 0
            if len(S) == opts.memory:
                S.pop(0)
            Sbuf[slot] = s_vec
            Ybuf[slot] = y_vec
            S.append(slot)
        if opts.method == "gradient_descent":
            step = t / opts.backtrack_factor
        x, f, g = xn, fn, gn
        trace.append(f)
        if callback is not None:
            callback(it, f, prob.unpack(x))
    final = prob.unpack(x).copy()
    return MinimizeResult(
        final=final,
        energy_trace=trace,
        iterations=len(trace) - 1,
        termination=termination,
        admissible=is_admissible(final),
        grad_norm=float(np.max(np.abs(g))) if g.size else 0.0,
        halvings=halvings_total,
        info={"opts": asdict(opts)},
    )


def write_checkpoint(result, path, seed=0):
    """Deformation text file plus a JSON sidecar at ``path + '.json'``."""
    save(result.final, path)
    meta = {
        "iteration": result.iterations,
        "energy": result.energy,
        "rescaled": result.rescaled,
        "termination": result.termination,
        "seed": seed,
        "opts": result.info.get("opts", {}),
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return meta
