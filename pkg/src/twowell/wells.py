"""Well matrices, rank-one connections and distances to the energy wells."""
from dataclasses import dataclass, field

import numpy as np

E_TOL = 1e-12


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class WellSystem:
    """Square-to-rectangular two-well data for stretch parameter ``a`` (b = 1/a)."""

    a: float
    b: float
    U0: np.ndarray = field(repr=False)
    U1: np.ndarray = field(repr=False)
    Q: np.ndarray = field(repr=False)
    Qtilde: np.ndarray = field(repr=False)
    cbar: float = 0.0

    def F(self, lam):
        """Convex combination lam*U0 + (1 - lam)*Q U1 (the boundary gradient)."""
        return lam * self.U0 + (1.0 - lam) * (self.Q @ self.U1)

    @property
    def QU1(self):
        return self.Q @ self.U1

    @property
    def QtU1(self):
        return self.Qtilde @ self.U1

    def jump(self, normal_sign=+1):
        """(amplitude vector, unit normal) with U0 - Q U1 = amp (x) normal.

        ``normal_sign=+1`` gives the (1,1) connection via Q, ``-1`` the (1,-1)
        connection via Qtilde.
        """
        s = np.sqrt(2.0) * (self.a**2 - self.b**2) / (self.a**2 + self.b**2)
        if normal_sign > 0:
            return s * np.array([self.a, -self.b]), np.array([1.0, 1.0]) / np.sqrt(2.0)
        return s * np.array([self.a, self.b]), np.array([1.0, -1.0]) / np.sqrt(2.0)

    def to_dict(self):
        return {
            "a": self.a,
            "b": self.b,
            "U0": self.U0.tolist(),
            "U1": self.U1.tolist(),
            "Q": self.Q.tolist(),
            "Qtilde": self.Qtilde.tolist(),
            "cbar": self.cbar,
        }


def _as_rotation(M, name):
    if abs(np.linalg.det(M) - 1.0) > 1e-10 or np.abs(M.T @ M - np.eye(2)).max() > 1e-10:
        raise ValueError(f"{name} recovered from the rank-one relation is not in SO(2)")
    return M


def make_wells(a):
    """Build the well system for ``a > 0``, ``a != 1``; ``b = 1/a``."""
    a = float(a)
    if not a > 0:
        raise ValueError("a must be positive")
    if abs(a - 1.0) < E_TOL:
        raise ValueError("a = 1 makes the two wells coincide")
    b = 1.0 / a
    U0 = np.diag([a, b])
    U1 = np.diag([b, a])
    s = np.sqrt(2.0) * (a * a - b * b) / (a * a + b * b)
    nu = np.array([1.0, 1.0]) / np.sqrt(2.0)
    nut = np.array([1.0, -1.0]) / np.sqrt(2.0)
    QU1 = U0 - s * np.outer([a, -b], nu)
    QtU1 = U0 - s * np.outer([a, b], nut)
    U1inv = np.diag([1.0 / b, 1.0 / a])
    Q = _as_rotation(QU1 @ U1inv, "Q")
    Qt = _as_rotation(QtU1 @ U1inv, "Qtilde")
    cbar = float(np.sqrt(max(well_distance_sq(U0, U1), 0.0)))
    return WellSystem(a=a, b=b, U0=U0, U1=U1, Q=Q, Qtilde=Qt, cbar=cbar)


def _optimal_rotation(M):
    """Rotation R maximising tr(R^T M), i.e. the minimiser of |A - R B| for M = A B^T."""
    th = np.arctan2(M[..., 1, 0] - M[..., 0, 1], M[..., 0, 0] + M[..., 1, 1])
    c, s = np.cos(th), np.sin(th)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def well_distance_sq(A, B):
    """min over R in SO(2) of |A - R B|^2 (Frobenius).

    The optimal rotation is formed explicitly and the residual evaluated
    directly; the expanded form |A|^2 + |B|^2 - 2 rho cancels badly near zero.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    R = _optimal_rotation(A @ B.T)
    return float(np.sum((A - R @ B) ** 2))


def dist_so2(F):
    """Distance of F to SO(2) from signed singular values."""
    F = np.asarray(F, dtype=float)
    s = np.linalg.svd(F, compute_uv=False)
    if np.linalg.det(F) >= 0:
        return float(np.sqrt((s[0] - 1.0) ** 2 + (s[1] - 1.0) ** 2))
    return float(np.sqrt((s[0] - 1.0) ** 2 + (s[1] + 1.0) ** 2))


def dist_to_well(F, U):
    """min over R in SO(2) of |F - R U|_F."""
    U = np.asarray(U, dtype=float)
    if abs(np.linalg.det(U)) < 1e-14:
        raise ValueError("well matrix must be invertible")
    return float(np.sqrt(max(well_distance_sq(np.asarray(F, dtype=float), U), 0.0)))


def dist_to_K(F, wells):
    return min(dist_to_well(F, wells.U0), dist_to_well(F, wells.U1))


def dist_to_well_batch(F, U):
    """Vectorised :func:`dist_to_well` for an array of shape (..., 2, 2)."""
    F = np.asarray(F, dtype=float)
    R = _optimal_rotation(F @ U.T)
    return np.sqrt(np.sum((F - R @ U) ** 2, axis=(-2, -1)))


def dist_to_K_batch(F, wells):
    return np.minimum(dist_to_well_batch(F, wells.U0), dist_to_well_batch(F, wells.U1))
