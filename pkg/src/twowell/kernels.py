"""Per-site energy densities and their position gradients.

Two interchangeable back ends: a numba loop (:func:`_site_loop`) and a
vectorised numpy version (:func:`_site_numpy`). :func:`site_energy` picks the
numba path unless ``TWOWELL_NO_NUMBA`` is set.

Stencil entries at node (i, j), in order:
  0: d1 u^{i,j}   = n (u^{i+1,j} - u^{i,j})
  1: d1 u^{i-1,j} = n (u^{i,j} - u^{i-1,j})
  2: d2 u^{i,j}   = n (u^{i,j+1} - u^{i,j})
  3: d2 u^{i,j-1} = n (u^{i,j} - u^{i,j-1})
Entries whose neighbour is absent drop out of every sum.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

TILDE, TRUNCATED, ONE_WELL = 0, 1, 2
DENSITY_CODES = {"tilde": TILDE, "truncated": TRUNCATED, "one_well": ONE_WELL}


def cutoffs(cbar):
    """(r0, r1) smoothstep radii for the truncated and the one-well densities."""
    big = max(10.0 * cbar, 100.0)
    return (10.0 * (cbar + 1.0), 20.0 * (cbar + 1.0)), (10.0 * big, 20.0 * big)


@njit(cache=True)
def _smooth(r, r0, r1):
    if r <= r0:
        return 1.0, 0.0
    if r >= r1:
        return 0.0, 0.0
    w = r1 - r0
    t = (r - r0) / w
    s = t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    ds = 30.0 * t * t * (1.0 - t) * (1.0 - t) / w
    return 1.0 - s, -ds


@njit(cache=True)
def _site_loop(P, E, S, n, a, b, cbar, kind, r0, r1, want_grad, h_out, A_out, B_out, G):
    NI, NJ = S.shape
    a2 = a * a
    b2 = b * b
    cap = cbar / 10.0
    inv_n = 1.0 / n
    ent = np.zeros((4, 2))
    pres = np.zeros(4, dtype=np.bool_)
    dA = np.zeros((4, 2))
    dB = np.zeros((4, 2))
    dh = np.zeros((4, 2))
    for i in range(1, NI - 1):
        for j in range(1, NJ - 1):
            if not S[i, j]:
                continue
            pres[0] = E[i + 1, j]
            pres[1] = E[i - 1, j]
            pres[2] = E[i, j + 1]
            pres[3] = E[i, j - 1]
            for q in range(2):
                ent[0, q] = n * (P[i + 1, j, q] - P[i, j, q]) if pres[0] else 0.0
                ent[1, q] = n * (P[i, j, q] - P[i - 1, j, q]) if pres[1] else 0.0
                ent[2, q] = n * (P[i, j + 1, q] - P[i, j, q]) if pres[2] else 0.0
                ent[3, q] = n * (P[i, j, q] - P[i, j - 1, q]) if pres[3] else 0.0
            A = 0.0
            B = 0.0
            S2 = 0.0
            for k in range(4):
                dA[k, 0] = 0.0
                dA[k, 1] = 0.0
                dB[k, 0] = 0.0
                dB[k, 1] = 0.0
                if pres[k]:
                    L = ent[k, 0] * ent[k, 0] + ent[k, 1] * ent[k, 1]
                    S2 += L
                    if k < 2:
                        ca = a2
                        cb = b2
                    else:
                        ca = b2
                        cb = a2
                    A += (L - ca) * (L - ca)
                    B += (L - cb) * (L - cb)
                    for q in range(2):
                        dA[k, q] = 4.0 * (L - ca) * ent[k, q]
                        dB[k, q] = 4.0 * (L - cb) * ent[k, q]
            ang = 0.0
            for p in range(2):
                for r in range(2, 4):
                    if pres[p] and pres[r]:
                        ip = ent[p, 0] * ent[r, 0] + ent[p, 1] * ent[r, 1]
                        ang += abs(ip)
                        sg = 0.0
                        if ip > 0.0:
                            sg = 1.0
                        elif ip < 0.0:
                            sg = -1.0
                        for q in range(2):
                            dA[p, q] += sg * ent[r, q]
                            dA[r, q] += sg * ent[p, q]
                            dB[p, q] += sg * ent[r, q]
                            dB[r, q] += sg * ent[p, q]
            A += ang
            B += ang
            A_out[i, j] = A
            B_out[i, j] = B
            rr = np.sqrt(S2)
            if kind == 0:
                h = A * B
                for k in range(4):
                    for q in range(2):
                        dh[k, q] = dA[k, q] * B + A * dB[k, q]
            elif kind == 1:
                ht = A * B
                g, gp = _smooth(rr, r0, r1)
                h = g * ht + (1.0 - g) * S2
                for k in range(4):
                    for q in range(2):
                        dh[k, q] = g * (dA[k, q] * B + A * dB[k, q]) + (1.0 - g) * 2.0 * ent[k, q]
                        if gp != 0.0:
                            dh[k, q] += (ht - S2) * gp * ent[k, q] / rr
            else:
                if A <= cap:
                    m = A
                    mflag = 1.0
                else:
                    m = cap
                    mflag = 0.0
                # one-well growth term: squared distance of the node gradient to SO(2)U0
                kv = 0 if pres[0] else 1
                kw = 2 if pres[2] else 3
                dk = np.zeros((4, 2))
                if (pres[0] or pres[1]) and (pres[2] or pres[3]):
                    F11 = ent[kv, 0]
                    F21 = ent[kv, 1]
                    F12 = ent[kw, 0]
                    F22 = ent[kw, 1]
                    t1 = a * F11 + b * F22
                    t2 = a * F21 - b * F12
                    rho = np.sqrt(t1 * t1 + t2 * t2)
                    k1 = F11 * F11 + F21 * F21 + F12 * F12 + F22 * F22 + a2 + b2 - 2.0 * rho
                    if k1 < 0.0:
                        k1 = 0.0
                    dk[kv, 0] = 2.0 * F11
                    dk[kv, 1] = 2.0 * F21
                    dk[kw, 0] = 2.0 * F12
                    dk[kw, 1] = 2.0 * F22
                    if rho > 0.0:
                        dk[kv, 0] -= 2.0 * t1 * a / rho
                        dk[kw, 1] -= 2.0 * t1 * b / rho
                        dk[kv, 1] -= 2.0 * t2 * a / rho
                        dk[kw, 0] += 2.0 * t2 * b / rho
                else:
                    k1 = S2
                    for k in range(4):
                        for q in range(2):
                            dk[k, q] = 2.0 * ent[k, q]
                g, gp = _smooth(rr, r0, r1)
                h = g * m + (1.0 - g) * k1
                for k in range(4):
                    for q in range(2):
                        dh[k, q] = g * mflag * dA[k, q] + (1.0 - g) * dk[k, q]
                        if gp != 0.0:
                            dh[k, q] += (m - k1) * gp * ent[k, q] / rr
            h_out[i, j] = h
            if want_grad:
                for q in range(2):
                    if pres[0]:
                        G[i + 1, j, q] += inv_n * dh[0, q]
                        G[i, j, q] -= inv_n * dh[0, q]
                    if pres[1]:
                        G[i, j, q] += inv_n * dh[1, q]
                        G[i - 1, j, q] -= inv_n * dh[1, q]
                    if pres[2]:
                        G[i, j + 1, q] += inv_n * dh[2, q]
                        G[i, j, q] -= inv_n * dh[2, q]
                    if pres[3]:
                        G[i, j, q] += inv_n * dh[3, q]
                        G[i, j - 1, q] -= inv_n * dh[3, q]


def _stencil_numpy(P, E, n):
    c = P[1:-1, 1:-1]
    pres = np.stack([E[2:, 1:-1], E[:-2, 1:-1], E[1:-1, 2:], E[1:-1, :-2]], axis=-1)
    ent = np.stack(
        [n * (P[2:, 1:-1] - c), n * (c - P[:-2, 1:-1]), n * (P[1:-1, 2:] - c), n * (c - P[1:-1, :-2])],
        axis=-2,
    )
    ent = np.where(pres[..., None], ent, 0.0)
    ent = np.nan_to_num(ent, nan=0.0)
    return ent, pres


def stencil_density(ent, pres, a, b, cbar, kind, r0, r1):
    """Vectorised density over stencils ``ent`` (..., 4, 2) with mask ``pres`` (..., 4).

    Returns ``(h, A, B, dh)`` where ``A``/``B`` are the U0/U1 brackets and ``dh``
    is the derivative of ``h`` with respect to the stencil entries.
    """
    ent = np.where(pres[..., None], ent, 0.0)
    L = np.sum(ent * ent, axis=-1)
    pf = pres.astype(float)
    ca = np.array([a * a, a * a, b * b, b * b])
    cb = ca[::-1].copy()
    A = np.sum(pf * (L - ca) ** 2, axis=-1)
    B = np.sum(pf * (L - cb) ** 2, axis=-1)
    dA = 4.0 * (pf * (L - ca))[..., None] * ent
    dB = 4.0 * (pf * (L - cb))[..., None] * ent
    ang = np.zeros(L.shape[:-1])
    dang = np.zeros_like(ent)
    for p in (0, 1):
        for r in (2, 3):
            both = pres[..., p] & pres[..., r]
            ip = np.sum(ent[..., p, :] * ent[..., r, :], axis=-1)
            ang = ang + np.where(both, np.abs(ip), 0.0)
            sg = np.where(both, np.sign(ip), 0.0)[..., None]
            dang[..., p, :] += sg * ent[..., r, :]
            dang[..., r, :] += sg * ent[..., p, :]
    A = A + ang
    B = B + ang
    dA = dA + dang
    dB = dB + dang
    S2 = np.sum(pf * L, axis=-1)
    rr = np.sqrt(S2)
    w = r1 - r0
    t = np.clip((rr - r0) / w, 0.0, 1.0)
    g = 1.0 - t**3 * (10.0 + t * (-15.0 + 6.0 * t))
    gp = np.where((rr > r0) & (rr < r1), -30.0 * t * t * (1 - t) ** 2 / w, 0.0)
    safe_r = np.where(rr > 0, rr, 1.0)
    if kind == TILDE:
        h = A * B
        dh = dA * B[..., None, None] + A[..., None, None] * dB
    elif kind == TRUNCATED:
        ht = A * B
        h = g * ht + (1 - g) * S2
        dh = (
            g[..., None, None] * (dA * B[..., None, None] + A[..., None, None] * dB)
            + ((1 - g) * 2.0)[..., None, None] * ent
            + ((ht - S2) * gp / safe_r)[..., None, None] * ent
        )
    else:
        cap = cbar / 10.0
        mflag = A <= cap
        m = np.where(mflag, A, cap)
        kv = np.where(pres[..., 0], 0, 1)
        kw = np.where(pres[..., 2], 2, 3)
        have = (pres[..., 0] | pres[..., 1]) & (pres[..., 2] | pres[..., 3])
        v = np.take_along_axis(ent, kv[..., None, None], axis=-2)[..., 0, :]
        wv = np.take_along_axis(ent, kw[..., None, None], axis=-2)[..., 0, :]
        F11, F21, F12, F22 = v[..., 0], v[..., 1], wv[..., 0], wv[..., 1]
        t1 = a * F11 + b * F22
        t2 = a * F21 - b * F12
        rho = np.sqrt(t1 * t1 + t2 * t2)
        k1d = np.maximum(F11**2 + F21**2 + F12**2 + F22**2 + a * a + b * b - 2 * rho, 0.0)
        k1 = np.where(have, k1d, S2)
        srho = np.where(rho > 0, rho, 1.0)
        cr = np.where(rho > 0, 2.0 / srho, 0.0)
        dv = np.stack([2 * F11 - cr * t1 * a, 2 * F21 - cr * t2 * a], axis=-1)
        dw = np.stack([2 * F12 + cr * t2 * b, 2 * F22 - cr * t1 * b], axis=-1)
        dk = np.zeros_like(ent)
        np.put_along_axis(dk, kv[..., None, None], dv[..., None, :], axis=-2)
        np.put_along_axis(dk, kw[..., None, None], dw[..., None, :], axis=-2)
        dk = np.where(have[..., None, None], dk, 2.0 * ent)
        h = g * m + (1 - g) * k1
        dh = (
            (g * mflag)[..., None, None] * dA
            + (1 - g)[..., None, None] * dk
            + ((m - k1) * gp / safe_r)[..., None, None] * ent
        )
    return h, A, B, dh


def _site_numpy(P, E, S, n, a, b, cbar, kind, r0, r1, want_grad):
    NI, NJ = S.shape
    ent, pres = _stencil_numpy(P, E, n)
    s_in = S[1:-1, 1:-1]
    h, A, B, dh = stencil_density(ent, pres, a, b, cbar, kind, r0, r1)
    h_out = np.zeros((NI, NJ))
    A_out = np.zeros((NI, NJ))
    B_out = np.zeros((NI, NJ))
    h_out[1:-1, 1:-1] = np.where(s_in, h, 0.0)
    A_out[1:-1, 1:-1] = np.where(s_in, A, 0.0)
    B_out[1:-1, 1:-1] = np.where(s_in, B, 0.0)
    G = None
    if want_grad:
        G = np.zeros((NI, NJ, 2))
        dh = np.where((s_in[..., None] & pres)[..., None], dh, 0.0) / n
        G[2:, 1:-1] += dh[..., 0, :]
        G[1:-1, 1:-1] -= dh[..., 0, :]
        G[1:-1, 1:-1] += dh[..., 1, :]
        G[:-2, 1:-1] -= dh[..., 1, :]
        G[1:-1, 2:] += dh[..., 2, :]
        G[1:-1, 1:-1] -= dh[..., 2, :]
        G[1:-1, 1:-1] += dh[..., 3, :]
        G[1:-1, :-2] -= dh[..., 3, :]
    return h_out, A_out, B_out, G


def site_energy(P, E, S, n, a, b, cbar, kind, want_grad=False, backend=None):
    """Site densities, both bracket fields and (optionally) dH/dP.

    Returns ``(h, A, B, G)`` with ``G`` the gradient of ``sum(h) / n**2``
    with respect to every position (None unless ``want_grad``).
    """
    (r0, r1), (w0, w1) = cutoffs(cbar)
    if kind == ONE_WELL:
        r0, r1 = w0, w1
    if backend is None:
        backend = "numba" if USE_NUMBA else "numpy"
    if backend == "numpy":
        return _site_numpy(P, E, S, float(n), a, b, cbar, kind, r0, r1, want_grad)
    NI, NJ = S.shape
    h = np.zeros((NI, NJ))
    A = np.zeros((NI, NJ))
    B = np.zeros((NI, NJ))
    G = np.zeros((NI, NJ, 2))
    Pc = np.ascontiguousarray(P)
    _site_loop(Pc, E, S, float(n), a, b, cbar, kind, r0, r1, want_grad, h, A, B, G)
    return h, A, B, (G if want_grad else None)


@njit(cache=True)
def _min_det_loop(P, TP, TM):
    NI, NJ = TP.shape
    m = np.inf
    for i in range(1, NI - 1):
        for j in range(1, NJ - 1):
            if TP[i, j]:
                e1x = P[i + 1, j, 0] - P[i, j, 0]
                e1y = P[i + 1, j, 1] - P[i, j, 1]
                e2x = P[i, j + 1, 0] - P[i, j, 0]
                e2y = P[i, j + 1, 1] - P[i, j, 1]
                d = e1x * e2y - e1y * e2x
                if not d > m:
                    m = d
            if TM[i, j]:
                e1x = P[i - 1, j, 0] - P[i, j, 0]
                e1y = P[i - 1, j, 1] - P[i, j, 1]
                e2x = P[i, j - 1, 0] - P[i, j, 0]
                e2y = P[i, j - 1, 1] - P[i, j, 1]
                d = e1x * e2y - e1y * e2x
                if not d > m:
                    m = d
    return m


def min_triangle_det(P, tri_plus, tri_minus, backend=None):
    """Smallest orientation determinant over all triangles (NaN counts as failure)."""
    if backend is None:
        backend = "numba" if USE_NUMBA else "numpy"
    if backend == "numba":
        m = _min_det_loop(np.ascontiguousarray(P), tri_plus, tri_minus)
        return m if np.isfinite(m) or m == np.inf else -np.inf
    c = P[1:-1, 1:-1]
    e1, e2 = P[2:, 1:-1] - c, P[1:-1, 2:] - c
    f1, f2 = P[:-2, 1:-1] - c, P[1:-1, :-2] - c
    dp = (e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])[tri_plus[1:-1, 1:-1]]
    dm = (f1[..., 0] * f2[..., 1] - f1[..., 1] * f2[..., 0])[tri_minus[1:-1, 1:-1]]
    d = np.concatenate([dp, dm])
    if d.size == 0:
        return np.inf
    if np.any(np.isnan(d)):
        return -np.inf
    return float(d.min())


@njit(cache=True)
def _two_loop_nb(S, Y, order, g):
    m = order.size
    N = g.size
    q = g.copy()
    alpha = np.empty(m)
    rho = np.empty(m)
    for kk in range(m - 1, -1, -1):
        k = order[kk]
        sy = 0.0
        sq = 0.0
        for t in range(N):
            sy += S[k, t] * Y[k, t]
            sq += S[k, t] * q[t]
        rho[kk] = 1.0 / sy
        alpha[kk] = rho[kk] * sq
        for t in range(N):
            q[t] -= alpha[kk] * Y[k, t]
    last = order[m - 1]
    sy = 0.0
    yy = 0.0
    for t in range(N):
        sy += S[last, t] * Y[last, t]
        yy += Y[last, t] * Y[last, t]
    gam = sy / yy
    for t in range(N):
        q[t] *= gam
    for kk in range(m):
        k = order[kk]
        yq = 0.0
        for t in range(N):
            yq += Y[k, t] * q[t]
        beta = rho[kk] * yq
        for t in range(N):
            q[t] += S[k, t] * (alpha[kk] - beta)
    return q


def two_loop(S, Y, order, g, backend=None):
    """Limited-memory inverse-Hessian product H g.

    ``S``, ``Y`` are ring buffers of curvature pairs; ``order`` lists the
    valid rows oldest first.
    """
    if backend is None:
        backend = "numba" if USE_NUMBA else "numpy"
    order = np.asarray(order, dtype=np.int64)
    if backend == "numba":
        return _two_loop_nb(S, Y, order, g)
    q = g.copy()
    m = order.size
    alpha = np.empty(m)
    rho = np.empty(m)
    for kk in range(m - 1, -1, -1):
        k = order[kk]
        rho[kk] = 1.0 / (S[k] @ Y[k])
        alpha[kk] = rho[kk] * (S[k] @ q)
        q -= alpha[kk] * Y[k]
    last = order[-1]
    q *= (S[last] @ Y[last]) / (Y[last] @ Y[last])
    for kk in range(m):
        k = order[kk]
        q += S[k] * (alpha[kk] - rho[kk] * (Y[k] @ q))
    return q
