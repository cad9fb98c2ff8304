import numpy as np
import pytest
from hypothesis import given, strategies as st

from twowell.wells import (dist_so2, dist_to_K, dist_to_K_batch, dist_to_well, make_wells, rotation,
                           well_distance_sq)


def test_Q_for_sqrt2(wells):
    np.testing.assert_allclose(wells.Q, [[0.8, -0.6], [0.6, 0.8]], atol=1e-12)
    assert abs(np.linalg.det(wells.Q) - 1) < 1e-12
    assert abs(wells.a * wells.b - 1) < 1e-12


def test_Q_by_hand_substitution(wells):
    # U0 - QU1 = s (a,-b) (x) (1,1)/sqrt2 with s = sqrt2 (a^2-b^2)/(a^2+b^2); Q = (QU1) U1^{-1}
    a, b = np.sqrt(2), 1 / np.sqrt(2)
    s = np.sqrt(2) * (2 - 0.5) / 2.5
    QU1 = np.diag([a, b]) - s * np.outer([a, -b], [1, 1]) / np.sqrt(2)
    np.testing.assert_allclose(QU1 @ np.diag([1 / b, 1 / a]), wells.Q, atol=1e-14)


@pytest.mark.parametrize("sign,normal", [(+1, (1, 1)), (-1, (1, -1))])
def test_rank_one_connections(wells, sign, normal):
    M = wells.U0 - (wells.QU1 if sign > 0 else wells.QtU1)
    sv = np.linalg.svd(M, compute_uv=False)
    assert sv[-1] <= 1e-10
    nu = np.array(normal) / np.sqrt(2)
    tau = np.array([-nu[1], nu[0]])
    assert np.linalg.norm(M @ tau) <= 1e-12  # annihilates the interface direction
    amp, nrm = wells.jump(sign)
    np.testing.assert_allclose(np.outer(amp, nrm), M, atol=1e-12)


def test_cbar_dense_scan(wells):
    th = np.linspace(0, 2 * np.pi, 1_000_000, endpoint=False)
    c, s = np.cos(th), np.sin(th)
    a, b = wells.a, wells.b
    # |U0 - R U1|^2 with R = [[c,-s],[s,c]]
    d2 = (a - c * b) ** 2 + (s * a) ** 2 + (s * b) ** 2 + (b - c * a) ** 2
    assert abs(np.sqrt(d2.min()) - wells.cbar) < 1e-6
    assert abs(wells.cbar - 1.0) < 1e-12
    assert abs(wells.cbar**2 - 2 * (a - b) ** 2) < 1e-12


@given(a=st.floats(0.3, 4.0).filter(lambda x: abs(x - 1) > 0.05))
def test_wells_properties(a):
    w = make_wells(a)
    assert w.cbar > 0
    assert abs(np.linalg.det(w.QU1) - 1) < 1e-10
    assert np.linalg.svd(w.U0 - w.QU1, compute_uv=False)[-1] <= 1e-10
    assert np.linalg.svd(w.U0 - w.QtU1, compute_uv=False)[-1] <= 1e-10


def test_make_wells_rejects():
    with pytest.raises(ValueError):
        make_wells(1.0)
    with pytest.raises(ValueError):
        make_wells(-2.0)


def test_distances(wells):
    assert dist_to_well(wells.U0, wells.U0) < 1e-12
    rng = np.random.default_rng(0)
    for th in rng.uniform(0, 2 * np.pi, 20):
        assert dist_to_well(rotation(th) @ wells.U0, wells.U0) < 1e-10
    th = np.linspace(0, 2 * np.pi, 200_001)
    scan = min(np.linalg.norm(np.eye(2) - rotation(t) @ wells.U0) for t in th[::100])
    fine = np.min([np.linalg.norm(np.eye(2) - rotation(t) @ wells.U0) for t in np.linspace(-0.01, 0.01, 2001)])
    assert abs(dist_to_well(np.eye(2), wells.U0) - min(scan, fine)) < 1e-8
    with pytest.raises(ValueError):
        dist_to_well(np.eye(2), np.zeros((2, 2)))


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_dist_so2_matches_closed_form(vals):
    F = np.array(vals).reshape(2, 2)
    d = dist_so2(F)
    th = np.linspace(0, 2 * np.pi, 4001)
    scan = min(np.linalg.norm(F - rotation(t)) for t in th)
    assert d <= scan + 1e-12
    assert scan - d < 5e-3 * (1 + np.linalg.norm(F))


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_batch_matches_scalar(vals):
    w = make_wells(np.sqrt(2))
    F = np.array(vals).reshape(2, 2)
    assert abs(dist_to_K_batch(F[None], w)[0] - dist_to_K(F, w)) < 1e-10
    assert well_distance_sq(F, w.U0) >= -1e-12
