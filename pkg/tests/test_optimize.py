import json

import numpy as np
import pytest

from twowell.energy import hamiltonian, total_energy
from twowell.lattice import ConfigurationError, affine, check_admissible, load, standard_domain, triangle_gradients
from twowell.optimize import (MinimizationError, MinimizeOptions, NU_PLUS, initialize, interface_normal, minimize,
                              perturb, piecewise_affine, rank_one_defect, write_checkpoint)


def start(n, wells, lam=0.5, seed=0, amplitude=0.02):
    D = standard_domain(n)
    base = initialize(D, "laminate", wells, lam, gradients=[wells.U0, wells.QU1], offsets=[0.0])
    return initialize(D, "perturbed", wells, lam, base=base, amplitude=amplitude, seed=seed, noise=0.02)


def test_start_at_well_converges_immediately(wells):
    D = standard_domain(8)
    res = minimize(affine(D, wells.U0), wells)
    assert res.termination == "converged"
    assert res.iterations == 0
    # 1/sqrt(2) is not exact in binary, so the energy at U0 is zero only up to rounding
    assert len(res.energy_trace) == 1 and res.energy_trace[0] < 1e-20


def test_trace_monotone_and_admissible(wells):
    seen = []

    def cb(it, f, d):
        seen.append(check_admissible(d).ok)

    res = minimize(start(8, wells), wells, opts=MinimizeOptions(max_iters=150), callback=cb)
    tr = np.array(res.energy_trace)
    assert np.all(np.diff(tr) < 0)
    assert all(seen) and res.admissible
    assert res.iterations == len(tr) - 1


def test_exact_laminate_does_not_increase(wells):
    D = standard_domain(8)
    base = initialize(D, "laminate", wells, 0.5, gradients=[wells.U0, wells.QU1], offsets=[0.0])
    res = minimize(base, wells, opts=MinimizeOptions(max_iters=100))
    assert res.rescaled <= D.n * total_energy(base, wells)


def test_boundary_exact(wells):
    d0 = start(8, wells)
    D = d0.domain
    F = wells.F(0.5)
    L, R = D.left_side, D.right_side
    lefts = []

    def cb(it, f, d):
        lefts.append(np.array_equal(d.P[L], d0.P[L]))
        np.testing.assert_array_equal(d.P[R], D.coords[R] @ F.T + d.c)

    res = minimize(d0, wells, opts=MinimizeOptions(max_iters=60), callback=cb)
    assert all(lefts) and lefts
    assert np.array_equal(res.final.P[R], D.coords[R] @ F.T + res.final.c)


def test_translation_moves(wells):
    res = minimize(start(8, wells), wells, opts=MinimizeOptions(max_iters=100))
    assert np.any(res.final.c != 0)


def test_deterministic(wells):
    o = MinimizeOptions(max_iters=80)
    r1 = minimize(start(8, wells, seed=3), wells, opts=o)
    r2 = minimize(start(8, wells, seed=3), wells, opts=o)
    assert r1.energy_trace == r2.energy_trace
    assert np.array_equal(r1.final.P, r2.final.P, equal_nan=True)


def test_gradient_descent_method(wells):
    res = minimize(start(8, wells), wells, opts=MinimizeOptions(max_iters=40, method="gradient_descent"))
    assert np.all(np.diff(res.energy_trace) < 0)


@pytest.mark.parametrize("kw", [dict(method="newton"), dict(backtrack_factor=1.0), dict(armijo_c=0.0),
                                dict(max_iters=-1), dict(grad_tol=0.0), dict(step0=-1.0)])
def test_options_validated(kw):
    with pytest.raises(ConfigurationError):
        MinimizeOptions(**kw).resolved(8)


def test_default_options_scale_with_n():
    o = MinimizeOptions().resolved(16)
    assert o.max_iters == 50 * 256
    assert o.grad_tol == pytest.approx(16e-8)
    assert o.step0 == pytest.approx(1e-2 / 256)


def test_inadmissible_start_rejected(wells):
    with pytest.raises(ConfigurationError):
        minimize(affine(standard_domain(4), np.diag([1.0, -1.0])), wells)


def test_nonfinite_start_aborts(wells):
    d = affine(standard_domain(4), wells.U0)
    d.P[d.domain.node] *= 1e200
    with pytest.raises((MinimizationError, ConfigurationError)):
        minimize(d, wells)


def test_affine_mode(wells):
    d = initialize(standard_domain(8), "affine", wells, F=wells.U0)
    gp, gm = triangle_gradients(d)
    D = d.domain
    assert np.allclose(gp[D.tri_plus], wells.U0, atol=1e-12)
    assert np.allclose(gm[D.tri_minus], wells.U0, atol=1e-12)


def test_profile_continuous_across_interface(wells):
    # U0 - QU1 annihilates the interface direction, so both affine pieces agree on the line x.nu = 0
    tau = np.array([-1.0, 1.0]) / np.sqrt(2.0)
    t = np.linspace(-2, 2, 41)[:, None] * tau
    left = t @ wells.U0.T
    right = t @ wells.QU1.T
    assert np.allclose(left, right, atol=1e-12)
    D = standard_domain(16)
    d = initialize(D, "profile", wells, V1=wells.U0, V2=wells.QU1)
    gp, _ = triangle_gradients(d)
    X = D.coords + np.array([1, 1]) / (3 * D.n)
    s = X @ NU_PLUS
    far_left = D.tri_plus & (s < -2 / D.n)
    far_right = D.tri_plus & (s > 2 / D.n)
    assert np.allclose(gp[far_left], wells.U0, atol=1e-12)
    assert np.allclose(gp[far_right], wells.QU1, atol=1e-12)


def test_three_interface_bands(wells):
    D = standard_domain(32)
    h = D.d / np.sqrt(2.0)
    offs = [-0.5 * h, 0.0, 0.5 * h]
    d = initialize(D, "laminate", wells, 0.5, gradients=[wells.U0, wells.QU1, wells.U0, wells.QU1], offsets=offs)
    rep = hamiltonian(d, wells)
    X = D.coords
    s = X @ NU_PLUS
    lines = [-h, *offs, h]
    near = np.zeros(D.shape, bool)
    for t in lines:
        near |= np.abs(s - t) <= 2.0 / D.n
    bulk = D.node & ~near
    # rotated-well bulk sits at the float64 rounding floor (~1e-12), far below the band densities
    assert np.nanmax(rep.site_density[bulk]) < 1e-10
    for t in offs:
        band = D.node & (np.abs(s - t) <= 2.0 / D.n)
        assert np.nansum(rep.site_density[band]) > 0


def test_rank_one_defect_rejected(wells):
    D = standard_domain(8)
    with pytest.raises(ConfigurationError, match="defect"):
        initialize(D, "laminate", wells, 0.5, gradients=[wells.U0, wells.QtU1], offsets=[0.0])
    assert rank_one_defect(wells.U0, wells.QU1, interface_normal("+")) < 1e-12
    assert rank_one_defect(wells.U0, wells.QtU1, interface_normal("-")) < 1e-12
    assert rank_one_defect(wells.U0, wells.QtU1, interface_normal("+")) > 0.1


def test_piecewise_affine_checks_offsets(wells):
    X = np.zeros((3, 2))
    with pytest.raises(ConfigurationError):
        piecewise_affine(X, [wells.U0, wells.QU1, wells.U0], [0.5, 0.0], NU_PLUS)
    with pytest.raises(ConfigurationError):
        piecewise_affine(X, [wells.U0, wells.QU1], [], NU_PLUS)


def test_perturbed_admissible_and_seeded(wells):
    a = start(8, wells, seed=1)
    b = start(8, wells, seed=1)
    c = start(8, wells, seed=2)
    assert check_admissible(a).ok
    assert np.array_equal(a.P, b.P, equal_nan=True)
    assert not np.array_equal(a.P, c.P, equal_nan=True)


def test_perturb_gives_up(wells):
    with pytest.raises(ConfigurationError, match="100 attempts"):
        perturb(affine(standard_domain(4), wells.U0), 50.0, 0)


def test_unknown_mode(wells):
    with pytest.raises(ConfigurationError):
        initialize(standard_domain(4), "spiral", wells)


def test_checkpoint_roundtrip(tmp_path, wells):
    res = minimize(start(8, wells), wells, opts=MinimizeOptions(max_iters=20))
    path = tmp_path / "ck.txt"
    meta = write_checkpoint(res, path, seed=5)
    back = load(path)
    assert np.array_equal(back.P, res.final.P, equal_nan=True)
    side = json.loads((tmp_path / "ck.txt.json").read_text())
    assert side == json.loads(json.dumps(meta))
    assert side["seed"] == 5 and side["iteration"] == res.iterations
