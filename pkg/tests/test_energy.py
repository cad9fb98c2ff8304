import numpy as np
import pytest
from hypothesis import given, strategies as st

from twowell import energy, kernels
from twowell.energy import (ContractViolation, Stencil, bracket_U0, bracket_U1, density_one_well,
                            density_tilde, density_truncated, energy_gradient, hamiltonian, total_energy)
from twowell.lattice import affine, standard_domain, transform
from twowell.optimize import initialize, perturb
from twowell.wells import dist_to_well, rotation


# -- independent scalar oracle -----------------------------------------------------------


def bracket_oracle(ent, pres, p, q):
    """sum (|d1|^2 - p^2)^2 + (|d2|^2 - q^2)^2 over present entries + sum |d1 . d2| over present pairs."""
    tot = 0.0
    for k in range(4):
        if pres[k]:
            target = p * p if k < 2 else q * q
            tot += (ent[k] @ ent[k] - target) ** 2
    for i in (0, 1):
        for j in (2, 3):
            if pres[i] and pres[j]:
                tot += abs(ent[i] @ ent[j])
    return tot


def smoothstep_cut(r, r0, r1):
    if r <= r0:
        return 1.0
    if r >= r1:
        return 0.0
    t = (r - r0) / (r1 - r0)
    return 1 - (10 * t**3 - 15 * t**4 + 6 * t**5)


stencils = st.lists(st.floats(-4, 4), min_size=8, max_size=8).map(lambda v: np.array(v).reshape(4, 2))
masks = st.lists(st.booleans(), min_size=4, max_size=4).map(np.array)


@given(ent=stencils, pres=masks)
def test_brackets_match_oracle(ent, pres, wells):
    s = Stencil(ent, pres)
    a, b = wells.a, wells.b
    assert bracket_U0(s, wells) == pytest.approx(bracket_oracle(s.entries * pres[:, None], pres, a, b), rel=1e-12, abs=1e-12)
    assert bracket_U1(s, wells) == pytest.approx(bracket_oracle(s.entries * pres[:, None], pres, b, a), rel=1e-12, abs=1e-12)
    h = density_tilde(s, wells)
    assert h >= 0
    assert h == pytest.approx(bracket_U0(s, wells) * bracket_U1(s, wells), rel=1e-12, abs=1e-12)


@given(ent=stencils)
def test_truncated_matches_oracle(ent, wells):
    s = Stencil(ent * 5)
    r = s.norm
    g = smoothstep_cut(r, 10 * (wells.cbar + 1), 20 * (wells.cbar + 1))
    expect = g * density_tilde(s, wells) + (1 - g) * r * r
    assert density_truncated(s, wells) == pytest.approx(expect, rel=1e-10, abs=1e-10)


@given(ent=stencils)
def test_well_swap_symmetry(ent, wells):
    s = Stencil(ent)
    swapped = Stencil(ent[[2, 3, 0, 1]])
    assert bracket_U1(s, wells) == pytest.approx(bracket_U0(swapped, wells), rel=1e-14, abs=1e-14)


def test_density_examples(wells):
    I = Stencil.from_gradient(np.eye(2))
    assert density_tilde(I, wells) == pytest.approx(6.25, abs=1e-12)
    assert density_truncated(I, wells) == pytest.approx(6.25, abs=1e-12)
    for F in (wells.U0, rotation(0.4) @ wells.U1):
        s = Stencil.from_gradient(F)
        assert density_tilde(s, wells) <= 1e-12
        assert density_truncated(s, wells) <= 1e-12
    big = Stencil.from_gradient(np.eye(2) * 25 * (wells.cbar + 1) / 2)  # |s| = 25 (cbar + 1)
    assert big.norm == pytest.approx(25 * (wells.cbar + 1))
    assert density_truncated(big, wells) == big.norm**2


def test_one_well_examples(wells):
    assert density_one_well(Stencil.from_gradient(wells.U0), wells) == 0.0
    s = Stencil.from_gradient(wells.QU1)
    assert bracket_U0(s, wells) >= wells.cbar
    assert density_one_well(s, wells) == pytest.approx(wells.cbar / 10)
    R1 = 20 * max(10 * wells.cbar, 100)
    F = np.diag([R1, R1])
    expect = dist_to_well(F, wells.U0) ** 2
    assert density_one_well(Stencil.from_gradient(F), wells) == pytest.approx(expect, rel=1e-12)


@given(ent=stencils)
def test_nonnegative(ent, wells):
    s = Stencil(ent * 3)
    assert density_tilde(s, wells) >= 0
    assert density_truncated(s, wells) >= 0
    assert density_one_well(s, wells) >= 0


def test_exact_wells_zero(wells):
    D = standard_domain(16)
    assert total_energy(affine(D, wells.U0), wells) <= 1e-12
    assert total_energy(affine(D, np.array([[0.0, -1.0], [1.0, 0.0]]) @ wells.U1, (0.5, 2.0)), wells) <= 1e-12


def test_total_equals_independent_sum(wells):
    n = 16
    D = standard_domain(n)
    u = affine(D, wells.F(0.5))
    rep = hamiltonian(u, wells, "tilde")
    assert rep.total > 0
    tot = 0.0
    I, J = D.index_grid
    for a, b in zip(*np.nonzero(D.node)):
        ent, pres = [], []
        for (da, db, k, fwd) in ((1, 0, 0, True), (-1, 0, 0, False), (0, 1, 1, True), (0, -1, 1, False)):
            ok = D.exists[a + da, b + db]
            pres.append(ok)
            if not ok:
                ent.append(np.zeros(2))
            elif fwd:
                ent.append(n * (u.P[a + da, b + db] - u.P[a, b]))
            else:
                ent.append(n * (u.P[a, b] - u.P[a + da, b + db]))
        ent = np.array(ent)[[0, 1, 2, 3]]
        tot += bracket_oracle(ent, pres, wells.a, wells.b) * bracket_oracle(ent, pres, wells.b, wells.a) / n**2
    assert rep.total == pytest.approx(tot, rel=1e-10)
    assert rep.rescaled == pytest.approx(n * rep.total)
    assert np.all(rep.site_density[D.node] >= 0)


def test_single_interface_rescaled_stable(wells):
    vals = []
    for n in (16, 32):
        D = standard_domain(n)
        u = initialize(D, "profile", wells, None, V1=wells.U0, V2=wells.QU1)
        vals.append(n * total_energy(u, wells))
    assert abs(vals[0] / vals[1] - 1) <= 0.2


@given(th=st.floats(0, 2 * np.pi), bx=st.floats(-3, 3), by=st.floats(-3, 3))
def test_frame_indifference(th, bx, by, wells):
    D = standard_domain(4)
    u = perturb(initialize(D, "affine", wells, 0.5), 0.05, 1, noise=0.1)
    e0 = total_energy(u, wells)
    e1 = total_energy(transform(u, rotation(th), (bx, by)), wells)
    assert e1 == pytest.approx(e0, rel=1e-10)


def test_gradient_examples(wells):
    D = standard_domain(8)
    G, dc = energy_gradient(affine(D, wells.U0), wells)
    assert np.abs(G).max() <= 1e-10 and np.abs(dc).max() <= 1e-10  # zero up to rounding of the positions
    u = perturb(initialize(D, "affine", wells, 0.5), 0.05, 3, noise=0.1)
    G1, dc1 = energy_gradient(u, wells)
    G2, dc2 = energy_gradient(transform(u, np.eye(2), (3.0, -1.0)), wells)
    np.testing.assert_allclose(G1, G2, atol=1e-9 * np.abs(G1).max())
    assert np.all(G1[D.left_side | D.right_side] == 0)


@pytest.mark.parametrize("density", ["tilde", "truncated", "one_well"])
def test_gradient_finite_differences(density, wells):
    from twowell.calibrate import gradient_fd_error

    D = standard_domain(6)
    u = perturb(initialize(D, "affine", wells, 0.5), 0.05, 5, noise=0.2)
    assert gradient_fd_error(u, wells, coords=40, density=density) <= 1e-6


def test_plugin_contract(wells):
    D = standard_domain(4)
    u = affine(D, wells.F(0.5))

    def plain(ent, pres, w):
        return np.ones(ent.shape[:2])

    with pytest.raises(ContractViolation):
        hamiltonian(u, wells, plain)

    def negative(ent, pres, w):
        return -np.ones(ent.shape[:2])

    negative.lower_bound_contract = True
    with pytest.raises(ContractViolation):
        hamiltonian(u, wells, negative)

    def doubled(ent, pres, w):
        (r0, r1), _ = kernels.cutoffs(w.cbar)
        return 2 * kernels.stencil_density(ent, pres, w.a, w.b, w.cbar, kernels.TRUNCATED, r0, r1)[0]

    doubled.lower_bound_contract = True
    assert hamiltonian(u, wells, doubled).total == pytest.approx(2 * total_energy(u, wells), rel=1e-12)
    with pytest.raises(ValueError):
        hamiltonian(u, wells, "nope")


def test_report_exports(wells, tmp_path):
    import csv
    import json

    D = standard_domain(4)
    rep = hamiltonian(affine(D, wells.F(0.5)), wells)
    rep.write_csv(tmp_path / "e.csv")
    rep.write_json(tmp_path / "e.json")
    rows = list(csv.reader(open(tmp_path / "e.csv")))
    assert rows[0] == ["i", "j", "h_site", "dist_K", "bracket_U0", "bracket_U1"]
    assert len(rows) - 1 == int(D.node.sum())
    d = json.load(open(tmp_path / "e.json"))
    assert set(d) == {"total", "rescaled", "n", "a", "lambda", "density"}


def test_stencil_well_distance(wells):
    s = Stencil.from_gradient(rotation(1.0) @ wells.U1)
    assert energy.stencil_well_distance(s.entries, s.present, wells) < 1e-7
    s = Stencil.from_gradient(np.eye(2))
    F = np.eye(2)
    # for an affine stencil the distance is sqrt(2) times the gradient distance
    d = np.sqrt(2) * min(dist_to_well(F, wells.U0), dist_to_well(F, wells.U1))
    assert energy.stencil_well_distance(s.entries, s.present, wells) == pytest.approx(d, rel=1e-12)
