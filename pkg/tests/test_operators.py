import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from curvmf.mesh import build_mesh, gen_flat_grid, gen_hemisphere
from curvmf.operators import (
    assemble_operators,
    background_check,
    dirichlet_energy,
    edge_weight,
    euler_characteristic,
    export_coo_csv,
    integrate_boundary,
    integrate_interior,
)


def test_right_isosceles_cotangent_weights():
    mesh = build_mesh(np.array([[0, 1, 2]]), 3, lambda e: np.array([math.sqrt(2) if (a, b) == (1, 2) else 1.0 for a, b in e]))
    ops = assemble_operators(mesh)
    assert edge_weight(ops, 1, 2) == pytest.approx(0.0, abs=1e-15)  # hypotenuse, opposite the right angle
    assert edge_weight(ops, 0, 1) == pytest.approx(0.5)
    assert edge_weight(ops, 0, 2) == pytest.approx(0.5)


def test_row_sums_and_symmetry(hemi, cyl, pants):
    for ops in (hemi[2], cyl[1], pants[1]):
        L = ops.stiffness
        assert abs(L - L.T).max() < 1e-15
        assert np.abs(np.asarray(L.sum(axis=1))).max() < 1e-12


def test_unit_square_x_energy():
    mesh = gen_flat_grid(6, 5)
    ops = assemble_operators(mesh)
    x = mesh.embedding[:, 0]
    assert dirichlet_energy(ops, x) == pytest.approx(1.0, rel=1e-12)


def test_hemisphere_height_energy_converges():
    # oracle: |grad x3|^2 = 1 - x3^2 on the sphere; integrate over the hemisphere in z
    exact, _ = integrate.quad(lambda z: 2 * math.pi * (1 - z * z), 0.0, 1.0)
    assert exact == pytest.approx(4 * math.pi / 3)
    errs = []
    for R in (4, 8, 16):
        mesh, _ = gen_hemisphere(2, R)
        errs.append(abs(dirichlet_energy(assemble_operators(mesh), mesh.embedding[:, 2]) / exact - 1))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 3e-3
    # second-order decay
    assert errs[1] / errs[2] > 3.5


def test_integration_weights(cyl, pants):
    mesh, ops = cyl
    assert integrate_interior(ops, np.ones(mesh.vertex_count)) == pytest.approx(2 * math.pi, rel=1e-14)
    assert integrate_boundary(ops, np.ones(len(ops.boundary_vertices))) == pytest.approx(4 * math.pi, rel=1e-14)
    pm, pops = pants
    assert integrate_boundary(pops, np.ones(len(pops.boundary_vertices))) == pytest.approx(3.0, rel=1e-10)
    assert integrate_interior(ops, np.ones(mesh.vertex_count)) == ops.area
    with pytest.raises(ValueError):
        integrate_interior(ops, np.ones(3))


def test_euler_characteristics(hemi, cyl, pants):
    assert [euler_characteristic(m) for m in (hemi[0], cyl[0], pants[0])] == [1, 0, -1]


def test_background_gauss_bonnet(hemi, cyl, pants):
    bh = background_check(gen_hemisphere(2, 16)[0])
    assert bh.ok(1e-10)
    assert bh.interior_defect == pytest.approx(2 * math.pi, rel=0.05)
    bp = background_check(pants[0])
    assert bp.ok(1e-10)
    assert bp.interior_defect == pytest.approx(-2 * math.pi, rel=0.05)
    bc = background_check(cyl[0])
    assert abs(bc.interior_defect) < 1e-12 and abs(bc.boundary_turning) < 1e-12


def test_degenerate_triangle_warns():
    mesh = build_mesh(np.array([[0, 1, 2]]), 3, lambda e: np.array([1.0, 1.0, 1.9999999]))
    with pytest.warns(RuntimeWarning, match="first face 0"):
        assemble_operators(mesh)


def test_coo_export(tmp_path, cyl):
    mesh, ops = cyl
    path = tmp_path / "L.csv"
    export_coo_csv(ops, path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert len(rows) == ops.stiffness.nnz
    dense = np.zeros((mesh.vertex_count,) * 2)
    dense[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
    assert np.array_equal(dense, ops.stiffness.toarray())


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), c=st.floats(-50, 50))
def test_energy_nonnegative_and_translation_invariant(hemi, seed, c):
    ops = hemi[2]
    u = np.random.default_rng(seed).standard_normal(ops.vertex_count)
    e = dirichlet_energy(ops, u)
    assert e > 0
    assert dirichlet_energy(ops, u + c) == pytest.approx(e, rel=1e-9, abs=1e-9)
    assert abs(dirichlet_energy(ops, np.full(ops.vertex_count, c))) < 1e-9 * (1 + c * c)
