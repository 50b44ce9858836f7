"""Stiffness/mass assembly, harmonic extension, Dirichlet energy."""
import dataclasses
import math

import numpy as np
import pytest

from steklov import fem, mesh
from steklov.errors import AssemblyError, ParameterError, SolveError
from steklov.mesh import EXTERIOR, BoundaryLoop, Mesh, MetricSpec


def single_triangle():
    return Mesh(
        "tri",
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        np.array([[0, 1, 2]]),
        MetricSpec.euclidean(),
        (BoundaryLoop((0, 1, 2), (EXTERIOR,) * 3),),
    )


def two_disjoint_triangles():
    return Mesh(
        "twocomp",
        np.array([[0, 0], [1, 0], [0, 1], [5, 5], [6, 5], [5, 6]], dtype=float),
        np.array([[0, 1, 2], [3, 4, 5]]),
        MetricSpec.euclidean(),
        (
            BoundaryLoop((0, 1, 2), (EXTERIOR,) * 3),
            BoundaryLoop((3, 4, 5), (EXTERIOR,) * 3),
        ),
    )


# ------------------------------------------------------------------ stiffness

def test_unit_right_triangle_element_matrix():
    k = fem.assemble_stiffness(single_triangle()).matrix.toarray()
    hand = 0.5 * np.array([[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    assert np.allclose(k, hand, atol=1e-15)


def test_conformal_stiffness_equals_euclidean(disk_coarse):
    rng = np.random.default_rng(11)
    factor = np.exp(rng.normal(size=disk_coarse.n_vertices))
    conf = dataclasses.replace(disk_coarse, metric=MetricSpec.conformal(factor))
    k_euc = fem.assemble_stiffness(disk_coarse).matrix
    k_conf = fem.assemble_stiffness(conf).matrix
    scale = np.abs(k_euc.data).max()
    assert np.abs((k_euc - k_conf).toarray()).max() <= 5e-15 * scale


def test_stiffness_symmetric_psd_constant_kernel(disk_coarse):
    kop = fem.assemble_stiffness(disk_coarse)
    k = kop.matrix
    assert kop.role == fem.STIFFNESS
    assert (k != k.T).nnz == 0
    ones = np.ones(disk_coarse.n_vertices)
    scale = np.abs(k.data).max()
    assert abs(ones @ (k @ ones)) <= 1e-10 * scale
    dense = k.toarray()
    evals = np.linalg.eigvalsh(dense)
    assert evals[0] >= -1e-12 * scale
    # exactly one kernel vector (constants) on a connected mesh
    assert evals[1] > 1e-6 * scale
    proj = np.full((disk_coarse.n_vertices, disk_coarse.n_vertices), 1.0 / disk_coarse.n_vertices)
    evals_reg = np.linalg.eigvalsh(dense + scale * proj)
    assert evals_reg[0] > 1e-8 * scale


def test_non_spd_metric_names_triangle(disk_coarse):
    tensors = np.tile([1.0, 0.0, 1.0], (disk_coarse.n_triangles, 1))
    tensors[7] = [1.0, 2.0, 1.0]  # det = -3
    bad = dataclasses.replace(disk_coarse, metric=MetricSpec.per_triangle(tensors))
    with pytest.raises(AssemblyError, match="triangle 7"):
        fem.assemble_stiffness(bad)


def test_collar_stiffness_matches_per_triangle_tensor():
    # non-periodic (rho, t) strip carries the same tensor without seam unwrap
    strip = mesh.rectangle_mesh(1.1, 1.0, 5, 12)
    collar = dataclasses.replace(strip, metric=MetricSpec.collar(0.9))
    rho_bar = strip.triangle_chart_coords()[:, :, 0].mean(axis=1)
    tensors = np.stack(
        [np.ones_like(rho_bar), np.zeros_like(rho_bar), (0.9 * np.cosh(rho_bar)) ** 2],
        axis=1,
    )
    explicit = dataclasses.replace(strip, metric=MetricSpec.per_triangle(tensors))
    k1 = fem.assemble_stiffness(collar).matrix.toarray()
    k2 = fem.assemble_stiffness(explicit).matrix.toarray()
    assert np.allclose(k1, k2, rtol=1e-13, atol=1e-13)


# -------------------------------------------------------------- boundary mass

def test_boundary_mass_total_equals_length(annulus_coarse):
    b = fem.assemble_boundary_mass(annulus_coarse).matrix
    ones = np.ones(annulus_coarse.n_vertices)
    assert ones @ (b @ ones) == pytest.approx(
        mesh.boundary_length(annulus_coarse), rel=1e-12
    )


def test_boundary_mass_label_restriction():
    m = mesh.poincare_halfdisk_mesh(0.8, 8)
    b_ext = fem.assemble_boundary_mass(m, (EXTERIOR,)).matrix
    ones = np.ones(m.n_vertices)
    assert ones @ (b_ext @ ones) == pytest.approx(
        mesh.boundary_length(m, [m.full_loop_arc(0)]), rel=1e-12
    )
    # a field vanishing on the selected boundary has zero mass
    u = np.ones(m.n_vertices)
    u[m.vertices_with_label(EXTERIOR)] = 0.0
    assert u @ (b_ext @ u) == 0.0


def test_collar_loop_mass_is_l0():
    l0 = 0.6875
    m = mesh.collar_mesh(l0, 1.4, 6, 16)
    b = fem.assemble_boundary_mass(m).matrix
    u = np.zeros(m.n_vertices)
    u[list(m.boundary_loops[0].vertices)] = 1.0
    assert u @ (b @ u) == pytest.approx(l0, rel=1e-12)


def test_boundary_mass_row_sums_are_lumped_measure(square_coarse):
    bop = fem.assemble_boundary_mass(square_coarse)
    assert bop.role == fem.BOUNDARY_MASS
    rows = np.asarray(bop.matrix.sum(axis=1)).ravel()
    interior = square_coarse.interior_vertex_ids
    assert np.all(rows[interior] == 0.0)
    assert rows.sum() == pytest.approx(mesh.boundary_length(square_coarse), rel=1e-12)


# --------------------------------------------------------- harmonic extension

def test_constant_extension(disk_coarse):
    fixed = {int(v): 2.5 for v in disk_coarse.boundary_vertex_ids[:5]}
    u = fem.harmonic_extension(disk_coarse, fixed)
    assert np.allclose(u, 2.5, atol=1e-9)


def test_annulus_radial_profile():
    r_in, r_out = 0.5, 1.0
    m = mesh.annulus_mesh(r_in, r_out, 16, 64)
    fixed = {int(v): 1.0 for v in m.boundary_loops[0].vertices}
    fixed.update({int(v): 0.0 for v in m.boundary_loops[1].vertices})
    u = fem.harmonic_extension(m, fixed)
    r = np.hypot(m.vertices[:, 0], m.vertices[:, 1])
    exact = np.log(r_out / r) / math.log(r_out / r_in)
    assert np.abs(u - exact).max() <= 5e-3


def test_galerkin_minimality(disk_coarse):
    rng = np.random.default_rng(5)
    bverts = disk_coarse.boundary_vertex_ids
    fixed = {int(v): float(rng.normal()) for v in bverts}
    kop = fem.assemble_stiffness(disk_coarse)
    u = fem.harmonic_extension(disk_coarse, fixed, kop)
    e0 = fem.dirichlet_energy(disk_coarse, u, kop)
    free = disk_coarse.interior_vertex_ids
    for _ in range(20):
        pert = np.zeros(disk_coarse.n_vertices)
        pert[free] = rng.normal(size=len(free)) * 0.1
        assert fem.dirichlet_energy(disk_coarse, u + pert, kop) >= e0 - 1e-12 * max(e0, 1)


def test_extension_linearity(disk_coarse):
    rng = np.random.default_rng(9)
    bverts = [int(v) for v in disk_coarse.boundary_vertex_ids]
    f = {v: float(rng.normal()) for v in bverts}
    g = {v: float(rng.normal()) for v in bverts}
    alpha, beta = 0.7, -1.3
    combo = {v: alpha * f[v] + beta * g[v] for v in bverts}
    uf = fem.harmonic_extension(disk_coarse, f)
    ug = fem.harmonic_extension(disk_coarse, g)
    uc = fem.harmonic_extension(disk_coarse, combo)
    assert np.allclose(uc, alpha * uf + beta * ug, atol=1e-9)


def test_all_vertices_fixed_passthrough():
    m = single_triangle()
    u = fem.harmonic_extension(m, {0: 1.0, 1: 2.0, 2: 3.0})
    assert np.array_equal(u, [1.0, 2.0, 3.0])


def test_empty_fixed_rejected(disk_coarse):
    with pytest.raises(ParameterError):
        fem.harmonic_extension(disk_coarse, {})


def test_disconnected_free_component_is_solve_error():
    m = two_disjoint_triangles()
    with pytest.raises(SolveError):
        fem.harmonic_extension(m, {0: 1.0})


def test_discrete_maximum_principle_on_right_triangle_grid():
    m = mesh.rectangle_mesh(1.0, 1.0, 10, 10)
    k = fem.assemble_stiffness(m).matrix.toarray()
    off = k - np.diag(np.diag(k))
    assert off.max() <= 1e-14  # certifies the non-obtuse mesh assumption
    rng = np.random.default_rng(2)
    fixed = {int(v): float(rng.uniform(-2, 3)) for v in m.boundary_vertex_ids}
    u = fem.harmonic_extension(m, fixed)
    vals = list(fixed.values())
    assert u.min() >= min(vals) - 1e-12
    assert u.max() <= max(vals) + 1e-12


# ------------------------------------------------------------ dirichlet energy

def test_energy_of_constant_is_zero(disk_coarse):
    u = np.full(disk_coarse.n_vertices, 3.7)
    assert abs(fem.dirichlet_energy(disk_coarse, u)) <= 1e-12


def test_annulus_radial_energy_oracle():
    r_in, r_out = 0.5, 1.0
    m = mesh.annulus_mesh(r_in, r_out, 16, 64)
    fixed = {int(v): 1.0 for v in m.boundary_loops[0].vertices}
    fixed.update({int(v): 0.0 for v in m.boundary_loops[1].vertices})
    u = fem.harmonic_extension(m, fixed)
    exact = 2 * math.pi / math.log(r_out / r_in)
    assert fem.dirichlet_energy(m, u) == pytest.approx(exact, rel=2e-2)


def test_energy_shift_invariance(disk_coarse):
    rng = np.random.default_rng(4)
    u = rng.normal(size=disk_coarse.n_vertices)
    e = fem.dirichlet_energy(disk_coarse, u)
    assert fem.dirichlet_energy(disk_coarse, u + 10.0) == pytest.approx(e, rel=1e-9, abs=1e-9)


def test_element_energies_sum_to_total(disk_coarse):
    rng = np.random.default_rng(6)
    u = rng.normal(size=disk_coarse.n_vertices)
    per = fem.element_energies(disk_coarse, u)
    assert per.min() >= -1e-14
    assert per.sum() == pytest.approx(fem.dirichlet_energy(disk_coarse, u), rel=1e-12)


def test_field_csv_roundtrip(tmp_path, disk_coarse):
    u = np.linspace(0, 1, disk_coarse.n_vertices)
    path = tmp_path / "field.csv"
    fem.save_field_csv(path, u)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "vertex,value"
    assert len(rows) == disk_coarse.n_vertices + 1
    got = np.array([float(r.split(",")[1]) for r in rows[1:]])
    assert np.array_equal(got, u)
