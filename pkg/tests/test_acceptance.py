"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test prints a one-line verdict through the terminal-summary hook in
conftest; shared expensive artifacts (the fine disk spectrum) are module
fixtures.
"""
import math
import time

import numpy as np
import pytest

from steklov import capacity, fem, hyperbolic, mesh, spectral, verify
from steklov.cli import cli_main
from steklov.mesh import INTERIOR

from conftest import record_criterion

TWO_OVER_PI = 2.0 / math.pi


@pytest.fixture(scope="module")
def fine_disk():
    # boundary chord length 2 pi / 128 = 0.049 <= 0.05
    return mesh.disk_mesh(24, 128)


@pytest.fixture(scope="module")
def fine_disk_spectrum(fine_disk):
    return spectral.steklov_spectrum(fine_disk, 26)


def test_criterion_01_closed_form_constants(capsys):
    start = time.perf_counter()
    targets = {1: TWO_OVER_PI, 2: 1.0, 3: 4.0 / math.pi}
    errs = {}
    for n, want in targets.items():
        assert cli_main(["hyperbolic", "cn", str(n)]) == 0
        printed = float(capsys.readouterr().out.strip())
        errs[n] = abs(hyperbolic.c_n(n) - want)
        assert errs[n] <= 1e-10
        assert abs(printed - want) <= 1e-9  # 12 printed digits
    elapsed = time.perf_counter() - start
    ok = elapsed < 1.0
    record_criterion(
        1, ok, f"c_n closed forms, max err {max(errs.values()):.2e}, {elapsed:.2f}s"
    )
    assert ok


def test_criterion_02_disk_steklov_oracle(fine_disk_spectrum):
    start = time.perf_counter()
    exact = [0.0, 1.0, 1.0, 2.0, 2.0, 3.0]
    got = fine_disk_spectrum.eigenvalues[:6]
    rel = [abs(g - w) / max(w, 1.0) for g, w in zip(got, exact)]
    elapsed = time.perf_counter() - start
    ok = max(rel) <= 1e-2
    record_criterion(2, ok, f"disk eigenvalues, max rel err {max(rel):.2e}")
    assert ok
    assert elapsed < 60.0


def test_criterion_03_weyl_count(fine_disk_spectrum):
    sigmas = [2, 4, 6, 8, 10]
    counts = spectral.eigenvalue_counts(fine_disk_spectrum.eigenvalues, sigmas)
    devs = [abs(c - 2 * s) for c, s in zip(counts, sigmas)]
    ok = max(devs) <= 2
    record_criterion(3, ok, f"Weyl counts {counts}, max dev {max(devs)}")
    assert ok


def test_criterion_04_annulus_capacity_ladder():
    ladder = [(6, 24), (12, 48), (24, 96)]
    values, gaps = [], []
    for n_r, n_a in ladder:
        m = mesh.annulus_mesh(1.0, math.e, n_r, n_a)
        res = capacity.capacity(
            m, m.boundary_loops[0].vertices, m.boundary_loops[1].vertices
        )
        values.append(res.value)
        gaps.append(res.flux_gap)
    mid_err = abs(values[1] - 2 * math.pi) / (2 * math.pi)
    ok = mid_err <= 2e-2 and max(gaps) <= 1e-8
    record_criterion(
        4, ok, f"annulus capacity mid-ladder rel err {mid_err:.2e}, "
        f"max flux gap {max(gaps):.2e}"
    )
    assert ok


def test_criterion_05_sandwich_suite():
    start = time.perf_counter()
    geometries = [
        ("disk", mesh.disk_mesh(16, 64), 4),
        ("square", mesh.rectangle_mesh(1.0, 1.0, 16, 16), 4),
        ("annulus", mesh.annulus_mesh(0.5, 1.0, 12, 64), 4),
        ("collar", mesh.collar_mesh(1.0, hyperbolic.collar_width(1.0), 16, 48), 4),
    ]
    details = []
    ok = True
    for name, m, step in geometries:
        sigma1 = float(spectral.steklov_spectrum(m, 1).eigenvalues[1])
        gamma = capacity.gamma_search(m, coarse_step=step).value
        verdict = verify.check_sandwich(sigma1, gamma, tau_thm=0.15)
        upper_exact = sigma1 <= 2.0 * gamma
        ok = ok and verdict == verify.PASS and upper_exact
        details.append(f"{name} ratio {sigma1 / gamma:.3f}")
    elapsed = time.perf_counter() - start
    record_criterion(5, ok, "sandwich " + ", ".join(details) + f", {elapsed:.0f}s")
    assert ok
    assert elapsed < 600.0


def test_criterion_06_mixed_sandwich():
    cases = []
    half = mesh.poincare_halfdisk_mesh(0.9, 12)
    cases.append(("halfdisk", half))
    sq = mesh.rectangle_mesh(1.0, 1.0, 12, 12)
    arc = mesh.rectangle_side_arc(sq, 12, 12, "bottom")
    cases.append(("square+dirichlet", mesh.relabel(sq, [arc], INTERIOR)))
    ok = True
    details = []
    for name, m in cases:
        xi1 = float(spectral.mixed_spectrum(m, INTERIOR, 1).eigenvalues[0])
        gamma = capacity.gamma_search(m, mode=capacity.MIXED, coarse_step=2).value
        verdict = verify.check_sandwich(xi1, gamma, tau_thm=0.15)
        ok = ok and verdict == verify.PASS and xi1 <= 2.0 * gamma
        details.append(f"{name} ratio {xi1 / gamma:.3f}")
    record_criterion(6, ok, "mixed sandwich " + ", ".join(details))
    assert ok


def test_criterion_07_levelset_suite(fine_disk, fine_disk_spectrum):
    start = time.perf_counter()
    reports = []

    u = fine_disk_spectrum.eigenfields[1]
    t = u.max() * (np.arange(32) + 1) / 33
    reports.append(("sigma1", capacity.levelset_capacity_check(fine_disk, u, t)))

    sq = mesh.rectangle_mesh(1.0, 1.0, 16, 16)
    ramp = sq.vertices[:, 0] - 0.5
    t = ramp.max() * (np.arange(32) + 1) / 33
    reports.append(("ramp", capacity.levelset_capacity_check(sq, ramp, t)))

    m = mesh.disk_mesh(10, 48)
    kop = fem.assemble_stiffness(m)
    rng = np.random.default_rng(7)
    bverts = m.boundary_vertex_ids
    th = np.arctan2(m.vertices[bverts, 1], m.vertices[bverts, 0])
    for i in range(20):
        f = np.zeros(len(bverts))
        for deg in range(1, 5):
            a, b = rng.normal(size=2) / deg
            f += a * np.cos(deg * th) + b * np.sin(deg * th)
        u = fem.harmonic_extension(m, dict(zip(map(int, bverts), f)), kop)
        if u.max() <= 0:
            u = -u
        t = u.max() * (np.arange(32) + 1) / 33
        reports.append(
            (f"random_{i}", capacity.levelset_capacity_check(m, u, t, stiffness=kop))
        )

    elapsed = time.perf_counter() - start
    failed = [name for name, rep in reports if not rep.passed]
    worst = max(rep.ratio for _, rep in reports)
    ok = not failed
    record_criterion(
        7, ok, f"level-set inequality on {len(reports)} fields, "
        f"worst ratio {worst:.3f}, {elapsed:.0f}s"
    )
    assert ok, failed
    assert elapsed < 300.0


def test_criterion_08_exhaustion():
    radii = [0.5, 0.7, 0.9, 0.99, 0.999]
    resolution = 20
    meshes = [mesh.poincare_halfdisk_mesh(r, resolution) for r in radii]
    ex = spectral.exhaustion_xi1(meshes)
    caps = []
    for m in meshes:
        arc = verify.diameter_window_arc(m, 1.0)
        caps.append(capacity.capacity_compact_support(m, arc).value)
    cap_mono = all(
        caps[i + 1] <= caps[i] * (1 + spectral.TAU_MONO) for i in range(len(caps) - 1)
    )
    bounded = min(ex.values) >= TWO_OVER_PI - 1e-3
    final_gap = ex.values[-1] / TWO_OVER_PI - 1.0
    ok = ex.monotone and cap_mono and bounded and final_gap <= 0.05
    record_criterion(
        8, ok, f"exhaustion xi1 {['%.4f' % v for v in ex.values]}, "
        f"final gap {final_gap:.3%}, caps monotone {cap_mono}"
    )
    assert ex.monotone, ex.warnings
    assert cap_mono
    assert bounded
    assert final_gap <= 0.05


def test_criterion_09_halfplane_family():
    start = time.perf_counter()
    rows = hyperbolic.halfplane_bottom_estimate([5.0, 10.0, 25.0, 50.0], 0.05, 60.0)
    values = [r for _, r in rows]
    decreasing = all(b < a for a, b in zip(values, values[1:]))
    above = all(v >= TWO_OVER_PI for v in values)
    gap = min(values) / TWO_OVER_PI - 1.0
    elapsed = time.perf_counter() - start
    ok = decreasing and above and 0.0 <= gap <= 0.05
    record_criterion(
        9, ok, f"half-plane rayleigh min {min(values):.5f} "
        f"(gap {gap:.3%}), {elapsed:.0f}s"
    )
    assert ok
    assert elapsed < 120.0


def test_criterion_10_collar_bounds():
    l0 = 1e-4
    cb = hyperbolic.collar_bound(l0, rho1=l0)
    product = l0 * cb.bound_case1
    in_window = 4.0 / 3.0 <= product <= 4.0 / 3.0 * 1.02
    cap = math.e + 1.0 / math.e
    case2 = [
        hyperbolic.collar_bound(float(x)).bound_case2
        for x in np.linspace(0.01, 0.99, 100)
    ]
    below = max(case2) < cap
    ok = in_window and below
    record_criterion(
        10, ok, f"l0*bound = {product:.8f} in [4/3, 4/3*1.02], "
        f"case2 max {max(case2):.4f} < {cap:.4f}"
    )
    assert ok


def test_criterion_11_gamma_oracle_equivalence():
    corpus = [
        mesh.rectangle_mesh(1.0, 1.0, 6, 6),      # 24 boundary vertices
        mesh.annulus_mesh(0.5, 1.0, 2, 8),        # 16
        mesh.rectangle_mesh(1.0, 0.5, 4, 3),      # 14
    ]
    ok = True
    for m in corpus:
        assert len(m.boundary_vertex_ids) <= 40
        bf = capacity.gamma_bruteforce(m)
        gs = capacity.gamma_search(m, coarse_step=1)
        ok = ok and gs.value == bf.value
    record_criterion(11, ok, f"gamma search equals brute force on {len(corpus)} meshes")
    assert ok


def test_criterion_12_property_suites(disk_coarse, annulus_coarse):
    import dataclasses

    checks = {}

    rng = np.random.default_rng(23)
    factor = np.exp(rng.normal(size=disk_coarse.n_vertices))
    conf = dataclasses.replace(
        disk_coarse, metric=mesh.MetricSpec.conformal(factor)
    )
    k_euc = fem.assemble_stiffness(disk_coarse).matrix
    k_conf = fem.assemble_stiffness(conf).matrix
    checks["conformal"] = (
        np.abs((k_euc - k_conf).toarray()).max() <= 5e-15 * np.abs(k_euc.data).max()
    )

    a = annulus_coarse.boundary_loops[0].vertices
    b = annulus_coarse.boundary_loops[1].vertices
    r_ab = capacity.capacity(annulus_coarse, a, b)
    r_ba = capacity.capacity(annulus_coarse, b, a)
    bigger = capacity.capacity(annulus_coarse, list(a) + list(b[:3]), b[3:])
    checks["cap_symmetry"] = r_ab.value == r_ba.value
    checks["cap_monotone"] = (
        capacity.capacity(annulus_coarse, a[:8], b).value
        <= capacity.capacity(annulus_coarse, a[:16], b).value * (1 + 1e-12)
    )

    sq = mesh.rectangle_mesh(1.0, 1.0, 6, 6)
    est1 = capacity.gamma_search(sq, coarse_step=2)
    est2 = capacity.gamma_search(
        dataclasses.replace(sq, vertices=sq.vertices * 3.0), coarse_step=2
    )
    checks["gamma_scaling"] = (
        abs(est2.value - est1.value / 3.0) <= 1e-9 * est1.value
        and est1.witness_a == est2.witness_a
    )

    c1 = hyperbolic.c_n(1)
    rng = np.random.default_rng(29)
    worst = math.inf
    for _ in range(1000):
        n = int(rng.integers(16, 128))
        dx = float(rng.uniform(0.02, 0.3))
        x = (np.arange(n) - n / 2) * dx
        g = rng.normal(size=n)
        g[0] = g[-1] = 0.0
        worst = min(
            worst, hyperbolic.halfplane_form(hyperbolic.LineFunction(x, g)).rayleigh
        )
    checks["rayleigh_floor"] = worst >= c1 - 1e-12

    r = np.linspace(0.0, 5.0, 51)
    checks["phi_monotone"] = all(
        np.all(np.diff(hyperbolic.phi_n_profile(n, r).values) <= 1e-15)
        for n in range(1, 11)
    )

    ok = all(checks.values())
    record_criterion(
        12, ok, "invariant suites: " + ", ".join(k for k, v in checks.items())
    )
    assert ok, checks
