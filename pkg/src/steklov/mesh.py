"""Triangulated 2D manifolds with boundary carrying per-element Riemannian metrics.

A mesh lives in a planar chart; the metric variant turns chart quantities into
geometric ones (lengths, Dirichlet energies). Boundary edges are grouped into
labeled chains so subsets of the boundary can be addressed stably, including
across save/load round trips.

Conventions
-----------
* Triangles are counterclockwise in the chart.
* Boundary chains are ``BoundaryLoop`` objects; a chain with as many edge
  labels as vertices is closed, one with ``len(vertices) - 1`` labels is open.
* The collar chart is ``(rho, t)`` with ``t`` periodic of period 1; the
  cylinder seam is realized by vertex identification, and chart coordinates
  of any single triangle or edge are unwrapped before use.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import MeshFormatError, ParameterError

EXTERIOR = "EXTERIOR"
INTERIOR = "INTERIOR"

EUCLIDEAN = "euclidean"
CONFORMAL = "conformal"
COLLAR = "collar"
PER_TRIANGLE = "per_triangle"

_VARIANTS = (EUCLIDEAN, CONFORMAL, COLLAR, PER_TRIANGLE)

# Degeneracy threshold relative to the largest triangle chart area (scale free).
AREA_EPS_REL = 1e-12


@dataclass(frozen=True)
class MetricSpec:
    """Per-element metric description.

    variant:
        ``euclidean``      identity tensor everywhere;
        ``conformal``      ``factor * I`` with one positive factor sample per
                           vertex (element value taken at the barycenter);
        ``collar``         analytic ``diag(1, l0^2 cosh^2 rho)`` in the
                           ``(rho, t)`` chart;
        ``per_triangle``   explicit ``(g11, g12, g22)`` per triangle.
    """

    variant: str
    conformal_factor: np.ndarray | None = None
    collar_l0: float | None = None
    tensors: np.ndarray | None = None

    @staticmethod
    def euclidean() -> "MetricSpec":
        return MetricSpec(EUCLIDEAN)

    @staticmethod
    def conformal(factor: np.ndarray) -> "MetricSpec":
        arr = np.ascontiguousarray(factor, dtype=float)
        arr.setflags(write=False)
        return MetricSpec(CONFORMAL, conformal_factor=arr)

    @staticmethod
    def collar(l0: float) -> "MetricSpec":
        if not (l0 > 0.0) or not math.isfinite(l0):
            raise ParameterError(f"collar metric requires l0 > 0, got {l0}")
        return MetricSpec(COLLAR, collar_l0=float(l0))

    @staticmethod
    def per_triangle(tensors: np.ndarray) -> "MetricSpec":
        arr = np.ascontiguousarray(tensors, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ParameterError("per_triangle tensors must have shape (n_triangles, 3)")
        arr.setflags(write=False)
        return MetricSpec(PER_TRIANGLE, tensors=arr)


@dataclass(frozen=True)
class BoundaryLoop:
    """Ordered boundary chain; closed iff there is one label per vertex."""

    vertices: tuple[int, ...]
    labels: tuple[str, ...]

    @property
    def closed(self) -> bool:
        return len(self.labels) == len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.labels)

    def edge(self, pos: int) -> tuple[int, int]:
        a = self.vertices[pos]
        b = self.vertices[(pos + 1) % len(self.vertices)]
        return a, b

    def edges(self) -> list[tuple[int, int]]:
        return [self.edge(p) for p in range(self.n_edges)]


@dataclass(frozen=True, order=True)
class BoundaryArc:
    """Half-open run of boundary edges within one loop.

    ``start`` and ``end`` are vertex positions in the loop; the arc covers the
    edges from ``start`` up to (not including) ``end``.  On a closed loop the
    range may wrap, and ``end == start`` denotes the full loop.  On an open
    chain ``start < end`` is required.
    """

    loop: int
    start: int
    end: int


def _check_counts(**counts: int) -> None:
    for key, val in counts.items():
        if int(val) != val or val < 2:
            raise ParameterError(f"{key} must be an integer >= 2, got {val}")


def _loop_edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulated chart with metric and labeled boundary."""

    name: str
    vertices: np.ndarray
    triangles: np.ndarray
    metric: MetricSpec
    boundary_loops: tuple[BoundaryLoop, ...]

    def __post_init__(self) -> None:
        verts = np.ascontiguousarray(self.vertices, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise ParameterError("vertices must have shape (n, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ParameterError("triangles must have shape (m, 3)")
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_loops", tuple(self.boundary_loops))

    # ------------------------------------------------------------------ sizes
    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    # ------------------------------------------------------------- edge data
    @cached_property
    def _edge_data(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges (sorted pairs) and their triangle counts."""
        e = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        e = np.sort(e, axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    @cached_property
    def boundary_edge_set(self) -> frozenset[tuple[int, int]]:
        uniq, counts = self._edge_data
        return frozenset(map(tuple, uniq[counts == 1]))

    @cached_property
    def _edge_triangles(self) -> dict[tuple[int, int], list[int]]:
        out: dict[tuple[int, int], list[int]] = {}
        for ti, (a, b, c) in enumerate(self.triangles):
            for u, v in ((a, b), (b, c), (c, a)):
                out.setdefault(_loop_edge_key(int(u), int(v)), []).append(ti)
        return out

    @cached_property
    def boundary_vertex_ids(self) -> np.ndarray:
        ids: set[int] = set()
        for loop in self.boundary_loops:
            ids.update(int(v) for v in loop.vertices)
        return np.array(sorted(ids), dtype=np.int64)

    @cached_property
    def interior_vertex_ids(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_vertex_ids] = False
        return np.nonzero(mask)[0]

    def edge_label(self, a: int, b: int) -> str:
        return self._edge_labels[_loop_edge_key(a, b)]

    @cached_property
    def _edge_labels(self) -> dict[tuple[int, int], str]:
        out: dict[tuple[int, int], str] = {}
        for loop in self.boundary_loops:
            for pos in range(loop.n_edges):
                a, b = loop.edge(pos)
                out[_loop_edge_key(a, b)] = loop.labels[pos]
        return out

    def edges_with_label(self, label: str) -> list[tuple[int, int]]:
        return [e for e, lab in self._edge_labels.items() if lab == label]

    def vertices_with_label(self, label: str) -> np.ndarray:
        ids: set[int] = set()
        for (a, b), lab in self._edge_labels.items():
            if lab == label:
                ids.add(a)
                ids.add(b)
        return np.array(sorted(ids), dtype=np.int64)

    def has_label(self, label: str) -> bool:
        return any(label in loop.labels for loop in self.boundary_loops)

    # --------------------------------------------------------------- geometry
    def triangle_chart_coords(self) -> np.ndarray:
        """Chart coordinates per triangle, seam-unwrapped for the collar chart."""
        coords = self.vertices[self.triangles]
        if self.metric.variant == COLLAR:
            coords = coords.copy()
            t = coords[:, :, 1]
            ref = t[:, :1]
            t -= np.round(t - ref)
        return coords

    def edge_chart_vector(self, a: int, b: int) -> np.ndarray:
        d = self.vertices[b] - self.vertices[a]
        if self.metric.variant == COLLAR:
            d = d.copy()
            d[1] -= round(d[1])
        return d

    def triangle_metric_tensors(self) -> np.ndarray:
        """Per-triangle 2x2 metric tensor, evaluated at the barycenter."""
        nt = self.n_triangles
        m = self.metric
        if m.variant == EUCLIDEAN:
            g = np.zeros((nt, 2, 2))
            g[:, 0, 0] = 1.0
            g[:, 1, 1] = 1.0
            return g
        if m.variant == CONFORMAL:
            fac = np.asarray(m.conformal_factor)[self.triangles].mean(axis=1)
            g = np.zeros((nt, 2, 2))
            g[:, 0, 0] = fac
            g[:, 1, 1] = fac
            return g
        if m.variant == COLLAR:
            rho_bar = self.triangle_chart_coords()[:, :, 0].mean(axis=1)
            g = np.zeros((nt, 2, 2))
            g[:, 0, 0] = 1.0
            g[:, 1, 1] = (m.collar_l0 * np.cosh(rho_bar)) ** 2
            return g
        if m.variant == PER_TRIANGLE:
            t = np.asarray(m.tensors)
            g = np.empty((nt, 2, 2))
            g[:, 0, 0] = t[:, 0]
            g[:, 0, 1] = t[:, 1]
            g[:, 1, 0] = t[:, 1]
            g[:, 1, 1] = t[:, 2]
            return g
        raise ParameterError(f"unknown metric variant {m.variant!r}")

    def edge_metric_length(self, a: int, b: int) -> float:
        """Length of a boundary edge, metric frozen at the edge midpoint."""
        d = self.edge_chart_vector(a, b)
        m = self.metric
        if m.variant == EUCLIDEAN:
            return float(math.hypot(d[0], d[1]))
        if m.variant == CONFORMAL:
            fac = 0.5 * (m.conformal_factor[a] + m.conformal_factor[b])
            return float(math.sqrt(fac) * math.hypot(d[0], d[1]))
        if m.variant == COLLAR:
            rho_mid = 0.5 * (self.vertices[a, 0] + self.vertices[b, 0])
            w = m.collar_l0 * math.cosh(rho_mid)
            return float(math.hypot(d[0], w * d[1]))
        if m.variant == PER_TRIANGLE:
            tris = self._edge_triangles.get(_loop_edge_key(a, b))
            if not tris:
                raise ParameterError(f"edge ({a},{b}) is not a mesh edge")
            g = self.triangle_metric_tensors()[tris[0]]
            return float(math.sqrt(d @ g @ d))
        raise ParameterError(f"unknown metric variant {m.variant!r}")

    # ------------------------------------------------------------------- arcs
    def _loop(self, index: int) -> BoundaryLoop:
        if not 0 <= index < len(self.boundary_loops):
            raise ParameterError(f"loop index {index} out of range")
        return self.boundary_loops[index]

    def check_arc(self, arc: BoundaryArc) -> None:
        loop = self._loop(arc.loop)
        n = loop.n_edges
        if loop.closed:
            if not (0 <= arc.start < n and 0 <= arc.end < n):
                raise ParameterError(f"arc {arc} out of range for closed loop of {n} edges")
        else:
            if not (0 <= arc.start < arc.end <= n):
                raise ParameterError(f"arc {arc} invalid for open chain of {n} edges")

    def arc_n_edges(self, arc: BoundaryArc) -> int:
        self.check_arc(arc)
        loop = self._loop(arc.loop)
        if loop.closed:
            span = (arc.end - arc.start) % loop.n_edges
            return span if span else loop.n_edges
        return arc.end - arc.start

    def arc_edge_positions(self, arc: BoundaryArc) -> list[int]:
        loop = self._loop(arc.loop)
        n = self.arc_n_edges(arc)
        k = loop.n_edges
        return [(arc.start + i) % k for i in range(n)]

    def arc_vertex_positions(self, arc: BoundaryArc) -> list[int]:
        loop = self._loop(arc.loop)
        n = self.arc_n_edges(arc)
        if loop.closed and n == loop.n_edges:
            return list(range(len(loop.vertices)))
        k = len(loop.vertices)
        return [(arc.start + i) % k for i in range(n + 1)]

    def arc_vertices(self, arc: BoundaryArc) -> list[int]:
        loop = self._loop(arc.loop)
        return [loop.vertices[p] for p in self.arc_vertex_positions(arc)]

    def arc_edges(self, arc: BoundaryArc) -> list[tuple[int, int]]:
        loop = self._loop(arc.loop)
        return [loop.edge(p) for p in self.arc_edge_positions(arc)]

    def full_loop_arc(self, loop_index: int) -> BoundaryArc:
        loop = self._loop(loop_index)
        if loop.closed:
            return BoundaryArc(loop_index, 0, 0)
        return BoundaryArc(loop_index, 0, loop.n_edges)

    def full_boundary_arcs(self) -> tuple[BoundaryArc, ...]:
        return tuple(self.full_loop_arc(i) for i in range(len(self.boundary_loops)))

    def label_arcs(self, label: str) -> tuple[BoundaryArc, ...]:
        """Maximal contiguous runs of edges carrying ``label``, one arc each."""
        arcs: list[BoundaryArc] = []
        for li, loop in enumerate(self.boundary_loops):
            hits = [p for p in range(loop.n_edges) if loop.labels[p] == label]
            if not hits:
                continue
            if len(hits) == loop.n_edges:
                arcs.append(self.full_loop_arc(li))
                continue
            # an edge starts a run when its predecessor does not carry the label
            starts = []
            for p in hits:
                prev = (p - 1) % loop.n_edges if loop.closed else p - 1
                if prev < 0 or loop.labels[prev] != label:
                    starts.append(p)
            for s in starts:
                length = 0
                p = s
                while loop.labels[p] == label:
                    length += 1
                    nxt = p + 1
                    if loop.closed:
                        nxt %= loop.n_edges
                    elif nxt >= loop.n_edges:
                        break
                    p = nxt
                    if p == s:
                        break
                end = (s + length) % loop.n_edges if loop.closed else s + length
                arcs.append(BoundaryArc(li, s, end))
        return tuple(arcs)


def relabel(mesh: Mesh, arcs: Iterable[BoundaryArc], label: str) -> Mesh:
    """New mesh with the covered boundary edges relabeled."""
    if label not in (EXTERIOR, INTERIOR):
        raise ParameterError(f"unknown boundary label {label!r}")
    new_labels = [list(loop.labels) for loop in mesh.boundary_loops]
    for arc in arcs:
        mesh.check_arc(arc)
        for p in mesh.arc_edge_positions(arc):
            new_labels[arc.loop][p] = label
    loops = tuple(
        BoundaryLoop(loop.vertices, tuple(lbls))
        for loop, lbls in zip(mesh.boundary_loops, new_labels)
    )
    return replace(mesh, boundary_loops=loops)


def boundary_length(mesh: Mesh, arcs: Iterable[BoundaryArc] | None = None) -> float:
    """Metric length of the covered boundary (full boundary when arcs is None).

    Overlapping arcs are counted once; the sum is therefore additive over
    disjoint arcs and monotone under inclusion.
    """
    if arcs is None:
        arcs = mesh.full_boundary_arcs()
    seen: set[tuple[int, int]] = set()
    total = 0.0
    for arc in arcs:
        mesh.check_arc(arc)
        for pos in mesh.arc_edge_positions(arc):
            key = (arc.loop, pos)
            if key in seen:
                continue
            seen.add(key)
            a, b = mesh.boundary_loops[arc.loop].edge(pos)
            total += mesh.edge_metric_length(a, b)
    return total


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class Diagnostics:
    """Result of :func:`validate`; empty lists mean a valid mesh."""

    orientation_violations: list[int] = field(default_factory=list)
    degenerate_triangles: list[int] = field(default_factory=list)
    metric_violations: list[str] = field(default_factory=list)
    boundary_violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not (
            self.orientation_violations
            or self.degenerate_triangles
            or self.metric_violations
            or self.boundary_violations
        )

    def summary(self) -> str:
        if self.passed:
            return "mesh valid"
        parts = []
        if self.orientation_violations:
            parts.append(f"{len(self.orientation_violations)} orientation violations")
        if self.degenerate_triangles:
            parts.append(f"{len(self.degenerate_triangles)} degenerate triangles")
        parts.extend(self.metric_violations)
        parts.extend(self.boundary_violations)
        return "; ".join(parts)


def validate(mesh: Mesh) -> Diagnostics:
    """Check orientation, degeneracy, metric positivity, boundary structure."""
    diag = Diagnostics()

    tris = mesh.triangles
    if tris.size and (tris.min() < 0 or tris.max() >= mesh.n_vertices):
        diag.boundary_violations.append("triangle vertex index out of range")
        return diag

    coords = mesh.triangle_chart_coords()
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    max_area = float(np.max(np.abs(signed))) if len(signed) else 0.0
    eps = AREA_EPS_REL * max_area
    for ti, area in enumerate(signed):
        if area <= 0.0:
            diag.orientation_violations.append(ti)
        elif area < eps:
            diag.degenerate_triangles.append(ti)

    m = mesh.metric
    if m.variant == CONFORMAL:
        fac = np.asarray(m.conformal_factor)
        if fac.shape != (mesh.n_vertices,):
            diag.metric_violations.append("conformal factor length != vertex count")
        else:
            bad = np.nonzero(~(np.isfinite(fac) & (fac > 0.0)))[0]
            for v in bad:
                diag.metric_violations.append(f"non-positive conformal factor at vertex {v}")
    elif m.variant == COLLAR:
        if m.collar_l0 is None or not (m.collar_l0 > 0):
            diag.metric_violations.append("collar metric requires l0 > 0")
    elif m.variant == PER_TRIANGLE:
        t = np.asarray(m.tensors)
        if t.shape != (mesh.n_triangles, 3):
            diag.metric_violations.append("per-triangle tensor shape mismatch")
        else:
            det = t[:, 0] * t[:, 2] - t[:, 1] ** 2
            bad = np.nonzero(~(np.isfinite(det) & (det > 0) & (t[:, 0] > 0)))[0]
            for ti in bad:
                diag.metric_violations.append(f"non-SPD metric tensor on triangle {ti}")
    elif m.variant != EUCLIDEAN:
        diag.metric_violations.append(f"unknown metric variant {m.variant!r}")

    uniq, counts = mesh._edge_data
    over = uniq[counts > 2]
    for a, b in over:
        diag.boundary_violations.append(f"edge ({a},{b}) borders {counts.max()} triangles")
    incident1 = set(map(tuple, uniq[counts == 1]))

    covered: set[tuple[int, int]] = set()
    for li, loop in enumerate(mesh.boundary_loops):
        k = len(loop.vertices)
        if loop.n_edges not in (k, k - 1) or loop.n_edges == 0:
            diag.boundary_violations.append(f"loop {li}: label count does not match chain")
            continue
        for pos in range(loop.n_edges):
            a, b = loop.edge(pos)
            key = _loop_edge_key(a, b)
            if loop.labels[pos] not in (EXTERIOR, INTERIOR):
                diag.boundary_violations.append(f"loop {li} edge {pos}: unknown label")
            if key not in incident1:
                diag.boundary_violations.append(
                    f"loop {li} edge {pos} ({a},{b}) is not a boundary edge"
                )
            elif key in covered:
                diag.boundary_violations.append(f"loop {li} edge {pos} ({a},{b}) labeled twice")
            covered.add(key)
    missing = incident1 - covered
    for a, b in sorted(missing):
        diag.boundary_violations.append(f"boundary edge ({a},{b}) carries no label")
    return diag


def euler_characteristic(mesh: Mesh) -> int:
    uniq, _ = mesh._edge_data
    return mesh.n_vertices - len(uniq) + mesh.n_triangles


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def disk_mesh(n_radial: int, n_angular: int, name: str = "disk") -> Mesh:
    """Structured polar triangulation of the unit disk, Euclidean metric."""
    _check_counts(n_radial=n_radial, n_angular=n_angular)
    if n_angular < 3:
        raise ParameterError("n_angular must be >= 3 for a non-degenerate disk")
    verts = [(0.0, 0.0)]
    for i in range(1, n_radial + 1):
        r = i / n_radial
        for j in range(n_angular):
            th = 2.0 * math.pi * j / n_angular
            verts.append((r * math.cos(th), r * math.sin(th)))

    def vid(i: int, j: int) -> int:
        return 1 + (i - 1) * n_angular + (j % n_angular)

    tris = []
    for j in range(n_angular):
        tris.append((0, vid(1, j), vid(1, j + 1)))
    for i in range(1, n_radial):
        for j in range(n_angular):
            tris.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            tris.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))

    outer = tuple(vid(n_radial, j) for j in range(n_angular))
    loop = BoundaryLoop(outer, (EXTERIOR,) * n_angular)
    return Mesh(name, np.array(verts), np.array(tris), MetricSpec.euclidean(), (loop,))


def annulus_mesh(
    r_in: float, r_out: float, n_r: int, n_a: int, name: str = "annulus"
) -> Mesh:
    """Structured triangulation of an annulus; loops ordered (inner, outer)."""
    if not (0 < r_in < r_out):
        raise ParameterError(f"need 0 < r_in < r_out, got ({r_in}, {r_out})")
    _check_counts(n_r=n_r, n_a=n_a)
    if n_a < 3:
        raise ParameterError("n_a must be >= 3 for a non-degenerate annulus")
    verts = []
    for i in range(n_r + 1):
        r = r_in + (r_out - r_in) * i / n_r
        for j in range(n_a):
            th = 2.0 * math.pi * j / n_a
            verts.append((r * math.cos(th), r * math.sin(th)))

    def vid(i: int, j: int) -> int:
        return i * n_a + (j % n_a)

    tris = []
    for i in range(n_r):
        for j in range(n_a):
            tris.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            tris.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))

    inner = BoundaryLoop(tuple(vid(0, j) for j in range(n_a)), (EXTERIOR,) * n_a)
    outer = BoundaryLoop(tuple(vid(n_r, j) for j in range(n_a)), (EXTERIOR,) * n_a)
    return Mesh(name, np.array(verts), np.array(tris), MetricSpec.euclidean(), (inner, outer))


def rectangle_mesh(w: float, h: float, nx: int, ny: int, name: str = "rectangle") -> Mesh:
    """Structured grid triangulation of [0, w] x [0, h]."""
    if not (w > 0 and h > 0):
        raise ParameterError(f"rectangle sides must be positive, got ({w}, {h})")
    _check_counts(nx=nx, ny=ny)
    verts = [(w * i / nx, h * j / ny) for j in range(ny + 1) for i in range(nx + 1)]

    def vid(i: int, j: int) -> int:
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            tris.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            tris.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))

    cycle = (
        [vid(i, 0) for i in range(nx)]
        + [vid(nx, j) for j in range(ny)]
        + [vid(i, ny) for i in range(nx, 0, -1)]
        + [vid(0, j) for j in range(ny, 0, -1)]
    )
    loop = BoundaryLoop(tuple(cycle), (EXTERIOR,) * len(cycle))
    return Mesh(name, np.array(verts), np.array(tris), MetricSpec.euclidean(), (loop,))


def rectangle_side_arc(mesh: Mesh, nx: int, ny: int, side: str) -> BoundaryArc:
    """Arc covering one side of a rectangle mesh built by :func:`rectangle_mesh`."""
    spans = {
        "bottom": (0, nx),
        "right": (nx, nx + ny),
        "top": (nx + ny, 2 * nx + ny),
        "left": (2 * nx + ny, 2 * (nx + ny)),
    }
    if side not in spans:
        raise ParameterError(f"unknown rectangle side {side!r}")
    s, e = spans[side]
    return BoundaryArc(0, s, e % (2 * (nx + ny)))


def collar_mesh(l0: float, rho_max: float, n_rho: int, n_t: int, name: str = "collar") -> Mesh:
    """Cylinder [0, rho_max] x S^1 with the collar metric diag(1, l0^2 cosh^2 rho).

    The seam t = 0 ~ 1 is a true vertex identification; loops are ordered
    (rho = 0, rho = rho_max), both labeled EXTERIOR.
    """
    if not (l0 > 0 and rho_max > 0):
        raise ParameterError(f"need l0 > 0 and rho_max > 0, got ({l0}, {rho_max})")
    _check_counts(n_rho=n_rho, n_t=n_t)
    if n_t < 3:
        raise ParameterError("n_t must be >= 3 so seam unwrapping is unambiguous")
    verts = [
        (rho_max * i / n_rho, j / n_t) for i in range(n_rho + 1) for j in range(n_t)
    ]

    def vid(i: int, j: int) -> int:
        return i * n_t + (j % n_t)

    tris = []
    for i in range(n_rho):
        for j in range(n_t):
            tris.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            tris.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))

    bottom = BoundaryLoop(tuple(vid(0, j) for j in range(n_t)), (EXTERIOR,) * n_t)
    top = BoundaryLoop(tuple(vid(n_rho, j) for j in range(n_t)), (EXTERIOR,) * n_t)
    return Mesh(name, np.array(verts), np.array(tris), MetricSpec.collar(l0), (bottom, top))


def _fermi_to_chart(v: float, rho: float) -> tuple[float, float]:
    # Fermi coordinates of the diameter geodesic of the Poincare disk:
    # arclength v along the diameter, perpendicular distance rho above it.
    ch, sh = math.cosh(rho), math.sinh(rho)
    denom = 1.0 + ch * math.cosh(v)
    return ch * math.sinh(v) / denom, sh / denom


def poincare_halfdisk_mesh(
    r_trunc: float, resolution: int, name: str = "poincare_halfdisk"
) -> Mesh:
    """Truncated hyperbolic half-disk {|p| <= r_trunc, y >= 0} in the unit-disk chart.

    The metric is the conformal Poincare metric 4/(1 - |p|^2)^2.  The diameter
    (the geometric boundary of the half-plane) is an open EXTERIOR chain; the
    truncation arc |p| = r_trunc is an open INTERIOR chain.  Vertices are
    placed on a structured grid in Fermi coordinates of the diameter, graded
    coarser away from it, so the mesh stays hyperbolically shape-regular up to
    truncation radii very close to 1.
    """
    if not (0.0 < r_trunc < 1.0):
        raise ParameterError(f"need 0 < r_trunc < 1, got {r_trunc}")
    if int(resolution) != resolution or resolution < 2:
        raise ParameterError(f"resolution must be an integer >= 2, got {resolution}")

    depth = 2.0 * math.atanh(r_trunc)  # hyperbolic radius of the cut
    h0 = 1.0 / resolution
    cosh_depth = math.cosh(depth)

    def spacing(rho: float) -> float:
        # graded coarser with distance from the diameter; solution fields of
        # interest decay like e^{-rho}, which this grading stays ahead of
        return h0 * math.cosh(0.5 * rho)

    def half_width(rho: float) -> float:
        arg = cosh_depth / math.cosh(rho)
        return math.acosh(arg) if arg > 1.0 else 0.0

    # constant-rho levels; stop once a level would be only a few cells wide
    # (the dome top is closed by the last level's polyline, cutting an
    # exponentially shallow sliver off the rim rather than fanning to an apex)
    levels = [0.0]
    while True:
        nxt = levels[-1] + spacing(levels[-1])
        if nxt >= depth:
            break
        if 2.0 * half_width(nxt) * math.cosh(nxt) < 3.0 * spacing(nxt):
            break
        levels.append(nxt)
    if len(levels) < 2:
        raise ParameterError("resolution too low for this truncation radius")

    verts: list[tuple[float, float]] = []
    level_ids: list[list[int]] = []
    level_vs: list[np.ndarray] = []
    for rho in levels:
        vmax = half_width(rho)
        width = 2.0 * vmax * math.cosh(rho)
        n = max(2, int(round(width / spacing(rho))) + 1)
        vs = np.linspace(-vmax, vmax, n)
        ids = []
        for v in vs:
            ids.append(len(verts))
            verts.append(_fermi_to_chart(float(v), rho))
        level_ids.append(ids)
        level_vs.append(vs)

    # Strips are clamped to the upper level's span: the lower level's overhang
    # beyond it becomes a terrace run of the interior-boundary staircase
    # instead of a wide (and chart-inverting) fan.
    top = len(levels) - 1
    tris: list[tuple[int, int, int]] = []
    clamp_left = [0] * top
    clamp_right = [0] * top
    for j in range(top):
        a_ids, b_ids = level_ids[j], level_ids[j + 1]
        va, vb = level_vs[j], level_vs[j + 1]
        il = max(int(np.searchsorted(va, vb[0], side="right")) - 1, 0)
        ir = min(int(np.searchsorted(va, vb[-1], side="left")), len(a_ids) - 1)
        ir = max(ir, il + 1)
        clamp_left[j], clamp_right[j] = il, ir
        i, k = il, 0
        while i < ir or k < len(b_ids) - 1:
            if i == ir:
                adv_a = False
            elif k == len(b_ids) - 1:
                adv_a = True
            else:
                adv_a = va[i + 1] <= vb[k + 1]
            if adv_a:
                tris.append((a_ids[i], a_ids[i + 1], b_ids[k]))
                i += 1
            else:
                tris.append((a_ids[i], b_ids[k + 1], b_ids[k]))
                k += 1

    diameter = tuple(level_ids[0])
    rim: list[int] = []
    for j in range(top):
        rim += level_ids[j][: clamp_left[j] + 1]
    rim += level_ids[top]
    for j in range(top - 1, -1, -1):
        rim += level_ids[j][clamp_right[j]:]
    loops = (
        BoundaryLoop(diameter, (EXTERIOR,) * (len(diameter) - 1)),
        BoundaryLoop(tuple(rim), (INTERIOR,) * (len(rim) - 1)),
    )
    pts = np.array(verts)
    factor = 4.0 / (1.0 - pts[:, 0] ** 2 - pts[:, 1] ** 2) ** 2
    return Mesh(name, pts, np.array(tris), MetricSpec.conformal(factor), loops)


_GENERATORS = {
    "disk": disk_mesh,
    "annulus": annulus_mesh,
    "rectangle": rectangle_mesh,
    "collar": collar_mesh,
    "poincare_halfdisk": poincare_halfdisk_mesh,
}


def generate(kind: str, **params) -> Mesh:
    """Dispatch to a mesh generator by geometry name."""
    if kind not in _GENERATORS:
        raise ParameterError(
            f"unknown geometry {kind!r}; expected one of {sorted(_GENERATORS)}"
        )
    return _GENERATORS[kind](**params)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    if not math.isfinite(x):
        raise ParameterError(f"cannot serialize non-finite coordinate {x}")
    return format(float(x), ".17g")


def dumps(mesh: Mesh) -> str:
    """JSON text for a mesh; floats carry 17 significant digits."""
    out = []
    out.append("{")
    out.append(f'"name": {json.dumps(mesh.name)},')
    rows = ",\n  ".join(f"[{_fmt(x)}, {_fmt(y)}]" for x, y in mesh.vertices)
    out.append(f'"vertices": [\n  {rows}\n],')
    rows = ",\n  ".join(f"[{a}, {b}, {c}]" for a, b, c in mesh.triangles)
    out.append(f'"triangles": [\n  {rows}\n],')
    m = mesh.metric
    if m.variant == EUCLIDEAN:
        payload = "{}"
    elif m.variant == CONFORMAL:
        vals = ", ".join(_fmt(v) for v in m.conformal_factor)
        payload = f'{{"factor": [{vals}]}}'
    elif m.variant == COLLAR:
        payload = f'{{"l0": {_fmt(m.collar_l0)}}}'
    elif m.variant == PER_TRIANGLE:
        cols = []
        for key, col in zip(("g11", "g12", "g22"), m.tensors.T):
            vals = ", ".join(_fmt(v) for v in col)
            cols.append(f'"{key}": [{vals}]')
        payload = "{" + ", ".join(cols) + "}"
    else:
        raise ParameterError(f"unknown metric variant {m.variant!r}")
    out.append(f'"metric": {{"variant": {json.dumps(m.variant)}, "payload": {payload}}},')
    loops = []
    for loop in mesh.boundary_loops:
        ids = ", ".join(str(v) for v in loop.vertices)
        labels = ", ".join(json.dumps(l) for l in loop.labels)
        loops.append(f'{{"loop": [{ids}], "labels": [{labels}]}}')
    out.append(f'"boundary_labels": [\n  {",  ".join(loops)}\n]')
    return "\n".join(out) + "\n}\n"


def save(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(mesh))


def _require(doc: dict, key: str):
    if key not in doc:
        raise MeshFormatError(f"missing field {key!r}")
    return doc[key]


def loads(text: str) -> Mesh:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeshFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise MeshFormatError("top-level JSON value must be an object")

    name = _require(doc, "name")
    try:
        vertices = np.array(_require(doc, "vertices"), dtype=float)
        triangles = np.array(_require(doc, "triangles"), dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise MeshFormatError(f"malformed vertex/triangle arrays: {exc}") from exc
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshFormatError("field 'vertices' must be a list of [x, y] pairs")
    if triangles.size and (triangles.ndim != 2 or triangles.shape[1] != 3):
        raise MeshFormatError("field 'triangles' must be a list of index triples")

    metric_doc = _require(doc, "metric")
    variant = _require(metric_doc, "variant")
    payload = _require(metric_doc, "payload")
    if variant == EUCLIDEAN:
        metric = MetricSpec.euclidean()
    elif variant == CONFORMAL:
        metric = MetricSpec.conformal(np.array(_require(payload, "factor"), dtype=float))
    elif variant == COLLAR:
        metric = MetricSpec.collar(float(_require(payload, "l0")))
    elif variant == PER_TRIANGLE:
        cols = [np.array(_require(payload, k), dtype=float) for k in ("g11", "g12", "g22")]
        metric = MetricSpec.per_triangle(np.stack(cols, axis=1))
    else:
        raise MeshFormatError(f"unknown metric variant {variant!r}")

    loops = []
    for i, entry in enumerate(_require(doc, "boundary_labels")):
        ids = tuple(int(v) for v in _require(entry, "loop"))
        labels = tuple(str(l) for l in _require(entry, "labels"))
        if len(labels) not in (len(ids), len(ids) - 1):
            raise MeshFormatError(f"boundary_labels[{i}]: label count does not match loop")
        for lab in labels:
            if lab not in (EXTERIOR, INTERIOR):
                raise MeshFormatError(f"boundary_labels[{i}]: unknown label {lab!r}")
        loops.append(BoundaryLoop(ids, labels))
    try:
        return Mesh(str(name), vertices, triangles, metric, tuple(loops))
    except ParameterError as exc:
        raise MeshFormatError(str(exc)) from exc


def load(path) -> Mesh:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())
