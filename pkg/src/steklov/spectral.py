"""Steklov and mixed Steklov-Dirichlet spectra via a boundary Schur complement.

The eigenproblem is reduced to the boundary: with stiffness K partitioned into
free boundary vertices b and interior vertices i (Dirichlet-constrained
boundary vertices are eliminated outright), the discrete Dirichlet-to-Neumann
matrix is S = K_bb - K_bi K_ii^{-1} K_ib and the spectrum solves the dense
symmetric pencil S v = sigma B_bb v.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg as dla
from scipy.sparse.linalg import splu

from . import fem
from .errors import ParameterError, SolveError, SpectralError
from .mesh import EXTERIOR, INTERIOR, BoundaryArc, Mesh

MAX_EIGENPAIRS = 64

# Relative tolerance for the exhaustion monotonicity report.
TAU_MONO = 1e-6


@dataclass
class SpectrumResult:
    """Ordered eigenpairs of a Steklov or mixed Steklov-Dirichlet problem."""

    mesh_name: str
    constrained: tuple[int, ...]
    boundary_vertices: np.ndarray
    eigenvalues: np.ndarray
    eigenfields: np.ndarray  # (n_pairs, n_vertices)
    residuals: np.ndarray
    ortho_error: float

    def rayleigh_quotients(self, s: np.ndarray, b: np.ndarray) -> np.ndarray:
        v = self.eigenfields[:, self.boundary_vertices]
        num = np.einsum("ki,ij,kj->k", v, s, v)
        den = np.einsum("ki,ij,kj->k", v, b, v)
        return num / den


class _DtnSystem:
    """Shared pieces of one boundary reduction (reused by capacity search)."""

    def __init__(self, mesh: Mesh, constrained: Sequence[int], stiffness=None):
        kop = stiffness or fem.assemble_stiffness(mesh)
        K = kop.matrix.tocsc()
        n = mesh.n_vertices
        cset = np.zeros(n, dtype=bool)
        cidx = np.asarray(sorted(set(int(c) for c in constrained)), dtype=np.int64)
        if cidx.size:
            if cidx.min() < 0 or cidx.max() >= n:
                raise ParameterError("constrained vertex index out of range")
            bset = set(map(int, mesh.boundary_vertex_ids))
            for c in cidx:
                if int(c) not in bset:
                    raise ParameterError(f"constrained vertex {c} is not on the boundary")
            cset[cidx] = True
        bmask = np.zeros(n, dtype=bool)
        bmask[mesh.boundary_vertex_ids] = True
        bmask &= ~cset
        self.free_boundary = np.nonzero(bmask)[0]
        if self.free_boundary.size == 0:
            raise ParameterError("free boundary vertex set is empty")
        imask = ~bmask & ~cset  # interior vertices actually eliminated
        self.interior = np.nonzero(imask)[0]
        self.stiffness = kop
        self.mesh = mesh

        kbb = K[bmask][:, bmask].toarray()
        if self.interior.size:
            kbi = K[bmask][:, imask]
            kib = K[imask][:, bmask].tocsc()
            try:
                self._lu = splu(K[imask][:, imask].tocsc())
            except RuntimeError as exc:
                raise SolveError(f"interior block singular (degenerate mesh): {exc}") from exc
            self._ext = -self._lu.solve(kib.toarray())  # interior values per boundary basis
            s = kbb + kbi @ self._ext
        else:
            self._lu = None
            self._ext = np.zeros((0, self.free_boundary.size))
            s = kbb
        if not np.all(np.isfinite(s)):
            raise SolveError("interior block singular (degenerate mesh)")
        self.S = 0.5 * (s + s.T)

    def extend(self, boundary_values: np.ndarray) -> np.ndarray:
        """Harmonic nodal field with the given free-boundary values, zero on
        constrained vertices."""
        out = np.zeros(self.mesh.n_vertices)
        out[self.free_boundary] = boundary_values
        if self.interior.size:
            out[self.interior] = self._ext @ boundary_values
        return out


def discrete_dtn(
    mesh: Mesh, constrained: Sequence[int] = (), stiffness=None
) -> np.ndarray:
    """Dense symmetric DtN matrix on the free boundary vertices.

    Rows/columns follow ascending vertex id over ``boundary minus
    constrained``; constrained vertices are eliminated as homogeneous
    Dirichlet data.
    """
    return _DtnSystem(mesh, constrained, stiffness).S


def dtn_vertices(mesh: Mesh, constrained: Sequence[int] = ()) -> np.ndarray:
    """Vertex ids indexing the rows of :func:`discrete_dtn`."""
    cset = set(int(c) for c in constrained)
    return np.array(
        [v for v in mesh.boundary_vertex_ids if int(v) not in cset], dtype=np.int64
    )


def _solve_pencil(
    system: _DtnSystem, bmat: np.ndarray, n_pairs: int, mesh_name: str
) -> SpectrumResult:
    nb = system.S.shape[0]
    if n_pairs > nb:
        raise ParameterError(
            f"requested {n_pairs} eigenpairs but only {nb} boundary vertices"
        )
    diag = np.diag(bmat)
    if np.any(diag <= 0):
        raise SpectralError("boundary mass not positive definite on free vertices")
    try:
        evals, evecs = dla.eigh(system.S, bmat)
    except (np.linalg.LinAlgError, dla.LinAlgError) as exc:
        raise SpectralError(f"generalized eigensolver failed: {exc}") from exc
    evals = evals[:n_pairs]
    evecs = evecs[:, :n_pairs]
    fields = np.array([system.extend(evecs[:, k]) for k in range(n_pairs)])
    sv = system.S @ evecs
    bv = bmat @ evecs
    num = np.linalg.norm(sv - evals[None, :] * bv, axis=0)
    # residual relative to the operator scale, so the zero mode (S v and
    # sigma both roundoff-size) does not divide noise by noise
    scale = np.linalg.norm(system.S, "fro") + np.abs(evals) * np.linalg.norm(bmat, "fro")
    residuals = num / (scale * np.linalg.norm(evecs, axis=0))
    gram = evecs.T @ bmat @ evecs
    ortho = float(np.max(np.abs(gram - np.eye(n_pairs))))
    constrained = tuple(
        int(v) for v in _complement_boundary_vertices(system.mesh, system.free_boundary)
    )
    return SpectrumResult(
        mesh_name=mesh_name,
        constrained=constrained,
        boundary_vertices=system.free_boundary,
        eigenvalues=evals,
        eigenfields=fields,
        residuals=residuals,
        ortho_error=ortho,
    )


def _complement_boundary_vertices(mesh: Mesh, kept: np.ndarray) -> np.ndarray:
    keep = set(map(int, kept))
    return np.array(
        [v for v in mesh.boundary_vertex_ids if int(v) not in keep], dtype=np.int64
    )


def steklov_spectrum(mesh: Mesh, k: int, stiffness=None) -> SpectrumResult:
    """First k+1 Steklov eigenpairs (sigma_0 = 0 included)."""
    if k < 1:
        raise ParameterError("k must be >= 1")
    if k > MAX_EIGENPAIRS:
        raise ParameterError(f"k must be <= {MAX_EIGENPAIRS}")
    if not mesh.has_label(EXTERIOR):
        raise ParameterError("mesh has no EXTERIOR boundary")
    system = _DtnSystem(mesh, (), stiffness)
    bmat = fem.assemble_boundary_mass(mesh).matrix
    bb = bmat[system.free_boundary][:, system.free_boundary].toarray()
    return _solve_pencil(system, bb, k + 1, mesh.name)


def _resolve_constraint(mesh: Mesh, y) -> tuple[set[int], set[tuple[int, int]]]:
    """Vertex ids and covered boundary edges of a constraint specification.

    ``y`` may be a boundary label, an iterable of arcs, or an iterable of
    vertex ids (in which case the covered edges are those with both endpoints
    constrained).
    """
    if isinstance(y, str):
        if y not in (EXTERIOR, INTERIOR):
            raise ParameterError(f"unknown boundary label {y!r}")
        edges = mesh.edges_with_label(y)
        verts = set(map(int, mesh.vertices_with_label(y)))
        return verts, {tuple(sorted(e)) for e in edges}
    items = list(y)
    if items and isinstance(items[0], BoundaryArc):
        verts: set[int] = set()
        edges: set[tuple[int, int]] = set()
        for arc in items:
            verts.update(map(int, mesh.arc_vertices(arc)))
            edges.update(tuple(sorted(e)) for e in mesh.arc_edges(arc))
        return verts, edges
    verts = set(int(v) for v in items)
    edges = {
        e for e in map(tuple, map(sorted, mesh.boundary_edge_set))
        if e[0] in verts and e[1] in verts
    }
    return verts, edges


def mixed_spectrum(mesh: Mesh, y, k: int, stiffness=None) -> SpectrumResult:
    """First k mixed Steklov-Dirichlet eigenpairs (xi_1 ... xi_k).

    The constraint ``y`` (label, arcs, or vertex ids) carries homogeneous
    Dirichlet data; the Steklov condition and its boundary measure live on the
    remaining boundary edges.
    """
    if k < 1:
        raise ParameterError("k must be >= 1")
    if k > MAX_EIGENPAIRS:
        raise ParameterError(f"k must be <= {MAX_EIGENPAIRS}")
    yverts, yedges = _resolve_constraint(mesh, y)
    if not yverts:
        raise ParameterError("constraint set Y must be nonempty")
    if yverts >= set(map(int, mesh.boundary_vertex_ids)):
        raise ParameterError("constraint set Y must not cover the whole boundary")
    system = _DtnSystem(mesh, sorted(yverts), stiffness)
    free_edges = [
        e
        for loop in mesh.boundary_loops
        for e in loop.edges()
        if tuple(sorted(e)) not in yedges
    ]
    bmat = fem.boundary_mass_for_edges(mesh, free_edges).matrix
    bb = bmat[system.free_boundary][:, system.free_boundary].toarray()
    return _solve_pencil(system, bb, k, mesh.name)


@dataclass
class ExhaustionResult:
    """xi_1 along an increasing exhaustion family, with monotonicity report."""

    values: list[float]
    warnings: list[str]

    @property
    def monotone(self) -> bool:
        return not self.warnings


def exhaustion_xi1(meshes: Sequence[Mesh], tau_mono: float = TAU_MONO) -> ExhaustionResult:
    """xi_1(M_r, interior boundary) per mesh of an ordered exhaustion family.

    The sequence is checked to be nonincreasing up to the relative tolerance
    ``tau_mono``; violations are reported as warnings, not failures.
    """
    values: list[float] = []
    for m in meshes:
        if not m.has_label(INTERIOR) or not m.has_label(EXTERIOR):
            raise ParameterError(
                f"mesh {m.name!r} needs both INTERIOR and EXTERIOR boundary"
            )
        values.append(float(mixed_spectrum(m, INTERIOR, 1).eigenvalues[0]))
    warnings = []
    for j in range(1, len(values)):
        if values[j] > values[j - 1] * (1.0 + tau_mono):
            warnings.append(
                f"xi_1 increased at step {j}: {values[j - 1]:.9g} -> {values[j]:.9g} "
                "(discretization artifact)"
            )
    return ExhaustionResult(values, warnings)


def eigenvalue_counts(eigenvalues: np.ndarray, thresholds: Iterable[float]) -> list[int]:
    """Counting function #{j : sigma_j < sigma} at each threshold."""
    ev = np.sort(np.asarray(eigenvalues, dtype=float))
    return [int(np.searchsorted(ev, s, side="left")) for s in thresholds]


def save_spectrum_csv(path, result: SpectrumResult) -> None:
    """Write (index, eigenvalue, residual) rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "eigenvalue", "residual"])
        for i, (ev, r) in enumerate(zip(result.eigenvalues, result.residuals)):
            writer.writerow([i, repr(float(ev)), repr(float(r))])
