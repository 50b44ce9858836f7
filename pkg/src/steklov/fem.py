"""Metric-aware P1 finite elements: stiffness, boundary mass, harmonic extension.

The stiffness matrix discretizes the Dirichlet energy of the mesh metric; for
conformal metrics in 2D it coincides entrywise with the Euclidean stiffness
(the tensor inverse and the volume factor cancel), which downstream code and
tests rely on.  Boundary mass is the consistent 1D P1 mass per labeled edge.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import AssemblyError, ParameterError, SolveError
from .mesh import EXTERIOR, INTERIOR, Mesh

STIFFNESS = "STIFFNESS"
BOUNDARY_MASS = "BOUNDARY_MASS"

# Relative residual contract for harmonic extension solves.
SOLVER_TOL = 1e-10


@dataclass(frozen=True)
class SymOperator:
    """Sparse symmetric operator tagged with its role."""

    matrix: sparse.csr_matrix
    role: str

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def _symmetrize(mat: sparse.spmatrix) -> sparse.csr_matrix:
    mat = mat.tocsr()
    return (mat + mat.T) * 0.5


def triangle_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Chart gradients of the P1 hat functions and signed chart areas.

    Returns (grads, areas) with grads of shape (n_triangles, 3, 2).
    """
    coords = mesh.triangle_chart_coords()
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(det <= 0):
        ti = int(np.nonzero(det <= 0)[0][0])
        raise AssemblyError(f"triangle {ti} has non-positive chart area")
    # rows of inv([[e1],[e2]])^T scaled by det: grad(lambda_1), grad(lambda_2)
    g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
    g0 = -(g1 + g2)
    grads = np.stack([g0, g1, g2], axis=1)
    return grads, 0.5 * det


def assemble_stiffness(mesh: Mesh) -> SymOperator:
    """Stiffness with element integrand (grad u)^T g^{-1} (grad v) sqrt(det g)."""
    grads, areas = triangle_gradients(mesh)
    g = mesh.triangle_metric_tensors()
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
    bad = ~(np.isfinite(det) & (det > 0) & (g[:, 0, 0] > 0))
    if np.any(bad):
        ti = int(np.nonzero(bad)[0][0])
        raise AssemblyError(f"non-SPD metric tensor on triangle {ti}")
    # w = g^{-1} sqrt(det g), assembled per triangle
    scale = np.sqrt(det)
    w = np.empty_like(g)
    w[:, 0, 0] = g[:, 1, 1] / det * scale
    w[:, 1, 1] = g[:, 0, 0] / det * scale
    w[:, 0, 1] = -g[:, 0, 1] / det * scale
    w[:, 1, 0] = -g[:, 1, 0] / det * scale

    local = np.einsum("tia,tab,tjb->tij", grads, w, grads) * areas[:, None, None]
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    mat = sparse.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(mesh.n_vertices, mesh.n_vertices)
    )
    return SymOperator(_symmetrize(mat), STIFFNESS)


def boundary_mass_for_edges(
    mesh: Mesh, edges: Iterable[tuple[int, int]]
) -> SymOperator:
    """Consistent 1D P1 mass over an explicit set of boundary edges."""
    rows, cols, vals = [], [], []
    for a, b in edges:
        length = mesh.edge_metric_length(a, b)
        rows += [a, a, b, b]
        cols += [a, b, a, b]
        vals += [length / 3.0, length / 6.0, length / 6.0, length / 3.0]
    mat = sparse.coo_matrix(
        (vals, (rows, cols)), shape=(mesh.n_vertices, mesh.n_vertices)
    )
    return SymOperator(_symmetrize(mat), BOUNDARY_MASS)


def assemble_boundary_mass(
    mesh: Mesh, labels: Sequence[str] = (EXTERIOR, INTERIOR)
) -> SymOperator:
    """Boundary mass over all boundary edges carrying one of ``labels``."""
    edges: list[tuple[int, int]] = []
    for loop in mesh.boundary_loops:
        for pos in range(loop.n_edges):
            if loop.labels[pos] in labels:
                edges.append(loop.edge(pos))
    return boundary_mass_for_edges(mesh, edges)


def harmonic_extension(
    mesh: Mesh,
    fixed: Mapping[int, float],
    stiffness: SymOperator | None = None,
) -> np.ndarray:
    """Discrete harmonic field agreeing with ``fixed`` on its domain.

    Minimizes u^T K u over all nodal fields with the given values, i.e. is
    discretely harmonic at every free vertex.  Relative residual of the
    reduced solve is at most ``SOLVER_TOL``.
    """
    if not fixed:
        raise ParameterError("fixed set must be nonempty")
    n = mesh.n_vertices
    idx = np.fromiter(fixed.keys(), dtype=np.int64)
    if idx.min() < 0 or idx.max() >= n:
        raise ParameterError("fixed vertex index out of range")
    vals = np.fromiter((fixed[int(i)] for i in idx), dtype=float)
    out = np.zeros(n)
    out[idx] = vals
    free = np.ones(n, dtype=bool)
    free[idx] = False
    nfree = int(free.sum())
    if nfree == 0:
        return out

    K = (stiffness or assemble_stiffness(mesh)).matrix.tocsc()
    kff = K[free][:, free]
    rhs = -K[free][:, ~free] @ out[~free]
    try:
        lu = splu(kff.tocsc())
        sol = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolveError(f"singular reduced system: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SolveError("singular reduced system: solution not finite")
    # one step of iterative refinement if the direct solve is short of contract
    denom = float(np.linalg.norm(rhs)) or 1.0
    res = rhs - kff @ sol
    if np.linalg.norm(res) > SOLVER_TOL * denom:
        sol = sol + lu.solve(res)
        res = rhs - kff @ sol
        if np.linalg.norm(res) > SOLVER_TOL * denom:
            raise SolveError(
                f"harmonic solve residual {np.linalg.norm(res) / denom:.3e} "
                f"exceeds {SOLVER_TOL:.0e}"
            )
    out[free] = sol
    return out


def dirichlet_energy(
    mesh: Mesh, field: np.ndarray, stiffness: SymOperator | None = None
) -> float:
    """Quadratic energy field^T K field of a nodal field."""
    arr = np.asarray(field, dtype=float)
    if arr.shape != (mesh.n_vertices,):
        raise ParameterError("field length must equal vertex count")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("field values must be finite")
    K = (stiffness or assemble_stiffness(mesh)).matrix
    return float(arr @ (K @ arr))


def element_energies(mesh: Mesh, field: np.ndarray) -> np.ndarray:
    """Per-triangle Dirichlet energy contributions of a nodal field."""
    arr = np.asarray(field, dtype=float)
    if arr.shape != (mesh.n_vertices,):
        raise ParameterError("field length must equal vertex count")
    grads, areas = triangle_gradients(mesh)
    g = mesh.triangle_metric_tensors()
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
    scale = np.sqrt(det)
    w = np.empty_like(g)
    w[:, 0, 0] = g[:, 1, 1] / det * scale
    w[:, 1, 1] = g[:, 0, 0] / det * scale
    w[:, 0, 1] = -g[:, 0, 1] / det * scale
    w[:, 1, 0] = -g[:, 1, 0] / det * scale
    du = np.einsum("ti,tia->ta", arr[mesh.triangles], grads)
    return np.einsum("ta,tab,tb->t", du, w, du) * areas


def save_field_csv(path, field: np.ndarray) -> None:
    """Write a nodal field as (vertex id, value) rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vertex", "value"])
        for i, v in enumerate(np.asarray(field, dtype=float)):
            writer.writerow([i, repr(float(v))])
