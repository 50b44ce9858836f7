"""Relative capacities, isocapacitary constants, and the level-set inequality.

Capacity between vertex sets is the Dirichlet energy of the discrete harmonic
potential with values 1 and 0 on the sets.  The isocapacitary search minimizes
``Cap(A, B) / min(m(A), m(B))`` over pairs of disjoint contiguous boundary
arcs; an exhaustive enumeration over the same candidate class serves as its
oracle on small boundaries.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg as dla

from . import fem, spectral
from .errors import ParameterError, SizeError, SolveError
from .mesh import EXTERIOR, INTERIOR, BoundaryArc, Mesh, boundary_length

COMPACT = "COMPACT"
MIXED = "MIXED"

# Agreement contracts (discrete Green identity; witness recomputation).
FLUX_TOL = 1e-8
RECOMPUTE_TOL = 1e-10
TAU_CAP = 0.05


def _worker_count() -> int:
    env = os.environ.get("STEKLOV_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class CapacityResult:
    """Capacity value with its energy/flux cross-check and potential."""

    value: float
    flux_value: float
    potential: np.ndarray
    set_a: tuple[int, ...]
    set_b: tuple[int, ...]

    @property
    def flux_gap(self) -> float:
        return abs(self.value - self.flux_value) / max(self.value, 1.0)


def capacity(
    mesh: Mesh,
    a: Iterable[int],
    b: Iterable[int],
    stiffness: fem.SymOperator | None = None,
) -> CapacityResult:
    """Cap(A, B): energy of the harmonic potential with 1 on A, 0 on B.

    The value is computed on a canonically oriented potential, so swapping A
    and B returns the identical float (the two problems differ by u -> 1 - u).
    """
    aset = tuple(sorted(set(int(v) for v in a)))
    bset = tuple(sorted(set(int(v) for v in b)))
    if not aset or not bset:
        raise ParameterError("capacity sets A and B must be nonempty")
    if set(aset) & set(bset):
        raise ParameterError("capacity sets A and B must be disjoint")
    kop = stiffness or fem.assemble_stiffness(mesh)

    swap = bset < aset
    hi, lo = (bset, aset) if swap else (aset, bset)
    fixed = {v: 1.0 for v in hi}
    fixed.update({v: 0.0 for v in lo})
    pot = fem.harmonic_extension(mesh, fixed, kop)
    value = fem.dirichlet_energy(mesh, pot, kop)
    if swap:
        pot = 1.0 - pot
    # discrete flux out of A across its stiffness star; equals the energy by
    # the discrete Green identity since the potential is 1 on A, 0 on B,
    # harmonic elsewhere
    flux = float((kop.matrix @ pot)[list(aset)].sum())
    return CapacityResult(value, flux, pot, aset, bset)


def capacity_compact_support(
    mesh: Mesh,
    f_arcs: Sequence[BoundaryArc] | BoundaryArc,
    stiffness: fem.SymOperator | None = None,
) -> CapacityResult:
    """Cap(F, interior boundary): potential 1 on F, 0 on the exhaustion cut.

    ``F`` must consist of EXTERIOR arcs; vertices shared with the INTERIOR
    boundary (chain junctions) stay Dirichlet-constrained to zero.
    """
    if isinstance(f_arcs, BoundaryArc):
        f_arcs = (f_arcs,)
    if not mesh.has_label(INTERIOR):
        raise ParameterError("mesh has no INTERIOR boundary")
    if not f_arcs:
        raise ParameterError("F must be nonempty")
    averts: set[int] = set()
    for arc in f_arcs:
        for ea, eb in mesh.arc_edges(arc):
            if mesh.edge_label(ea, eb) != EXTERIOR:
                raise ParameterError("F must consist of EXTERIOR boundary arcs")
        averts.update(map(int, mesh.arc_vertices(arc)))
    bverts = set(map(int, mesh.vertices_with_label(INTERIOR)))
    averts -= bverts
    if not averts:
        raise ParameterError("F contains no vertices outside the INTERIOR boundary")
    return capacity(mesh, averts, bverts, stiffness)


# ---------------------------------------------------------------------------
# isocapacitary constant search
# ---------------------------------------------------------------------------

@dataclass
class GammaEstimate:
    """Upper estimate of the isocapacitary constant with witnessing arcs.

    ``witness_b`` is the INTERIOR marker string for the mixed variant, whose
    zero-set is the whole exhaustion cut rather than an arc.
    """

    value: float
    witness_a: tuple[BoundaryArc, ...]
    witness_b: tuple[BoundaryArc, ...] | str
    candidates_evaluated: int
    trace: list[dict] = field(default_factory=list)


class _ArcPool:
    """Candidate arcs with precomputed vertex sets and boundary measures."""

    def __init__(self, mesh: Mesh, arcs: Sequence[BoundaryArc], drop: set[int]):
        self.arcs = list(arcs)
        self.measures = [boundary_length(mesh, [a]) for a in self.arcs]
        self.vertices = []
        for a in self.arcs:
            verts = tuple(v for v in mesh.arc_vertices(a) if v not in drop)
            self.vertices.append(verts)
        self.vertex_sets = [frozenset(v) for v in self.vertices]


class _BoundaryCapacity:
    """Cap(A, B) through the boundary-reduced DtN matrix (shared factorization)."""

    def __init__(self, mesh: Mesh, constrained: Sequence[int] = (), stiffness=None):
        self.system = spectral._DtnSystem(mesh, constrained, stiffness)
        self.pos = {int(v): i for i, v in enumerate(self.system.free_boundary)}

    def cap(self, averts: Sequence[int], bverts: Sequence[int]) -> float:
        s = self.system.S
        nb = s.shape[0]
        ia = np.fromiter((self.pos[v] for v in averts), dtype=np.int64)
        ib = np.fromiter((self.pos[v] for v in bverts), dtype=np.int64)
        mask = np.ones(nb, dtype=bool)
        mask[ia] = False
        mask[ib] = False
        ir = np.nonzero(mask)[0]
        saa = s[np.ix_(ia, ia)].sum()
        if ir.size == 0:
            return float(saa)
        sra = s[np.ix_(ir, ia)]
        rhs = -sra.sum(axis=1)
        try:
            w = dla.cho_solve(dla.cho_factor(s[np.ix_(ir, ir)]), rhs)
        except dla.LinAlgError as exc:
            raise SolveError(f"boundary capacity solve failed: {exc}") from exc
        return float(saa + (sra.T @ w).sum())


def _grid_arcs(mesh: Mesh, loop_index: int, step: int) -> list[BoundaryArc]:
    loop = mesh.boundary_loops[loop_index]
    n = loop.n_edges
    arcs: list[BoundaryArc] = []
    if loop.closed:
        grid = list(range(0, n, step))
        for s in grid:
            for e in grid:
                if e != s:
                    arcs.append(BoundaryArc(loop_index, s, e))
        arcs.append(BoundaryArc(loop_index, 0, 0))  # full loop
    else:
        grid = sorted(set(range(0, n, step)) | {n})
        for s in grid:
            for e in grid:
                if s < e:
                    arcs.append(BoundaryArc(loop_index, s, e))
    return arcs


def _arc_key(mesh: Mesh, arc: BoundaryArc) -> tuple[int, int, int]:
    return (arc.loop, arc.start, mesh.arc_n_edges(arc))


def _shifted_arc(mesh: Mesh, arc: BoundaryArc, dstart: int, dlen: int) -> BoundaryArc | None:
    loop = mesh.boundary_loops[arc.loop]
    n = loop.n_edges
    s = arc.start + dstart
    length = mesh.arc_n_edges(arc) - dstart + dlen
    if loop.closed:
        if not 1 <= length <= n:
            return None
        s %= n
        return BoundaryArc(arc.loop, s, (s + length) % n)
    if s < 0 or length < 1 or s + length > n:
        return None
    return BoundaryArc(arc.loop, s, s + length)


def gamma_search(
    mesh: Mesh,
    mode: str = COMPACT,
    coarse_step: int = 4,
    refine_rounds: int = 2,
    stiffness: fem.SymOperator | None = None,
) -> GammaEstimate:
    """Minimize Cap(A, B)/min(m(A), m(B)) over disjoint contiguous arc pairs.

    COMPACT mode searches pairs of arcs anywhere on the boundary; MIXED mode
    searches single EXTERIOR arcs F against the fixed INTERIOR boundary.  The
    coarse pass puts arc endpoints on every ``coarse_step``-th boundary
    vertex; each refinement round moves endpoints by half the previous step.
    Ties break to the lexicographically smallest (loop, start, length).
    """
    if mode not in (COMPACT, MIXED):
        raise ParameterError(f"unknown gamma mode {mode!r}")
    if coarse_step < 1:
        raise ParameterError("coarse_step must be >= 1")
    kop = stiffness or fem.assemble_stiffness(mesh)

    if mode == COMPACT:
        if len(mesh.boundary_vertex_ids) < 4:
            raise ParameterError("COMPACT gamma search needs >= 4 boundary vertices")
        evaluator = _BoundaryCapacity(mesh, (), kop)
        drop: set[int] = set()
        loops = range(len(mesh.boundary_loops))
        arcs = [a for li in loops for a in _grid_arcs(mesh, li, coarse_step)]
    else:
        if not mesh.has_label(INTERIOR):
            raise ParameterError("MIXED gamma search needs an INTERIOR boundary")
        drop = set(map(int, mesh.vertices_with_label(INTERIOR)))
        evaluator = _BoundaryCapacity(mesh, sorted(drop), kop)
        arcs = []
        for li, loop in enumerate(mesh.boundary_loops):
            if all(lab == EXTERIOR for lab in loop.labels):
                arcs.extend(_grid_arcs(mesh, li, coarse_step))
            elif any(lab == EXTERIOR for lab in loop.labels):
                # mixed-label loop: enumerate within each EXTERIOR run
                for run in mesh.label_arcs(EXTERIOR):
                    if run.loop != li:
                        continue
                    base, nrun = run.start, mesh.arc_n_edges(run)
                    grid = sorted(set(range(0, nrun, coarse_step)) | {nrun})
                    k = loop.n_edges
                    for s in grid:
                        for e in grid:
                            if s < e:
                                if loop.closed:
                                    arcs.append(
                                        BoundaryArc(li, (base + s) % k, (base + e) % k)
                                    )
                                else:
                                    arcs.append(BoundaryArc(li, base + s, base + e))

    arcs.sort(key=lambda a: _arc_key(mesh, a))
    pool = _ArcPool(mesh, arcs, drop)
    feasible = [i for i, v in enumerate(pool.vertices) if v and pool.measures[i] > 0]

    def pair_value(i: int, j: int | None) -> float | None:
        averts = pool.vertices[i]
        if j is None:
            cap = evaluator.cap(averts, ())
            meas = pool.measures[i]
        else:
            if not pool.vertex_sets[i].isdisjoint(pool.vertex_sets[j]):
                return None
            cap = evaluator.cap(averts, pool.vertices[j])
            meas = min(pool.measures[i], pool.measures[j])
        return cap / meas

    evaluated = 0
    trace: list[dict] = []

    if mode == MIXED:
        candidates: list[tuple[int, int | None]] = [(i, None) for i in feasible]
    else:
        candidates = [
            (i, j)
            for ai, i in enumerate(feasible)
            for j in feasible[ai + 1 :]
            if pool.vertex_sets[i].isdisjoint(pool.vertex_sets[j])
        ]
    if not candidates:
        raise ParameterError("fewer than 2 feasible disjoint arcs")

    def scan(chunk) -> tuple[tuple[float, int, int | None] | None, int]:
        best = None
        n = 0
        for i, j in chunk:
            val = pair_value(i, j)
            n += 1
            if val is None:
                continue
            cand = (val, i, -1 if j is None else j)
            if best is None or cand < best:
                best = cand
        return best, n

    workers = _worker_count()
    if workers > 1 and len(candidates) >= 512:
        size = max(64, len(candidates) // (workers * 8))
        chunks = [candidates[k : k + size] for k in range(0, len(candidates), size)]
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            results = list(pool_exec.map(scan, chunks))
        best = min((r for r, _ in results if r is not None), default=None)
        evaluated += sum(n for _, n in results)
    else:
        best, n = scan(candidates)
        evaluated += n
    if best is None:
        raise ParameterError("fewer than 2 feasible disjoint arcs")
    trace.append({"stage": "coarse", "value": best[0], "evaluated": evaluated})

    # local endpoint descent around the coarse optimum
    best_val = best[0]
    arc_a = pool.arcs[best[1]]
    arc_b = None if best[2] == -1 else pool.arcs[best[2]]

    def eval_pair_arcs(a: BoundaryArc, b: BoundaryArc | None) -> float | None:
        nonlocal evaluated
        averts = tuple(v for v in mesh.arc_vertices(a) if v not in drop)
        if not averts:
            return None
        ma = boundary_length(mesh, [a])
        if b is None:
            evaluated += 1
            return evaluator.cap(averts, ()) / ma
        bverts = tuple(v for v in mesh.arc_vertices(b) if v not in drop)
        if not bverts or not frozenset(averts).isdisjoint(bverts):
            return None
        evaluated += 1
        return evaluator.cap(averts, bverts) / min(ma, boundary_length(mesh, [b]))

    for rnd in range(refine_rounds):
        delta = coarse_step // (2 ** (rnd + 1))
        if delta < 1:
            break
        improved = True
        sweeps = 0
        while improved and sweeps < 32:
            improved = False
            sweeps += 1
            for which in (0, 1):
                if which == 1 and arc_b is None:
                    continue
                base = arc_a if which == 0 else arc_b
                for dstart, dlen in (
                    (-delta, 0), (delta, 0), (0, delta), (0, -delta)
                ):
                    cand = _shifted_arc(mesh, base, dstart, dlen)
                    if cand is None:
                        continue
                    pair = (cand, arc_b) if which == 0 else (arc_a, cand)
                    val = eval_pair_arcs(*pair)
                    if val is not None and val < best_val:
                        best_val = val
                        arc_a, arc_b = pair
                        improved = True
        trace.append({"stage": f"refine_{rnd}", "value": best_val, "evaluated": evaluated})

    witness_a = (arc_a,)
    if mode == MIXED:
        witness_b: tuple[BoundaryArc, ...] | str = INTERIOR
        recomputed = capacity_compact_support(mesh, witness_a, kop).value / boundary_length(
            mesh, witness_a
        )
    else:
        witness_b = (arc_b,)
        recomputed = capacity(
            mesh, mesh.arc_vertices(arc_a), mesh.arc_vertices(arc_b), kop
        ).value / min(boundary_length(mesh, [arc_a]), boundary_length(mesh, [arc_b]))
    trace.append({"stage": "recompute", "value": recomputed})
    return GammaEstimate(best_val, witness_a, witness_b, evaluated, trace)


def gamma_bruteforce(mesh: Mesh, max_boundary_vertices: int = 40) -> GammaEstimate:
    """Exact minimum over all pairs of disjoint contiguous arcs (oracle).

    Enumerates every arc on every loop (endpoints on every vertex) and every
    vertex-disjoint pair, including cross-loop pairs.
    """
    nb = len(mesh.boundary_vertex_ids)
    if nb > max_boundary_vertices:
        raise SizeError(
            f"boundary has {nb} vertices, exceeds brute-force cap {max_boundary_vertices}"
        )
    if nb < 4:
        raise ParameterError("gamma brute force needs >= 4 boundary vertices")
    kop = fem.assemble_stiffness(mesh)
    evaluator = _BoundaryCapacity(mesh, (), kop)
    arcs = [a for li in range(len(mesh.boundary_loops)) for a in _grid_arcs(mesh, li, 1)]
    arcs.sort(key=lambda a: _arc_key(mesh, a))
    pool = _ArcPool(mesh, arcs, set())

    best: tuple[float, int, int] | None = None
    evaluated = 0
    for i in range(len(arcs)):
        vi = pool.vertex_sets[i]
        for j in range(i + 1, len(arcs)):
            if not vi.isdisjoint(pool.vertex_sets[j]):
                continue
            evaluated += 1
            val = evaluator.cap(pool.vertices[i], pool.vertices[j]) / min(
                pool.measures[i], pool.measures[j]
            )
            cand = (val, i, j)
            if best is None or cand < best:
                best = cand
    if best is None:
        raise ParameterError("fewer than 2 feasible disjoint arcs")
    arc_a, arc_b = pool.arcs[best[1]], pool.arcs[best[2]]
    recomputed = capacity(
        mesh, mesh.arc_vertices(arc_a), mesh.arc_vertices(arc_b), kop
    ).value / min(boundary_length(mesh, [arc_a]), boundary_length(mesh, [arc_b]))
    trace = [{"stage": "bruteforce", "value": best[0], "evaluated": evaluated},
             {"stage": "recompute", "value": recomputed}]
    return GammaEstimate(best[0], (arc_a,), (arc_b,), evaluated, trace)


# ---------------------------------------------------------------------------
# level-set capacity inequality
# ---------------------------------------------------------------------------

@dataclass
class LevelsetReport:
    """Outcome of the level-set capacity inequality check (dt^2 form)."""

    lhs: float
    rhs: float
    ratio: float
    passed: bool
    levels: np.ndarray
    caps: np.ndarray


def levelset_capacity_check(
    mesh: Mesh,
    u: np.ndarray,
    t_grid: Sequence[float],
    tau_cap: float = TAU_CAP,
    stiffness: fem.SymOperator | None = None,
) -> LevelsetReport:
    """Check int 2t Cap({u >= t}, {u <= 0}) dt <= 4 * energy on {u >= 0}.

    Threshold sets are taken by vertex membership; the right-hand side counts
    the full energy of straddling triangles, keeping it an upper-bound flavor.
    """
    arr = np.asarray(u, dtype=float)
    if arr.shape != (mesh.n_vertices,):
        raise ParameterError("field length must equal vertex count")
    umax = float(arr.max())
    if umax <= 0:
        raise ParameterError("field must attain positive values")
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) == 0 or np.any(np.diff(t) <= 0):
        raise ParameterError("t_grid must be ascending and nonempty")
    if t[0] <= 0 or t[-1] >= umax:
        raise ParameterError("t_grid must lie strictly inside (0, max u)")
    kop = stiffness or fem.assemble_stiffness(mesh)

    b0 = np.nonzero(arr <= 0.0)[0]
    caps = np.zeros(len(t))
    if b0.size:
        for idx, level in enumerate(t):
            a_t = np.nonzero(arr >= level)[0]
            caps[idx] = capacity(mesh, a_t, b0, kop).value
        lhs = float(np.trapezoid(2.0 * t * caps, t))
    else:
        lhs = 0.0

    energies = fem.element_energies(mesh, arr)
    keep = (arr[mesh.triangles] >= 0.0).any(axis=1)
    rhs = 4.0 * float(energies[keep].sum())
    passed = lhs <= rhs * (1.0 + tau_cap)
    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = 0.0 if lhs == 0 else math.inf
    return LevelsetReport(lhs, rhs, ratio, passed, t, caps)


def save_gamma_json(path, estimate: GammaEstimate) -> None:
    def arc_doc(arc: BoundaryArc) -> dict:
        return {"loop": arc.loop, "start": arc.start, "end": arc.end}

    doc = {
        "value": estimate.value,
        "witness_A": [arc_doc(a) for a in estimate.witness_a],
        "witness_B": (
            estimate.witness_b
            if isinstance(estimate.witness_b, str)
            else [arc_doc(a) for a in estimate.witness_b]
        ),
        "candidates_evaluated": estimate.candidates_evaluated,
        "trace": estimate.trace,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
