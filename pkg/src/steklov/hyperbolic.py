"""Closed-form hyperbolic computations: collar bounds, sech-integral constants,
and the quadratic form of the half-plane Dirichlet-to-Neumann operator.

The reciprocal sech-power integrals c_n bound the bottom of the DtN spectrum
of the hyperbolic half-space from below; for the two-dimensional half-plane
the bottom equals c_1 = 2/pi, realized here by wide-plateau boundary data fed
through the sinh^{-2}-kernel quadratic form.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import ParameterError

# Quadrature contract for the sech-power integrals.
CN_TOL = 1e-12
_TAIL_CUT = 40.0  # sech^n tail beyond this point is < 2^n e^{-40 n} / n < 1e-15


def _sech_power_integral(n: int, upper: float) -> float:
    val, _ = integrate.quad(
        lambda s: math.cosh(s) ** (-n), 0.0, upper, epsabs=1e-14, epsrel=1e-13, limit=200
    )
    return val


def c_n(n: int) -> float:
    """Reciprocal of the integral of sech^n over the half line."""
    if int(n) != n or n < 1:
        raise ParameterError(f"n must be an integer >= 1, got {n}")
    return 1.0 / _sech_power_integral(int(n), _TAIL_CUT)


def sech_integral(rho0: float) -> float:
    """Integral of sech over [0, rho0] by quadrature (closed form: gd(rho0))."""
    if rho0 <= 0:
        raise ParameterError(f"rho0 must be positive, got {rho0}")
    return _sech_power_integral(1, min(rho0, _TAIL_CUT)) + (
        0.0 if rho0 <= _TAIL_CUT else 2.0 * (math.atan(math.exp(rho0)) - math.atan(math.exp(_TAIL_CUT)))
    )


def collar_width(l0: float) -> float:
    """Width rho0 of the collar around a geodesic of length l0:
    sinh(l0/2) sinh(rho0) = 1."""
    if l0 <= 0:
        raise ParameterError(f"l0 must be positive, got {l0}")
    return math.asinh(1.0 / math.sinh(0.5 * l0))


@dataclass(frozen=True)
class CollarBound:
    """First-eigenvalue upper bounds from collar test functions.

    ``bound_case1`` applies to one geodesic boundary (two-dimensional test
    space), ``bound_case2`` to two or more (energy of the radial profile
    alone, via the isocapacitary upper bound).
    """

    l0: float
    rho0: float
    rho1: float
    n_boundaries: int
    e_phi: float
    e_psi_bound: float
    boundary_norm_phi: float
    boundary_norm_psi: float
    bound_case1: float
    bound_case2: float

    @property
    def bound(self) -> float:
        return self.bound_case1 if self.n_boundaries == 1 else self.bound_case2


def collar_bound(
    l0: float, rho1: float | None = None, n_boundaries: int = 1
) -> CollarBound:
    """Collar-geometry upper bounds for the first Steklov eigenvalue.

    ``rho1`` defaults to min(l0, rho0), matching the small-l0 regime where the
    product l0 * bound_case1 approaches 4/3.
    """
    if n_boundaries < 1:
        raise ParameterError("n_boundaries must be >= 1")
    rho0 = collar_width(l0)
    if rho1 is None:
        rho1 = min(l0, rho0)
    if not 0 < rho1 <= rho0:
        raise ParameterError(f"rho1 must lie in (0, rho0], got {rho1} with rho0 = {rho0}")
    isech = sech_integral(rho0)
    e_phi = l0 / isech
    e_psi_bound = 0.5 * l0 * math.sinh(rho1) / rho1**2 + rho1 / (6.0 * l0)
    bound_case1 = max(1.0 / isech, math.sinh(rho1) / rho1**2 + rho1 / (3.0 * l0**2))
    bound_case2 = 2.0 / isech
    return CollarBound(
        l0=float(l0),
        rho0=rho0,
        rho1=float(rho1),
        n_boundaries=int(n_boundaries),
        e_phi=e_phi,
        e_psi_bound=e_psi_bound,
        boundary_norm_phi=float(l0),
        boundary_norm_psi=0.5 * l0,
        bound_case1=bound_case1,
        bound_case2=bound_case2,
    )


# ---------------------------------------------------------------------------
# half-plane DtN quadratic form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LineFunction:
    """Compactly supported function on a uniform grid of the boundary line.

    The grid is the real-line chart of the half-plane boundary via
    s = (e^x - 1)/(e^x + 1); compact support means exact zeros at both ends.
    """

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        x = np.ascontiguousarray(self.x, dtype=float)
        g = np.ascontiguousarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != g.shape or len(x) < 3:
            raise ParameterError("grid and samples must be 1D arrays of equal length >= 3")
        steps = np.diff(x)
        if steps.min() <= 0 or (steps.max() - steps.min()) > 1e-12 * steps.max():
            raise ParameterError("grid must be uniform and increasing")
        if not np.all(np.isfinite(g)):
            raise ParameterError("samples must be finite")
        if g[0] != 0.0 or g[-1] != 0.0:
            raise ParameterError("function must vanish at both grid ends")
        x.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", g)

    @property
    def dx(self) -> float:
        return float((self.x[-1] - self.x[0]) / (len(self.x) - 1))

    def shifted(self, steps: int) -> "LineFunction":
        """Translate by whole grid steps (support must stay inside)."""
        g = np.roll(self.values, steps)
        if steps > 0 and np.any(self.values[-steps:] != 0.0):
            raise ParameterError("shift pushes support off the grid")
        if steps < 0 and np.any(self.values[:-steps] != 0.0):
            raise ParameterError("shift pushes support off the grid")
        return LineFunction(self.x, g)


def plateau_function(L: float, dx: float, x_max: float, taper: float = 1.0) -> LineFunction:
    """Plateau of value 1 on [-L, L] with linear tapers of the given width."""
    if L <= 0 or taper <= 0:
        raise ParameterError("plateau needs positive L and taper")
    if x_max <= L + taper:
        raise ParameterError("support exceeds grid: need x_max > L + taper")
    n = int(round(2 * x_max / dx)) + 1
    x = np.linspace(-x_max, x_max, n)
    ax = np.abs(x)
    g = np.clip((L + taper - ax) / taper, 0.0, 1.0)
    g[ax >= L + taper] = 0.0
    return LineFunction(x, g)


@dataclass(frozen=True)
class HalfplaneForm:
    form_value: float
    norm_sq: float
    rayleigh: float


def halfplane_form(g: LineFunction) -> HalfplaneForm:
    """Quadratic form c_1 ||g||^2 + (1/2pi) iint (g(x)-g(y))^2 / sinh^2(x-y).

    The diagonal cells of the double Riemann sum carry the finite limit
    g'(x)^2 of the symmetrized integrand (central differences), so no
    principal-value machinery is needed.
    """
    vals = g.values
    dx = g.dx
    norm_sq = float(np.sum(vals**2) * dx)
    if norm_sq == 0.0:
        raise ParameterError("zero function has no Rayleigh quotient")
    n = len(vals)
    off = 0.0
    for d in range(1, n):
        diff = vals[d:] - vals[:-d]
        ssum = float(diff @ diff)
        if ssum == 0.0:
            continue
        off += ssum / math.sinh(d * dx) ** 2
    off *= 2.0 * dx * dx  # ordered pairs (i, j), i != j

    padded = np.concatenate(([0.0], vals, [0.0]))
    deriv = (padded[2:] - padded[:-2]) / (2.0 * dx)
    diag = float(deriv @ deriv) * dx * dx

    c1 = c_n(1)
    form = c1 * norm_sq + (off + diag) / (2.0 * math.pi)
    return HalfplaneForm(form, norm_sq, form / norm_sq)


def halfplane_bottom_estimate(
    L_values: Sequence[float], dx: float, x_max: float, taper: float = 1.0
) -> list[tuple[float, float]]:
    """Rayleigh quotients of the widening plateau family, one row per L."""
    if not len(L_values):
        raise ParameterError("L_values must be nonempty")
    rows = []
    for L in L_values:
        form = halfplane_form(plateau_function(L, dx, x_max, taper))
        rows.append((float(L), form.rayleigh))
    return rows


# ---------------------------------------------------------------------------
# radial harmonic profiles of the half-space
# ---------------------------------------------------------------------------

def save_rayleigh_csv(path, rows: Sequence[tuple[float, float]]) -> None:
    """Write (L, rayleigh) table rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["L", "rayleigh"])
        for L, r in rows:
            writer.writerow([repr(float(L)), repr(float(r))])


def save_collar_json(path, bound: CollarBound) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "l0": bound.l0,
                "rho0": bound.rho0,
                "rho1": bound.rho1,
                "n_boundaries": bound.n_boundaries,
                "energy_phi": bound.e_phi,
                "energy_psi_bound": bound.e_psi_bound,
                "boundary_norm_phi": bound.boundary_norm_phi,
                "boundary_norm_psi": bound.boundary_norm_psi,
                "bound_case1": bound.bound_case1,
                "bound_case2": bound.bound_case2,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")


@dataclass(frozen=True)
class PhiProfile:
    """Samples of phi_n(r) = 1 - c_n * int_0^r sech^n, with derivative."""

    n: int
    r: np.ndarray
    values: np.ndarray
    derivative: np.ndarray


def phi_n_profile(n: int, r_grid: Sequence[float]) -> PhiProfile:
    """Sampled harmonic profile decaying from 1 at the boundary of the
    half-space; derivative samples are the analytic -c_n sech^n r."""
    if int(n) != n or n < 1:
        raise ParameterError(f"n must be an integer >= 1, got {n}")
    r = np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or len(r) == 0 or np.any(np.diff(r) < 0) or r[0] < 0:
        raise ParameterError("r_grid must be ascending and nonnegative")
    cn = c_n(n)
    vals = np.empty(len(r))
    acc = 0.0
    prev = 0.0
    for i, ri in enumerate(r):
        if ri > prev:
            seg, _ = integrate.quad(
                lambda s: math.cosh(s) ** (-float(n)), prev, ri, epsabs=1e-14, limit=200
            )
            acc += seg
            prev = ri
        vals[i] = 1.0 - cn * acc
    deriv = -cn / np.cosh(r) ** n
    return PhiProfile(int(n), r, vals, deriv)
