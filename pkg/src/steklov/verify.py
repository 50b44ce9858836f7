"""Scenario orchestration: run theorem checks end to end, emit JSON reports.

A scenario is a TOML config naming one geometry, a strictly refining ladder of
resolution multipliers, and a set of checks.  Each check produces exactly one
record; module failures are recorded, not raised, so one bad check does not
kill the run.  Reports are deterministic given identical config and build,
except for wall times.
"""
from __future__ import annotations

import hashlib
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import capacity, fem, hyperbolic, mesh as meshmod, spectral
from .errors import ConfigError, ParameterError, SteklovError
from .mesh import INTERIOR

SCHEMA_VERSION = "1"

PASS = "PASS"
WARN = "WARN"
FAIL = "FAIL"

CHECK_NAMES = (
    "STEKLOV_SPECTRUM",
    "GAMMA",
    "SANDWICH",
    "MIXED_SANDWICH",
    "LEVELSET",
    "EXHAUSTION",
    "COLLAR",
    "HALFPLANE",
    "WEYL",
)

_GEOMETRY_KEYS = {
    "disk": {"n_radial", "n_angular"},
    "annulus": {"r_in", "r_out", "n_r", "n_a"},
    "rectangle": {"w", "h", "nx", "ny", "dirichlet_side"},
    "collar": {"l0", "rho_max", "n_rho", "n_t"},
    "poincare_halfdisk": {"r_trunc", "resolution"},
}

_PARAM_KEYS = {
    "steklov_k",
    "gamma_step",
    "weyl_sigmas",
    "levelset_fields",
    "levelset_levels",
    "levelset_random_count",
    "levelset_seed",
    "exhaustion_radii",
    "collar_l0_small",
    "collar_samples",
    "halfplane_l_values",
    "halfplane_dx",
    "halfplane_x_max",
    "fault_scale_gamma",
}


@dataclass(frozen=True)
class Tolerances:
    tau_thm: float = 0.15
    tau_cap: float = 0.05
    tau_mono: float = 1e-6


@dataclass
class Scenario:
    """One geometry, a refinement ladder, and the checks to run on it."""

    name: str
    geometry: dict
    ladder: list[int]
    checks: list[str]
    tolerances: Tolerances = field(default_factory=Tolerances)
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.checks:
            raise ConfigError("scenario must request at least one check")
        for c in self.checks:
            if c not in CHECK_NAMES:
                raise ConfigError(f"unknown check {c!r}; expected one of {CHECK_NAMES}")
        if not self.ladder:
            raise ConfigError("resolution ladder must be nonempty")
        if any(int(x) != x or x < 1 for x in self.ladder):
            raise ConfigError("ladder entries must be positive integers")
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ConfigError("resolution ladder must be strictly refining")
        gtype = self.geometry.get("type")
        if gtype not in _GEOMETRY_KEYS:
            raise ConfigError(f"unknown geometry type {gtype!r}")
        extra = set(self.geometry) - _GEOMETRY_KEYS[gtype] - {"type"}
        if extra:
            raise ConfigError(f"unknown geometry keys for {gtype}: {sorted(extra)}")
        extra = set(self.params) - _PARAM_KEYS
        if extra:
            raise ConfigError(f"unknown params keys: {sorted(extra)}")


def load_scenario(path) -> Scenario:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    allowed = {"name", "checks", "ladder", "geometry", "tolerances", "params"}
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    for key in ("name", "checks", "ladder", "geometry"):
        if key not in doc:
            raise ConfigError(f"missing config key {key!r}")
    tol_doc = doc.get("tolerances", {})
    extra = set(tol_doc) - {"tau_thm", "tau_cap", "tau_mono"}
    if extra:
        raise ConfigError(f"unknown tolerance keys: {sorted(extra)}")
    return Scenario(
        name=str(doc["name"]),
        geometry=dict(doc["geometry"]),
        ladder=[int(x) for x in doc["ladder"]],
        checks=[str(c) for c in doc["checks"]],
        tolerances=Tolerances(**tol_doc),
        params=dict(doc.get("params", {})),
    )


def build_mesh(geometry: dict, level: int = 1) -> meshmod.Mesh:
    """Instantiate the scenario geometry at one ladder level (count multiplier)."""
    g = dict(geometry)
    gtype = g.pop("type")
    if gtype == "disk":
        return meshmod.disk_mesh(
            int(g.get("n_radial", 8)) * level, int(g.get("n_angular", 32)) * level
        )
    if gtype == "annulus":
        return meshmod.annulus_mesh(
            float(g["r_in"]),
            float(g["r_out"]),
            int(g.get("n_r", 8)) * level,
            int(g.get("n_a", 32)) * level,
        )
    if gtype == "rectangle":
        m = meshmod.rectangle_mesh(
            float(g.get("w", 1.0)),
            float(g.get("h", 1.0)),
            int(g.get("nx", 8)) * level,
            int(g.get("ny", 8)) * level,
        )
        side = g.get("dirichlet_side")
        if side:
            arc = meshmod.rectangle_side_arc(
                m, int(g.get("nx", 8)) * level, int(g.get("ny", 8)) * level, side
            )
            m = meshmod.relabel(m, [arc], INTERIOR)
        return m
    if gtype == "collar":
        l0 = float(g["l0"])
        rho_max = float(g.get("rho_max", hyperbolic.collar_width(l0)))
        return meshmod.collar_mesh(
            l0, rho_max, int(g.get("n_rho", 8)) * level, int(g.get("n_t", 24)) * level
        )
    if gtype == "poincare_halfdisk":
        return meshmod.poincare_halfdisk_mesh(
            float(g["r_trunc"]), int(g.get("resolution", 6)) * level
        )
    raise ConfigError(f"unknown geometry type {gtype!r}")


def check_sandwich(sigma1: float, gamma: float, tau_thm: float) -> str:
    """Two-sided verdict: upper bound exact, lower bound tau-relaxed.

    PASS iff sigma1 <= 2 gamma and sigma1 >= gamma (1 - tau)/4; WARN when only
    the relaxed lower bound fails but within twice the tolerance.
    """
    if not (sigma1 > 0 and gamma > 0):
        raise ParameterError("check_sandwich requires positive sigma1 and gamma")
    if sigma1 > 2.0 * gamma:
        return FAIL
    if sigma1 >= 0.25 * gamma * (1.0 - tau_thm):
        return PASS
    if sigma1 >= 0.25 * gamma * (1.0 - 2.0 * tau_thm):
        return WARN
    return FAIL


@dataclass
class CheckRecord:
    name: str
    inputs_digest: str
    values: dict
    status: str
    message: str
    wall_time: float


@dataclass
class Report:
    schema_version: str
    scenario_name: str
    environment: dict
    config: dict
    records: list[CheckRecord]

    @property
    def worst_status(self) -> str:
        order = {PASS: 0, WARN: 1, FAIL: 2}
        worst = PASS
        for rec in self.records:
            if order[rec.status] > order[worst]:
                worst = rec.status
        return worst

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "scenario_name": self.scenario_name,
            "environment": self.environment,
            "config": self.config,
            "records": [
                {
                    "name": r.name,
                    "inputs_digest": r.inputs_digest,
                    "values": r.values,
                    "status": r.status,
                    "message": r.message,
                    "wall_time": r.wall_time,
                }
                for r in self.records
            ],
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def save_tables_csv(report: Report, report_path) -> list[str]:
    """Write CSV tables of table-valued checks next to the report file."""
    import csv
    from pathlib import Path

    base = Path(report_path)
    written: list[str] = []
    for rec in report.records:
        rows: list[list] = []
        if rec.name == "EXHAUSTION" and "xi1_table" in rec.values:
            radii = rec.values["radii"]
            rows.append(["level", "radius", "xi1", "cap_F"])
            for level, xi_row in rec.values["xi1_table"].items():
                cap_row = rec.values["cap_table"][level]
                for r, xi, cap in zip(radii, xi_row, cap_row):
                    rows.append([level, r, repr(xi), repr(cap)])
        elif rec.name == "HALFPLANE" and "rows" in rec.values:
            rows.append(["L", "rayleigh"])
            rows += [[L, repr(v)] for L, v in rec.values["rows"]]
        elif rec.name == "STEKLOV_SPECTRUM":
            rows.append(["level", "index", "eigenvalue"])
            for level, vals in rec.values.items():
                for i, ev in enumerate(vals["eigenvalues"]):
                    rows.append([level, i, repr(ev)])
        if not rows:
            continue
        path = base.with_name(f"{base.stem}_{rec.name.lower()}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(rows)
        written.append(str(path))
    return written


def _environment_stamp() -> dict:
    import scipy

    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def _digest(scenario: Scenario, check: str) -> str:
    doc = {
        "check": check,
        "geometry": scenario.geometry,
        "ladder": scenario.ladder,
        "tolerances": {
            "tau_thm": scenario.tolerances.tau_thm,
            "tau_cap": scenario.tolerances.tau_cap,
            "tau_mono": scenario.tolerances.tau_mono,
        },
        "params": scenario.params,
    }
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _spectrum_health(res: spectral.SpectrumResult) -> tuple[bool, dict]:
    ok = (
        float(res.residuals.max()) <= 1e-8
        and res.ortho_error <= 1e-8
        and float(res.eigenvalues.min()) >= -1e-9
        and bool(np.all(np.diff(res.eigenvalues) >= -1e-12))
    )
    return ok, {
        "max_residual": float(res.residuals.max()),
        "ortho_error": res.ortho_error,
        "min_eigenvalue": float(res.eigenvalues.min()),
    }


def _run_steklov(sc: Scenario) -> tuple[dict, str, str]:
    k = int(sc.params.get("steklov_k", 6))
    values: dict = {}
    ok = True
    for level in sc.ladder:
        m = build_mesh(sc.geometry, level)
        res = spectral.steklov_spectrum(m, k)
        healthy, health = _spectrum_health(res)
        ok = ok and healthy
        values[f"level_{level}"] = {
            "eigenvalues": [float(x) for x in res.eigenvalues],
            **health,
        }
    return values, PASS if ok else FAIL, "" if ok else "spectrum invariants violated"


def _run_weyl(sc: Scenario) -> tuple[dict, str, str]:
    sigmas = [float(s) for s in sc.params.get("weyl_sigmas", [2, 4, 6, 8, 10])]
    m = build_mesh(sc.geometry, sc.ladder[-1])
    blen = meshmod.boundary_length(m)
    k = min(spectral.MAX_EIGENPAIRS, int(math.ceil(blen * max(sigmas) / math.pi)) + 6)
    res = spectral.steklov_spectrum(m, k)
    counts = spectral.eigenvalue_counts(res.eigenvalues, sigmas)
    targets = [blen * s / math.pi for s in sigmas]
    devs = [abs(c - t) for c, t in zip(counts, targets)]
    ok = all(d <= 2.0 for d in devs)
    values = {
        "boundary_length": blen,
        "sigmas": sigmas,
        "counts": counts,
        "targets": targets,
        "max_deviation": max(devs),
    }
    return values, PASS if ok else FAIL, "" if ok else "Weyl count deviates by more than 2"


def _run_gamma(sc: Scenario) -> tuple[dict, str, str]:
    m = build_mesh(sc.geometry, sc.ladder[-1])
    step = int(sc.params.get("gamma_step", 4))
    est = capacity.gamma_search(m, coarse_step=step)
    recomputed = next(t["value"] for t in est.trace if t["stage"] == "recompute")
    gap = abs(est.value - recomputed) / max(est.value, 1e-30)
    ok = est.value > 0 and gap <= capacity.RECOMPUTE_TOL
    values = {
        "value": est.value,
        "recomputed": recomputed,
        "recompute_gap": gap,
        "witness_A": [vars(a) for a in est.witness_a],
        "witness_B": (
            est.witness_b
            if isinstance(est.witness_b, str)
            else [vars(a) for a in est.witness_b]
        ),
        "candidates_evaluated": est.candidates_evaluated,
    }
    return values, PASS if ok else FAIL, "" if ok else "witness recomputation mismatch"


def _run_sandwich(sc: Scenario) -> tuple[dict, str, str]:
    step = int(sc.params.get("gamma_step", 4))
    fault = float(sc.params.get("fault_scale_gamma", 1.0))
    values: dict = {}
    verdict = FAIL
    for level in sc.ladder:
        m = build_mesh(sc.geometry, level)
        sigma1 = float(spectral.steklov_spectrum(m, 1).eigenvalues[1])
        gamma = capacity.gamma_search(m, coarse_step=step).value * fault
        verdict = check_sandwich(sigma1, gamma, sc.tolerances.tau_thm)
        values[f"level_{level}"] = {
            "sigma1": sigma1,
            "gamma": gamma,
            "ratio": sigma1 / gamma,
            "verdict": verdict,
        }
    values["bounds"] = [0.25, 2.0]
    msg = "" if verdict == PASS else f"finest-level verdict {verdict}"
    return values, verdict, msg


def _run_mixed_sandwich(sc: Scenario) -> tuple[dict, str, str]:
    step = int(sc.params.get("gamma_step", 4))
    fault = float(sc.params.get("fault_scale_gamma", 1.0))
    values: dict = {}
    verdict = FAIL
    for level in sc.ladder:
        m = build_mesh(sc.geometry, level)
        if not m.has_label(INTERIOR):
            raise ParameterError(
                "MIXED_SANDWICH needs a geometry with INTERIOR boundary "
                "(poincare_halfdisk or rectangle with dirichlet_side)"
            )
        xi1 = float(spectral.mixed_spectrum(m, INTERIOR, 1).eigenvalues[0])
        gamma = capacity.gamma_search(m, mode=capacity.MIXED, coarse_step=step).value
        gamma *= fault
        verdict = check_sandwich(xi1, gamma, sc.tolerances.tau_thm)
        values[f"level_{level}"] = {
            "xi1": xi1,
            "gamma_Y": gamma,
            "ratio": xi1 / gamma,
            "verdict": verdict,
        }
    values["bounds"] = [0.25, 2.0]
    msg = "" if verdict == PASS else f"finest-level verdict {verdict}"
    return values, verdict, msg


def _levelset_fields(sc: Scenario, m: meshmod.Mesh) -> list[tuple[str, np.ndarray]]:
    kinds = sc.params.get("levelset_fields", ["sigma1", "ramp", "random"])
    count = int(sc.params.get("levelset_random_count", 20))
    seed = int(sc.params.get("levelset_seed", 7))
    kop = fem.assemble_stiffness(m)
    out: list[tuple[str, np.ndarray]] = []
    for kind in kinds:
        if kind == "sigma1":
            out.append(("sigma1", spectral.steklov_spectrum(m, 1).eigenfields[1]))
        elif kind == "ramp":
            x = m.vertices[:, 0]
            out.append(("ramp", x - 0.5 * (x.min() + x.max())))
        elif kind == "random":
            rng = np.random.default_rng(seed)
            bverts = m.boundary_vertex_ids
            th = np.arctan2(m.vertices[bverts, 1], m.vertices[bverts, 0])
            for i in range(count):
                f = np.zeros(len(bverts))
                for deg in range(1, 5):
                    a, b = rng.normal(size=2) / deg
                    f += a * np.cos(deg * th) + b * np.sin(deg * th)
                u = fem.harmonic_extension(m, dict(zip(map(int, bverts), f)), kop)
                out.append((f"random_{i}", u))
        else:
            raise ConfigError(f"unknown levelset field kind {kind!r}")
    return out


def _run_levelset(sc: Scenario) -> tuple[dict, str, str]:
    n_levels = int(sc.params.get("levelset_levels", 32))
    m = build_mesh(sc.geometry, sc.ladder[-1])
    kop = fem.assemble_stiffness(m)
    values: dict = {}
    ok = True
    for label, u in _levelset_fields(sc, m):
        if u.max() <= 0:
            u = -u
        t = u.max() * (np.arange(n_levels) + 1) / (n_levels + 1)
        rep = capacity.levelset_capacity_check(
            m, u, t, tau_cap=sc.tolerances.tau_cap, stiffness=kop
        )
        ok = ok and rep.passed
        values[label] = {"lhs": rep.lhs, "rhs": rep.rhs, "ratio": rep.ratio,
                         "passed": rep.passed}
    return values, PASS if ok else FAIL, "" if ok else "level-set inequality violated"


def _run_exhaustion(sc: Scenario) -> tuple[dict, str, str]:
    if sc.geometry.get("type") != "poincare_halfdisk":
        raise ParameterError("EXHAUSTION requires the poincare_halfdisk geometry")
    radii = [float(r) for r in sc.params.get("exhaustion_radii", [0.5, 0.7, 0.9, 0.99, 0.999])]
    base = int(sc.geometry.get("resolution", 6))
    bottom = hyperbolic.c_n(1)
    values: dict = {"radii": radii, "xi1_table": {}, "cap_table": {}}
    warn = False
    ok = True
    for level in sc.ladder:
        meshes = [
            meshmod.poincare_halfdisk_mesh(r, base * level, name=f"halfdisk_{r}")
            for r in radii
        ]
        ex = spectral.exhaustion_xi1(meshes, sc.tolerances.tau_mono)
        caps = []
        for m in meshes:
            arc = diameter_window_arc(m, 1.0)
            caps.append(capacity.capacity_compact_support(m, arc).value)
        values["xi1_table"][f"level_{level}"] = ex.values
        values["cap_table"][f"level_{level}"] = caps
        if level == sc.ladder[-1]:
            warn = warn or not ex.monotone
            cap_mono = all(
                caps[i + 1] <= caps[i] * (1 + sc.tolerances.tau_mono)
                for i in range(len(caps) - 1)
            )
            warn = warn or not cap_mono
            ok = ok and min(ex.values) >= bottom - 1e-3
            ok = ok and ex.values[-1] <= bottom * 1.05
            values["finest"] = {
                "xi1_monotone": ex.monotone,
                "cap_monotone": cap_mono,
                "min_xi1": min(ex.values),
                "bottom": bottom,
                "final_gap_rel": ex.values[-1] / bottom - 1.0,
            }
    if not ok:
        return values, FAIL, "exhaustion limit criteria violated"
    if warn:
        return values, WARN, "monotonicity violated within discretization tolerance"
    return values, PASS, ""


def diameter_window_arc(m: meshmod.Mesh, v_half_width: float) -> meshmod.BoundaryArc:
    """EXTERIOR arc of the half-disk diameter with arclength |v| <= width."""
    xcut = math.tanh(0.5 * v_half_width)
    loop = m.boundary_loops[0]
    xs = [m.vertices[v, 0] for v in loop.vertices]
    inside = [i for i, x in enumerate(xs) if abs(x) <= xcut]
    if len(inside) < 2:
        raise ParameterError("diameter window too narrow for this mesh")
    return meshmod.BoundaryArc(0, inside[0], inside[-1])


def _run_collar(sc: Scenario) -> tuple[dict, str, str]:
    l0_small = float(sc.params.get("collar_l0_small", 1e-4))
    samples = int(sc.params.get("collar_samples", 100))
    cb = hyperbolic.collar_bound(l0_small, rho1=l0_small)
    product = l0_small * cb.bound_case1
    window_ok = 4.0 / 3.0 <= product <= 4.0 / 3.0 * 1.02
    l0s = np.linspace(0.01, 0.99, samples)
    case2 = [hyperbolic.collar_bound(float(x)).bound_case2 for x in l0s]
    cap = math.e + 1.0 / math.e
    case2_ok = max(case2) < cap
    values = {
        "l0_small": l0_small,
        "l0_times_case1": product,
        "window": [4.0 / 3.0, 4.0 / 3.0 * 1.02],
        "case2_max": max(case2),
        "case2_cap": cap,
    }
    ok = window_ok and case2_ok
    return values, PASS if ok else FAIL, "" if ok else "collar bound outside window"


def _run_halfplane(sc: Scenario) -> tuple[dict, str, str]:
    l_values = [float(x) for x in sc.params.get("halfplane_l_values", [5, 10, 25, 50])]
    dx = float(sc.params.get("halfplane_dx", 0.05))
    x_max = float(sc.params.get("halfplane_x_max", 60.0))
    rows = hyperbolic.halfplane_bottom_estimate(l_values, dx, x_max)
    rayleighs = [r for _, r in rows]
    c1 = hyperbolic.c_n(1)
    decreasing = all(b < a for a, b in zip(rayleighs, rayleighs[1:]))
    above = all(r >= c1 - 1e-12 for r in rayleighs)
    close = c1 <= min(rayleighs) <= c1 * 1.05
    values = {
        "rows": [[L, r] for L, r in rows],
        "bottom": c1,
        "min_rayleigh": min(rayleighs),
        "strictly_decreasing": decreasing,
    }
    ok = decreasing and above and close
    return values, PASS if ok else FAIL, "" if ok else "half-plane family criteria violated"


_CHECK_RUNNERS = {
    "STEKLOV_SPECTRUM": _run_steklov,
    "GAMMA": _run_gamma,
    "SANDWICH": _run_sandwich,
    "MIXED_SANDWICH": _run_mixed_sandwich,
    "LEVELSET": _run_levelset,
    "EXHAUSTION": _run_exhaustion,
    "COLLAR": _run_collar,
    "HALFPLANE": _run_halfplane,
    "WEYL": _run_weyl,
}


def run_scenario(scenario: Scenario) -> Report:
    """Run every requested check, one record per check, failures recorded."""
    records = []
    for check in scenario.checks:
        start = time.perf_counter()
        try:
            values, status, message = _CHECK_RUNNERS[check](scenario)
        except SteklovError as exc:
            values, status, message = {}, FAIL, f"{type(exc).__name__}: {exc}"
        wall = time.perf_counter() - start
        records.append(
            CheckRecord(
                name=check,
                inputs_digest=_digest(scenario, check),
                values=values,
                status=status,
                message=message,
                wall_time=wall,
            )
        )
    config_echo = {
        "name": scenario.name,
        "geometry": scenario.geometry,
        "ladder": scenario.ladder,
        "checks": scenario.checks,
        "tolerances": {
            "tau_thm": scenario.tolerances.tau_thm,
            "tau_cap": scenario.tolerances.tau_cap,
            "tau_mono": scenario.tolerances.tau_mono,
        },
        "params": scenario.params,
    }
    return Report(
        schema_version=SCHEMA_VERSION,
        scenario_name=scenario.name,
        environment=_environment_stamp(),
        config=config_echo,
        records=records,
    )
