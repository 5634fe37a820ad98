"""Experiment configuration, sweeps and file output.

A config is one JSON document::

    {"profile": "desk",
     "scenario": {"pt_A2": 0.01, "p0_W": 1e-5, ...},
     "sweep": {"variable": "pt_A2", "values": [0.005, 0.01]},
     "schemes": ["H-IDET", "FD-IDET", "MF", "UPPER"],
     "output_dir": "out", "seed": 0, "tolerances": {"outer_max_iter": 30}}

Scenario fields not given in the config come from the profile.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields as dc_fields
from pathlib import Path

import numpy as np

from .baselines import fd_idet_solve, mf_solve, upper_bound_rate
from .energy import EhCircuit, ReceiverGeometry, eh_output
from .errors import ConfigError, HolobeamError
from .focusing import (beam_pattern_scan, closed_form_power, export_beam_map, field_at,
                       matched_beam, optimal_eu_combiner)
from .geometry_em import (MediumParams, fresnel_lower_bound, make_aperture, sample_fresnel_channel,
                          sample_user_channel)
from .idet_optimizer import Scenario, SolveReport, SolverOptions, build_channels, run_algorithm1
from .wavenumber import FourierBasisSet, make_basis

log = logging.getLogger(__name__)

SCHEMES = ("H-IDET", "FD-IDET", "FD", "MF", "UPPER", "RI-BCD", "RI-SCA")
SWEEP_VARIABLES = ("pt_A2", "p0_W", "area_m2", "distance_m", "basis_n")

DESK = {
    "frequency_Hz": 10e9,
    "z0_ohm": 376.73,
    "z_ohm": 25.0,
    "aperture_lx_m": 0.3,
    "aperture_ly_m": 0.3,
    "grid_nx": 32,
    "grid_ny": 32,
    "basis_n": 5,
    "du_positions_m": [[5, 5, 30], [-5, 5, 30]],
    "eu_positions_m": [[1, 1, 1]],
    "pt_A2": 0.01,
    "p0_W": 1e-5,
    "sigma2_V2m2": 5.6e-3,
    "eh_a_per_W": 1500.0,
    "eh_b_W": 0.0022,
    "eh_m_W": 3.9e-3,
    "receiver_area_m2": None,
    "incidence_rad": 0.0,
    "fd_samples_per_pitch": 9,
    "mf_equal_power": False,
}

FULL = dict(DESK, **{
    "grid_nx": 64,
    "grid_ny": 64,
    "basis_n": None,
    "du_positions_m": [[5, 5, 30], [-5, 5, 30], [5, -5, 30], [-5, -5, 30]],
    "eu_positions_m": [[1, 1, 1], [-1, 1, 1]],
    "p0_W": 1e-3,
})

PROFILES = {"desk": DESK, "full": FULL}

SINGLE_EU = {
    "frequency_Hz": 10e9,
    "z0_ohm": 376.73,
    "z_ohm": 25.0,
    "aperture_lx_m": 1.5,
    "aperture_ly_m": 0.5,
    "grid_nx": 60,
    "grid_ny": 20,
    "pt_A2": 0.003,
    "receiver_area_m2": None,
    "incidence_rad": 0.0,
    "eh_a_per_W": 1500.0,
    "eh_b_W": 0.0022,
    "eh_m_W": 3.9e-3,
    "foci_m": [[0, 0, 4], [0, 0, 8], [0, 0, 25]],
    "pattern_x_m": [-3.0, 3.0, 31],
    "pattern_z_m": [1.0, 50.0, 50],
    "fresnel_distances_m": [0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0],
    "focus_distances_m": [2.0, 4.0, 8.0],
    "eval_distances_m": [1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0],
}


# ---------------------------------------------------------------------------
# config handling

def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _number(block: dict, key: str, where: str, positive=False, allow_none=False):
    v = block[key]
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key}: expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(f"{where}.{key}: must be positive, got {v!r}")
    return float(v)


def _points(block: dict, key: str, where: str) -> np.ndarray:
    v = block[key]
    try:
        arr = np.asarray(v, dtype=float).reshape(-1, 3) if len(v) else np.zeros((0, 3))
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a list of [x, y, z] points") from None
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}.{key}: non-finite coordinate")
    return arr


def scenario_block(cfg: dict, profile: str | None = None) -> dict:
    profile = profile or cfg.get("profile", "desk")
    if profile not in PROFILES:
        raise ConfigError(f"profile: unknown profile {profile!r} (expected one of {sorted(PROFILES)})")
    block = copy.deepcopy(PROFILES[profile])
    given = cfg.get("scenario", {})
    if not isinstance(given, dict):
        raise ConfigError("scenario: expected an object")
    unknown = set(given) - set(block)
    if unknown:
        raise ConfigError(f"scenario: unknown field(s) {sorted(unknown)}")
    block.update(given)
    return block


def grid_for_basis(block: dict, basis: FourierBasisSet) -> tuple[int, int]:
    """Keep the profile's sample density but never go below the basis minimum."""
    nx = max(int(block["grid_nx"]), 2 * (2 * basis.nx + 1))
    ny = max(int(block["grid_ny"]), 2 * (2 * basis.ny + 1))
    return nx, ny


def build_scenario(block: dict) -> Scenario:
    w = "scenario"
    f = _number(block, "frequency_Hz", w, positive=True)
    medium = MediumParams(f, _number(block, "z0_ohm", w, True), _number(block, "z_ohm", w, True))
    lx = _number(block, "aperture_lx_m", w, True)
    ly = _number(block, "aperture_ly_m", w, True)
    n = block["basis_n"]
    if n is not None and (isinstance(n, bool) or not isinstance(n, int) or n < 0):
        raise ConfigError(f"{w}.basis_n: expected a non-negative integer or null, got {n!r}")
    basis = make_basis(lx, ly, medium.wavelength, n)
    for key in ("grid_nx", "grid_ny"):
        if isinstance(block[key], bool) or not isinstance(block[key], int) or block[key] < 1:
            raise ConfigError(f"{w}.{key}: expected a positive integer, got {block[key]!r}")
    nx, ny = grid_for_basis(block, basis)
    aperture = make_aperture(lx, ly, nx, ny)
    circuit = EhCircuit(_number(block, "eh_a_per_W", w, True), _number(block, "eh_b_W", w),
                        _number(block, "eh_m_W", w, True))
    phi = _number(block, "incidence_rad", w)
    area = _number(block, "receiver_area_m2", w, positive=True, allow_none=True)
    geom = ReceiverGeometry.isotropic(medium, phi) if area is None else ReceiverGeometry(area, phi, medium.z)
    try:
        return Scenario(aperture, medium, _points(block, "du_positions_m", w), _points(block, "eu_positions_m", w),
                        _number(block, "pt_A2", w, True), _number(block, "p0_W", w),
                        _number(block, "sigma2_V2m2", w, True), circuit, geom, basis)
    except HolobeamError as exc:
        raise ConfigError(f"{w}: {exc}") from None


def apply_sweep(block: dict, variable: str, value: float) -> dict:
    b = dict(block)
    if variable in ("pt_A2", "p0_W"):
        b[variable] = float(value)
    elif variable == "area_m2":
        side = math.sqrt(value)
        scale = side / b["aperture_lx_m"]
        b["grid_nx"] = max(1, round(b["grid_nx"] * scale))
        b["grid_ny"] = max(1, round(b["grid_ny"] * side / b["aperture_ly_m"]))
        b["aperture_lx_m"] = b["aperture_ly_m"] = side
        b["basis_n"] = None
    elif variable == "distance_m":
        eu = np.asarray(b["eu_positions_m"], dtype=float).reshape(-1, 3)
        eu = eu / np.linalg.norm(eu, axis=1)[:, None] * value
        b["eu_positions_m"] = eu.tolist()
    elif variable == "basis_n":
        b["basis_n"] = int(value)
    else:
        raise ConfigError(f"sweep.variable: unknown variable {variable!r}")
    return b


def parse_experiment(cfg: dict, profile: str | None = None, schemes=None, seed=None, out=None) -> dict:
    block = scenario_block(cfg, profile)
    sweep = cfg.get("sweep", {"variable": "pt_A2", "values": [block["pt_A2"]]})
    if not isinstance(sweep, dict) or "variable" not in sweep or "values" not in sweep:
        raise ConfigError("sweep: expected an object with 'variable' and 'values'")
    var = sweep["variable"]
    if var not in SWEEP_VARIABLES:
        raise ConfigError(f"sweep.variable: {var!r} is not one of {SWEEP_VARIABLES}")
    values = sweep["values"]
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values: expected a nonempty list")
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"sweep.values[{i}]: expected a number, got {v!r}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep.values: grid must be strictly increasing")
    schemes = list(schemes or cfg.get("schemes", ["H-IDET", "FD-IDET", "MF", "UPPER"]))
    if not schemes:
        raise ConfigError("schemes: list must be nonempty")
    bad = [s for s in schemes if s not in SCHEMES]
    if bad:
        raise ConfigError(f"schemes: unknown scheme(s) {bad}; expected from {SCHEMES}")
    tol = cfg.get("tolerances", {})
    names = {f.name for f in dc_fields(SolverOptions)}
    if not isinstance(tol, dict) or set(tol) - names:
        raise ConfigError(f"tolerances: unknown field(s) {sorted(set(tol) - names) if isinstance(tol, dict) else tol}")
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    exp = {"scenario": block, "variable": var, "values": [float(v) for v in values], "schemes": schemes,
           "tolerances": tol, "seed": seed, "output_dir": str(out or cfg.get("output_dir", "results")),
           "workers": int(cfg.get("workers", 1))}
    build_scenario(block)  # validate once up front
    return exp


# ---------------------------------------------------------------------------
# sweeps

def _options(exp: dict, **extra) -> SolverOptions:
    return SolverOptions(**{**exp["tolerances"], "seed": exp["seed"], **extra})


def solve_point(exp: dict, value: float, schemes) -> list[tuple[str, SolveReport, float]]:
    """Run the requested schemes at one sweep value; infeasibility becomes a status."""
    block = apply_sweep(exp["scenario"], exp["variable"], value)
    scenario = build_scenario(block)
    echo = {"scenario": block, "sweep_var": exp["variable"], "sweep_value": value}
    out = []
    chs = None
    h_report = None
    for scheme in schemes:
        t0 = time.perf_counter()
        if scheme in ("H-IDET", "MF", "UPPER", "RI-BCD", "RI-SCA") and chs is None:
            chs = build_channels(scenario)
        if scheme in ("H-IDET", "UPPER"):
            if h_report is None:
                h_report = run_algorithm1(chs, scenario.pt, scenario.p0_prime, scenario.sigma2, scenario.geom,
                                          scenario.circuit, _options(exp), "H-IDET", echo)
            rep = h_report
            if scheme == "UPPER":
                rep = copy.copy(h_report)
                rep.scheme = "UPPER"
                rep.r_sum = upper_bound_rate(h_report, chs, scenario.sigma2) if h_report.status != "infeasible" else 0.0
        elif scheme in ("RI-BCD", "RI-SCA"):
            mode = "global" if scheme == "RI-BCD" else "sca"
            rep = run_algorithm1(chs, scenario.pt, scenario.p0_prime, scenario.sigma2, scenario.geom,
                                 scenario.circuit, _options(exp, random_init=mode), scheme, echo)
        elif scheme in ("FD", "FD-IDET"):
            rep = fd_idet_solve(scenario, scheme, _options(exp),
                                per_half_wavelength=int(block["fd_samples_per_pitch"]), config=echo)
        else:
            rep = mf_solve(scenario, chs, bool(block["mf_equal_power"]), echo)
        out.append((scheme, rep, time.perf_counter() - t0))
    return out


def result_header(k: int, l: int) -> list[str]:
    cols = ["sweep_var", "sweep_value", "scheme", "r_sum_bits"]
    cols += [f"du{i + 1}_rate_bits" for i in range(k)]
    cols += [f"eu{i + 1}_harvest_W" for i in range(l)]
    cols += [f"eu{i + 1}_harvest_unprojected_W" for i in range(l)]
    return cols + ["iterations", "status", "seconds"]


def result_row(var, value, rep: SolveReport, seconds: float, k: int, l: int) -> list:
    rates = list(rep.du_rates) + [float("nan")] * (k - len(rep.du_rates))
    return ([var, repr(float(value)), rep.scheme, f"{rep.r_sum:.10g}"]
            + [f"{r:.10g}" for r in rates[:k]]
            + [f"{x:.10g}" for x in rep.eu_harvest_projected]
            + [f"{x:.10g}" for x in rep.eu_harvest_unprojected]
            + [rep.outer_iterations, rep.status, f"{seconds:.3f}"])


def _done_rows(path: Path) -> set:
    if not path.exists():
        return set()
    with path.open(newline="") as fh:
        return {(r["sweep_var"], float(r["sweep_value"]), r["scheme"]) for r in csv.DictReader(fh)}


def _point_job(args):
    exp, value, schemes = args
    return value, solve_point(exp, value, schemes)


def run_experiment(exp: dict) -> Path:
    """Run every (value, scheme) pair not already in results.csv and append the rows."""
    out = Path(exp["output_dir"])
    (out / "reports").mkdir(parents=True, exist_ok=True)
    (out / "config_echo.json").write_text(json.dumps(exp, indent=1, sort_keys=True))
    csv_path = out / "results.csv"
    done = _done_rows(csv_path)
    base = build_scenario(exp["scenario"])
    k, l = base.k, base.l
    jobs = []
    for v in exp["values"]:
        todo = [s for s in exp["schemes"] if (exp["variable"], float(v), s) not in done]
        if todo:
            jobs.append((exp, v, todo))
    new_file = not csv_path.exists()
    with csv_path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(result_header(k, l))
        if exp["workers"] > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(exp["workers"]) as pool:
                results = list(pool.map(_point_job, jobs))
        else:
            results = (_point_job(j) for j in jobs)
        for value, runs in results:
            for scheme, rep, secs in runs:
                writer.writerow(result_row(exp["variable"], value, rep, secs, k, l))
                name = f"{exp['variable']}={float(value):.6g}_{scheme}.json"
                rep.to_json(out / "reports" / name)
                log.info("%s=%g %s: %s R_sum=%.4f", exp["variable"], value, scheme, rep.status, rep.r_sum)
            fh.flush()
    return csv_path


# ---------------------------------------------------------------------------
# current maps

def current_maps(W, basis: FourierBasisSet, aperture) -> tuple[np.ndarray, np.ndarray]:
    """Normalised amplitude and phase of the x-component of each user's current."""
    W = np.asarray(W, dtype=complex)
    ups = basis.evaluate(aperture.points)
    amp, phase = [], []
    for w in W:
        jx = (ups @ w.reshape(basis.size, 3))[:, 0]
        a = np.abs(jx)
        top = a.max()
        amp.append(a / top if top > 0 else a)
        p = np.angle(jx)
        phase.append(np.where(p <= -np.pi, p + 2 * np.pi, p))
    return np.array(amp), np.array(phase)


def emit_current_maps(W, basis: FourierBasisSet, aperture, out_dir, prefix: str = "user") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    amp, phase = current_maps(W, basis, aperture)
    paths = []
    for u, (a, p) in enumerate(zip(amp, phase)):
        path = out_dir / f"{prefix}{u + 1}_current.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "amplitude", "phase"])
            for s, av, pv in zip(aperture.points, a, p):
                w.writerow([f"{s[0]:.6g}", f"{s[1]:.6g}", f"{av:.8g}", f"{pv:.8g}"])
        paths.append(path)
    return paths


def maps_from_report(report_path, out_dir=None) -> list[Path]:
    data = json.loads(Path(report_path).read_text())
    block = data.get("config", {}).get("scenario")
    if block is None:
        raise ConfigError(f"{report_path}: report has no scenario echo")
    if data["scheme"] in ("FD", "FD-IDET"):
        raise ConfigError("current maps are defined for wavenumber-domain schemes only")
    scenario = build_scenario(block)
    W = np.asarray(data["W"], dtype=float)
    W = W[..., 0] + 1j * W[..., 1]
    out_dir = Path(out_dir) if out_dir else Path(report_path).with_suffix("")
    return emit_current_maps(W, scenario.basis, scenario.aperture, out_dir)


# ---------------------------------------------------------------------------
# single-EU study

def run_single_eu_study(cfg: dict, out_dir=None) -> dict:
    """Beam maps, EM-vs-Fresnel harvest and focus-vs-distance tables for one EU."""
    given = cfg.get("scenario", {})
    unknown = set(given) - set(SINGLE_EU)
    if unknown:
        raise ConfigError(f"scenario: unknown field(s) {sorted(unknown)}")
    b = dict(SINGLE_EU, **given)
    w = "scenario"
    medium = MediumParams(_number(b, "frequency_Hz", w, True), _number(b, "z0_ohm", w, True),
                          _number(b, "z_ohm", w, True))
    lx, ly = _number(b, "aperture_lx_m", w, True), _number(b, "aperture_ly_m", w, True)
    aperture = make_aperture(lx, ly, int(b["grid_nx"]), int(b["grid_ny"]))
    pt = _number(b, "pt_A2", w, True)
    area = _number(b, "receiver_area_m2", w, positive=True, allow_none=True)
    phi = _number(b, "incidence_rad", w)
    geom = ReceiverGeometry.isotropic(medium, phi) if area is None else ReceiverGeometry(area, phi, medium.z)
    circuit = EhCircuit(b["eh_a_per_W"], b["eh_b_W"], b["eh_m_W"])
    out = Path(out_dir or cfg.get("output_dir", "single_eu"))
    out.mkdir(parents=True, exist_ok=True)
    files = {"patterns": []}

    # (a) beam maps in the y = 0 plane
    x0, x1, nxs = b["pattern_x_m"]
    z0, z1, nzs = b["pattern_z_m"]
    gx, gz = np.meshgrid(np.linspace(x0, x1, int(nxs)), np.linspace(z0, z1, int(nzs)), indexing="ij")
    scan = np.stack([gx.ravel(), np.zeros(gx.size), gz.ravel()], axis=1)
    for focus in _points(b, "foci_m", w):
        ch = sample_user_channel(aperture, focus, medium)
        beam = matched_beam(ch, optimal_eu_combiner(ch, aperture), pt, aperture, geom)
        raw = beam_pattern_scan(beam.theta, scan, medium, aperture, "raw")
        comp = beam_pattern_scan(beam.theta, scan, medium, aperture)
        path = out / f"pattern_focus_{focus[0]:g}_{focus[1]:g}_{focus[2]:g}.csv"
        files["patterns"].append(str(export_beam_map(path, scan, raw, comp)))

    # (b) EM vs Fresnel matched beams received through the exact channel
    bound = fresnel_lower_bound(max(lx, ly), medium.wavelength)
    bound_diag = fresnel_lower_bound(math.hypot(lx, ly), medium.wavelength)
    path = out / "em_vs_fresnel.csv"
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["distance_m", "em_rf_W", "fresnel_rf_W", "em_harvest_W", "fresnel_harvest_W",
                     "relative_gap", "below_fresnel_bound", "below_fresnel_bound_diag"])
        for d in b["fresnel_distances_m"]:
            em, fr = em_vs_fresnel_power((0.0, 0.0, d), aperture, medium, pt, geom)
            wr.writerow([d, f"{em:.10g}", f"{fr:.10g}", f"{eh_output(em, circuit):.10g}",
                         f"{eh_output(fr, circuit):.10g}", f"{(em - fr) / em:.10g}",
                         int(d < bound), int(d < bound_diag)])
    files["em_vs_fresnel"] = str(path)

    # (c) harvest versus EU distance for beams focused at fixed depths
    foci = list(b["focus_distances_m"])
    path = out / "focus_vs_distance.csv"
    table = focus_distance_table(foci, b["eval_distances_m"], aperture, medium, pt, geom)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["distance_m"] + [f"focus_{f:g}m_harvest_W" for f in foci])
        for d, row in zip(b["eval_distances_m"], table):
            wr.writerow([d] + [f"{eh_output(v, circuit):.10g}" for v in row])
    files["focus_vs_distance"] = str(path)
    return files


def em_vs_fresnel_power(user, aperture, medium, pt, geom, order: int = 1) -> tuple[float, float]:
    """RF power at ``user`` for the exact matched beam and for the beam matched
    to the Fresnel model, both received through the exact channel with the best combiner."""
    exact = sample_user_channel(aperture, user, medium)
    em = closed_form_power(exact, pt, aperture, geom)
    approx = sample_fresnel_channel(aperture, user, medium, order)
    beam = matched_beam(approx, optimal_eu_combiner(approx, aperture), pt, aperture)
    e = field_at(user, beam.theta, aperture, medium)
    return em, float(geom.factor * np.sum(np.abs(e) ** 2))


def focus_distance_table(foci, distances, aperture, medium, pt, geom) -> np.ndarray:
    """RF power at on-axis distances (rows) for beams focused on-axis at ``foci`` (columns)."""
    beams = []
    for f in foci:
        ch = sample_user_channel(aperture, (0.0, 0.0, f), medium)
        beams.append(matched_beam(ch, optimal_eu_combiner(ch, aperture), pt, aperture).theta)
    table = np.zeros((len(distances), len(foci)))
    for i, d in enumerate(distances):
        for j, th in enumerate(beams):
            e = field_at((0.0, 0.0, d), th, aperture, medium)
            table[i, j] = geom.factor * np.sum(np.abs(e) ** 2)
    return table
