"""Experiment orchestration: config documents, seeded sweeps, CSV output.

All dBm-to-watt conversion happens here; the library below works in linear
watts.  Every row of a sweep derives its random streams from (master seed,
method index, sweep index, trial index), so output bytes depend only on the
config document and the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import SystemConfig
from .deployment import (
    DeploymentResult,
    OptimizerSettings,
    UserDistribution,
    exhaustive_deploy,
    heuristic_deploy,
    one_sample_deploy,
    random_deploy,
    sample_user_locations,
    sgd_deploy,
)
from .errors import IoError, ParseError, RisPlanError, ValidationError
from .geometry import CellGeometry, RisPose
from .phase import optimize_phases, sum_rate_for_phases
from .channel import precompute_los, sample_channel_realization

METHODS = ("heuristic", "exhaustive", "sgd", "random", "one_sample")
SWEEP_VARIABLES = ("power_dbm", "nr", "nt", "users", "d0", "phiR", "samples")

CSV_HEADER = "method,sweep_variable,sweep_value,sum_rate_bps_hz,std_error,iterations,d0,phi0,h0,phiR,seed"


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt * 1e3)


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully-resolved description of one sweep run."""

    cfg: SystemConfig
    geom: CellGeometry
    dist: UserDistribution
    settings: OptimizerSettings
    methods: tuple
    sweep_variable: str
    sweep_values: tuple
    trials: int
    seed: int
    pmax_dbm: float
    noise_dbm: float

    def __post_init__(self):
        if not self.sweep_values:
            raise ValidationError("sweep needs at least one value")
        if self.trials < 1:
            raise ValidationError("need at least one trial")
        for method in self.methods:
            if method not in METHODS:
                raise ValidationError(f"unknown method {method!r}")
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValidationError(f"unknown sweep variable {self.sweep_variable!r}")


@dataclass(frozen=True)
class ResultRow:
    method: str
    sweep_variable: str
    sweep_value: float
    sum_rate_bps_hz: float
    std_error: float
    iterations: int
    d0: float
    phi0: float
    h0: float
    phiR: float
    seed: int


# Default parameter table (the full-scale cell); every key may be overridden.
_DEFAULTS = {
    "system": {
        "nt": 128, "nr_x": 10, "nr_y": 10, "subcarriers": 16, "users": 4,
        "fc_hz": 28e9, "bandwidth_hz": 4e9, "pmax_dbm": 30.0, "noise_dbm": -104.0,
        "rician_bs_ris": 15.0, "rician_bs_user": 10.0, "rician_ris_user": 15.0,
        "alpha_bs_ris": 2.2, "alpha_bs_user": 4.0, "alpha_ris_user": 2.8,
        "c0": None, "los_only": False,
    },
    "geometry": {
        "cell_radius": 200.0, "bs_height": 10.0, "user_height": 1.5,
        "ris_distance_min": 10.0, "ris_distance_max": 200.0,
        "ris_height_min": 1.0, "ris_height_max": 10.0,
    },
    "scenario": {"kind": "uniform_disc", "hotspot_radius": 10.0, "centers": None},
    "sweep": {"variable": "power_dbm", "values": (30.0,)},
    "run": {
        "methods": ("heuristic",), "trials": 100, "seed": 0, "samples": 200,
        "orientation_grid": 16, "max_outer_iters": 20, "tol": 1e-6,
        "sgd_iters": 200, "sgd_step_d0": 1.0, "sgd_step_h0": 0.5,
        "unweighted_distance_sum": False,
    },
}

_BOOL_KEYS = {"los_only", "unweighted_distance_sum"}
_INT_KEYS = {"nt", "nr_x", "nr_y", "subcarriers", "users", "trials", "seed",
             "samples", "orientation_grid", "max_outer_iters", "sgd_iters"}
_LIST_KEYS = {"values", "methods", "centers"}


def _parse_scalar(key: str, raw: str, line_no: int):
    raw = raw.strip()
    if key in _BOOL_KEYS:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ParseError(f"expected boolean for {key}, got {raw!r}", line_no)
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError as exc:
            raise ParseError(f"expected integer for {key}, got {raw!r}", line_no) from exc
    if key == "kind" or key == "variable":
        return raw
    try:
        return float(raw)
    except ValueError as exc:
        raise ParseError(f"expected number for {key}, got {raw!r}", line_no) from exc


def _parse_list(key: str, raw: str, line_no: int):
    items = [piece.strip() for piece in raw.split(",") if piece.strip()]
    if key == "methods":
        return tuple(items)
    if key == "values":
        try:
            return tuple(float(piece) for piece in items)
        except ValueError as exc:
            raise ParseError(f"bad sweep value in {raw!r}", line_no) from exc
    # centers: "distance:azimuth" pairs
    centers = []
    for piece in items:
        try:
            dist_c, az = piece.split(":")
            centers.append((float(dist_c), float(az)))
        except ValueError as exc:
            raise ParseError(f"bad center {piece!r}, expected distance:azimuth", line_no) from exc
    return tuple(centers)


def parse_config(text: str) -> ExperimentSpec:
    """Parse a sectioned key = value document into an ExperimentSpec.

    Distances are metres, angles radians, powers dBm.  Omitted keys fall back
    to the default parameter table.  Raises ParseError with a line number for
    malformed input and ValidationError for violated invariants.
    """
    values = {section: dict(defaults) for section, defaults in _DEFAULTS.items()}
    section = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in values:
                raise ParseError(f"unknown section [{section}]", line_no)
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", line_no)
        if section is None:
            raise ParseError("key outside any [section]", line_no)
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if key not in values[section]:
            raise ParseError(f"unknown key {key!r} in [{section}]", line_no)
        if key in _LIST_KEYS:
            values[section][key] = _parse_list(key, raw_value, line_no)
        else:
            values[section][key] = _parse_scalar(key, raw_value, line_no)
    return _build_spec(values)


def _build_spec(values: dict) -> ExperimentSpec:
    sys_v, geo_v, sce_v, swp_v, run_v = (
        values["system"], values["geometry"], values["scenario"],
        values["sweep"], values["run"],
    )
    cfg = SystemConfig(
        nt=sys_v["nt"], nr_x=sys_v["nr_x"], nr_y=sys_v["nr_y"], m=sys_v["subcarriers"],
        k=sys_v["users"], fc=sys_v["fc_hz"], bandwidth=sys_v["bandwidth_hz"],
        pmax=dbm_to_watt(sys_v["pmax_dbm"]), sigma2=dbm_to_watt(sys_v["noise_dbm"]),
        k0=sys_v["rician_bs_ris"], k1=sys_v["rician_bs_user"], k2=sys_v["rician_ris_user"],
        alpha0=sys_v["alpha_bs_ris"], alpha1=sys_v["alpha_bs_user"],
        alpha2=sys_v["alpha_ris_user"], c0=sys_v["c0"], los_only=sys_v["los_only"],
    )
    geom = CellGeometry(
        r=geo_v["cell_radius"], h_b=geo_v["bs_height"], h_u=geo_v["user_height"],
        r_min=geo_v["ris_distance_min"], r_max=geo_v["ris_distance_max"],
        h_min=geo_v["ris_height_min"], h_max=geo_v["ris_height_max"],
    )
    dist = UserDistribution(
        kind=sce_v["kind"], cell=geom,
        centers=tuple(sce_v["centers"]) if sce_v["centers"] else (),
        hotspot_radius=sce_v["hotspot_radius"],
    )
    settings = OptimizerSettings(
        t=run_v["samples"], n_orient=run_v["orientation_grid"],
        max_outer_iters=run_v["max_outer_iters"], tol=run_v["tol"],
        sgd_step_d0=run_v["sgd_step_d0"], sgd_step_h0=run_v["sgd_step_h0"],
        sgd_iters=run_v["sgd_iters"],
        unweighted_distance_sum=run_v["unweighted_distance_sum"],
    )
    return ExperimentSpec(
        cfg=cfg, geom=geom, dist=dist, settings=settings,
        methods=tuple(run_v["methods"]), sweep_variable=swp_v["variable"],
        sweep_values=tuple(swp_v["values"]), trials=run_v["trials"],
        seed=run_v["seed"], pmax_dbm=sys_v["pmax_dbm"], noise_dbm=sys_v["noise_dbm"],
    )


def emit_config(spec: ExperimentSpec) -> str:
    """Serialise a spec back to the document format parse_config accepts."""
    cfg, geom, dist, settings = spec.cfg, spec.geom, spec.dist, spec.settings
    centers = ", ".join(f"{repr(dc)}:{repr(az)}" for dc, az in dist.centers)
    lines = [
        "[system]",
        f"nt = {cfg.nt}", f"nr_x = {cfg.nr_x}", f"nr_y = {cfg.nr_y}",
        f"subcarriers = {cfg.m}", f"users = {cfg.k}",
        f"fc_hz = {repr(cfg.fc)}", f"bandwidth_hz = {repr(cfg.bandwidth)}",
        f"pmax_dbm = {repr(spec.pmax_dbm)}", f"noise_dbm = {repr(spec.noise_dbm)}",
        f"rician_bs_ris = {repr(cfg.k0)}", f"rician_bs_user = {repr(cfg.k1)}",
        f"rician_ris_user = {repr(cfg.k2)}",
        f"alpha_bs_ris = {repr(cfg.alpha0)}", f"alpha_bs_user = {repr(cfg.alpha1)}",
        f"alpha_ris_user = {repr(cfg.alpha2)}",
        f"c0 = {repr(cfg.c0)}", f"los_only = {str(cfg.los_only).lower()}",
        "",
        "[geometry]",
        f"cell_radius = {repr(geom.r)}", f"bs_height = {repr(geom.h_b)}",
        f"user_height = {repr(geom.h_u)}",
        f"ris_distance_min = {repr(geom.r_min)}", f"ris_distance_max = {repr(geom.r_max)}",
        f"ris_height_min = {repr(geom.h_min)}", f"ris_height_max = {repr(geom.h_max)}",
        "",
        "[scenario]",
        f"kind = {dist.kind}", f"hotspot_radius = {repr(dist.hotspot_radius)}",
    ]
    if centers:
        lines.append(f"centers = {centers}")
    lines += [
        "",
        "[sweep]",
        f"variable = {spec.sweep_variable}",
        "values = " + ", ".join(repr(v) for v in spec.sweep_values),
        "",
        "[run]",
        "methods = " + ", ".join(spec.methods),
        f"trials = {spec.trials}", f"seed = {spec.seed}", f"samples = {settings.t}",
        f"orientation_grid = {settings.n_orient}",
        f"max_outer_iters = {settings.max_outer_iters}", f"tol = {repr(settings.tol)}",
        f"sgd_iters = {settings.sgd_iters}",
        f"sgd_step_d0 = {repr(settings.sgd_step_d0)}",
        f"sgd_step_h0 = {repr(settings.sgd_step_h0)}",
        f"unweighted_distance_sum = {str(settings.unweighted_distance_sum).lower()}",
        "",
    ]
    return "\n".join(lines)


def scaled_config():
    """Desk-scale system and geometry used by the acceptance property suite.

    The placement box keeps the panel within 30 m of the BS (a feeder-range
    deployment constraint); users still fill the 100 m cell."""
    cfg = SystemConfig(nt=32, nr_x=4, nr_y=4, m=4, k=3, fc=28e9, bandwidth=4e9,
                       pmax=dbm_to_watt(30.0), sigma2=dbm_to_watt(-104.0))
    geom = CellGeometry(r=100.0, h_b=10.0, h_u=1.5, r_min=10.0, r_max=30.0,
                        h_min=1.0, h_max=10.0)
    return cfg, geom


def scaled_ris_config():
    """Scaled preset with a reflected-path reference gain (1.0, i.e. 0 dB at
    1 m) large enough for the panel to carry a meaningful share of the link
    budget; used by the deployment and phase acceptance scenarios."""
    cfg, geom = scaled_config()
    return replace(cfg, c0=1.0), geom


def scaled_distribution(kind: str, geom: CellGeometry) -> UserDistribution:
    """Scenario distributions sized for the desk-scale cell: the four-hotspot
    layout keeps its azimuths but pulls the outer ring inside the cell."""
    if kind == "multi_hotspot":
        centers = ((50.0, math.pi / 4.0), (80.0, 3.0 * math.pi / 4.0),
                   (50.0, -3.0 * math.pi / 4.0), (80.0, -math.pi / 4.0))
        return UserDistribution(kind="custom_centers", cell=geom, centers=centers)
    return UserDistribution(kind=kind, cell=geom)


def _apply_sweep(spec: ExperimentSpec, value: float):
    """Config and settings with one sweep value applied; returns possible pose
    overrides for the geometry sweeps."""
    cfg, settings, override = spec.cfg, spec.settings, {}
    var = spec.sweep_variable
    if var == "power_dbm":
        cfg = replace(cfg, pmax=dbm_to_watt(value))
    elif var == "nr":
        side = int(round(math.sqrt(value)))
        if side * side != int(value):
            raise ValidationError("panel-size sweep values must be perfect squares")
        cfg = replace(cfg, nr_x=side, nr_y=side)
    elif var == "nt":
        cfg = replace(cfg, nt=int(value))
    elif var == "users":
        cfg = replace(cfg, k=int(value))
    elif var == "samples":
        settings = replace(settings, t=int(value))
    elif var == "d0":
        override["d0"] = float(value)
    elif var == "phiR":
        override["phiR"] = float(value)
    return cfg, settings, override


def _deploy(method: str, dist: UserDistribution, settings: OptimizerSettings,
            geom: CellGeometry, cfg: SystemConfig, rng: np.random.Generator) -> DeploymentResult:
    if method == "heuristic":
        return heuristic_deploy(dist, settings, geom, cfg, rng)
    if method == "exhaustive":
        return exhaustive_deploy(dist, settings, geom, cfg, rng)
    if method == "sgd":
        return sgd_deploy(dist, settings, geom, cfg, rng)
    if method == "random":
        return random_deploy(geom, rng)
    if method == "one_sample":
        return one_sample_deploy(dist, settings, geom, cfg, rng)
    raise ValidationError(f"unknown method {method!r}")


def evaluate_pose(cfg: SystemConfig, geom: CellGeometry, dist: UserDistribution,
                  pose: RisPose, trials: int, rng_key: tuple,
                  phase_iters: int = 8, phase_tol: float = 1e-3):
    """Expected sum-rate of a pose over user draws and channel draws, with
    per-realization phase optimization.  Returns (mean sum-rate, std error)."""
    totals = []
    for trial in range(trials):
        rng = np.random.default_rng(list(rng_key) + [trial])
        users = sample_user_locations(dist, cfg.k, rng)
        los = precompute_los(cfg, geom, pose, users)
        real = sample_channel_realization(cfg, geom, pose, users, rng, los=los)
        result = optimize_phases(real, cfg, real.omega, max_iters=phase_iters, tol=phase_tol)
        totals.append(sum_rate_for_phases(real, result.phases.theta, real.omega, cfg))
    mean = math.fsum(totals) / len(totals)
    if len(totals) > 1:
        var = math.fsum((x - mean) ** 2 for x in totals) / (len(totals) - 1)
        stderr = math.sqrt(var / len(totals))
    else:
        stderr = 0.0
    return mean, stderr


def _failed_row(method: str, spec: ExperimentSpec, value: float) -> ResultRow:
    return ResultRow(method, spec.sweep_variable, float(value), math.nan, math.nan,
                     0, math.nan, math.nan, math.nan, math.nan, spec.seed)


def run_experiment(spec: ExperimentSpec) -> list:
    """Sweep x method grid of deployments and evaluations, in sweep-major
    order.  Rows that fail inside a module are marked with NaN rates instead
    of aborting the sweep."""
    rows = []
    for si, value in enumerate(spec.sweep_values):
        try:
            cfg_v, settings_v, override = _apply_sweep(spec, value)
        except RisPlanError:
            cfg_v, settings_v, override = spec.cfg, spec.settings, None
        for mi, method in enumerate(spec.methods):
            if override is None:
                rows.append(_failed_row(method, spec, value))
                continue
            deploy_rng = np.random.default_rng([spec.seed, mi, si])
            try:
                result = _deploy(method, spec.dist, settings_v, spec.geom, cfg_v, deploy_rng)
                pose = result.pose
                if "d0" in override:
                    pose = replace(pose, d0=override["d0"])
                if "phiR" in override:
                    pose = replace(pose, phiR=override["phiR"])
                mean, stderr = evaluate_pose(cfg_v, spec.geom, spec.dist, pose,
                                             spec.trials, (spec.seed, mi, si, 1))
                rows.append(ResultRow(method, spec.sweep_variable, float(value),
                                      mean, stderr, result.iterations,
                                      pose.d0, pose.phi0, pose.h0, pose.phiR, spec.seed))
            except RisPlanError:
                rows.append(_failed_row(method, spec, value))
    return rows


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def emit_csv(rows: list, destination) -> None:
    """Write rows with the fixed 11-column schema, LF newlines, 9 significant
    digits for floats."""
    if not rows:
        raise ValidationError("no rows to write")
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join([
            row.method, row.sweep_variable, _fmt(row.sweep_value),
            _fmt(row.sum_rate_bps_hz), _fmt(row.std_error), str(row.iterations),
            _fmt(row.d0), _fmt(row.phi0), _fmt(row.h0), _fmt(row.phiR), str(row.seed),
        ]))
    payload = "\n".join(lines) + "\n"
    try:
        if hasattr(destination, "write"):
            destination.write(payload)
        else:
            with open(destination, "w", newline="") as handle:
                handle.write(payload)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def rows_from_csv(text: str) -> list:
    """Inverse of emit_csv for the fixed schema."""
    lines = [line for line in text.splitlines() if line]
    if not lines or lines[0] != CSV_HEADER:
        raise ParseError("missing or malformed header", 1)
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 11:
            raise ParseError(f"expected 11 columns, got {len(parts)}", line_no)
        rows.append(ResultRow(
            method=parts[0], sweep_variable=parts[1], sweep_value=float(parts[2]),
            sum_rate_bps_hz=float(parts[3]), std_error=float(parts[4]),
            iterations=int(parts[5]), d0=float(parts[6]), phi0=float(parts[7]),
            h0=float(parts[8]), phiR=float(parts[9]), seed=int(parts[10]),
        ))
    return rows
