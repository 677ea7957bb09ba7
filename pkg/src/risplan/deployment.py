"""RIS placement optimizers and user-location samplers.

The heuristic walks one coordinate at a time: panel orientation by maximising
the number of covered samples over a grid, radial distance to its analytic
optimum (the closest allowed point to the BS), height by a one-dimensional
stationarity search, and azimuth by the closed-form minimiser of the summed
squared RIS-user distances.  Exhaustive-grid, stochastic-gradient, random and
single-sample baselines share the same sample-average objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import digamma

from .channel import SystemConfig
from .errors import GridTooLarge, ValidationError
from .geometry import CellGeometry, RisPose, UserLocation, wrap_to_2pi
from .rate import rician_ratios

_HOTSPOT_DEFAULTS = {
    "one_hotspot": ((50.0, math.pi / 4.0),),
    "multi_hotspot": (
        (50.0, math.pi / 4.0),
        (100.0, 3.0 * math.pi / 4.0),
        (50.0, -3.0 * math.pi / 4.0),
        (100.0, -math.pi / 4.0),
    ),
}

_KINDS = ("uniform_disc", "one_hotspot", "multi_hotspot", "custom_centers")


@dataclass(frozen=True)
class UserDistribution:
    """Long-term geographic law the placement is optimized against."""

    kind: str
    cell: CellGeometry
    centers: tuple = ()
    hotspot_radius: float = 10.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown distribution kind {self.kind!r}")
        if self.kind in _HOTSPOT_DEFAULTS and not self.centers:
            object.__setattr__(self, "centers", _HOTSPOT_DEFAULTS[self.kind])
        if self.kind == "custom_centers" and not self.centers:
            raise ValidationError("custom_centers needs at least one center")
        for dist_c, _ in self.centers:
            if dist_c + self.hotspot_radius > self.cell.r:
                raise ValidationError("hotspot disc extends beyond the cell")


def sample_location_arrays(dist: UserDistribution, t: int, rng: np.random.Generator):
    """(distance, azimuth) arrays of t samples from the distribution."""
    if t < 1:
        raise ValidationError("need at least one sample")
    if dist.kind == "uniform_disc":
        d = dist.cell.r * np.sqrt(rng.random(t))
        phi = rng.uniform(0.0, 2.0 * math.pi, t)
        return d, phi
    centers = np.asarray(dist.centers)
    idx = rng.integers(0, len(centers), t)
    rad = dist.hotspot_radius * np.sqrt(rng.random(t))
    ang = rng.uniform(0.0, 2.0 * math.pi, t)
    cx = centers[idx, 0] * np.cos(centers[idx, 1]) + rad * np.cos(ang)
    cy = centers[idx, 0] * np.sin(centers[idx, 1]) + rad * np.sin(ang)
    return np.hypot(cx, cy), np.arctan2(cy, cx)


def sample_user_locations(dist: UserDistribution, t: int,
                          rng: np.random.Generator) -> list[UserLocation]:
    d, phi = sample_location_arrays(dist, t, rng)
    return [UserLocation(dk=float(dk), phik=float(pk)) for dk, pk in zip(d, phi)]


def _wrap_pm_pi_array(angle: np.ndarray) -> np.ndarray:
    """Vectorised wrap to (-pi, pi]."""
    wrapped = np.mod(angle + np.pi, 2.0 * np.pi)
    wrapped = np.where(wrapped <= 0.0, wrapped + 2.0 * np.pi, wrapped)
    return wrapped - np.pi


def coverage_bulk(pose: RisPose, d: np.ndarray, phi: np.ndarray, geom: CellGeometry):
    """Vectorised coverage flags and horizontal RIS-user distances.

    Mirrors geometry.coverage_indicator / ris_user_distance for sample arrays;
    degenerate samples come back uncovered.
    """
    dkr2 = pose.d0 ** 2 + d ** 2 - 2.0 * pose.d0 * d * np.cos(pose.phi0 - phi)
    dkr = np.sqrt(np.maximum(dkr2, 0.0))
    ok = (dkr > 0.0) & (pose.d0 > 0.0)
    safe = np.where(ok, dkr, 1.0)
    cos_tri = (pose.d0 ** 2 + safe ** 2 - d ** 2) / (2.0 * pose.d0 * safe)
    theta2 = _wrap_pm_pi_array(np.arccos(np.clip(cos_tri, -1.0, 1.0))
                               - (math.pi / 2.0 - pose.phi0) - pose.phiR)
    theta0 = _wrap_pm_pi_array(np.array(math.pi / 2.0 - pose.phi0 - pose.phiR))
    half_pi = math.pi / 2.0
    omega = ok & (np.abs(theta0) <= half_pi) & (np.abs(theta2) <= half_pi)
    return omega, dkr


def composite_gains(pose: RisPose, d: np.ndarray, phi: np.ndarray,
                    cfg: SystemConfig, geom: CellGeometry):
    """Per-sample composite gains (the summands of the placement objective)
    plus the coverage flags."""
    omega, dkr = coverage_bulk(pose, d, phi, geom)
    r_nlos, _, r_direct = rician_ratios(cfg)
    beta1 = cfg.c1 * d ** (-cfg.alpha1)
    beta0 = cfg.c0 * (pose.d0 ** 2 + (pose.h0 - geom.h_b) ** 2) ** (-cfg.alpha0 / 2.0)
    dist2 = dkr ** 2 + (pose.h0 - geom.h_u) ** 2
    beta2 = np.where(omega, cfg.c0 * np.maximum(dist2, 1e-300) ** (-cfg.alpha2 / 2.0), 0.0)
    kappa = beta1 * (1.0 + r_direct / cfg.nt) + omega * r_nlos * beta0 * beta2
    return kappa, omega


def saa_lower_bound_objective(pose: RisPose, d: np.ndarray, phi: np.ndarray,
                              cfg: SystemConfig, geom: CellGeometry) -> float:
    """Sample-average of the closed-form lower-bound user rate at the pose."""
    kappa, _ = composite_gains(pose, d, phi, cfg, geom)
    scale = cfg.power_per_stream * math.exp(digamma(cfg.nt - cfg.k + 1)) / (cfg.nt * cfg.sigma2)
    return float(np.mean(np.log2(1.0 + scale * kappa)))


def kappa_objective(pose: RisPose, d: np.ndarray, phi: np.ndarray,
                    cfg: SystemConfig, geom: CellGeometry):
    """(sum of composite gains, served count) at the pose."""
    kappa, omega = composite_gains(pose, d, phi, cfg, geom)
    return float(np.sum(kappa)), int(np.sum(omega))


def orientation_grid(n_orient: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(n_orient) / n_orient


def optimize_orientation(pose: RisPose, d: np.ndarray, phi: np.ndarray,
                         n_orient: int, geom: CellGeometry) -> float:
    """Grid angle serving the most samples; ties break to the smallest index."""
    if n_orient < 4:
        raise ValidationError("orientation grid needs at least 4 angles")
    counts = np.empty(n_orient, dtype=int)
    for i, ang in enumerate(orientation_grid(n_orient)):
        omega, _ = coverage_bulk(replace(pose, phiR=ang), d, phi, geom)
        counts[i] = int(np.sum(omega))
    return float(orientation_grid(n_orient)[int(np.argmax(counts))])


def optimize_radial_distance(geom: CellGeometry) -> float:
    """The radial objective decreases with distance, so the closest allowed
    position to the BS is optimal."""
    return geom.r_min


def _height_value(h: float, d0: float, q1: float, q2: float, n: float,
                  geom: CellGeometry, cfg: SystemConfig) -> float:
    first = q1 * (d0 ** 2 + (h - geom.h_b) ** 2) ** (-cfg.alpha0 / 2.0)
    second = (q2 + n * (h - geom.h_u) ** 2) ** (cfg.alpha2 / 2.0)
    return first - second


def _height_slope(h: float, d0: float, q1: float, q2: float, n: float,
                  geom: CellGeometry, cfg: SystemConfig) -> float:
    first = -cfg.alpha0 * q1 * (h - geom.h_b) * (d0 ** 2 + (h - geom.h_b) ** 2) ** (-cfg.alpha0 / 2.0 - 1.0)
    second = -cfg.alpha2 * n * (h - geom.h_u) * (q2 + n * (h - geom.h_u) ** 2) ** (cfg.alpha2 / 2.0 - 1.0)
    return first + second


def optimize_height(pose: RisPose, d: np.ndarray, phi: np.ndarray, geom: CellGeometry,
                    cfg: SystemConfig, covered_only: bool = True) -> float:
    """Height maximising the transformed placement objective.

    Coverage and RIS-user distances are frozen at the given pose.  With no
    covered samples the previous height is kept; the unconstrained optimum
    always lies between the user and BS heights and is clamped into the
    allowed range.
    """
    omega, dkr = coverage_bulk(pose, d, phi, geom)
    served = int(np.sum(omega))
    if served == 0:
        return pose.h0
    q1 = cfg.c0 ** 2 * served
    if covered_only:
        q2 = float(np.sum(dkr[omega] ** 2))
        n = float(served)
    else:
        q2 = float(np.sum(dkr ** 2))
        n = float(len(dkr))
    return _height_root(pose.d0, q1, q2, n, geom, cfg)


def _height_root(d0: float, q1: float, q2: float, n: float,
                 geom: CellGeometry, cfg: SystemConfig) -> float:
    clamp = lambda h: min(max(h, geom.h_min), geom.h_max)
    if q1 <= 0.0:
        return clamp(geom.h_u)
    lo, hi = geom.h_u, geom.h_b
    slope_lo = _height_slope(lo + 1e-12, d0, q1, q2, n, geom, cfg)
    slope_hi = _height_slope(hi - 1e-12, d0, q1, q2, n, geom, cfg)
    if slope_lo <= 0.0:
        return clamp(lo)
    if slope_hi >= 0.0:
        return clamp(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _height_slope(mid, d0, q1, q2, n, geom, cfg) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9:
            break
    return clamp(0.5 * (lo + hi))


def optimize_azimuth(pose: RisPose, d: np.ndarray, phi: np.ndarray,
                     geom: CellGeometry, covered_only: bool = True) -> float:
    """Closed-form azimuth minimising the summed squared RIS-user distances.

    The objective reduces to a pure sinusoid a1*cos + a2*sin whose minimiser
    is atan2(a2, a1) + pi; a zero phasor returns azimuth 0.
    """
    omega, _ = coverage_bulk(pose, d, phi, geom)
    if covered_only:
        sel = omega
        if not np.any(sel):
            return 0.0
    else:
        sel = np.ones_like(omega, dtype=bool)
    a1 = float(np.sum(-2.0 * pose.d0 * d[sel] * np.cos(phi[sel])))
    a2 = float(np.sum(-2.0 * pose.d0 * d[sel] * np.sin(phi[sel])))
    if a1 == 0.0 and a2 == 0.0:
        return 0.0
    return wrap_to_2pi(math.atan2(a2, a1) + math.pi)


@dataclass(frozen=True)
class OptimizerSettings:
    """Knobs shared by the placement methods."""

    t: int = 200
    n_orient: int = 16
    d0_step: float = None
    h0_step: float = None
    phi0_step: float = math.pi / 4.0
    phiR_step: float = math.pi / 6.0
    max_outer_iters: int = 20
    tol: float = 1e-6
    sgd_step_d0: float = 1.0
    sgd_step_h0: float = 0.5
    sgd_iters: int = 200
    grid_budget: int = 250_000
    unweighted_distance_sum: bool = False

    def __post_init__(self):
        if self.t < 1:
            raise ValidationError("sample size must be at least 1")
        if self.n_orient < 4:
            raise ValidationError("orientation grid needs at least 4 angles")
        if self.tol <= 0.0:
            raise ValidationError("tolerance must be positive")


@dataclass
class DeploymentResult:
    pose: RisPose
    objective_trace: list = field(default_factory=list)
    served_count_trace: list = field(default_factory=list)
    iterations: int = 0
    method: str = ""


def _default_init(geom: CellGeometry) -> RisPose:
    # start at the top of the height box: panel height trades a stronger
    # BS-side hop against user proximity, and the top is the better default
    # for any cell whose BS sits above the users
    return RisPose(d0=geom.r_min, phi0=0.0, h0=geom.h_max, phiR=0.0)


def objective_upper_bound(cfg: SystemConfig, pose: RisPose, geom: CellGeometry,
                          t: int, served: int) -> float:
    """Boundedness certificate for the placement objective at a pose."""
    r_nlos, _, r_direct = rician_ratios(cfg)
    beta0 = cfg.c0 * (pose.d0 ** 2 + (pose.h0 - geom.h_b) ** 2) ** (-cfg.alpha0 / 2.0)
    return (1.0 + r_direct / cfg.nt) * t + r_nlos * beta0 * served


def heuristic_deploy(dist: UserDistribution, settings: OptimizerSettings,
                     geom: CellGeometry, cfg: SystemConfig, rng: np.random.Generator,
                     init_pose: RisPose = None, method_tag: str = "heuristic") -> DeploymentResult:
    """Coordinate-descent placement over a fixed set of location samples.

    Each sweep proposes orientation (coverage-count argmax over the grid),
    radial distance, height (stationarity of the transformed objective) and
    azimuth (closed-form phasor minimiser, evaluated jointly with its
    re-facing) in turn.  A proposal is accepted only when it does not
    decrease the sampled objective; unguarded proposals cycle between
    competing coverage basins on symmetric layouts, where the azimuth phasor
    degenerates to sample noise.
    """
    d, phi = sample_location_arrays(dist, settings.t, rng)
    covered_only = not settings.unweighted_distance_sum
    pose = _default_init(geom) if init_pose is None else init_pose
    trace, served_trace = [], []
    prev_obj = None

    def obj_of(p):
        return kappa_objective(p, d, phi, cfg, geom)[0]

    def count_of(p):
        return int(np.sum(coverage_bulk(p, d, phi, geom)[0]))

    def realigned(p):
        cand = replace(p, phiR=optimize_orientation(p, d, phi, settings.n_orient, geom))
        if count_of(cand) > count_of(p) and obj_of(cand) >= obj_of(p):
            return cand
        return p

    for _ in range(settings.max_outer_iters):
        work = realigned(pose)
        work = replace(work, d0=optimize_radial_distance(geom))
        cand = replace(work, h0=optimize_height(work, d, phi, geom, cfg,
                                                covered_only=covered_only))
        if obj_of(cand) > obj_of(work):
            work = cand
        cand = realigned(replace(work, phi0=optimize_azimuth(work, d, phi, geom,
                                                             covered_only=covered_only)))
        if obj_of(cand) > obj_of(work):
            work = cand

        obj, served = kappa_objective(work, d, phi, cfg, geom)
        if prev_obj is not None and obj < prev_obj:
            break
        bound = objective_upper_bound(cfg, work, geom, settings.t, served)
        assert obj <= bound * (1.0 + 1e-12), "placement objective exceeded its bound"
        pose = work
        trace.append(obj)
        served_trace.append(served)
        if prev_obj is not None and abs(obj - prev_obj) <= settings.tol * max(abs(prev_obj), 1e-300):
            break
        prev_obj = obj

    return DeploymentResult(pose=pose, objective_trace=trace,
                            served_count_trace=served_trace,
                            iterations=len(trace), method=method_tag)


def exhaustive_deploy(dist: UserDistribution, settings: OptimizerSettings,
                      geom: CellGeometry, cfg: SystemConfig, rng: np.random.Generator,
                      evaluator=None) -> DeploymentResult:
    """Grid argmax of the sample-average lower-bound objective.

    evaluator(pose) may override the objective; the scan order is fixed so
    ties resolve deterministically to the first maximiser.
    """
    d0_step = settings.d0_step or max((geom.r_max - geom.r_min) / 5.0, 1e-9)
    h0_step = settings.h0_step or max((geom.h_max - geom.h_min) / 3.0, 1e-9)
    d0_vals = np.arange(geom.r_min, geom.r_max + d0_step / 2.0, d0_step)
    h0_vals = np.arange(geom.h_min, geom.h_max + h0_step / 2.0, h0_step)
    phi0_vals = np.arange(0.0, 2.0 * math.pi, settings.phi0_step)
    phiR_vals = np.arange(0.0, 2.0 * math.pi, settings.phiR_step)
    total = len(d0_vals) * len(h0_vals) * len(phi0_vals) * len(phiR_vals)
    if total > settings.grid_budget:
        raise GridTooLarge(f"{total} grid points exceed budget {settings.grid_budget}")

    d, phi = sample_location_arrays(dist, settings.t, rng)
    if evaluator is None:
        evaluator = lambda pose: saa_lower_bound_objective(pose, d, phi, cfg, geom)

    best_pose, best_val = None, -math.inf
    for d0 in d0_vals:
        for h0 in h0_vals:
            for phi0 in phi0_vals:
                for phiR in phiR_vals:
                    pose = RisPose(d0=float(d0), phi0=float(phi0), h0=float(h0), phiR=float(phiR))
                    val = evaluator(pose)
                    if val > best_val:
                        best_pose, best_val = pose, val
    _, served = kappa_objective(best_pose, d, phi, cfg, geom)
    return DeploymentResult(pose=best_pose, objective_trace=[best_val],
                            served_count_trace=[served], iterations=1, method="exhaustive")


def sgd_deploy(dist: UserDistribution, settings: OptimizerSettings,
               geom: CellGeometry, cfg: SystemConfig, rng: np.random.Generator,
               init_pose: RisPose = None) -> DeploymentResult:
    """Single-sample gradient baseline.

    Each iteration draws one location sample, moves distance and height along
    central finite differences of the single-sample lower-bound rate, then
    grid-searches both angles on the same sample.  The trace reports the
    objective on a fixed evaluation sample set.
    """
    d_eval, phi_eval = sample_location_arrays(dist, settings.t, rng)
    if init_pose is None:
        pose = RisPose(
            d0=float(rng.uniform(geom.r_min, geom.r_max)),
            phi0=float(rng.uniform(0.0, 2.0 * math.pi)),
            h0=float(rng.uniform(geom.h_min, geom.h_max)),
            phiR=float(rng.uniform(0.0, 2.0 * math.pi)),
        )
    else:
        pose = init_pose
    delta_d0 = 1e-3 * max(geom.r_max - geom.r_min, 1.0)
    delta_h0 = 1e-3 * max(geom.h_max - geom.h_min, 1.0)
    angles = orientation_grid(settings.n_orient)
    trace = [saa_lower_bound_objective(pose, d_eval, phi_eval, cfg, geom)]

    for _ in range(settings.sgd_iters):
        ds, ps = sample_location_arrays(dist, 1, rng)

        def single(p):
            return saa_lower_bound_objective(p, ds, ps, cfg, geom)

        lo = max(pose.d0 - delta_d0, geom.r_min)
        hi = min(pose.d0 + delta_d0, geom.r_max)
        grad_d0 = (single(replace(pose, d0=hi)) - single(replace(pose, d0=lo))) / max(hi - lo, 1e-12)
        lo_h = max(pose.h0 - delta_h0, geom.h_min)
        hi_h = min(pose.h0 + delta_h0, geom.h_max)
        grad_h0 = (single(replace(pose, h0=hi_h)) - single(replace(pose, h0=lo_h))) / max(hi_h - lo_h, 1e-12)
        d0_new = min(max(pose.d0 + settings.sgd_step_d0 * grad_d0, geom.r_min), geom.r_max)
        h0_new = min(max(pose.h0 + settings.sgd_step_h0 * grad_h0, geom.h_min), geom.h_max)
        pose = replace(pose, d0=d0_new, h0=h0_new)

        best = (-math.inf, pose.phi0, pose.phiR)
        for phi0 in angles:
            for phiR in angles:
                val = single(replace(pose, phi0=float(phi0), phiR=float(phiR)))
                if val > best[0]:
                    best = (val, float(phi0), float(phiR))
        pose = replace(pose, phi0=best[1], phiR=best[2])
        trace.append(saa_lower_bound_objective(pose, d_eval, phi_eval, cfg, geom))

    _, served = kappa_objective(pose, d_eval, phi_eval, cfg, geom)
    return DeploymentResult(pose=pose, objective_trace=trace,
                            served_count_trace=[served],
                            iterations=settings.sgd_iters, method="sgd")


def random_deploy(geom: CellGeometry, rng: np.random.Generator) -> DeploymentResult:
    """Uniformly random pose inside the allowed box."""
    pose = RisPose(
        d0=float(rng.uniform(geom.r_min, geom.r_max)),
        phi0=float(rng.uniform(0.0, 2.0 * math.pi)),
        h0=float(rng.uniform(geom.h_min, geom.h_max)),
        phiR=float(rng.uniform(0.0, 2.0 * math.pi)),
    )
    return DeploymentResult(pose=pose, method="random")


def one_sample_deploy(dist: UserDistribution, settings: OptimizerSettings,
                      geom: CellGeometry, cfg: SystemConfig,
                      rng: np.random.Generator) -> DeploymentResult:
    """Heuristic run on a single location sample."""
    single = replace(settings, t=1)
    result = heuristic_deploy(dist, single, geom, cfg, rng, method_tag="one_sample")
    return result
