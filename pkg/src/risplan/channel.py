"""Wideband Rician channel synthesis for the BS-RIS-user geometry.

Each link splits into a deterministic steering-vector component and an i.i.d.
complex-Gaussian scattered component, mixed by the link's Rician factor and
scaled by the large-scale gain.  Steering vectors are unit-norm and every
scattered component is normalised so its expected squared norm matches the
steering structure (1), which keeps each link's expected power equal to its
large-scale gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, DimensionMismatch, IndexOutOfRange, ValidationError
from .geometry import (
    CellGeometry,
    RisPose,
    UserLocation,
    coverage_indicator,
    link_angles,
    ris_user_distance,
    wrap_to_pm_pi,
)

SPEED_OF_LIGHT = 299_792_458.0


def reference_gain(fc: float) -> float:
    """Free-space reference gain (wavelength/4pi)^2 at carrier fc."""
    lam = SPEED_OF_LIGHT / fc
    return lam * lam / (16.0 * math.pi * math.pi)


@dataclass(frozen=True)
class SystemConfig:
    """Array sizes, OFDM layout, powers and large-scale channel constants.

    C0/C1 are the reference-distance gains of the reflected and direct paths;
    both default to (wavelength/4pi)^2 at fc.  d_spacing defaults to half a
    wavelength at the centre carrier.  los_only zeroes every scattered
    component and sets the deterministic weight to one (the infinite Rician
    factor limit), which makes channel draws deterministic.
    """

    nt: int = 128
    nr_x: int = 10
    nr_y: int = 10
    m: int = 16
    k: int = 4
    fc: float = 28e9
    bandwidth: float = 4e9
    pmax: float = 1.0
    sigma2: float = 10.0 ** (-10.4) * 1e-3
    k0: float = 15.0
    k1: float = 10.0
    k2: float = 15.0
    alpha0: float = 2.2
    alpha1: float = 4.0
    alpha2: float = 2.8
    c0: float = None
    c1: float = None
    d_spacing: float = None
    los_only: bool = False

    def __post_init__(self):
        if self.k < 1 or self.nt <= self.k:
            raise ValidationError(f"need nt > k >= 1, got nt={self.nt}, k={self.k}")
        if self.m < 1:
            raise ValidationError("need at least one subcarrier")
        if min(self.nr_x, self.nr_y) < 1:
            raise ValidationError("panel grid must be at least 1x1")
        if self.pmax <= 0.0 or self.sigma2 <= 0.0:
            raise ValidationError("powers must be positive")
        if min(self.k0, self.k1, self.k2) < 0.0:
            raise ValidationError("Rician factors must be nonnegative")
        if self.c1 is None:
            object.__setattr__(self, "c1", reference_gain(self.fc))
        if self.c0 is None:
            object.__setattr__(self, "c0", self.c1)
        if self.d_spacing is None:
            object.__setattr__(self, "d_spacing", SPEED_OF_LIGHT / (2.0 * self.fc))

    @property
    def nr(self) -> int:
        return self.nr_x * self.nr_y

    @property
    def power_per_stream(self) -> float:
        """Equal power split across users and subcarriers."""
        return self.pmax / (self.k * self.m)


def subcarrier_frequency(m: int, cfg: SystemConfig) -> float:
    """Frequency of the 1-based subcarrier m, symmetric around the carrier."""
    if not 1 <= m <= cfg.m:
        raise IndexOutOfRange(f"subcarrier {m} outside 1..{cfg.m}")
    return cfg.fc + (cfg.bandwidth / cfg.m) * (m - 1 - (cfg.m - 1) / 2.0)


def subcarrier_frequencies(cfg: SystemConfig) -> np.ndarray:
    """All M subcarrier frequencies, index-aligned with 0-based storage."""
    idx = np.arange(1, cfg.m + 1, dtype=float)
    return cfg.fc + (cfg.bandwidth / cfg.m) * (idx - 1 - (cfg.m - 1) / 2.0)


def spatial_direction(f: float, physical_angle: float, cfg: SystemConfig) -> float:
    """Dimensionless per-subcarrier direction (f/c) * spacing * sin(angle)."""
    return (f / SPEED_OF_LIGHT) * cfg.d_spacing * np.sin(physical_angle)


def steering_ula(n: int, direction: float) -> np.ndarray:
    """Unit-norm linear-array response with per-element phase 2*pi*direction."""
    if n < 1:
        raise ValidationError("array needs at least one element")
    phases = 2.0 * np.pi * np.arange(n) * direction
    return np.exp(1j * phases) / math.sqrt(n)


def steering_upa(nx: int, ny: int, dir_az: float, dir_el: float) -> np.ndarray:
    """Unit-norm planar-array response: Kronecker of the azimuth-phased
    x-axis vector with the elevation-phased y-axis vector."""
    if nx < 1 or ny < 1:
        raise ValidationError("panel needs at least one element per axis")
    vx = np.exp(2j * np.pi * np.arange(nx) * dir_az)
    vy = np.exp(2j * np.pi * np.arange(ny) * dir_el)
    return np.kron(vx, vy) / math.sqrt(nx * ny)


def path_loss_bs_user(dk: float, cfg: SystemConfig) -> float:
    """Direct-link gain c1 * dk^-alpha1."""
    if dk <= 0.0:
        raise DegenerateGeometry("BS-user distance is zero")
    return cfg.c1 * dk ** (-cfg.alpha1)


def path_loss_bs_ris(d0: float, h0: float, h_b: float, cfg: SystemConfig) -> float:
    """Reflected first-hop gain c0 * (3D distance^2)^(-alpha0/2)."""
    dist2 = d0 * d0 + (h0 - h_b) ** 2
    if dist2 <= 0.0:
        raise DegenerateGeometry("BS-RIS distance is zero")
    return cfg.c0 * dist2 ** (-cfg.alpha0 / 2.0)


def path_loss_ris_user(dkr: float, h0: float, h_u: float, cfg: SystemConfig) -> float:
    """Reflected second-hop gain c0 * (3D distance^2)^(-alpha2/2)."""
    dist2 = dkr * dkr + (h0 - h_u) ** 2
    if dist2 <= 0.0:
        raise DegenerateGeometry("RIS-user distance is zero")
    return cfg.c0 * dist2 ** (-cfg.alpha2 / 2.0)


@dataclass(frozen=True)
class LosGeometry:
    """Deterministic per-subcarrier steering structure for a fixed layout.

    b_ris: BS-side unit vector of the BS-RIS link, (M, Nt).
    a_ris: panel-side unit vector of the BS-RIS link, (M, Nr).
    d_bar: direct-link structure per user, (K, M, Nt).
    h_bar: panel-user structure per user, (K, M, Nr); zero rows for users the
           panel cannot serve.
    """

    b_ris: np.ndarray
    a_ris: np.ndarray
    d_bar: np.ndarray
    h_bar: np.ndarray
    beta0: float
    beta1: np.ndarray
    beta2: np.ndarray
    omega: np.ndarray


def precompute_los(cfg: SystemConfig, geom: CellGeometry, pose: RisPose,
                   users: list[UserLocation]) -> LosGeometry:
    """Steering vectors, large-scale gains and coverage for a fixed layout."""
    k = len(users)
    freqs = subcarrier_frequencies(cfg)
    beta0 = path_loss_bs_ris(pose.d0, pose.h0, geom.h_b, cfg)

    b_ris = np.zeros((cfg.m, cfg.nt), dtype=complex)
    a_ris = np.zeros((cfg.m, cfg.nr), dtype=complex)
    d_bar = np.zeros((k, cfg.m, cfg.nt), dtype=complex)
    h_bar = np.zeros((k, cfg.m, cfg.nr), dtype=complex)
    beta1 = np.zeros(k)
    beta2 = np.zeros(k)
    omega = np.zeros(k, dtype=int)

    for mi, f in enumerate(freqs):
        dir_phi0 = spatial_direction(f, pose.phi0, cfg)
        b_ris[mi] = steering_ula(cfg.nt, dir_phi0)

    for ki, user in enumerate(users):
        beta1[ki] = path_loss_bs_user(user.dk, cfg)
        omega[ki] = coverage_indicator(pose, user, geom)
        for mi, f in enumerate(freqs):
            d_bar[ki, mi] = np.conj(steering_ula(cfg.nt, spatial_direction(f, user.phik, cfg)))
        if omega[ki]:
            ang = link_angles(pose, user, geom)
            dkr = ris_user_distance(pose, user)
            beta2[ki] = path_loss_ris_user(dkr, pose.h0, geom.h_u, cfg)
            for mi, f in enumerate(freqs):
                h_bar[ki, mi] = np.conj(steering_upa(
                    cfg.nr_x, cfg.nr_y,
                    spatial_direction(f, ang.theta2_az, cfg),
                    spatial_direction(f, ang.theta2_el, cfg),
                ))

    # Panel-side arrival angles of the BS-RIS link depend on the pose alone.
    if pose.d0 <= 0.0:
        raise DegenerateGeometry("BS and RIS are horizontally coincident")
    theta0_az = wrap_to_pm_pi(math.pi / 2.0 - pose.phi0 - pose.phiR)
    theta0_el = math.atan(abs(geom.h_b - pose.h0) / pose.d0)
    for mi, f in enumerate(freqs):
        a_ris[mi] = steering_upa(
            cfg.nr_x, cfg.nr_y,
            spatial_direction(f, theta0_az, cfg),
            spatial_direction(f, theta0_el, cfg),
        )

    return LosGeometry(b_ris=b_ris, a_ris=a_ris, d_bar=d_bar, h_bar=h_bar,
                       beta0=beta0, beta1=beta1, beta2=beta2, omega=omega)


@dataclass
class ChannelRealization:
    """One random draw of all links at every subcarrier.

    g: (M, Nt, Nr) BS-RIS matrices; d: (K, M, Nt) direct vectors;
    h: (K, M, Nr) panel-user vectors; omega flags which users the panel serves.
    """

    g: np.ndarray
    d: np.ndarray
    h: np.ndarray
    beta0: float
    beta1: np.ndarray
    beta2: np.ndarray
    omega: np.ndarray


def _crandn(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0,1) array."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _mix_weights(k_factor: float, los_only: bool) -> tuple[float, float]:
    if los_only:
        return 1.0, 0.0
    return math.sqrt(k_factor / (k_factor + 1.0)), math.sqrt(1.0 / (k_factor + 1.0))


def sample_channel_realization(cfg: SystemConfig, geom: CellGeometry, pose: RisPose,
                               users: list[UserLocation], rng: np.random.Generator,
                               los: LosGeometry = None) -> ChannelRealization:
    """Draw one Rician realization of every link; deterministic given rng state."""
    if los is None:
        los = precompute_los(cfg, geom, pose, users)
    k = los.d_bar.shape[0]

    w0_los, w0_nlos = _mix_weights(cfg.k0, cfg.los_only)
    w1_los, w1_nlos = _mix_weights(cfg.k1, cfg.los_only)
    w2_los, w2_nlos = _mix_weights(cfg.k2, cfg.los_only)

    g_bar = np.einsum("mt,mr->mtr", los.b_ris, np.conj(los.a_ris))
    g_tilde = _crandn(rng, (cfg.m, cfg.nt, cfg.nr)) / math.sqrt(cfg.nt * cfg.nr)
    g = math.sqrt(los.beta0) * (w0_los * g_bar + w0_nlos * g_tilde)

    d_tilde = _crandn(rng, (k, cfg.m, cfg.nt)) / math.sqrt(cfg.nt)
    d = np.sqrt(los.beta1)[:, None, None] * (w1_los * los.d_bar + w1_nlos * d_tilde)

    h_tilde = _crandn(rng, (k, cfg.m, cfg.nr)) / math.sqrt(cfg.nr)
    h = np.sqrt(los.beta2)[:, None, None] * (w2_los * los.h_bar + w2_nlos * h_tilde)

    return ChannelRealization(g=g, d=d, h=h, beta0=los.beta0, beta1=los.beta1.copy(),
                              beta2=los.beta2.copy(), omega=los.omega.copy())


def effective_channel(real: ChannelRealization, theta: np.ndarray,
                      omega: np.ndarray) -> np.ndarray:
    """Per-subcarrier K x Nt effective matrix; row k is the conjugated sum of
    the direct vector and the phase-shifted reflected cascade."""
    k, m, nr = real.h.shape
    theta = np.asarray(theta)
    if theta.shape != (nr,):
        raise DimensionMismatch(f"phase vector must have length {nr}, got {theta.shape}")
    omega = np.asarray(omega)
    if omega.shape != (k,):
        raise DimensionMismatch(f"omega must have length {k}, got {omega.shape}")
    cascade = np.einsum("mtr,kmr->kmt", real.g, theta[None, None, :] * real.h)
    rows = real.d + omega[:, None, None] * cascade
    return np.conj(np.transpose(rows, (1, 0, 2)))
