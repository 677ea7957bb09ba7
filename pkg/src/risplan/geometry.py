"""Polar-coordinate cell geometry: RIS/user distances, link angles, coverage.

The cell is centred on the BS.  The RIS sits at horizontal distance d0 and
azimuth phi0 from the BS, at height h0, with its panel orientation given by
phiR (counter-clockwise from the x axis).  Users live at (dk, phik) at the
common height h_u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateGeometry, ValidationError

TWO_PI = 2.0 * math.pi


def wrap_to_pm_pi(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, TWO_PI)
    if wrapped <= 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


def wrap_to_2pi(angle: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    wrapped = math.fmod(angle, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    return 0.0 if wrapped >= TWO_PI else wrapped


@dataclass(frozen=True)
class CellGeometry:
    """Cell radius, BS/user heights, and the allowed RIS placement box."""

    r: float = 200.0
    h_b: float = 10.0
    h_u: float = 1.5
    r_min: float = 10.0
    r_max: float = 200.0
    h_min: float = 1.0
    h_max: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.r_min <= self.r_max <= self.r):
            raise ValidationError(
                f"need 0 < r_min <= r_max <= r, got {self.r_min}, {self.r_max}, {self.r}"
            )
        if not (0.0 <= self.h_min <= self.h_max):
            raise ValidationError(f"need 0 <= h_min <= h_max, got {self.h_min}, {self.h_max}")
        if not self.h_u < self.h_b:
            raise ValidationError("user height must be below BS height")

    def validate_pose(self, pose: "RisPose") -> None:
        if not (self.r_min <= pose.d0 <= self.r_max):
            raise ValidationError(f"d0={pose.d0} outside [{self.r_min}, {self.r_max}]")
        if not (self.h_min <= pose.h0 <= self.h_max):
            raise ValidationError(f"h0={pose.h0} outside [{self.h_min}, {self.h_max}]")


@dataclass(frozen=True)
class RisPose:
    """RIS placement: horizontal distance, azimuth, height, panel orientation."""

    d0: float
    phi0: float
    h0: float
    phiR: float

    def __post_init__(self):
        if self.d0 < 0.0:
            raise ValidationError("d0 must be nonnegative")
        object.__setattr__(self, "phi0", wrap_to_2pi(self.phi0))
        object.__setattr__(self, "phiR", wrap_to_2pi(self.phiR))


@dataclass(frozen=True)
class UserLocation:
    """User position in BS-centred polar coordinates (height is geometry-wide h_u)."""

    dk: float
    phik: float

    def __post_init__(self):
        if self.dk < 0.0:
            raise ValidationError("dk must be nonnegative")


@dataclass(frozen=True)
class LinkAngles:
    """Physical angles of the BS-RIS and RIS-user links, azimuths in (-pi, pi]."""

    theta0_az: float  # BS seen from the panel, azimuth
    theta0_el: float  # BS seen from the panel, elevation
    theta2_az: float  # user seen from the panel, azimuth
    theta2_el: float  # user seen from the panel, elevation
    phi0: float       # BS departure azimuth toward the RIS
    phi1: float       # BS departure azimuth toward the user


def ris_user_distance(pose: RisPose, user: UserLocation) -> float:
    """Horizontal RIS-user distance via the law of cosines."""
    d2 = (
        pose.d0 * pose.d0
        + user.dk * user.dk
        - 2.0 * pose.d0 * user.dk * math.cos(pose.phi0 - user.phik)
    )
    return math.sqrt(max(d2, 0.0))


def link_angles(pose: RisPose, user: UserLocation, geom: CellGeometry) -> LinkAngles:
    """Panel-relative azimuth/elevation angles for both hops of the reflected path.

    Raises DegenerateGeometry when the BS-RIS or RIS-user horizontal distance
    is zero, since the triangle the azimuths are built from is then undefined.
    """
    if pose.d0 <= 0.0:
        raise DegenerateGeometry("BS and RIS are horizontally coincident")
    dkr = ris_user_distance(pose, user)
    if dkr <= 0.0:
        raise DegenerateGeometry("RIS and user are horizontally coincident")

    theta0_az = wrap_to_pm_pi(math.pi / 2.0 - pose.phi0 - pose.phiR)
    theta0_el = math.atan(abs(geom.h_b - pose.h0) / pose.d0)

    # Interior angle at the RIS of the BS-RIS-user triangle; the cosine is
    # clamped against floating-point overshoot on collinear layouts.
    cos_tri = (pose.d0 * pose.d0 + dkr * dkr - user.dk * user.dk) / (2.0 * pose.d0 * dkr)
    cos_tri = min(1.0, max(-1.0, cos_tri))
    theta2_az = wrap_to_pm_pi(math.acos(cos_tri) - (math.pi / 2.0 - pose.phi0) - pose.phiR)
    theta2_el = math.atan(abs(geom.h_u - pose.h0) / dkr)

    return LinkAngles(
        theta0_az=theta0_az,
        theta0_el=theta0_el,
        theta2_az=theta2_az,
        theta2_el=theta2_el,
        phi0=wrap_to_pm_pi(pose.phi0),
        phi1=wrap_to_pm_pi(user.phik),
    )


def coverage_indicator(pose: RisPose, user: UserLocation, geom: CellGeometry) -> int:
    """1 when both the BS and the user fall in the panel's frontal azimuth
    half-space (|azimuth| <= pi/2, boundary counted as covered), else 0.

    Degenerate geometry counts as uncovered.
    """
    try:
        ang = link_angles(pose, user, geom)
    except DegenerateGeometry:
        return 0
    half_pi = math.pi / 2.0
    if abs(ang.theta0_az) <= half_pi and abs(ang.theta2_az) <= half_pi:
        return 1
    return 0
