import math

import numpy as np
import pytest

from risplan import (
    CellGeometry,
    DegenerateGeometry,
    RisPose,
    UserLocation,
    ValidationError,
    coverage_indicator,
    link_angles,
    ris_user_distance,
)
from risplan.geometry import wrap_to_2pi, wrap_to_pm_pi

GEOM = CellGeometry(r=200.0, h_b=10.0, h_u=1.5, r_min=10.0, r_max=200.0, h_min=1.0, h_max=10.0)


def test_wrap_pm_pi_range_and_boundary():
    assert wrap_to_pm_pi(math.pi) == pytest.approx(math.pi)
    assert wrap_to_pm_pi(-math.pi) == pytest.approx(math.pi)
    assert wrap_to_pm_pi(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    rng = np.random.default_rng(0)
    for ang in rng.uniform(-50, 50, 200):
        w = wrap_to_pm_pi(ang)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.cos(w), math.cos(ang), abs_tol=1e-12)
        assert math.isclose(math.sin(w), math.sin(ang), abs_tol=1e-12)


def test_wrap_2pi_range():
    assert wrap_to_2pi(-0.1) == pytest.approx(2 * math.pi - 0.1)
    assert wrap_to_2pi(2 * math.pi) == 0.0


def test_geometry_invariants_enforced():
    with pytest.raises(ValidationError):
        CellGeometry(r=100.0, r_min=0.0, r_max=50.0)
    with pytest.raises(ValidationError):
        CellGeometry(r=100.0, r_min=60.0, r_max=50.0)
    with pytest.raises(ValidationError):
        CellGeometry(r=100.0, r_min=10.0, r_max=50.0, h_u=12.0, h_b=10.0)


def test_pose_wraps_angles():
    pose = RisPose(d0=10.0, phi0=-math.pi / 2, h0=5.0, phiR=5 * math.pi)
    assert 0.0 <= pose.phi0 < 2 * math.pi
    assert pose.phi0 == pytest.approx(3 * math.pi / 2)
    assert pose.phiR == pytest.approx(math.pi)


def test_distance_coincident():
    pose = RisPose(d0=10.0, phi0=1.0, h0=5.0, phiR=0.0)
    assert ris_user_distance(pose, UserLocation(10.0, 1.0)) == 0.0


def test_distance_right_angle():
    # law of cosines by hand: sqrt(100 + 100 - 0) = sqrt(200)
    pose = RisPose(d0=10.0, phi0=math.pi / 2, h0=5.0, phiR=0.0)
    d = ris_user_distance(pose, UserLocation(10.0, 0.0))
    assert d == pytest.approx(math.sqrt(200.0), rel=1e-12)
    assert d == pytest.approx(14.1421, abs=1e-4)


def test_distance_collinear_opposite():
    pose = RisPose(d0=10.0, phi0=0.0, h0=5.0, phiR=0.0)
    assert ris_user_distance(pose, UserLocation(20.0, math.pi)) == pytest.approx(30.0)


def test_distance_symmetry_and_triangle_inequality():
    rng = np.random.default_rng(1)
    for _ in range(300):
        d0, dk = rng.uniform(0.1, 200, 2)
        phi0, phik = rng.uniform(0, 2 * math.pi, 2)
        pose = RisPose(d0=d0, phi0=phi0, h0=5.0, phiR=0.0)
        swapped = RisPose(d0=dk, phi0=phik, h0=5.0, phiR=0.0)
        d = ris_user_distance(pose, UserLocation(dk, phik))
        assert d == pytest.approx(ris_user_distance(swapped, UserLocation(d0, phi0)), rel=1e-12)
        assert abs(d0 - dk) - 1e-9 <= d <= d0 + dk + 1e-9


def test_link_angles_boresight_equal_heights():
    geom = CellGeometry(r=200.0, h_b=10.0, h_u=1.5, r_min=10.0, r_max=200.0,
                        h_min=1.0, h_max=10.0)
    pose = RisPose(d0=10.0, phi0=0.0, h0=10.0, phiR=math.pi / 2)
    ang = link_angles(pose, UserLocation(30.0, 0.5), geom)
    assert ang.theta0_az == pytest.approx(0.0, abs=1e-12)
    assert ang.theta0_el == pytest.approx(0.0, abs=1e-12)


def test_link_angles_elevation_quarter_pi():
    # arctan(|10 - 0| / 10) = pi/4; RIS height 0 is outside the usual box but
    # the angle formula itself has no box dependence.
    geom = CellGeometry(r=200.0, h_b=10.0, h_u=1.5, r_min=10.0, r_max=200.0,
                        h_min=0.0, h_max=10.0)
    pose = RisPose(d0=10.0, phi0=0.3, h0=0.0, phiR=1.0)
    ang = link_angles(pose, UserLocation(30.0, 0.5), geom)
    assert ang.theta0_el == pytest.approx(math.pi / 4, rel=1e-12)


def test_link_angles_collinear_beyond():
    # user behind the panel on the BS axis: triangle cosine is exactly -1,
    # acos gives pi, and the azimuth collapses to 0 for phiR = pi/2
    pose = RisPose(d0=10.0, phi0=0.0, h0=5.0, phiR=math.pi / 2)
    ang = link_angles(pose, UserLocation(50.0, 0.0), GEOM)
    assert ang.theta2_az == pytest.approx(0.0, abs=1e-12)


def test_link_angles_wrap_invariance():
    rng = np.random.default_rng(2)
    for _ in range(100):
        d0 = rng.uniform(1, 100)
        dk = rng.uniform(1, 100)
        phi0, phik, phiR = rng.uniform(0, 2 * math.pi, 3)
        user = UserLocation(dk, phik)
        base = link_angles(RisPose(d0, phi0, 5.0, phiR), user, GEOM)
        bumped = link_angles(RisPose(d0, phi0 + 2 * math.pi, 5.0, phiR),
                             UserLocation(dk, phik + 2 * math.pi), GEOM)
        assert base.theta0_az == pytest.approx(bumped.theta0_az, abs=1e-9)
        assert base.theta2_az == pytest.approx(bumped.theta2_az, abs=1e-9)


def test_link_angles_degenerate():
    pose = RisPose(d0=10.0, phi0=1.0, h0=5.0, phiR=0.0)
    with pytest.raises(DegenerateGeometry):
        link_angles(pose, UserLocation(10.0, 1.0), GEOM)
    with pytest.raises(DegenerateGeometry):
        link_angles(RisPose(0.0, 0.0, 5.0, 0.0), UserLocation(10.0, 1.0), GEOM)


def test_coverage_boresight_and_flip():
    pose = RisPose(d0=10.0, phi0=0.0, h0=10.0, phiR=math.pi / 2)
    user = UserLocation(50.0, 0.0)
    assert coverage_indicator(pose, user, GEOM) == 1
    flipped = RisPose(d0=10.0, phi0=0.0, h0=10.0, phiR=3 * math.pi / 2)
    assert coverage_indicator(flipped, user, GEOM) == 0


def test_coverage_flip_kills_strict_interior():
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(400):
        pose = RisPose(rng.uniform(5, 50), rng.uniform(0, 2 * math.pi), 5.0,
                       rng.uniform(0, 2 * math.pi))
        user = UserLocation(rng.uniform(1, 150), rng.uniform(0, 2 * math.pi))
        ang = link_angles(pose, user, GEOM)
        strict = abs(ang.theta0_az) < math.pi / 2 - 1e-6 and abs(ang.theta2_az) < math.pi / 2 - 1e-6
        if strict and coverage_indicator(pose, user, GEOM) == 1:
            checked += 1
            flipped = RisPose(pose.d0, pose.phi0, pose.h0, pose.phiR + math.pi)
            assert coverage_indicator(flipped, user, GEOM) == 0
    assert checked > 20


def test_coverage_degenerate_is_zero():
    pose = RisPose(d0=10.0, phi0=1.0, h0=5.0, phiR=0.0)
    assert coverage_indicator(pose, UserLocation(10.0, 1.0), GEOM) == 0


def test_coverage_deterministic():
    pose = RisPose(d0=12.0, phi0=0.7, h0=6.0, phiR=1.1)
    user = UserLocation(80.0, 0.9)
    vals = {coverage_indicator(pose, user, GEOM) for _ in range(5)}
    assert len(vals) == 1
