"""Reference values: closed forms frozen as literals, searches against them."""

import math

import numpy as np
import pytest

from hjhomog.errors import OutsideValidatedRegion
from hjhomog.oracles import (disk_geodesic_value, disk_value_theta_half,
                             hopf_lax_free_1d, optimal_reflection,
                             reflection_search, sliding_speed)

# l* = -cos(theta)/sin^2(theta), s* = 1/sin(theta)
ANGLE_TABLE = [
    (0.6 * math.pi, 0.34164078649987367, 1.0514622242382672),
    (0.7 * math.pi, 0.8980559531591705, 1.2360679774997896),
    (0.8 * math.pi, 2.3416407864998727, 1.7013016167040795),
]


def test_optimal_reflection_closed_form():
    for theta, l_star, s_star in ANGLE_TABLE:
        want_l = -math.cos(theta) / math.sin(theta) ** 2
        want_s = 1.0 / math.sin(theta)
        assert abs(want_l - l_star) < 1e-12
        assert abs(want_s - s_star) < 1e-12
        assert abs(optimal_reflection(theta) - l_star) < 1e-12
        assert abs(sliding_speed(theta) - s_star) < 1e-12


def test_reflection_search_agrees_with_closed_form():
    for theta, l_star, s_star in ANGLE_TABLE:
        l_got, s_got = reflection_search(theta)
        assert abs(l_got - l_star) < 1e-8
        assert abs(s_got - s_star) < 1e-8


def test_reflection_two_thirds_pi_exact_fractions():
    theta = 2.0 * math.pi / 3.0
    assert abs(optimal_reflection(theta) - 2.0 / 3.0) < 1e-12
    assert abs(sliding_speed(theta) - 1.1547005383792515) < 1e-12


def test_disk_value_unobstructed():
    # straight-left ray clear of the disk: u = x1 + 2 - t
    assert abs(disk_value_theta_half(np.array([-2.0, 0.5]), 1.0) - (-1.0)) < 1e-12
    assert abs(disk_value_theta_half(np.array([0.0, 1.5]), 2.0) - 0.0) < 1e-12


def test_disk_value_wrap_probe_frozen():
    # horizontal reach, slide along the arc to the top, then straight left
    got = disk_value_theta_half(np.array([1.0, 0.5]), 3.0)
    assert abs(got - 0.18117214741215903) < 1e-12
    d1 = 1.0 - math.sqrt(0.75)
    arc = math.pi / 2.0 - math.asin(0.5)
    assert abs(got - (2.0 - (3.0 - d1 - arc))) < 1e-12


def test_disk_geodesic_value_frozen():
    got = disk_geodesic_value(np.array([1.0, 0.5]), 3.0)
    assert abs(got - 0.14350110879328448) < 1e-12
    # tangent-wrap transit: sqrt(r^2-1) + (pi/2 - atan2(x2,x1) - acos(1/r))
    r = math.hypot(1.0, 0.5)
    transit = math.sqrt(r * r - 1.0) + (
        math.pi / 2.0 - math.atan2(0.5, 1.0) - math.acos(1.0 / r))
    assert abs(got - (2.0 - 3.0 + transit)) < 1e-12
    # the geodesic beats the slide construction
    assert got < disk_value_theta_half(np.array([1.0, 0.5]), 3.0)


def test_disk_oracles_outside_region():
    with pytest.raises(OutsideValidatedRegion):
        disk_geodesic_value(np.array([0.5, 0.25]), 3.0)   # inside the hole
    with pytest.raises(OutsideValidatedRegion):
        disk_geodesic_value(np.array([1.0, 0.5]), 0.2)    # wrap not complete


def test_hopf_lax_free_linear_data():
    # linear u0 = a s + b: minimizer y* = x - t a, value a x + b - t a^2 / 2
    a, b = 0.7, -0.3
    got = hopf_lax_free_1d(0.4, 2.0, lambda s: a * np.asarray(s) + b, 5.0)
    assert abs(got - (a * 0.4 + b - 2.0 * a * a / 2.0)) < 1e-9


def test_hopf_lax_free_sine_lower_envelope():
    u0 = lambda s: np.sin(2 * np.pi * np.asarray(s)) / (2 * np.pi)
    x, t = 0.3, 0.5
    got = hopf_lax_free_1d(x, t, u0, 3.0)
    ys = np.linspace(x - 3.0, x + 3.0, 20001)
    brute = np.min((x - ys) ** 2 / (2 * t) + u0(ys))
    assert got <= brute + 1e-10
    assert abs(got - brute) < 1e-6
