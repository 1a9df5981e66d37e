"""Reflected-path construction against half-space and disk closed forms."""

import math

import numpy as np
import pytest

from hjhomog.geometry import ObliqueField, half_space, single_ball
from hjhomog.skorokhod import (ControlSignal, ReflectedPath, residual,
                               sliding_decomposition, solve_sp)


def _wall():
    dom = half_space(axis=1)          # admissible x2 >= 0, wall at x2 = 0
    return dom, ObliqueField(dom)


def test_constant_push_slides_along_wall():
    dom, gamma = _wall()
    ctl = ControlSignal.constant(np.array([1.0, -1.0]), 1.0, 1e-3)
    path = solve_sp(np.array([0.0, 0.35]), ctl, dom, gamma)
    np.testing.assert_allclose(path.eta[-1], [1.0, 0.0], atol=1e-9)
    rep = residual(path, dom, gamma)
    assert rep["max_psi_violation"] <= 1e-9
    assert rep["max_complementarity"] <= 1e-10
    # after the hit the rate locks to the normal inflow v . nu = 1
    on_wall = path.eta[1:, 1] <= 1e-9
    assert np.all(path.l[on_wall][2:] > 0.9)
    assert np.all(path.l[~on_wall] < 1e-12)


def test_half_space_convergence_order():
    dom, gamma = _wall()

    def v(s):
        s = np.asarray(s, dtype=float)
        return np.stack([np.sin(s), -np.cos(s)], axis=-1)

    x0 = np.array([0.0, 0.3])
    t_hit = math.asin(0.3)
    end_exact = np.array([1.0 - math.cos(1.0), 0.0])
    int_l_exact = math.sin(1.0) - 0.3
    errs = []
    dts = [1e-2, 5e-3, 2.5e-3]
    for dt in dts:
        ctl = ControlSignal.from_function(v, 1.0, dt, 2)
        path = solve_sp(x0, ctl, dom, gamma)
        int_l = float(np.sum(path.l) * dt)
        err = float(np.linalg.norm(path.eta[-1] - end_exact))
        err += abs(int_l - int_l_exact)
        errs.append(err)
        assert residual(path, dom, gamma)["max_psi_violation"] <= 1e-9
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert 0.8 <= slope <= 1.2, (slope, errs)
    assert t_hit / dts[0] % 1.0 > 0.05  # the kink is off the grid by design


def test_rate_bounded_by_speed_for_normal_field():
    dom, gamma = _wall()
    rng = np.random.default_rng(0)
    dt = 2e-3
    for _ in range(5):
        vv = rng.uniform(-1.5, 1.5, 2)
        vv[1] = -abs(vv[1]) - 0.1
        ctl = ControlSignal.constant(vv, 0.8, dt)
        path = solve_sp(np.array([0.2, 0.25]), ctl, dom, gamma)
        assert np.max(path.l - np.linalg.norm(path.v, axis=1)) <= 10 * dt


def test_tilted_field_drifts_tangentially():
    dom = half_space(axis=1)
    gamma = ObliqueField(dom, gamma=lambda y: np.broadcast_to(
        np.array([0.5, -1.0]), np.asarray(y, dtype=float).shape).copy(),
        validate=False)
    ctl = ControlSignal.constant(np.array([0.0, -1.0]), 1.0, 1e-3)
    path = solve_sp(np.array([0.0, 0.2]), ctl, dom, gamma)
    # sliding: 0 = -1 + l, so l = 1 and eta1' = -0.5 after the hit at t = 0.2
    np.testing.assert_allclose(path.eta[-1], [-0.4, 0.0], atol=5e-3)
    rep = residual(path, dom, gamma)
    assert rep["max_psi_violation"] <= 1e-9
    assert rep["max_ode_defect"] <= 5e-2


def test_disk_wrap_containment():
    dom = single_ball(1.0)
    gamma = ObliqueField(dom)
    # reach at t = 2 - cos(asin(0.3)), slide to the top until
    # t = 1.046 + ln(tan(pi/4)/tan(asin(0.3)/2)) = 2.92, then free
    dt = 1e-3
    ctl = ControlSignal.constant(np.array([-1.0, 0.0]), 4.0, dt)
    path = solve_sp(np.array([2.0, 0.3]), ctl, dom, gamma)
    rep = residual(path, dom, gamma)
    assert rep["max_psi_violation"] <= 1e-9
    # multipliers act only within one step's reach of the boundary
    assert rep["max_complementarity"] <= dt * np.max(np.linalg.norm(path.v, axis=1))
    # and only on steps whose tentative point actually exits the closure
    tentative = path.eta[:-1] + dt * path.v
    exits = np.array([float(dom.psi(p)) > 0.0 for p in tentative])
    assert np.all(path.l[~exits] == 0.0)
    assert np.all(path.l[exits] > 0.0)
    assert np.max(path.l) > 0.0                    # it does touch the disk
    assert np.min(np.linalg.norm(path.eta, axis=1)) >= 1.0 - 1e-9
    # detaches near the top around t = 2.92, then drifts free to the left
    assert abs(path.eta[-1][1] - 1.0) < 0.05
    assert path.eta[-1][0] < -0.9


def test_sliding_decomposition_consistency():
    dom = single_ball(1.0)
    gamma = ObliqueField(dom)
    y = np.array([0.0, 1.0])
    v = np.array([0.7, -0.9])                       # pushes into the hole
    eta_dot, l = sliding_decomposition(y, v, gamma)
    assert l > 0.0
    np.testing.assert_allclose(eta_dot + l * gamma(y), v, atol=1e-9)
    # the tangential part survives; no inward normal component remains
    nu = gamma(y)
    assert abs(float(eta_dot @ nu)) < 1e-9


def test_interior_control_is_free():
    dom, gamma = _wall()
    ctl = ControlSignal.constant(np.array([0.3, 0.4]), 1.0, 1e-3)
    path = solve_sp(np.array([0.0, 0.5]), ctl, dom, gamma)
    np.testing.assert_allclose(path.eta[-1], [0.3, 0.9], atol=1e-9)
    assert np.max(path.l) == 0.0


def test_path_csv_round_trip(tmp_path):
    dom, gamma = _wall()
    ctl = ControlSignal.constant(np.array([1.0, -1.0]), 0.5, 1e-2)
    path = solve_sp(np.array([0.0, 0.2]), ctl, dom, gamma)
    out = tmp_path / "path.csv"
    path.write_csv(out, metadata={"case": "wall"})
    lines = out.read_text().splitlines()
    header = next(l for l in lines if not l.startswith("#"))
    assert header.split(",")[:2] == ["s", "eta_1"]
    data = np.loadtxt([l for l in lines if not l.startswith("#")][1:],
                      delimiter=",")
    assert data.shape[0] == len(path.times)


def test_control_signal_shapes():
    ctl = ControlSignal.constant(np.array([1.0, 0.0]), 1.0, 0.25)
    assert ctl.v.shape == (4, 2)
    assert len(ctl.times) == 5
    assert abs(ctl.dt - 0.25) < 1e-15
    ctl2 = ControlSignal.from_function(
        lambda s: np.stack([np.cos(np.asarray(s)), np.sin(np.asarray(s))],
                           axis=-1), 1.0, 0.25, 2)
    assert ctl2.v.shape == ctl.v.shape
    from hjhomog.errors import ValidationError as VE
    with pytest.raises(VE):
        ControlSignal(np.array([0.0, 0.1, 0.3]), np.array([[1.0, 0.0]]))
