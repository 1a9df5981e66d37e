"""Metric samples, Fekete ladders, the effective table, and Hopf-Lax reuse."""

import math

import numpy as np
import pytest

from hjhomog.errors import TableGap, Unreachable, ValidationError
from hjhomog.geometry import ObliqueField, free_space, single_ball
from hjhomog.hamiltonian import (ContactAngleBC, Hamiltonian,
                                 LagrangianEvaluator, ObliqueBC)
from hjhomog.metric import (MetricEngine, build_effective_table,
                            homogenized_solve, homogenized_value,
                            symmetry_allows_shared_sweep, translation_defect)
from hjhomog.sweep import Window
from hjhomog.value import linear_initial, sine_initial


@pytest.fixture(scope="module")
def free_engine():
    dom = free_space()
    gamma = ObliqueField(dom, validate=False)
    ev = LagrangianEvaluator(Hamiltonian("quadratic"),
                             ObliqueBC(dom, gamma, g=0.0))
    # v_max 2 with four rungs puts speeds 0.5 and 1 exactly on the net,
    # so the straight runs below need no chattering (whose Lagrangian mix
    # would otherwise overshoot the continuous cost)
    return MetricEngine(dom, gamma, ev, h=1.0 / 24.0, v_max=2.0, n_speeds=4,
                        n_dirs=12)


@pytest.fixture(scope="module")
def disk_eikonal_engine():
    dom = single_ball(1.0)
    gamma = ObliqueField(dom)
    ev = LagrangianEvaluator(Hamiltonian("eikonal"),
                             ContactAngleBC(dom, math.pi / 2.0))
    return MetricEngine(dom, gamma, ev, h=1.0 / 16.0, v_max=1.0, n_speeds=2,
                        n_dirs=12)


def test_free_space_quadratic_identity(free_engine):
    x = np.array([0.0, 0.0])
    y = np.array([1.0, 0.0])
    s = free_engine.metric(1.0, x, y)
    assert s.feasible
    assert abs(s.value - 0.5) < 0.05
    # lower bound from resting costs, upper bound from the connector route
    assert s.value >= s.lower_bound(free_engine.evaluator) - 1e-9


def test_free_space_time_scaling(free_engine):
    x = np.array([0.0, 0.0])
    y = np.array([1.0, 0.0])
    v1 = free_engine.metric(1.0, x, y).value
    v2 = free_engine.metric(2.0, x, y).value
    # m(t) = |x-y|^2 / (2t) halves when t doubles
    assert abs(v2 - 0.25) < 0.05
    assert v2 < v1


def test_unreachable_precheck(free_engine):
    with pytest.raises(Unreachable):
        free_engine.metric(0.1, np.array([0.0, 0.0]), np.array([1.0, 0.0]))


def test_eikonal_geodesic_threshold(disk_eikonal_engine):
    # shortest admissible route (-2,0) -> (2,0) wraps the disk:
    # 2 sqrt(3) + pi/3 = 4.5113 at unit speed; the horizon needs slack past
    # that so the reachability frontier's interpolation haze relaxes to zero
    x = np.array([-2.0, 0.0])
    y = np.array([2.0, 0.0])
    late = disk_eikonal_engine.metric(6.0, x, y)
    assert late.feasible
    assert abs(late.value) < 1e-6
    early = disk_eikonal_engine.metric(4.2, x, y)
    assert not early.feasible


def test_metric_translation_invariance(metric_engine):
    t = 1.0
    x = np.array([0.3, 0.4])
    y = np.array([0.9, 0.6])
    base = metric_engine.metric(t, x, y).value
    shifted = metric_engine.metric(t, x + [2.0, -1.0], y + [2.0, -1.0]).value
    assert abs(base - shifted) < 1e-9
    defect, _, _ = translation_defect(metric_engine, t, x, y,
                                      np.array([1.0, 3.0]))
    assert defect < 1e-9


def test_metric_star_relaxes_endpoints(metric_engine):
    t = 1.0
    x = np.array([0.0, 0.0])        # inside a hole: only the star version works
    y = np.array([1.5, 0.0])
    s = metric_engine.metric_star(t, x, y, want_path=True)
    assert s.feasible
    assert s.kind == "m*"
    assert s.endpoints_star is not None
    x_hat, y_hat = s.endpoints_star
    for p in (x_hat, y_hat):
        assert abs(float(metric_engine.domain.psi(p))) < 1e-6
    # relaxation can only help relative to any admissible endpoint pair
    plain = metric_engine.metric(t, x_hat, y_hat)
    assert s.value <= plain.value + 1e-9


def test_check_additivity_report(metric_engine):
    plan = [(1.0, np.array([1.5, 0.0])), (1.0, np.array([0.0, 1.5]))]
    rep = metric_engine.check_additivity(plan)
    assert len(rep["samples"]) == 2
    assert rep["C_estimate"] >= 0.0
    assert rep["max_sub_defect"] <= rep["C_estimate"] + 1e-12
    for row in rep["samples"]:
        assert row["m_star_t"] >= -1e-9


def test_shared_sweep_symmetry_gate(metric_engine, free_engine):
    assert symmetry_allows_shared_sweep(metric_engine)
    dom = metric_engine.domain
    tilted = ObliqueField(dom, gamma=lambda y: _tilt(dom, y), validate=False)
    ev = LagrangianEvaluator(Hamiltonian("quadratic"),
                             ObliqueBC(dom, tilted, g=0.0))
    eng = MetricEngine(dom, tilted, ev, h=1.0 / 24.0)
    assert not symmetry_allows_shared_sweep(eng)


def _tilt(dom, y):
    g = np.asarray(dom.grad_psi(np.asarray(y, dtype=float)), dtype=float)
    n = g / np.maximum(np.linalg.norm(g, axis=-1, keepdims=True), 1e-12)
    return n + np.array([0.15, 0.0])


def test_effective_table_structure(effective_table):
    tab = effective_table
    qs = tab.q_grid
    vals = tab.values
    # symmetric grid with a mirrored branch
    np.testing.assert_allclose(qs, -qs[::-1], atol=1e-12)
    np.testing.assert_allclose(vals, vals[::-1], atol=1e-12)
    j0 = int(np.argmin(np.abs(qs)))
    assert abs(vals[j0]) < 0.02
    # straight corridors keep the axis direction free: L(q) ~ q^2/2
    assert np.all(vals >= 0.5 * qs ** 2 - 0.02)
    assert np.max(vals - 0.5 * qs ** 2) < 0.05
    assert tab.convexity_defect() < 0.03
    assert tab.cauchy_gap < 0.15
    assert tab.meta["mode"] == "shared-sweep"
    assert "calibration" in tab.meta


def test_effective_table_alignment_guard(metric_engine):
    with pytest.raises(ValidationError):
        build_effective_table(metric_engine, np.array([0.0, 0.3]), depth=3)


def test_table_call_and_gap(effective_table):
    tab = effective_table
    mid = 0.5 * (tab.q_grid[3] + tab.q_grid[4])
    v = tab(mid)
    lo = min(tab.values[3], tab.values[4])
    hi = max(tab.values[3], tab.values[4])
    assert lo - 1e-9 <= v <= hi + 1e-9
    with pytest.raises(TableGap):
        tab(float(tab.q_grid[-1]) + 0.5)


def test_effective_hamiltonian_round_trip(effective_table):
    ham = effective_table.effective_hamiltonian()
    # near-quadratic table: H(p) ~ p^2/2 inside the covered slope range
    p_mid = 0.8
    vals = ham(np.array([p_mid]))
    assert abs(float(vals[0]) - 0.5 * p_mid ** 2) < 0.06
    back = ham.legendre_back(np.array([0.5, 1.0]))
    want = effective_table(np.array([0.5, 1.0]))
    np.testing.assert_allclose(back, want, atol=0.06)


def test_homogenized_value_and_gap(effective_table, sine_u0):
    x = np.array([0.35, 0.0])
    assert homogenized_value(effective_table, sine_u0, x, 0.0) == float(sine_u0(x))
    v = homogenized_value(effective_table, sine_u0, x, 0.5)
    vd = homogenized_value(effective_table, sine_u0, x, 0.5, refine=False)
    assert v <= vd + 1e-12
    assert v <= float(sine_u0(x)) + 1e-9   # rest control costs nothing here
    steep = linear_initial(np.array([3.0, 0.0]))
    with pytest.raises(TableGap):
        homogenized_value(effective_table, steep, x, 1.0)


def test_homogenized_solve_field(effective_table, sine_u0):
    window = Window.cover([0.0, 0.0], [1.0, 0.25], 1.0 / 16.0,
                          periodic=(True, True))
    field = homogenized_solve(effective_table, sine_u0, window, 0.5, 0.25)
    assert field.bc_kind == "homogenized"
    ks = field.stored_levels()
    assert 0 in ks and 2 in ks
    nodes = window.nodes()
    want = np.array([homogenized_value(effective_table, sine_u0, p, 0.5)
                     for p in nodes[:5]])
    got = field.values(2)[:5]
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_connect_boundary_points(metric_engine):
    a = np.array([0.25, 0.0])
    b = np.array([0.0, 0.25])
    path = metric_engine.connect_boundary_points(a, b, duration=1.0)
    psi = np.array([float(metric_engine.domain.psi(p)) for p in path.eta])
    assert np.max(np.abs(psi)) < 0.02
    np.testing.assert_allclose(path.eta[0], a, atol=0.05)
    np.testing.assert_allclose(path.eta[-1], b, atol=0.05)
    # quarter arc of radius 0.25
    assert abs(path.meta["length"] - math.pi * 0.25 / 2.0) < 0.05


def test_effective_metric_ladder(metric_engine):
    rep = metric_engine.effective_metric(1.0, np.array([0.0, 0.0]),
                                         np.array([1.5, 0.0]), depth=2)
    ks = sorted(rep["a_table"])
    assert ks == [1, 2, 4]
    assert rep["cauchy_gap"] == abs(rep["a_table"][4] - rep["a_table"][2])
    assert rep["richardson"] == pytest.approx(
        2 * rep["a_table"][4] - rep["a_table"][2])
    # rungs are genuine values, not degenerate overlaps
    assert rep["a_table"][1] > 0.1
