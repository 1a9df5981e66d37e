"""Closed-form conjugates, the numeric sup, and boundary-condition checks."""

import math

import numpy as np
import pytest

from hjhomog.errors import DegenerateAngle, ValidationError
from hjhomog.geometry import ObliqueField, ball_lattice, single_ball
from hjhomog.hamiltonian import (SENTINEL, ContactAngleBC, Hamiltonian,
                                 LagrangianEvaluator, ObliqueBC,
                                 boundary_operator)

THETA = 2.0 * math.pi / 3.0
H_COS = math.cos(THETA)          # -1/2


def _contact_eval(kind="quadratic", theta=THETA, **kw):
    dom = single_ball(1.0)
    return LagrangianEvaluator(Hamiltonian(kind, **kw),
                               ContactAngleBC(dom, theta))


def test_quadratic_legendre_closed_form():
    def pot(y):
        y = np.asarray(y, dtype=float)
        return 0.3 * np.cos(2 * np.pi * y[..., 0]) * np.cos(2 * np.pi * y[..., 1])

    H = Hamiltonian("quadratic", potential=pot)
    dom = ball_lattice(0.25)
    ev = LagrangianEvaluator(H, ObliqueBC(dom, ObliqueField(dom), g=0.0))
    rng = np.random.default_rng(0)
    for _ in range(32):
        y = rng.uniform(-1, 1, 2)
        q = rng.uniform(-2, 2, 2)
        want = 0.5 * q @ q - pot(y)
        assert abs(ev.legendre(y, q) - want) < 1e-12
    assert abs(H.k0 - 0.3) < 1e-12


def test_eikonal_legendre_cone():
    ev = _contact_eval("eikonal")
    y = np.array([0.0, 1.0])
    assert ev.legendre(y, np.array([0.6, 0.0])) == 0.0
    assert ev.legendre(y, np.array([0.0, 1.0])) == 0.0
    assert ev.legendre(y, np.array([1.2, 0.0])) >= SENTINEL / 2


def test_contact_quadratic_closed_form_hand_values():
    ev = _contact_eval()
    y = np.array([0.0, 1.0])
    # step_cost(y, v, l) = max(|v| + cos(theta) l, 0)^2 / 2
    assert abs(ev.step_cost(y, np.array([2.0, 0.0]), 1.0) - 1.125) < 1e-12
    assert abs(ev.step_cost(y, np.array([1.0, 0.0]), 0.0) - 0.5) < 1e-12
    assert abs(ev.step_cost(y, np.array([0.0, 1.0]), 2.0)) < 1e-12
    assert abs(ev.step_cost(y, np.array([0.0, 0.0]), 0.0)) < 1e-12


def test_contact_lambda_zero_reduces_to_legendre():
    ev = _contact_eval()
    rng = np.random.default_rng(1)
    for _ in range(16):
        y = np.array([0.0, 1.0])
        q = rng.uniform(-2, 2, 2)
        assert abs(ev.lagrangian(y, q, 0.0) - ev.legendre(y, q)) < 1e-12


def test_contact_numeric_sup_matches_closed_form():
    # a custom kind with the same values forces the generic polar search
    num = _contact_eval("custom", func=lambda y, p: 0.5 * np.sum(
        np.asarray(p, dtype=float) ** 2, axis=-1), k0=0.0, radial=True)
    ref = _contact_eval("quadratic")
    y = np.array([0.0, 1.0])
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(60):
        v = rng.uniform(-1.5, 1.5, 2)
        l = rng.uniform(0.0, np.linalg.norm(v))
        got = float(num.step_cost(y, v, l))
        want = float(ref.step_cost(y, v, l))
        worst = max(worst, abs(got - want))
    assert worst < 1e-6


def test_contact_sandwich_with_potential():
    def pot(y):
        y = np.asarray(y, dtype=float)
        return 0.2 * np.cos(2 * np.pi * y[..., 0]) * np.cos(2 * np.pi * y[..., 1])

    dom = ball_lattice(0.25)
    ev = LagrangianEvaluator(Hamiltonian("quadratic", potential=pot),
                             ContactAngleBC(dom, THETA))
    k0 = ev.hamiltonian.k0
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, size=(200, 2))
    for y in pts:
        v = rng.uniform(-2, 2, 2)
        l = rng.uniform(0.0, np.linalg.norm(v))
        mid = 0.5 * (np.linalg.norm(v) + H_COS * l) ** 2
        cost = float(ev.step_cost(y, v, l))
        assert mid - k0 - 1e-9 <= cost <= mid + k0 + 1e-9


def test_eikonal_contact_feasibility_cone():
    ev = _contact_eval("eikonal")
    y = np.array([0.0, 1.0])
    # |v| <= 1 - l cos(theta) is free, outside is forbidden
    assert ev.step_cost(y, np.array([1.2, 0.0]), 1.0) == 0.0
    assert abs(ev.step_cost(y, np.array([1.5, 0.0]), 1.0)) < 1e-12
    assert ev.step_cost(y, np.array([1.6, 0.0]), 1.0) >= SENTINEL / 2
    assert ev.step_cost(y, np.array([1.2, 0.0]), 0.0) >= SENTINEL / 2


def test_fenchel_young_oblique():
    dom = ball_lattice(0.25)
    ev = LagrangianEvaluator(Hamiltonian("quadratic"),
                             ObliqueBC(dom, ObliqueField(dom), g=0.0))
    H = ev.hamiltonian
    rng = np.random.default_rng(4)
    for _ in range(100):
        y = rng.uniform(-1, 1, 2)
        p = rng.uniform(-3, 3, 2)
        q = rng.uniform(-3, 3, 2)
        assert p @ q <= H(y, p) + ev.legendre(y, q) + 1e-12


def test_fenchel_young_contact_modified():
    ev = _contact_eval()
    H = ev.hamiltonian
    y = np.array([0.0, 1.0])
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = rng.uniform(-3, 3, 2)
        q = rng.uniform(-3, 3, 2)
        lam = rng.uniform(0.0, 2.0)
        lhs = p @ q + lam * H_COS * np.linalg.norm(p)
        assert lhs <= H(y, p) + ev.lagrangian(y, q, lam) + 1e-12


def test_lagrangian_convex_in_q():
    ev = _contact_eval()
    y = np.array([0.0, 1.0])
    rng = np.random.default_rng(6)
    for _ in range(50):
        q1 = rng.uniform(-2, 2, 2)
        q2 = rng.uniform(-2, 2, 2)
        lam = rng.uniform(0.0, 1.5)
        mid = ev.lagrangian(y, 0.5 * (q1 + q2), lam)
        avg = 0.5 * (ev.lagrangian(y, q1, lam) + ev.lagrangian(y, q2, lam))
        assert mid <= avg + 1e-12


def test_oblique_lagrangian_g_shift():
    dom = single_ball(1.0)
    ev = LagrangianEvaluator(Hamiltonian("quadratic"),
                             ObliqueBC(dom, ObliqueField(dom), g=0.25))
    y = np.array([0.0, 1.0])
    q = np.array([1.0, 0.0])
    base = ev.legendre(y, q)
    assert abs(ev.lagrangian(y, q, 2.0) - (base - 0.5)) < 1e-12


def test_boundary_operator_values():
    dom = single_ball(1.0)
    y = np.array([1.0, 0.0])
    bc_n = ObliqueBC(dom, ObliqueField(dom), g=0.1)
    # nu at (1,0) is (-1,0): into the hole
    assert abs(boundary_operator(bc_n, y, np.array([2.0, 0.0])) - (-2.1)) < 1e-9
    bc_c = ContactAngleBC(dom, THETA)
    got = boundary_operator(bc_c, y, np.array([2.0, 0.0]))
    assert abs(got - (-2.0 - H_COS * 2.0)) < 1e-9


def test_hamiltonian_validation():
    with pytest.raises(ValidationError):
        Hamiltonian("nope")
    with pytest.raises(ValidationError):
        Hamiltonian("custom", func=lambda y, p: 0.0)
    with pytest.raises(ValidationError):
        Hamiltonian("eikonal", potential=lambda y: 0.0)
    dom = single_ball(1.0)
    with pytest.raises(ValidationError):
        ContactAngleBC(dom, 0.3 * math.pi)
    with pytest.raises(DegenerateAngle):
        ContactAngleBC(dom, math.pi - 1e-9)


def test_k1_bound_covers_g():
    dom = single_ball(1.0)
    ev = LagrangianEvaluator(Hamiltonian("quadratic"),
                             ObliqueBC(dom, ObliqueField(dom), g=0.5))
    assert ev.k1 >= 0.5 * (ev.vl_bound * 0.5) ** 2 - 1e-12
