"""Closed-form references used to validate the numerical machinery.

Everything here is independent of the grid solvers: plain formulas, 1-D golden
section searches, and exhaustive enumeration over tiny control atlases. The
worked example throughout is the planar eikonal problem outside the unit disk
with initial datum u0(x) = x_1 + 2 and a prescribed contact angle.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import BudgetExceeded, DegenerateAngle, OutsideValidatedRegion, ValidationError
from .hamiltonian import golden_max

THETA_CAP = math.pi - 1e-6


def optimal_reflection(theta):
    """Reflection rate that maximizes tangential sliding speed: -cos t / sin^2 t."""
    theta = float(theta)
    if theta < math.pi / 2 - 1e-12:
        raise ValidationError("contact angle below pi/2")
    if theta >= THETA_CAP:
        raise DegenerateAngle("contact angle too close to pi")
    s = math.sin(theta)
    return -math.cos(theta) / (s * s)


def sliding_speed(theta):
    """Tangential speed achieved at the optimal reflection rate: 1 / sin(theta)."""
    theta = float(theta)
    if theta < math.pi / 2 - 1e-12:
        raise ValidationError("contact angle below pi/2")
    if theta >= THETA_CAP:
        raise DegenerateAngle("contact angle too close to pi")
    return 1.0 / math.sin(theta)


def reflection_search(theta, tol=1e-13):
    """Brute 1-D maximization of the sliding speed over the reflection rate.

    The feasible controls at a boundary point satisfy |v| <= 1 - l cos(theta)
    with tangential speed sqrt(|v|^2 - l^2); maximizing over l gives the same
    numbers as the closed forms above. Returns (l_star, speed).
    """
    h = math.cos(float(theta))

    def f(l):
        a = 1.0 - l * h
        return a * a - l * l

    l_cap = 4.0 * (1.0 + abs(h) / max(math.sin(theta) ** 2, 1e-12))
    l_star, val = golden_max(f, 0.0, l_cap, tol=tol, max_iter=300)
    # golden section locates a quadratic max only to sqrt(tol) in the
    # argument; a central-difference Newton step is exact for quadratics
    for _ in range(2):
        d = 1e-4
        g1 = (f(l_star + d) - f(l_star - d)) / (2.0 * d)
        g2 = (f(l_star + d) - 2.0 * f(l_star) + f(l_star - d)) / (d * d)
        if g2 < 0:
            l_star -= g1 / g2
    val = f(l_star)
    return l_star, math.sqrt(max(val, 0.0))


def disk_value_theta_half(x, t):
    """Value of the disk example at theta = pi/2 along the slide trajectory.

    Validated regions: (a) wrap region x1 > 0, 0 <= x2 <= 1, |x| >= 1, t > 2,
    where the trajectory runs straight to the circle at height x2, slides up
    the arc to the top, and continues left, giving

        u = 2 - t + (pi/2 - arcsin x2) + (x1 - sqrt(1 - x2^2));

    (b) straight region, where the leftward segment of length t never meets
    the disk and u = x1 + 2 - t. Elsewhere raises OutsideValidatedRegion.
    """
    x = np.asarray(x, dtype=float)
    x1, x2 = float(x[0]), float(x[1])
    t = float(t)
    if t <= 0:
        raise ValidationError("t must be positive")
    if _straight_clear(x1, x2, t):
        return x1 + 2.0 - t
    if x1 > 0.0 and 0.0 <= x2 <= 1.0 and math.hypot(x1, x2) >= 1.0 - 1e-12 and t > 2.0:
        chord = math.sqrt(max(1.0 - x2 * x2, 0.0))
        return 2.0 - t + (math.pi / 2.0 - math.asin(min(x2, 1.0))) + (x1 - chord)
    raise OutsideValidatedRegion(f"disk oracle not validated at x={x.tolist()}, t={t}")


def _straight_clear(x1, x2, t):
    """Does the segment from (x1 - t, x2) to (x1, x2) avoid the open unit disk?"""
    if abs(x2) >= 1.0:
        return True
    chord = math.sqrt(1.0 - x2 * x2)
    return x1 <= -chord or x1 - t >= chord


def disk_geodesic_value(x, t):
    """State-constraint value of the disk example (tangent-wrap-tangent paths).

    The optimum leaves the obstacle along a tangent; exiting at the top of the
    circle maximizes leftward progress. Valid for x1 > 0, 0 <= x2 <= 1,
    |x| >= 1 and times long enough for the wrap to complete.
    """
    x = np.asarray(x, dtype=float)
    x1, x2 = float(x[0]), float(x[1])
    t = float(t)
    if _straight_clear(x1, x2, t):
        return x1 + 2.0 - t
    if not (x1 > 0.0 and 0.0 <= x2 <= 1.0 and math.hypot(x1, x2) >= 1.0 - 1e-12):
        raise OutsideValidatedRegion(f"geodesic oracle not validated at x={x.tolist()}")
    r = math.hypot(x1, x2)
    tangent = math.sqrt(max(r * r - 1.0, 0.0))
    phi_touch = math.atan2(x2, x1) + math.acos(min(1.0 / r, 1.0))
    arc = math.pi / 2.0 - phi_touch
    if arc < 0.0:
        # tangent point past the top: the straight-left ray clears the disk
        return x1 + 2.0 - t
    transit = tangent + arc
    if t < transit:
        raise OutsideValidatedRegion("time too short for the wrap to complete")
    return 2.0 - t + transit


def hopf_lax_free_1d(x1, t, u0, radius, samples=4001):
    """Free-space quadratic value min_y [ (x1-y)^2 / 2t + u0(y) ], 1-D datum.

    Dense grid plus parabolic refinement; good to ~1e-10 for smooth u0.
    """
    x1, t = float(x1), float(t)
    if t <= 0:
        return float(u0(np.asarray([x1]))[0]) if np.ndim(u0(np.asarray([x1]))) else float(u0(x1))
    ys = np.linspace(x1 - radius, x1 + radius, samples)
    vals = (x1 - ys) ** 2 / (2.0 * t) + np.asarray(u0(ys), dtype=float)
    i = int(np.argmin(vals))
    lo = ys[max(i - 1, 0)]
    hi = ys[min(i + 1, samples - 1)]

    def f(y):
        return -((x1 - y) ** 2 / (2.0 * t) + float(u0(np.asarray(y))))

    y_star, neg = golden_max(f, lo, hi, tol=1e-13)
    return -neg


def hopf_lax_free(x, t, u0, radius, grid=121):
    """Free-space quadratic value in n dimensions, coarse grid + simplex polish."""
    from scipy.optimize import minimize

    x = np.asarray(x, dtype=float)
    t = float(t)
    if t <= 0:
        return float(u0(x))
    n = x.shape[0]
    axes = [np.linspace(-radius, radius, grid)] * n
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    ys = x + mesh
    vals = np.sum(mesh ** 2, axis=1) / (2.0 * t) + np.asarray(u0(ys), dtype=float)
    y0 = ys[int(np.argmin(vals))]

    def f(y):
        return float(np.sum((x - y) ** 2) / (2.0 * t)) + float(u0(np.asarray(y)))

    res = minimize(f, y0, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    return float(res.fun)


def brute_force_value(x, t, domain, gamma_field, evaluator, u0,
                      n_segments=3, speeds=(0.0, 0.5, 1.0), n_dirs=8,
                      reflection_rates=(0.0,), dt=None, budget=200000):
    """Exhaustive search over tiny piecewise-constant control atlases.

    Enumerates every sequence of (direction x speed) atoms (plus optional
    boundary push rates added to the velocity along the inward gamma), runs the
    reflected integrator, and accumulates the running cost. Deliberately slow;
    returns (value, best_path).
    """
    from .skorokhod import ControlSignal, solve_sp

    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n != 2:
        raise ValidationError("brute force atlas implemented for 2-D")
    angles = np.linspace(0.0, 2.0 * math.pi, n_dirs, endpoint=False)
    atoms = [np.zeros(2)]
    for a in angles:
        w = np.array([math.cos(a), math.sin(a)])
        for s in speeds:
            if s > 0:
                atoms.append(s * w)
    atoms = np.array(atoms)
    n_atoms = len(atoms)
    total = n_atoms ** n_segments * len(reflection_rates)
    if total > budget:
        raise BudgetExceeded(f"{total} sequences exceed budget {budget}")
    seg = t / n_segments
    dt = seg / 16 if dt is None else dt
    m_per = max(1, int(round(seg / dt)))
    best = math.inf
    best_path = None
    scaled = domain
    for rate in reflection_rates:
        for combo in itertools.product(range(n_atoms), repeat=n_segments):
            vs = np.repeat(atoms[list(combo)], m_per, axis=0)
            times = np.linspace(0.0, n_segments * m_per * (seg / m_per), len(vs) + 1)
            sig = ControlSignal(times, vs)
            path = solve_sp(x, sig, scaled, gamma_field)
            if rate != 0.0:
                # push along gamma where the path touched the wall, re-run
                touched = path.l > 0
                if np.any(touched):
                    vs2 = vs.copy()
                    for i in np.nonzero(touched)[0]:
                        gdir = gamma_field(path.eta[i])
                        vs2[i] = vs[i] + rate * np.asarray(gdir)
                    path = solve_sp(x, ControlSignal(times, vs2), scaled, gamma_field)
                    vs = vs2
            unit = scaled.unit_point if hasattr(scaled, "unit_point") else (lambda z: z)
            cost = 0.0
            h_step = path.dt
            for i in range(len(path.l)):
                c = float(evaluator.step_cost(unit(path.eta[i]), path.v[i], path.l[i]))
                cost += h_step * c
                if cost >= best:
                    break
            else:
                cost += float(u0(path.eta[-1]))
                if cost < best:
                    best = cost
                    best_path = path
    return best, best_path
