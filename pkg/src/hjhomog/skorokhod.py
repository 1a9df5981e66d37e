"""Reflected trajectories: project-after-step integration of the Skorokhod problem.

Given a control velocity v(.), the constrained path satisfies

    eta(0) = x,   eta(s) in the closure,   d eta / ds + l(s) gamma(eta / eps) = v(s),

with l >= 0 supported on boundary contact. The discrete stepper advances each
interval tentatively and, whenever the tentative point leaves the closure,
pulls it back along gamma evaluated at the pre-step point, choosing the
smallest multiplier by bisection. Interior steps therefore carry l = 0 exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateObliqueness, StepTooLarge, ValidationError
from .geometry import ScaledDomain, normal, project_to_closure


@dataclass
class ControlSignal:
    """Piecewise-constant control on a uniform time grid."""

    times: np.ndarray  # (M+1,)
    v: np.ndarray      # (M, n)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.v = np.atleast_2d(np.asarray(self.v, dtype=float))
        if self.times.ndim != 1 or len(self.times) != len(self.v) + 1:
            raise ValidationError("times must have one more entry than v")
        steps = np.diff(self.times)
        if len(steps) == 0 or np.any(steps <= 0):
            raise ValidationError("time grid must be increasing")
        if np.max(np.abs(steps - steps[0])) > 1e-12 * max(1.0, abs(steps[0])):
            raise ValidationError("time grid must be uniform")

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    @classmethod
    def constant(cls, v, duration, dt):
        v = np.asarray(v, dtype=float)
        m = max(1, int(round(duration / dt)))
        times = np.linspace(0.0, m * dt, m + 1)
        return cls(times, np.tile(v, (m, 1)))

    @classmethod
    def from_function(cls, fn, duration, dt, dim):
        m = max(1, int(round(duration / dt)))
        times = np.linspace(0.0, m * dt, m + 1)
        vs = np.array([np.asarray(fn(t), dtype=float) for t in times[:-1]]).reshape(m, dim)
        return cls(times, vs)


@dataclass
class ReflectedPath:
    """Output of the stepper: positions, multipliers, and the driving control."""

    times: np.ndarray   # (M+1,)
    eta: np.ndarray     # (M+1, n)
    l: np.ndarray       # (M,)
    v: np.ndarray       # (M, n)
    meta: dict = field(default_factory=dict)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    def eta_dot(self):
        return np.diff(self.eta, axis=0) / self.dt

    def write_csv(self, path_or_handle, metadata=None):
        from .io import write_csv

        n = self.eta.shape[1]
        header = ["s"] + [f"eta_{i+1}" for i in range(n)] + ["l"] + [f"v_{i+1}" for i in range(n)]
        m = len(self.l)
        rows = np.zeros((m + 1, 2 * n + 2))
        rows[:, 0] = self.times
        rows[:, 1:n + 1] = self.eta
        rows[:m, n + 1] = self.l
        rows[:m, n + 2:] = self.v
        write_csv(path_or_handle, header, rows, metadata=metadata or self.meta)


def sliding_decomposition(y, v, gamma_field, tol=1e-6):
    """Split a velocity at a boundary point into tangential motion plus reflection.

    Returns (eta_dot, l) with eta_dot = v - l * gamma(y). When v does not push
    outward (nu . v <= 0) the velocity passes through with l = 0.
    """
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    dom = gamma_field.domain
    nu = normal(dom, y, tol=tol)
    outward = float(nu @ v)
    if outward <= 0.0:
        return v.copy(), 0.0
    g = gamma_field(y)
    denom = float(nu @ g)
    if denom < 0.5 * gamma_field.rho:
        raise DegenerateObliqueness(
            f"nu . gamma = {denom:.4f} below rho/2 = {0.5 * gamma_field.rho:.4f}")
    l = outward / denom
    return v - l * g, l


def _pullback(domain, x_tent, direction, dt, l_hi, psi_tol=1e-12, iters=60):
    """Smallest l >= 0 with psi(x_tent - dt*l*direction) <= 0, by bisection."""
    lo, hi = 0.0, l_hi
    cap = l_hi
    for _ in range(4):
        if float(domain.psi(x_tent - dt * cap * direction)) <= 0.0:
            break
        cap *= 2.0
    else:
        raise StepTooLarge("pull-back bracket failed; reduce the time step")
    hi = cap
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        val = float(domain.psi(x_tent - dt * mid * direction))
        if val <= 0.0:
            hi = mid
            if val >= -psi_tol:
                break
        else:
            lo = mid
    return hi


def solve_sp(x0, control, domain, gamma_field, psi_tol=1e-12):
    """Integrate the reflected dynamics for one control signal.

    domain may be a ScaledDomain (gamma is then evaluated at the unit-scale
    point eta / eps) or a plain ImplicitDomain (eps = 1).
    """
    x0 = np.asarray(x0, dtype=float)
    if float(domain.psi(x0)) > domain.boundary_tol:
        raise ValidationError(f"start point violates the closure: psi = {float(domain.psi(x0)):.3e}")
    scaled = isinstance(domain, ScaledDomain)
    to_unit = domain.unit_point if scaled else (lambda z: z)
    dt = control.dt
    m = len(control.v)
    c_bound = 1.0 if gamma_field.is_normal else (1.0 + gamma_field.sup_norm() / gamma_field.rho)

    eta = np.empty((m + 1, x0.shape[0]))
    ls = np.zeros(m)
    eta[0] = x0
    x = x0.copy()
    for i in range(m):
        v = control.v[i]
        xp = x + dt * v
        if float(domain.psi(xp)) <= 0.0:
            x = xp
        else:
            gdir = np.asarray(gamma_field(to_unit(x)), dtype=float)
            l_hi = c_bound * float(np.linalg.norm(v)) + 1.0
            l = _pullback(domain, xp, gdir, dt, l_hi, psi_tol=psi_tol)
            x = xp - dt * l * gdir
            if float(domain.psi(x)) > 0.0:
                x = project_to_closure(domain, x)
            ls[i] = l
        eta[i + 1] = x
    return ReflectedPath(control.times.copy(), eta, ls, control.v.copy())


def residual(path, domain, gamma_field, boundary_tol=None):
    """Defect report for a reflected path.

    Keys: max_psi_violation (positive part of psi along the path),
    max_complementarity (l weighted by interior depth beyond the band),
    max_ode_defect (discrete ODE residual), max_ratio_l_over_v.
    """
    tol = domain.boundary_tol if boundary_tol is None else float(boundary_tol)
    scaled = isinstance(domain, ScaledDomain)
    to_unit = domain.unit_point if scaled else (lambda z: z)
    psi_vals = np.array([float(domain.psi(p)) for p in path.eta])
    dt = path.dt
    gam = np.array([np.asarray(gamma_field(to_unit(p)), dtype=float) for p in path.eta[:-1]])
    defect = (path.eta[1:] - path.eta[:-1]) / dt + path.l[:, None] * gam - path.v
    speeds = np.linalg.norm(path.v, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(speeds > 0, path.l / np.where(speeds > 0, speeds, 1.0),
                         np.where(path.l > 0, np.inf, 0.0))
    depth = np.maximum(0.0, -psi_vals[:-1] - tol)
    return {
        "max_psi_violation": float(np.max(np.maximum(psi_vals, 0.0))),
        "max_complementarity": float(np.max(path.l * depth)) if len(path.l) else 0.0,
        "max_ode_defect": float(np.max(np.linalg.norm(defect, axis=1))) if len(defect) else 0.0,
        "max_ratio_l_over_v": float(np.max(ratio)) if len(ratio) else 0.0,
    }
