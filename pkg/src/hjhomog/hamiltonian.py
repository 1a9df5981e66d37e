"""Hamiltonians, boundary operators, and the modified running costs.

The running cost of a reflected trajectory has two ingredients: the convex
conjugate of the Hamiltonian in the velocity slot, and a boundary term charging
the reflection intensity. For oblique data the charge is linear (-g * l); for
prescribed contact angles it enters through the conjugate itself,

    L_contact(y, q, lam) = sup_p { p . q - H(y, p) - h(y) * lam * |p| },

with h = cos(theta) in (-1, 0]. Quadratic and eikonal Hamiltonians get closed
forms; anything else is handled by a polar-coordinates search (golden section
in the radius nested inside an angular refinement).
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .errors import DegenerateAngle, ValidationError
from .geometry import BOUNDARY, classify, normal

log = logging.getLogger(__name__)

SENTINEL = 1e12  # stands in for +inf; anything >= SENTINEL / 2 is infeasible

_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, a, b, tol=1e-12, max_iter=200):
    """Golden-section maximization on [a, b]; returns (argmax, max)."""
    x1 = b - _PHI * (b - a)
    x2 = a + _PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _PHI * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _PHI * (b - a)
            f1 = f(x1)
    xs = 0.5 * (a + b)
    return xs, f(xs)


class Hamiltonian:
    """Convex Hamiltonian H(y, p), 1-periodic in y.

    kind is one of "quadratic" (|p|^2/2 + c(y)), "eikonal" (|p|), or "custom"
    (arbitrary callable). k0 is the half-quadratic envelope constant: after
    modification outside the trust radius,

        |p|^2/2 - k0 <= H(y, p) <= |p|^2/2 + k0.

    For quadratic kinds k0 = sup |c|; for the eikonal k0 = 1/2 (the envelope
    max(|p|, |p|^2/2 - 1/2) kicks in only beyond |p| = 1 + sqrt(2), past the
    Lipschitz radius of any solution this package produces). Custom kinds must
    declare k0 and are clipped to the envelope beyond trunc_radius.
    """

    def __init__(self, kind="quadratic", potential=None, func=None, k0=None,
                 trunc_radius=None, radial=None, name=None, params=None):
        self.kind = kind
        self.potential = potential
        self._func = func
        if kind == "quadratic":
            self.k0 = self._potential_sup() if k0 is None else float(k0)
            self.radial = potential is None if radial is None else radial
        elif kind == "eikonal":
            if potential is not None:
                raise ValidationError("eikonal kind does not take a potential")
            self.k0 = 0.5 if k0 is None else float(k0)
            self.radial = True if radial is None else radial
        elif kind == "custom":
            if func is None:
                raise ValidationError("custom Hamiltonian needs a callable")
            if k0 is None:
                raise ValidationError("custom Hamiltonian needs an explicit k0")
            self.k0 = float(k0)
            self.radial = bool(radial)
        else:
            raise ValidationError(f"unknown Hamiltonian kind {kind!r}")
        if trunc_radius is None:
            trunc_radius = 2.0 * (1.0 + math.sqrt(1.0 + 2.0 * self.k0))
        self.trunc_radius = float(trunc_radius)
        self.name = name or kind
        self.params = dict(params or {})
        if kind == "custom":
            log.info("custom Hamiltonian clipped to the quadratic envelope beyond |p| = %g",
                     self.trunc_radius)

    def _potential_sup(self):
        if self.potential is None:
            return 0.0
        xs = np.linspace(0.0, 1.0, 64, endpoint=False)
        grid = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
        return float(np.max(np.abs(self.potential(grid))))

    def c(self, y):
        """Potential term, 0 when absent."""
        if self.potential is None:
            y = np.asarray(y, dtype=float)
            return np.zeros(y.shape[:-1]) if y.ndim > 1 else 0.0
        return self.potential(np.asarray(y, dtype=float))

    def __call__(self, y, p):
        y = np.asarray(y, dtype=float)
        p = np.asarray(p, dtype=float)
        pn = np.linalg.norm(p, axis=-1)
        if self.kind == "quadratic":
            return 0.5 * pn ** 2 + self.c(y)
        if self.kind == "eikonal":
            return pn
        raw = self._func(y, p)
        lo = 0.5 * pn ** 2 - self.k0
        hi = 0.5 * pn ** 2 + self.k0
        clipped = np.clip(raw, lo, hi)
        return np.where(pn > self.trunc_radius, clipped, raw)

    def min_over_p(self, y):
        """inf_p H(y, p); feeds the rest-control bound on value functions."""
        if self.kind == "quadratic":
            return self.c(y)
        if self.kind == "eikonal":
            return 0.0
        # custom: coarse sample, the envelope pins the minimum near p = 0
        y = np.asarray(y, dtype=float)
        ps = np.linspace(-1.5, 1.5, 13)
        grid = np.stack(np.meshgrid(*([ps] * y.shape[-1]), indexing="ij"), axis=-1)
        return float(np.min(self(y, grid.reshape(-1, y.shape[-1]))))

    def descriptor(self):
        return {"kind": self.kind, "k0": self.k0, "name": self.name, **self.params}


# -- boundary conditions ---------------------------------------------------------


class ObliqueBC:
    """gamma(y) . Du = g(y) on the boundary, gamma uniformly oblique."""

    kind = "oblique"

    def __init__(self, domain, gamma_field, g=0.0):
        self.domain = domain
        self.gamma = gamma_field
        self._g = g

    def g(self, y):
        if callable(self._g):
            return self._g(np.asarray(y, dtype=float))
        y = np.asarray(y, dtype=float)
        if y.ndim > 1:
            return np.full(y.shape[:-1], float(self._g))
        return float(self._g)

    def g_sup(self):
        if not callable(self._g):
            return abs(float(self._g))
        try:
            from .geometry import boundary_sample
            pts = boundary_sample(self.domain, np.zeros(self.domain.dimension), 32, tol=1e-7)
        except Exception:
            pts = np.zeros((1, self.domain.dimension))
        return float(np.max(np.abs(self.g(pts))))

    def vl_constant(self):
        """Bound constant in l <= C |v|; equals 1 for normal reflection."""
        if self.gamma.is_normal:
            return 1.0
        return 1.0 + self.gamma.sup_norm() / self.gamma.rho

    def descriptor(self):
        g = "callable" if callable(self._g) else float(self._g)
        return {"kind": self.kind, "g": g, "gamma": "normal" if self.gamma.is_normal else "custom"}


class ContactAngleBC:
    """nu(y) . Du = cos(theta(y)) |Du| with theta in [pi/2, pi).

    The reflection direction is forced to the outward normal. theta may be a
    constant or a callable on boundary points.
    """

    kind = "contact"

    def __init__(self, domain, theta=math.pi / 2):
        from .geometry import ObliqueField

        self.domain = domain
        self._theta = theta
        self.gamma = ObliqueField(domain, gamma=None, rho=1.0)
        sup = self.theta_sup()
        inf = self.theta_inf()
        if inf < math.pi / 2 - 1e-12:
            raise ValidationError(f"contact angle {inf:.6f} below pi/2")
        if sup > math.pi - 1e-6:
            raise DegenerateAngle(f"contact angle {sup:.8f} too close to pi")

    def theta(self, y):
        if callable(self._theta):
            return self._theta(np.asarray(y, dtype=float))
        y = np.asarray(y, dtype=float)
        if y.ndim > 1:
            return np.full(y.shape[:-1], float(self._theta))
        return float(self._theta)

    def h(self, y):
        """cos(theta), the contact coefficient in (-1, 0]."""
        return np.cos(self.theta(y))

    def _theta_samples(self):
        if not callable(self._theta):
            return np.array([float(self._theta)])
        try:
            from .geometry import boundary_sample
            pts = boundary_sample(self.domain, np.zeros(self.domain.dimension), 32, tol=1e-7)
        except Exception:
            pts = np.zeros((1, self.domain.dimension))
        return np.atleast_1d(self.theta(pts))

    def theta_sup(self):
        return float(np.max(self._theta_samples()))

    def theta_inf(self):
        return float(np.min(self._theta_samples()))

    def g_sup(self):
        return 0.0

    def vl_constant(self):
        return 1.0

    def descriptor(self):
        th = "callable" if callable(self._theta) else float(self._theta)
        return {"kind": self.kind, "theta": th}


def boundary_operator(bc, y, p):
    """Evaluate the boundary operator at a boundary point.

    Oblique: gamma . p - g. Contact angle: nu . p - cos(theta) |p|.
    """
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    if classify(bc.domain, y) != BOUNDARY:
        # grid callers widen the band by passing points already snapped
        v = float(bc.domain.psi(y))
        if abs(v) > 1e-6:
            from .errors import NotOnBoundary
            raise NotOnBoundary(f"psi = {v:.3e} at {y.tolist()}")
    if bc.kind == "oblique":
        return float(bc.gamma(y) @ p) - float(bc.g(y))
    nu = normal(bc.domain, y, tol=1e-6)
    return float(nu @ p) - float(bc.h(y)) * float(np.linalg.norm(p))


# -- running costs ----------------------------------------------------------------


class LagrangianEvaluator:
    """Convex conjugates and modified running costs for one (H, bc) pair.

    The evaluator owns the momentum quadrature for numeric conjugates: a fixed
    angular net of n_rays directions, golden section along each ray up to the
    radius cap |q| + |h lam| + 2 sqrt(2 k0) + 1, then a golden refinement of
    the ray angle around the best direction.
    """

    def __init__(self, hamiltonian, bc, n_rays=64, radial_iters=80, feas_tol=1e-9):
        self.H = hamiltonian
        self.hamiltonian = hamiltonian
        self.bc = bc
        self.n_rays = int(n_rays)
        self.radial_iters = int(radial_iters)
        self.feas_tol = float(feas_tol)
        self.k0 = hamiltonian.k0
        c_vl = bc.vl_constant()
        self.k1 = self.k0 + 0.5 * (c_vl * bc.g_sup()) ** 2
        self.vl_bound = c_vl

    # ---- conjugate ------------------------------------------------------------

    def legendre(self, y, q):
        """sup_p { p . q - H(y, p) }."""
        y = np.asarray(y, dtype=float)
        q = np.asarray(q, dtype=float)
        qn = np.linalg.norm(q, axis=-1)
        if self.H.kind == "quadratic":
            return 0.5 * qn ** 2 - self.H.c(y)
        if self.H.kind == "eikonal":
            return np.where(qn <= 1.0 + self.feas_tol, 0.0, SENTINEL)
        return self._sup_numeric(y, q, 0.0)

    def lagrangian_oblique(self, y, q, lam):
        """Oblique running cost: legendre(y, q) - g(y) * lam."""
        val = self.legendre(y, q)
        return val - self.bc.g(y) * lam

    def lagrangian_contact(self, y, q, lam):
        """Contact running cost sup_p { p.q - H - h lam |p| }.

        Closed forms: quadratic gives max(|q| - h lam, 0)^2 / 2 - c(y); eikonal
        gives 0 on the feasible cone |q| <= 1 + h lam and the sentinel outside.
        """
        y = np.asarray(y, dtype=float)
        q = np.asarray(q, dtype=float)
        qn = np.linalg.norm(q, axis=-1)
        h = self.bc.h(y)
        if self.H.kind == "quadratic":
            a = np.maximum(qn - h * lam, 0.0)
            return 0.5 * a ** 2 - self.H.c(y)
        if self.H.kind == "eikonal":
            return np.where(qn <= 1.0 + h * lam + self.feas_tol, 0.0, SENTINEL)
        return self._sup_numeric(y, q, h * lam)

    def lagrangian(self, y, q, lam):
        """Dispatch on the boundary condition kind."""
        if self.bc.kind == "oblique":
            return self.lagrangian_oblique(y, q, lam)
        return self.lagrangian_contact(y, q, lam)

    def step_cost(self, y, v, l):
        """Per-time cost of driving with velocity v and reflection rate l >= 0."""
        return self.lagrangian(y, -np.asarray(v, dtype=float), -float(l))

    # ---- numeric conjugate ------------------------------------------------------

    def _radius_cap(self, qn, habs):
        return qn + habs + 2.0 * math.sqrt(2.0 * self.k0) + 1.0

    def _sup_numeric(self, y, q, hlam):
        """Polar search; y, q single points. hlam = h(y) * lam."""
        y = np.asarray(y, dtype=float)
        q = np.asarray(q, dtype=float)
        qn = float(np.linalg.norm(q))
        R = self._radius_cap(qn, abs(hlam))
        n = q.shape[-1]
        if n != 2:
            return self._sup_free(y, q, hlam, R)

        def along(angle):
            w = np.array([math.cos(angle), math.sin(angle)])

            def f(rho):
                p = rho * w
                return float(p @ q) - float(self.H(y, p)) - hlam * rho

            return golden_max(f, 0.0, R, tol=1e-11 * (1.0 + R), max_iter=self.radial_iters)

        angles = np.linspace(0.0, 2.0 * math.pi, self.n_rays, endpoint=False)
        vals = np.array([along(a)[1] for a in angles])
        best = int(np.argmax(vals))
        da = 2.0 * math.pi / self.n_rays
        lo, hi = angles[best] - da, angles[best] + da
        _, out = golden_max(lambda a: along(a)[1], lo, hi, tol=1e-10)
        return max(out, float(vals[best]), 0.0 - float(self.H(y, np.zeros(n))) - 0.0)

    def _sup_free(self, y, q, hlam, R):
        """n != 2 fallback: multi-start simplex search in momentum space."""
        from scipy.optimize import minimize

        def neg(p):
            p = np.asarray(p, dtype=float)
            if np.linalg.norm(p) > R:
                return 1e9
            return -(float(p @ q) - float(self.H(y, p)) - hlam * float(np.linalg.norm(p)))

        n = q.shape[-1]
        starts = [np.zeros(n), q.copy()]
        rng = np.random.default_rng(0)
        for _ in range(6):
            starts.append(rng.normal(size=n) * max(1.0, 0.5 * R))
        best = -math.inf
        for s in starts:
            r = minimize(neg, s, method="Nelder-Mead",
                         options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000})
            best = max(best, -float(r.fun))
        return best

    # ---- vectorized step costs for grid engines -----------------------------------

    def step_cost_field(self, y_pts, v, l_arr):
        """Cost of driving across many unit-scale points at once.

        y_pts: (N, n) points (unit scale), v: (n,) shared control or (N, n)
        per-point controls, l_arr: (N,) rates. Closed forms only; generic
        Hamiltonians take the slow scalar path.
        """
        y_pts = np.asarray(y_pts, dtype=float)
        l_arr = np.asarray(l_arr, dtype=float)
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            vn = float(np.linalg.norm(v))
            v_rows = None
        else:
            vn = np.linalg.norm(v, axis=-1)
            v_rows = v
        if self.bc.kind == "oblique":
            if self.H.kind == "quadratic":
                base = 0.5 * vn ** 2 - self.H.c(y_pts)
            elif self.H.kind == "eikonal":
                base = np.where(vn <= 1.0 + self.feas_tol, 0.0, SENTINEL)
                base = np.broadcast_to(base, l_arr.shape).copy()
            else:
                rows = y_pts if v_rows is None else zip(y_pts, v_rows)
                base = (np.array([self.legendre(y, -v) for y in y_pts])
                        if v_rows is None else
                        np.array([self.legendre(y, -w) for y, w in rows]))
            return base + np.asarray(self.bc.g(y_pts)) * l_arr
        h = np.asarray(self.bc.h(y_pts))
        if self.H.kind == "quadratic":
            a = np.maximum(vn + h * l_arr, 0.0)
            return 0.5 * a ** 2 - self.H.c(y_pts)
        if self.H.kind == "eikonal":
            return np.where(vn <= 1.0 - h * l_arr + self.feas_tol, 0.0, SENTINEL)
        if v_rows is None:
            return np.array([self.lagrangian_contact(y, -v, -l)
                             for y, l in zip(y_pts, l_arr)])
        return np.array([self.lagrangian_contact(y, -w, -l)
                         for y, w, l in zip(y_pts, v_rows, l_arr)])
