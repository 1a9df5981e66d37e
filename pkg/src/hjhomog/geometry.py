"""Perforated domains described by level-set functions, and oblique boundary fields.

A domain is the open set {psi < 0}; holes are {psi > 0}. The built-in family
puts balls of radius r < 1/2 at the integer lattice points, so the complement
is connected and 1-periodic. Single-obstacle and half-space variants exist for
tests and worked examples; arbitrary geometries enter through the registry as
(psi, grad_psi) pairs plus a periodicity declaration.

All level-set callables accept arrays shaped (..., n) and are expected to be
1-Lipschitz-normalized in the band near {psi = 0} (|grad psi| == 1 there), so
psi doubles as a signed distance close to the boundary.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import (
    DegenerateObliqueness,
    EmptyBoundary,
    NotOnBoundary,
    ProjectionDiverged,
    ValidationError,
)

log = logging.getLogger(__name__)

INTERIOR = "interior"
BOUNDARY = "boundary"
EXTERIOR = "exterior"


class ImplicitDomain:
    """Open region {psi < 0} with boundary {psi = 0}.

    Parameters
    ----------
    psi, grad_psi : callables on (..., n) point arrays.
    dimension : ambient dimension n.
    periodic : whether psi is Z^n-periodic.
    boundary_tol : half-width delta_b of the boundary band used by classify.
    psi_max : projection refuses points with psi above this cap (too deep
        inside a hole for the gradient flow to be trustworthy).
    ridge_distance : optional callable giving the distance to the nearest
        gradient discontinuity; normals are refused closer than boundary_tol.
    every_cell_touches_boundary : True when each unit cube x + [-1/2, 1/2]^n
        meets {psi = 0}; required by the relaxed metric endpoints.
    """

    def __init__(self, psi, grad_psi, dimension, periodic=True, boundary_tol=1e-9,
                 psi_max=np.inf, ridge_distance=None,
                 every_cell_touches_boundary=False, name="custom", params=None):
        if dimension < 1:
            raise ValidationError("dimension must be >= 1")
        self.psi = psi
        self.grad_psi = grad_psi
        self.dimension = int(dimension)
        self.periodic = bool(periodic)
        self.boundary_tol = float(boundary_tol)
        self.psi_max = float(psi_max)
        self.ridge_distance = ridge_distance
        self.every_cell_touches_boundary = bool(every_cell_touches_boundary)
        self.name = name
        self.params = dict(params or {})

    def __repr__(self):
        return f"ImplicitDomain({self.name}, n={self.dimension}, periodic={self.periodic})"

    def descriptor(self):
        """Hashable description used in output metadata."""
        return {"name": self.name, "dimension": self.dimension,
                "periodic": self.periodic, **self.params}


def classify(domain, x):
    """Return 'interior', 'boundary' or 'exterior' for a single point.

    The boundary verdict means |psi(x)| <= boundary_tol; solvers that work on
    grids widen the band to h/10 by passing an explicit tol.
    """
    x = np.asarray(x, dtype=float)
    v = float(domain.psi(x))
    tol = domain.boundary_tol
    if abs(v) <= tol:
        return BOUNDARY
    return INTERIOR if v < 0 else EXTERIOR


def normal(domain, y, tol=None):
    """Unit outward normal at a boundary point (points into the hole)."""
    y = np.asarray(y, dtype=float)
    tol = domain.boundary_tol if tol is None else tol
    if abs(float(domain.psi(y))) > tol:
        raise NotOnBoundary(f"psi({y.tolist()}) = {float(domain.psi(y)):.3e} exceeds tol {tol:.1e}")
    if domain.ridge_distance is not None and float(domain.ridge_distance(y)) <= domain.boundary_tol:
        raise ProjectionDiverged("gradient requested on a Voronoi ridge of the lattice")
    g = np.asarray(domain.grad_psi(y), dtype=float)
    norm = np.linalg.norm(g)
    if norm == 0.0:
        raise ProjectionDiverged("degenerate gradient on the boundary band")
    return g / norm


def project_to_closure(domain, x, max_iter=60):
    """Nearest point of the closure, by damped Newton steps along grad psi.

    Identity on the closure. For the ball-lattice family one step is exact
    (radial geometry); the damping only matters for general level sets.
    """
    x = np.asarray(x, dtype=float).copy()
    v = float(domain.psi(x))
    if v <= 0.0:
        return x
    if v > domain.psi_max:
        raise ProjectionDiverged(
            f"psi(x) = {v:.3g} above cap {domain.psi_max:.3g}; point too deep inside a hole")
    tol = domain.boundary_tol
    for _ in range(max_iter):
        g = np.asarray(domain.grad_psi(x), dtype=float)
        gg = float(g @ g)
        if gg == 0.0:
            raise ProjectionDiverged("zero gradient during projection")
        step = (v / gg) * g
        scale = 1.0
        for _ in range(30):
            xn = x - scale * step
            vn = float(domain.psi(xn))
            if vn < v:
                break
            scale *= 0.5
        else:
            raise ProjectionDiverged("projection stalled (no descent direction)")
        x, v = xn, vn
        if v <= tol:
            # land inside the band, never outside the closure beyond tol
            return x
    raise ProjectionDiverged(f"projection did not converge, residual psi = {v:.3e}")


def _project_to_level_set(domain, x, tol, max_iter=60):
    """Newton toward {psi = 0} from either side; returns None on failure."""
    x = np.asarray(x, dtype=float).copy()
    for _ in range(max_iter):
        v = float(domain.psi(x))
        if abs(v) <= tol:
            return x
        g = np.asarray(domain.grad_psi(x), dtype=float)
        gg = float(g @ g)
        if gg < 1e-20:
            return None
        x = x - (v / gg) * g
    return None


def boundary_sample(domain, cube_center, count, tol=None):
    """Quasi-uniform points of {psi = 0} inside cube_center + [-1/2, 1/2]^n.

    Seeds a regular grid in the cube, Newton-projects every seed onto the zero
    level set, keeps hits that stay in the cube, then thins them with greedy
    farthest-point selection. Deterministic.
    """
    center = np.asarray(cube_center, dtype=float)
    n = domain.dimension
    tol = domain.boundary_tol if tol is None else tol
    hits = []
    for m in (8, 16, 32):
        axes = [np.linspace(-0.5, 0.5, m, endpoint=True) for _ in range(n)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        seeds = center + mesh
        for s in seeds:
            p = _project_to_level_set(domain, s, tol)
            if p is None:
                continue
            if np.max(np.abs(p - center)) <= 0.5 + 1e-12:
                hits.append(p)
        if len(hits) >= count:
            break
    if not hits:
        raise EmptyBoundary(f"no boundary found in cube around {center.tolist()}")
    pts = np.array(hits)
    # dedupe on a fine grid, then spread
    key = np.round(pts / (10 * max(tol, 1e-12))).astype(np.int64)
    _, uniq = np.unique(key, axis=0, return_index=True)
    pts = pts[np.sort(uniq)]
    if len(pts) < count:
        raise EmptyBoundary(
            f"only {len(pts)} distinct boundary points in cube around {center.tolist()}, "
            f"need {count}")
    chosen = [0]
    d = np.linalg.norm(pts - pts[0], axis=1)
    while len(chosen) < count:
        idx = int(np.argmax(d))
        chosen.append(idx)
        d = np.minimum(d, np.linalg.norm(pts - pts[idx], axis=1))
    return pts[chosen]


class ObliqueField:
    """Reflection direction field gamma on the boundary band.

    gamma defaults to the outward normal. The uniform-obliqueness constant rho
    (inf of gamma . nu over the boundary) is validated on samples at build time
    and checked again wherever a decomposition divides by nu . gamma.
    """

    def __init__(self, domain, gamma=None, rho=1.0, validate=True):
        self.domain = domain
        self._gamma = gamma
        self.rho = float(rho)
        self.is_normal = gamma is None
        if self.rho <= 0:
            raise DegenerateObliqueness("rho must be positive")
        if validate and not self.is_normal:
            self._validate()

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.is_normal:
            g = np.asarray(self.domain.grad_psi(y), dtype=float)
            nrm = np.linalg.norm(g, axis=-1, keepdims=True)
            return g / np.where(nrm == 0.0, 1.0, nrm)
        return np.asarray(self._gamma(y), dtype=float)

    def sup_norm(self, samples=None):
        if self.is_normal:
            return 1.0
        if samples is None:
            samples = self._band_samples()
        vals = np.linalg.norm(np.atleast_2d(self(samples)), axis=-1)
        return float(np.max(vals))

    def _band_samples(self):
        center = np.zeros(self.domain.dimension)
        try:
            return boundary_sample(self.domain, center, 32, tol=1e-7)
        except EmptyBoundary:
            return center[None, :]

    def _validate(self):
        pts = self._band_samples()
        for y in pts:
            nu = normal(self.domain, y, tol=1e-6)
            g = self(y)
            if float(nu @ g) < self.rho - 1e-9:
                raise DegenerateObliqueness(
                    f"gamma . nu = {float(nu @ g):.4f} < rho = {self.rho} at {y.tolist()}")


class ScaledDomain:
    """The domain scaled by epsilon: closure of {x : psi(x / eps) <= 0}.

    psi is rescaled as eps * psi(x / eps) so it stays a signed distance in
    physical units; gradients are evaluated at the unit-scale point.
    """

    def __init__(self, base, epsilon, boundary_tol=None):
        if epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        self.base = base
        self.epsilon = float(epsilon)
        self.dimension = base.dimension
        self.boundary_tol = base.boundary_tol if boundary_tol is None else float(boundary_tol)
        self.psi_max = base.psi_max * self.epsilon
        self.periodic = base.periodic
        self.ridge_distance = (
            None if base.ridge_distance is None
            else (lambda x: self.epsilon * base.ridge_distance(np.asarray(x, float) / self.epsilon)))
        self.every_cell_touches_boundary = base.every_cell_touches_boundary
        self.name = f"{base.name}@eps={self.epsilon:g}"
        self.params = {**base.params, "epsilon": self.epsilon}

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        return self.epsilon * self.base.psi(x / self.epsilon)

    def grad_psi(self, x):
        x = np.asarray(x, dtype=float)
        return self.base.grad_psi(x / self.epsilon)

    def unit_point(self, x):
        """Map a physical point to the unit-scale cell coordinates."""
        return np.asarray(x, dtype=float) / self.epsilon

    def descriptor(self):
        return {"name": self.name, "dimension": self.dimension, **self.params}


# -- built-in families ----------------------------------------------------------


def ball_lattice(radius, dimension=2, boundary_tol=1e-9):
    """Holes of the given radius at every integer lattice point."""
    if not 0.0 < radius < 0.5:
        raise ValidationError("ball-lattice radius must lie in (0, 1/2)")
    r = float(radius)

    def psi(x):
        x = np.asarray(x, dtype=float)
        d = x - np.round(x)
        return r - np.linalg.norm(d, axis=-1)

    def grad_psi(x):
        x = np.asarray(x, dtype=float)
        d = x - np.round(x)
        nrm = np.linalg.norm(d, axis=-1, keepdims=True)
        return -d / np.where(nrm == 0.0, 1.0, nrm)

    def ridge_distance(x):
        x = np.asarray(x, dtype=float)
        d = np.abs(x - np.round(x))
        return 0.5 - np.max(d, axis=-1)

    return ImplicitDomain(
        psi, grad_psi, dimension, periodic=True, boundary_tol=boundary_tol,
        psi_max=0.9 * r, ridge_distance=ridge_distance,
        every_cell_touches_boundary=True, name="ball-lattice",
        params={"radius": r})


def single_ball(radius=1.0, dimension=2, boundary_tol=1e-9):
    """One spherical obstacle at the origin; not periodic."""
    r = float(radius)
    if r <= 0:
        raise ValidationError("radius must be positive")

    def psi(x):
        x = np.asarray(x, dtype=float)
        return r - np.linalg.norm(x, axis=-1)

    def grad_psi(x):
        x = np.asarray(x, dtype=float)
        nrm = np.linalg.norm(x, axis=-1, keepdims=True)
        return -x / np.where(nrm == 0.0, 1.0, nrm)

    return ImplicitDomain(
        psi, grad_psi, dimension, periodic=False, boundary_tol=boundary_tol,
        psi_max=0.9 * r, name="single-ball", params={"radius": r})


def half_space(axis=1, dimension=2, boundary_tol=1e-9):
    """Open region {x_axis > 0}; the flat wall makes closed-form tests easy."""
    a = int(axis)

    def psi(x):
        x = np.asarray(x, dtype=float)
        return -x[..., a]

    def grad_psi(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        g[..., a] = -1.0
        return g

    return ImplicitDomain(
        psi, grad_psi, dimension, periodic=False, boundary_tol=boundary_tol,
        name="half-space", params={"axis": a})


def free_space(dimension=2):
    """No holes at all. classify is always 'interior'; there is no boundary."""

    def psi(x):
        x = np.asarray(x, dtype=float)
        return -np.ones(x.shape[:-1]) if x.ndim > 1 else -1.0

    def grad_psi(x):
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x)

    return ImplicitDomain(
        psi, grad_psi, dimension, periodic=True, boundary_tol=1e-9,
        name="free-space", params={})


_REGISTRY = {}


def register_domain(name, factory):
    """Plug-in hook: factory(**params) -> ImplicitDomain."""
    _REGISTRY[name] = factory


def make_domain(spec):
    """Build a domain from a config mapping {kind: ..., **params}."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "ball-lattice":
        return ball_lattice(radius=spec.get("radius", 0.3),
                            dimension=spec.get("dimension", 2))
    if kind == "single-ball":
        return single_ball(radius=spec.get("radius", 1.0),
                           dimension=spec.get("dimension", 2))
    if kind == "half-space":
        return half_space(axis=spec.get("axis", 1), dimension=spec.get("dimension", 2))
    if kind == "free-space":
        return free_space(dimension=spec.get("dimension", 2))
    if kind == "external":
        name = spec.get("name")
        if name not in _REGISTRY:
            raise ValidationError(f"no registered domain named {name!r}")
        return _REGISTRY[name](**spec.get("params", {}))
    raise ValidationError(f"unknown domain kind {kind!r}")
