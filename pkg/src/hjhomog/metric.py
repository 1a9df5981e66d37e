"""Metric functions, their additivity checks, and the effective limit.

m(t, x, y) is the least running cost over reflected paths from x to y in time
t; m*(t, x, y) relaxes both endpoints to boundary points within unit-cube
shifts. The Fekete ladder a_k = m*(kt, kx, ky)/k converges at rate O(1/k) to
the effective metric; its Richardson extrapolant 2 a_{2k} - a_k cancels the
leading 1/k term and serves as the reference value in rate checks. Tables of
the effective Lagrangian feed the homogenized Hopf-Lax solver.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (EmptyBoundary, NoPath, TableGap, Unreachable,
                     ValidationError)
from .geometry import boundary_sample, free_space
from .hamiltonian import SENTINEL
from .skorokhod import ReflectedPath
from .sweep import StencilSweep, Window, build_control_net, eval_psi
from .value import ValueField, SpaceTimeGrid


@dataclass
class MetricSample:
    t: float
    x: np.ndarray
    y: np.ndarray
    value: float
    kind: str = "m"
    endpoints_star: tuple | None = None
    path: ReflectedPath | None = None
    meta: dict = field(default_factory=dict)

    @property
    def feasible(self):
        return self.value < SENTINEL / 2

    def lower_bound(self, evaluator):
        """-K1 t for oblique conditions, -K0 t for contact angle."""
        k = evaluator.k1 if evaluator.bc.kind == "oblique" else evaluator.hamiltonian.k0
        return -k * self.t

    def upper_bound(self, evaluator, m_omega, m0, delta=1.0):
        """Connector-path bound, valid for t >= delta and |x-y| <= M0 t."""
        n = self.x.shape[0]
        speed = m_omega * (m0 + 2.0 * math.sqrt(n) / delta)
        return (0.5 * speed * speed + evaluator.hamiltonian.k0) * self.t


class MetricEngine:
    """DP evaluation of m and m* on the unit-scale domain."""

    def __init__(self, domain, gamma_field, evaluator, h=1.0 / 24.0, v_max=2.4,
                 n_dirs=12, n_speeds=3, margin=1.25, boundary_count=32,
                 net_kwargs=None):
        self.domain = domain
        self.gamma_field = gamma_field
        self.evaluator = evaluator
        self.h = float(h)
        self.v_max = float(v_max)
        self.margin = float(margin)
        self.boundary_count = int(boundary_count)
        kw = dict(net_kwargs or {})
        kw.setdefault("n_dirs", n_dirs)
        kw.setdefault("speeds", [v_max * (k + 1) / n_speeds for k in range(n_speeds)])
        kw.setdefault("v_max", v_max)
        self._net_kwargs = kw
        self._net_cache = {}

    # -- plumbing ---------------------------------------------------------------

    def _net(self, dt):
        key = round(dt, 14)
        if key not in self._net_cache:
            self._net_cache[key] = build_control_net(self.evaluator, dt=dt,
                                                     **self._net_kwargs)
        return self._net_cache[key]

    def _time_grid(self, t):
        """Steps for horizon t: dt <= h / v_max and t an exact multiple."""
        n = max(1, int(math.ceil(t * self.v_max / self.h - 1e-12)))
        return t / n, n

    def _window(self, pts, extra=0.0):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        lo = pts.min(axis=0) - self.margin - extra
        hi = pts.max(axis=0) + self.margin + extra
        return Window.cover(lo, hi, self.h)

    def _sweep(self, window, dt):
        return StencilSweep(window, self.domain, self.gamma_field,
                            self.evaluator, self._net(dt), dt)

    def _terminal(self, sweep, targets, radius=None):
        """0 within `radius` of any target node, sentinel elsewhere."""
        r = self.h * (1.0 + 1e-9) if radius is None else radius
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        nodes = sweep.nodes
        near = np.zeros(nodes.shape[0], dtype=bool)
        for p in targets:
            near |= np.linalg.norm(nodes - p, axis=1) <= r
        # each target's enclosing cell joins the set, so the first backward
        # step always finds a fully reached cell to land in
        idx, _, ok = sweep.window.locate(targets)
        near[idx[ok].ravel()] = True
        near &= sweep.admissible
        if not np.any(near):
            raise ValidationError("no admissible node within reach of the target set")
        v0 = np.where(near, 0.0, SENTINEL)
        return v0

    def _check_endpoint(self, z):
        z = np.asarray(z, dtype=float)
        if float(self.domain.psi(z)) > self.h / 10.0:
            raise ValidationError(f"endpoint {z.tolist()} lies inside a hole")
        return z

    # -- metric functions --------------------------------------------------------

    def metric(self, t, x, y, want_path=False):
        """Least running cost from x to (an h-ball around) y in time t."""
        x = self._check_endpoint(x)
        y = self._check_endpoint(y)
        t = float(t)
        if t <= 0:
            raise ValidationError("t must be positive")
        dt, n_levels = self._time_grid(t)
        net = self._net(dt)
        if np.linalg.norm(x - y) > net.foot_speed_cap * t + self.h:
            raise Unreachable(
                f"|x-y| = {np.linalg.norm(x - y):.3f} exceeds reach "
                f"{net.foot_speed_cap * t + self.h:.3f}")
        window = self._window([x, y])
        sweep = self._sweep(window, dt)
        v0 = self._terminal(sweep, [y])
        final, snaps = sweep.run(v0, n_levels, store_all=want_path)
        value = float(sweep.interpolate(final, x))
        path = None
        if want_path and value < SENTINEL / 2:
            levels = [snaps[k] for k in range(n_levels + 1)]
            times, eta, ls, vs, _ = sweep.backtrack(x, levels)
            path = ReflectedPath(times, eta, ls, vs)
        return MetricSample(t, x, y, value, kind="m", path=path,
                            meta={"dt": dt, "h": self.h,
                                  "window": window.descriptor()})

    def metric_star(self, t, x, y, want_path=False, count=None):
        """Relaxed metric: endpoints quantified over boundary points in x+Y, y+Y."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        t = float(t)
        count = self.boundary_count if count is None else count
        xs = boundary_sample(self.domain, x, count)
        ys = boundary_sample(self.domain, y, count)
        dt, n_levels = self._time_grid(t)
        window = self._window(np.vstack([xs, ys]))
        sweep = self._sweep(window, dt)
        v0 = self._terminal(sweep, ys)
        final, snaps = sweep.run(v0, n_levels, store_all=want_path)
        vals = sweep.interpolate(final, xs)
        vals = np.atleast_1d(vals)
        best = int(np.argmin(vals))
        value = float(vals[best])
        x_hat = xs[best]
        y_hat = None
        path = None
        if want_path and value < SENTINEL / 2:
            levels = [snaps[k] for k in range(n_levels + 1)]
            times, eta, ls, vs, _ = sweep.backtrack(x_hat, levels)
            path = ReflectedPath(times, eta, ls, vs)
            end = eta[-1]
            y_hat = ys[int(np.argmin(np.linalg.norm(ys - end, axis=1)))]
        return MetricSample(t, x, y, value, kind="m*",
                            endpoints_star=(x_hat, y_hat), path=path,
                            meta={"dt": dt, "h": self.h, "n_endpoints": len(xs),
                                  "window": window.descriptor()})

    def _star_or_plain(self, t, x, y):
        """m* where the domain has a boundary; plain m for hole-free domains."""
        try:
            return self.metric_star(t, x, y)
        except EmptyBoundary:
            return self.metric(t, x, y)

    # -- additivity and the effective limit ---------------------------------------

    def check_additivity(self, samples, origin=None):
        """Sub/super-additivity defects of m* over a (t, y) plan.

        sub_defect = m*(2t, 0, 2y) - 2 m*(t, 0, y) (bounded above by C);
        super_defect is its negation (also bounded above by C).
        """
        origin = np.zeros(self.domain.dimension) if origin is None else np.asarray(origin)
        rows = []
        for t, y in samples:
            y = np.asarray(y, dtype=float)
            single = self._star_or_plain(t, origin, y)
            double = self._star_or_plain(2 * t, origin, 2 * y)
            if not (single.feasible and double.feasible):
                raise Unreachable(f"infeasible additivity sample t={t}, y={y.tolist()}")
            sub = double.value - 2.0 * single.value
            rows.append({"t": t, "y": y.tolist(), "m_star_t": single.value,
                         "m_star_2t": double.value, "sub_defect": sub,
                         "super_defect": -sub})
        return {
            "samples": rows,
            "max_sub_defect": max(r["sub_defect"] for r in rows),
            "max_super_defect": max(r["super_defect"] for r in rows),
            "C_estimate": max(abs(r["sub_defect"]) for r in rows),
        }

    def effective_metric(self, t, x, y, depth=4):
        """Fekete ladder a_k = m*(kt, kx, ky)/k for k = 1, 2, ..., 2^depth.

        Returns the deepest term, the Cauchy gap between the last two levels,
        and the Richardson extrapolant 2 a_{2k} - a_k that cancels the O(1/k)
        term (used as the effective-metric reference by the rate checks).
        """
        if depth < 1:
            raise ValidationError("depth must be at least 1")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ks = [2 ** j for j in range(depth + 1)]
        table = {}
        for k in ks:
            s = self._star_or_plain(k * t, k * x, k * y)
            if not s.feasible:
                raise Unreachable(f"infeasible ladder rung k={k}")
            table[k] = s.value / k
        a_hi = table[ks[-1]]
        a_lo = table[ks[-2]]
        return {
            "value": a_hi,
            "cauchy_gap": abs(a_hi - a_lo),
            "richardson": 2.0 * a_hi - a_lo,
            "a_table": table,
            "depth": depth,
        }

    # -- boundary connector --------------------------------------------------------

    def connect_boundary_points(self, x_tilde, y_tilde, duration, lattice_h=None,
                                n_steps=64, box_margin=1.6):
        """Constant-speed path in the closure between two boundary points.

        A* over an 8-connected fine lattice restricted to the closure, then
        arc-length reparametrization. Returns a ReflectedPath with l = 0.
        """
        a = self._check_endpoint(x_tilde)
        b = self._check_endpoint(y_tilde)
        hf = (self.h / 2.0) if lattice_h is None else float(lattice_h)
        lo = np.minimum(a, b) - box_margin
        hi = np.maximum(a, b) + box_margin
        shape = tuple(int(round((hi[i] - lo[i]) / hf)) + 1 for i in range(len(lo)))
        if len(shape) != 2:
            raise ValidationError("connector search implemented for 2-D")
        axes = [lo[i] + hf * np.arange(shape[i]) for i in range(2)]
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        ok = eval_psi(self.domain, pts) <= hf / 10.0
        ok = ok.reshape(shape)

        def snap(p):
            ij = tuple(int(round((p[i] - lo[i]) / hf)) for i in range(2))
            if not ok[ij]:
                # walk to the nearest admissible lattice node
                best, bd = None, math.inf
                for di in range(-2, 3):
                    for dj in range(-2, 3):
                        c = (ij[0] + di, ij[1] + dj)
                        if (0 <= c[0] < shape[0] and 0 <= c[1] < shape[1]
                                and ok[c]):
                            d = di * di + dj * dj
                            if d < bd:
                                best, bd = c, d
                if best is None:
                    raise NoPath("endpoint has no admissible lattice node nearby")
                ij = best
            return ij

        start, goal = snap(a), snap(b)
        goal_pt = np.array([lo[0] + hf * goal[0], lo[1] + hf * goal[1]])
        dist = {start: 0.0}
        prev = {}
        pq = [(0.0, start)]
        nb = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)
              if (di, dj) != (0, 0)]
        found = False
        while pq:
            f, cur = heapq.heappop(pq)
            if cur == goal:
                found = True
                break
            d0 = dist[cur]
            for di, dj in nb:
                nxt = (cur[0] + di, cur[1] + dj)
                if not (0 <= nxt[0] < shape[0] and 0 <= nxt[1] < shape[1]):
                    continue
                if not ok[nxt]:
                    continue
                nd = d0 + hf * math.hypot(di, dj)
                if nd < dist.get(nxt, math.inf):
                    dist[nxt] = nd
                    prev[nxt] = cur
                    p = np.array([lo[0] + hf * nxt[0], lo[1] + hf * nxt[1]])
                    heapq.heappush(pq, (nd + float(np.linalg.norm(p - goal_pt)), nxt))
        if not found:
            raise NoPath("lattice search failed to connect the endpoints")
        chain = [goal]
        while chain[-1] != start:
            chain.append(prev[chain[-1]])
        chain.reverse()
        poly = [a] + [np.array([lo[0] + hf * i, lo[1] + hf * j]) for i, j in chain] + [b]
        poly = np.array(poly)
        seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
        keep = np.concatenate([[True], seg > 1e-12])
        poly = poly[keep]
        seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
        arclen = np.concatenate([[0.0], np.cumsum(seg)])
        total = float(arclen[-1])
        times = np.linspace(0.0, duration, n_steps + 1)
        if total == 0.0:
            eta = np.repeat(poly[:1], n_steps + 1, axis=0)
        else:
            s_targets = np.linspace(0.0, total, n_steps + 1)
            eta = np.stack([np.interp(s_targets, arclen, poly[:, d])
                            for d in range(poly.shape[1])], axis=-1)
        dt = duration / n_steps
        v = np.diff(eta, axis=0) / dt
        return ReflectedPath(times, eta, np.zeros(n_steps), v,
                             meta={"speed": total / duration if duration > 0 else 0.0,
                                   "length": total})


# -- effective Lagrangian tables ---------------------------------------------------


class EffectiveLagrangian:
    """Sampled effective Lagrangian along a line of velocities q = q1 * e1."""

    def __init__(self, q_grid, values, cauchy_gap, t_levels, meta=None):
        self.q_grid = np.asarray(q_grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.cauchy_gap = float(cauchy_gap)
        self.t_levels = list(t_levels)
        self.meta = dict(meta or {})
        if self.q_grid.ndim != 1 or self.q_grid.shape != self.values.shape:
            raise ValidationError("q grid and value table shapes disagree")
        if np.any(np.diff(self.q_grid) <= 0):
            raise ValidationError("q grid must be strictly increasing")

    def __call__(self, q1):
        q = np.asarray(q1, dtype=float)
        if np.any(q < self.q_grid[0] - 1e-12) or np.any(q > self.q_grid[-1] + 1e-12):
            raise TableGap(f"q = {q1} outside table range "
                           f"[{self.q_grid[0]}, {self.q_grid[-1]}]")
        out = np.interp(q, self.q_grid, self.values)
        return float(out) if out.ndim == 0 else out

    def convexity_defect(self):
        """Max violation of midpoint convexity on the table (<= 0 when convex)."""
        v = self.values
        if len(v) < 3:
            return 0.0
        mid = 0.5 * (v[:-2] + v[2:])
        return float(np.max(v[1:-1] - mid))

    def effective_hamiltonian(self, p_grid=None):
        if p_grid is None:
            span = max(1.0, float(np.max(np.abs(self.q_grid))))
            p_grid = np.linspace(-2.0 * span, 2.0 * span, 129)
        p_grid = np.asarray(p_grid, dtype=float)
        vals = np.max(p_grid[:, None] * self.q_grid[None, :]
                      - self.values[None, :], axis=1)
        return EffectiveHamiltonian(p_grid, vals)


class EffectiveHamiltonian:
    """Convex conjugate of the effective Lagrangian table."""

    def __init__(self, p_grid, values):
        self.p_grid = np.asarray(p_grid, dtype=float)
        self.values = np.asarray(values, dtype=float)

    def __call__(self, p1):
        out = np.interp(np.asarray(p1, dtype=float), self.p_grid, self.values)
        return float(out) if out.ndim == 0 else out

    def legendre_back(self, q_grid):
        """Double transform; returns the convexified Lagrangian on q_grid."""
        q_grid = np.asarray(q_grid, dtype=float)
        return np.max(q_grid[:, None] * self.p_grid[None, :]
                      - self.values[None, :], axis=1)


def symmetry_allows_shared_sweep(engine):
    """Endpoint exchange m(t,a,b) = m(t,b,a) needs normal reflection and a
    velocity-reversible Lagrangian (radial Hamiltonian)."""
    return engine.gamma_field.is_normal and bool(engine.evaluator.hamiltonian.radial)


def build_effective_table(engine, q_values, t0=1.0, depth=4, calibrate=None,
                          transverse=1.25, boundary_count=None):
    """Tabulate L_bar(q) for q = q1 * e1 via one shared metric sweep.

    One backward sweep with terminal data on the boundary points of the origin
    cell yields F(z, s) = m(s, z, origin-cell boundary) for every node z and
    snapshot horizon s; endpoint exchange symmetry turns that into the whole
    Fekete ladder a_k(q) = m*(k t0, -k t0 q, 0) / k. The Richardson extrapolant
    across the two deepest levels is the tabulated value. For quadratic
    Hamiltonians a paired sweep on the hole-free domain at identical
    resolution measures the scheme's own bias, which is subtracted.
    """
    if not symmetry_allows_shared_sweep(engine):
        return _build_table_direct(engine, q_values, t0, depth)
    q_values = np.asarray(sorted(float(q) for q in q_values), dtype=float)
    if q_values[0] < 0:
        raise ValidationError("tabulate nonnegative q and mirror by symmetry")
    ks = [2 ** j for j in range(depth + 1)]
    k_max = ks[-1]
    # the endpoint-cube relaxation saves a distance that depends on where
    # k t0 q sits relative to the hole lattice; the O(1/k) coefficient is
    # only stable across the two extrapolation rungs when both displacements
    # are whole lattice shifts
    for k in ks[-2:]:
        off = k * t0 * q_values
        if np.any(np.abs(off - np.round(off)) > 1e-9):
            raise ValidationError(
                f"q grid misaligned: k t0 q must be integral at k = {k} "
                f"(use q in multiples of 1/{k * t0:g})")
    dt, n_unit = engine._time_grid(t0)
    count = engine.boundary_count if boundary_count is None else boundary_count

    qmax = float(q_values[-1])
    lo = np.array([-k_max * t0 * qmax - 1.0 - engine.margin, -transverse])
    hi = np.array([1.0 + engine.margin, transverse])
    window = Window.cover(lo, hi, engine.h)
    sweep = engine._sweep(window, dt)
    origin = np.zeros(2)
    ys = boundary_sample(engine.domain, origin, count)
    v0 = engine._terminal(sweep, ys)
    snap_levels = [k * n_unit for k in ks]
    _, snaps = sweep.run(v0, k_max * n_unit, snapshot_levels=snap_levels)

    # endpoint clouds per (q, k): boundary points of the cube at -k t0 q e1
    a = np.full((len(ks), len(q_values)), np.nan)
    for j, k in enumerate(ks):
        F = snaps[k * n_unit]
        for i, q in enumerate(q_values):
            center = np.array([-k * t0 * q, 0.0])
            xs = boundary_sample(engine.domain, center, count)
            vals = np.atleast_1d(sweep.interpolate(F, xs))
            a[j, i] = float(np.min(vals)) / k

    if calibrate is None:
        calibrate = engine.evaluator.hamiltonian.kind == "quadratic"
    cal_meta = None
    if calibrate:
        a_free = _free_ladder(engine, window, dt, n_unit, ks, q_values, t0)
        exact = 0.5 * q_values ** 2
        bias = a_free - exact[None, :]
        a = a - bias
        cal_meta = {"max_bias": float(np.max(np.abs(bias)))}

    if np.any(a >= SENTINEL / 4):
        raise Unreachable("table rung infeasible; widen the window or raise v_max")
    vals_hi = a[-1]
    vals_lo = a[-2]
    rich = 2.0 * vals_hi - vals_lo
    gap = float(np.max(np.abs(vals_hi - vals_lo)))

    # mirror to negative q by the lattice's point symmetry
    if q_values[0] == 0.0:
        full_q = np.concatenate([-q_values[:0:-1], q_values])
        full_v = np.concatenate([rich[:0:-1], rich])
    else:
        full_q = np.concatenate([-q_values[::-1], q_values])
        full_v = np.concatenate([rich[::-1], rich])
    meta = {
        "mode": "shared-sweep",
        "t0": t0, "depth": depth, "h": engine.h, "dt": dt,
        "window": window.descriptor(),
        "a_table": {int(k): a[j].tolist() for j, k in enumerate(ks)},
        "calibration": cal_meta,
        "raw_deepest": vals_hi.tolist(),
    }
    return EffectiveLagrangian(full_q, full_v, gap, [k * t0 for k in ks], meta)


def _free_ladder(engine, window, dt, n_unit, ks, q_values, t0):
    """Same sweep on the hole-free domain; terminal at the origin node ball."""
    free = free_space()
    from .geometry import ObliqueField

    gamma = ObliqueField(free)
    sweep = StencilSweep(window, free, gamma, engine.evaluator,
                         engine._net(dt), dt)
    nodes = sweep.nodes
    near = np.linalg.norm(nodes, axis=1) <= engine.h * (1.0 + 1e-9)
    v0 = np.where(near, 0.0, SENTINEL)
    snap_levels = [k * n_unit for k in ks]
    _, snaps = sweep.run(v0, ks[-1] * n_unit, snapshot_levels=snap_levels)
    a = np.full((len(ks), len(q_values)), np.nan)
    for j, k in enumerate(ks):
        F = snaps[k * n_unit]
        pts = np.stack([-k * t0 * q_values, np.zeros_like(q_values)], axis=-1)
        vals = np.atleast_1d(sweep.interpolate(F, pts))
        a[j] = vals / k
    return a


def _build_table_direct(engine, q_values, t0, depth):
    """Fallback without the exchange symmetry: one ladder per q."""
    q_values = np.asarray(sorted(float(q) for q in q_values), dtype=float)
    rich = []
    gaps = []
    tables = {}
    for q in q_values:
        res = engine.effective_metric(t0, np.zeros(2), np.array([-q * t0, 0.0]),
                                      depth=depth)
        rich.append(res["richardson"])
        gaps.append(res["cauchy_gap"])
        tables[float(q)] = res["a_table"]
    full_q = np.concatenate([-q_values[::-1], q_values]) if q_values[0] > 0 else q_values
    vals = np.asarray(rich)
    full_v = np.concatenate([vals[::-1], vals]) if q_values[0] > 0 else vals
    meta = {"mode": "direct", "t0": t0, "depth": depth, "per_q": tables}
    return EffectiveLagrangian(full_q, full_v, float(np.max(gaps)),
                               [t0 * 2 ** j for j in range(depth + 1)], meta)


def homogenized_value(table, u0, x, t, refine=True):
    """Hopf-Lax with the tabulated L_bar: min_q [t L_bar(q) + u0(x - t q e1)].

    The discrete argmin is polished against a local quadratic model of L_bar
    through the three bracketing nodes, so the q-grid step does not quantize
    the value. Raises TableGap when the minimizer sits on the table edge
    (extrapolation would be needed to certify it).
    """
    x = np.asarray(x, dtype=float)
    t = float(t)
    if t <= 0:
        return float(u0(x))
    shift = np.zeros((len(table.q_grid), x.shape[0]))
    shift[:, 0] = t * table.q_grid
    vals = t * table.values + np.asarray(u0(x[None, :] - shift), dtype=float)
    j = int(np.argmin(vals))
    if j in (0, len(vals) - 1):
        raise TableGap("Hopf-Lax minimizer on the table edge; widen the q grid")
    best = float(vals[j])
    if not refine:
        return best
    q3 = table.q_grid[j - 1:j + 2]
    coef = np.polyfit(q3, table.values[j - 1:j + 2], 2)

    def objective(q):
        y = x.copy()
        y[0] -= t * q
        return t * float(np.polyval(coef, q)) + float(u0(y))

    res = minimize_scalar(objective, bounds=(float(q3[0]), float(q3[-1])),
                          method="bounded", options={"xatol": 1e-10})
    return min(best, float(res.fun))


def homogenized_solve(table, u0, window, t_final, dt):
    """Homogenized solution sampled on a space-time grid (no holes)."""
    grid = SpaceTimeGrid(window, dt, t_final)
    nodes = window.nodes()
    levels = {0: np.asarray(u0(nodes), dtype=float)}
    for k in range(1, grid.n_levels + 1):
        t = k * dt
        levels[k] = np.array([homogenized_value(table, u0, xx, t) for xx in nodes])
    admissible = np.ones(window.node_count, dtype=bool)
    return ValueField(grid, levels, admissible, "homogenized", u0.descriptor(),
                      meta={"table_gap": table.cauchy_gap})


def translation_defect(engine, t, x, y, z):
    """|m*(t, x+z, y+z) - m*(t, x, y)| for a lattice shift z."""
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z - np.round(z)) > 1e-12):
        raise ValidationError("shift must be a lattice vector")
    base = engine.metric_star(t, x, y)
    moved = engine.metric_star(t, np.asarray(x) + z, np.asarray(y) + z)
    return abs(base.value - moved.value), base, moved
