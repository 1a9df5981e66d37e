"""Value functions of the reflected optimal-control problem.

solve_value runs the semi-Lagrangian sweep backward from the initial datum;
the resulting ValueField stores selected time levels and interpolates between
admissible nodes. optimize_point cross-checks single values by direct search
over piecewise-constant controls.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import (GridMismatch, ValidationError, WindowTooSmall)
from .hamiltonian import SENTINEL
from .sweep import StencilSweep, Window, build_control_net

W_MIN = 1e-9


class InitialData:
    """Initial datum u0 with its Lipschitz constant (used for bounds and nets)."""

    def __init__(self, fn, lipschitz, name="custom", params=None):
        self.fn = fn
        self.lipschitz = float(lipschitz)
        self.name = name
        self.params = dict(params or {})

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def descriptor(self):
        return {"name": self.name, "lipschitz": self.lipschitz, **self.params}


def linear_initial(pbar, offset=0.0):
    pbar = np.asarray(pbar, dtype=float)

    def fn(x):
        return np.asarray(x, dtype=float) @ pbar + offset

    return InitialData(fn, float(np.linalg.norm(pbar)), name="linear",
                       params={"pbar": pbar.tolist(), "offset": offset})


def sine_initial(k=1, axis=0):
    """u0(x) = sin(2 pi k x_axis) / (2 pi k); Lipschitz constant 1."""
    w = 2.0 * math.pi * k

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.sin(w * x[..., axis]) / w

    return InitialData(fn, 1.0, name="sine", params={"k": k, "axis": axis})


class SpaceTimeGrid:
    """Spatial window plus a uniform time grid; validates probe reachability."""

    def __init__(self, window, dt, t_final, epsilon=1.0):
        self.window = window
        self.dt = float(dt)
        self.t_final = float(t_final)
        self.epsilon = float(epsilon)
        if self.dt <= 0 or self.t_final <= 0:
            raise ValidationError("dt and t_final must be positive")
        levels = self.t_final / self.dt
        self.n_levels = int(round(levels))
        if abs(levels - self.n_levels) > 1e-9 * (1 + self.n_levels):
            raise ValidationError(
                f"t_final = {t_final} is not a multiple of dt = {dt}")

    def level_of(self, t):
        k = t / self.dt
        ki = int(round(k))
        if abs(k - ki) > 1e-9 * (1 + ki) or not 0 <= ki <= self.n_levels:
            raise ValidationError(f"t = {t} is not a stored time level")
        return ki

    def check_probes(self, probes, reach):
        """Every probe's backward cone (speed `reach`) must fit in the window."""
        w = self.window
        for x, t in probes:
            x = np.asarray(x, dtype=float)
            if t > self.t_final + 1e-12:
                raise ValidationError(f"probe time {t} beyond horizon {self.t_final}")
            r = reach * t + w.h
            for ax in range(w.ndim):
                if w.periodic[ax]:
                    continue
                lo = w.origin[ax]
                hi = w.origin[ax] + w.extent(ax)
                if x[ax] - r < lo - 1e-12 or x[ax] + r > hi + 1e-12:
                    raise WindowTooSmall(
                        f"probe {x.tolist()} at t={t} needs [{x[ax] - r:.3f}, "
                        f"{x[ax] + r:.3f}] on axis {ax}, window has [{lo:.3f}, {hi:.3f}]")


class ValueField:
    """Stored value-function levels with admissible-node interpolation."""

    def __init__(self, grid, levels, admissible, bc_kind, u0_desc, meta=None):
        self.grid = grid
        self.levels = dict(sorted(levels.items()))
        self.admissible = admissible
        self.bc_kind = bc_kind
        self.u0_desc = dict(u0_desc)
        self.meta = dict(meta or {})

    @property
    def window(self):
        return self.grid.window

    def stored_levels(self):
        return list(self.levels.keys())

    def values(self, level):
        if level not in self.levels:
            raise ValidationError(f"level {level} not stored")
        return self.levels[level]

    def interpolate(self, level_values, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        idx, w, ok = self.window.locate(pts)
        wa = w * self.admissible[idx]
        mass = wa.sum(axis=1)
        good = ok & (mass > W_MIN)
        mass = np.where(good, mass, 1.0)
        out = np.einsum("nc,nc->n", wa / mass[:, None], level_values[idx])
        return np.where(good, out, SENTINEL)

    def value_at(self, x, t):
        """Value at one space-time point (t must hit a stored level)."""
        k = self.grid.level_of(t)
        out = self.interpolate(self.values(k), np.atleast_2d(np.asarray(x, dtype=float)))
        return float(out[0])

    def node_table(self, level):
        """(x_1..x_n, t, V) rows at admissible nodes, for CSV export."""
        vals = self.values(level)
        nodes = self.window.nodes()[self.admissible]
        v = vals[self.admissible]
        t = level * self.grid.dt
        return np.column_stack([nodes, np.full(len(v), t), v])


def estimate_m0(u0, k0):
    """A-priori speed bound for minimizing trajectories: 2(Lip + sqrt(2 K0) + 1)."""
    return 2.0 * (u0.lipschitz + math.sqrt(2.0 * k0) + 1.0)


def default_net(evaluator, u0, dt, v_max=None, n_dirs=16, n_speeds=4, **kw):
    cap = v_max
    if cap is None:
        cap = estimate_m0(u0, evaluator.hamiltonian.k0)
        if evaluator.hamiltonian.kind == "eikonal":
            # feasible speeds never exceed the sliding cap; larger atoms are
            # provably infeasible columns and only burn the CFL budget
            bc = evaluator.bc
            if bc.kind == "contact":
                h_inf = math.cos(bc.theta_sup())
                sin2 = max(1.0 - h_inf * h_inf, 1e-12)
                cap = min(cap, 1.0 / sin2)
            else:
                cap = min(cap, 1.0)
    speeds = [cap * (k + 1) / n_speeds for k in range(n_speeds)]
    return build_control_net(evaluator, n_dirs=n_dirs, speeds=speeds,
                             v_max=cap, dt=dt, **kw)


def solve_value(domain, gamma_field, evaluator, u0, grid, net=None,
                probes=None, snapshot_times=(), store_all=False, band=None):
    """Backward DP for the value function on the given space-time grid.

    Returns a ValueField holding level 0, the final level, every requested
    snapshot time, and the probe times. Probes additionally undergo the
    reachability-cone check against the net's realized foot speed.
    """
    if net is None:
        net = default_net(evaluator, u0, grid.dt)
    probes = list(probes or ())
    if probes:
        grid.check_probes(probes, net.foot_speed_cap)
    sweep = StencilSweep(grid.window, domain, gamma_field, evaluator, net,
                         grid.dt, band=band)
    want = {0, grid.n_levels}
    for t in snapshot_times:
        want.add(grid.level_of(t))
    for _, t in probes:
        want.add(grid.level_of(t))
    v0 = sweep.initial_values(u0.fn)
    final, snaps = sweep.run(v0, grid.n_levels,
                             snapshot_levels=sorted(want), store_all=store_all)
    snaps.setdefault(grid.n_levels, final)
    snaps.setdefault(0, v0)
    m0 = estimate_m0(u0, evaluator.hamiltonian.k0)
    meta = {
        "m0_estimate": m0,
        "net": net.descriptor(),
        "sweep": sweep.report(),
        "epsilon": grid.epsilon,
        "u0": u0.descriptor(),
        "window": grid.window.descriptor(),
        "dt": grid.dt,
        "t_final": grid.t_final,
    }
    field = ValueField(grid, snaps, sweep.admissible, evaluator.bc.kind,
                       u0.descriptor(), meta=meta)
    field._sweep = sweep
    return field


def small_time_constant(evaluator, u0, net, samples=256, rng=None):
    """Two-sided constant C with |V(x,t) - u0(x)| <= C t.

    Upper side: the cost of resting, sup_y L(y,0,0). Lower side: transport at
    the net's speed against u0's Lipschitz constant plus the Lagrangian's
    lower bound (K1 for oblique conditions, K0 for contact angle).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    n = evaluator.bc.domain.dimension
    pts = rng.uniform(-0.5, 0.5, size=(samples, n))
    psi = np.atleast_1d(np.asarray(evaluator.bc.domain.psi(pts), dtype=float))
    pts = pts[psi <= 0.0]
    rest = max(float(evaluator.lagrangian(y, np.zeros(n), 0.0)) for y in pts)
    k_low = evaluator.k1 if evaluator.bc.kind == "oblique" else evaluator.hamiltonian.k0
    low = u0.lipschitz * net.foot_speed_cap + k_low
    return max(rest, low, 0.0), {"rest": rest, "transport": low}


def dpp_residual(sweep, level_values, tau_steps):
    """Max defect of the tau-step dynamic programming identity.

    Compares the full backward update (control may switch every dt) against
    the best single atom held for tau_steps; both start from level_values.
    Nonnegative by construction; bounded by the scheme's consistency error.
    """
    if tau_steps < 1:
        raise ValidationError("tau must be at least one step")
    exact = level_values
    for _ in range(tau_steps):
        exact = sweep.step(exact)
    held = np.full_like(level_values, SENTINEL)
    for idx, w, contrib in sweep._stencils:
        val = level_values
        acc = None
        w64 = w.astype(np.float64)
        for _ in range(tau_steps):
            stepped = contrib + np.einsum("nc,nc->n", w64, val[idx])
            stepped = np.minimum(stepped, SENTINEL)
            val = stepped
            acc = stepped
        np.minimum(held, acc, out=held)
    held[~sweep.admissible] = SENTINEL
    mask = sweep.admissible & (exact < SENTINEL / 2) & (held < SENTINEL / 2)
    if not np.any(mask):
        return 0.0
    return float(np.max(held[mask] - exact[mask]))


def discrete_comparison(field_a, field_b, tol=1e-12):
    """True iff field_a <= field_b + tol at every stored common level and node."""
    wa, wb = field_a.window, field_b.window
    if (wa.shape != wb.shape or wa.h != wb.h
            or not np.allclose(wa.origin, wb.origin)
            or field_a.grid.dt != field_b.grid.dt):
        raise GridMismatch("fields live on different grids")
    common = set(field_a.stored_levels()) & set(field_b.stored_levels())
    if not common:
        raise GridMismatch("no common stored levels")
    adm = field_a.admissible & field_b.admissible
    for k in sorted(common):
        a = field_a.values(k)[adm]
        b = field_b.values(k)[adm]
        ok = (a < SENTINEL / 2) & (b < SENTINEL / 2)
        if np.any(a[ok] > b[ok] + tol):
            return False
    return True


def optimize_point(x, t, domain, gamma_field, evaluator, u0,
                   n_segments=4, substeps=24, n_restarts=4, seed=0, v_cap=None):
    """Direct search over piecewise-constant controls; upper-bounds the value.

    Powell refinement from a few deterministic and random starts. Returns
    (value, path) with the best reflected path found.
    """
    from scipy.optimize import minimize

    from .skorokhod import ControlSignal, solve_sp

    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    cap = v_cap if v_cap is not None else estimate_m0(u0, evaluator.hamiltonian.k0)
    dt = t / (n_segments * substeps)
    scaled = hasattr(domain, "unit_point")
    unit = domain.unit_point if scaled else (lambda z: z)

    def run_cost(flat):
        vs = flat.reshape(n_segments, n)
        nrm = np.linalg.norm(vs, axis=1, keepdims=True)
        vs = np.where(nrm > cap, vs * (cap / np.where(nrm > 0, nrm, 1.0)), vs)
        v_fine = np.repeat(vs, substeps, axis=0)
        times = dt * np.arange(n_segments * substeps + 1)
        sig = ControlSignal(times, v_fine)
        path = solve_sp(x, sig, domain, gamma_field)
        cost = 0.0
        for i in range(len(path.l)):
            gdir = None
            v_eff = path.v[i]
            if path.l[i] > 0:
                gdir = np.asarray(gamma_field(unit(path.eta[i])), dtype=float)
                v_eff = (path.eta[i + 1] - path.eta[i]) / dt + path.l[i] * gdir
            c = float(evaluator.step_cost(unit(path.eta[i]), v_eff, path.l[i]))
            if c >= SENTINEL / 2:
                return SENTINEL, path
            cost += dt * c
        return cost + float(u0(path.eta[-1])), path

    rng = np.random.default_rng(seed)
    starts = [np.zeros(n_segments * n)]
    for scale in (0.5, 1.0):
        for _ in range(n_restarts):
            starts.append(rng.uniform(-scale * cap, scale * cap, n_segments * n))
    best_val, best_path = math.inf, None
    for s0 in starts:
        res = minimize(lambda f: run_cost(f)[0], s0, method="Powell",
                       options={"xtol": 1e-6, "ftol": 1e-9, "maxfev": 4000})
        val, path = run_cost(res.x)
        if val < best_val:
            best_val, best_path = val, path
    return best_val, best_path


def sliding_probe(sweep, y, continuation):
    """One DP backup at a single point; reports the selected boundary mode.

    continuation: callable giving the next level's value at the foot (exact
    functions make the argmin immune to interpolation error). Returns a dict
    with the winning atom's design and realized reflection rate and speed.
    """
    y = np.asarray(y, dtype=float)
    best = None
    for atom in sweep.net.atoms:
        stepped = sweep.point_step(y, atom)
        if stepped is None:
            continue
        foot, l, v_eff, cost = stepped
        if cost >= SENTINEL / 2:
            continue
        val = sweep.dt * cost + float(continuation(foot))
        if best is None or val < best["value"]:
            best = {
                "value": val,
                "atom": atom.label,
                "design_l": atom.design_l,
                "realized_l": l,
                "speed": float(np.linalg.norm(foot - y)) / sweep.dt,
                "v_eff": v_eff,
                "foot": foot,
            }
    if best is None:
        raise ValidationError("no feasible atom at the probe point")
    return best
