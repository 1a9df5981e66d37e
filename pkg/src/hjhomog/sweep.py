"""Semi-Lagrangian sweep engine shared by the value and metric solvers.

A sweep precomputes, per control atom, the reflected one-step feet from every
grid node, the multilinear interpolation stencil at those feet (restricted to
admissible nodes), and the running cost of the step. Each backward level is
then a gather-multiply-min over the atoms.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import (BudgetExceeded, CFLViolation, ValidationError)
from .geometry import ScaledDomain, project_to_closure
from .hamiltonian import SENTINEL

W_MIN = 1e-9          # minimum admissible stencil mass before a foot is rejected
CLEAN_TOL = 0.05      # stencil mass allowed on unreached nodes before the
                      # landing itself counts as unreached; below it the read
                      # renormalizes over the reached corners (sentinels never
                      # mix: their weight noise would be amplified by 1e12, and
                      # the frontier must still advance when dt*v is just shy
                      # of a full cell)
PSI_TOL = 1e-12
MEM_CAP = 2.0e9       # bytes of stencil storage per sweep


def eval_psi(domain, pts):
    """psi on a batch of points, broadcasting scalar-valued fields."""
    out = np.asarray(domain.psi(pts), dtype=float)
    if out.ndim == 0:
        out = np.full(pts.shape[0], float(out))
    return out


def eval_grad(domain, pts):
    out = np.asarray(domain.grad_psi(pts), dtype=float)
    if out.ndim == 1:
        out = np.broadcast_to(out, pts.shape).copy()
    return out


def eval_gamma(gamma_field, pts):
    out = np.asarray(gamma_field(pts), dtype=float)
    if out.ndim == 1:
        out = np.broadcast_to(out, pts.shape).copy()
    return out


class Window:
    """Axis-aligned node lattice; periodic axes wrap with period shape*h."""

    def __init__(self, origin, shape, h, periodic=None):
        self.origin = np.asarray(origin, dtype=float)
        self.shape = tuple(int(s) for s in shape)
        self.h = float(h)
        n = len(self.shape)
        if self.origin.shape != (n,):
            raise ValidationError("origin and shape dimensions disagree")
        if any(s < 2 for s in self.shape):
            raise ValidationError("window needs at least 2 nodes per axis")
        if self.h <= 0:
            raise ValidationError("h must be positive")
        self.periodic = tuple(bool(p) for p in (periodic or (False,) * n))
        if len(self.periodic) != n:
            raise ValidationError("periodic flags length mismatch")
        self.ndim = n
        self.node_count = int(np.prod(self.shape))
        self._nodes = None

    @classmethod
    def cover(cls, lo, hi, h, periodic=None):
        """Smallest window with step h covering the box [lo, hi].

        On periodic axes the period is forced to hi - lo (which must then be
        an integer multiple of h); the closing node is the wrapped image of
        the opening one and is not stored.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        n = lo.shape[0]
        periodic = tuple(bool(p) for p in (periodic or (False,) * n))
        shape = []
        for i in range(n):
            span = hi[i] - lo[i]
            if span <= 0:
                raise ValidationError("window box is empty")
            m = span / h
            if periodic[i]:
                mi = int(round(m))
                if abs(m - mi) > 1e-9 * max(1.0, mi):
                    raise ValidationError(
                        f"period {span} along axis {i} is not a multiple of h={h}")
                shape.append(mi)
            else:
                shape.append(int(math.ceil(m - 1e-12)) + 1)
        return cls(lo, shape, h, periodic)

    def axis(self, i):
        return self.origin[i] + self.h * np.arange(self.shape[i])

    def nodes(self):
        if self._nodes is None:
            grids = np.meshgrid(*[self.axis(i) for i in range(self.ndim)], indexing="ij")
            self._nodes = np.stack([g.ravel() for g in grids], axis=-1)
        return self._nodes

    def extent(self, i):
        """Length covered along axis i (the period on periodic axes)."""
        return self.h * (self.shape[i] if self.periodic[i] else self.shape[i] - 1)

    def locate(self, pts):
        """Multilinear stencil for each query point.

        Returns (idx, w, ok): corner flat indices (M, 2^n) int32, weights
        (M, 2^n), and a mask that is False where a non-periodic coordinate
        falls outside the window.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        m = pts.shape[0]
        n = self.ndim
        i0s, i1s, fracs = [], [], []
        ok = np.ones(m, dtype=bool)
        for ax in range(n):
            u = (pts[:, ax] - self.origin[ax]) / self.h
            if self.periodic[ax]:
                u = np.mod(u, self.shape[ax])
                i0 = np.floor(u).astype(np.int64)
                i0 = np.minimum(i0, self.shape[ax] - 1)
                frac = u - i0
                i1 = (i0 + 1) % self.shape[ax]
            else:
                top = self.shape[ax] - 1
                otol = 1e-9 * (1.0 + top)
                ok &= (u >= -otol) & (u <= top + otol)
                u = np.clip(u, 0.0, top)
                i0 = np.minimum(np.floor(u).astype(np.int64), top - 1)
                frac = u - i0
                i1 = i0 + 1
            i0s.append(i0)
            i1s.append(i1)
            fracs.append(frac)
        corners = list(itertools.product((0, 1), repeat=n))
        idx = np.empty((m, len(corners)), dtype=np.int32)
        w = np.ones((m, len(corners)))
        for c, bits in enumerate(corners):
            multi = []
            for ax, b in enumerate(bits):
                multi.append(i1s[ax] if b else i0s[ax])
                w[:, c] *= fracs[ax] if b else (1.0 - fracs[ax])
            idx[:, c] = np.ravel_multi_index(multi, self.shape)
        return idx, w, ok

    def descriptor(self):
        return {"origin": self.origin.tolist(), "shape": list(self.shape),
                "h": self.h, "periodic": list(self.periodic)}


class ConstantAtom:
    """A single velocity vector applied at every node."""

    def __init__(self, v):
        self.v = np.asarray(v, dtype=float)
        self.speed = float(np.linalg.norm(self.v))
        self.foot_speed = self.speed
        self.design_l = 0.0
        self.label = f"const({', '.join(f'{c:+.3f}' for c in self.v)})"

    def velocities(self, pts_unit, domain):
        return np.broadcast_to(self.v, pts_unit.shape).copy()


class SlidingAtom:
    """Tangential-plus-push velocity field built from the local normal.

    v(x) = s * tau(x) + l * nu(x) with tau the normal rotated by +-90 degrees
    (2-D). Away from the boundary band the gradient still orients the field;
    where the gradient vanishes the atom rests.
    """

    def __init__(self, s, l, orientation=1):
        self.s = float(s)
        self.l = float(l)
        self.orientation = 1 if orientation >= 0 else -1
        self.speed = math.hypot(self.s, self.l)
        self.foot_speed = self.s
        self.design_l = self.l
        self.label = f"slide(s={self.s:.4f}, l={self.l:.4f}, o={self.orientation:+d})"

    def velocities(self, pts_unit, domain):
        g = eval_grad(domain, pts_unit)
        nrm = np.linalg.norm(g, axis=-1, keepdims=True)
        nu = np.divide(g, nrm, out=np.zeros_like(g), where=nrm > 0)
        if pts_unit.shape[1] != 2:
            raise ValidationError("sliding atoms are 2-D only")
        tau = np.stack([-nu[:, 1], nu[:, 0]], axis=-1) * self.orientation
        return self.s * tau + self.l * nu


class ControlNet:
    """The finite control family the DP minimizes over."""

    def __init__(self, atoms, v_max=None):
        if not atoms:
            raise ValidationError("empty control net")
        self.atoms = list(atoms)
        self.speed_cap = max(a.speed for a in self.atoms)
        self.foot_speed_cap = max(a.foot_speed for a in self.atoms)
        self.v_max = float(v_max) if v_max is not None else self.speed_cap

    def __len__(self):
        return len(self.atoms)

    def descriptor(self):
        return {"n_atoms": len(self.atoms), "v_max": self.v_max,
                "speed_cap": self.speed_cap, "foot_speed_cap": self.foot_speed_cap}


SLIDE_RUNGS = (0.25, 0.5, 0.75, 0.9, 0.95, 1.0, 1.05, 1.1, 1.25, 1.5, 2.0)


def eikonal_slide_speed(l, h_val):
    """Max feasible tangential speed at reflection rate l: |v| <= 1 - l*h."""
    cap = 1.0 - l * h_val
    inside = cap * cap - l * l
    return math.sqrt(inside) if inside > 0 else 0.0


def build_control_net(evaluator, n_dirs=16, speeds=None, v_max=None,
                      l_samples=None, extra_vectors=(), dt=None, curvature=1.0,
                      dim=2, orientations=(1, -1)):
    """Direction x speed product net plus a boundary sliding family.

    For a contact-angle condition the sliding family runs a ladder of
    reflection rates around the speed-maximizing rate -cos(theta)/sin^2(theta),
    each paired with the largest feasible tangential speed; a small curvature
    backoff (proportional to dt) keeps the discrete step strictly feasible.
    """
    bc = evaluator.bc
    ham = evaluator.hamiltonian
    atoms = [ConstantAtom(np.zeros(dim))]
    if speeds is None:
        top = v_max if v_max is not None else 1.0
        speeds = [top * k / 4.0 for k in range(1, 5)]
    if dim == 2:
        dirs = [np.array([math.cos(a), math.sin(a)])
                for a in np.linspace(0.0, 2.0 * math.pi, n_dirs, endpoint=False)]
    else:
        dirs = [np.eye(dim)[i] * s for i in range(dim) for s in (1.0, -1.0)]
        dirs = [d for d in dirs]
    for d in dirs:
        for s in speeds:
            if s > 0:
                atoms.append(ConstantAtom(s * np.asarray(d)))
    for v in extra_vectors:
        atoms.append(ConstantAtom(np.asarray(v, dtype=float)))

    if bc.kind == "contact" and dim == 2:
        h_val = float(bc.h(np.zeros(dim)))
        backoff = curvature * (dt if dt is not None else 0.0)
        if h_val < -1e-12:
            sin2 = 1.0 - h_val * h_val
            l_star = -h_val / sin2
            rungs = sorted({r * l_star for r in SLIDE_RUNGS})
        else:
            l_star = 0.0
            rungs = [0.0]
        if l_samples is not None:
            rungs = sorted(set(rungs) | {float(l) for l in l_samples})
        for l in rungs:
            if ham.kind == "eikonal":
                s_max = eikonal_slide_speed(l, h_val)
                s = s_max * max(0.0, 1.0 - backoff * s_max)
            else:
                s = max(speeds) if speeds else 1.0
            if s <= 0 and l <= 0:
                continue
            for o in orientations:
                atoms.append(SlidingAtom(s, l, o))
            if ham.kind != "eikonal" and l > 0:
                for o in orientations:
                    atoms.append(SlidingAtom(0.5 * s, l, o))
    elif bc.kind == "oblique" and dim == 2 and l_samples:
        for l in l_samples:
            for s in speeds:
                for o in orientations:
                    atoms.append(SlidingAtom(s, float(l), o))
    return ControlNet(atoms, v_max=v_max)


class StencilSweep:
    """Backward dynamic programming over a window with precomputed stencils.

    domain: ScaledDomain (or unit-scale ImplicitDomain). The admissible node
    set is psi <= band (band defaults to h/10); values at inadmissible nodes
    stay at the sentinel and carry no interpolation weight.
    """

    def __init__(self, window, domain, gamma_field, evaluator, net, dt,
                 band=None, mem_cap=MEM_CAP):
        self.window = window
        self.domain = domain
        self.gamma_field = gamma_field
        self.evaluator = evaluator
        self.net = net
        self.dt = float(dt)
        h = window.h
        self.band = h / 10.0 if band is None else float(band)
        cap = max(net.speed_cap, 1e-300)
        if self.dt > h / cap + 1e-12:
            raise CFLViolation(
                f"dt = {self.dt:.3e} exceeds h / speed_cap = {h / cap:.3e}")
        need = window.node_count * len(net) * 56
        if need > mem_cap:
            raise BudgetExceeded(
                f"stencil storage {need / 1e9:.2f} GB exceeds cap {mem_cap / 1e9:.2f} GB")

        self.scaled = isinstance(domain, ScaledDomain)
        self.to_unit = domain.unit_point if self.scaled else (lambda z: z)
        self.unit_domain = domain.base if self.scaled else domain
        nodes = window.nodes()
        self.nodes = nodes
        self.unit_pts = self.to_unit(nodes)
        psi_nodes = eval_psi(domain, nodes)
        self.admissible = psi_nodes <= self.band
        if not np.any(self.admissible):
            raise ValidationError("window contains no admissible nodes")
        self._c_bound = (1.0 if gamma_field.is_normal
                         else 1.0 + gamma_field.sup_norm() / gamma_field.rho)
        self._stencils = []
        self._exit_fraction = []
        for atom in net.atoms:
            self._stencils.append(self._build_stencil(atom))
        self.value_shape = (window.node_count,)

    # -- stencil construction -------------------------------------------------

    def _build_stencil(self, atom):
        dt = self.dt
        nodes = self.nodes
        v = atom.velocities(self.unit_pts, self.unit_domain)
        tent = nodes + dt * v
        psi_t = eval_psi(self.domain, tent)
        exiting = psi_t > 0.0
        l_arr = np.zeros(nodes.shape[0])
        feet = tent.copy()
        infeasible = ~self.admissible
        if np.any(exiting):
            rows = np.nonzero(exiting)[0]
            gdir = eval_gamma(self.gamma_field, self.unit_pts[rows])
            sub_tent = tent[rows]
            speeds = np.linalg.norm(v[rows], axis=-1)
            hi = self._c_bound * speeds + 1.0
            ok = eval_psi(self.domain, sub_tent - dt * hi[:, None] * gdir) <= 0.0
            for _ in range(4):
                if np.all(ok):
                    break
                hi = np.where(ok, hi, hi * 2.0)
                ok = eval_psi(self.domain, sub_tent - dt * hi[:, None] * gdir) <= 0.0
            bracket_fail = ~ok
            lo = np.zeros_like(hi)
            for _ in range(52):
                mid = 0.5 * (lo + hi)
                inside = eval_psi(self.domain, sub_tent - dt * mid[:, None] * gdir) <= 0.0
                hi = np.where(inside, mid, hi)
                lo = np.where(inside, lo, mid)
            feet[rows] = sub_tent - dt * hi[:, None] * gdir
            l_arr[rows] = hi
            if np.any(bracket_fail):
                infeasible = infeasible.copy()
                infeasible[rows[bracket_fail]] = True
        # residual snap for stray feet (bisection ends on the inside bracket,
        # so this loop is empty in practice)
        stray = (eval_psi(self.domain, feet) > PSI_TOL) & ~infeasible
        for r in np.nonzero(stray)[0]:
            try:
                feet[r] = project_to_closure(self.domain, feet[r])
            except Exception:
                infeasible[r] = True

        idx, w, ok_loc = self.window.locate(feet)
        infeasible = infeasible | ~ok_loc
        wa = w * self.admissible[idx]
        mass = wa.sum(axis=1)
        good = mass > W_MIN
        infeasible = infeasible | ~good
        mass_safe = np.where(good, mass, 1.0)
        w_final = wa / mass_safe[:, None]

        # cost at the realized control pair of the discrete step: the ODE
        # (foot - x)/dt + l*gamma = v_eff holds exactly by construction
        v_eff = v.copy()
        if np.any(exiting):
            rows = np.nonzero(exiting)[0]
            gdir = eval_gamma(self.gamma_field, self.unit_pts[rows])
            v_eff[rows] = (feet[rows] - nodes[rows]) / dt + l_arr[rows, None] * gdir
        raw = self.evaluator.step_cost_field(self.unit_pts, v_eff, l_arr)
        contrib = np.where(raw >= SENTINEL / 2, SENTINEL, dt * raw)
        contrib = np.where(infeasible, SENTINEL, contrib)
        self._exit_fraction.append(float(np.mean(exiting)))
        return idx, w_final, contrib

    # -- level updates ---------------------------------------------------------

    def initial_values(self, fn):
        """Sample a callable on the nodes; inadmissible nodes get the sentinel."""
        vals = np.asarray(fn(self.nodes), dtype=float)
        if vals.ndim == 0:
            vals = np.full(self.window.node_count, float(vals))
        out = np.where(self.admissible, vals, SENTINEL)
        return out

    def step(self, values):
        best = np.full_like(values, SENTINEL)
        # fast path when every admissible node already carries a finite value
        # (initial-data sweeps): plain interpolation
        poisoned = bool(np.any(values[self.admissible] >= SENTINEL / 2))
        for idx, w, contrib in self._stencils:
            vals = values[idx]
            if poisoned:
                clean = vals < SENTINEL / 2
                cw = w * clean
                mass = cw.sum(axis=1)
                interp = np.einsum("nc,nc->n", cw, np.where(clean, vals, 0.0))
                cand = np.where(mass >= 1.0 - CLEAN_TOL,
                                contrib + interp / np.maximum(mass, W_MIN),
                                SENTINEL)
            else:
                cand = contrib + np.einsum("nc,nc->n", w, vals)
            np.minimum(best, cand, out=best)
        np.minimum(best, SENTINEL, out=best)
        best[~self.admissible] = SENTINEL
        return best

    def run(self, v0, n_levels, snapshot_levels=None, store_all=False):
        """Advance n_levels backward steps from the level-0 data v0.

        Returns (final_values, snapshots) where snapshots maps a requested
        level to a copy of that level (level 0 included on request); with
        store_all=True, snapshots holds every level.
        """
        want = set(snapshot_levels or ())
        if store_all:
            want = set(range(n_levels + 1))
        values = np.asarray(v0, dtype=float).copy()
        snaps = {}
        if 0 in want:
            snaps[0] = values.copy()
        for k in range(1, n_levels + 1):
            values = self.step(values)
            if k in want:
                snaps[k] = values.copy()
        return values, snaps

    # -- queries ---------------------------------------------------------------

    def interpolate(self, values, pts):
        """Admissible-node multilinear interpolation at arbitrary points.

        Points whose cell leans on unreached nodes (sentinel values) by more
        than CLEAN_TOL of the admissible mass read back as the sentinel.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        idx, w, ok = self.window.locate(pts)
        wa = w * self.admissible[idx]
        vals = values[idx]
        clean = vals < SENTINEL / 2
        cw = wa * clean
        mass_adm = wa.sum(axis=1)
        mass = cw.sum(axis=1)
        good = ok & (mass_adm > W_MIN) & (mass >= (1.0 - CLEAN_TOL) * mass_adm)
        mass_safe = np.where(mass > W_MIN, mass, 1.0)
        out = np.einsum("nc,nc->n", cw / mass_safe[:, None],
                        np.where(clean, vals, 0.0))
        out = np.where(good, out, SENTINEL)
        return out if out.shape[0] > 1 else float(out[0])

    def point_step(self, x, atom):
        """One reflected step from a single (off-grid) point; mirrors _build_stencil."""
        x = np.asarray(x, dtype=float)
        dt = self.dt
        xu = self.to_unit(x)
        v = atom.velocities(np.atleast_2d(xu), self.unit_domain)[0]
        tent = x + dt * v
        l = 0.0
        foot = tent
        if float(self.domain.psi(tent)) > 0.0:
            gdir = np.asarray(self.gamma_field(xu), dtype=float)
            hi = self._c_bound * float(np.linalg.norm(v)) + 1.0
            ok = False
            for _ in range(5):
                if float(self.domain.psi(tent - dt * hi * gdir)) <= 0.0:
                    ok = True
                    break
                hi *= 2.0
            if not ok:
                return None
            lo = 0.0
            for _ in range(52):
                mid = 0.5 * (lo + hi)
                if float(self.domain.psi(tent - dt * mid * gdir)) <= 0.0:
                    hi = mid
                else:
                    lo = mid
            l = hi
            foot = tent - dt * l * gdir
            v = (foot - x) / dt + l * gdir
        cost = float(self.evaluator.step_cost(xu, v, l))
        return foot, l, v, cost

    def backtrack(self, x0, levels, n_steps=None):
        """Greedy argmin trajectory through stored levels.

        levels: list/array of value arrays [level 0 .. level K] (cost-to-go
        with K steps remaining at index K). Starts at x0 with K steps left and
        walks to level 0. Returns (times, eta, l, v, costs).
        """
        K = len(levels) - 1
        if n_steps is None:
            n_steps = K
        if n_steps > K:
            raise ValidationError("not enough stored levels to backtrack")
        x = np.asarray(x0, dtype=float).copy()
        eta = [x.copy()]
        ls, vs, costs = [], [], []
        for k in range(n_steps, 0, -1):
            best = None
            for atom in self.net.atoms:
                stepped = self.point_step(x, atom)
                if stepped is None:
                    continue
                foot, l, v, cost = stepped
                if cost >= SENTINEL / 2:
                    continue
                val = self.dt * cost + self.interpolate(levels[k - 1], foot)
                if best is None or val < best[0]:
                    best = (val, foot, l, v, cost)
            if best is None:
                raise ValidationError("backtrack stuck: no feasible atom")
            _, foot, l, v, cost = best
            x = foot
            eta.append(x.copy())
            ls.append(l)
            vs.append(v)
            costs.append(cost)
        times = self.dt * np.arange(len(eta))
        return times, np.array(eta), np.array(ls), np.array(vs), np.array(costs)

    def report(self):
        return {
            "nodes": self.window.node_count,
            "admissible": int(np.sum(self.admissible)),
            "atoms": len(self.net),
            "dt": self.dt,
            "band": self.band,
            "exit_fraction": self._exit_fraction,
        }
