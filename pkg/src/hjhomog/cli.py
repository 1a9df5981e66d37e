"""Command-line front end.

Subcommands: solve, skorokhod, legendre, metric, effective, rate, example,
selftest. Configuration comes from --config YAML (with includes) plus
repeatable --override key=value assignments; every output embeds the config
hash. Exit codes: 0 success, 2 validation error, 3 numerical-contract
violation, 4 I/O or format error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import (build_scenario, config_hash, load_config, parse_fraction,
                     parse_theta)
from .errors import HjhomogError, ValidationError
from .geometry import ObliqueField, single_ball
from .hamiltonian import ContactAngleBC, Hamiltonian, LagrangianEvaluator
from .io import standard_meta, store_field, write_csv, write_json
from .io import cache_get, cache_key, cache_put
from .metric import MetricEngine, build_effective_table
from .rate import run_rate_experiment, solve_strip
from .skorokhod import ControlSignal, residual, solve_sp
from .sweep import Window, build_control_net
from .value import SpaceTimeGrid, linear_initial, solve_value

log = logging.getLogger("hjhomog")


def _parser():
    p = argparse.ArgumentParser(prog="hjhomog",
                                description="Hamilton-Jacobi solvers on "
                                            "periodic perforated domains")
    p.add_argument("--version", action="version", version=f"hjhomog {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="YAML run configuration")
        sp.add_argument("--out", default=None, help="primary output path")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE")
        return sp

    common(sub.add_parser("solve", help="oscillatory value-function solve"))
    common(sub.add_parser("skorokhod", help="single reflected trajectory"))
    common(sub.add_parser("legendre", help="modified Lagrangian tables"))
    common(sub.add_parser("metric", help="metric-function samples"))
    common(sub.add_parser("effective", help="effective Lagrangian table"))

    r = common(sub.add_parser("rate", help="homogenization-rate experiment"),
               config_required=False)
    r.add_argument("--scenario", default=None, help="scenario config (alias of --config)")
    r.add_argument("--eps", default="1/4,1/8,1/16",
                   help="comma list of epsilons, fractions allowed")
    r.add_argument("--probes", type=int, default=24)

    e = sub.add_parser("example", help="front-evolution figure for the disk")
    e.add_argument("--theta", default="0.5pi")
    e.add_argument("--t", type=float, default=3.0)
    e.add_argument("--h", type=float, default=1.0 / 16.0)
    e.add_argument("--dt", type=float, default=1.0 / 16.0)
    e.add_argument("--half-width", type=float, default=3.5)
    e.add_argument("--out", default="example.svg")

    sub.add_parser("selftest", help="run the built-in quick checks")
    return p


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    try:
        handler = _DISPATCH[args.command]
        handler(args)
        return 0
    except HjhomogError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


def run(command, config_path, overrides=()) -> int:
    """Programmatic entry point mirroring the CLI contract."""
    argv = [command]
    if config_path:
        argv += ["--config", config_path]
    for ov in overrides:
        argv += ["--override", ov]
    return main(argv)


def _load(args):
    cfg, h = load_config(args.config, args.override)
    built = build_scenario(cfg)
    built["config"] = cfg
    return built


def _out_path(args, default_name):
    if args.out:
        return args.out
    return os.path.join("out", default_name)


def _sibling(path, suffix):
    stem, _ = os.path.splitext(path)
    return stem + suffix


def _build_window(solver, default_lo=(-3.0, -3.0), default_hi=(3.0, 3.0)):
    w = solver.get("window", {})
    lo = np.asarray(w.get("lo", default_lo), dtype=float)
    hi = np.asarray(w.get("hi", default_hi), dtype=float)
    periodic = w.get("periodic")
    if periodic is not None:
        periodic = tuple(bool(b) for b in periodic)
    return Window.cover(lo, hi, float(solver.get("h", 1.0 / 16.0)),
                        periodic=periodic)


def _cmd_solve(args):
    built = _load(args)
    cfg = built["config"]
    solver = built["solver"]
    exp = cfg.get("experiment", {}).get("solve", {})
    eps = parse_fraction(solver.get("epsilon", 1.0))
    window = _build_window(solver)
    dt = float(solver.get("dt", solver.get("h", 1.0 / 16.0)))
    t_final = float(solver.get("T", 1.0))
    grid = SpaceTimeGrid(window, dt, t_final, epsilon=eps)
    domain = built["domain"]
    if eps != 1.0:
        from .geometry import ScaledDomain

        domain = ScaledDomain(domain, eps)
    probes = [(np.asarray(p[:-1], dtype=float), float(p[-1]))
              for p in exp.get("probes", [])]
    snapshot_times = [float(t) for t in exp.get("snapshot_times", [])]
    field = solve_value(domain, built["gamma_field"], built["evaluator"],
                        built["u0"], grid, probes=probes or None,
                        snapshot_times=snapshot_times)
    field.meta["config_hash"] = built["hash"]
    out = _out_path(args, "field.bin")
    formats = set(cfg.get("output", {}).get("formats", ["bin", "csv"]))
    meta = standard_meta(built["hash"])
    written = []
    if "bin" in formats or out.endswith(".bin"):
        store_field(field, out if out.endswith(".bin") else _sibling(out, ".bin"))
        written.append("bin")
    if "csv" in formats:
        final = field.grid.n_levels
        rows = [tuple(r) for r in field.node_table(final)]
        cols = [f"x{i+1}" for i in range(window.ndim)] + ["t", "V"]
        write_csv(_sibling(out, ".csv"), cols, rows, meta)
        written.append("csv")
    if "json" in formats:
        write_json(_sibling(out, ".json"),
                   {"probes": [[*x.tolist(), t,
                                float(field.value_at(x, t))]
                               for x, t in probes]} if probes else {},
                   meta)
        written.append("json")
    if "svg" in formats:
        from .plots import front_plot

        times = snapshot_times or [t_final]
        front_plot(field, times, _sibling(out, ".svg"), salt=built["hash"])
        written.append("svg")
    log.info("solve: wrote %s (%s)", out, ", ".join(written))


def _cmd_skorokhod(args):
    built = _load(args)
    cfg = built["config"]
    exp = cfg.get("experiment", {}).get("skorokhod", {})
    x0 = np.asarray(exp.get("x0", [1.2, 0.0]), dtype=float)
    v = np.asarray(exp.get("v", [-1.0, 0.2]), dtype=float)
    t_final = float(exp.get("t_final", 2.0))
    dt = float(exp.get("dt", 1e-2))
    control = ControlSignal.constant(v, t_final, dt)
    path = solve_sp(x0, control, built["domain"], built["gamma_field"])
    rep = residual(path, built["domain"], built["gamma_field"])
    out = _out_path(args, "path.csv")
    meta = standard_meta(built["hash"], extra={"residual": rep})
    path.write_csv(out, metadata=meta)
    from .plots import path_plot

    path_plot(path, built["domain"], _sibling(out, ".svg"), salt=built["hash"])
    log.info("skorokhod: wrote %s; max defect %.3e", out,
             max(rep["max_ode_defect"], rep["max_psi_violation"]))


def _cmd_legendre(args):
    built = _load(args)
    cfg = built["config"]
    exp = cfg.get("experiment", {}).get("legendre", {})
    y = np.asarray(exp.get("y", [0.5, 0.0]), dtype=float)
    l_values = [float(l) for l in exp.get("l_values", [0.0, 0.5, 1.0])]
    qmax = float(exp.get("qmax", 2.5))
    n = int(exp.get("n", 101))
    ev = built["evaluator"]
    rows = []
    for l in l_values:
        for q1 in np.linspace(-qmax, qmax, n):
            val = ev.lagrangian(y, np.array([q1, 0.0]), l)
            rows.append((float(q1), 0.0, float(l), float(val)))
    out = _out_path(args, "legendre.csv")
    write_csv(out, ["q1", "q2", "l", "L"], rows, standard_meta(built["hash"]))
    from .plots import lagrangian_plot

    lagrangian_plot(ev, y, l_values, _sibling(out, ".svg"), qmax=qmax,
                    salt=built["hash"])
    log.info("legendre: wrote %s", out)


def _metric_engine(built):
    solver = built["solver"]
    return MetricEngine(built["domain"], built["gamma_field"],
                        built["evaluator"],
                        h=float(solver.get("h", 1.0 / 24.0)),
                        v_max=float(solver.get("V_max", 2.4)))


def _cmd_metric(args):
    built = _load(args)
    cfg = built["config"]
    exp = cfg.get("experiment", {}).get("metric", {})
    t = float(exp.get("t", 1.0))
    x = np.asarray(exp.get("x", [0.0, 0.0]), dtype=float)
    y = np.asarray(exp.get("y", [0.5, 0.0]), dtype=float)
    star = bool(exp.get("star", True))
    depth = exp.get("depth")
    engine = _metric_engine(built)
    key = cache_key("metric", {"hash": built["hash"], "t": t,
                               "x": x.tolist(), "y": y.tolist(),
                               "star": star, "depth": depth,
                               "h": engine.h, "v_max": engine.v_max})
    payload = cache_get(key)
    cached = payload is not None
    if not cached:
        if depth:
            payload = engine.effective_metric(t, x, y, depth=int(depth))
            payload["a_table"] = {str(k): v for k, v in payload["a_table"].items()}
        else:
            s = engine.metric_star(t, x, y) if star else engine.metric(t, x, y)
            payload = {"value": s.value, "kind": s.kind, "t": t,
                       "x": x.tolist(), "y": y.tolist(),
                       "feasible": bool(s.feasible)}
            if s.endpoints_star is not None:
                payload["x_hat"] = np.asarray(s.endpoints_star[0]).tolist()
        cache_put(key, payload)
    out = _out_path(args, "metric.json")
    write_json(out, payload, standard_meta(built["hash"],
                                           extra={"cache_hit": cached}))
    log.info("metric: wrote %s%s", out, " (cached)" if cached else "")


def _cmd_effective(args):
    built = _load(args)
    cfg = built["config"]
    exp = cfg.get("experiment", {}).get("effective", {})
    qmax = float(exp.get("qmax", 1.5))
    depth = int(exp.get("depth", 3))
    t0 = float(exp.get("t0", 1.0))
    if "q_values" in exp:
        q_values = np.asarray([float(q) for q in exp["q_values"]])
    else:
        # lattice-aligned grid for the deepest extrapolation rungs
        step = 1.0 / (2 ** (depth - 1) * t0)
        q_values = np.arange(int(round(qmax / step)) + 1) * step
    engine = _metric_engine(built)
    table = build_effective_table(engine, q_values, t0=t0, depth=depth)
    out = _out_path(args, "effective.csv")
    meta = standard_meta(built["hash"],
                         extra={"cauchy_gap": table.cauchy_gap,
                                "mode": table.meta.get("mode")})
    rows = [(float(q), float(v)) for q, v in zip(table.q_grid, table.values)]
    write_csv(out, ["q1", "L_eff"], rows, meta)
    ham = table.effective_hamiltonian()
    write_json(_sibling(out, ".json"),
               {"q": table.q_grid.tolist(), "L": table.values.tolist(),
                "p": ham.p_grid.tolist(), "H": ham.values.tolist(),
                "cauchy_gap": table.cauchy_gap,
                "convexity_defect": table.convexity_defect()},
               meta)
    from .plots import table_plot

    table_plot(table, _sibling(out, ".svg"), salt=built["hash"])
    log.info("effective: wrote %s (cauchy gap %.3e)", out, table.cauchy_gap)


def _cmd_rate(args):
    config_path = args.scenario or args.config
    if not config_path:
        raise ValidationError("rate needs --scenario or --config")
    cfg, h = load_config(config_path, args.override)
    built = build_scenario(cfg)
    eps_list = [parse_fraction(s) for s in str(args.eps).split(",") if s]
    engine = _metric_engine(built)
    report = run_rate_experiment(built["scenario"], eps_list,
                                 probe_count=args.probes, seed=args.seed,
                                 table_engine=engine, workers=args.workers)
    out = _out_path(args, "rate_report.json")
    write_json(out, report, standard_meta(h, extra={"command": "rate"}))
    if report["slope"] is not None:
        from .plots import loglog_plot

        loglog_plot(report["epsilons"], report["errors"], _sibling(out, ".svg"),
                    slope=report["slope"], c_fit=report["C_fit"], salt=h)
        log.info("rate: slope %.3f, wrote %s", report["slope"], out)
    else:
        log.info("rate: error at floor, wrote %s", out)


def _cmd_example(args):
    """Front evolution for the single-disk obstacle under a contact angle."""
    theta = parse_theta(args.theta)
    domain = single_ball(1.0)
    bc = ContactAngleBC(domain, theta=theta)
    ham = Hamiltonian("eikonal")
    ev = LagrangianEvaluator(ham, bc)
    u0 = linear_initial(np.array([1.0, 0.0]), offset=2.0)
    hw = float(args.half_width)
    window = Window.cover(np.array([-hw, -hw]), np.array([hw, hw]), args.h)
    n = max(1, round(args.t / args.dt))
    grid = SpaceTimeGrid(window, args.t / n, args.t)
    net = build_control_net(ev, n_dirs=16, speeds=[0.5, 1.0], dt=grid.dt)
    times = [args.t * k / 4.0 for k in range(1, 5)]
    field = solve_value(domain, bc.gamma, ev, u0, grid, net=net,
                        snapshot_times=times)
    salt = config_hash({"example": {"theta": theta, "t": args.t, "h": args.h}})
    field.meta["config_hash"] = salt
    from .plots import front_plot

    out = args.out
    front_plot(field, times, out if out.endswith(".svg") else out + ".svg",
               salt=salt)
    rows = [tuple(r) for r in field.node_table(grid.n_levels)]
    write_csv(_sibling(out, ".csv"), ["x1", "x2", "t", "V"], rows,
              standard_meta(salt, extra={"theta": theta}))
    log.info("example: wrote %s", out)


def _cmd_selftest(args):
    """Fast end-to-end checks of each engine; exit 0 means all passed."""
    import tempfile

    from .oracles import optimal_reflection, reflection_search
    from .geometry import half_space

    failures = []

    def check(name, fn):
        try:
            fn()
            print(f"PASS {name}")
        except Exception as exc:  # noqa: BLE001
            failures.append(name)
            print(f"FAIL {name}: {exc}")

    def _reflection():
        import math

        for theta in (0.6 * math.pi, 0.7 * math.pi, 0.8 * math.pi):
            l_num, _ = reflection_search(theta)
            assert abs(l_num - optimal_reflection(theta)) < 1e-8

    def _legendre():
        ham = Hamiltonian("quadratic")
        dom = single_ball(1.0)
        bc = ContactAngleBC(dom, theta=0.75 * np.pi)
        ev = LagrangianEvaluator(ham, bc)
        h = float(bc.h(np.zeros(2)))
        rng = np.random.default_rng(1)
        for _ in range(50):
            v = rng.normal(size=2)
            l = rng.uniform(0.0, 2.0)
            closed = 0.5 * max(np.linalg.norm(v) + h * l, 0.0) ** 2
            assert abs(ev.step_cost(np.zeros(2), v, l) - closed) < 1e-6

    def _skorokhod():
        dom = half_space()
        gamma = ObliqueField(dom)
        ctrl = ControlSignal.constant(np.array([0.3, -1.0]), 1.0, 1e-2)
        path = solve_sp(np.array([0.0, 0.5]), ctrl, dom, gamma)
        rep = residual(path, dom, gamma)
        assert rep["max_psi_violation"] <= 1e-9
        assert rep["max_complementarity"] <= 1e-10

    def _plane_wave():
        from .geometry import free_space
        from .sweep import StencilSweep, ConstantAtom, ControlNet

        dom = free_space()
        gamma = ObliqueField(dom)
        ham = Hamiltonian("quadratic")
        bc = ContactAngleBC(dom, theta=0.5 * np.pi)
        ev = LagrangianEvaluator(ham, bc)
        p = np.array([1.0, 0.0])
        window = Window.cover(np.array([0.0, 0.0]), np.array([2.0, 1.0]), 0.125)
        net = ControlNet([ConstantAtom(-p), ConstantAtom(np.zeros(2))])
        sweep = StencilSweep(window, dom, gamma, ev, net, 0.05)
        nodes = window.nodes()
        v0 = nodes @ p
        vals, _ = sweep.run(v0, 4)
        expect = v0 - 4 * 0.05 * 0.5
        # the left-edge truncation kink spreads at most dt + h per level
        inner = nodes[:, 0] >= 4 * (0.05 + 0.125) + 1e-9
        assert np.max(np.abs(vals[inner] - expect[inner])) < 1e-9

    def _roundtrip():
        from .io import load_field
        from .value import ValueField, sine_initial

        window = Window.cover(np.zeros(2), np.array([1.0, 0.25]), 0.125,
                              periodic=(True, True))
        grid = SpaceTimeGrid(window, 0.05, 0.1, epsilon=0.25)
        u0 = sine_initial()
        levels = {0: np.asarray(u0(window.nodes())),
                  2: np.asarray(u0(window.nodes())) - 0.1}
        fld = ValueField(grid, levels, np.ones(window.node_count, dtype=bool),
                         "oblique", u0.descriptor(),
                         meta={"config_hash": "selftest"})
        with tempfile.TemporaryDirectory() as td:
            p1 = os.path.join(td, "f.bin")
            store_field(fld, p1)
            back = load_field(p1)
            p2 = os.path.join(td, "g.bin")
            store_field(back, p2)
            with open(p1, "rb") as a, open(p2, "rb") as b:
                assert a.read() == b.read()

    check("reflection-law-oracle", _reflection)
    check("contact-lagrangian-closed-form", _legendre)
    check("skorokhod-half-space", _skorokhod)
    check("plane-wave-exactness", _plane_wave)
    check("field-round-trip", _roundtrip)
    if failures:
        raise ValidationError("selftest failures: " + ", ".join(failures))


_DISPATCH = {
    "solve": _cmd_solve,
    "skorokhod": _cmd_skorokhod,
    "legendre": _cmd_legendre,
    "metric": _cmd_metric,
    "effective": _cmd_effective,
    "rate": _cmd_rate,
    "example": _cmd_example,
    "selftest": _cmd_selftest,
}


if __name__ == "__main__":
    sys.exit(main())
