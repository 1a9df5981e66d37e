"""Run-configuration ingestion.

Configs are nested YAML with a top-level `include` key (path or list of
paths, merged depth-first with the including file winning), dotted-key
overrides from the command line, and a canonical content hash that every
output file embeds. Builder functions turn validated blocks into domain,
Hamiltonian, boundary-condition, and initial-data objects.
"""

from __future__ import annotations

import hashlib
import json
import math
import os

import numpy as np
import yaml

from .errors import IOFormatError, ValidationError
from .geometry import ObliqueField, make_domain
from .hamiltonian import ContactAngleBC, Hamiltonian, LagrangianEvaluator, ObliqueBC
from .rate import RateScenario
from .value import InitialData, linear_initial, sine_initial

GAMMA_REGISTRY: dict = {}
U0_REGISTRY: dict = {}
POTENTIAL_REGISTRY: dict = {}


def register_gamma(name, factory):
    GAMMA_REGISTRY[name] = factory


def register_u0(name, factory):
    U0_REGISTRY[name] = factory


def register_potential(name, factory):
    POTENTIAL_REGISTRY[name] = factory


def _merge(base, extra):
    """Depth-first dict merge; `extra` wins on conflicts."""
    out = dict(base)
    for k, v in extra.items():
        if k in out and isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path, overrides=()):
    """Parse YAML with includes and apply dotted overrides.

    Returns (config dict, canonical sha256 hash of the resolved config).
    """
    cfg = _load_file(path, seen=set())
    for ov in overrides:
        cfg = apply_override(cfg, ov)
    return cfg, config_hash(cfg)


def _load_file(path, seen):
    path = os.path.abspath(path)
    if path in seen:
        raise ValidationError(f"circular include at {path}")
    seen.add(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError as exc:
        raise IOFormatError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise IOFormatError(f"config parse error in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise IOFormatError(f"config root must be a mapping: {path}")
    includes = raw.pop("include", None)
    base: dict = {}
    if includes:
        if isinstance(includes, str):
            includes = [includes]
        here = os.path.dirname(path)
        for inc in includes:
            inc_path = inc if os.path.isabs(inc) else os.path.join(here, inc)
            base = _merge(base, _load_file(inc_path, seen))
    return _merge(base, raw)


def apply_override(cfg, assignment):
    """Apply one `dotted.key=value` assignment; value parses as YAML."""
    if "=" not in assignment:
        raise ValidationError(f"override must be key=value: {assignment!r}")
    key, _, val = assignment.partition("=")
    keys = [k for k in key.strip().split(".") if k]
    if not keys:
        raise ValidationError(f"empty override key in {assignment!r}")
    try:
        parsed = yaml.safe_load(val)
    except yaml.YAMLError as exc:
        raise ValidationError(f"unparseable override value {val!r}") from exc
    out = dict(cfg)
    node = out
    for k in keys[:-1]:
        child = node.get(k)
        child = dict(child) if isinstance(child, dict) else {}
        node[k] = child
        node = child
    node[keys[-1]] = parsed
    return out


def config_hash(cfg):
    """sha256 of the canonical JSON serialization (sorted keys)."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def parse_theta(spec):
    """Contact angles as radians, `0.75pi`, or `135deg`."""
    if isinstance(spec, (int, float)):
        return float(spec)
    s = str(spec).strip().lower().replace(" ", "")
    if s.endswith("pi"):
        return float(s[:-2] or "1") * math.pi
    if s.endswith("deg"):
        return math.radians(float(s[:-3]))
    return float(s)


def parse_fraction(spec):
    """Numbers or `1/8`-style fractions."""
    if isinstance(spec, (int, float)):
        return float(spec)
    s = str(spec).strip()
    if "/" in s:
        num, _, den = s.partition("/")
        return float(num) / float(den)
    return float(s)


def build_domain(block):
    block = dict(block or {"kind": "ball-lattice"})
    block.setdefault("kind", "ball-lattice")
    return make_domain(block)


def build_potential(block):
    if not block:
        return None, 0.0
    kind = block.get("type", block.get("kind"))
    if kind == "cosine":
        amp = float(block.get("amplitude", 0.1))
        kx = int(block.get("k", 1))

        def c(y):
            y = np.asarray(y, dtype=float)
            return amp * np.cos(2 * math.pi * kx * y[..., 0]) \
                * np.cos(2 * math.pi * kx * y[..., 1])

        return c, amp
    if kind in POTENTIAL_REGISTRY:
        return POTENTIAL_REGISTRY[kind](block)
    raise ValidationError(f"unknown potential type {kind!r}")


def build_hamiltonian(block):
    block = dict(block or {})
    kind = block.get("kind", "quadratic")
    potential, k0 = build_potential(block.get("potential"))
    kwargs = {}
    if "trunc_radius" in block:
        kwargs["trunc_radius"] = float(block["trunc_radius"])
    if kind == "custom":
        raise ValidationError("custom Hamiltonians are built in code, not config")
    return Hamiltonian(kind, potential=potential, k0=k0, **kwargs)


def build_boundary_condition(block, domain):
    block = dict(block or {})
    btype = block.get("type", "oblique")
    if btype in ("oblique", "neumann"):
        gamma_spec = block.get("gamma", "normal")
        if gamma_spec == "normal":
            gamma = ObliqueField(domain)
        elif gamma_spec in GAMMA_REGISTRY:
            gamma = GAMMA_REGISTRY[gamma_spec](domain, block)
        else:
            raise ValidationError(f"unknown gamma field {gamma_spec!r}")
        g = block.get("g", 0.0)
        if isinstance(g, str) and g in U0_REGISTRY:
            g = U0_REGISTRY[g](block)
        bc = ObliqueBC(domain, gamma, g=float(g) if isinstance(g, (int, float)) else g)
        return bc, gamma
    if btype in ("contact-angle", "contact"):
        theta = parse_theta(block.get("theta", "0.75pi"))
        bc = ContactAngleBC(domain, theta=theta)
        return bc, bc.gamma
    raise ValidationError(f"unknown boundary condition type {btype!r}")


def build_initial_data(block):
    block = dict(block or {})
    kind = block.get("type", "sine")
    if kind == "linear":
        p = np.asarray(block.get("p", [1.0, 0.0]), dtype=float)
        return linear_initial(p, offset=float(block.get("offset", 0.0)))
    if kind == "sine":
        return sine_initial(k=int(block.get("k", 1)), axis=int(block.get("axis", 0)))
    if kind in U0_REGISTRY:
        return U0_REGISTRY[kind](block)
    raise ValidationError(f"unknown initial data type {kind!r}")


def build_scenario(cfg, name=None):
    """Scenario block -> (domain, gamma, evaluator, u0) plus a RateScenario."""
    sc = cfg.get("scenario", cfg)
    domain = build_domain(sc.get("domain"))
    hamiltonian = build_hamiltonian(sc.get("hamiltonian"))
    bc, gamma = build_boundary_condition(sc.get("boundary_condition"), domain)
    evaluator = LagrangianEvaluator(hamiltonian, bc)
    u0 = build_initial_data(sc.get("u0"))
    solver = cfg.get("solver", {})
    scenario = RateScenario(
        name=name or str(sc.get("name", "scenario")),
        domain_unit=domain,
        gamma_field=gamma,
        evaluator=evaluator,
        u0=u0,
        t_final=float(solver.get("T", 0.5)),
        v_max=(float(solver["V_max"]) if "V_max" in solver else None),
        n_dirs=int(solver.get("n_dirs", 16)),
        config_hash=config_hash(cfg),
        meta={"solver": dict(solver)},
    )
    return {
        "domain": domain,
        "hamiltonian": hamiltonian,
        "bc": bc,
        "gamma_field": gamma,
        "evaluator": evaluator,
        "u0": u0,
        "scenario": scenario,
        "solver": dict(solver),
        "hash": scenario.config_hash,
    }
