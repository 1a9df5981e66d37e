"""Shared fixtures: domains, evaluators, and one reusable effective table."""

import math

import numpy as np
import pytest

from hjhomog.geometry import ObliqueField, ball_lattice, free_space, single_ball
from hjhomog.hamiltonian import (ContactAngleBC, Hamiltonian,
                                 LagrangianEvaluator, ObliqueBC)
from hjhomog.metric import MetricEngine, build_effective_table
from hjhomog.value import sine_initial


@pytest.fixture(scope="session")
def lattice():
    return ball_lattice(0.25)


@pytest.fixture(scope="session")
def quad_oblique(lattice):
    """Quadratic Hamiltonian, normal reflection, g = 0 on the ball lattice."""
    gamma = ObliqueField(lattice)
    ev = LagrangianEvaluator(Hamiltonian("quadratic"),
                             ObliqueBC(lattice, gamma, g=0.0))
    return {"domain": lattice, "gamma": gamma, "evaluator": ev}


@pytest.fixture(scope="session")
def disk_contact():
    """Eikonal Hamiltonian with a 2pi/3 contact angle on the unit disk hole."""
    domain = single_ball(1.0)
    gamma = ObliqueField(domain)
    ev = LagrangianEvaluator(Hamiltonian("eikonal"),
                             ContactAngleBC(domain, 2.0 * math.pi / 3.0))
    return {"domain": domain, "gamma": gamma, "evaluator": ev}


@pytest.fixture(scope="session")
def free_quad():
    domain = free_space()
    gamma = ObliqueField(domain, validate=False)
    ev = LagrangianEvaluator(Hamiltonian("quadratic"),
                             ObliqueBC(domain, gamma, g=0.0))
    return {"domain": domain, "gamma": gamma, "evaluator": ev}


@pytest.fixture(scope="session")
def metric_engine(quad_oblique):
    return MetricEngine(quad_oblique["domain"], quad_oblique["gamma"],
                        quad_oblique["evaluator"], h=1.0 / 24.0, v_max=2.4)


@pytest.fixture(scope="session")
def effective_table(metric_engine):
    """Depth-3 table on an aligned q grid; shared by metric and rate tests."""
    return build_effective_table(metric_engine, np.arange(7) / 4.0,
                                 t0=1.0, depth=3)


@pytest.fixture(scope="session")
def sine_u0():
    return sine_initial(k=1)
