"""Shared, session-scoped physics fixtures (the expensive evolutions are built once)."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from tunneldecay.analysis import closing_time_scan, lifetime
from tunneldecay.cli import SimConfig
from tunneldecay.eigensolve import make_barrier, make_step_well, solve_bound_states
from tunneldecay.evolve import closing_evolution, open_evolution
from tunneldecay.observables import TraceSeries, probe_traces, well_probability
from tunneldecay.spectral import make_initial_state, project_open

# lifetime of the U0=16, a2=1.4 resonance from the Gamow pole of the
# outgoing-wave condition (independent mpmath computation, frozen)
POLE_LIFETIME = 17.906

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line("criterion %2d: %s  %s" % (key, "PASS" if ok else "FAIL",
                                                               detail))


@pytest.fixture(scope="session")
def flagship():
    U1 = make_step_well(16.0, 1.0)
    U2 = make_barrier(16.0, 1.0, 1.4)
    states = solve_bound_states(U1)
    psi0 = make_initial_state("bound_ground", U1)
    decomp = project_open(psi0, U2)
    E0 = states[0].energy
    return SimpleNamespace(U1=U1, U2=U2, states=states, phi0=states[0], psi0=psi0,
                           decomp=decomp, E0=E0, k0=np.sqrt(2 * E0))


@pytest.fixture(scope="session")
def near(flagship):
    """Open evolution resolved on [0, a2] up to t = 60."""
    return open_evolution(flagship.decomp, 1.4, 60.0)


@pytest.fixture(scope="session")
def w1_trace(near):
    t = np.arange(0.0, 40.0 + 1e-9, 0.05)
    return TraceSeries("w1", "well", t, well_probability(near, t))


@pytest.fixture(scope="session")
def boxed(flagship):
    """Evolution truncated at k = 12 but resolved over a 560-wide box up to t = 55."""
    return open_evolution(flagship.decomp, 560.0, 55.0, k_max=12.0)


@pytest.fixture(scope="session")
def far(flagship):
    return open_evolution(flagship.decomp, 122.0, 60.0, k_max=15.0)


@pytest.fixture(scope="session")
def detector_traces(far):
    """(density, flux) traces at X = 60, 90, 120, 122 sampled every 0.05 on [0, 60]."""
    t = np.arange(0.0, 60.0 + 1e-9, 0.05)
    return {X: probe_traces(far, X, t) for X in (60.0, 90.0, 120.0, 122.0)}


@pytest.fixture(scope="session")
def closed6(flagship):
    """Barrier closed at t0 = 6."""
    return closing_evolution(flagship.decomp, flagship.U1, 6.0, 50.0, 40.0)


@pytest.fixture(scope="session")
def sin_case():
    U1 = make_step_well(10.0, 1.0)
    U2 = make_barrier(10.0, 1.0, 1.63)
    psi0 = make_initial_state("infinite_well", U1)
    decomp = project_open(psi0, U2)
    return SimpleNamespace(U1=U1, U2=U2, psi0=psi0, decomp=decomp,
                           E0_well=solve_bound_states(U1)[0].energy,
                           evo=open_evolution(decomp, 1.63, 50.0))


@pytest.fixture(scope="session")
def closing_scan(w1_trace):
    """Closing times t_l/9, t_l/6, t_l/3 and never, detector at X = 120."""
    t_l, _ = lifetime(w1_trace)
    return closing_time_scan(SimConfig(k_max=15.0), [t_l / 9, t_l / 6, t_l / 3, math.inf],
                             detector=120.0, t_window=(30.0, 60.0))
