import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from tunneldecay.analysis import lifetime
from tunneldecay.errors import InvalidParameterError
from tunneldecay.evolve import WaveSample
from tunneldecay.observables import (RHO_FLOOR, TraceSeries, barrier_probability,
                                     continuity_residual, density, flux, local_velocity,
                                     outside_probability, probe_traces, region_probability,
                                     total_norm, velocity_trace, well_probability)


# ------------------------------------------------------------ pointwise


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_real_field_carries_no_flux(psi, dpsi):
    ws = WaveSample(0.3, 1.0, psi, dpsi)
    assert flux(ws) == 0.0
    if psi * psi > RHO_FLOOR:
        assert local_velocity(ws) == 0.0


@given(st.floats(0.1, 20.0), st.floats(0.0, 50.0))
def test_plane_wave_flux_and_velocity(k, x):
    psi = np.exp(1j * k * x)
    ws = WaveSample(x, 0.0, psi, 1j * k * psi)
    assert np.isclose(density(ws), 1.0)
    assert np.isclose(flux(ws), k)
    assert np.isclose(local_velocity(ws), k)


def test_velocity_undefined_below_density_floor():
    ws = WaveSample(0.0, 0.0, 1e-7 + 0j, 1j * 1e-7)
    assert np.isnan(local_velocity(ws))


def test_trace_series_validation():
    with pytest.raises(InvalidParameterError):
        TraceSeries("rho", 1.0, [0.0, 0.1, 0.1], [1.0, 2.0, 3.0])
    with pytest.raises(InvalidParameterError):
        TraceSeries("rho", 1.0, [0.0, 0.1], [1.0])
    assert TraceSeries("rho", 1.0, [0.0, 0.25], [1.0, 2.0]).dt == 0.25


# -------------------------------------------------------------- densities


def test_density_at_the_edges_at_start(near):
    rho = density(near.sample(1.0, 0.0)), density(near.sample(1.4, 0.0))
    assert rho[0] > 1e-2 and rho[1] > 1e-3


def test_hard_wall(near):
    psi, _ = near.fields([0.0], np.linspace(0.0, 60.0, 41))
    assert np.all(np.abs(psi) ** 2 < 1e-20)


def test_box_state_is_empty_outside_at_start(sin_case):
    assert np.all(sin_case.psi0(np.array([1.0, 1.1, 1.6, 5.0])) == 0.0)
    # resynthesis: the slope jump at a1 leaves a k**-2 spectrum, so the k = 40
    # cap leaves a small ripple outside the well
    psi, _ = sin_case.evo.fields([1.1, 1.3, 1.6, 3.0], [0.0])
    assert np.all(np.abs(psi) ** 2 < 1e-4)


def test_edge_flux_vanishes_at_start(near):
    assert abs(flux(near.sample(1.0, 0.0))) < 1e-12
    assert abs(flux(near.sample(1.4, 0.0))) < 1e-12


def test_well_edge_flux_dips_negative(near):
    t = np.linspace(1e-3, 2.0, 4000)
    j = probe_traces(near, 1.0, t)[1].values
    assert j.min() < 0
    # the dip is short and early
    assert t[np.argmin(j)] < 0.2


# ---------------------------------------------------------- probabilities


def test_well_probability_starts_below_one(flagship, near):
    w0 = well_probability(near, 0.0)
    exact = quad(lambda x: flagship.phi0(x) ** 2, 0.0, 1.0)[0]
    assert abs(w0 - exact) < 1e-6
    assert w0 < 1.0


def test_well_probability_after_quoted_lifetime(near):
    # the quoted 1/e time of the survival trace
    ratio = well_probability(near, 17.5) / well_probability(near, 0.0)
    assert abs(ratio / np.exp(-1.0) - 1.0) < 0.02


@pytest.mark.parametrize("t", [0.0, 5.0, 17.5, 50.0])
def test_probabilities_add_up(boxed, t):
    total = (well_probability(boxed, t) + barrier_probability(boxed, t)
             + outside_probability(boxed, t, x_box=560.0))
    assert abs(total - 1.0) < 1e-3


def test_total_norm_over_three_lifetimes(boxed, w1_trace):
    t = np.linspace(0.0, 3 * lifetime(w1_trace)[0], 28)
    assert np.all(np.abs(total_norm(boxed, t, x_box=560.0) - 1.0) < 1e-3)


def test_edge_identities(near):
    t = np.linspace(1.0, 30.0, 59)
    j1 = probe_traces(near, 1.0, t)[1].values
    j2 = probe_traces(near, 1.4, t)[1].values
    dw1 = region_probability(near, 0.0, 1.0, t, time_derivative=True)
    dwb = region_probability(near, 1.0, 1.4, t, time_derivative=True)
    # J(a1) = -dw1/dt and J(a2) = dw2/dt = -(dw1 + dw_barrier)/dt
    assert np.max(np.abs(j1 + dw1)) < 1e-3 * np.max(np.abs(j1))
    assert np.max(np.abs(j2 + dw1 + dwb)) < 1e-3 * np.max(np.abs(j2))


def test_continuity_at_standard_probe(far):
    res, scale = continuity_residual(far, 3.0, 5.0)
    assert res < 1e-4 * scale


def test_continuity_at_random_probes(far):
    rng = np.random.default_rng(11)
    for x, t in zip(rng.uniform(1.5, 120.0, 20), rng.uniform(0.5, 60.0, 20)):
        res, scale = continuity_residual(far, x, t)
        assert res < 1e-4 * scale


def test_real_start_has_stationary_density(near):
    x = np.linspace(0.1, 1.4, 14)
    psi, _ = near.fields(x, [0.0])
    dpsi_t, _ = near.fields(x, [0.0], time_derivative=True)
    drho_dt = 2.0 * np.real(np.conj(psi) * dpsi_t)
    assert np.all(np.abs(drho_dt) < 1e-10)


# -------------------------------------------------------------- velocity


def test_exit_velocity_stays_below_barrier_speed(near):
    v = velocity_trace(near, 1.4, np.arange(0.0, 60.0, 0.05)).values
    assert np.nanmax(v) < np.sqrt(32.0)


def test_box_state_exit_velocity_settles(sin_case):
    t = np.arange(0.0, 40.0, 0.05)
    v = velocity_trace(sin_case.evo, 1.63, t).values
    k0 = np.sqrt(2.0 * sin_case.E0_well)
    early, late = v[t < 1.0], v[t > 20.0]
    assert np.nanmax(early) > 2 * k0
    assert np.all(np.abs(late / k0 - 1.0) < 0.01)


def test_survival_log_trace_shape(near, sin_case):
    t = np.arange(0.0, 40.0 + 1e-9, 0.05)

    def curvature(ev):
        w = well_probability(ev, t)
        g = np.log(w / w[0])
        d1 = np.gradient(g, t)
        return d1[t > 2], np.gradient(d1, t)[t > 2]

    d1_a, d2_a = curvature(near)
    d1_b, d2_b = curvature(sin_case.evo)
    # ground state: smooth monotone decay; box state: fast oscillations
    assert np.all(d1_a < 0)
    assert np.sum(np.diff(np.sign(d1_b)) != 0) > 5

    def changes(d2):
        s = np.sign(d2[np.abs(d2) > 0.1])
        return np.sum(s[1:] != s[:-1])

    assert changes(d2_a) == 0
    assert changes(d2_b) > 10
