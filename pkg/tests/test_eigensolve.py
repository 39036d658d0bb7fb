import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import bisect

from tunneldecay.eigensolve import (ContinuumBasis, barrier_edge_for_opacity,
                                    continuum_state, eval_state, eval_state_deriv,
                                    make_barrier, make_step_well, solve_bound_states)
from tunneldecay.errors import DegenerateThresholdError, InvalidParameterError
from tunneldecay.piecewise import PiecewiseFunction, overlap
from tunneldecay.quadrature import gauss_interval

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


# ------------------------------------------------------------------ potentials


def test_step_well_segments():
    for U0 in (16.0, 10.0):
        pot = make_step_well(U0, 1.0)
        assert [tuple(s) for s in pot.segments] == [(0.0, 1.0, 0.0)]
        assert pot.tail_U == U0
        assert len(pot.edges) == 2


def test_barrier_segments():
    pot = make_barrier(16.0, 1.0, 1.4)
    assert [tuple(s) for s in pot.segments] == [(0.0, 1.0, 0.0), (1.0, 1.4, 16.0)]
    assert pot.tail_U == 0.0 and len(pot.edges) == 3
    assert np.isclose(pot.a2 - pot.a1, 0.4)
    assert make_barrier(16.0, 1.0, 1.05).a2 == 1.05


@pytest.mark.parametrize("args", [(16.0, 0.0), (0.0, 1.0), (-1.0, 1.0)])
def test_step_well_rejects_degenerate(args):
    with pytest.raises(InvalidParameterError):
        make_step_well(*args)


@pytest.mark.parametrize("args", [(16.0, 1.0, 1.0), (16.0, 1.0, 0.9), (0.0, 1.0, 1.4)])
def test_barrier_rejects_degenerate(args):
    with pytest.raises(InvalidParameterError):
        make_barrier(*args)


def test_potential_values():
    pot = make_barrier(16.0, 1.0, 1.4)
    assert np.array_equal(pot(np.array([0.5, 1.2, 3.0])), [0.0, 16.0, 0.0])


# ---------------------------------------------------------------- bound states


@pytest.fixture(scope="module")
def well16():
    pot = make_step_well(16.0, 1.0)
    return pot, solve_bound_states(pot)


def _g(k, U0, a=1.0):
    return k * np.cos(k * a) + np.sqrt(2 * U0 - k * k) * np.sin(k * a)


def test_two_bound_states_and_ground_energy(well16):
    _, states = well16
    assert len(states) == 2
    assert abs(states[0].energy - 3.52) < 0.01
    assert states[0].energy < states[1].energy < 16.0


def test_root_count_matches_sign_changes(well16):
    step = np.pi / 100.0
    k = np.arange(step, np.sqrt(32.0), step)
    changes = np.count_nonzero(np.sign(_g(k[:-1], 16.0)) != np.sign(_g(k[1:], 16.0)))
    assert changes == len(well16[1]) == 2


def test_excited_energy_matches_bisection_oracle(well16):
    _, states = well16
    k1 = bisect(lambda k: _g(k, 16.0), 4.0, 5.6, xtol=1e-15)
    assert abs(states[1].k - k1) < 1e-12
    for s in states:
        assert s.matching_residual < 1e-10
        assert np.isclose(s.kappa, np.sqrt(32.0 - s.k**2))


def test_bound_states_normalized_and_orthogonal(well16):
    _, states = well16
    for i, a in enumerate(states):
        num = quad(lambda x: a(x) ** 2, 0, 1)[0] + quad(lambda x: a(x) ** 2, 1, np.inf)[0]
        assert abs(num - 1.0) < 1e-10
        assert abs(overlap(a.function, a.function) - 1.0) < 1e-12
        for b in states[i + 1:]:
            assert abs(overlap(a.function, b.function)) < 1e-10


def test_tail_probability_closed_form(well16):
    phi0 = well16[1][0]
    num = quad(lambda x: phi0(x) ** 2, 1.4, np.inf, epsabs=1e-14)[0]
    assert abs(phi0.tail_probability(1.4) - num) < 1e-12


def test_infinite_well_limit():
    # finite-depth correction is ~2/sqrt(2 U0); 1e7 puts it below 0.1%
    e0 = solve_bound_states(make_step_well(1e7, 1.0))[0].energy
    assert abs(e0 / (np.pi**2 / 2) - 1.0) < 1e-3


def test_shallow_well_may_have_no_bound_states():
    # a bound state needs sqrt(2 U0) a > pi / 2
    assert solve_bound_states(make_step_well(1.0, 1.0)) == []
    assert len(solve_bound_states(make_step_well(1.3, 1.0))) == 1


def test_bound_states_require_step_well():
    with pytest.raises(InvalidParameterError):
        solve_bound_states(make_barrier(16.0, 1.0, 1.4))


@settings(max_examples=25, deadline=None)
@given(st.floats(2.0, 400.0), st.floats(0.5, 2.0))
def test_bound_state_count_matches_scan(U0, a):
    states = solve_bound_states(make_step_well(U0, a))
    kmax = np.sqrt(2 * U0)
    k = np.linspace(1e-9, kmax * (1 - 1e-12), 20001)
    g = _g(k, U0, a)
    assert len(states) == np.count_nonzero(np.sign(g[:-1]) != np.sign(g[1:]))
    for s in states:
        assert s.matching_residual < 1e-9 * max(1.0, s.k)


def test_opacity_parameter_sets(well16):
    e0 = well16[1][0].energy
    assert abs(barrier_edge_for_opacity(16.0, 1.0, 2.0, e0) - 1.400) < 0.002
    with pytest.raises(InvalidParameterError):
        barrier_edge_for_opacity(16.0, 1.0, 2.0, 20.0)


def test_opacity_parameter_set_sin_state():
    # kappa d = 2 at E = pi^2/2 gives 1.42514, just outside 1.42 +- 0.005
    assert abs(barrier_edge_for_opacity(16.0, 1.0, 2.0, np.pi**2 / 2) - 1.42) < 0.005


# ------------------------------------------------------------- continuum states


def matching_oracle(U0, a1, a2, k):
    """Direct 4x4 solve for the barrier state with sin(kx) in the well."""
    d = a2 - a1
    lam = np.sqrt(complex(2 * U0 - k * k))
    if lam.real > 0:
        lam = lam.real
        e = np.exp(-lam * d)
        # barrier: D' exp(-lam (x - a1)) + F' exp(lam (x - a2))
        m = np.array([
            [1.0, e, 0.0, 0.0],
            [-lam, lam * e, 0.0, 0.0],
            [e, 1.0, -np.sin(k * a2), -np.cos(k * a2)],
            [-lam * e, lam, -k * np.cos(k * a2), k * np.sin(k * a2)],
        ])

        def barrier(x, c):
            return c[0] * np.exp(-lam * (x - a1)) + c[1] * np.exp(lam * (x - a2))
    else:
        q = lam.imag
        # barrier: D' cos(q (x - a1)) + F' sin(q (x - a1))
        m = np.array([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, q, 0.0, 0.0],
            [np.cos(q * d), np.sin(q * d), -np.sin(k * a2), -np.cos(k * a2)],
            [-q * np.sin(q * d), q * np.cos(q * d), -k * np.cos(k * a2), k * np.sin(k * a2)],
        ])

        def barrier(x, c):
            return c[0] * np.cos(q * (x - a1)) + c[1] * np.sin(q * (x - a1))
    rhs = np.array([np.sin(k * a1), k * np.cos(k * a1), 0.0, 0.0])
    c = np.linalg.solve(m, rhs)
    s = SQRT_2_OVER_PI / np.hypot(c[2], c[3])

    def psi(x):
        x = np.asarray(x, float)
        return s * np.where(x < a1, np.sin(k * x), np.where(
            x < a2, barrier(x, c), c[2] * np.sin(k * x) + c[3] * np.cos(k * x)))
    return s, c, psi


@pytest.mark.parametrize("k", [0.7, 2.6533727874218891, 4.0, 5.5, 6.0, 10.0, 25.0])
def test_barrier_state_matches_direct_matching_solve(k):
    st_ = continuum_state(make_barrier(16.0, 1.0, 1.4), k)
    s, c, psi = matching_oracle(16.0, 1.0, 1.4, k)
    x = np.concatenate([np.linspace(0, 3, 301), [20.0, 77.7]])
    assert np.allclose(st_(x), psi(x), rtol=0, atol=1e-11)
    assert np.isclose(st_.C, s, rtol=1e-10)
    assert st_.residual < 1e-10


def test_deep_tunneling_state_at_k0(well16):
    k0 = well16[1][0].k
    st_ = continuum_state(make_barrier(16.0, 1.0, 1.4), k0)
    s, c, _ = matching_oracle(16.0, 1.0, 1.4, k0)
    kap = np.sqrt(32.0 - k0**2)
    assert np.isclose(st_.kappa, kap)
    # absolute-origin coefficients of exp(-kappa x) and exp(+kappa x)
    assert np.isclose(st_.D, s * c[0] * np.exp(kap * 1.0), rtol=1e-9)
    assert np.isclose(st_.F, s * c[1] * np.exp(-kap * 1.4), rtol=1e-9)
    assert abs(st_.D) > 1e4 * abs(st_.F)


def test_propagating_barrier_branch():
    st_ = continuum_state(make_barrier(16.0, 1.0, 1.4), 10.0)
    q = np.sqrt(100.0 - 32.0)
    assert np.isclose(st_.kappa, q)
    x = np.linspace(1.0, 1.4, 9)
    expect = st_.D * np.cos(q * (x - 1.0)) + st_.F * np.sin(q * (x - 1.0))
    assert np.allclose(st_(x), expect, atol=1e-12)


def test_step_basis_tail():
    st_ = continuum_state(make_step_well(16.0, 1.0), 6.0)
    assert st_.basis == "step" and np.isclose(st_.q, 2.0)
    x = np.array([1.5, 4.0, 30.0])
    assert np.allclose(st_(x), SQRT_2_OVER_PI * np.sin(2.0 * x + st_.theta), atol=1e-13)


def test_continuum_preconditions():
    with pytest.raises(InvalidParameterError):
        continuum_state(make_barrier(16.0, 1.0, 1.4), 0.0)
    with pytest.raises(InvalidParameterError):
        continuum_state(make_step_well(16.0, 1.0), 5.0)
    with pytest.raises(DegenerateThresholdError):
        continuum_state(make_barrier(16.0, 1.0, 1.4), np.sqrt(32.0))


def test_eval_state_wall_derivative_and_continuity(well16):
    pot = make_barrier(16.0, 1.0, 1.4)
    states = [continuum_state(pot, 2.0), continuum_state(pot, 7.0), well16[1][0]]
    h = 1e-5
    for s in states:
        assert abs(eval_state(s, 0.0)) < 1e-15
        fd = (eval_state(s, 1.2 + h) - eval_state(s, 1.2 - h)) / (2 * h)
        assert abs(fd - eval_state_deriv(s, 1.2)) < 1e-8 * max(1.0, abs(fd))
        with pytest.raises(InvalidParameterError):
            eval_state(s, -1e-3)
    f = states[0].function
    for b_i, b in enumerate(f.edges[1:], start=1):
        left = PiecewiseFunction((0.0,), [f.pieces[b_i - 1]])(b)
        right = PiecewiseFunction((0.0,), [f.pieces[b_i]])(b)
        assert abs(left - right) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(4.0, 40.0), st.floats(0.02, 1.0), st.floats(0.05, 30.0))
def test_matching_residuals_small_everywhere(U0, d, k):
    pot = make_barrier(U0, 1.0, 1.0 + d)
    if abs(k * k - 2 * U0) < 1e-6 * 2 * U0:
        return
    basis = ContinuumBasis(pot, np.array([k]))
    assert basis.matching_residuals()[0] < 1e-10
    assert basis.well_amplitude[0] > 0
    # tail amplitude is exactly sqrt(2/pi)
    x = np.array([50.0, 50.0 + np.pi / (2 * k)])
    assert np.isclose(np.hypot(*basis(x)[0]), SQRT_2_OVER_PI, rtol=1e-10)


def test_value_and_slope_matches_generic_evaluation():
    for pot, k in [(make_barrier(16.0, 1.0, 1.4), np.linspace(0.05, 30, 301)),
                   (make_step_well(16.0, 1.0), np.linspace(5.7, 30, 301))]:
        b = ContinuumBasis(pot, k)
        x = np.linspace(0, 8, 401)
        v, d = b.value_and_slope(x)
        assert np.allclose(v, b(x), atol=1e-12)
        assert np.allclose(d, b.derivative(x), atol=1e-10)


def test_delta_normalization_smeared_overlap():
    pot = make_barrier(16.0, 1.0, 1.4)
    L, k, sigma = 200.0, 8.0, 0.2

    def truncated(f):
        g = f.refined(list(f.edges) + [L])
        return PiecewiseFunction(g.edges, list(g.pieces[:-1]) + [()])

    kp, wp = gauss_interval(k - 6 * sigma, k + 6 * sigma, 400)
    fam = truncated(ContinuumBasis(pot, kp).function)
    one = truncated(continuum_state(pot, k).function)
    window = np.exp(-((kp - k) ** 2) / (2 * sigma**2))
    smeared = np.sum(wp * window * overlap(one, fam))
    assert abs(smeared - 1.0) < 1e-2
