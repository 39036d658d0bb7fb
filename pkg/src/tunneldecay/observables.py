"""Density, flux and integrated probabilities derived from an evolution."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AccuracyError, InvalidParameterError
from .quadrature import gauss_panels
from .spectral import spatial_panels

RHO_FLOOR = 1e-12
TAIL_FAIL = 1e-4


@dataclass
class TraceSeries:
    """Scalar observable sampled at increasing times."""

    name: str
    x_probe: float | str
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise InvalidParameterError("times and values differ in shape")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidParameterError("trace times must increase strictly")

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])


def density(ws):
    return np.abs(ws.psi) ** 2


def flux(ws):
    """J = Im(psi* dpsi/dx); exactly zero for a real wavefunction."""
    return np.imag(np.conj(ws.psi) * ws.dpsi_dx)


def local_velocity(ws, floor=RHO_FLOOR):
    """J / rho, NaN where the density is below ``floor``."""
    rho = density(ws)
    j = flux(ws)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(rho > floor, j / np.where(rho > floor, rho, 1.0), np.nan)


def _k_resolution(evolution):
    return float(evolution.open.grid.k_max)


def region_probability(evolution, lo, hi, t, k_res=None, time_derivative=False):
    """Integral of |psi|^2 over [lo, hi] (or its time derivative) at times t."""
    k_res = _k_resolution(evolution) if k_res is None else k_res
    x, w = gauss_panels(spatial_panels(lo, hi, k_res))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    psi, _ = evolution.fields(x, t)
    if not time_derivative:
        return w @ (np.abs(psi) ** 2)
    dpsi_t, _ = evolution.fields(x, t, time_derivative=True)
    return 2.0 * (w @ np.real(np.conj(psi) * dpsi_t))


def _scalarize(v, t):
    return float(v[0]) if np.ndim(t) == 0 else v


def well_probability(evolution, t, k_res=None):
    """w1(t): probability on [0, a1]."""
    a1 = evolution.potential.a1
    return _scalarize(region_probability(evolution, 0.0, a1, t, k_res), t)


def barrier_probability(evolution, t, k_res=None):
    pot = evolution.potential
    return _scalarize(region_probability(evolution, pot.a1, pot.a2, t, k_res), t)


def default_box(evolution, t_max):
    e0 = evolution.decomp.initial.energy if evolution.decomp.initial else 1.0
    return max(4.0 * np.sqrt(2.0 * e0) * t_max, 200.0)


def outside_tail_estimate(evolution, x_box, t):
    """Weight of components fast enough to have left [0, x_box] by time t."""
    a2 = evolution.potential.a2
    t = np.atleast_1d(np.asarray(t, dtype=float))
    dec = evolution.decomp
    out = []
    for ti in t:
        if ti <= 0:
            out.append(0.0)
        else:
            out.append(dec.tail_weight((x_box - a2) / ti))
    return np.array(out)


def outside_probability(evolution, t, x_box=None, k_res=None, with_tail=True):
    """w2(t): probability beyond the barrier, finite box plus tail estimate."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    x_box = default_box(evolution, t_arr.max()) if x_box is None else x_box
    pot = evolution.potential
    w2 = region_probability(evolution, pot.a2, x_box, t_arr, k_res)
    if with_tail:
        tail = outside_tail_estimate(evolution, x_box, t_arr)
        if np.any(tail > TAIL_FAIL):
            raise AccuracyError("tail beyond x = %g carries %.3g" % (x_box, tail.max()),
                                float(tail.max()))
        w2 = w2 + tail
    return _scalarize(w2, t)


def total_norm(evolution, t, x_box=None, k_res=None):
    pot = evolution.potential
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    x_box = default_box(evolution, t_arr.max()) if x_box is None else x_box
    inner = region_probability(evolution, 0.0, pot.a2, t_arr, k_res)
    return _scalarize(inner + outside_probability(evolution, t_arr, x_box, k_res), t)


def continuity_residual(evolution, x, t, h_x=1e-4, h_t=1e-4):
    """|d rho/dt + dJ/dx| by Richardson-extrapolated central differences.

    Returns ``(residual, scale)`` with scale = max(|d rho/dt|, k0 |J|).
    """
    def rho_j(xs, ts):
        psi, dpsi = evolution.fields(xs, ts)
        return np.abs(psi) ** 2, np.imag(np.conj(psi) * dpsi)

    def drho_dt(h):
        r, _ = rho_j([x], [t - h, t + h]) if t - h >= 0 else rho_j([x], [t, t + 2 * h])
        return (r[0, 1] - r[0, 0]) / (2.0 * h)

    def dj_dx(h):
        _, j = rho_j([x - h, x + h], [t])
        return (j[1, 0] - j[0, 0]) / (2.0 * h)

    rt = (4.0 * drho_dt(h_t) - drho_dt(2 * h_t)) / 3.0
    jx = (4.0 * dj_dx(h_x) - dj_dx(2 * h_x)) / 3.0
    _, j0 = rho_j([x], [t])
    dec = evolution.decomp
    k0 = np.sqrt(2.0 * dec.initial.energy) if dec.initial is not None else 1.0
    scale = max(abs(rt), k0 * abs(j0[0, 0]))
    return abs(rt + jx), scale


# ---------------------------------------------------------------------- traces


def probe_traces(evolution, x, times):
    """Density and flux TraceSeries at a fixed position."""
    psi, dpsi = evolution.fields([x], times)
    rho = np.abs(psi[0]) ** 2
    j = np.imag(np.conj(psi[0]) * dpsi[0])
    return (TraceSeries("density", x, times, rho),
            TraceSeries("flux", x, times, j))


def velocity_trace(evolution, x, times, floor=RHO_FLOOR):
    psi, dpsi = evolution.fields([x], times)
    rho = np.abs(psi[0]) ** 2
    j = np.imag(np.conj(psi[0]) * dpsi[0])
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(rho > floor, j / np.where(rho > floor, rho, 1.0), np.nan)
    return TraceSeries("velocity", x, times, v)


def well_trace(evolution, times, k_res=None):
    return TraceSeries("w1", "well", times, well_probability(evolution, np.asarray(times), k_res))
