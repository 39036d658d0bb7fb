"""Timescale extraction from simulated traces."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .eigensolve import BoundState, ContinuumBasis
from .errors import (InsufficientHorizonError, InvalidMeasurementError,
                     InvalidParameterError, NoPlateauError, OutOfSupportError,
                     TruncatedTraceError)
from .observables import TraceSeries, probe_traces

PLATEAU_TOLERANCE = 0.25     # relative band around the window median
PLATEAU_WINDOWS = 3.0        # window length in units of pi / (2 E0)
PEAK_FRACTION = 0.9          # "strongest first peak": first local max >= 90% of max
DETECTOR_DT = 0.05
PHASE_STEP = 1e-4            # dk for numerical d(theta)/dk


@dataclass
class DetectorReading:
    X: float = math.nan
    t_X: float = math.nan
    peak_value: float = math.nan
    v_X: float = math.nan


@dataclass
class TimescaleReport:
    """Every extracted timescale, NaN where not measured."""

    t_l: float = math.nan
    t_l_method: str = ""
    t_pl: float = math.nan
    t_BL: float = math.nan
    T_k0: float = math.nan
    A_fit: float = math.nan
    detector: DetectorReading = field(default_factory=DetectorReading)
    v_tilde_p: float = math.nan
    E_tilde_0: float = math.nan
    t_tun1: float = math.nan
    t_tun2: float = math.nan

    def flat(self):
        out = {}
        for key, val in asdict(self).items():
            if isinstance(val, dict):
                out.update({"detector_" + k: v for k, v in val.items()})
            else:
                out[key] = val
        return out

    def to_text(self):
        return "".join("%s = %s\n" % (k, _fmt(v)) for k, v in self.flat().items())

    def csv_header(self):
        return ",".join(self.flat())

    def csv_row(self):
        return ",".join(_fmt(v) for v in self.flat().values())


def _fmt(v):
    return "%.17g" % v if isinstance(v, float) else str(v)


# -------------------------------------------------------------------- lifetime


def lifetime(w1_trace: TraceSeries, method="crossing"):
    """Decay time of g(t) = w1(t) / w1(0); returns ``(t_l, method)``.

    ``crossing``: first time g falls to 1/e (linear interpolation).
    ``fit``: least-squares slope of ln g on [t_c/2, 2 t_c] around the crossing
    t_c, useful when g oscillates.
    """
    t, g = w1_trace.times, w1_trace.values / w1_trace.values[0]
    below = np.flatnonzero(g <= math.exp(-1.0))
    if below.size == 0 or below[0] == 0:
        raise InsufficientHorizonError(
            "w1/w1(0) stays above 1/e up to t = %g" % t[-1])
    i = below[0]
    target = -1.0
    lg = np.log(g[i - 1:i + 1])
    t_cross = t[i - 1] + (target - lg[0]) * (t[i] - t[i - 1]) / (lg[1] - lg[0])
    if method == "crossing":
        return float(t_cross), "crossing"
    if method != "fit":
        raise InvalidParameterError("unknown lifetime method %r" % method)
    if t[-1] < 2.0 * t_cross:
        raise InsufficientHorizonError("fit window needs the trace up to %g" % (2 * t_cross))
    m = (t >= 0.5 * t_cross) & (t <= 2.0 * t_cross) & (g > 0)
    slope = np.polyfit(t[m], np.log(g[m]), 1)[0]
    if slope >= 0:
        raise InsufficientHorizonError("ln g does not decrease on the fit window")
    return float(-1.0 / slope), "fit"


def _kappa(U0, E0):
    if not E0 < U0:
        raise InvalidParameterError("need E0 < U0 for an opaque barrier (E0=%g, U0=%g)"
                                    % (E0, U0))
    return math.sqrt(2.0 * (U0 - E0))


def lifetime_estimate(U0, E0, d, A=1.0):
    """A * T_k0 * exp(2 kappa d) with T_k0 = 2 / k0."""
    kappa = _kappa(U0, E0)
    return A * (2.0 / math.sqrt(2.0 * E0)) * math.exp(2.0 * kappa * d)


def fitted_prefactor(t_l, U0, E0, d):
    return t_l / lifetime_estimate(U0, E0, d, 1.0)


def bl_time(U0, E0, d):
    """Traversal time d / kappa."""
    return d / _kappa(U0, E0)


# -------------------------------------------------------------------- plateau


def plateau_onset(flux_trace: TraceSeries, E0=None, tolerance=PLATEAU_TOLERANCE,
                  windows=PLATEAU_WINDOWS):
    """Earliest t after which the flux stays within +-tolerance of its window median.

    The window has length ``windows * pi / (2 E0)``. ``E0`` defaults to
    ``flux_trace.meta['E0']``.
    """
    E0 = flux_trace.meta.get("E0") if E0 is None else E0
    if E0 is None or E0 <= 0:
        raise InvalidParameterError("plateau detection needs E0 > 0")
    width = windows * math.pi / (2.0 * E0)
    t, j = flux_trace.times, flux_trace.values
    for i in range(len(t)):
        if t[i] + width > t[-1]:
            break
        seg = j[i:np.searchsorted(t, t[i] + width, side="right")]
        med = np.median(seg)
        if med > 0 and np.all(np.abs(seg - med) <= tolerance * med):
            return float(t[i])
    raise NoPlateauError("flux never settles within %g of its running median"
                         % tolerance)


def plateau_flux(flux_trace: TraceSeries, t_pl, E0=None, windows=PLATEAU_WINDOWS):
    """Median flux over the detector window starting at ``t_pl``."""
    E0 = flux_trace.meta.get("E0") if E0 is None else E0
    width = windows * math.pi / (2.0 * E0)
    t = flux_trace.times
    m = (t >= t_pl) & (t <= t_pl + width)
    return float(np.median(flux_trace.values[m]))


# ------------------------------------------------------------------- detector


def detector_trace(evolution, X, t_range, dt=DETECTOR_DT):
    """Density and flux at X sampled every ``dt`` over ``t_range``."""
    if X <= evolution.potential.a2:
        raise InvalidParameterError("detector must sit beyond the barrier")
    t_lo, t_hi = t_range
    n = int(round((t_hi - t_lo) / dt))
    times = t_lo + dt * np.arange(n + 1)
    return probe_traces(evolution, X, times)


def first_peak(trace: TraceSeries, fraction=PEAK_FRACTION):
    """Time and height of the first local maximum reaching ``fraction`` of the maximum.

    Refined by a parabola through the three samples around it.
    """
    t, v = trace.times, trace.values
    if len(v) < 3:
        raise TruncatedTraceError("need at least three samples")
    top = np.max(v)
    if v[0] >= top or v[-1] >= top:
        raise TruncatedTraceError("maximum at the edge of the trace window")
    inner = (v[1:-1] >= v[:-2]) & (v[1:-1] > v[2:]) & (v[1:-1] >= fraction * top)
    i = int(np.flatnonzero(inner)[0]) + 1
    y0, y1, y2 = v[i - 1], v[i], v[i + 1]
    curv = y0 - 2.0 * y1 + y2
    shift = 0.5 * (y0 - y2) / curv if curv != 0 else 0.0
    h = 0.5 * (t[i + 1] - t[i - 1])
    return float(t[i] + shift * h), float(y1 - 0.25 * (y0 - y2) * shift)


def effective_exit_energy(phi0: BoundState, U0, a2):
    """E0 minus the potential energy of the part of phi0 beyond ``a2``."""
    if a2 <= phi0.potential.a1:
        raise InvalidParameterError("a2 must lie beyond the well edge")
    e = phi0.energy - U0 * phi0.tail_probability(a2)
    return float(e), float(math.sqrt(2.0 * e))


def tunneling_time_extrapolated(t_X, X, a2, v_tilde_p):
    if X <= a2 or v_tilde_p <= 0:
        raise InvalidParameterError("need X > a2 and a positive velocity")
    return t_X - (X - a2) / v_tilde_p


def tunneling_time_peak(trace_a: TraceSeries, trace_b: TraceSeries, a2):
    """Peak velocity between two detectors and the implied launch time."""
    xa, xb = float(trace_a.x_probe), float(trace_b.x_probe)
    ta, _ = first_peak(trace_a)
    tb, _ = first_peak(trace_b)
    if xb <= xa or tb <= ta:
        raise InvalidMeasurementError(
            "peak at X=%g (t=%g) does not precede X=%g (t=%g)" % (xa, ta, xb, tb))
    v = (xb - xa) / (tb - ta)
    return v, ta - (xa - a2) / v


def edge_peak_delay(evolution, times):
    """Delay between the first density maxima at a2 and at a1."""
    pot = evolution.potential
    rho_1, _ = probe_traces(evolution, pot.a1, times)
    rho_2, _ = probe_traces(evolution, pot.a2, times)
    return first_peak(rho_2)[0] - first_peak(rho_1)[0]


# ------------------------------------------------------------- stationary phase


def _theta(pot, k):
    return np.unwrap(ContinuumBasis(pot, np.atleast_1d(k)).theta)


def stationary_phase_density(decomp, x, t, dk=PHASE_STEP):
    """|psi(x, t)|^2 from the saddle of theta(k) + k x - k^2 t / 2.

    Solves theta'(K) + x - K t = 0 (Newton, bracketed fallback) and returns
    G(K)^2 / |theta''(K) - t|.
    """
    if t <= 0:
        raise InvalidParameterError("stationary phase needs t > 0")
    pot = decomp.potential
    k_lo = max(2.0 * dk, math.sqrt(2.0 * pot.tail_U) + 2.0 * dk)
    k_hi = decomp.k_max - 2.0 * dk

    def derivs(k):
        th = _theta(pot, np.array([k - dk, k, k + dk]))
        return (th[2] - th[0]) / (2.0 * dk), (th[2] - 2.0 * th[1] + th[0]) / dk**2

    def f(k):
        return derivs(k)[0] + x - k * t

    k = x / t
    if not k_lo < k < k_hi:
        raise OutOfSupportError("x/t = %g outside (%g, %g)" % (k, k_lo, k_hi))
    root = None
    for _ in range(50):
        d1, d2 = derivs(k)
        step = (d1 + x - k * t) / (d2 - t)
        k_new = k - step
        if not k_lo < k_new < k_hi:
            break
        k = k_new
        if abs(step) < 1e-12 * max(1.0, k):
            root = k
            break
    if root is None:
        grid = np.linspace(k_lo, k_hi, 4001)
        vals = np.array([f(g) for g in grid])
        flips = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
        if flips.size == 0:
            raise OutOfSupportError("no stationary point for x=%g, t=%g" % (x, t))
        i = flips[np.argmin(np.abs(grid[flips] - x / t))]
        root = brentq(f, grid[i], grid[i + 1], xtol=1e-13)
    d2 = derivs(root)[1]
    g = float(np.ravel(decomp(np.array([root])))[0])
    return g * g / abs(d2 - t)


# --------------------------------------------------------------- closing scan


@dataclass
class ClosingScanRow:
    t0: float
    escaped_fraction: float
    t_X: float = math.nan


def escaped_fraction(decomp, t0, grid_cfg=None):
    """Probability that leaves the well for good when the barrier closes at t0."""
    from .evolve import OpenEvaluator, Snapshot, build_k_grid
    from .eigensolve import solve_bound_states

    if math.isinf(t0):
        return 1.0
    pot1 = _step_well_of(decomp.potential)
    states = solve_bound_states(pot1)
    grid = build_k_grid(decomp, decomp.potential.a2, max(t0, 1e-9), grid_cfg, check=False)
    snap = Snapshot(OpenEvaluator(decomp, grid), t0, 0.0, 0.0)
    b = snap.bound_projection(states)
    return float(1.0 - np.sum(np.abs(b) ** 2))


def _step_well_of(pot2):
    from .eigensolve import make_step_well
    return make_step_well(pot2.U0, pot2.a1)


def closing_time_scan(config, t0_list, detector=None, t_window=None, dt=DETECTOR_DT):
    """Escaped fraction (and optionally the detector peak time) per closing time.

    ``config`` provides ``potentials()``, ``initial`` and ``grid_config()``.
    With ``detector`` set, each closing time runs a full closed-phase
    evolution and reads the first flux peak at that position over ``t_window``.
    """
    from .evolve import closing_evolution, open_evolution
    from .spectral import make_initial_state, project_open

    t0s = [float(v) for v in t0_list]
    if any(b <= a for a, b in zip(t0s, t0s[1:])):
        raise InvalidParameterError("closing times must increase")
    if any(v < 0 for v in t0s):
        raise InvalidParameterError("closing times must be >= 0")
    pot1, pot2 = config.potentials()
    cfg = config.grid_config()
    decomp = project_open(make_initial_state(config.initial, pot1), pot2, cfg)
    rows = []
    for t0 in t0s:
        row = ClosingScanRow(t0, escaped_fraction(decomp, t0, cfg))
        if detector is not None and t0 > 0:
            t_lo, t_hi = t_window
            if math.isinf(t0):
                ev = open_evolution(decomp, detector, t_hi, cfg)
            else:
                ev = closing_evolution(decomp, pot1, t0, detector, t_hi, cfg)
            _, j = detector_trace(ev, detector, (t_lo, t_hi), dt)
            row.t_X = first_peak(j)[0]
        rows.append(row)
    return rows


def loglog_slope(t0, frac):
    """Least-squares slope of log(frac) against log(t0)."""
    t0, frac = np.asarray(t0, float), np.asarray(frac, float)
    return float(np.polyfit(np.log(t0), np.log(frac), 1)[0])
