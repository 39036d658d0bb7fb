"""Projections between the well (closed) and barrier (open) eigenbases.

Opening the barrier expands the initial state over the delta-normalized
scattering states of the barrier potential, giving the real amplitude G(k).
Closing it again re-projects the evolved state onto the bound states and the
step-well continuum, whose states are normalized in the tail wavenumber q;
the continuum integral is therefore carried out in q.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .eigensolve import (BoundState, ContinuumBasis, PiecewisePotential,
                         solve_bound_states)
from .errors import AccuracyError, InvalidParameterError
from .piecewise import PiecewiseFunction, exp_terms, overlap, sine_terms
from .quadrature import GL_ORDER, gauss_panels, max_node_gap

__all__ = [
    "GridConfig", "InitialState", "SpectralDecomposition", "make_initial_state",
    "overlap", "project_open", "project_closed",
]

INITIAL_KINDS = ("bound_ground", "bound_excited", "infinite_well")


@dataclass(frozen=True)
class GridConfig:
    """Accuracy knobs shared by the projection and evolution grids."""

    k_max: float | None = None          # explicit cutoff; None = automatic
    k_cap: float = 40.0                 # upper limit for the automatic cutoff
    cutoff_tol: float = 1e-6            # |G| relative level defining k_max
    base_panel: float = 0.25
    survey_tol: float = 1e-11           # per-panel error on the integral of G**2
    max_depth: int = 16
    threshold_gap: float = 1e-8         # half-width excluded around sqrt(2 U0)
    phase_budget: float = np.pi / 8.0   # max node gap * local phase rate
    convergence_tol: float = 1e-6
    node_budget: int = 1_500_000
    completeness_fail: float = 1e-2
    box_weight_tol: float = 1e-6        # escaped weight allowed beyond the box
    closed_q_min: float = 20.0          # floor on the closed-basis q cutoff


# --------------------------------------------------------------- initial state


@dataclass(frozen=True)
class InitialState:
    kind: str
    function: PiecewiseFunction = field(repr=False)
    energy: float
    bound_state: BoundState | None = field(default=None, repr=False)

    def __call__(self, x):
        return self.function(x)


def make_initial_state(kind: str, pot1: PiecewisePotential) -> InitialState:
    """Initial wavefunction living in the well of the step potential ``pot1``.

    ``infinite_well`` is sqrt(2/a1) sin(pi x / a1) on [0, a1], zero beyond.
    """
    if kind not in INITIAL_KINDS:
        raise InvalidParameterError("unknown initial state %r" % kind)
    if kind == "infinite_well":
        a = pot1.a1
        k = np.pi / a
        func = PiecewiseFunction((0.0, a), [sine_terms(np.sqrt(2.0 / a), k), ()])
        return InitialState(kind, func, k * k / 2.0)
    states = solve_bound_states(pot1)
    j = 0 if kind == "bound_ground" else 1
    if len(states) <= j:
        raise InvalidParameterError("well holds only %d bound state(s)" % len(states))
    st = states[j]
    return InitialState(kind, st.function, st.energy, st)


# -------------------------------------------------------------- decomposition


@dataclass
class SpectralDecomposition:
    """Expansion coefficients of a state in one of the two eigenbases.

    Open basis: ``values`` holds G(k) at ``nodes`` (wavenumber k, weights for
    dk). Closed basis: ``bound_coefficients`` holds B_j and ``values`` holds
    B(q) at ``nodes`` = q with weights for dq.
    """

    basis: str
    potential: PiecewisePotential
    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    panels: np.ndarray
    k_max: float
    amplitude: Callable | None = field(default=None, repr=False)
    initial: InitialState | None = field(default=None, repr=False)
    resonances: list = field(default_factory=list)
    bound_states: list = field(default_factory=list, repr=False)
    bound_coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    closing_time: float | None = None
    stats: dict = field(default_factory=dict)

    @property
    def completeness(self):
        return float(np.sum(np.abs(self.bound_coefficients) ** 2)
                     + np.sum(self.weights * np.abs(self.values) ** 2))

    @property
    def completeness_defect(self):
        return abs(1.0 - self.completeness)

    def __call__(self, k):
        """Amplitude at arbitrary wavenumbers (open basis)."""
        if self.amplitude is None:
            raise InvalidParameterError("decomposition has no amplitude function")
        return self.amplitude(np.asarray(k, dtype=float))

    def tail_weight(self, k):
        """Weight carried by components above wavenumber ``k``."""
        mask = self.nodes > k
        return float(np.sum(self.weights[mask] * np.abs(self.values[mask]) ** 2))

    def dominant_peaks(self, rel=0.1):
        """Resonances whose |G|^2 height exceeds ``rel`` times the largest."""
        if not self.resonances:
            return []
        top = max(r["height"] for r in self.resonances)
        return [r for r in self.resonances if r["height"] >= rel * top]


def threshold_breaks(pot: PiecewisePotential, lo: float, hi: float):
    """Wavenumbers sqrt(2U) of every segment/tail value inside (lo, hi)."""
    levels = {s.U for s in pot.segments} | {pot.tail_U}
    return sorted(np.sqrt(2.0 * u) for u in levels if lo < np.sqrt(2.0 * u) < hi)


def base_intervals(pot, k_lo, k_hi, gap):
    """Split (k_lo, k_hi) at thresholds, leaving a gap of ``gap`` around each."""
    cuts = threshold_breaks(pot, k_lo, k_hi)
    edges = [k_lo]
    for c in cuts:
        edges += [c - gap, c + gap]
    edges.append(k_hi)
    return [(a, b) for a, b in zip(edges[::2], edges[1::2]) if b > a]


def _uniform_panels(intervals, h):
    out = []
    for a, b in intervals:
        n = max(1, int(np.ceil((b - a) / h)))
        e = np.linspace(a, b, n + 1)
        out.append(np.column_stack([e[:-1], e[1:]]))
    return np.vstack(out)


def adaptive_panels(func, intervals, h, tol, max_depth):
    """Panels on which GL-16 integrals of ``func`` agree with panel halving."""
    todo = _uniform_panels(intervals, h)
    done = []
    for _ in range(max_depth):
        if len(todo) == 0:
            break
        mid = 0.5 * (todo[:, 0] + todo[:, 1])
        halves = np.vstack([np.column_stack([todo[:, 0], mid]),
                            np.column_stack([mid, todo[:, 1]])])
        k1, w1 = gauss_panels(todo)
        k2, w2 = gauss_panels(halves)
        coarse = (w1 * func(k1)).reshape(len(todo), GL_ORDER).sum(axis=1)
        fine = (w2 * func(k2)).reshape(2, len(todo), GL_ORDER).sum(axis=2).sum(axis=0)
        ok = np.abs(coarse - fine) <= tol
        done.append(todo[ok])
        todo = halves.reshape(2, len(todo), 2).transpose(1, 0, 2)[~ok].reshape(-1, 2)
    if len(todo):
        done.append(todo)
    panels = np.vstack(done)
    return panels[np.argsort(panels[:, 0])]


def _cutoff(amp, pot, cfg):
    """Smallest k beyond which |G| stays below cutoff_tol * max|G|."""
    if cfg.k_max is not None:
        return float(cfg.k_max)
    scan = _drop_thresholds(np.arange(0.01, 10.0 * cfg.k_cap, 0.01), pot)
    g = np.abs(amp(scan))
    level = cfg.cutoff_tol * g.max()
    # running max from the right: max over [k, end]
    tail_max = np.maximum.accumulate(g[::-1])[::-1]
    below = np.nonzero(tail_max < level)[0]
    k_cut = scan[below[0]] if below.size else np.inf
    return float(min(k_cut, cfg.k_cap))


def _drop_thresholds(k, pot):
    keep = np.ones(k.shape, bool)
    for c in threshold_breaks(pot, 0.0, np.inf):
        keep &= np.abs(k - c) > 1e-6
    return k[keep]


def find_resonances(amp, panels, max_width=0.5):
    """Local maxima of |G|^2 with their full width at half maximum (in k)."""
    k, _ = gauss_panels(panels)
    g2 = amp(k) ** 2
    peaks = np.nonzero((g2[1:-1] > g2[:-2]) & (g2[1:-1] >= g2[2:]))[0] + 1
    out = []
    for i in peaks:
        kp, h = k[i], g2[i]
        half = lambda x: amp(np.array([x]))[0] ** 2 - 0.5 * h
        try:
            left = _bracket_root(half, kp, -1, max_width)
            right = _bracket_root(half, kp, +1, max_width)
        except ValueError:
            continue
        width = right - left
        if width < max_width:
            out.append({"k": float(kp), "fwhm": float(width), "height": float(h),
                        "energy_fwhm": float(0.5 * (right**2 - left**2))})
    return out


def _bracket_root(f, k0, direction, span):
    step = 1e-4
    a = k0
    while step <= span:
        b = k0 + direction * step
        if b <= 0:
            raise ValueError
        if f(b) < 0:
            return brentq(f, min(a, b), max(a, b), xtol=1e-13)
        a = b
        step *= 1.5
    raise ValueError


def project_open(psi0: InitialState, pot2: PiecewisePotential,
                 grid_cfg: GridConfig | None = None,
                 amplitude: Callable | None = None) -> SpectralDecomposition:
    """G(k) = <phi_k | psi0> on an adaptive wavenumber grid.

    ``amplitude`` replaces the closed-form overlap by a user function of k
    (used for synthetic spectra).
    """
    cfg = grid_cfg or GridConfig()
    if amplitude is None:
        def amplitude(k):
            return overlap(psi0.function, ContinuumBasis(pot2, k).function)
    k_max = _cutoff(amplitude, pot2, cfg)
    intervals = base_intervals(pot2, 0.0, k_max, cfg.threshold_gap)
    panels = adaptive_panels(lambda k: amplitude(k) ** 2, intervals,
                             cfg.base_panel, cfg.survey_tol, cfg.max_depth)
    nodes, weights = gauss_panels(panels)
    values = amplitude(nodes)
    dec = SpectralDecomposition(
        basis="open", potential=pot2, nodes=nodes, weights=weights,
        values=values, panels=panels, k_max=k_max, amplitude=amplitude,
        initial=psi0, resonances=find_resonances(amplitude, panels),
        stats={"survey_panels": len(panels)},
    )
    dec.stats["completeness"] = dec.completeness
    if dec.completeness_defect > cfg.completeness_fail:
        raise AccuracyError("completeness defect %.3g after refinement"
                            % dec.completeness_defect, dec.completeness_defect)
    return dec


# ------------------------------------------------------------------- closing


def bound_kernels(bound_states, pot2, k):
    """<phi_j (well) | phi_k (barrier)> in closed form, shape (J, len(k))."""
    basis = ContinuumBasis(pot2, k)
    return np.array([overlap(b.function, basis.function) for b in bound_states])


def spatial_panels(lo, hi, k_res, phase_per_panel=20.0):
    """Panels fine enough for GL-16 to integrate products up to wavenumber k_res.

    A product of two such functions oscillates at most at 2 k_res; GL-16 is
    accurate to ~1e-12 while that phase advances < 20 rad per panel.
    """
    h = phase_per_panel / max(2.0 * k_res, 1e-3)
    n = max(1, int(np.ceil((hi - lo) / h)))
    e = np.linspace(lo, hi, n + 1)
    return np.column_stack([e[:-1], e[1:]])


def project_closed(psi_t0, pot1: PiecewisePotential,
                   grid_cfg: GridConfig | None = None, *,
                   q_panels: np.ndarray | None = None,
                   x_box: float | None = None,
                   k_res: float | None = None) -> SpectralDecomposition:
    """Re-expand the state at the closing time over the step-well eigenbasis.

    ``psi_t0`` is a callable x -> complex amplitude. When it also exposes
    ``bound_projection(states)`` (snapshots of an open evolution do), the
    bound coefficients come from closed-form kernels instead of spatial
    quadrature. ``q_panels`` fixes the continuum grid (built by
    :func:`tunneldecay.evolve.build_q_grid_panels`); ``x_box``/``k_res`` control the
    spatial quadrature.
    """
    cfg = grid_cfg or GridConfig()
    if not pot1.is_step_well:
        raise InvalidParameterError("closing re-projects onto a step well")
    states = solve_bound_states(pot1)
    t0 = getattr(psi_t0, "time", None)
    if x_box is None:
        x_box = getattr(psi_t0, "support", None)
        if x_box is None:
            raise InvalidParameterError("x_box required for plain callables")
    if k_res is None:
        k_res = getattr(psi_t0, "k_resolution", None) or 20.0
    k_top = np.sqrt(k_res**2 + 2.0 * pot1.tail_U)

    xs_panels = spatial_panels(0.0, x_box, k_top)
    # keep segment boundaries on panel edges
    cuts = np.array(pot1.boundaries)
    xs_panels = _split_panels(xs_panels, cuts)
    x, wx = gauss_panels(xs_panels)
    psi = np.asarray(psi_t0(x), dtype=complex)

    if hasattr(psi_t0, "bound_projection"):
        bcoef = np.asarray(psi_t0.bound_projection(states), dtype=complex)
    else:
        bcoef = np.array([np.sum(wx * psi * s(x)) for s in states], dtype=complex)

    if q_panels is None:
        from .evolve import build_q_grid_panels
        q_panels = build_q_grid_panels(pot1, k_res, x_box, 0.0, cfg)
    q, wq = gauss_panels(q_panels)
    bq = np.empty(q.shape, dtype=complex)
    k_of_q = np.sqrt(q * q + 2.0 * pot1.tail_U)
    chunk = max(1, 2_000_000 // max(x.size, 1))
    wpsi = wx * psi
    for s in range(0, q.size, chunk):
        basis = ContinuumBasis(pot1, k_of_q[s:s + chunk])
        bq[s:s + chunk] = basis.value_and_slope(x)[0] @ wpsi
    dec = SpectralDecomposition(
        basis="closed", potential=pot1, nodes=q, weights=wq, values=bq,
        panels=q_panels, k_max=float(k_of_q.max()) if q.size else 0.0,
        bound_states=states, bound_coefficients=bcoef, closing_time=t0,
        stats={"x_box": x_box, "spatial_nodes": x.size, "q_nodes": q.size},
    )
    dec.stats["completeness"] = dec.completeness
    if dec.completeness_defect > cfg.completeness_fail:
        raise AccuracyError("closed-basis completeness defect %.3g"
                            % dec.completeness_defect, dec.completeness_defect)
    return dec


def _split_panels(panels, cuts):
    edges = np.unique(np.concatenate([panels[:, 0], panels[-1:, 1], cuts]))
    edges = edges[(edges >= panels[0, 0]) & (edges <= panels[-1, 1])]
    return np.column_stack([edges[:-1], edges[1:]])
