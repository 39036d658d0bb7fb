"""Time evolution by direct quadrature of the spectral integrals.

The integrand G(k) phi_k(x) exp(-i k^2 t / 2) oscillates with local rate
|x +- k t| in k, so the grid is refined panel by panel until every GL-16 node
gap times that rate stays below a fixed phase budget. Resonance peaks get an
additional width-based refinement. Sums over nodes run in a fixed chunk order,
so results do not depend on the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .eigensolve import ContinuumBasis, PiecewisePotential
from .errors import AccuracyError, InvalidParameterError, PhaseError
from .quadrature import GL_MAX_GAP, gauss_panels
from .spectral import (GridConfig, SpectralDecomposition, base_intervals,
                       bound_kernels, project_closed)

_THREADS = 1
_CHUNK_ELEMENTS = 1 << 21
_BASIS_CACHE_ELEMENTS = 1 << 24
RESONANCE_SPAN = 8.0  # half-width of a resonance panel region, in FWHM units
RESONANCE_NODES = 20  # nodes per FWHM


def set_threads(n: int):
    """Worker threads for field evaluation (speed only, never results)."""
    global _THREADS
    _THREADS = max(1, int(n))


def get_threads():
    return _THREADS


def _map(func, jobs):
    if _THREADS == 1 or len(jobs) < 2:
        return [func(j) for j in jobs]
    with ThreadPoolExecutor(_THREADS) as pool:
        return list(pool.map(func, jobs))


@dataclass
class KGrid:
    """Composite GL-16 wavenumber grid with per-panel refinement tags."""

    panels: np.ndarray
    tags: list
    x_max: float
    t_max: float
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.panels = np.asarray(self.panels, dtype=float).reshape(-1, 2)
        self.nodes, self.weights = gauss_panels(self.panels)
        self._cache = {}

    @property
    def n_nodes(self):
        return self.nodes.size

    @property
    def k_max(self):
        return float(self.panels[-1, 1])

    def phase_numbers(self):
        """Max node gap times local phase rate, per panel."""
        h = self.panels[:, 1] - self.panels[:, 0]
        rate = self.x_max + self.panels[:, 1] * self.t_max
        return GL_MAX_GAP * h * rate

    def halved(self):
        mid = 0.5 * (self.panels[:, 0] + self.panels[:, 1])
        p = np.column_stack([self.panels[:, 0], mid, mid, self.panels[:, 1]]).reshape(-1, 2)
        tags = [t for t in self.tags for _ in range(2)]
        return KGrid(p, tags, self.x_max, self.t_max, dict(self.stats))


def _subdivide(panels, tags, n_parts):
    out, out_tags = [], []
    for (lo, hi), tag, n in zip(panels, tags, n_parts):
        e = np.linspace(lo, hi, int(n) + 1)
        out.append(np.column_stack([e[:-1], e[1:]]))
        out_tags += [tag] * int(n)
    return np.vstack(out), out_tags


def phase_refine(panels, tags, x_max, t_max, budget):
    h = panels[:, 1] - panels[:, 0]
    rate = x_max + panels[:, 1] * t_max
    n = np.maximum(1, np.ceil(GL_MAX_GAP * h * rate / budget * (1 + 1e-12)))
    tags = [t if k == 1 else (t if t != "base" else "phase") for t, k in zip(tags, n)]
    return _subdivide(panels, tags, n)


def build_k_grid(decomp: SpectralDecomposition, x_max: float, t_max: float,
                 grid_cfg: GridConfig | None = None, *, k_max: float | None = None,
                 check: bool = True, n_probes: int = 20, seed: int = 2024) -> KGrid:
    """Quadrature grid for the open-phase integral up to (x_max, t_max).

    ``k_max`` truncates the decomposition for evaluation; the discarded weight
    is reported in ``stats['truncated_weight']``.
    """
    cfg = grid_cfg or GridConfig()
    if x_max < 0 or t_max < 0:
        raise InvalidParameterError("x_max and t_max must be >= 0")
    top = decomp.k_max if k_max is None else min(k_max, decomp.k_max)
    panels = decomp.panels[decomp.panels[:, 0] < top].copy()
    panels[-1, 1] = min(panels[-1, 1], top)
    tags = ["base"] * len(panels)

    for res in decomp.resonances:
        lo = res["k"] - RESONANCE_SPAN * res["fwhm"]
        hi = res["k"] + RESONANCE_SPAN * res["fwhm"]
        inside = (panels[:, 1] > lo) & (panels[:, 0] < hi)
        h = panels[:, 1] - panels[:, 0]
        need = np.where(inside, np.ceil(GL_MAX_GAP * h * RESONANCE_NODES / res["fwhm"]), 1)
        tags = ["resonance" if i else t for t, i in zip(tags, inside)]
        panels, tags = _subdivide(panels, tags, np.maximum(need, 1))

    panels, tags = phase_refine(panels, tags, x_max, t_max, cfg.phase_budget)
    grid = KGrid(panels, tags, x_max, t_max)
    grid.stats["truncated_weight"] = decomp.tail_weight(top)
    if grid.n_nodes > cfg.node_budget:
        raise AccuracyError("k-grid needs %d nodes (> budget %d)"
                            % (grid.n_nodes, cfg.node_budget))
    if not check:
        return grid

    rng = np.random.default_rng(seed)
    xp = rng.uniform(0.0, max(x_max, 1e-9), n_probes)
    tp = rng.uniform(0.0, t_max, n_probes)
    change = np.inf
    while True:
        fine = grid.halved()
        if fine.n_nodes > cfg.node_budget:
            raise AccuracyError("node budget exhausted before convergence "
                                "(achieved %.3g)" % change, change)
        a = _probe_values(decomp, grid, xp, tp)
        b = _probe_values(decomp, fine, xp, tp)
        change = np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)
        if change < cfg.convergence_tol:
            grid.stats["convergence_change"] = float(change)
            return grid
        grid = fine


def _probe_values(decomp, grid, xp, tp):
    ev = OpenEvaluator(decomp, grid)
    return np.array([ev.fields(np.array([x]), np.array([t]))[0][0, 0]
                     for x, t in zip(xp, tp)])


def build_q_grid_panels(pot1: PiecewisePotential, k_res: float, x_max: float,
                        t_max: float, grid_cfg: GridConfig | None = None):
    """Panels in q for the step-well continuum, phase-resolved to (x_max, t_max)."""
    cfg = grid_cfg or GridConfig()
    q_top = np.sqrt(max(k_res**2 - 2.0 * pot1.tail_U, 1e-6))
    n = max(1, int(np.ceil(q_top / cfg.base_panel)))
    e = np.linspace(0.0, q_top, n + 1)
    panels = np.column_stack([e[:-1], e[1:]])
    # near q = 0 the energy is sqrt-singular in k; grade towards the threshold
    first = panels[0]
    graded = [first[1] * 2.0**-j for j in range(12)][::-1]
    graded = np.concatenate([[0.0], graded])
    panels = np.vstack([np.column_stack([graded[:-1], graded[1:]]), panels[1:]])
    panels, _ = phase_refine(panels, ["base"] * len(panels), x_max, t_max,
                             cfg.phase_budget)
    return panels


@dataclass
class WaveSample:
    x: np.ndarray | float
    t: np.ndarray | float
    psi: np.ndarray | complex
    dpsi_dx: np.ndarray | complex


class OpenEvaluator:
    """Psi(x, t) = sum_n w_n G(k_n) phi_{k_n}(x) exp(-i k_n^2 t / 2)."""

    def __init__(self, decomp: SpectralDecomposition, grid: KGrid):
        self.decomp = decomp
        self.grid = grid
        key = ("open", id(decomp))
        cached = grid._cache.get(key)
        if cached is None:
            k = grid.nodes
            basis = ContinuumBasis(decomp.potential, k)
            amp = grid.weights * decomp(k)
            cached = grid._cache[key] = (basis, amp.astype(complex))
        self.basis, self.amp = cached
        self.k = grid.nodes
        self.energy = 0.5 * self.k**2

    def fields(self, x, t, time_derivative=False):
        return _spectral_fields(self.basis, self.amp, self.energy, x, t,
                                0.0, time_derivative)


def _spectral_fields(basis, amp, energy, x, t, t_ref, time_derivative,
                     extra=None):
    """psi, dpsi/dx on the (x, t) product grid, shape (len(x), len(t))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    tau = t - t_ref
    psi = np.zeros((len(x), len(t)), complex)
    dpsi = np.zeros_like(psi)
    if amp.size:
        if time_derivative:
            amp = amp * (-1j * energy)
        n = amp.size
        xc = max(1, _CHUNK_ELEMENTS // n)
        tc = max(1, _CHUNK_ELEMENTS // n)
        x_slices = [slice(s, s + xc) for s in range(0, len(x), xc)]
        t_slices = [slice(s, s + tc) for s in range(0, len(t), tc)]

        def modes(xs):
            val, der = basis.value_and_slope(x[xs])
            return val * amp[:, None], der * amp[:, None]

        def phases(ts):
            return np.exp(-1j * np.outer(tau[ts], energy))

        if len(x) * n <= _BASIS_CACHE_ELEMENTS:
            # basis once for all x; each phase block is computed once
            parts = _map(modes, x_slices)
            phi = np.hstack([p for p, _ in parts])
            dphi = np.hstack([d for _, d in parts])

            def job(ts):
                ph = phases(ts)
                return ph @ phi, ph @ dphi

            for ts, (p, d) in zip(t_slices, _map(job, t_slices)):
                psi[:, ts], dpsi[:, ts] = p.T, d.T
        else:
            def job(xs):
                phi, dphi = modes(xs)
                p = np.empty((phi.shape[1], len(t)), complex)
                d = np.empty_like(p)
                for ts in t_slices:
                    ph = phases(ts)
                    p[:, ts], d[:, ts] = (ph @ phi).T, (ph @ dphi).T
                return p, d

            for xs, (p, d) in zip(x_slices, _map(job, x_slices)):
                psi[xs], dpsi[xs] = p, d
    if extra is not None:
        ep, ed = extra(x, tau, time_derivative)
        psi, dpsi = psi + ep, dpsi + ed
    return psi, dpsi


class ClosedEvaluator:
    """Bound-state sum plus q-continuum integral after the closing time."""

    def __init__(self, closed: SpectralDecomposition):
        if closed.basis != "closed":
            raise InvalidParameterError("need a closed-basis decomposition")
        self.decomp = closed
        self.t0 = closed.closing_time
        pot = closed.potential
        q = closed.nodes
        self.basis = ContinuumBasis(pot, np.sqrt(q * q + 2.0 * pot.tail_U))
        self.amp = (closed.weights * closed.values).astype(complex)
        self.energy = 0.5 * q * q + pot.tail_U
        self.bound_energy = np.array([b.energy for b in closed.bound_states])

    def _bound(self, x, tau, time_derivative):
        d = self.decomp
        psi = np.zeros((len(x), len(tau)), complex)
        dpsi = np.zeros_like(psi)
        for b, c, e in zip(d.bound_states, d.bound_coefficients, self.bound_energy):
            ph = c * np.exp(-1j * e * tau)
            if time_derivative:
                ph = ph * (-1j * e)
            psi += np.outer(b(x), ph)
            dpsi += np.outer(b.derivative(x), ph)
        return psi, dpsi

    def fields(self, x, t, time_derivative=False):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t <= self.t0):
            raise PhaseError("closed-phase evolution needs t > t0 = %g" % self.t0)
        return _spectral_fields(self.basis, self.amp, self.energy, x, t, self.t0,
                                time_derivative, extra=self._bound)


class Snapshot:
    """Open-phase state frozen at the closing time, as a callable of x."""

    def __init__(self, evaluator: OpenEvaluator, t0: float, support: float,
                 k_resolution: float):
        self.evaluator = evaluator
        self.time = float(t0)
        self.support = float(support)
        self.k_resolution = float(k_resolution)

    def __call__(self, x):
        return self.evaluator.fields(x, [self.time])[0][:, 0]

    def bound_projection(self, states):
        ev = self.evaluator
        kern = bound_kernels(states, ev.decomp.potential, ev.k)
        phased = ev.amp * np.exp(-1j * ev.energy * self.time)
        return kern @ phased


class Evolution:
    """Full protocol: open barrier on (0, t0], step well afterwards."""

    def __init__(self, open_eval: OpenEvaluator, t0: float | None = None,
                 closed_eval: ClosedEvaluator | None = None):
        self.open = open_eval
        self.t0 = np.inf if t0 is None else float(t0)
        self.closed = closed_eval
        if np.isfinite(self.t0) and closed_eval is None:
            raise InvalidParameterError("closing time given without closed basis")

    @property
    def decomp(self):
        return self.open.decomp

    @property
    def potential(self):
        return self.open.decomp.potential

    def fields(self, x, t, time_derivative=False):
        """(psi, dpsi_dx) arrays of shape (len(x), len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0):
            raise PhaseError("evolution starts at t = 0")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        psi = np.zeros((len(x), len(t)), complex)
        dpsi = np.zeros_like(psi)
        early = t <= self.t0
        if np.any(early):
            p, d = self.open.fields(x, t[early], time_derivative)
            psi[:, early], dpsi[:, early] = p, d
        if np.any(~early):
            p, d = self.closed.fields(x, t[~early], time_derivative)
            psi[:, ~early], dpsi[:, ~early] = p, d
        return psi, dpsi

    def sample(self, x, t):
        psi, dpsi = self.fields([x], [t])
        return WaveSample(x, t, psi[0, 0], dpsi[0, 0])


def wavefunction(decomp: SpectralDecomposition, grid: KGrid, x, t,
                 t0: float = np.inf) -> WaveSample:
    """Open-phase wavefunction and its x-derivative (arrays broadcast as (x, t))."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0) or np.any(t_arr > t0):
        raise PhaseError("open-phase evaluation needs 0 <= t <= t0")
    psi, dpsi = OpenEvaluator(decomp, grid).fields(x, t_arr)
    if np.ndim(x) == 0 and np.ndim(t) == 0:
        return WaveSample(x, t, psi[0, 0], dpsi[0, 0])
    return WaveSample(x, t, psi, dpsi)


def evolve_closed(closed: SpectralDecomposition, t0: float, x, t) -> WaveSample:
    """Post-closing wavefunction from the step-well expansion."""
    if closed.closing_time is not None and closed.closing_time != t0:
        raise InvalidParameterError("decomposition was taken at t0 = %g"
                                    % closed.closing_time)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < t0):
        raise PhaseError("closed-phase evaluation needs t >= t0")
    if closed.closing_time is None:
        closed.closing_time = t0
    ev = ClosedEvaluator(closed)
    # t == t0 belongs to the open phase; evaluate the re-expansion at tau = 0
    psi, dpsi = _spectral_fields(ev.basis, ev.amp, ev.energy, x, t_arr, t0,
                                 False, extra=ev._bound)
    if np.ndim(x) == 0 and np.ndim(t) == 0:
        return WaveSample(x, t, psi[0, 0], dpsi[0, 0])
    return WaveSample(x, t, psi, dpsi)


# ---------------------------------------------------------------- convenience


def support_wavenumber(decomp: SpectralDecomposition, weight_tol: float):
    """Smallest k above which the spectral weight is below ``weight_tol``."""
    order = np.argsort(decomp.nodes)[::-1]
    cum = np.cumsum((decomp.weights * np.abs(decomp.values) ** 2)[order])
    above = order[cum < weight_tol]
    return float(decomp.nodes[above].min()) if above.size else float(decomp.k_max)


def open_evolution(decomp, x_max, t_max, grid_cfg=None, k_max=None, check=True):
    grid = build_k_grid(decomp, x_max, t_max, grid_cfg, k_max=k_max, check=check)
    return Evolution(OpenEvaluator(decomp, grid))


def closing_evolution(decomp: SpectralDecomposition, pot1: PiecewisePotential,
                      t0: float, x_max: float, t_max: float,
                      grid_cfg: GridConfig | None = None, k_max=None,
                      check=True) -> Evolution:
    """Open the barrier, close it at ``t0``, evolve up to ``t_max``."""
    cfg = grid_cfg or GridConfig()
    k_res = support_wavenumber(decomp, cfg.box_weight_tol)
    if k_max is not None:
        k_res = min(k_res, k_max)
    x_box = decomp.potential.a2 + k_res * t0 + 30.0
    grid = build_k_grid(decomp, max(x_max, x_box), t0, cfg, k_max=k_max, check=check)
    ev = OpenEvaluator(decomp, grid)
    # the kinks of psi(t0) at the removed barrier edge make B(q) fall only
    # like q**-3, so the closed basis needs a wider q range than the support
    k_q = max(k_res, np.sqrt(cfg.closed_q_min**2 + 2.0 * pot1.tail_U))
    snap = Snapshot(ev, t0, x_box, k_q)
    q_panels = build_q_grid_panels(pot1, k_q, max(x_max, x_box),
                                   max(t_max - t0, 0.0), cfg)
    closed = project_closed(snap, pot1, cfg, q_panels=q_panels)
    return Evolution(ev, t0, ClosedEvaluator(closed))
