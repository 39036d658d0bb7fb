"""Model potentials and their eigenstates in closed form.

Units: hbar = m = 1, energies E = k**2 / 2. The potential is infinite for
x < 0, so every state vanishes at the wall.

Sign convention for continuum states: the wavefunction starts as
``+C sin(k x)`` with ``C > 0`` and the tail reads
``sqrt(2/pi) sin(k_t x + theta)`` with ``theta`` in ``(-pi, pi]`` after
reduction. Only bilinear quantities enter physical observables, so any
consistent choice would do.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import DegenerateThresholdError, InvalidParameterError
from .piecewise import PiecewiseFunction, Term, exp_terms, sine_terms

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
ROOT_TOL = 1e-12
THRESHOLD_EPS = 8.0 * np.finfo(float).eps


class Segment(NamedTuple):
    x_left: float
    x_right: float
    U: float


@dataclass(frozen=True)
class PiecewisePotential:
    """Hard wall at 0, constant segments, constant tail beyond the last one."""

    segments: tuple[Segment, ...]
    tail_U: float

    def __post_init__(self):
        segs = tuple(Segment(*map(float, s)) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "tail_U", float(self.tail_U))
        if not segs or segs[0].x_left != 0.0:
            raise InvalidParameterError("first segment must start at x = 0")
        for s, nxt in zip(segs, segs[1:] + (None,)):
            if not s.x_right > s.x_left:
                raise InvalidParameterError("segment boundaries must increase")
            if nxt is not None and nxt.x_left != s.x_right:
                raise InvalidParameterError("segments must be contiguous")
        values = [s.U for s in segs] + [self.tail_U]
        if not all(np.isfinite(v) and v >= 0.0 for v in values):
            raise InvalidParameterError("potential values must be finite and >= 0")

    @property
    def boundaries(self):
        return tuple(s.x_right for s in self.segments)

    @property
    def edges(self):
        return (0.0,) + self.boundaries

    @property
    def a1(self):
        """Right edge of the well (first segment)."""
        return self.segments[0].x_right

    @property
    def a2(self):
        """Outer edge (last boundary)."""
        return self.segments[-1].x_right

    @property
    def U0(self):
        return max([s.U for s in self.segments] + [self.tail_U])

    @property
    def is_step_well(self):
        return len(self.segments) == 1 and self.tail_U > self.segments[0].U

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        values = np.array([s.U for s in self.segments] + [self.tail_U])
        out = values[np.searchsorted(self.boundaries, x, side="right")]
        return np.where(x < 0.0, np.inf, out)


def make_step_well(U0, a1):
    """Well of width ``a1`` (U = 0) followed by a step of height ``U0``."""
    if not (U0 > 0 and a1 > 0):
        raise InvalidParameterError("step well needs U0 > 0 and a1 > 0")
    return PiecewisePotential((Segment(0.0, a1, 0.0),), U0)


def make_barrier(U0, a1, a2):
    """Well on [0, a1], barrier of height ``U0`` on [a1, a2], free beyond."""
    if not (U0 > 0 and a1 > 0 and a2 > a1):
        raise InvalidParameterError("barrier needs U0 > 0 and a2 > a1 > 0")
    return PiecewisePotential((Segment(0.0, a1, 0.0), Segment(a1, a2, U0)), 0.0)


def barrier_edge_for_opacity(U0, a1, kappa_d, energy):
    """Outer edge a2 giving ``kappa * (a2 - a1) = kappa_d`` at ``energy``."""
    if not 0 < energy < U0:
        raise InvalidParameterError("opacity is defined for 0 < E < U0")
    return a1 + kappa_d / np.sqrt(2.0 * (U0 - energy))


# ---------------------------------------------------------------- bound states


@dataclass(frozen=True)
class BoundState:
    index: int
    energy: float
    k: float
    kappa: float
    amplitude: float
    function: PiecewiseFunction = field(repr=False)
    potential: PiecewisePotential = field(repr=False)

    def __call__(self, x):
        return self.function(x)

    def derivative(self, x):
        return self.function.derivative(x)

    @property
    def matching_residual(self):
        a = self.potential.a1
        return abs(self.k / np.tan(self.k * a) + self.kappa)

    def tail_probability(self, x0):
        """Closed form of the integral of phi**2 over [x0, inf), x0 >= a1."""
        a = self.potential.a1
        if x0 < a:
            raise InvalidParameterError("tail integral starts inside the well")
        edge = self.amplitude * np.sin(self.k * a)
        return edge**2 * np.exp(-2.0 * self.kappa * (x0 - a)) / (2.0 * self.kappa)


def _bound_state_roots(width, depth_k):
    """All k in (0, depth_k) with k cos(k a) + kappa sin(k a) = 0."""

    def g(k):
        kap = np.sqrt(max(depth_k**2 - k * k, 0.0))
        return k * np.cos(k * width) + kap * np.sin(k * width)

    step = np.pi / (100.0 * width)
    grid = np.arange(step, depth_k, step)
    grid = np.append(grid, depth_k * (1.0 - 1e-14))
    vals = np.array([g(k) for k in grid])
    roots = []
    for lo, hi, vlo, vhi in zip(grid, grid[1:], vals, vals[1:]):
        if vlo == 0.0:
            roots.append(lo)
        elif vlo * vhi < 0.0:
            k = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            # Newton polish on the same function
            for _ in range(3):
                kap = np.sqrt(depth_k**2 - k * k)
                dg = (np.cos(k * width) - k * width * np.sin(k * width)
                      - k / kap * np.sin(k * width) + kap * width * np.cos(k * width))
                dk = g(k) / dg
                if not lo <= k - dk <= hi:
                    break
                k -= dk
                if abs(dk) < ROOT_TOL:
                    break
            roots.append(k)
    return roots


def solve_bound_states(pot: PiecewisePotential):
    """Bound states of a step well, sorted by energy and unit-normalized."""
    if not pot.is_step_well:
        raise InvalidParameterError("bound states are solved for step wells only")
    seg = pot.segments[0]
    a = seg.x_right
    depth_k = np.sqrt(2.0 * (pot.tail_U - seg.U))
    states = []
    for j, k in enumerate(_bound_state_roots(a, depth_k)):
        kappa = np.sqrt(depth_k**2 - k * k)
        s = np.sin(k * a)
        norm2 = a / 2.0 - np.sin(2.0 * k * a) / (4.0 * k) + s * s / (2.0 * kappa)
        amp = 1.0 / np.sqrt(norm2)
        func = PiecewiseFunction(
            (0.0, a),
            [sine_terms(amp, k), exp_terms(amp * s, -kappa, ref=a)],
        )
        states.append(BoundState(j, seg.U + k * k / 2.0, k, kappa, amp, func, pot))
    return states


# ------------------------------------------------------------ continuum states


def _local_rate(U, k):
    lam2 = 2.0 * U - k * k
    scale = np.maximum(2.0 * U, k * k)
    if np.any(np.abs(lam2) <= THRESHOLD_EPS * scale):
        raise DegenerateThresholdError(
            "k = sqrt(2U) = %.17g is a segment threshold" % np.sqrt(2.0 * U))
    return np.sqrt(lam2.astype(complex))


class ContinuumBasis:
    """Delta-normalized scattering states for an array of wavenumbers.

    ``k`` labels the energy E = k**2 / 2. The tail wavenumber is
    ``k_t = sqrt(k**2 - 2 tail_U)``; states are normalized to
    ``delta(k_t - k_t')``, i.e. the tail is ``sqrt(2/pi) sin(k_t x + theta)``.
    """

    def __init__(self, pot: PiecewisePotential, k):
        k = np.asarray(k, dtype=float)
        if np.any(k <= 0.0):
            raise InvalidParameterError("continuum wavenumbers must be > 0")
        kt2 = k * k - 2.0 * pot.tail_U
        if np.any(kt2 <= 0.0):
            raise InvalidParameterError(
                "k must exceed sqrt(2 U_tail) = %g for a propagating tail"
                % np.sqrt(2.0 * pot.tail_U))
        self.potential = pot
        self.k = k
        self.energy = k * k / 2.0
        self.tail_wavenumber = np.sqrt(kt2)

        u = np.zeros(k.shape, dtype=complex)
        du = np.ones(k.shape, dtype=complex)
        raw = []
        self.rates = []
        for seg in pot.segments:
            lam = _local_rate(seg.U, k)
            alpha = 0.5 * (u - du / lam)
            length = seg.x_right - seg.x_left
            decay = np.exp(-lam * length)
            # growing branch anchored at the right edge (conditioning)
            beta_r = 0.5 * (u + du / lam) * np.exp(lam * length)
            raw.append((alpha, beta_r, lam, seg))
            self.rates.append(lam)
            u = alpha * decay + beta_r
            du = lam * (beta_r - alpha * decay)
        u, du = u.real, du.real
        kt = self.tail_wavenumber
        amp = np.hypot(u, du / kt)
        phase_edge = np.arctan2(u, du / kt)
        scale = SQRT_2_OVER_PI / amp
        edge = pot.a2
        self.theta = np.angle(np.exp(1j * (phase_edge - kt * edge)))
        self.scale = scale
        self._raw = raw

        pieces = []
        for alpha, beta_r, lam, seg in raw:
            pieces.append((Term(alpha * scale, -lam, seg.x_left),
                           Term(beta_r * scale, lam, seg.x_right)))
        pieces.append(sine_terms(SQRT_2_OVER_PI, kt, phase_edge, ref=edge))
        self.function = PiecewiseFunction(pot.edges, pieces)
        self._phase_edge = phase_edge
        self._real = []
        for alpha, beta_r, lam, seg in raw:
            length = seg.x_right - seg.x_left
            prop = np.abs(lam.imag) > np.abs(lam.real)
            beta_l = beta_r * np.exp(np.where(prop, -lam * length, 0.0))
            d = np.where(prop, alpha + beta_l, alpha).real * scale
            f = np.where(prop, 1j * (beta_l - alpha), beta_r).real * scale
            self._real.append((prop, np.abs(lam), d, f, seg))

    def __len__(self):
        return self.k.size

    def value_and_slope(self, x):
        """Real values and x-derivatives, each of shape ``(len(k), len(x))``.

        Same numbers as ``self(x)`` and ``self.derivative(x)`` but computed
        in real arithmetic from anchored cos/sin or exp forms.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < 0.0):
            raise InvalidParameterError("x < 0 lies behind the hard wall")
        k = np.ravel(self.k)
        val = np.empty((k.size, x.size))
        der = np.empty_like(val)
        idx = np.searchsorted(self.potential.edges, x, side="right") - 1
        for i, (prop, rate, d, f, seg) in enumerate(self._real):
            cols = np.flatnonzero(idx == i)
            if cols.size == 0:
                continue
            prop, rate, d, f = (np.ravel(v) for v in (prop, rate, d, f))
            rows = np.flatnonzero(prop)
            if rows.size:
                arg = np.outer(rate[rows], x[cols] - seg.x_left)
                c, s = np.cos(arg), np.sin(arg)
                dr, fr = d[rows, None], f[rows, None]
                val[np.ix_(rows, cols)] = dr * c + fr * s
                der[np.ix_(rows, cols)] = rate[rows, None] * (fr * c - dr * s)
            rows = np.flatnonzero(~prop)
            if rows.size:
                r = rate[rows]
                e1 = np.exp(-np.outer(r, x[cols] - seg.x_left))
                e2 = np.exp(np.outer(r, x[cols] - seg.x_right))
                dr, fr = d[rows, None], f[rows, None]
                val[np.ix_(rows, cols)] = dr * e1 + fr * e2
                der[np.ix_(rows, cols)] = r[:, None] * (fr * e2 - dr * e1)
        cols = np.flatnonzero(idx == len(self._real))
        if cols.size:
            kt = np.ravel(self.tail_wavenumber)
            arg = np.outer(kt, x[cols] - self.potential.a2) + np.ravel(self._phase_edge)[:, None]
            val[:, cols] = SQRT_2_OVER_PI * np.sin(arg)
            der[:, cols] = SQRT_2_OVER_PI * kt[:, None] * np.cos(arg)
        return val, der

    def __call__(self, x):
        return self.function(x)

    def derivative(self, x):
        return self.function.derivative(x)

    @property
    def well_amplitude(self):
        """Coefficient C of sin(p x) in the first segment, p its wavenumber."""
        p = self.rates[0].imag
        return np.where(p > 0, self.scale / np.where(p > 0, p, 1.0), np.nan)

    def segment_coefficients(self, i):
        """Real (first, second) coefficients of segment ``i``.

        Evanescent segment: coefficients of ``exp(-kappa x)`` and
        ``exp(+kappa x)`` (unscaled, absolute origin). Propagating segment:
        coefficients of ``cos(q (x - x_left))`` and ``sin(q (x - x_left))``.
        """
        alpha, beta_r, lam, seg = self._raw[i]
        s = self.scale
        length = seg.x_right - seg.x_left
        evanescent = np.abs(lam.imag) < np.abs(lam.real)
        with np.errstate(over="ignore"):
            d_exp = (alpha * np.exp(lam * seg.x_left)).real * s
            f_exp = (beta_r * np.exp(-lam * seg.x_right)).real * s
        beta_l = beta_r * np.exp(-lam * length)
        d_trig = (alpha + beta_l).real * s
        f_trig = (1j * (beta_l - alpha)).real * s
        return np.where(evanescent, d_exp, d_trig), np.where(evanescent, f_exp, f_trig)

    def state(self, i):
        return ContinuumState.from_basis(self, i)

    def matching_residuals(self):
        """Max relative mismatch of value and slope over all boundaries."""
        f = self.function
        worst = np.zeros(self.k.shape)
        for b_i, b in enumerate(f.edges[1:], start=1):
            left = _piece_eval(f.pieces[b_i - 1], b)
            right = _piece_eval(f.pieces[b_i], b)
            for lv, rv in zip(left, right):
                ref = np.maximum(np.maximum(np.abs(lv), np.abs(rv)), 1e-300)
                scale = np.maximum(ref, np.abs(self.scale) * 1e-3)
                worst = np.maximum(worst, np.abs(lv - rv) / scale)
        return worst


def _piece_eval(piece, x):
    val = sum(t.coef * np.exp(t.rate * (x - t.ref)) for t in piece)
    der = sum(t.coef * t.rate * np.exp(t.rate * (x - t.ref)) for t in piece)
    return val.real, der.real


@dataclass(frozen=True)
class ContinuumState:
    k: float
    energy: float
    basis: str
    tail_wavenumber: float
    theta: float
    C: float
    D: float
    F: float
    kappa: float
    function: PiecewiseFunction = field(repr=False)
    residual: float = 0.0

    @classmethod
    def from_basis(cls, basis: ContinuumBasis, i: int):
        pot = basis.potential
        tag = "step" if pot.is_step_well else "barrier"
        if len(pot.segments) > 1:
            d, f = basis.segment_coefficients(1)
            d, f = float(np.ravel(d)[i]), float(np.ravel(f)[i])
            lam = np.ravel(basis.rates[1])[i]
            kappa = float(lam.real) if abs(lam.imag) < abs(lam.real) else float(lam.imag)
        else:
            d = f = kappa = float("nan")
        return cls(
            k=float(np.ravel(basis.k)[i]),
            energy=float(np.ravel(basis.energy)[i]),
            basis=tag,
            tail_wavenumber=float(np.ravel(basis.tail_wavenumber)[i]),
            theta=float(np.ravel(basis.theta)[i]),
            C=float(np.ravel(basis.well_amplitude)[i]),
            D=d, F=f, kappa=kappa,
            function=basis.function.take(i) if basis.k.ndim else basis.function,
            residual=float(np.ravel(basis.matching_residuals())[i]),
        )

    @property
    def q(self):
        return self.tail_wavenumber

    def __call__(self, x):
        return self.function(x)

    def derivative(self, x):
        return self.function.derivative(x)


def continuum_state(pot: PiecewisePotential, k: float) -> ContinuumState:
    """Single delta-normalized scattering state of energy k**2/2."""
    basis = ContinuumBasis(pot, np.array([float(k)]))
    return ContinuumState.from_basis(basis, 0)


def eval_state(state, x):
    return state.function(x)


def eval_state_deriv(state, x):
    return state.function.derivative(x)
