"""Piecewise-analytic real functions on the half line x >= 0.

Every piece is a finite sum of complex exponentials ``c * exp(lam * (x - ref))``.
Trigonometric pieces use conjugate pairs, so the represented function is real.
Coefficients and rates may be numpy arrays; all operations broadcast over
that batch shape, which is how a whole family of eigenstates (one per
wavenumber) is carried around and integrated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DivergentIntegralError, InvalidParameterError


@dataclass(frozen=True)
class Term:
    coef: np.ndarray | complex
    rate: np.ndarray | complex
    ref: float = 0.0


def sine_terms(amplitude, k, phase=0.0, ref=0.0):
    """Terms of ``amplitude * sin(k * (x - ref) + phase)``."""
    a = np.asarray(amplitude) / 2j
    e = np.exp(1j * np.asarray(phase))
    k = np.asarray(k, dtype=complex)
    return (Term(a * e, 1j * k, ref), Term(-a / e, -1j * k, ref))


def exp_terms(amplitude, rate, ref=0.0):
    """Single term ``amplitude * exp(rate * (x - ref))``."""
    return (Term(np.asarray(amplitude, dtype=complex), np.asarray(rate, dtype=complex), ref),)


def _exprel(z):
    """(exp(z) - 1) / z, stable near z = 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-6
    safe = np.where(small, 1.0, z)
    out = np.expm1(safe) / safe
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, out)


def _pair_integral(tf: Term, tg: Term, lo: float, hi: float):
    """Integral of one term product over [lo, hi]; ``hi`` may be inf."""
    s = np.asarray(tf.rate + tg.rate, dtype=complex)
    e_lo = tf.rate * (lo - tf.ref) + tg.rate * (lo - tg.ref)
    if np.isinf(hi):
        weight = tf.coef * tg.coef
        bad = (s.real >= 0.0) & (np.abs(weight) != 0.0)
        if np.any(bad):
            raise DivergentIntegralError(
                "product of tails does not decay on [%g, inf)" % lo)
        s_safe = np.where(s.real < 0.0, s, -1.0)
        return np.where(s.real < 0.0, -np.exp(e_lo) / s_safe, 0.0)
    length = hi - lo
    e_hi = e_lo + s * length
    # integrate away from the larger endpoint to keep exponents <= 0
    with np.errstate(over="ignore", invalid="ignore"):
        forward = np.exp(e_lo) * length * _exprel(s * length)
        backward = np.exp(e_hi) * length * _exprel(-s * length)
    return np.where(s.real > 0.0, backward, forward)


class PiecewiseFunction:
    """Real function given by exponential-sum pieces between ``edges``.

    ``edges = (0, b1, ..., bm)``; piece ``i`` covers ``[edges[i], edges[i+1]]``
    and the last piece extends to infinity. An empty piece is identically zero.
    """

    def __init__(self, edges: Sequence[float], pieces: Sequence[Sequence[Term]]):
        edges = tuple(float(e) for e in edges)
        if len(pieces) != len(edges):
            raise InvalidParameterError("need one piece per edge")
        if edges[0] != 0.0 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise InvalidParameterError("edges must start at 0 and increase")
        self.edges = edges
        self.pieces = tuple(tuple(p) for p in pieces)

    @property
    def batch_shape(self):
        shapes = [np.shape(t.coef) for p in self.pieces for t in p]
        shapes += [np.shape(t.rate) for p in self.pieces for t in p]
        return np.broadcast_shapes(*shapes) if shapes else ()

    def piece_index(self, x):
        return np.searchsorted(self.edges, x, side="right") - 1

    def evaluate(self, x, derivative=False):
        """Values (or first derivatives) at ``x``; shape ``batch + shape(x)``."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0.0):
            raise InvalidParameterError("x < 0 lies behind the hard wall")
        batch = self.batch_shape
        out = np.zeros(batch + x.shape, dtype=complex)
        idx = self.piece_index(x)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if not piece or not np.any(mask):
                continue
            xs = x[mask]
            acc = np.zeros(batch + xs.shape, dtype=complex)
            for t in piece:
                c = np.reshape(t.coef, np.shape(t.coef) + (1,) * xs.ndim)
                r = np.reshape(t.rate, np.shape(t.rate) + (1,) * xs.ndim)
                term = c * np.exp(r * (xs - t.ref))
                acc = acc + (term * r if derivative else term)
            out[..., mask] = acc
        return out.real

    __call__ = evaluate

    def derivative(self, x):
        return self.evaluate(x, derivative=True)

    def scaled(self, factor):
        factor = np.asarray(factor)
        pieces = [[Term(t.coef * factor, t.rate, t.ref) for t in p] for p in self.pieces]
        return PiecewiseFunction(self.edges, pieces)

    def take(self, index):
        """Select one member of a batched family."""
        def pick(v):
            return np.asarray(v)[index] if np.ndim(v) else v
        pieces = [[Term(pick(t.coef), pick(t.rate), t.ref) for t in p] for p in self.pieces]
        return PiecewiseFunction(self.edges, pieces)

    def refined(self, edges):
        """Same function on a finer edge list (must contain ``self.edges``)."""
        edges = tuple(sorted(set(float(e) for e in edges) | set(self.edges)))
        pieces = [self.pieces[self.piece_index(e)] for e in edges]
        return PiecewiseFunction(edges, pieces)


def overlap(f: PiecewiseFunction, g: PiecewiseFunction):
    """Exact integral of ``f * g`` over [0, inf), broadcast over batch shapes."""
    edges = sorted(set(f.edges) | set(g.edges))
    bounds = list(zip(edges, edges[1:] + [np.inf]))
    total = 0.0
    for lo, hi in bounds:
        probe = lo if np.isinf(hi) else 0.5 * (lo + hi)
        pf = f.pieces[f.piece_index(probe)]
        pg = g.pieces[g.piece_index(probe)]
        for tf in pf:
            for tg in pg:
                total = total + tf.coef * tg.coef * _pair_integral(tf, tg, lo, hi)
    return np.real(total)
