"""Composite Gauss-Legendre rules on panel lists."""

import numpy as np

GL_ORDER = 16
_X, _W = np.polynomial.legendre.leggauss(GL_ORDER)
# largest gap between neighbouring nodes (or node and panel edge), unit panel
GL_MAX_GAP = float(np.max(np.diff(np.concatenate([[-1.0], _X, [1.0]])))) / 2.0


def gauss_panels(panels):
    """Nodes and weights of GL-16 on every ``(lo, hi)`` row of ``panels``."""
    panels = np.asarray(panels, dtype=float).reshape(-1, 2)
    half = 0.5 * (panels[:, 1] - panels[:, 0])
    mid = 0.5 * (panels[:, 1] + panels[:, 0])
    nodes = (half[:, None] * _X + mid[:, None]).ravel()
    weights = (half[:, None] * _W).ravel()
    return nodes, weights


def max_node_gap(panels):
    """Largest node spacing inside each panel."""
    panels = np.asarray(panels, dtype=float).reshape(-1, 2)
    return GL_MAX_GAP * (panels[:, 1] - panels[:, 0])


def gauss_interval(lo, hi, n_panels):
    e = np.linspace(lo, hi, n_panels + 1)
    return gauss_panels(np.column_stack([e[:-1], e[1:]]))
