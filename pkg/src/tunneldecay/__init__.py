"""Decay of a particle tunneling out of a square well through a rectangular barrier."""

__version__ = "0.1.0"

from .eigensolve import (BoundState, ContinuumBasis, ContinuumState, PiecewisePotential,
                         barrier_edge_for_opacity, continuum_state, eval_state,
                         eval_state_deriv, make_barrier, make_step_well, solve_bound_states)
from .errors import *  # noqa: F401,F403
from .evolve import (Evolution, KGrid, WaveSample, build_k_grid, closing_evolution,
                     evolve_closed, open_evolution, set_threads, wavefunction)
from .observables import (TraceSeries, density, flux, local_velocity, outside_probability,
                          total_norm, well_probability)
from .spectral import (GridConfig, InitialState, SpectralDecomposition, make_initial_state,
                       overlap, project_closed, project_open)
