"""Close the barrier at time t0 and watch the escaped fraction grow.

Short closing times give a quadratic law, later ones a linear law.
"""

import math

import numpy as np

from tunneldecay import make_barrier, make_initial_state, make_step_well, project_open
from tunneldecay.analysis import escaped_fraction, loglog_slope

U1 = make_step_well(16.0, 1.0)
psi0 = make_initial_state("bound_ground", U1)
decomp = project_open(psi0, make_barrier(16.0, 1.0, 1.4))
t_pl = math.pi / (2.0 * psi0.energy)

t0 = np.geomspace(t_pl / 16, 4.0, 12)
frac = [escaped_fraction(decomp, x) for x in t0]
for a, b in zip(t0, frac):
    print("t0 = %8.4f  escaped = %.3e" % (a, b))
print("slope early %.2f, late %.2f" % (loglog_slope(t0[:4], frac[:4]),
                                       loglog_slope(t0[-4:], frac[-4:])))
