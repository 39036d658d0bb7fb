"""Ground state of a U0 = 16 well leaking through a barrier of width 0.4.

Prints the bound spectrum, the resonance of the open spectrum, the survival
probability at a few times and the lifetime read from the survival trace.
"""

import numpy as np

from tunneldecay import (make_barrier, make_initial_state, make_step_well, open_evolution,
                         project_open, well_probability)
from tunneldecay.analysis import lifetime
from tunneldecay.observables import TraceSeries

U1, U2 = make_step_well(16.0, 1.0), make_barrier(16.0, 1.0, 1.4)
psi0 = make_initial_state("bound_ground", U1)
print("E0 = %.5f" % psi0.energy)

decomp = project_open(psi0, U2)
res = decomp.resonances[0]
print("resonance k = %.4f, fwhm = %.2e, completeness defect %.1e"
      % (res["k"], res["fwhm"], decomp.completeness_defect))

ev = open_evolution(decomp, 1.4, 60.0)
t = np.arange(0.0, 60.0 + 1e-9, 0.05)
w1 = well_probability(ev, t)
for tc in (0.0, 5.0, 20.0, 40.0, 60.0):
    i = int(round(tc / 0.05))
    print("t = %5.1f  w1/w1(0) = %.5f" % (tc, w1[i] / w1[0]))

t_l, method = lifetime(TraceSeries("w1", "well", t, w1))
print("lifetime %.3f (%s)" % (t_l, method))
