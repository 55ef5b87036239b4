"""Coupling laboratory for heavy-tailed jump-driven SDEs.

Modules
-------
levy_model
    Stable attractors, modulated drivers, radial tails/inverses, the
    normalizing scale g.
couplings
    Coupled jump-stream constructions: thinning, comonotonic, independent.
sde_engine
    Jump-adapted Euler integration of coupled SDE pairs.
bounds
    Closed-form coupling error bounds, rate functions, discrepancy integrals.
experiments
    Monte Carlo drivers, tail curves, rate fitting, serialization.
"""

__version__ = "0.1.0"

from . import levy_model  # noqa: F401
from . import couplings  # noqa: F401
from . import sde_engine  # noqa: F401
from . import bounds  # noqa: F401
from . import experiments  # noqa: F401
from . import cli  # noqa: F401
