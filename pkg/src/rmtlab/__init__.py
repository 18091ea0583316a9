"""Exact and Monte Carlo tools for the invertibility of random 0/1 matrices.

Submodules:

* ``rng``: counter-based reproducible random streams
* ``model``: weight models, densities, configuration
* ``sampling``: Bernoulli, slice and admissible-set samplers
* ``linalg``: exact rank, kernels, exhaustive singularity oracles
* ``anticoncentration``: Levy concentration, threshold function, LKR bound
* ``structured``: almost-constant vectors and their decomposition
* ``smoothing``: admissible sets, slice averages, step records
* ``rounding``: randomized lattice rounding
* ``experiments``: campaigns and reports; ``cli``: command line
"""

from .model import (BudgetExceeded, Config, ConstantsConfig, DiscreteDensity, IidBernoulli,
                    ParameterError, Slice, SliceWindow)
from .rng import RandomSource, derive_seed, derive_stream

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded", "Config", "ConstantsConfig", "DiscreteDensity", "IidBernoulli",
    "ParameterError", "Slice", "SliceWindow", "RandomSource", "derive_seed", "derive_stream",
]
