"""Spectral learning of discrete POMDP models from a single trajectory.

The package builds Hankel matrices of observation-sequence probabilities,
extracts a predictive-state representation by rank-truncated SVD, and turns
the PSR parameters back into explicit transition and observation matrices by
joint diagonalization of the action-marginal operators. Planning on learned
models uses PO-UCT, and an action-conditioned Baum-Welch implementation
serves as the likelihood baseline.
"""

from spectral_pomdp._kernels import BACKEND
from spectral_pomdp.model import DiscretePomdp, Trajectory

__version__ = "0.1.0"

__all__ = ["DiscretePomdp", "Trajectory", "BACKEND", "__version__"]
