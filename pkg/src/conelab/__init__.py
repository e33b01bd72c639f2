"""Square functionals, tent-space norms and analytic probes on finite weighted graphs."""
from .manifold import DiscreteManifold, build_model
from .spectral import PotentialSplit, SpectralOperator, assemble, calculus

__all__ = ["DiscreteManifold", "build_model", "PotentialSplit", "SpectralOperator", "assemble",
           "calculus"]
__version__ = "0.1.0"
