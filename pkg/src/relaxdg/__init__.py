"""Model-adaptive RKDG solver for 1D hyperbolic balance laws with stiff
reaction terms.

The package couples a complex balance-law model (reacting mixture) with a
simple equilibrium conservation-law model and switches between them per
cell, steered by relative-entropy a posteriori indicators.
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
