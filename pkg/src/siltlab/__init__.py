"""siltlab: numerical laboratory for derivatives of self-intersection local
time of d-dimensional Brownian motion.

Modules
-------
kernel      Gaussian kernel, Hermite-based derivatives, Gaussian means.
constants   beta / phi / sigma^2 chaos constants, regimes, renormalizers.
variance    exact pre-limit variance quadrature and limit extrapolation.
simulation  Brownian paths, the mollified functional, reduced statistics.
stats       moment summaries, normality verdicts, scaling-exponent fits.
cli         experiment orchestration and the acceptance suite runner.
"""

from .kernel import MultiIndex

__all__ = ["MultiIndex"]
__version__ = "0.1.0"
