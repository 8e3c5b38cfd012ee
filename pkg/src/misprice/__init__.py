"""Explore-then-exploit pricing dynamics under misspecified demand.

Submodules:
    market    linear demand primitives and Nash/monopoly benchmarks
    moments   misspecified per-firm OLS fits and the posted-price map
    simulate  finite-horizon stochastic explore-then-exploit pipeline
    ode       deterministic fluid-limit dynamics of the price moments
    cones     best-response cone geometry and exploration priors
    logit     calibrated heterogeneous-logit market extension
    sweeps    experiment harness behind the ``misprice`` CLI

Hot kernels live in a compiled extension with a pure-Python fallback;
``misprice.BACKEND`` reports which one is active.
"""

from .backend import BACKEND
from .market import MarketParams

__version__ = "0.1.0"

__all__ = ["BACKEND", "MarketParams", "__version__"]
