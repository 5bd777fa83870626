"""Continual learning for variational Bayesian classifiers.

Thin re-export of the compiled extension; see the project README for the
config keys accepted by run().
"""

from ._eclrr import (
    __version__,
    gate_decision,
    kl_diag_gauss,
    metrics,
    revised_reg,
    run,
)

__all__ = [
    "__version__",
    "gate_decision",
    "kl_diag_gauss",
    "metrics",
    "revised_reg",
    "run",
]
