"""Fidelity freeze and revival simulations for two-level bosonic systems
with random k-body couplings.

Subpackages build the occupation-number operator algebra (:mod:`bfl.fock`),
sample and embed random coupling tables (:mod:`bfl.ensemble`), propagate
states exactly and measure fidelity (:mod:`bfl.dynamics`), and orchestrate
reproducible ensemble averages and observable extraction
(:mod:`bfl.experiments`).  ``bfl.cli`` provides the command-line front end.
"""

__version__ = "0.1.0"

from bfl.fock import FockSpace, MonomialSpec, monomial_matrix, normalization

__all__ = [
    "__version__",
    "FockSpace",
    "MonomialSpec",
    "monomial_matrix",
    "normalization",
]
