"""Riccati systems and equilibrium analysis for many-player network games.

The package solves the coupled quadratic ODE systems behind closed-loop
linear-quadratic Nash equilibria, in three regimes: shift-invariant games
on a cycle or an infinite directed chain (plus their generating-function
solutions, decay certificates, and long-time limits), general per-player
cost families, and the mean-field-like scaling where a-priori envelopes
are checked against the measured solution.  A Monte Carlo layer estimates
near-equilibrium gaps by paired simulation, and :mod:`riccati_nash.cli`
exposes the whole thing as a command-line tool.
"""

from .core import (
    CoefficientFlow,
    CostStencil,
    GameSpec,
    build_game,
    expand_shift_invariant,
)
from .errors import (
    CertificationError,
    ConfigError,
    NumericalError,
    RiccatiNashError,
)
from .genfun import ContourPlan, SymbolPair, build_symbol, certify_symbol
from .riccati import (
    DecayCertificate,
    certify_decay,
    integrate_backward,
    picard_solve,
    refine_backward,
)
from .seqtools import (
    DecaySequence,
    certify_self_controlled,
    make_exponential_fourier_seq,
)

__version__ = "0.1.0"

__all__ = [
    "CertificationError",
    "CoefficientFlow",
    "ConfigError",
    "ContourPlan",
    "CostStencil",
    "DecayCertificate",
    "DecaySequence",
    "GameSpec",
    "NumericalError",
    "RiccatiNashError",
    "SymbolPair",
    "build_game",
    "build_symbol",
    "certify_decay",
    "certify_self_controlled",
    "certify_symbol",
    "expand_shift_invariant",
    "integrate_backward",
    "make_exponential_fourier_seq",
    "picard_solve",
    "refine_backward",
    "__version__",
]
