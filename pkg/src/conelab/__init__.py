"""conelab: a desk-scale laboratory for optimal Bayesian tensor inference
and its Hamilton-Jacobi limit on the PSD cone.

Layers, bottom up: `symcone` (symmetric-matrix algebra and the cone),
`nonlinearity` (the HJ nonlinearity and its probes), `model` (finite-N
model with exact Gibbs posteriors), `quenched` (disorder averaging and the
initial condition psi), `variational` (Hopf / Hopf-Lax formulas),
`characteristics` (short-time smooth solution), and `lab` (the CLI study
runner).
"""

__version__ = "0.1.0"

from . import characteristics, errors, model, nonlinearity, quenched, symcone, variational

__all__ = [
    "__version__",
    "characteristics",
    "errors",
    "model",
    "nonlinearity",
    "quenched",
    "symcone",
    "variational",
]
