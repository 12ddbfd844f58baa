"""Photoluminescence sidebands and defect energetics from first-principles data.

Submodules: model (shared types), phonons (Hessian -> modes), vibronic
(coupling and lineshapes), fcoracle (brute-force validation ladder),
energetics (formation/transition/dissociation energies), io (documents and
tables), cli (command-line front end).

Kept import-light on purpose: the CLI pins BLAS thread counts before
numpy loads, so nothing heavy may be imported here.
"""

__version__ = "0.1.0"
