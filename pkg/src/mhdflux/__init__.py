"""Ensemble-averaged enstrophy-flux diagnostics for periodic incompressible MHD.

Submodules: grid (fields/operators), solver (pseudo-spectral MHD), cutoffs
(refined test functions), ensembles (scale covers), fluxes (flux identities
and the concentration check), assumptions (hypothesis estimators), snapshots
and config (persistence), cli (pipeline).
"""

__version__ = "0.1.0"
