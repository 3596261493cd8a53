"""Dissipative three-level qutrit simulator with no-jump postselection.

Library layout:

- qcore        small dense complex linear algebra, states, seeds
- dynamics     Lindblad integration, non-Hermitian propagation, jump sampling
- spectral     PT-regime classification, exceptional point, first passage time
- measurement  confusion-matrix readout, iterative Bayesian update, tomography
- linearity    purification, superposition overlap metric, mixture tests
- cli          experiment runner writing CSV tables and figures
"""

__version__ = "0.1.0"
