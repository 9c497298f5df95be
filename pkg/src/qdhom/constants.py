"""Physical constants in the units used throughout the package.

Times are in ps, energies in µeV (meV for phonon energies), currents in µA.
"""

HBAR_UEV_PS = 658.2120
"""Reduced Planck constant in µeV·ps."""

KB_MEV_PER_K = 0.0861733
"""Boltzmann constant in meV/K."""

FWHM_PER_SIGMA = 2.3548200450309493
"""2·sqrt(2·ln 2)."""
