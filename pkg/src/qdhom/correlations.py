"""Ideal second-order correlations for HBT and delayed Mach-Zehnder set-ups.

All functions accept scalar or array delays ``tau`` in ps and return the same
shape. Detector response is not included here; see :mod:`qdhom.response`.

Delay sign convention: ``tau = t(D2) - t(D1)``.  A photon crossing the short
arm reaches D1 with probability ``t2``; a photon from the long arm reaches
D1 with probability ``r2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UndefinedPointError

_COUPLER_TOL = 1e-9


@dataclass(frozen=True)
class SourceSpec:
    tau_r: float = 800.0
    tau_c: float = 325.0
    g2_zero: float = 0.0

    def __post_init__(self):
        if not self.tau_r > 0:
            raise DomainError(f"tau_r must be > 0, got {self.tau_r!r}")
        if not self.tau_c > 0:
            raise DomainError(f"tau_c must be > 0, got {self.tau_c!r}")
        if not 0.0 <= self.g2_zero < 1.0:
            raise DomainError(f"g2_zero must lie in [0, 1), got {self.g2_zero!r}")


@dataclass(frozen=True)
class InterferometerSpec:
    """Two lossless fibre couplers with a delay line in one arm.

    ``r1``/``t1`` split the stream at the first coupler (``r1`` is the
    probability of entering the delayed arm), ``r2``/``t2`` are the intensity
    coefficients of the final coupler, ``delta_tau2`` is the arm delay in ps
    and ``overlap_v`` the wavefunction overlap of interfering photons.
    """

    r1: float = 0.5
    t1: float = 0.5
    r2: float = 0.5
    t2: float = 0.5
    delta_tau2: float = 10_000.0
    overlap_v: float = 1.0

    def __post_init__(self):
        for name in ("r1", "t1", "r2", "t2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
        if abs(self.r1 + self.t1 - 1.0) > _COUPLER_TOL:
            raise DomainError("first coupler must satisfy r1 + t1 = 1")
        if abs(self.r2 + self.t2 - 1.0) > _COUPLER_TOL:
            raise DomainError("final coupler must satisfy r2 + t2 = 1")
        if not self.delta_tau2 >= 0:
            raise DomainError("delta_tau2 must be >= 0")
        if not 0.0 <= self.overlap_v <= 1.0:
            raise DomainError(f"overlap_v must lie in [0, 1], got {self.overlap_v!r}")

    @classmethod
    def balanced(cls, delta_tau2: float = 10_000.0, overlap_v: float = 1.0):
        return cls(0.5, 0.5, 0.5, 0.5, delta_tau2, overlap_v)

    def separation_ok(self, tau_c: float) -> bool:
        """True if the arm delay is at least ten coherence times."""
        return self.delta_tau2 >= 10.0 * tau_c

    def check_separation(self, tau_c: float) -> bool:
        ok = self.separation_ok(tau_c)
        if not ok:
            warnings.warn(
                f"arm delay {self.delta_tau2} ps is below 10*tau_c = {10 * tau_c} ps; "
                "interference windows of neighbouring features overlap",
                stacklevel=2,
            )
        return ok


def g2_source(tau, source: SourceSpec):
    """Antibunched source correlation 1 - (1 - g2(0))·exp(-|tau|/tau_r)."""
    tau = np.asarray(tau, dtype=float)
    return 1.0 - (1.0 - source.g2_zero) * np.exp(-np.abs(tau) / source.tau_r)


def _central_and_delayed(tau, source, interf):
    tau = np.asarray(tau, dtype=float)
    r1, t1, r2, t2 = interf.r1, interf.t1, interf.r2, interf.t2
    central = 4.0 * (t1 ** 2 + r1 ** 2) * r2 * t2 * g2_source(tau, source)
    delayed = 4.0 * r1 * t1 * (
        t2 ** 2 * g2_source(tau - interf.delta_tau2, source)
        + r2 ** 2 * g2_source(tau + interf.delta_tau2, source)
    )
    return central, delayed


def g2_perp(tau, source: SourceSpec, interf: InterferometerSpec):
    """Cross-detector correlation for orthogonally polarized arms."""
    central, delayed = _central_and_delayed(tau, source, interf)
    return central + delayed


def interference_factor(tau, tau_c: float, overlap_v: float):
    """1 - V·exp(-2|tau|/tau_c)."""
    return 1.0 - overlap_v * np.exp(-2.0 * np.abs(np.asarray(tau, dtype=float)) / tau_c)


def g2_parallel(tau, source: SourceSpec, interf: InterferometerSpec):
    """Cross-detector correlation for parallel polarizations.

    The two-photon interference factor suppresses only the pairs that
    crossed opposite arms; the same-arm (antibunching) term is untouched.
    """
    central, delayed = _central_and_delayed(tau, source, interf)
    return central + delayed * interference_factor(tau, source.tau_c, interf.overlap_v)


def v_hom_ideal(tau, source: SourceSpec, interf: InterferometerSpec):
    """Post-selected visibility (g_perp - g_par)/g_perp without detector limits."""
    perp = g2_perp(tau, source, interf)
    if np.any(perp == 0.0):
        raise UndefinedPointError("g2_perp vanishes; visibility undefined at this delay")
    return (perp - g2_parallel(tau, source, interf)) / perp


def asymptotic_level(interf: InterferometerSpec) -> float:
    """Long-delay limit of g2_perp and g2_parallel (1 for balanced couplers)."""
    r1, t1, r2, t2 = interf.r1, interf.t1, interf.r2, interf.t2
    return 4.0 * r2 * t2 * (t1 ** 2 + r1 ** 2) + 4.0 * r1 * t1 * (r2 ** 2 + t2 ** 2)


def is_balanced(interf: InterferometerSpec) -> bool:
    return all(math.isclose(x, 0.5) for x in (interf.r1, interf.t1, interf.r2, interf.t2))
