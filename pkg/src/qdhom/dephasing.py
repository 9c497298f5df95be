"""Spectral-diffusion dephasing of a quantum-dot line under DC injection.

Fluctuating charge traps near the dot are filled at a capture rate set by
optical-phonon emission and emptied by acoustic-phonon absorption plus an
Auger channel that saturates with current. In the fast-modulation regime
the resulting Stark-shift noise gives a Lorentzian line with coherence time
``hbar**2 / (sigma**2 * tau_f)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .constants import HBAR_UEV_PS, KB_MEV_PER_K
from .errors import DomainError, UsageError


@dataclass(frozen=True)
class TrapModelParams:
    """Charge-trap environment of one emission line.

    Attributes
    ----------
    tau1, tau2, tau3 : float
        Acoustic-phonon, optical-phonon and Auger timescales (ps).
    e1, e2 : float
        Acoustic and optical phonon energies (meV).
    beta : float
        Exponent of the Auger saturation law.
    i0 : float
        Auger saturation current (µA).
    sigma_s : float
        Saturation modulation amplitude (µeV).
    temperature : float
        Lattice temperature (K).
    """

    tau1: float = 200.0
    tau2: float = 5.0
    tau3: float = 750.0
    e1: float = 1.0
    e2: float = 30.0
    beta: float = 2.0
    i0: float = 300.0
    sigma_s: float = 188.0
    temperature: float = 4.0

    def __post_init__(self):
        for name in ("tau1", "tau2", "tau3", "e1", "e2", "beta", "i0",
                     "sigma_s", "temperature"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")

    def with_values(self, **changes) -> "TrapModelParams":
        return replace(self, **changes)


LINE_A = TrapModelParams(tau3=750.0, i0=300.0, sigma_s=188.0)
LINE_B = TrapModelParams(tau3=550.0, i0=200.0, sigma_s=285.0)

PRESETS = {"line-A": LINE_A, "line-B": LINE_B}


@dataclass(frozen=True)
class CoherencePoint:
    current: float
    tau_down: float
    tau_up: float
    tau_f: float
    sigma: float
    tau_c: float
    narrowing_ratio: float


def bose_occupation(e: float, temperature: float) -> float:
    """Bose-Einstein occupation of a mode of energy ``e`` (meV) at ``temperature`` (K)."""
    if not e > 0:
        raise DomainError(f"phonon energy must be > 0, got {e!r}")
    if not temperature > 0:
        raise DomainError(f"temperature must be > 0, got {temperature!r}")
    x = e / (KB_MEV_PER_K * temperature)
    if x > 700.0:
        # expm1 overflows; the occupancy is exp(-x) to double precision
        return math.exp(-x)
    return 1.0 / math.expm1(x)


def capture_rate(params: TrapModelParams) -> float:
    """Trap capture rate 1/tau_down (ps⁻¹) via optical-phonon emission."""
    n2 = bose_occupation(params.e2, params.temperature)
    return (1.0 + n2) / params.tau2


def escape_rate(params: TrapModelParams, current: float) -> float:
    """Trap escape rate 1/tau_up (ps⁻¹) at injection ``current`` (µA)."""
    if not current >= 0:
        raise DomainError(f"current must be >= 0, got {current!r}")
    n1 = bose_occupation(params.e1, params.temperature)
    if math.isinf(current):
        auger = 1.0
    else:
        ib = current ** params.beta
        auger = ib / (ib + params.i0 ** params.beta)
    return n1 / params.tau1 + auger / params.tau3


def fluctuation_time(tau_up: float, tau_down: float) -> float:
    """Harmonic combination 1/tau_f = 1/tau_up + 1/tau_down (ps)."""
    if not (tau_up > 0 and tau_down > 0):
        raise DomainError("tau_up and tau_down must be > 0")
    return 1.0 / (1.0 / tau_up + 1.0 / tau_down)


def modulation_amplitude(sigma_s: float, tau_up: float, tau_down: float) -> float:
    """Effective energy-fluctuation amplitude (µeV), never above ``sigma_s``."""
    if not (sigma_s > 0 and tau_up > 0 and tau_down > 0):
        raise DomainError("sigma_s, tau_up and tau_down must be > 0")
    if math.isinf(tau_up) or math.isinf(tau_down):
        return 0.0
    r = math.sqrt(tau_up / tau_down)
    return 2.0 * sigma_s / (r + 1.0 / r)


def narrowing_ratio(sigma: float, tau_f: float) -> float:
    """sigma·tau_f/hbar; values well below 1 mean fast modulation."""
    if sigma < 0 or tau_f < 0:
        raise DomainError("sigma and tau_f must be >= 0")
    return sigma * tau_f / HBAR_UEV_PS


def coherence_time(params: TrapModelParams, current: float) -> CoherencePoint:
    """Evaluate the full dephasing chain at one injection current."""
    tau_down = 1.0 / capture_rate(params)
    tau_up = 1.0 / escape_rate(params, current)
    tau_f = fluctuation_time(tau_up, tau_down)
    sigma = modulation_amplitude(params.sigma_s, tau_up, tau_down)
    tau_c = HBAR_UEV_PS ** 2 / (sigma ** 2 * tau_f)
    return CoherencePoint(
        current=float(current),
        tau_down=tau_down,
        tau_up=tau_up,
        tau_f=tau_f,
        sigma=sigma,
        tau_c=tau_c,
        narrowing_ratio=narrowing_ratio(sigma, tau_f),
    )


def coherence_sweep(params: TrapModelParams,
                    currents: Sequence[float]) -> list[CoherencePoint]:
    currents = list(currents)
    if not currents:
        raise UsageError("current list is empty")
    return [coherence_time(params, i) for i in currents]


def linewidth_from_coherence(tau_c: float) -> float:
    """Lorentzian FWHM 2·hbar/tau_c in µeV."""
    if not tau_c > 0:
        raise DomainError(f"tau_c must be > 0, got {tau_c!r}")
    return 2.0 * HBAR_UEV_PS / tau_c


def michelson_visibility(delay, tau_c):
    """First-order fringe visibility exp(-|delay|/tau_c); accepts arrays."""
    if np.any(np.asarray(tau_c) <= 0):
        raise DomainError("tau_c must be > 0")
    return np.exp(-np.abs(delay) / tau_c)


def tau_c_curve(params: TrapModelParams, currents) -> np.ndarray:
    """Vectorized coherence time (ps) over an array of currents."""
    currents = np.asarray(currents, dtype=float)
    if np.any(currents < 0):
        raise DomainError("currents must be >= 0")
    n1 = bose_occupation(params.e1, params.temperature)
    down = capture_rate(params)
    ib = currents ** params.beta
    up = n1 / params.tau1 + ib / (ib + params.i0 ** params.beta) / params.tau3
    tau_f = 1.0 / (up + down)
    r = np.sqrt(down / up)
    sigma = 2.0 * params.sigma_s / (r + 1.0 / r)
    return HBAR_UEV_PS ** 2 / (sigma ** 2 * tau_f)
