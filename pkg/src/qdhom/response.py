"""Finite detection-system response and its effect on measured correlations."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .constants import FWHM_PER_SIGMA
from .correlations import InterferometerSpec, SourceSpec, g2_parallel, g2_perp
from .errors import ResolutionError, UndefinedPointError, UsageError

DEFAULT_STEP = 5.0
DEFAULT_HALF_RANGE = 25_000.0
DEFAULT_TRUNCATION = 6.0

_STEP_RTOL = 1e-9


@dataclass(frozen=True)
class SampledCurve:
    """Values on the uniform grid ``t_start + k*step``."""

    t_start: float
    step: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if not self.step > 0:
            raise UsageError("step must be > 0")
        if values.ndim != 1 or values.size < 2:
            raise UsageError("a sampled curve needs at least two values")
        if not np.all(np.isfinite(values)):
            raise UsageError("sampled curve contains non-finite values")

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.step * np.arange(self.values.size)

    def __len__(self):
        return self.values.size

    def at(self, t):
        """Linear interpolation; holds the edge values outside the grid."""
        return np.interp(t, self.times, self.values)

    @classmethod
    def from_function(cls, func: Callable, half_range: float = DEFAULT_HALF_RANGE,
                      step: float = DEFAULT_STEP) -> "SampledCurve":
        n = int(round(half_range / step))
        times = step * np.arange(-n, n + 1)
        return cls(float(times[0]), step, func(times))


@dataclass(frozen=True)
class ResponseKernel:
    """Normalized response weights at times ``offset + k*grid_step``.

    ``offset`` is always an integer multiple of ``grid_step``.
    """

    grid_step: float
    weights: np.ndarray = field(repr=False)
    offset: float
    fwhm: Optional[float] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0):
            raise UsageError("kernel weights must be a non-empty non-negative vector")
        if not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise UsageError("kernel weights must sum to 1")
        k0 = self.offset / self.grid_step
        if abs(k0 - round(k0)) > 1e-6:
            raise UsageError("kernel offset must lie on its grid")

    @property
    def first_index(self) -> int:
        return int(round(self.offset / self.grid_step))

    @property
    def times(self) -> np.ndarray:
        return self.grid_step * (self.first_index + np.arange(self.weights.size))

    @property
    def mean(self) -> float:
        return float(np.dot(self.times, self.weights))

    @property
    def support(self) -> float:
        t = self.times
        return float(max(abs(t[0]), abs(t[-1])))


def sigma_from_fwhm(fwhm: float) -> float:
    return fwhm / FWHM_PER_SIGMA


def per_detector_jitter(fwhm: float) -> float:
    """Gaussian jitter of one detector whose pair response has the given FWHM."""
    return sigma_from_fwhm(fwhm) / math.sqrt(2.0)


def gaussian_kernel(fwhm: float, step: float = DEFAULT_STEP,
                    truncation_sigmas: float = DEFAULT_TRUNCATION) -> ResponseKernel:
    """Zero-mean Gaussian response of the given FWHM, truncated and renormalized."""
    if not fwhm > 0:
        raise UsageError(f"fwhm must be > 0, got {fwhm!r}")
    if not step > 0:
        raise UsageError(f"step must be > 0, got {step!r}")
    if truncation_sigmas < 4:
        raise UsageError("truncation must be at least 4 sigma")
    sigma = sigma_from_fwhm(fwhm)
    if step > sigma:
        raise ResolutionError(
            f"grid step {step} ps exceeds kernel sigma {sigma:.3f} ps; kernel undersampled")
    n = int(math.ceil(truncation_sigmas * sigma / step))
    t = step * np.arange(-n, n + 1)
    w = np.exp(-0.5 * (t / sigma) ** 2)
    w /= w.sum()
    return ResponseKernel(step, w, float(t[0]), fwhm)


def load_tabulated_response(samples: Sequence[tuple[float, float]],
                            step: float = DEFAULT_STEP) -> ResponseKernel:
    """Resample a measured (time, weight) response onto the working grid.

    The response may be asymmetric or off-centre; it is linearly
    interpolated, zero outside the tabulated span, and renormalized.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise UsageError("response samples must be (time, weight) pairs")
    if arr.shape[0] < 8:
        raise UsageError(f"need at least 8 response samples, got {arr.shape[0]}")
    order = np.argsort(arr[:, 0], kind="stable")
    t, w = arr[order, 0], arr[order, 1]
    if np.any(w < 0) or not np.all(np.isfinite(arr)):
        raise UsageError("response weights must be finite and non-negative")
    if not np.any(w > 0):
        raise UsageError("response weights are all zero")
    k_lo = int(math.floor(t[0] / step + 1e-9))
    k_hi = int(math.ceil(t[-1] / step - 1e-9))
    grid = step * np.arange(k_lo, k_hi + 1)
    wg = np.interp(grid, t, w, left=0.0, right=0.0)
    if not wg.sum() > 0:
        raise ResolutionError("response is narrower than the working grid step")
    wg /= wg.sum()
    return ResponseKernel(step, wg, float(grid[0]), None)


def convolve(curve: SampledCurve, kernel: ResponseKernel) -> SampledCurve:
    """Forward-convolve a trace with a response kernel.

    Beyond its ends the trace is continued with its edge values, so a
    plateau survives the convolution unchanged.
    """
    if not math.isclose(curve.step, kernel.grid_step, rel_tol=_STEP_RTOL):
        raise UsageError(
            f"grid mismatch: curve step {curve.step} vs kernel step {kernel.grid_step}")
    f = curve.values
    w = kernel.weights
    k0 = kernel.first_index
    pad = w.size + abs(k0)
    full = fftconvolve(np.pad(f, pad, mode="edge"), w)
    start = pad - k0
    out = full[start:start + f.size]
    return replace(curve, values=out)


def convolve_at(func: Callable, tau: float, kernel: ResponseKernel) -> float:
    """Value of (func ⊗ kernel) at a single delay."""
    return float(np.dot(kernel.weights, func(tau - kernel.times)))


def v_hom_measured(source: SourceSpec, interf: InterferometerSpec,
                   kernel: ResponseKernel, tau: float = 0.0) -> float:
    """Post-selected visibility after smearing both traces with ``kernel``."""
    perp = convolve_at(lambda t: g2_perp(t, source, interf), tau, kernel)
    par = convolve_at(lambda t: g2_parallel(t, source, interf), tau, kernel)
    if perp < 1e-9:
        raise UndefinedPointError("convolved g2_perp below 1e-9; visibility undefined")
    return (perp - par) / perp


def kernel_step_for(fwhm: float, step: float = DEFAULT_STEP) -> float:
    """Largest step not above ``step`` that still resolves a Gaussian of this FWHM.

    Steps are refined by powers of two so that coarse and fine grids nest.
    """
    sigma = sigma_from_fwhm(fwhm)
    while step > sigma / 2.0:
        step /= 2.0
    return step


def visibility_map(fwhm_range: Sequence[float], tau_c_range: Sequence[float],
                   source_template: SourceSpec, interf: InterferometerSpec,
                   step: float = DEFAULT_STEP,
                   truncation_sigmas: float = DEFAULT_TRUNCATION,
                   workers: int = 1) -> np.ndarray:
    """V_HOM at zero delay on a (detector FWHM × coherence time) grid.

    Rows follow ``fwhm_range``, columns ``tau_c_range``. Narrow responses
    are evaluated on a refined grid so every cell is resolved.
    """
    fwhms = [float(x) for x in fwhm_range]
    tcs = [float(x) for x in tau_c_range]
    if not fwhms or not tcs:
        raise UsageError("visibility map needs non-empty ranges")
    if min(fwhms) <= 0 or min(tcs) <= 0:
        raise UsageError("visibility map ranges must be positive")

    def row(fwhm):
        kernel = gaussian_kernel(fwhm, kernel_step_for(fwhm, step), truncation_sigmas)
        return [v_hom_measured(replace(source_template, tau_c=tc), interf, kernel)
                for tc in tcs]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, fwhms))
    else:
        rows = [row(f) for f in fwhms]
    return np.array(rows, dtype=float)
