"""Parameter estimation from measured or synthetic series.

Three fits are offered: trap-model parameters from coherence time versus
current, coherence time from first-order visibility decay, and lifetime and
residual g2(0) from a jitter-broadened HBT histogram. Multi-parameter fits
use bounded Nelder-Mead with deterministic jittered restarts.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, fields
from typing import Callable, Mapping, Optional, Union

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .correlations import SourceSpec, g2_source
from .dephasing import LINE_A, TrapModelParams, tau_c_curve
from .errors import DomainError, UsageError
from .montecarlo import CoincidenceHistogram
from .response import ResponseKernel, SampledCurve, convolve

log = logging.getLogger(__name__)

MAX_EVALUATIONS = 20_000
DEFAULT_RESTARTS = 8

COHERENCE_BOUNDS = {
    "tau3": (50.0, 5000.0, 500.0),
    "i0": (10.0, 2000.0, 250.0),
    "sigma_s": (10.0, 2000.0, 200.0),
}
HBT_BOUNDS = {
    "tau_r": (10.0, 20_000.0, 500.0),
    "g2_zero": (0.0, 0.99, 0.1),
}


@dataclass
class MeasuredSeries:
    x: np.ndarray
    y: np.ndarray
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise UsageError("x and y must be 1-D sequences of equal length")
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if self.sigma.shape != self.x.shape:
                raise UsageError("sigma must match x and y in length")
            if np.any(self.sigma <= 0):
                raise UsageError("sigma must be positive")

    def __len__(self):
        return self.x.size

    @property
    def weights(self) -> np.ndarray:
        if self.sigma is None:
            return np.ones_like(self.y)
        return 1.0 / self.sigma


@dataclass
class FitSpec:
    """Free parameters as ``name -> (lower, upper, initial)`` plus fixed values."""

    free: dict = field(default_factory=dict)
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        self.free = {k: tuple(float(x) for x in v) for k, v in self.free.items()}
        self.fixed = {k: float(v) for k, v in self.fixed.items()}
        overlap = set(self.free) & set(self.fixed)
        if overlap:
            raise UsageError(f"parameters both free and fixed: {sorted(overlap)}")
        if not self.free:
            raise UsageError("fit needs at least one free parameter")
        for name, (lo, hi, init) in self.free.items():
            if not lo < hi:
                raise UsageError(f"bounds of {name} are not ordered")
            if not lo <= init <= hi:
                raise UsageError(f"initial guess of {name} lies outside its bounds")

    @property
    def names(self) -> list:
        return list(self.free)


@dataclass
class FitResult:
    values: dict
    chi2: float
    dof: int
    converged: bool
    n_evaluations: int
    stderr: dict
    history: list = field(default_factory=list)
    residuals: np.ndarray = field(default=None, repr=False)
    x: np.ndarray = field(default=None, repr=False)
    model: np.ndarray = field(default=None, repr=False)

    def summary(self) -> str:
        lines = [f"converged: {self.converged}",
                 f"chi2: {self.chi2:.6g}",
                 f"dof: {self.dof}",
                 f"evaluations: {self.n_evaluations}"]
        for k, v in self.values.items():
            err = self.stderr.get(k, float("nan"))
            lines.append(f"{k}: {v:.8g} +/- {err:.3g} (approx.)")
        return "\n".join(lines) + "\n"


class _Transform:
    """Log coordinates for strictly positive bounds, linear otherwise."""

    def __init__(self, spec: FitSpec):
        self.names = spec.names
        self.log = np.array([spec.free[n][0] > 0 for n in self.names])
        lo = np.array([spec.free[n][0] for n in self.names])
        hi = np.array([spec.free[n][1] for n in self.names])
        self.lo = np.where(self.log, np.log(np.where(self.log, lo, 1.0)), lo)
        self.hi = np.where(self.log, np.log(np.where(self.log, hi, 1.0)), hi)

    def to_internal(self, p):
        p = np.asarray(p, dtype=float)
        return np.where(self.log, np.log(np.where(self.log, p, 1.0)), p)

    def to_natural(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(self.log, np.exp(u), u)


def _start_points(spec: FitSpec, tr: _Transform, restarts: int, seed: int):
    rng = np.random.default_rng(seed)
    first = tr.to_internal([spec.free[n][2] for n in tr.names])
    points = [first]
    width = tr.hi - tr.lo
    for _ in range(restarts):
        jitter = rng.normal(0.0, 0.25, size=first.size) * width
        points.append(np.clip(first + jitter, tr.lo, tr.hi))
    return points


def _jacobian(residual_fn, p, lo, hi, rel_step=1e-6):
    """Finite-difference Jacobian; one-sided next to a bound."""
    r0 = residual_fn(p)
    jac = np.empty((r0.size, p.size))
    for i in range(p.size):
        h = rel_step * max(abs(p[i]), 1e-3)
        up, dn = p.copy(), p.copy()
        up[i] = min(p[i] + h, hi[i])
        dn[i] = max(p[i] - h, lo[i])
        jac[:, i] = (residual_fn(up) - residual_fn(dn)) / (up[i] - dn[i])
    return jac


def least_squares_fit(model: Callable[[dict], np.ndarray], data: MeasuredSeries,
                      spec: FitSpec, restarts: int = DEFAULT_RESTARTS,
                      max_evaluations: int = MAX_EVALUATIONS, seed: int = 0) -> FitResult:
    """Minimize weighted squared residuals ``(y - model(params))/sigma``.

    Restarts are run in a fixed order from jittered starting points; the
    lowest objective wins, ties going to the earliest start.
    """
    n_free = len(spec.free)
    if len(data) < n_free + 1:
        raise UsageError(f"need at least {n_free + 1} data points, got {len(data)}")
    tr = _Transform(spec)
    w = data.weights
    n_eval = 0

    def params_of(p_nat):
        d = dict(spec.fixed)
        d.update(zip(tr.names, (float(v) for v in p_nat)))
        return d

    def residuals_nat(p_nat):
        return (data.y - model(params_of(p_nat))) * w

    def objective(u):
        nonlocal n_eval
        n_eval += 1
        try:
            with np.errstate(all="ignore"):
                r = residuals_nat(tr.to_natural(u))
        except (DomainError, ValueError):
            return 1e300
        val = float(np.dot(r, r))
        return val if math.isfinite(val) else 1e300

    best = None
    history = []
    for u0 in _start_points(spec, tr, restarts, seed):
        f0 = objective(u0)
        res = minimize(objective, u0, method="Nelder-Mead",
                       bounds=list(zip(tr.lo, tr.hi)),
                       options={"maxfev": max_evaluations, "xatol": 1e-10,
                                "fatol": 1e-13 * max(1.0, f0), "adaptive": n_free > 2})
        if best is None or res.fun < best.fun:
            best = res
        history.append(float(best.fun))

    p_best = tr.to_natural(best.x)
    chi2 = float(best.fun)
    dof = len(data) - n_free
    converged = bool(best.success)
    try:
        lo = np.array([spec.free[n][0] for n in tr.names])
        hi = np.array([spec.free[n][1] for n in tr.names])
        jac = _jacobian(residuals_nat, p_best.copy(), lo, hi)
        cov = np.linalg.inv(jac.T @ jac)
        if data.sigma is None and dof > 0:
            cov *= chi2 / dof
        errs = np.sqrt(np.abs(np.diag(cov)))
    except (np.linalg.LinAlgError, DomainError):
        errs = np.full(n_free, np.nan)
    stderr = dict(zip(tr.names, (float(e) for e in errs)))
    values = dict(zip(tr.names, (float(v) for v in p_best)))
    m = model(params_of(p_best))
    if not converged:
        log.warning("fit did not converge within %d evaluations", max_evaluations)
    return FitResult(values, chi2, dof, converged, n_eval, stderr, history,
                     data.y - m, data.x, m)


def _trap_params(base: TrapModelParams, d: Mapping[str, float]) -> TrapModelParams:
    names = {f.name for f in fields(TrapModelParams)}
    return base.with_values(**{k: v for k, v in d.items() if k in names})


def coherence_fit_spec(**overrides) -> FitSpec:
    """Default trap-model fit: tau3, i0 and sigma_s free, the rest fixed at line-A values."""
    user_free = dict(overrides.pop("free", {}))
    user_fixed = dict(overrides.pop("fixed", {}))
    if overrides:
        raise UsageError(f"unexpected arguments: {sorted(overrides)}")
    # explicit choices win over the defaults
    free = {k: v for k, v in COHERENCE_BOUNDS.items() if k not in user_fixed}
    free.update(user_free)
    fixed = {f.name: getattr(LINE_A, f.name) for f in fields(TrapModelParams)
             if f.name not in free}
    fixed.update(user_fixed)
    return FitSpec(free=free, fixed=fixed)


def fit_coherence_curve(data: MeasuredSeries, spec: Optional[FitSpec] = None,
                        restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                        max_evaluations: int = MAX_EVALUATIONS) -> FitResult:
    """Fit trap-model parameters to coherence time (ps) versus current (µA)."""
    if len(data) < 3:
        raise UsageError("coherence fit needs at least 3 points")
    spec = spec or coherence_fit_spec()
    known = {f.name for f in fields(TrapModelParams)}
    unknown = (set(spec.free) | set(spec.fixed)) - known
    if unknown:
        raise UsageError(f"unknown trap parameters: {sorted(unknown)}")
    base = _trap_params(LINE_A, spec.fixed)

    def model(d):
        return tau_c_curve(_trap_params(base, d), data.x)

    return least_squares_fit(model, data, spec, restarts=restarts, seed=seed,
                             max_evaluations=max_evaluations)


def fit_visibility_decay(data: MeasuredSeries) -> FitResult:
    """Coherence time from fringe visibility exp(-|delay|/tau_c)."""
    keep = data.y > 0
    if not np.all(keep):
        warnings.warn(f"rejecting {int((~keep).sum())} non-positive visibility points",
                      stacklevel=2)
    x, y = data.x[keep], data.y[keep]
    sig = None if data.sigma is None else data.sigma[keep]
    if x.size < 2:
        raise UsageError("visibility fit needs at least 2 positive points")
    w = np.ones_like(y) if sig is None else 1.0 / sig
    ax = np.abs(x)
    scale = float(ax.max())
    if scale == 0:
        raise UsageError("visibility fit needs at least one non-zero delay")
    n_eval = 0

    def objective(log_tc):
        nonlocal n_eval
        n_eval += 1
        r = (y - np.exp(-ax / (scale * math.exp(log_tc)))) * w
        return float(np.dot(r, r))

    # coarse scan in units of the largest delay, then bounded Brent refinement
    grid = np.linspace(math.log(1e-3), math.log(1e3), 241)
    vals = [objective(g) for g in grid]
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12, "maxiter": 500})
    tau_c = scale * math.exp(res.x)
    chi2 = float(res.fun)
    dof = x.size - 1
    model = np.exp(-ax / tau_c)
    # d model / d tau_c = model * |x| / tau_c**2
    jac = w * model * ax / tau_c ** 2
    jtj = float(np.dot(jac, jac))
    var = 1.0 / jtj if jtj > 0 else float("nan")
    if sig is None and dof > 0:
        var *= chi2 / dof
    return FitResult({"tau_c": tau_c}, chi2, dof, bool(res.success), n_eval,
                     {"tau_c": math.sqrt(var)}, [chi2], y - model, x, model)


def hbt_model_curve(tau_r: float, g2_zero: float, kernel: ResponseKernel,
                    half_range: float) -> SampledCurve:
    """(1 - (1 - g2_zero)·exp(-|tau|/tau_r)) ⊗ kernel on the kernel grid."""
    step = kernel.grid_step
    span = half_range + kernel.support + 2 * step
    n = int(math.ceil(span / step))
    t = step * np.arange(-n, n + 1)
    src = SourceSpec(tau_r=tau_r, tau_c=1.0, g2_zero=g2_zero)
    return convolve(SampledCurve(float(t[0]), step, g2_source(t, src)), kernel)


def hbt_fit_spec(**overrides) -> FitSpec:
    user_free = dict(overrides.pop("free", {}))
    fixed = dict(overrides.pop("fixed", {}))
    if overrides:
        raise UsageError(f"unexpected arguments: {sorted(overrides)}")
    free = {k: v for k, v in HBT_BOUNDS.items() if k not in fixed}
    free.update(user_free)
    return FitSpec(free=free, fixed=fixed)


def fit_hbt_lifetime(histogram: Union[CoincidenceHistogram, MeasuredSeries],
                     kernel: ResponseKernel, spec: Optional[FitSpec] = None,
                     restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                     max_evaluations: int = MAX_EVALUATIONS) -> FitResult:
    """Fit radiative lifetime and residual g2(0) to a broadened HBT trace."""
    if isinstance(histogram, CoincidenceHistogram):
        data = MeasuredSeries(histogram.taus, histogram.normalized,
                              histogram.normalized_sigma)
    else:
        data = histogram
    spec = spec or hbt_fit_spec()
    unknown = (set(spec.free) | set(spec.fixed)) - set(HBT_BOUNDS)
    if unknown:
        raise UsageError(f"unknown HBT parameters: {sorted(unknown)}")
    half = float(np.max(np.abs(data.x)))

    def model(d):
        curve = hbt_model_curve(d["tau_r"], d["g2_zero"], kernel, half)
        return curve.at(data.x)

    return least_squares_fit(model, data, spec, restarts=restarts, seed=seed,
                             max_evaluations=max_evaluations)


def chi_square(model_curve: SampledCurve, data: MeasuredSeries) -> float:
    """Sum of squared normalized residuals against the nearest grid samples."""
    k = np.rint((data.x - model_curve.t_start) / model_curve.step).astype(np.int64)
    if np.any(k < 0) or np.any(k >= len(model_curve)):
        raise UsageError("data abscissae fall outside the model grid")
    off = np.abs(model_curve.t_start + k * model_curve.step - data.x)
    if np.any(off > 0.5 * model_curve.step * (1 + 1e-9)):
        raise UsageError("data abscissae misaligned by more than half a grid step")
    r = (data.y - model_curve.values[k]) * data.weights
    return float(np.dot(r, r))
