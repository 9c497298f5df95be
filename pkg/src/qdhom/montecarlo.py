"""Monte Carlo photon-stream engine used as an independent check of the
analytic correlation curves.

The emitter is a two-stage renewal process (exponential re-excitation then
exponential decay), photons are routed through an HBT splitter or a delayed
Mach-Zehnder, opposite-arm photons meeting at the final coupler coalesce
with probability ``V·exp(-2|delta|/tau_c)``, and every detection receives
Gaussian timing jitter. Coincidences between D1 and D2 are then histogrammed.

Randomness is drawn in fixed-size segments of photons. Each segment owns a
generator seeded from ``(seed, segment, purpose)``, so results are
independent of how many workers produce the segments.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .correlations import InterferometerSpec, SourceSpec, g2_parallel, g2_perp, g2_source
from .errors import UsageError
from .response import DEFAULT_STEP, SampledCurve, convolve, gaussian_kernel, per_detector_jitter

SEGMENT_SIZE = 1 << 16
SATURATION_LIMIT = 0.2
DEFAULT_PUMP_RATE = 1.0 / 20_000.0
INTERFERENCE_CUTOFF = 10.0  # in units of tau_c

MODES = ("hbt", "mzi-parallel", "mzi-orthogonal")

# stream purposes for per-segment generators
_EMISSION, _ARM, _DETECTOR, _PAIR, _JITTER = range(5)


class Detector(enum.IntEnum):
    D1 = 1
    D2 = 2


class Arm(enum.IntEnum):
    SHORT = 0
    LONG = 1


@dataclass(frozen=True)
class StreamParams:
    """Emitter and run settings; times in ps, ``pump_rate`` in ps⁻¹."""

    pump_rate: float = DEFAULT_PUMP_RATE
    tau_r: float = 800.0
    tau_c: float = 325.0
    duration: float = 2.08e10
    seed: int = 0

    def __post_init__(self):
        if not self.pump_rate > 0:
            raise UsageError("pump_rate must be > 0")
        if not self.tau_r > 0 or not self.tau_c > 0:
            raise UsageError("tau_r and tau_c must be > 0")
        if not self.pump_rate * self.tau_r < SATURATION_LIMIT:
            raise UsageError(
                f"pump_rate*tau_r = {self.pump_rate * self.tau_r:.3g} violates the "
                f"weak-pump guard (< {SATURATION_LIMIT})")
        if not self.duration > 0:
            raise UsageError("duration must be > 0")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise UsageError("seed must be an unsigned 64-bit integer")

    @property
    def mean_interval(self) -> float:
        return 1.0 / self.pump_rate + self.tau_r

    @property
    def effective_tau_r(self) -> float:
        """Antibunching recovery time of the renewal stream, 1/(p + 1/tau_r).

        The renewal density of Exp(p)+Exp(1/tau_r) intervals is exactly
        proportional to 1 - exp(-(p + 1/tau_r)|tau|).
        """
        return 1.0 / (self.pump_rate + 1.0 / self.tau_r)

    @classmethod
    def for_photons(cls, n_photons: int, **kwargs) -> "StreamParams":
        """Parameters whose duration holds ``n_photons`` emissions on average."""
        p = kwargs.get("pump_rate", DEFAULT_PUMP_RATE)
        tau_r = kwargs.get("tau_r", 800.0)
        return cls(duration=n_photons * (1.0 / p + tau_r), **kwargs)

    def source(self) -> SourceSpec:
        """Analytic source matching the stream's exact g2."""
        return SourceSpec(tau_r=self.effective_tau_r, tau_c=self.tau_c)


def _generator(seed: int, segment: int, purpose: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(segment), int(purpose)))
    return np.random.Generator(np.random.PCG64(ss))


def _segment_draws(seed: int, n: int, purpose: int, draw, workers: int = 1) -> np.ndarray:
    """Per-photon random numbers, identical for any ``workers``."""
    n_seg = -(-n // SEGMENT_SIZE)

    def one(k):
        size = min(SEGMENT_SIZE, n - k * SEGMENT_SIZE)
        return draw(_generator(seed, k, purpose), size)

    if workers > 1 and n_seg > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(n_seg)))
    else:
        parts = [one(k) for k in range(n_seg)]
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)


def simulate_emission_stream(params: StreamParams, workers: int = 1) -> np.ndarray:
    """Strictly increasing emission times in [0, duration]."""

    def intervals(rng, size):
        return (rng.exponential(1.0 / params.pump_rate, size)
                + rng.exponential(params.tau_r, size))

    n_seg = 0
    last = 0.0
    chunks = []
    # grow segment by segment; each segment's content depends only on (seed, index)
    while last <= params.duration:
        batch = max(1, workers)
        ks = range(n_seg, n_seg + batch)

        def one(k):
            return intervals(_generator(params.seed, k, _EMISSION), SEGMENT_SIZE)

        if batch > 1:
            with ThreadPoolExecutor(max_workers=batch) as pool:
                parts = list(pool.map(one, ks))
        else:
            parts = [one(k) for k in ks]
        for part in parts:
            seg_times = last + np.cumsum(part)
            chunks.append(seg_times)
            last = seg_times[-1]
            n_seg += 1
            if last > params.duration:
                break
    times = np.concatenate(chunks)
    return times[times <= params.duration]


@dataclass
class PhotonRecords:
    """Photons at the final coupler, ordered by arrival time."""

    time: np.ndarray
    arm: np.ndarray
    index: np.ndarray
    mode: str
    seed: int
    tau_c: float
    duration: float
    n_emitted: int = 0


def route_photons(emissions: np.ndarray, interf: InterferometerSpec, mode: str,
                  seed: int = 0, tau_c: float = 325.0,
                  duration: Optional[float] = None) -> PhotonRecords:
    """Send each photon down the short (prob. t1) or long (prob. r1) arm.

    In ``hbt`` mode there is a single splitter and no arm assignment.
    """
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}, got {mode!r}")
    emissions = np.asarray(emissions, dtype=float)
    n = emissions.size
    if mode == "hbt":
        arm = np.zeros(n, dtype=np.int8)
    else:
        u = _segment_draws(seed, n, _ARM, lambda g, s: g.random(s))
        arm = (u < interf.r1).astype(np.int8)
    arrival = emissions + arm * interf.delta_tau2
    order = np.argsort(arrival, kind="stable")
    if duration is None:
        duration = float(emissions[-1]) if n else 0.0
    return PhotonRecords(arrival[order], arm[order], order.astype(np.int64), mode,
                         int(seed), float(tau_c), float(duration), n)


@dataclass
class DetectionEvents:
    detector: np.ndarray
    time: np.ndarray
    duration: float
    n_pairs_interfering: int = 0

    def __len__(self):
        return self.time.size

    def rate(self, detector: Detector) -> float:
        return float(np.count_nonzero(self.detector == detector)) / self.duration


def _mutual_nearest_pairs(short_t: np.ndarray, long_t: np.ndarray):
    """Index pairs (i_short, i_long) that are each other's nearest opposite neighbour."""
    if short_t.size == 0 or long_t.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)

    def nearest(a, b):
        j = np.searchsorted(b, a)
        lo = np.clip(j - 1, 0, b.size - 1)
        hi = np.clip(j, 0, b.size - 1)
        return np.where(np.abs(a - b[lo]) <= np.abs(b[hi] - a), lo, hi)

    s_to_l = nearest(short_t, long_t)
    l_to_s = nearest(long_t, short_t)
    i_s = np.arange(short_t.size)
    mutual = l_to_s[s_to_l] == i_s
    return i_s[mutual], s_to_l[mutual]


def interfere_and_detect(records: PhotonRecords, interf: InterferometerSpec,
                         per_detector_jitter: float, polarization: str) -> DetectionEvents:
    """Assign output detectors, apply two-photon coalescence and jitter.

    Short-arm photons reach D1 with probability t2, long-arm photons with
    probability r2 (HBT: 1/2). For parallel polarization, opposite-arm
    photons that are mutual nearest neighbours within the cutoff coalesce
    with probability x = V·exp(-2|delta|/tau_c): both go to the same
    detector, chosen with equal odds. Otherwise routing is independent.
    """
    if polarization not in ("parallel", "orthogonal"):
        raise UsageError("polarization must be 'parallel' or 'orthogonal'")
    if per_detector_jitter < 0:
        raise UsageError("jitter must be >= 0")
    n = records.time.size
    idx = records.index
    seed = records.seed
    u_det = _segment_draws(seed, n, _DETECTOR, lambda g, s: g.random((s, 2)))
    if n:
        u_det = u_det.reshape(-1, 2)[idx]
    else:
        u_det = np.empty((0, 2))

    if records.mode == "hbt":
        p_d1 = np.full(n, 0.5)
    else:
        p_d1 = np.where(records.arm == Arm.SHORT, interf.t2, interf.r2)
    detector = np.where(u_det[:, 0] < p_d1, Detector.D1, Detector.D2).astype(np.int8)

    n_coalesced = 0
    if records.mode != "hbt" and polarization == "parallel" and interf.overlap_v > 0:
        short = np.flatnonzero(records.arm == Arm.SHORT)
        long_ = np.flatnonzero(records.arm == Arm.LONG)
        i_s, i_l = _mutual_nearest_pairs(records.time[short], records.time[long_])
        a, b = short[i_s], long_[i_l]
        delta = np.abs(records.time[b] - records.time[a])
        close = delta < INTERFERENCE_CUTOFF * records.tau_c
        a, b, delta = a[close], b[close], delta[close]
        u_pair = _segment_draws(seed, records.n_emitted, _PAIR, lambda g, s: g.random(s))
        x = interf.overlap_v * np.exp(-2.0 * delta / records.tau_c)
        coalesce = u_pair[idx[a]] < x
        a, b = a[coalesce], b[coalesce]
        common = np.where(u_det[a, 1] < 0.5, Detector.D1, Detector.D2).astype(np.int8)
        detector[a] = common
        detector[b] = common
        n_coalesced = int(a.size)

    t = records.time.copy()
    if per_detector_jitter > 0:
        z = _segment_draws(seed, records.n_emitted, _JITTER, lambda g, s: g.standard_normal(s))
        t = t + per_detector_jitter * z[idx]
    order = np.argsort(t, kind="stable")
    return DetectionEvents(detector[order], t[order], records.duration, n_coalesced)


@dataclass
class CoincidenceHistogram:
    """D1-D2 coincidences binned by delay ``t(D2) - t(D1)``.

    Bin ``k`` is centred on ``k*bin_width``; ``normalization`` is the
    expected accidental count per bin for uncorrelated streams.
    """

    bin_width: float
    range: float
    counts: np.ndarray = field(repr=False)
    normalization: float

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if np.any(self.counts < 0):
            raise UsageError("histogram counts must be non-negative")
        if not self.normalization > 0:
            raise UsageError("histogram normalization must be > 0")

    @property
    def n_half(self) -> int:
        return (self.counts.size - 1) // 2

    @property
    def taus(self) -> np.ndarray:
        return self.bin_width * np.arange(-self.n_half, self.n_half + 1)

    @property
    def normalized(self) -> np.ndarray:
        return self.counts / self.normalization

    @property
    def normalized_sigma(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.counts, 1)) / self.normalization


def histogram_coincidences(events: DetectionEvents, bin_width: float = 100.0,
                           range: float = 25_000.0, chunk: int = 1 << 16) -> CoincidenceHistogram:
    """Count all ordered D1-D2 pairs whose delay falls within the bins."""
    if len(events) == 0:
        raise UsageError("no detection events to histogram")
    if not bin_width > 0 or not range > 0:
        raise UsageError("bin_width and range must be > 0")
    n_half = int(math.floor(range / bin_width + 1e-9))
    edge = (n_half + 0.5) * bin_width
    t1 = events.time[events.detector == Detector.D1]
    t2 = events.time[events.detector == Detector.D2]
    counts = np.zeros(2 * n_half + 1, dtype=np.int64)
    for start in np.arange(0, t1.size, chunk):
        a = t1[start:start + chunk]
        lo = np.searchsorted(t2, a - edge, side="left")
        hi = np.searchsorted(t2, a + edge, side="left")
        m = hi - lo
        total = int(m.sum())
        if total == 0:
            continue
        rep = np.repeat(np.arange(a.size), m)
        offs = np.arange(total) - np.repeat(np.cumsum(m) - m, m)
        dt = t2[lo[rep] + offs] - a[rep]
        k = np.floor(dt / bin_width + 0.5).astype(np.int64) + n_half
        ok = (k >= 0) & (k < counts.size)
        counts += np.bincount(k[ok], minlength=counts.size)
    norm = t1.size * t2.size * bin_width / events.duration
    if norm <= 0:
        raise UsageError("one detector recorded no events; cannot normalize")
    return CoincidenceHistogram(bin_width, n_half * bin_width, counts, norm)


@dataclass
class ComparisonReport:
    max_abs_z: float
    mean_z2: float
    n_bins: int
    z: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    expected: np.ndarray = field(repr=False)

    def passes(self, max_z: float = 4.0, z2_band=(0.8, 1.3)) -> bool:
        return self.max_abs_z < max_z and z2_band[0] <= self.mean_z2 <= z2_band[1]


def mc_vs_analytic(histogram: CoincidenceHistogram,
                   analytic_curve: SampledCurve) -> ComparisonReport:
    """Poisson z-scores of histogram counts against a normalized model curve."""
    taus = histogram.taus
    if (analytic_curve.values.size != taus.size
            or not math.isclose(analytic_curve.step, histogram.bin_width, rel_tol=1e-9)
            or abs(analytic_curve.t_start - taus[0]) > 1e-6 * histogram.bin_width):
        raise UsageError("analytic curve grid does not match histogram bins")
    expected = analytic_curve.values * histogram.normalization
    counts = histogram.counts.astype(float)
    residuals = counts - expected
    valid = expected > 0
    z = np.zeros_like(expected)
    z[valid] = residuals[valid] / np.sqrt(expected[valid])
    zv = z[valid]
    return ComparisonReport(float(np.max(np.abs(zv))), float(np.mean(zv ** 2)),
                            int(valid.sum()), z, residuals, expected)


def analytic_model(mode: str, source: SourceSpec,
                   interf: Optional[InterferometerSpec] = None):
    """Ideal correlation function matching a simulation mode."""
    if mode == "hbt":
        return lambda t: g2_source(t, source)
    if mode == "mzi-orthogonal":
        return lambda t: g2_perp(t, source, interf)
    if mode == "mzi-parallel":
        return lambda t: g2_parallel(t, source, interf)
    raise UsageError(f"unknown mode {mode!r}")


def expected_histogram_curve(func, bin_width: float, range: float,
                             fwhm: Optional[float] = None,
                             step: float = DEFAULT_STEP) -> SampledCurve:
    """Bin-averaged model ``func ⊗ pair response`` on the histogram grid.

    ``fwhm`` is the pair-response FWHM; ``None`` or 0 means no jitter.
    """
    n_half = int(math.floor(range / bin_width + 1e-9))
    n_sub = max(1, int(math.ceil(bin_width / step)))
    if fwhm:
        sigma = fwhm / 2.3548200450309493
        while bin_width / n_sub > sigma / 2.0:
            n_sub *= 2
    s = bin_width / n_sub
    margin_bins = n_half + 1
    if fwhm:
        margin_bins += int(math.ceil(8.0 * fwhm / bin_width))
    first = -margin_bins * bin_width - bin_width / 2 + s / 2
    n = (2 * margin_bins + 1) * n_sub
    fine = SampledCurve(first, s, func(first + s * np.arange(n)))
    if fwhm:
        fine = convolve(fine, gaussian_kernel(fwhm, s))
    per_bin = fine.values.reshape(2 * margin_bins + 1, n_sub).mean(axis=1)
    cut = margin_bins - n_half
    values = per_bin[cut:cut + 2 * n_half + 1]
    return SampledCurve(-n_half * bin_width, bin_width, values)


def simulate(params: StreamParams, interf: InterferometerSpec, mode: str,
             fwhm: Optional[float] = 428.0, workers: int = 1) -> DetectionEvents:
    """Full pipeline: emission, routing, interference and jittered detection.

    ``fwhm`` is the pair-response FWHM; each detector gets sigma/sqrt(2).
    """
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}, got {mode!r}")
    if mode != "hbt" and not params.duration > 10.0 * interf.delta_tau2:
        raise UsageError("duration must greatly exceed the arm delay")
    emissions = simulate_emission_stream(params, workers=workers)
    records = route_photons(emissions, interf, mode, seed=params.seed,
                            tau_c=params.tau_c, duration=params.duration)
    polarization = "orthogonal" if mode == "mzi-orthogonal" else "parallel"
    jitter = per_detector_jitter(fwhm) if fwhm else 0.0
    return interfere_and_detect(records, interf, jitter, polarization)
