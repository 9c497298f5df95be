"""Dephasing, two-photon interference and detector-response modelling for a
DC-driven quantum-dot single-photon source."""

from .correlations import (
    InterferometerSpec, SourceSpec, g2_parallel, g2_perp, g2_source, v_hom_ideal,
)
from .dephasing import (
    LINE_A, LINE_B, CoherencePoint, TrapModelParams, coherence_sweep, coherence_time,
    linewidth_from_coherence, michelson_visibility,
)
from .errors import DomainError, ResolutionError, UndefinedPointError, UsageError
from .response import (
    ResponseKernel, SampledCurve, convolve, gaussian_kernel, v_hom_measured, visibility_map,
)

__version__ = "0.1.0"
