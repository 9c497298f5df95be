"""Command-line interface.

    qdhom [--config PATH] [--seed N] [--out DIR] [--set key=value ...] COMMAND

Commands: coherence-sweep, correlate, visibility-map, simulate, fit.
Exit codes: 0 success, 2 usage or parse error, 3 fit did not converge.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .correlations import g2_parallel, g2_perp, g2_source, v_hom_ideal
from .dephasing import coherence_sweep
from .errors import QDHomError, UndefinedPointError, UsageError
from .estimation import (
    coherence_fit_spec, fit_coherence_curve, fit_hbt_lifetime,
    fit_visibility_decay, hbt_fit_spec,
)
from .io import (
    events_csv, read_header, read_histogram, read_response, read_series, render_csv,
    write_text_atomic,
    HISTOGRAM_HEADER,
)
from .montecarlo import (
    MODES, StreamParams, analytic_model, expected_histogram_curve,
    histogram_coincidences, mc_vs_analytic, simulate,
)
from .response import (
    SampledCurve, convolve, gaussian_kernel, v_hom_measured, visibility_map,
)

log = logging.getLogger("qdhom")

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 2, 3

MEASURED_VISIBILITY = (0.33, 0.06)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _kernel(cfg, grid):
    path = cfg["detector"]["response_file"]
    if path:
        return read_response(path, grid.step)
    fwhm = cfgmod._number(cfg["detector"], "fwhm", "detector")
    return gaussian_kernel(fwhm, grid.step, grid.truncation_sigmas)


def cmd_coherence_sweep(cfg, args) -> tuple[dict, int]:
    params = cfgmod.trap_params(cfg)
    points = coherence_sweep(params, cfgmod.currents(cfg))
    header = ("current_uA", "tau_up_ps", "tau_down_ps", "tau_f_ps", "sigma_ueV",
              "tau_c_ps", "narrowing_ratio")
    rows = [(p.current, p.tau_up, p.tau_down, p.tau_f, p.sigma, p.tau_c, p.narrowing_ratio)
            for p in points]
    return {"coherence_sweep.csv": render_csv(header, rows)}, EXIT_OK


def cmd_correlate(cfg, args):
    source = cfgmod.source_spec(cfg)
    interf = cfgmod.interferometer_spec(cfg)
    grid = cfgmod.grid_settings(cfg)
    kernel = _kernel(cfg, grid)
    interf.check_separation(source.tau_c)

    n = int(round(grid.half_range / grid.step))
    tau = grid.step * np.arange(-n, n + 1)
    g_src = g2_source(tau, source)
    g_perp = g2_perp(tau, source, interf)
    g_par = g2_parallel(tau, source, interf)
    perp_conv = convolve(SampledCurve(tau[0], grid.step, g_perp), kernel).values
    par_conv = convolve(SampledCurve(tau[0], grid.step, g_par), kernel).values
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(g_perp != 0, (g_perp - g_par) / np.where(g_perp != 0, g_perp, 1), np.nan)

    header = ("tau_ps", "g2_source", "g2_perp", "g2_parallel", "g2_perp_conv",
              "g2_parallel_conv", "v_hom")
    rows = zip(tau, g_src, g_perp, g_par, perp_conv, par_conv, v)
    try:
        v_ideal = float(v_hom_ideal(0.0, source, interf))
        v_meas = v_hom_measured(source, interf, kernel)
    except UndefinedPointError:
        v_ideal = v_meas = float("nan")
    summary = (
        f"v_hom_ideal(0): {v_ideal!r}\n"
        f"v_hom_measured(0): {v_meas!r}\n"
        f"reference measured visibility: {MEASURED_VISIBILITY[0]} +/- {MEASURED_VISIBILITY[1]}"
        " (obtained with the asymmetric measured response, not the Gaussian model)\n"
    )
    return {"correlate.csv": render_csv(header, rows),
            "correlate_summary.txt": summary}, EXIT_OK


def cmd_visibility_map(cfg, args):
    source = cfgmod.source_spec(cfg)
    interf = cfgmod.interferometer_spec(cfg)
    grid = cfgmod.grid_settings(cfg)
    fwhms = cfgmod.positive_list(cfg, "map", "fwhm")
    tcs = cfgmod.positive_list(cfg, "map", "tau_c")
    workers = int(cfg["map"]["workers"])
    vmap = visibility_map(fwhms, tcs, source, interf, step=grid.step,
                          truncation_sigmas=grid.truncation_sigmas, workers=workers)
    header = ["fwhm_ps\\tau_c_ps"] + [repr(float(t)) for t in tcs]
    rows = [[f] + list(r) for f, r in zip(fwhms, vmap)]
    return {"visibility_map.csv": render_csv(header, rows)}, EXIT_OK


def _stream_params(cfg):
    s = cfg["stream"]
    kwargs = dict(pump_rate=cfgmod._number(s, "pump_rate", "stream"),
                  tau_r=cfgmod._number(cfg["source"], "tau_r", "source"),
                  tau_c=cfgmod._number(cfg["source"], "tau_c", "source"),
                  seed=cfg["seed"])
    if s["duration"] is not None:
        return StreamParams(duration=cfgmod._number(s, "duration", "stream"), **kwargs)
    n = cfgmod._number(s, "n_photons", "stream")
    if n < 1:
        raise UsageError("stream.n_photons must be >= 1")
    return StreamParams.for_photons(int(n), **kwargs)


def cmd_simulate(cfg, args):
    s = cfg["stream"]
    mode = s["mode"]
    if mode not in MODES:
        raise UsageError(f"stream.mode must be one of {MODES}, got {mode!r}")
    params = _stream_params(cfg)
    interf = cfgmod.interferometer_spec(cfg)
    fwhm = cfgmod._number(cfg["detector"], "fwhm", "detector") if s["jitter"] else None
    bin_width = cfgmod._number(s, "bin_width", "stream")
    hist_range = cfgmod._number(s, "range", "stream")
    if bin_width <= 0 or hist_range < bin_width:
        raise UsageError("stream.bin_width must be > 0 and not exceed stream.range")
    grid = cfgmod.grid_settings(cfg)

    events = simulate(params, interf, mode, fwhm, workers=int(s["workers"]))
    hist = histogram_coincidences(events, bin_width, hist_range)
    model = analytic_model(mode, params.source(), interf)
    curve = expected_histogram_curve(model, bin_width, hist_range, fwhm, grid.step)
    report = mc_vs_analytic(hist, curve)

    files = {
        "histogram.csv": render_csv(
            HISTOGRAM_HEADER, zip(hist.taus, hist.counts, hist.normalized)),
        "comparison.csv": render_csv(
            ("tau_ps", "counts", "expected_counts", "analytic_g2", "z"),
            zip(hist.taus, hist.counts, report.expected, curve.values, report.z)),
        "simulate_report.txt": (
            f"mode: {mode}\n"
            f"seed: {params.seed}\n"
            f"duration_ps: {params.duration!r}\n"
            f"detections: {len(events)}\n"
            f"coalesced_pairs: {events.n_pairs_interfering}\n"
            f"effective_tau_r_ps: {params.effective_tau_r!r}\n"
            f"normalization: {hist.normalization!r}\n"
            f"bins: {report.n_bins}\n"
            f"max_abs_z: {report.max_abs_z!r}\n"
            f"mean_z2: {report.mean_z2!r}\n"
        ),
    }
    if s["dump_events"]:
        files["events.csv"] = events_csv(events)
    return files, EXIT_OK


def _fit_spec(cfg, default_factory):
    block = cfg["fit"]
    free = {k: tuple(v) for k, v in block["free"].items()}
    fixed = dict(block["fixed"])
    for k, v in free.items():
        if len(v) != 3:
            raise UsageError(f"fit.free.{k} must be [lower, upper, initial]")
    if not free and not fixed:
        return default_factory()
    return default_factory(free=free, fixed=fixed)


def cmd_fit(cfg, args):
    if not args.data:
        raise UsageError("fit requires a data file")
    kind = cfg["fit"]["kind"]
    restarts = int(cfg["fit"]["restarts"])
    budget = int(cfgmod._number(cfg["fit"], "max_evaluations", "fit"))
    if restarts < 0 or budget < 1:
        raise UsageError("fit.restarts must be >= 0 and fit.max_evaluations >= 1")
    if kind == "coherence":
        data = read_series(args.data)
        spec = _fit_spec(cfg, coherence_fit_spec)
        result = fit_coherence_curve(data, spec, restarts=restarts, seed=cfg["seed"],
                                     max_evaluations=budget)
    elif kind == "visibility-decay":
        data = read_series(args.data)
        result = fit_visibility_decay(data)
    elif kind == "hbt-lifetime":
        grid = cfgmod.grid_settings(cfg)
        kernel = _kernel(cfg, grid)
        header = read_header(args.data)
        data = read_histogram(args.data) if "counts" in header else read_series(args.data)
        spec = _fit_spec(cfg, hbt_fit_spec)
        result = fit_hbt_lifetime(data, kernel, spec, restarts=restarts, seed=cfg["seed"],
                                  max_evaluations=budget)
    else:
        raise UsageError(f"fit.kind must be coherence, visibility-decay or hbt-lifetime, got {kind!r}")
    report = f"kind: {kind}\n" + result.summary()
    residuals = render_csv(("x", "y", "model", "residual"),
                           zip(result.x, result.model + result.residuals,
                               result.model, result.residuals))
    code = EXIT_OK if result.converged else EXIT_NOT_CONVERGED
    return {"fit_report.txt": report, "fit_residuals.csv": residuals}, code


COMMANDS = {
    "coherence-sweep": cmd_coherence_sweep,
    "correlate": cmd_correlate,
    "visibility-map": cmd_visibility_map,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qdhom", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", metavar="PATH", help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="global random seed (unsigned 64-bit)")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a configuration leaf (repeatable)")
    parser.add_argument("--preset", choices=sorted(cfgmod.PRESET_BLOCKS),
                        help="built-in parameter preset")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "fit":
            p.add_argument("data", help="input CSV")
            p.add_argument("--kind", choices=("coherence", "visibility-decay", "hbt-lifetime"))
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"qdhom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.overrides)
        if getattr(args, "kind", None):
            overrides.append(f"fit.kind={args.kind}")
        cfg = cfgmod.load_config(args.config, overrides, args.preset, args.seed, args.out)
        t0 = time.perf_counter()
        files, code = COMMANDS[args.command](cfg, args)
        log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    except QDHomError as exc:
        print(f"qdhom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg["output"]["dir"])
    for name, text in files.items():
        write_text_atomic(out / name, text)
    if code == EXIT_NOT_CONVERGED:
        print("qdhom: fit did not converge; result written anyway", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
