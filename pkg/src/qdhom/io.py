"""CSV readers and writers.

Every file carries a header row, '.' decimals and LF line endings. Floats
are written with ``repr`` so repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import UsageError
from .estimation import MeasuredSeries
from .montecarlo import CoincidenceHistogram, DetectionEvents, Detector
from .response import ResponseKernel, load_tabulated_response


class CSVFormatError(UsageError):
    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}: line {line}: {message}")


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    x = float(value)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_text_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> None:
    write_text_atomic(Path(path), render_csv(header, rows))


def _read_rows(path):
    """Yield (line_number, header, row) with the header validated as non-empty."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            if header is None:
                header = [c.strip().lower() for c in row]
                continue
            yield reader.line_num, header, row
        if header is None:
            raise CSVFormatError(path, 1, "missing header row")


def _parse_float(path, line, cell):
    try:
        return float(cell)
    except ValueError:
        raise CSVFormatError(path, line, f"not a number: {cell!r}") from None


def read_table(path, required: Sequence[str], optional: Sequence[str] = ()) -> dict:
    """Read numeric columns by header name."""
    rows = list(_read_rows(path))
    header = rows[0][1] if rows else read_header(path)
    missing = [c for c in required if c not in header]
    if missing:
        raise CSVFormatError(path, 1, f"missing column(s) {missing}; header is {header}")
    columns = [c for c in list(required) + list(optional) if c in header]
    out = {c: [] for c in columns}
    for line, _, row in rows:
        if len(row) != len(header):
            raise CSVFormatError(path, line, f"expected {len(header)} fields, got {len(row)}")
        for c in columns:
            out[c].append(_parse_float(path, line, row[header.index(c)]))
    return {k: np.asarray(v, dtype=float) for k, v in out.items()}


def read_header(path) -> list:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        for row in csv.reader(fh):
            if row and not row[0].lstrip().startswith("#") and any(c.strip() for c in row):
                return [c.strip().lower() for c in row]
    raise CSVFormatError(path, 1, "missing header row")


def read_series(path) -> MeasuredSeries:
    """Two- or three-column series ``x,y[,sigma]``."""
    t = read_table(path, ("x", "y"), ("sigma",))
    return MeasuredSeries(t["x"], t["y"], t.get("sigma"))


def write_series(path, series: MeasuredSeries) -> None:
    if series.sigma is None:
        write_csv(path, ("x", "y"), zip(series.x, series.y))
    else:
        write_csv(path, ("x", "y", "sigma"), zip(series.x, series.y, series.sigma))


HISTOGRAM_HEADER = ("tau_ps", "counts", "normalized_g2")


def write_histogram(path, hist: CoincidenceHistogram) -> None:
    write_csv(path, HISTOGRAM_HEADER,
              zip(hist.taus, hist.counts, hist.normalized))


def read_histogram(path) -> CoincidenceHistogram:
    """Rebuild a histogram; the normalization is recovered from counts/normalized_g2."""
    t = read_table(path, HISTOGRAM_HEADER)
    taus, counts, norm_g2 = t["tau_ps"], t["counts"], t["normalized_g2"]
    if taus.size < 3 or taus.size % 2 == 0:
        raise CSVFormatError(path, 2, "histogram needs an odd number (>= 3) of symmetric bins")
    steps = np.diff(taus)
    width = float(steps[0])
    if width <= 0 or not np.allclose(steps, width, rtol=1e-9, atol=1e-9):
        raise CSVFormatError(path, 2, "histogram bins are not uniformly spaced")
    if not math.isclose(taus[0], -taus[-1], rel_tol=1e-9, abs_tol=1e-9):
        raise CSVFormatError(path, 2, "histogram bins are not symmetric about zero")
    ok = (counts > 0) & (norm_g2 > 0)
    if not np.any(ok):
        raise CSVFormatError(path, 2, "histogram is empty; normalization cannot be recovered")
    norm = float(np.median(counts[ok] / norm_g2[ok]))
    return CoincidenceHistogram(width, float(taus[-1]), counts, norm)


def events_csv(events: DetectionEvents) -> str:
    names = {int(Detector.D1): "D1", int(Detector.D2): "D2"}
    return render_csv(("detector", "time_ps"),
                      ((names[int(d)], t) for d, t in zip(events.detector, events.time)))


def write_events(path, events: DetectionEvents) -> None:
    write_text_atomic(Path(path), events_csv(events))


def read_response(path, step: float) -> ResponseKernel:
    """Tabulated detector response ``time_ps,weight``."""
    t = read_table(path, ("time_ps", "weight"))
    return load_tabulated_response(list(zip(t["time_ps"], t["weight"])), step)
