"""Trace readers and writers: Touchstone v1 two-port files and CSV.

CSV schema
----------
One header row, then one row per frequency point.  Recognised columns
(case-insensitive):

* ``freq`` / ``frequency`` / ``f`` / ``freq_hz`` : frequency in Hz
* ``re`` / ``real`` / ``s21_re`` and ``im`` / ``imag`` / ``s21_im`` : S21 real and imaginary parts
* ``mag_db`` / ``s21_db`` and ``phase_deg`` / ``s21_deg`` : S21 magnitude (dB) and phase (degrees)

Lines starting with ``#`` are comments and are kept as metadata.  Rows are
sorted by frequency; repeated frequencies raise DuplicateFrequency.
"""

import csv
import math
from pathlib import Path

import numpy as np

from .errors import DuplicateFrequency, ParseError, UnsupportedFormat
from .notch import FrequencySweep, SweepMeta

_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
_FORMATS = ("RI", "MA", "DB")

_CSV_FREQ = ("freq", "frequency", "f", "freq_hz", "frequency_hz")
_CSV_RE = ("re", "real", "s21_re", "re_s21")
_CSV_IM = ("im", "imag", "s21_im", "im_s21")
_CSV_DB = ("mag_db", "s21_db", "db")
_CSV_DEG = ("phase_deg", "s21_deg", "deg", "phase")


def _pair_to_complex(x, y, fmt):
    if fmt == "RI":
        return complex(x, y)
    mag = x if fmt == "MA" else 10.0 ** (x / 20.0)
    return mag * complex(math.cos(math.radians(y)), math.sin(math.radians(y)))


def _option_line(text, lineno, path):
    unit, param, fmt, ref = "GHZ", "S", "MA", 50.0
    tokens = text[1:].upper().split()
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in _UNITS:
            unit = tok
        elif tok in ("S", "Y", "Z", "H", "G"):
            param = tok
        elif tok in _FORMATS:
            fmt = tok
        elif tok == "R" and i + 1 < len(tokens):
            try:
                ref = float(tokens[i + 1])
            except ValueError as exc:
                raise ParseError(f"bad reference impedance {tokens[i + 1]!r}", line=lineno, path=path) from exc
            i += 1
        else:
            raise ParseError(f"unknown option {tok!r}", line=lineno, path=path)
        i += 1
    if param != "S":
        raise UnsupportedFormat(f"only S-parameters are supported, got {param}", line=lineno, path=path)
    return _UNITS[unit], fmt, ref


def parse_touchstone(path):
    """Read a Touchstone v1 two-port file and return its S21 (and S11) trace.

    Data rows are ``f S11 S21 S12 S22`` with each parameter as a number pair in
    the RI, MA or DB format named on the ``#`` option line; ``!`` comments are
    kept in ``meta.comments``.
    """
    path = Path(path)
    if path.suffix.lower() not in (".s2p", ""):
        raise UnsupportedFormat(f"expected a two-port .s2p file, got {path.suffix}", path=str(path))
    comments = []
    options = None
    rows = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line, _, comment = raw.partition("!")
            if comment.strip() or raw.lstrip().startswith("!"):
                comments.append(comment.strip())
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if options is not None:
                    raise ParseError("duplicate option line", line=lineno, path=str(path))
                options = _option_line(line, lineno, str(path))
                continue
            if options is None:
                raise ParseError("data before the '#' option line", line=lineno, path=str(path))
            try:
                values = [float(tok) for tok in line.split()]
            except ValueError as exc:
                raise ParseError(f"non-numeric data: {line!r}", line=lineno, path=str(path)) from exc
            if len(values) != 9:
                raise UnsupportedFormat(
                    f"expected 9 columns for a two-port row, got {len(values)}", line=lineno, path=str(path)
                )
            rows.append((lineno, values))
    if options is None:
        raise ParseError("missing '#' option line", line=1, path=str(path))
    if not rows:
        raise ParseError("no data rows", path=str(path))
    scale, fmt, _ = options
    freq = np.array([v[0] * scale for _, v in rows])
    s11 = np.array([_pair_to_complex(v[1], v[2], fmt) for _, v in rows])
    s21 = np.array([_pair_to_complex(v[3], v[4], fmt) for _, v in rows])
    if np.any(np.diff(freq) <= 0):
        bad = int(np.argmax(np.diff(freq) <= 0)) + 1
        raise ParseError("frequencies must be strictly increasing", line=rows[bad][0], path=str(path))
    return FrequencySweep(freq, s21, meta=SweepMeta(label=path.stem, comments=comments), s11=s11)


def _find(header, names):
    for i, h in enumerate(header):
        if h in names:
            return i
    return None


def parse_csv_trace(path, columns=None):
    """Read a CSV trace.

    ``columns`` may declare the layout explicitly as ``"re_im"`` or ``"db_deg"``;
    by default it is inferred from the header names.
    """
    path = Path(path)
    comments = []
    header = None
    data = []
    with path.open(newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                comments.append(stripped[1:].strip())
                continue
            cells = next(csv.reader([stripped]))
            if header is None:
                header = [c.strip().lower() for c in cells]
                continue
            try:
                data.append((lineno, [float(c) for c in cells]))
            except ValueError as exc:
                raise ParseError(f"non-numeric value in {stripped!r}", line=lineno, path=str(path)) from exc
    if header is None:
        raise ParseError("empty file or missing header", path=str(path))

    fi = _find(header, _CSV_FREQ)
    re_i, im_i = _find(header, _CSV_RE), _find(header, _CSV_IM)
    db_i, deg_i = _find(header, _CSV_DB), _find(header, _CSV_DEG)
    if columns is None:
        columns = "re_im" if re_i is not None and im_i is not None else "db_deg"
    if columns == "re_im":
        a, b = re_i, im_i
    elif columns == "db_deg":
        a, b = db_i, deg_i
    else:
        raise ValueError(f"columns must be 're_im' or 'db_deg', got {columns!r}")
    if fi is None or a is None or b is None:
        raise ParseError(f"cannot identify {columns} columns in header {header}", line=1, path=str(path))

    if not data:
        raise ParseError("no data rows", path=str(path))
    width = len(header)
    for lineno, row in data:
        if len(row) != width:
            raise ParseError(f"expected {width} columns, got {len(row)}", line=lineno, path=str(path))
    arr = np.array([row for _, row in data])
    order = np.argsort(arr[:, fi], kind="stable")
    arr = arr[order]
    freq = arr[:, fi]
    dup = np.nonzero(np.diff(freq) == 0)[0]
    if dup.size:
        raise DuplicateFrequency(f"frequency {freq[dup[0]]!r} Hz appears more than once", path=str(path))
    if columns == "re_im":
        s21 = arr[:, a] + 1j * arr[:, b]
    else:
        s21 = 10.0 ** (arr[:, a] / 20.0) * np.exp(1j * np.deg2rad(arr[:, b]))
    meta = SweepMeta(label=path.stem, comments=comments)
    for c in comments:
        key, sep, value = c.partition("=")
        key = key.strip()
        if not sep:
            continue
        try:
            if key == "vna_power_dBm":
                meta.vna_power_dBm = float(value)
            elif key == "temperature_K":
                meta.temperature_K = float(value)
        except ValueError:
            pass
    try:
        return FrequencySweep(freq, s21, meta=meta)
    except ValueError as exc:
        raise ParseError(str(exc), path=str(path)) from exc


def write_csv_trace(path, sweep, columns="re_im"):
    """Write ``sweep`` as CSV with full double precision (round-trips exactly in re_im)."""
    path = Path(path)
    lines = []
    meta = sweep.meta
    if meta.vna_power_dBm is not None:
        lines.append(f"# vna_power_dBm={meta.vna_power_dBm!r}")
    if meta.temperature_K is not None:
        lines.append(f"# temperature_K={meta.temperature_K!r}")
    if columns == "re_im":
        lines.append("freq,re,im")
        cols = (sweep.s21.real, sweep.s21.imag)
    elif columns == "db_deg":
        lines.append("freq,mag_db,phase_deg")
        cols = (20.0 * np.log10(np.abs(sweep.s21)), np.rad2deg(np.angle(sweep.s21)))
    else:
        raise ValueError(f"columns must be 're_im' or 'db_deg', got {columns!r}")
    for f, x, y in zip(sweep.frequencies, *cols):
        lines.append(f"{f:.17g},{x:.17g},{y:.17g}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_trace(path):
    """Dispatch on extension: .s2p to Touchstone, anything else to CSV."""
    path = Path(path)
    if path.suffix.lower() == ".s2p":
        return parse_touchstone(path)
    if path.suffix.lower() in (".s1p", ".s3p", ".s4p"):
        raise UnsupportedFormat(f"only two-port Touchstone files are supported, got {path.suffix}", path=str(path))
    return parse_csv_trace(path)
