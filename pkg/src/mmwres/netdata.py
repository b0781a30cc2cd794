"""Frequency-swept complex scattering data and its file formats.

Internal conventions: frequencies are stored in GHz, complex values in
cartesian form. Supported formats are Touchstone v1 two-port files (.s2p,
RI/MA/DB, Hz/kHz/MHz/GHz) and a sweep CSV with columns
``freq_ghz, re, im[, temperature_k, nbar, power_dbm, label]``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParseError

_DRIVE_KINDS = ("photon_number", "power_dbm")

_UNIT_TO_GHZ = {"hz": 1e-9, "khz": 1e-6, "mhz": 1e-3, "ghz": 1.0}


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _as_freq_array(freqs) -> np.ndarray:
    f = np.asarray(freqs, dtype=float).copy()
    if f.ndim != 1 or f.size < 2:
        raise DataError("frequency grid must be 1-D with at least 2 points")
    if not np.all(np.isfinite(f)):
        raise DataError("frequency grid contains non-finite entries")
    if np.any(f <= 0):
        raise DataError("frequencies must be positive (GHz)")
    if np.any(np.diff(f) <= 0):
        raise DataError("frequencies must be strictly increasing")
    return _freeze(f)


def _as_value_array(values, n: int, name: str = "values") -> np.ndarray:
    v = np.asarray(values, dtype=complex).copy()
    if v.shape != (n,):
        raise DataError(f"{name} length {v.shape} does not match frequency grid ({n})")
    if not np.all(np.isfinite(v)):
        raise DataError(f"{name} contains non-finite entries")
    return _freeze(v)


@dataclass(frozen=True)
class DriveLevel:
    """Drive strength, either mean photon number or applied power in dBm.

    Photon number is the canonical unit for loss fits; dBm values are kept
    as-is and converted only once a resonance fit supplies Q and Qe.
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in _DRIVE_KINDS:
            raise DataError(f"drive kind must be one of {_DRIVE_KINDS}, got {self.kind!r}")
        if self.kind == "photon_number" and not self.value > 0:
            raise DataError("photon_number drive must be > 0")


@dataclass(frozen=True)
class ComplexSweep:
    """A complex response sampled on a strictly increasing GHz grid."""

    freqs_ghz: np.ndarray
    values: np.ndarray
    temperature_k: float | None = None
    drive: DriveLevel | None = None
    label: str = "S21"

    def __post_init__(self):
        f = _as_freq_array(self.freqs_ghz)
        object.__setattr__(self, "freqs_ghz", f)
        object.__setattr__(self, "values", _as_value_array(self.values, f.size))
        if self.temperature_k is not None and not self.temperature_k > 0:
            raise DataError("temperature_k must be positive")

    def __len__(self) -> int:
        return self.freqs_ghz.size


@dataclass(frozen=True)
class TwoPortSet:
    """The two measured paths of a transmission/reflection sweep."""

    freqs_ghz: np.ndarray
    s21m: np.ndarray
    s22m: np.ndarray
    provenance: str = ""
    z0_ohm: float = 50.0

    def __post_init__(self):
        f = _as_freq_array(self.freqs_ghz)
        object.__setattr__(self, "freqs_ghz", f)
        object.__setattr__(self, "s21m", _as_value_array(self.s21m, f.size, "s21m"))
        object.__setattr__(self, "s22m", _as_value_array(self.s22m, f.size, "s22m"))

    def __len__(self) -> int:
        return self.freqs_ghz.size


def crop(sweep: ComplexSweep, f_lo: float, f_hi: float) -> ComplexSweep:
    """Restrict a sweep to the closed window [f_lo, f_hi] GHz."""
    if not f_lo < f_hi:
        raise DataError("crop window requires f_lo < f_hi")
    mask = (sweep.freqs_ghz >= f_lo) & (sweep.freqs_ghz <= f_hi)
    if np.count_nonzero(mask) < 2:
        raise DataError(f"crop window [{f_lo}, {f_hi}] GHz leaves fewer than 2 points")
    return ComplexSweep(
        sweep.freqs_ghz[mask],
        sweep.values[mask],
        temperature_k=sweep.temperature_k,
        drive=sweep.drive,
        label=sweep.label,
    )


# ---------------------------------------------------------------------------
# Touchstone v1 (.s2p)
# ---------------------------------------------------------------------------


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return source.decode("utf-8")
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    with open(source, "rb") as fh:
        return fh.read().decode("utf-8")


def _parse_option_line(tokens: list[str], lineno: int) -> tuple[float, str, float]:
    unit_ghz = 1.0
    fmt = "ma"
    z0 = 50.0
    i = 0
    while i < len(tokens):
        tok = tokens[i].lower()
        if tok in _UNIT_TO_GHZ:
            unit_ghz = _UNIT_TO_GHZ[tok]
        elif tok in ("ri", "ma", "db"):
            fmt = tok
        elif tok == "s":
            pass
        elif tok in ("y", "z", "g", "h"):
            raise ParseError(f"line {lineno}: only S-parameter files are supported, got '{tok.upper()}'")
        elif tok == "r":
            if i + 1 >= len(tokens):
                raise ParseError(f"line {lineno}: option 'R' missing impedance value")
            try:
                z0 = float(tokens[i + 1])
            except ValueError:
                raise ParseError(f"line {lineno}: bad reference impedance {tokens[i + 1]!r}") from None
            i += 1
        else:
            raise ParseError(f"line {lineno}: unrecognized option token {tokens[i]!r}")
        i += 1
    return unit_ghz, fmt, z0


def _pair_to_complex(a: float, b: float, fmt: str) -> complex:
    if fmt == "ri":
        return complex(a, b)
    if fmt == "ma":
        return a * complex(math.cos(math.radians(b)), math.sin(math.radians(b)))
    # db
    mag = 10.0 ** (a / 20.0)
    return mag * complex(math.cos(math.radians(b)), math.sin(math.radians(b)))


def read_touchstone(source) -> TwoPortSet:
    """Parse a Touchstone v1 two-port file into a TwoPortSet.

    Accepts a path, bytes, or a file-like object. Frequencies are converted
    to GHz and values to cartesian complex form; the S21 and S22 columns are
    extracted. Raises ParseError naming the offending line on malformed
    input, non-monotonic frequencies, or inconsistent column counts.
    """
    text = _read_text(source)
    unit_ghz = None
    fmt = "ma"
    z0 = 50.0
    freqs: list[float] = []
    s21: list[complex] = []
    s22: list[complex] = []
    comments: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if "!" in raw and raw.split("!", 1)[1].strip():
            comments.append(raw.split("!", 1)[1].strip())
        if not line:
            continue
        if line.startswith("#"):
            if unit_ghz is not None:
                raise ParseError(f"line {lineno}: duplicate option line")
            unit_ghz, fmt, z0 = _parse_option_line(line[1:].split(), lineno)
            continue
        if unit_ghz is None:
            raise ParseError(f"line {lineno}: data before '#' option line")
        fields = line.split()
        if len(fields) != 9:
            raise ParseError(f"line {lineno}: expected 9 columns for a two-port row, got {len(fields)}")
        try:
            row = [float(x) for x in fields]
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric entry in data row") from None
        f_ghz = row[0] * unit_ghz
        if freqs and f_ghz <= freqs[-1]:
            raise ParseError(f"line {lineno}: non-monotonic frequency {f_ghz} GHz")
        freqs.append(f_ghz)
        # column order: f, S11, S21, S12, S22 (pairs)
        s21.append(_pair_to_complex(row[3], row[4], fmt))
        s22.append(_pair_to_complex(row[7], row[8], fmt))
    if unit_ghz is None:
        raise ParseError("line 1: missing '#' option line")
    if len(freqs) < 2:
        raise ParseError(f"line {len(text.splitlines())}: need at least 2 data rows, got {len(freqs)}")
    return TwoPortSet(
        np.array(freqs), np.array(s21), np.array(s22),
        provenance="; ".join(comments), z0_ohm=z0,
    )


def write_touchstone(tps: TwoPortSet, fmt: str = "ri", comments: tuple[str, ...] = ()) -> str:
    """Serialize a TwoPortSet as Touchstone v1 text (GHz grid).

    Only the S21/S22 paths are physical here; S11 is written as 0 and S12 as
    a copy of S21 (symmetric convention) to fill the two-port row.
    """
    fmt = fmt.lower()
    if fmt not in ("ri", "ma", "db"):
        raise DataError(f"unsupported touchstone format {fmt!r}")
    out = io.StringIO()
    for c in comments:
        out.write(f"! {c}\n")
    if tps.provenance:
        out.write(f"! {tps.provenance}\n")
    out.write(f"# GHz S {fmt.upper()} R {tps.z0_ohm:g}\n")

    def pair(z: complex) -> str:
        if fmt == "ri":
            return f"{z.real:.17g} {z.imag:.17g}"
        mag = abs(z)
        ang = math.degrees(math.atan2(z.imag, z.real))
        if fmt == "ma":
            return f"{mag:.17g} {ang:.17g}"
        db = -400.0 if mag == 0 else 20.0 * math.log10(mag)
        return f"{db:.17g} {ang:.17g}"

    zero = pair(0j) if fmt != "db" else "-400 0"
    for f, a21, a22 in zip(tps.freqs_ghz, tps.s21m, tps.s22m):
        out.write(f"{f:.17g} {zero} {pair(a21)} {pair(a21)} {pair(a22)}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# Sweep CSV
# ---------------------------------------------------------------------------

_REQUIRED_COLS = ("freq_ghz", "re", "im")
_OPTIONAL_COLS = ("temperature_k", "nbar", "power_dbm", "label")


def read_sweep_csv(source) -> list[ComplexSweep]:
    """Read a sweep CSV, grouping rows by (label, temperature, drive).

    '#'-prefixed lines are ignored. Rows in each group are sorted by
    frequency; a duplicate frequency within a group is an error. When both
    ``nbar`` and ``power_dbm`` are present, the photon number wins (it is
    the canonical drive unit).
    """
    text = _read_text(source)
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ParseError("line 1: empty CSV")
    reader = csv.reader(lines)
    header = [h.strip().lower() for h in next(reader)]
    missing = [c for c in _REQUIRED_COLS if c not in header]
    if missing:
        raise ParseError(f"line 1: missing mandatory column(s) {missing}")
    idx = {name: header.index(name) for name in header}

    groups: dict[tuple, list[tuple[float, complex]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue

        def cell(name):
            i = idx.get(name)
            if i is None or i >= len(row):
                return None
            s = row[i].strip()
            return s if s else None

        try:
            f = float(cell("freq_ghz"))
            z = complex(float(cell("re")), float(cell("im")))
        except (TypeError, ValueError):
            raise ParseError(f"line {lineno}: bad numeric value in row") from None
        temp = cell("temperature_k")
        temperature = float(temp) if temp is not None else None
        nbar = cell("nbar")
        pdbm = cell("power_dbm")
        if nbar is not None:
            drive = ("photon_number", float(nbar))
        elif pdbm is not None:
            drive = ("power_dbm", float(pdbm))
        else:
            drive = None
        label = cell("label") or "S21"
        groups.setdefault((label, temperature, drive), []).append((f, z))

    def sort_key(key):
        label, temp, drive = key
        return (
            label,
            temp is not None,
            temp if temp is not None else 0.0,
            drive is not None,
            drive if drive is not None else ("", 0.0),
        )

    sweeps = []
    for key in sorted(groups, key=sort_key):
        label, temp, drive = key
        rows = sorted(groups[key], key=lambda r: r[0])
        freqs = [r[0] for r in rows]
        for a, b in zip(freqs, freqs[1:]):
            if a == b:
                raise ParseError(f"duplicate frequency {a} GHz within group (label={label!r})")
        sweeps.append(
            ComplexSweep(
                np.array(freqs),
                np.array([r[1] for r in rows]),
                temperature_k=temp,
                drive=DriveLevel(*drive) if drive else None,
                label=label,
            )
        )
    return sweeps


def write_sweep_csv(sweeps, comments: tuple[str, ...] = ()) -> str:
    """Serialize sweeps back to the CSV schema read_sweep_csv accepts."""
    if isinstance(sweeps, ComplexSweep):
        sweeps = [sweeps]
    out = io.StringIO()
    for c in comments:
        out.write(f"# {c}\n")
    out.write("freq_ghz,re,im,temperature_k,nbar,power_dbm,label\n")
    for sw in sweeps:
        temp = "" if sw.temperature_k is None else repr(float(sw.temperature_k))
        nbar = pdbm = ""
        if sw.drive is not None:
            if sw.drive.kind == "photon_number":
                nbar = repr(float(sw.drive.value))
            else:
                pdbm = repr(float(sw.drive.value))
        for f, z in zip(sw.freqs_ghz, sw.values):
            out.write(f"{float(f)!r},{float(z.real)!r},{float(z.imag)!r},{temp},{nbar},{pdbm},{sw.label}\n")
    return out.getvalue()
