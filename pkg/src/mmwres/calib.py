"""Simplified cryogenic two-path error network: embedding, solving, correction.

The measurement model has six frequency-dependent terms. With the load match
neglected and a symmetric device (S11 = S22, S12 = S21), the two measured
paths are

    s21m = e30 + e10*e32 * S21 / (1 - e11*S22)
    s22m = e33 + (S22 + e11*S21**2 / (1 - e11*S22)) * e23*e32

Only the products e10*e32 and e23*e32 enter the correction, so when no
separate input-path measurement is available e32 is normalized to 1 and the
products are stored in e10 and e23.

A note on inversion: substituting S21 = A*(1 - e11*S22) from the first
equation (A = (s21m - e30)/(e10*e32)) into the second makes the
(1 - e11*S22) denominator cancel exactly, leaving a *linear* equation

    s22m - e33 = e23*e32 * (S22*(1 - e11**2*A**2) + e11*A**2)

so the corrected S-parameters have a unique closed form per frequency point;
no branch selection is needed.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, GridError, SingularityError, SolveError
from .netdata import TwoPortSet

TERM_NAMES = ("e10", "e23", "e32", "e30", "e33", "e11")

_EPS = 1e-12


def _carray(x, n: int, name: str) -> np.ndarray:
    a = np.broadcast_to(np.asarray(x, dtype=complex), (n,)).copy()
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ErrorTerms:
    """Six error-adapter coefficients per frequency point.

    e10, e23 are the two attenuating input paths, e32 the output gain, e30
    and e33 directivity leakage terms, e11 the source match. The load match
    is identically zero by construction. Input-path magnitudes above 1 are
    unexpected for attenuating lines and produce a warning, not an error.
    """

    freqs_ghz: np.ndarray
    e10: np.ndarray
    e23: np.ndarray
    e32: np.ndarray
    e30: np.ndarray
    e33: np.ndarray
    e11: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs_ghz, dtype=float).copy()
        if f.ndim != 1 or f.size < 1:
            raise DataError("ErrorTerms needs a 1-D frequency grid")
        f.setflags(write=False)
        object.__setattr__(self, "freqs_ghz", f)
        for name in TERM_NAMES:
            object.__setattr__(self, name, _carray(getattr(self, name), f.size, name))
        for name in ("e10", "e23"):
            mx = np.max(np.abs(getattr(self, name)))
            if mx > 1.0 + 1e-9:
                warnings.warn(
                    f"|{name}| reaches {mx:.3g} > 1; input paths are expected to attenuate",
                    stacklevel=2,
                )

    def term(self, name: str) -> np.ndarray:
        if name not in TERM_NAMES:
            raise DataError(f"unknown error term {name!r}")
        return getattr(self, name)

    def with_term(self, name: str, values) -> "ErrorTerms":
        if name not in TERM_NAMES:
            raise DataError(f"unknown error term {name!r}")
        return replace(self, **{name: _carray(values, self.freqs_ghz.size, name)})

    def interpolated(self, freqs_ghz) -> "ErrorTerms":
        """Linearly interpolate all six terms onto a new grid."""
        f_new = np.asarray(freqs_ghz, dtype=float)
        f_old = self.freqs_ghz
        if f_new[0] < f_old[0] - 1e-12 or f_new[-1] > f_old[-1] + 1e-12:
            raise GridError(
                f"target grid [{f_new[0]}, {f_new[-1]}] GHz extends beyond "
                f"calibrated range [{f_old[0]}, {f_old[-1]}] GHz"
            )
        if f_old.size == 1:
            return ErrorTerms(f_new, *[np.full(f_new.size, getattr(self, t)[0]) for t in TERM_NAMES])
        terms = [_interp_complex(f_old, getattr(self, t), f_new) for t in TERM_NAMES]
        return ErrorTerms(f_new, *terms)


@dataclass(frozen=True)
class SymmetricDut:
    """Corrected S-parameters of a symmetric device (S11 = S22, S12 = S21)."""

    freqs_ghz: np.ndarray
    s21: np.ndarray
    s22: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs_ghz, dtype=float).copy()
        if f.ndim != 1 or f.size < 1:
            raise DataError("SymmetricDut needs a 1-D frequency grid")
        f.setflags(write=False)
        object.__setattr__(self, "freqs_ghz", f)
        object.__setattr__(self, "s21", _carray(self.s21, f.size, "s21"))
        object.__setattr__(self, "s22", _carray(self.s22, f.size, "s22"))

    def passivity_excess(self) -> np.ndarray:
        """|S21|^2 + |S22|^2 - 1 per point; positive values are reported,
        never enforced (the correction does not impose passivity)."""
        return np.abs(self.s21) ** 2 + np.abs(self.s22) ** 2 - 1.0


@dataclass(frozen=True)
class CalStandards:
    """Measured through / reflect / line standards with assumed definitions.

    Ideal standards: thru = {S21=1, S22=0}; reflect = {S21=0, S22=gamma}
    (default gamma = -1, an on-chip short); line = {S21=t, S22=0}. If
    ``line_s21`` is None the line transmission t is extracted from the line
    measurement itself, making the procedure self-calibrating in t.
    """

    thru: TwoPortSet
    reflect: TwoPortSet
    line: TwoPortSet
    reflect_gamma: complex = -1.0 + 0.0j
    line_s21: np.ndarray | None = None


def _interp_complex(f_src, z_src, f_dst) -> np.ndarray:
    re = np.interp(f_dst, f_src, z_src.real)
    im = np.interp(f_dst, f_src, z_src.imag)
    return re + 1j * im


def common_grid(grids: list[np.ndarray]) -> np.ndarray:
    """Coarsest grid restricted to the frequency range shared by all inputs."""
    lo = max(g[0] for g in grids)
    hi = min(g[-1] for g in grids)
    if not lo < hi:
        raise GridError(f"frequency grids do not overlap (common range [{lo}, {hi}] GHz)")
    candidates = []
    for g in grids:
        sub = g[(g >= lo - 1e-12) & (g <= hi + 1e-12)]
        if sub.size >= 2:
            candidates.append(sub)
    if not candidates:
        raise GridError("no grid retains 2 points on the common frequency range")
    return min(candidates, key=lambda g: g.size)


def embed(dut: SymmetricDut, terms: ErrorTerms) -> TwoPortSet:
    """Forward model: push a symmetric DUT through the error network."""
    if dut.freqs_ghz.shape != terms.freqs_ghz.shape or not np.allclose(
        dut.freqs_ghz, terms.freqs_ghz, rtol=0, atol=1e-9
    ):
        terms = terms.interpolated(dut.freqs_ghz)
    den = 1.0 - terms.e11 * dut.s22
    bad = np.abs(den) <= _EPS
    if np.any(bad):
        i = int(np.argmax(bad))
        raise SingularityError(
            f"1 - e11*S22 vanishes at frequency index {i} ({dut.freqs_ghz[i]} GHz)"
        )
    s21m = terms.e30 + terms.e10 * terms.e32 * dut.s21 / den
    s22m = terms.e33 + (dut.s22 + terms.e11 * dut.s21**2 / den) * terms.e23 * terms.e32
    return TwoPortSet(dut.freqs_ghz, s21m, s22m, provenance="embedded")


def correct(measured: TwoPortSet, terms: ErrorTerms) -> SymmetricDut:
    """Invert the error network, recovering the symmetric DUT.

    The inversion is exact and pointwise: with A = (s21m - e30)/(e10*e32),

        S22 = ((s22m - e33)/(e23*e32) - e11*A**2) / (1 - e11**2*A**2)
        S21 = A * (1 - e11*S22)

    and satisfies embed(correct(m), terms) == m to machine precision.
    """
    if measured.freqs_ghz.shape != terms.freqs_ghz.shape or not np.allclose(
        measured.freqs_ghz, terms.freqs_ghz, rtol=0, atol=1e-9
    ):
        terms = terms.interpolated(measured.freqs_ghz)
    p10 = terms.e10 * terms.e32
    w = terms.e23 * terms.e32
    for name, arr in (("e10*e32", p10), ("e23*e32", w)):
        small = np.abs(arr) <= _EPS
        if np.any(small):
            i = int(np.argmax(small))
            raise SingularityError(
                f"{name} has no dynamic range at frequency index {i} "
                f"({measured.freqs_ghz[i]} GHz)"
            )
    a = (measured.s21m - terms.e30) / p10
    den = 1.0 - (terms.e11 * a) ** 2
    bad = np.abs(den) <= _EPS
    if np.any(bad):
        i = int(np.argmax(bad))
        raise SingularityError(
            f"1 - (e11*A)^2 vanishes at frequency index {i} "
            f"({measured.freqs_ghz[i]} GHz); corrected S-parameters undefined"
        )
    s22 = ((measured.s22m - terms.e33) / w - terms.e11 * a**2) / den
    s21 = a * (1.0 - terms.e11 * s22)
    if not (np.all(np.isfinite(s21)) and np.all(np.isfinite(s22))):
        i = int(np.argmax(~(np.isfinite(s21) & np.isfinite(s22))))
        raise SingularityError(f"non-finite corrected value at frequency index {i}")
    return SymmetricDut(measured.freqs_ghz, s21, s22)


def solve_error_terms(standards: CalStandards, input_path_products=None) -> ErrorTerms:
    """Solve the error network from T/R/L standard measurements.

    Per frequency point, with ideal standard definitions:

        e30     = s21m(reflect)
        e10*e32 = s21m(thru) - e30
        t       = (s21m(line) - e30) / (e10*e32)      unless given
        x       = e11*e23*e32 = (s22m(thru) - s22m(line)) / (1 - t**2)
        e33     = s22m(thru) - x
        e23*e32 = (s22m(reflect) - e33) / gamma
        e11     = x / (e23*e32)

    The system degenerates when t**2 is 1 (line indistinguishable from the
    through), when gamma is 0, or when a product loses all dynamic range.
    If ``input_path_products`` supplies directly measured (e10, e23) per
    frequency, the stored products are split using the e10 measurement;
    otherwise e32 is normalized to 1 and the products live in e10 and e23.
    """
    grids = [standards.thru.freqs_ghz, standards.reflect.freqs_ghz, standards.line.freqs_ghz]
    f = common_grid(grids)

    def onto(tps: TwoPortSet) -> tuple[np.ndarray, np.ndarray]:
        if tps.freqs_ghz.shape == f.shape and np.allclose(tps.freqs_ghz, f, rtol=0, atol=1e-9):
            return tps.s21m, tps.s22m
        return (
            _interp_complex(tps.freqs_ghz, tps.s21m, f),
            _interp_complex(tps.freqs_ghz, tps.s22m, f),
        )

    t21, t22 = onto(standards.thru)
    r21, r22 = onto(standards.reflect)
    l21, l22 = onto(standards.line)

    gamma = complex(standards.reflect_gamma)
    if abs(gamma) <= _EPS:
        raise SolveError("reflect coefficient gamma = 0 leaves e23*e32 undetermined")

    e30 = r21
    p10 = t21 - e30
    small = np.abs(p10) <= _EPS
    if np.any(small):
        i = int(np.argmax(small))
        raise SolveError(f"|e10*e32| < 1e-12 at frequency index {i}: no dynamic range")

    if standards.line_s21 is not None:
        t = np.broadcast_to(np.asarray(standards.line_s21, dtype=complex), f.shape).copy()
    else:
        t = (l21 - e30) / p10
    degenerate = np.abs(1.0 - t * t) <= 1e-9
    if np.any(degenerate):
        i = int(np.argmax(degenerate))
        raise SolveError(
            f"line transmission t**2 = 1 at frequency index {i} "
            f"({f[i]} GHz): line is indistinguishable from the through"
        )

    x = (t22 - l22) / (1.0 - t * t)
    e33 = t22 - x
    w = (r22 - e33) / gamma
    small = np.abs(w) <= _EPS
    if np.any(small):
        i = int(np.argmax(small))
        raise SolveError(f"|e23*e32| < 1e-12 at frequency index {i}: no dynamic range")
    e11 = x / w

    if input_path_products is not None:
        e10_meas, e23_meas = input_path_products
        e10 = np.broadcast_to(np.asarray(e10_meas, dtype=complex), f.shape).copy()
        if np.any(np.abs(e10) <= _EPS):
            raise SolveError("measured e10 input path has zero magnitude")
        e32 = p10 / e10
        e23 = w / e32
        e23_ref = np.broadcast_to(np.asarray(e23_meas, dtype=complex), f.shape)
        mism = np.abs(e23 - e23_ref) / np.maximum(np.abs(e23_ref), _EPS)
        if np.max(mism) > 1e-6:
            warnings.warn(
                f"direct e23 measurement disagrees with solved product by up to "
                f"{np.max(mism):.3g} relative; keeping product-consistent split",
                stacklevel=2,
            )
    else:
        e32 = np.ones(f.shape, dtype=complex)
        e10 = p10
        e23 = w

    return ErrorTerms(f, e10=e10, e23=e23, e32=e32, e30=e30, e33=e33, e11=e11)


def propagate_uncertainty(
    measured: TwoPortSet, terms: ErrorTerms, term_error_magnitude: float
) -> tuple[np.ndarray, np.ndarray]:
    """First-order S-parameter uncertainty from error-term vector errors.

    Each of the six terms is given a vector error of the stated magnitude
    along its worst-case phase; per-term worst-case magnitude deviations are
    combined root-sum-square. The correction is holomorphic in every term,
    so a real finite-difference step captures the full complex sensitivity.
    Returns (d|S21|, d|S22|) per frequency point.
    """
    if term_error_magnitude < 0:
        raise DataError("term_error_magnitude must be >= 0")
    if measured.freqs_ghz.shape != terms.freqs_ghz.shape or not np.allclose(
        measured.freqs_ghz, terms.freqs_ghz, rtol=0, atol=1e-9
    ):
        terms = terms.interpolated(measured.freqs_ghz)
    base = correct(measured, terms)
    acc21 = np.zeros(measured.freqs_ghz.size)
    acc22 = np.zeros(measured.freqs_ghz.size)
    for name in TERM_NAMES:
        scale = max(1.0, float(np.max(np.abs(terms.term(name)))))
        h = 1e-6 * scale
        pert = correct(measured, terms.with_term(name, terms.term(name) + h))
        g21 = (pert.s21 - base.s21) / h
        g22 = (pert.s22 - base.s22) / h
        acc21 += np.abs(g21) ** 2
        acc22 += np.abs(g22) ** 2
    return term_error_magnitude * np.sqrt(acc21), term_error_magnitude * np.sqrt(acc22)


# ---------------------------------------------------------------------------
# JSON serialization: a document keyed by frequency, six re/im pairs per point
# ---------------------------------------------------------------------------


def terms_to_json_dict(terms: ErrorTerms) -> dict:
    points = {}
    for i, f in enumerate(terms.freqs_ghz):
        points[repr(float(f))] = {
            name: [float(getattr(terms, name)[i].real), float(getattr(terms, name)[i].imag)]
            for name in TERM_NAMES
        }
    return {"schema_version": 1, "kind": "error_terms", "points": points}


def terms_from_json_dict(doc: dict) -> ErrorTerms:
    if doc.get("kind") != "error_terms":
        raise DataError(f"not an error-terms document (kind={doc.get('kind')!r})")
    pts = doc.get("points", {})
    if not pts:
        raise DataError("error-terms document has no points")
    keys = sorted(pts.keys(), key=float)
    freqs = [float(k) for k in keys]
    arrays = {name: [] for name in TERM_NAMES}
    for k in keys:
        rec = pts[k]
        for name in TERM_NAMES:
            re, im = rec[name]
            arrays[name].append(complex(re, im))
    return ErrorTerms(np.array(freqs), **{k: np.array(v) for k, v in arrays.items()})


def load_terms(path) -> ErrorTerms:
    with open(path, "r", encoding="utf-8") as fh:
        return terms_from_json_dict(json.load(fh))


def save_terms(path, terms: ErrorTerms) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(terms_to_json_dict(terms), fh, sort_keys=True, indent=2)
        fh.write("\n")
