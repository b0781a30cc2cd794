"""Finline taper contour, geometry export, and the coupling design rule.

The taper edge follows

    y(x) = ((W0 - S1)/2) * (x/A1) * sqrt(2 - (x/A1)**2),   0 <= x <= A1

which rises from 0 at the waveguide entrance (nearly linear there, slope
sqrt(2)*(W0 - S1)/(2*A1)) to (W0 - S1)/2 where the slot of width S1 begins.
All dimensions are millimetres.

The empirical coupling rule maps resonator-to-slotline separation d (um) to
the coupling quality factor:  log10(Qe) = 0.06491 + 0.0390 * d. The two
constants are a fit to simulated geometry and can be overridden.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import DataError, ParseError

#: Optimized dimensions (mm) of the reference design.
DEFAULT_DIMS_MM = {
    "H0": 2.54, "L1": 3.45, "L2": 2.27, "L3": 1.66,
    "T0": 0.1, "H1": 0.4, "D1": 0.2, "D2": 0.412,
    "W0": 1.27, "W1": 2.29, "W2": 2.11, "S1": 0.04,
    "A1": 0.895, "D0": 0.55, "D3": 0.8, "R1": 0.4,
}

QE_LOG10_INTERCEPT = 0.06491
QE_LOG10_SLOPE_PER_UM = 0.0390


@dataclass(frozen=True)
class TaperSpec:
    """The sixteen geometric parameters plus contour sampling control."""

    H0: float = DEFAULT_DIMS_MM["H0"]
    L1: float = DEFAULT_DIMS_MM["L1"]
    L2: float = DEFAULT_DIMS_MM["L2"]
    L3: float = DEFAULT_DIMS_MM["L3"]
    T0: float = DEFAULT_DIMS_MM["T0"]
    H1: float = DEFAULT_DIMS_MM["H1"]
    D1: float = DEFAULT_DIMS_MM["D1"]
    D2: float = DEFAULT_DIMS_MM["D2"]
    W0: float = DEFAULT_DIMS_MM["W0"]
    W1: float = DEFAULT_DIMS_MM["W1"]
    W2: float = DEFAULT_DIMS_MM["W2"]
    S1: float = DEFAULT_DIMS_MM["S1"]
    A1: float = DEFAULT_DIMS_MM["A1"]
    D0: float = DEFAULT_DIMS_MM["D0"]
    D3: float = DEFAULT_DIMS_MM["D3"]
    R1: float = DEFAULT_DIMS_MM["R1"]
    n_points: int = 1001

    def __post_init__(self):
        for f in fields(self):
            if f.name == "n_points":
                continue
            if not getattr(self, f.name) > 0:
                raise DataError(f"dimension {f.name} must be positive")
        if not self.S1 < self.W0:
            raise DataError("slot width S1 must be narrower than waveguide dimension W0")
        if self.n_points < 2:
            raise DataError("n_points must be at least 2")

    @classmethod
    def from_mapping(cls, mapping, n_points: int | None = None) -> "TaperSpec":
        """Build a spec from a {name: value} mapping with Table-style keys."""
        kwargs = {}
        valid = {f.name for f in fields(cls)}
        for key, val in mapping.items():
            name = key.strip().upper() if key.strip().lower() != "n_points" else "n_points"
            if name not in valid:
                raise DataError(f"unknown taper dimension {key!r}")
            kwargs[name] = int(val) if name == "n_points" else float(val)
        if n_points is not None:
            kwargs["n_points"] = n_points
        return cls(**kwargs)

    @property
    def half_span_mm(self) -> float:
        return 0.5 * (self.W0 - self.S1)


@dataclass(frozen=True)
class Contour:
    """Sampled taper edge: the +y half only; the -y half is its mirror."""

    points: np.ndarray  # shape (n, 2): columns x_mm, y_mm

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).copy()
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 2:
            raise DataError("contour must be an (n >= 2, 2) array of x,y points")
        if not np.all(np.isfinite(p)):
            raise DataError("contour contains non-finite points")
        if np.any(np.diff(p[:, 0]) <= 0):
            raise DataError("contour x must be strictly increasing")
        if np.any(np.diff(p[:, 1]) < 0):
            raise DataError("contour y must be non-decreasing")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @property
    def x_mm(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y_mm(self) -> np.ndarray:
        return self.points[:, 1]


def contour_y(x_mm, spec: TaperSpec):
    """Taper edge height at position x_mm; accepts scalars or arrays."""
    x = np.asarray(x_mm, dtype=float)
    if np.any(x < 0) or np.any(x > spec.A1):
        raise DataError(f"x must lie in [0, {spec.A1}] mm")
    u = x / spec.A1
    y = spec.half_span_mm * u * np.sqrt(2.0 - u * u)
    return float(y) if np.isscalar(x_mm) else y


def generate_contour(spec: TaperSpec) -> Contour:
    """Sample the taper edge on a uniform grid of spec.n_points."""
    x = np.linspace(0.0, spec.A1, spec.n_points)
    return Contour(np.column_stack([x, contour_y(x, spec)]))


def export_geometry(contour: Contour, fmt: str, slot_width_mm: float = DEFAULT_DIMS_MM["S1"]) -> str:
    """Serialize a contour as CSV (x,y in mm) or as an SVG slot outline.

    The SVG polygon joins the +y edge, the far end of the slot, and the
    mirrored -y edge into one closed outline; coordinates are micrometres
    (1 user unit = 1 um) with 4 decimal places.
    """
    fmt = fmt.lower()
    if fmt == "csv":
        out = io.StringIO()
        out.write("x_mm,y_mm\n")
        for x, y in contour.points:
            out.write(f"{float(x)!r},{float(y)!r}\n")
        return out.getvalue()
    if fmt == "svg":
        return _slot_outline_svg(contour, slot_width_mm)
    raise DataError(f"unknown export format {fmt!r} (expected 'csv' or 'svg')")


def _slot_outline_svg(contour: Contour, slot_width_mm: float) -> str:
    if not 0 < slot_width_mm:
        raise DataError("slot width must be positive")
    x_um = contour.x_mm * 1000.0
    y_end = contour.y_mm[-1]
    # gap half-opening: slot half-width at the narrow end, full span at x=0
    edge_um = (0.5 * slot_width_mm + (y_end - contour.y_mm)) * 1000.0
    fwd = list(zip(x_um, edge_um))
    back = list(zip(x_um[::-1], -edge_um[::-1]))
    pts = fwd + back + [fwd[0]]
    coords = " ".join(f"{x:.4f},{y:.4f}" for x, y in pts)
    xmax = float(x_um[-1])
    ymax = float(edge_um[0])
    pad = 0.05 * max(xmax, 2 * ymax)
    vb = f"{-pad:.4f} {-(ymax + pad):.4f} {xmax + 2 * pad:.4f} {2 * (ymax + pad):.4f}"
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{vb}">\n'
        f"<!-- taper slot outline; 1 user unit = 1 um -->\n"
        f"<!-- slot_width_mm={slot_width_mm!r} n_points={contour.points.shape[0]} -->\n"
        f'<polygon points="{coords}" fill="none" stroke="black" stroke-width="2"/>\n'
        "</svg>\n"
    )


def read_contour_csv(source) -> Contour:
    """Re-import a contour written by export_geometry(..., 'csv')."""
    from .netdata import _read_text

    text = _read_text(source)
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0].lower().replace(" ", "") != "x_mm,y_mm":
        raise ParseError("line 1: expected header 'x_mm,y_mm'")
    pts = []
    for lineno, ln in enumerate(lines[1:], start=2):
        try:
            x, y = (float(c) for c in ln.split(","))
        except ValueError:
            raise ParseError(f"line {lineno}: bad contour row") from None
        pts.append((x, y))
    return Contour(np.array(pts))


def qe_of_separation(
    d_um: float,
    log10_intercept: float = QE_LOG10_INTERCEPT,
    log10_slope_per_um: float = QE_LOG10_SLOPE_PER_UM,
) -> float:
    """Coupling quality factor at resonator-to-slotline separation d (um)."""
    if d_um < 0:
        raise DataError("separation must be >= 0")
    return 10.0 ** (log10_intercept + log10_slope_per_um * d_um)


def separation_for_qe(
    qe_target: float,
    log10_intercept: float = QE_LOG10_INTERCEPT,
    log10_slope_per_um: float = QE_LOG10_SLOPE_PER_UM,
) -> float:
    """Separation (um) that realizes a target Qe; inverse of qe_of_separation."""
    floor = 10.0**log10_intercept
    if not qe_target > floor:
        raise DataError(f"target Qe must exceed the zero-separation value {floor:.6g}")
    return (math.log10(qe_target) - log10_intercept) / log10_slope_per_um
