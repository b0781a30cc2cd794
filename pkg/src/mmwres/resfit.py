"""Asymmetric notch-resonance model and a three-stage fitter.

The line shape is

    S21(f) = a * exp(i*(theta + 2*pi*f*tau)) *
             [1 - (Q/|Qe*|) * exp(i*phi) / (1 + 2i*Q*(f - f0)/f0)]

with total quality factor 1/Q = 1/Qi + cos(phi)/|Qe*| and a complex coupling
quality factor Qe = |Qe*| * exp(-i*phi). The rotation phi encodes asymmetric
coupling; constraining it to (-pi/2, pi/2) keeps cos(phi) > 0 and the
derived Qi positive. Fitting both quadratures with phi free matters: forcing
phi = 0 on asymmetric data biases Qi.

Fitting proceeds in three stages: electrical-delay removal by a linear phase
fit on the off-resonant wings, an algebraic circle fit plus phase fit for
initial values, and a full complex nonlinear least squares on both
quadratures simultaneously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar
from scipy.optimize import least_squares

from .errors import DataError, FitError, NoDipError
from .netdata import ComplexSweep

_PHI_BOUND = math.pi / 2 - 1e-6
_MAX_ITER = 200


@dataclass(frozen=True)
class ResonanceParams:
    f0_ghz: float
    q_total: float
    qe_mag: float
    phi_rad: float
    baseline_amp: float = 1.0
    baseline_phase_rad: float = 0.0
    electrical_delay_ns: float = 0.0

    def __post_init__(self):
        if not self.f0_ghz > 0:
            raise DataError("f0_ghz must be positive")
        if not (self.q_total > 0 and self.qe_mag > 0 and self.baseline_amp > 0):
            raise DataError("q_total, qe_mag, and baseline_amp must be positive")
        if not -math.pi / 2 < self.phi_rad < math.pi / 2:
            raise DataError("phi_rad must lie in (-pi/2, pi/2)")
        # allow float round-off on the Qi >= 0 constraint
        if self.inverse_qi() < -1e-12 / self.q_total:
            raise DataError("1/Q < cos(phi)/|Qe*| implies negative internal Q")

    def inverse_qi(self) -> float:
        return 1.0 / self.q_total - math.cos(self.phi_rad) / self.qe_mag

    @property
    def qi(self) -> float:
        loss = self.inverse_qi()
        return math.inf if loss <= 0 else 1.0 / loss

    @property
    def qe_complex(self) -> complex:
        return self.qe_mag * np.exp(-1j * self.phi_rad)


def s21_model(f_ghz, p: ResonanceParams):
    """Evaluate the notch model; accepts a scalar or array of GHz values."""
    f = np.asarray(f_ghz, dtype=float)
    x = (f - p.f0_ghz) / p.f0_ghz
    notch = 1.0 - (p.q_total / p.qe_mag) * np.exp(1j * p.phi_rad) / (1.0 + 2j * p.q_total * x)
    baseline = p.baseline_amp * np.exp(
        1j * (p.baseline_phase_rad + 2.0 * math.pi * f * p.electrical_delay_ns)
    )
    out = baseline * notch
    return complex(out) if np.isscalar(f_ghz) else out


@dataclass(frozen=True)
class ResonanceFit:
    params: ResonanceParams
    qi: float
    qi_sigma: float
    qe_complex: complex
    covariance: np.ndarray
    param_names: tuple[str, ...]
    sigmas: dict
    residual_rms: float
    n_points: int
    nfev: int

    def to_json_dict(self) -> dict:
        p = self.params
        return {
            "schema_version": 1,
            "kind": "resonance_fit",
            "f0_ghz": p.f0_ghz,
            "q_total": p.q_total,
            "qe_mag": p.qe_mag,
            "phi_rad": p.phi_rad,
            "baseline_amp": p.baseline_amp,
            "baseline_phase_rad": p.baseline_phase_rad,
            "electrical_delay_ns": p.electrical_delay_ns,
            "qi": self.qi,
            "qe_re": self.qe_complex.real,
            "qe_im": self.qe_complex.imag,
            "sigmas": dict(self.sigmas),
            "qi_sigma": self.qi_sigma,
            "residual_rms": self.residual_rms,
            "n_points": self.n_points,
            "nfev": self.nfev,
        }


# ---------------------------------------------------------------------------
# stage 1: electrical delay from the off-resonant wings
# ---------------------------------------------------------------------------


def _wing_indices(n: int) -> np.ndarray:
    k = max(3, n // 10)
    k = min(k, n // 3) or 1
    return np.r_[0:k, n - k : n]


def _estimate_delay(f: np.ndarray, z: np.ndarray) -> float:
    phase = np.unwrap(np.angle(z))
    w = _wing_indices(f.size)
    slope = np.polyfit(f[w], phase[w], 1)[0]
    return slope / (2.0 * math.pi)  # ns, since f is in GHz


# ---------------------------------------------------------------------------
# stage 2: algebraic circle fit (Taubin) and phase fit
# ---------------------------------------------------------------------------


def _fit_circle(z: np.ndarray) -> tuple[float, float, float]:
    """Taubin algebraic circle fit; returns (xc, yc, r)."""
    x, y = z.real, z.imag
    xm, ym = x.mean(), y.mean()
    u, v = x - xm, y - ym
    suu, svv, suv = (u * u).sum(), (v * v).sum(), (u * v).sum()
    suuu, svvv = (u * u * u).sum(), (v * v * v).sum()
    suvv, svuu = (u * v * v).sum(), (v * u * u).sum()
    a = np.array([[suu, suv], [suv, svv]])
    b = np.array([suuu + suvv, svvv + svuu]) / 2.0
    try:
        uc, vc = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        raise NoDipError("trace is degenerate: circle fit failed") from None
    r = math.sqrt(uc * uc + vc * vc + (suu + svv) / z.size)
    return uc + xm, vc + ym, r


def _phase_residual(p, f, phase):
    theta0, lnq, f0 = p
    model = theta0 + 2.0 * np.arctan(2.0 * np.exp(lnq) * (1.0 - f / f0))
    d = phase - model
    return np.arctan2(np.sin(d), np.cos(d))


def _phase_fit(f, z_centered, f0_init, q_init):
    phase = np.unwrap(np.angle(z_centered))
    theta0 = float(np.median(phase))
    p0 = np.array([theta0, math.log(max(q_init, 1.0)), f0_init])
    res = least_squares(
        _phase_residual, p0, args=(f, phase), method="lm", max_nfev=4000
    )
    theta0, lnq, f0 = res.x
    return theta0, math.exp(lnq), f0


def _initial_guess(f: np.ndarray, z: np.ndarray) -> ResonanceParams:
    tau = _estimate_delay(f, z)
    zd = z * np.exp(-2j * math.pi * f * tau)
    xc, yc, r0 = _fit_circle(zd)
    c = complex(xc, yc)

    mag = np.abs(zd)
    i0 = int(np.argmin(_smooth(mag)))
    f0_init = f[i0]
    span = f[-1] - f[0]
    q_init = _estimate_q_from_dip(f, mag, i0) or 10.0 * f0_init / span
    theta0, q, f0 = _phase_fit(f, zd - c, f0_init, q_init)
    if not (f[0] < f0 < f[-1]) or not np.isfinite(q) or q <= 0:
        f0, q = f0_init, q_init

    offres = c + r0 * np.exp(1j * (theta0 + math.pi))
    if abs(offres) <= 0:
        raise NoDipError("off-resonant point estimate collapsed to zero")
    amp = abs(offres)
    theta = math.atan2(offres.imag, offres.real)
    cn = c / offres
    phi = math.atan2((1.0 - cn).imag, (1.0 - cn).real)
    phi = max(-_PHI_BOUND, min(_PHI_BOUND, phi))
    qe = q / max(2.0 * abs(1.0 - cn), 1e-12)
    # keep the derived Qi non-negative in the starting point
    if 1.0 / q - math.cos(phi) / qe <= 0:
        qe = 1.001 * q * math.cos(phi) if phi != 0 else 1.001 * q
    return ResonanceParams(
        f0_ghz=float(f0),
        q_total=float(q),
        qe_mag=float(qe),
        phi_rad=float(phi),
        baseline_amp=float(amp),
        baseline_phase_rad=float(theta),
        electrical_delay_ns=float(tau),
    )


def _smooth(y: np.ndarray) -> np.ndarray:
    if y.size < 25:
        return y
    k = 5
    # reflect-pad so the moving average carries no edge artifacts
    ypad = np.concatenate([y[:k][::-1], y, y[-k:][::-1]])
    sm = np.convolve(ypad, np.ones(k) / k, mode="same")
    return sm[k : k + y.size]


def _estimate_q_from_dip(f, mag, i0) -> float | None:
    base = np.median(mag[_wing_indices(f.size)])
    depth = base - mag[i0]
    if depth <= 0:
        return None
    half = base - depth / 2.0
    lo = i0
    while lo > 0 and mag[lo] < half:
        lo -= 1
    hi = i0
    while hi < mag.size - 1 and mag[hi] < half:
        hi += 1
    width = f[hi] - f[lo]
    if width <= 0:
        return None
    return f[i0] / width


def _check_dip(f: np.ndarray, z: np.ndarray) -> None:
    zd = z * np.exp(-2j * math.pi * f * _estimate_delay(f, z))
    mag = _smooth(np.abs(zd))
    i0 = int(np.argmin(mag))
    base = np.median(mag[_wing_indices(f.size)])
    noise = 1.4826 * np.median(np.abs(np.diff(np.abs(zd)))) / math.sqrt(2.0)
    depth = base - mag[i0]
    if i0 <= 1 or i0 >= f.size - 2 or depth <= max(5.0 * noise, 1e-9 * max(base, 1e-30)):
        raise NoDipError("no dip found: |S21| has no interior resonance minimum")


# ---------------------------------------------------------------------------
# stage 3: full complex nonlinear least squares
# ---------------------------------------------------------------------------


def _pack(p: ResonanceParams, fix_phi: float | None) -> np.ndarray:
    u = [p.f0_ghz, math.log(p.q_total), math.log(p.qe_mag)]
    if fix_phi is None:
        u.append(p.phi_rad)
    u += [math.log(p.baseline_amp), p.baseline_phase_rad, p.electrical_delay_ns]
    return np.array(u)


def _unpack(u: np.ndarray, fix_phi: float | None) -> ResonanceParams:
    if fix_phi is None:
        f0, lnq, lnqe, phi, lna, theta, tau = u
    else:
        f0, lnq, lnqe, lna, theta, tau = u
        phi = fix_phi
    return ResonanceParams(
        f0_ghz=float(f0),
        q_total=math.exp(lnq),
        qe_mag=math.exp(lnqe),
        phi_rad=float(phi),
        baseline_amp=math.exp(lna),
        baseline_phase_rad=float(theta),
        electrical_delay_ns=float(tau),
    )


def _model_from_vector(u, f, fix_phi):
    if fix_phi is None:
        f0, lnq, lnqe, phi, lna, theta, tau = u
    else:
        f0, lnq, lnqe, lna, theta, tau = u
        phi = fix_phi
    q = np.exp(lnq)
    x = (f - f0) / f0
    notch = 1.0 - (q / np.exp(lnqe)) * np.exp(1j * phi) / (1.0 + 2j * q * x)
    return np.exp(lna) * np.exp(1j * (theta + 2.0 * math.pi * f * tau)) * notch


def fit_resonance(
    sweep: ComplexSweep,
    guess: ResonanceParams | None = None,
    fix_phi: float | None = None,
    weights=None,
) -> ResonanceFit:
    """Fit the notch model to a complex sweep.

    ``guess`` overrides the automatic stage-1/2 initialization. ``fix_phi``
    pins the rotation angle (useful to quantify the bias it would cause).
    ``weights`` gives optional per-point 1-sigma uncertainties; residuals
    are scaled by their inverse.
    """
    f = sweep.freqs_ghz
    z = sweep.values
    if f.size < 7:
        raise DataError(f"need at least 7 points to fit a resonance, got {f.size}")
    if fix_phi is not None and not -math.pi / 2 < fix_phi < math.pi / 2:
        raise DataError("fix_phi must lie in (-pi/2, pi/2)")
    _check_dip(f, z)
    p0 = guess if guess is not None else _initial_guess(f, z)

    if weights is None:
        w = np.ones(f.size)
    else:
        w = 1.0 / np.asarray(weights, dtype=float)
        if w.shape != f.shape or not np.all(np.isfinite(w)):
            raise DataError("weights must be finite per-point sigmas matching the grid")

    def residual(u):
        r = (_model_from_vector(u, f, fix_phi) - z) * w
        return np.concatenate([r.real, r.imag])

    u0 = _pack(p0, fix_phi)
    nu = u0.size
    lower = np.full(nu, -np.inf)
    upper = np.full(nu, np.inf)
    lower[0], upper[0] = f[0], f[-1]
    if fix_phi is None:
        lower[3], upper[3] = -_PHI_BOUND, _PHI_BOUND
    u0 = np.clip(u0, lower, upper)

    res = least_squares(
        residual,
        u0,
        bounds=(lower, upper),
        method="trf",
        x_scale="jac",
        ftol=1e-15,
        xtol=1e-15,
        gtol=1e-15,
        max_nfev=_MAX_ITER * (nu + 1),
    )
    if res.status <= 0:
        raise FitError(f"fit diverged: iteration cap reached after {res.nfev} evaluations")
    at_bound = (np.abs(res.x - lower) < 1e-12) | (np.abs(res.x - upper) < 1e-12)
    if np.any(at_bound):
        names = _param_names(fix_phi)
        raise FitError(f"parameter at bound: {[n for n, b in zip(names, at_bound) if b]}")

    params = _unpack(res.x, fix_phi)
    names = _param_names(fix_phi)

    m = 2 * f.size
    dof = max(m - nu, 1)
    s2 = 2.0 * res.cost / dof
    jtj = res.jac.T @ res.jac
    try:
        cov_u = s2 * np.linalg.pinv(jtj)
    except np.linalg.LinAlgError:
        cov_u = np.full((nu, nu), np.nan)
    scale = _phys_scale(params, fix_phi)
    cov = cov_u * np.outer(scale, scale)
    cov = 0.5 * (cov + cov.T)
    sigmas = {n: float(math.sqrt(max(cov[i, i], 0.0))) for i, n in enumerate(names)}

    qi = params.qi
    qi_sigma = _qi_sigma(params, cov, names)
    resid = _model_from_vector(res.x, f, fix_phi) - z
    return ResonanceFit(
        params=params,
        qi=qi,
        qi_sigma=qi_sigma,
        qe_complex=params.qe_complex,
        covariance=cov,
        param_names=tuple(names),
        sigmas=sigmas,
        residual_rms=float(np.sqrt(np.mean(np.abs(resid) ** 2))),
        n_points=f.size,
        nfev=res.nfev,
    )


def _param_names(fix_phi):
    base = ["f0_ghz", "q_total", "qe_mag"]
    if fix_phi is None:
        base.append("phi_rad")
    return base + ["baseline_amp", "baseline_phase_rad", "electrical_delay_ns"]


def _phys_scale(p: ResonanceParams, fix_phi) -> np.ndarray:
    s = [1.0, p.q_total, p.qe_mag]
    if fix_phi is None:
        s.append(1.0)
    return np.array(s + [p.baseline_amp, 1.0, 1.0])


def _qi_sigma(p: ResonanceParams, cov: np.ndarray, names: list[str]) -> float:
    """1-sigma uncertainty of the derived Qi via the gradient of 1/Qi."""
    grad = {
        "q_total": -1.0 / p.q_total**2,
        "qe_mag": math.cos(p.phi_rad) / p.qe_mag**2,
        "phi_rad": math.sin(p.phi_rad) / p.qe_mag,
    }
    g = np.array([grad.get(n, 0.0) for n in names])
    var = float(g @ cov @ g)
    if not math.isfinite(p.qi):
        return math.inf if var > 0 else 0.0
    return p.qi**2 * math.sqrt(max(var, 0.0))


# ---------------------------------------------------------------------------
# drive-level conversion
# ---------------------------------------------------------------------------


def estimate_photon_number(applied_power_w: float, fit: ResonanceFit) -> float:
    """Steady-state mean photon number for a notch resonator.

    Uses the convention n = 2 * Q^2 * P / (hbar * w0^2 * |Qe|). This is a
    bookkeeping convention for comparing drive levels, not a calibrated
    absolute measurement.
    """
    if applied_power_w < 0:
        raise DataError("applied power must be >= 0")
    if applied_power_w == 0:
        return 0.0
    p = fit.params
    w0 = 2.0 * math.pi * p.f0_ghz * 1e9
    return 2.0 * p.q_total**2 * applied_power_w / (hbar * w0**2 * abs(fit.qe_complex))


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)
