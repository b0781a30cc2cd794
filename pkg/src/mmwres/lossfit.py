"""Loss channels of a superconducting resonator and sweep fitters.

Three channels add as inverse quality factors:

    1/Qi(T, n) = 1/Q_tls(n, T) + 1/Q_sigma(T) + 1/Q_other

* TLS saturation:  Q_tls = Q_tls0 * sqrt(1 + (n/n_c)**beta * th) / th with
  th = tanh(h*f / (kB*T)).
* Quasiparticles:  Q_sigma = Q_sigma0 * sigma2/sigma1 from the thermal
  integrals of the BCS complex surface conductance, evaluated with the gap
  interpolation Delta(T) = Delta0 * tanh(1.74*sqrt(Tc/T - 1)),
  Delta0 = 1.764*kB*Tc (accurate to <2% against the self-consistent gap).
* Q_other: power- and temperature-independent residual loss.

Energies are carried in kelvin units throughout the conductance integrals.
Fitting operates on loss (1/Q) rather than Q so the channels enter linearly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.constants import h, k
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import least_squares

from .errors import DataError, FitError, NumericsError, ParseError

BCS_GAP_RATIO = 1.764

_K_PER_GHZ = h * 1e9 / k  # photon energy in kelvin per GHz


def photon_energy_k(f_ghz: float) -> float:
    """h*f expressed in kelvin."""
    return _K_PER_GHZ * f_ghz


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


@dataclass(frozen=True)
class TlsParams:
    q_tls0: float
    n_c: float
    beta: float

    def __post_init__(self):
        if not (self.q_tls0 > 0 and self.n_c > 0):
            raise DataError("q_tls0 and n_c must be positive")
        if not 0 < self.beta <= 2:
            raise DataError("beta must lie in (0, 2]")


@dataclass(frozen=True)
class QpParams:
    q_sigma0: float
    tc_k: float
    gap0_k: float | None = None

    def __post_init__(self):
        if not (self.q_sigma0 > 0 and self.tc_k > 0):
            raise DataError("q_sigma0 and tc_k must be positive")
        if self.gap0_k is None:
            object.__setattr__(self, "gap0_k", BCS_GAP_RATIO * self.tc_k)
        if not 1.0 <= self.gap0_k / self.tc_k <= 3.0:
            raise DataError("gap0_k/tc_k outside the sanity range [1, 3]")


@dataclass(frozen=True)
class LossBudget:
    tls: TlsParams
    qp: QpParams
    q_other: float

    def __post_init__(self):
        if not self.q_other > 0:
            raise DataError("q_other must be positive")


def q_tls(nbar: float, t_k: float, f_ghz: float, p: TlsParams) -> float:
    """TLS-limited quality factor at mean photon number nbar."""
    if nbar < 0:
        raise DataError("nbar must be >= 0")
    if not (t_k > 0 and f_ghz > 0):
        raise DataError("t_k and f_ghz must be positive")
    th = math.tanh(photon_energy_k(f_ghz) / t_k)
    sat = (nbar / p.n_c) ** p.beta if nbar > 0 else 0.0
    return p.q_tls0 * math.sqrt(1.0 + sat * th) / th


def bcs_gap_k(t_k: float, qp: QpParams) -> float:
    """Gap Delta(T) in kelvin from the tanh interpolation; 0 at and above Tc."""
    if t_k >= qp.tc_k:
        return 0.0
    return qp.gap0_k * math.tanh(1.74 * math.sqrt(qp.tc_k / t_k - 1.0))


def _fermi(e_k: float, t_k: float) -> float:
    x = e_k / t_k
    if x > 700.0:
        return 0.0
    return 1.0 / (math.exp(x) + 1.0)


@lru_cache(maxsize=16384)
def _mb_sigma_cached(t_k: float, f_ghz: float, tc_k: float, gap0_k: float, rel_tol: float):
    """Thermal conductance integrals (sigma1/sigma_n, sigma2/sigma_n).

    The edge singularities are removed by substitution before handing the
    integrands to adaptive quadrature: E = Delta*cosh(u) for the thermal
    absorption integral on [Delta, inf), and an arcsine stretch
    E = m - r*cos(theta) for the finite ranges whose endpoints carry
    inverse-square-root factors. The upper limit of the thermal integral is
    truncated where the Fermi occupation drops below 1e-18.
    """
    d = gap0_k * math.tanh(1.74 * math.sqrt(tc_k / t_k - 1.0)) if t_k < tc_k else 0.0
    hw = photon_energy_k(f_ghz)
    if d == 0.0:
        return 1.0, 0.0

    def fermi(e):
        return _fermi(e, t_k)

    opts = dict(epsabs=0.0, epsrel=rel_tol, limit=400)
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)

        # thermal absorption: E = d*cosh(u); dE cancels sqrt(E^2 - d^2).
        # Truncate where the occupation falls 1e-18 below its peak at E = d.
        e_max = d + t_k * math.log(1e18)
        u_max = math.acosh(e_max / d)

        def s1_thermal(u):
            e = d * math.cosh(u)
            num = e * e + d * d + hw * e
            den = math.sqrt((e + hw) ** 2 - d * d)
            return (fermi(e) - fermi(e + hw)) * num / den

        try:
            val, _ = quad(s1_thermal, 0.0, u_max, **opts)
        except IntegrationWarning as exc:
            raise NumericsError(f"sigma1 quadrature did not converge: {exc}") from None
        s1 = 2.0 / hw * val

        # photon-assisted pair breaking, only when hw exceeds 2*Delta
        if hw > 2.0 * d:
            a, b = d - hw, -d
            m, r = 0.5 * (a + b), 0.5 * (b - a)

            def s1_break(th):
                e = m - r * math.cos(th)
                num = abs(e * e + d * d + hw * e)
                den = math.sqrt((d - e) * (e + hw + d))
                return (1.0 - 2.0 * fermi(e + hw)) * num / den

            try:
                val, _ = quad(s1_break, 0.0, math.pi, **opts)
            except IntegrationWarning as exc:
                raise NumericsError(f"sigma1 pair-breaking quadrature failed: {exc}") from None
            s1 += val / hw

        # reactive response on [max(d-hw, -d), d]
        a, b = max(d - hw, -d), d
        m, r = 0.5 * (a + b), 0.5 * (b - a)
        subgap = hw <= 2.0 * d

        def s2_int(th):
            e = m - r * math.cos(th)
            num = e * e + d * d + hw * e
            if subgap:
                smooth = (d + e) * (e + hw + d)
            else:
                smooth = (e + hw - d) * (e + hw + d)
            if smooth <= 0.0:
                return 0.0
            return (1.0 - 2.0 * fermi(e + hw)) * num / math.sqrt(smooth)

        try:
            val, _ = quad(s2_int, 0.0, math.pi, **opts)
        except IntegrationWarning as exc:
            raise NumericsError(f"sigma2 quadrature did not converge: {exc}") from None
        s2 = val / hw

    return s1, s2


def mb_sigma(t_k: float, f_ghz: float, qp: QpParams, rel_tol: float = 1e-8):
    """(sigma1/sigma_n, sigma2/sigma_n) at temperature t_k and frequency f_ghz."""
    if not t_k > 0:
        raise DataError("t_k must be positive")
    if t_k >= qp.tc_k:
        raise DataError(f"t_k = {t_k} K is not below tc_k = {qp.tc_k} K")
    if not f_ghz > 0:
        raise DataError("f_ghz must be positive")
    return _mb_sigma_cached(float(t_k), float(f_ghz), float(qp.tc_k), float(qp.gap0_k), float(rel_tol))


def q_sigma(t_k: float, f_ghz: float, qp: QpParams) -> float:
    """Quasiparticle-limited Q. When sigma1 underflows to zero the loss is
    below float resolution and +inf is returned ("no quasiparticle loss at
    this precision")."""
    s1, s2 = mb_sigma(t_k, f_ghz, qp)
    if s1 <= 0.0:
        return math.inf
    return qp.q_sigma0 * s2 / s1


def qi_total(t_k: float, nbar: float, f_ghz: float, b: LossBudget) -> float:
    """Combined internal quality factor of all three channels."""
    loss = 1.0 / q_tls(nbar, t_k, f_ghz, b.tls)
    loss += 1.0 / q_sigma(t_k, f_ghz, b.qp)
    loss += 1.0 / b.q_other
    return 1.0 / loss


# ---------------------------------------------------------------------------
# power-sweep fitter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerFitResult:
    tls: TlsParams
    q_other: float
    covariance: np.ndarray
    param_names: tuple[str, ...]
    sigmas: dict
    unconstrained: tuple[str, ...]
    residual_rms: float

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "power_budget",
            "q_tls0": _finite_or_none(self.tls.q_tls0),
            "n_c": self.tls.n_c,
            "beta": self.tls.beta,
            "q_other": self.q_other,
            "sigmas": dict(self.sigmas),
            "unconstrained": list(self.unconstrained),
            "residual_rms": self.residual_rms,
        }


def _split_points(points, x_name: str):
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise DataError(f"points must be rows of ({x_name}, qi[, qi_err])")
    x = arr[:, 0]
    qi = arr[:, 1]
    err = arr[:, 2] if arr.shape[1] == 3 else None
    if np.any(qi <= 0):
        raise DataError("qi values must be positive")
    if err is not None and np.any(err <= 0):
        raise DataError("qi_err values must be positive")
    return x, qi, err


def _loss_weights(qi: np.ndarray, err):
    # residuals live in loss space: sigma(1/q) = sigma(q)/q^2
    if err is None:
        return np.ones_like(qi)
    return qi**2 / err


def fit_power_sweep(points, t_k: float, f_ghz: float) -> PowerFitResult:
    """Fit 1/Qi(nbar) with TLS + residual channels; Q_sigma is taken as
    infinite (valid deep below Tc where quasiparticles are frozen out).

    Requires at least 5 points spanning 3 decades of photon number. When the
    sweep shows < 5% relative variation of Qi the TLS parameters are not
    identifiable: the residual channel alone is fitted and q_tls0, n_c and
    beta are flagged "unconstrained" (q_tls0 is reported as +inf).
    """
    nbar, qi, err = _split_points(points, "nbar")
    if nbar.size < 5:
        raise DataError(f"need at least 5 points, got {nbar.size}")
    if np.any(nbar <= 0):
        raise DataError("nbar values must be positive for a power sweep")
    if nbar.max() / nbar.min() < 1e3:
        raise DataError("insufficient span: need >= 3 decades of photon number")

    w = _loss_weights(qi, err)
    loss = 1.0 / qi

    variation = (qi.max() - qi.min()) / np.median(qi)
    if variation < 0.05:
        loss_mean = float(np.average(loss, weights=w**2))
        q_other = 1.0 / loss_mean
        var = float(np.average((loss - loss_mean) ** 2, weights=w**2) / max(nbar.size - 1, 1))
        cov = np.array([[var * q_other**4]])
        return PowerFitResult(
            tls=TlsParams(q_tls0=math.inf, n_c=1.0, beta=0.5),
            q_other=q_other,
            covariance=cov,
            param_names=("q_other",),
            sigmas={"q_other": math.sqrt(max(cov[0, 0], 0.0))},
            unconstrained=("q_tls0", "n_c", "beta"),
            residual_rms=float(np.sqrt(np.mean((loss - loss_mean) ** 2))),
        )

    th = math.tanh(photon_energy_k(f_ghz) / t_k)
    norm = float(np.median(loss))  # keep the cost O(1) so ftol/gtol can bite

    def model_loss(u):
        lnq0, lnnc, beta, lnqo = u
        sat = (nbar / np.exp(lnnc)) ** beta
        qtls = np.exp(lnq0) * np.sqrt(1.0 + sat * th) / th
        return 1.0 / qtls + 1.0 / np.exp(lnqo)

    def residual(u):
        return (model_loss(u) - loss) * w / norm

    q_other0 = 1.05 * qi.max()
    low = loss[np.argmin(nbar)] - 1.0 / q_other0
    q_tls0_init = th / low if low > 0 else 10.0 * qi.max()
    u0 = np.array(
        [
            math.log(max(q_tls0_init, 1.0)),
            math.log(math.sqrt(nbar.min() * nbar.max())),
            0.5,
            math.log(q_other0),
        ]
    )
    lower = np.array([-np.inf, -np.inf, 1e-3, -np.inf])
    upper = np.array([np.inf, np.inf, 2.0, np.inf])
    res = least_squares(
        residual, u0, bounds=(lower, upper), method="trf", x_scale="jac",
        ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=2000,
    )
    if res.status <= 0:
        raise FitError("power-sweep fit did not converge")
    lnq0, lnnc, beta, lnqo = res.x
    tls = TlsParams(q_tls0=math.exp(lnq0), n_c=math.exp(lnnc), beta=float(beta))
    q_other = math.exp(lnqo)

    names = ("q_tls0", "n_c", "beta", "q_other")
    cov = _covariance(res, scales=np.array([tls.q_tls0, tls.n_c, 1.0, q_other]))
    sigmas = {n: float(math.sqrt(max(cov[i, i], 0.0))) for i, n in enumerate(names)}
    return PowerFitResult(
        tls=tls,
        q_other=q_other,
        covariance=cov,
        param_names=names,
        sigmas=sigmas,
        unconstrained=(),
        residual_rms=float(np.sqrt(np.mean((model_loss(res.x) - loss) ** 2))),
    )


def _covariance(res, scales: np.ndarray) -> np.ndarray:
    m, n = res.jac.shape
    dof = max(m - n, 1)
    s2 = 2.0 * res.cost / dof
    try:
        cov_u = s2 * np.linalg.pinv(res.jac.T @ res.jac)
    except np.linalg.LinAlgError:
        cov_u = np.full((n, n), np.nan)
    cov = cov_u * np.outer(scales, scales)
    return 0.5 * (cov + cov.T)


# ---------------------------------------------------------------------------
# temperature-sweep fitter
# ---------------------------------------------------------------------------

_TEMP_PARAMS = ("q_sigma0", "tc_k", "q_tls0", "q_other")


@dataclass(frozen=True)
class TemperatureFitResult:
    budget: LossBudget
    covariance: np.ndarray
    param_names: tuple[str, ...]
    sigmas: dict
    unconstrained: tuple[str, ...]
    residual_rms: float

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "temperature_budget",
            "q_sigma0": _finite_or_none(self.budget.qp.q_sigma0),
            "tc_k": self.budget.qp.tc_k,
            "q_tls0": _finite_or_none(self.budget.tls.q_tls0),
            "n_c": self.budget.tls.n_c,
            "beta": self.budget.tls.beta,
            "q_other": self.budget.q_other,
            "sigmas": dict(self.sigmas),
            "unconstrained": list(self.unconstrained),
            "residual_rms": self.residual_rms,
        }


def fit_temperature_sweep(
    points, nbar: float, f_ghz: float, fixed: dict | None = None
) -> TemperatureFitResult:
    """Fit 1/Qi(T) over {q_sigma0, tc_k, q_tls0, q_other} at fixed nbar.

    ``fixed`` pins any subset of {q_sigma0, tc_k, q_tls0, q_other, n_c,
    beta}; n_c and beta are never fitted here (a single-drive temperature
    sweep cannot separate them from q_tls0) and default to n_c=100,
    beta=0.5 unless supplied. The TLS temperature dependence enters through
    both tanh factors. If the data do not reach 0.3*Tc the quasiparticle
    prefactor is not identifiable: it is dropped from the fit and flagged.

    The caveat on nbar: it is taken as one fixed number for the whole sweep,
    even though the physical drive may vary as the linewidth changes.
    """
    t, qi, err = _split_points(points, "t_k")
    if np.any(t <= 0):
        raise DataError("temperatures must be positive")
    fixed = dict(fixed or {})
    n_c = float(fixed.pop("n_c", 100.0))
    beta = float(fixed.pop("beta", 0.5))
    gap0_k = fixed.pop("gap0_k", None)
    unknown = set(fixed) - set(_TEMP_PARAMS)
    if unknown:
        raise DataError(f"cannot fix unknown parameter(s) {sorted(unknown)}")

    tc_ref = float(fixed.get("tc_k", 9.2))
    if np.any(t >= tc_ref) and "tc_k" in fixed:
        raise DataError("temperature points at or above the fixed Tc")

    unconstrained = []
    if t.max() < 0.3 * tc_ref and "q_sigma0" not in fixed:
        # conductivity channel invisible this far below Tc
        fixed["q_sigma0"] = math.inf
        unconstrained.append("q_sigma0")
        if "tc_k" not in fixed:
            fixed["tc_k"] = tc_ref
            unconstrained.append("tc_k")

    free = [p for p in _TEMP_PARAMS if p not in fixed]
    if not free:
        raise DataError("all parameters fixed; nothing to fit")

    w = _loss_weights(qi, err)
    loss = 1.0 / qi
    norm = float(np.median(loss))
    hw_k = photon_energy_k(f_ghz)

    def model_loss(values: dict) -> np.ndarray:
        th = np.tanh(hw_k / t)
        sat = (nbar / n_c) ** beta if nbar > 0 else 0.0
        qtls = values["q_tls0"] * np.sqrt(1.0 + sat * th) / th
        out = 1.0 / qtls + 1.0 / values["q_other"]
        if math.isfinite(values["q_sigma0"]):
            qp = QpParams(q_sigma0=values["q_sigma0"], tc_k=values["tc_k"], gap0_k=gap0_k)
            out = out + np.array([1.0 / q_sigma(tt, f_ghz, qp) for tt in t])
        return out

    loss_floor = loss.min()
    init = {
        "q_sigma0": fixed.get("q_sigma0", 1.0),
        "tc_k": fixed.get("tc_k", tc_ref),
        "q_tls0": fixed.get("q_tls0", 3.0 / loss_floor),
        "q_other": fixed.get("q_other", 1.5 / loss_floor),
    }
    if "q_sigma0" in free:
        # seed from the hottest point, where conductivity dominates
        qp_try = QpParams(q_sigma0=1.0, tc_k=init["tc_k"], gap0_k=gap0_k)
        hot = int(np.argmax(t))
        excess = loss[hot] - 0.8 * loss_floor
        ratio = q_sigma(t[hot], f_ghz, qp_try)
        if math.isfinite(ratio) and excess > 0:
            init["q_sigma0"] = max(1.0 / (excess * ratio), 1e-12)

    logged = {p: p != "tc_k" for p in _TEMP_PARAMS}

    def pack(values):
        return np.array([math.log(values[p]) if logged[p] else values[p] for p in free])

    def unpack(u):
        values = dict(init)
        values.update(fixed)
        for p, ui in zip(free, u):
            values[p] = math.exp(ui) if logged[p] else float(ui)
        return values

    def residual(u):
        values = unpack(u)
        if values["tc_k"] <= t.max():
            return np.full(t.size, 1e6)
        return (model_loss(values) - loss) * w / norm

    lower = np.array([t.max() * 1.0001 if p == "tc_k" else -np.inf for p in free])
    upper = np.full(len(free), np.inf)
    res = least_squares(
        residual, pack(init), bounds=(lower, upper), method="trf", x_scale="jac",
        ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=4000,
    )
    if res.status <= 0:
        raise FitError("temperature-sweep fit did not converge")
    values = unpack(res.x)

    budget = LossBudget(
        tls=TlsParams(q_tls0=values["q_tls0"], n_c=n_c, beta=beta),
        qp=QpParams(q_sigma0=values["q_sigma0"], tc_k=values["tc_k"], gap0_k=gap0_k),
        q_other=values["q_other"],
    )
    scales = np.array([values[p] if logged[p] else 1.0 for p in free])
    cov = _covariance(res, scales)
    sigmas = {p: float(math.sqrt(max(cov[i, i], 0.0))) for i, p in enumerate(free)}
    return TemperatureFitResult(
        budget=budget,
        covariance=cov,
        param_names=tuple(free),
        sigmas=sigmas,
        unconstrained=tuple(unconstrained),
        residual_rms=float(np.sqrt(np.mean((model_loss(values) - loss) ** 2))),
    )


# ---------------------------------------------------------------------------
# coupling-vs-loss correlation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationResult:
    pearson_low: float
    p_low: float
    pearson_high: float
    p_high: float
    degenerate_low: bool
    degenerate_high: bool

    def to_json_dict(self) -> dict:
        return {
            "pearson_low": self.pearson_low,
            "p_low": self.p_low,
            "pearson_high": self.pearson_high,
            "p_high": self.p_high,
            "degenerate_low": self.degenerate_low,
            "degenerate_high": self.degenerate_high,
        }


def _pearson_or_zero(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    if np.std(x) == 0.0 or np.std(y) == 0.0:
        return 0.0, True
    return float(np.corrcoef(x, y)[0, 1]), False


def _permutation_p(x, y, r_obs, n_permutations, rng) -> float:
    count = 0
    for _ in range(n_permutations):
        r, degen = _pearson_or_zero(x, rng.permutation(y))
        if degen or abs(r) >= abs(r_obs) - 1e-15:
            count += 1
    return (count + 1) / (n_permutations + 1)


def qe_loss_correlation(fits, n_permutations: int = 10_000, seed: int = 0) -> CorrelationResult:
    """Pearson correlation of log Qe against log Qi at both power limits.

    ``fits`` is a sequence of records with qe_mag, qi_low and qi_high
    (mapping keys or a 3-column array). p-values come from a seeded
    permutation test. A side with zero variance gets correlation 0 and a
    degenerate-variance flag instead of NaN.
    """
    rows = []
    for rec in fits:
        if isinstance(rec, dict):
            rows.append((rec["qe_mag"], rec["qi_low"], rec["qi_high"]))
        else:
            rows.append(tuple(rec))
    arr = np.asarray(rows, dtype=float)
    if arr.shape[0] < 3:
        raise DataError(f"need at least 3 fits for a correlation, got {arr.shape[0]}")
    if np.any(arr <= 0):
        raise DataError("qe and qi values must be positive")
    lqe = np.log10(arr[:, 0])
    llo = np.log10(arr[:, 1])
    lhi = np.log10(arr[:, 2])
    rng = np.random.default_rng(seed)
    r_lo, degen_lo = _pearson_or_zero(lqe, llo)
    p_lo = 1.0 if degen_lo else _permutation_p(lqe, llo, r_lo, n_permutations, rng)
    r_hi, degen_hi = _pearson_or_zero(lqe, lhi)
    p_hi = 1.0 if degen_hi else _permutation_p(lqe, lhi, r_hi, n_permutations, rng)
    return CorrelationResult(r_lo, p_lo, r_hi, p_hi, degen_lo, degen_hi)


# ---------------------------------------------------------------------------
# sweep CSV (columns: nbar or temperature_k, qi[, qi_err])
# ---------------------------------------------------------------------------


def read_loss_csv(source) -> tuple[str, np.ndarray]:
    """Read a power- or temperature-sweep CSV.

    Returns (kind, points) with kind in {"nbar", "temperature_k"} and points
    shaped (n, 2) or (n, 3).
    """
    from .netdata import _read_text

    text = _read_text(source)
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ParseError("line 1: empty CSV")
    header = [c.strip().lower() for c in lines[0].split(",")]
    if "nbar" in header:
        kind = "nbar"
    elif "temperature_k" in header:
        kind = "temperature_k"
    else:
        raise ParseError("line 1: need an 'nbar' or 'temperature_k' column")
    if "qi" not in header:
        raise ParseError("line 1: missing 'qi' column")
    xi, qi_i = header.index(kind), header.index("qi")
    err_i = header.index("qi_err") if "qi_err" in header else None
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in ln.split(",")]
        try:
            row = [float(cells[xi]), float(cells[qi_i])]
            if err_i is not None and err_i < len(cells) and cells[err_i]:
                row.append(float(cells[err_i]))
        except (ValueError, IndexError):
            raise ParseError(f"line {lineno}: bad numeric value") from None
        rows.append(row)
    if not rows:
        raise ParseError("no data rows")
    width = max(len(r) for r in rows)
    if any(len(r) != width for r in rows):
        raise ParseError("qi_err must be present for all rows or none")
    return kind, np.array(rows)


def write_loss_csv(kind: str, points, comments: tuple[str, ...] = ()) -> str:
    if kind not in ("nbar", "temperature_k"):
        raise DataError("kind must be 'nbar' or 'temperature_k'")
    arr = np.asarray(points, dtype=float)
    out = []
    for c in comments:
        out.append(f"# {c}")
    header = f"{kind},qi" + (",qi_err" if arr.shape[1] == 3 else "")
    out.append(header)
    for row in arr:
        out.append(",".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"
