"""Seeded forward-model generators.

Every fitter in the package is validated against data produced here, and the
calibration round trip is exercised by embedding synthetic devices. All
randomness flows through numpy's PCG64 generator seeded from NoiseSpec, so a
given (inputs, seed) pair is bit-reproducible; parallel generation derives
child seeds with SeedSequence([seed, index]).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .calib import ErrorTerms, SymmetricDut, embed
from .errors import DataError
from .lossfit import LossBudget, qi_total
from .netdata import ComplexSweep, DriveLevel, TwoPortSet
from .resfit import ResonanceParams, s21_model

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"

_NOISE_KINDS = ("none", "complex_gaussian", "multiplicative")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model and seed. sigma is the per-quadrature standard deviation
    for complex_gaussian noise, or the relative scale for multiplicative
    noise."""

    kind: str = "none"
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _NOISE_KINDS:
            raise DataError(f"noise kind must be one of {_NOISE_KINDS}")
        if self.sigma < 0:
            raise DataError("sigma must be >= 0")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def child(self, index: int) -> "NoiseSpec":
        """Derived spec for parallel task ``index`` (documented split rule)."""
        derived = np.random.SeedSequence([int(self.seed), int(index)]).generate_state(1)[0]
        return replace(self, seed=int(derived))


def _apply_complex_noise(values: np.ndarray, noise: NoiseSpec, rng=None) -> np.ndarray:
    if noise.kind == "none" or noise.sigma == 0.0:
        return values
    rng = noise.rng() if rng is None else rng
    if noise.kind == "complex_gaussian":
        return values + noise.sigma * (
            rng.standard_normal(values.size) + 1j * rng.standard_normal(values.size)
        )
    # multiplicative: one real factor per point
    return values * (1.0 + noise.sigma * rng.standard_normal(values.size))


def _apply_scalar_noise(values: np.ndarray, noise: NoiseSpec) -> np.ndarray:
    if noise.kind == "none" or noise.sigma == 0.0:
        return values
    if noise.kind != "multiplicative":
        raise DataError("scalar sweep generators support 'none' or 'multiplicative' noise")
    return values * (1.0 + noise.sigma * noise.rng().standard_normal(values.size))


def synth_resonance(
    p: ResonanceParams,
    freqs_ghz,
    noise: NoiseSpec = NoiseSpec(),
    temperature_k: float | None = None,
    nbar: float | None = None,
    label: str = "S21",
) -> ComplexSweep:
    """Evaluate the notch model on a grid and add noise per spec."""
    f = np.asarray(freqs_ghz, dtype=float)
    values = _apply_complex_noise(np.asarray(s21_model(f, p), dtype=complex), noise)
    drive = DriveLevel("photon_number", nbar) if nbar is not None else None
    return ComplexSweep(f, values, temperature_k=temperature_k, drive=drive, label=label)


def synth_power_sweep(
    b: LossBudget, nbars, t_k: float, f_ghz: float, noise: NoiseSpec = NoiseSpec()
) -> np.ndarray:
    """(nbar, qi) rows from the loss budget at fixed temperature."""
    nbars = np.asarray(nbars, dtype=float)
    qi = np.array([qi_total(t_k, n, f_ghz, b) for n in nbars])
    return np.column_stack([nbars, _apply_scalar_noise(qi, noise)])


def synth_temperature_sweep(
    b: LossBudget, temps_k, nbar: float, f_ghz: float, noise: NoiseSpec = NoiseSpec()
) -> np.ndarray:
    """(t_k, qi) rows from the loss budget at fixed drive."""
    temps = np.atleast_1d(np.asarray(temps_k, dtype=float))
    qi = np.array([qi_total(t, nbar, f_ghz, b) for t in temps])
    return np.column_stack([temps, _apply_scalar_noise(qi, noise)])


def synth_embedded(
    dut: SymmetricDut, terms: ErrorTerms, noise: NoiseSpec = NoiseSpec()
) -> TwoPortSet:
    """Embed a DUT in an error network, with optional measurement noise.

    Both measured paths draw from one seeded stream, so their noise
    realizations are independent but jointly reproducible.
    """
    clean = embed(dut, terms)
    rng = noise.rng()
    return TwoPortSet(
        clean.freqs_ghz,
        _apply_complex_noise(clean.s21m, noise, rng),
        _apply_complex_noise(clean.s22m, noise, rng),
        provenance=f"synthetic; rng={RNG_ALGORITHM}; seed={noise.seed}",
    )
