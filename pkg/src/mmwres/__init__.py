"""mmwres: analysis chain for W-band superconducting resonator measurements.

Subpackages by pipeline stage: netdata (data model and file formats), calib
(error-network embedding/solving/correction), resfit (notch resonance
fitting), lossfit (TLS/quasiparticle/residual loss budgets), taper (finline
geometry and the coupling design rule), synth (seeded forward models), cli
(command-line front end).
"""

__version__ = "0.1.0"

from .calib import (
    CalStandards,
    ErrorTerms,
    SymmetricDut,
    correct,
    embed,
    propagate_uncertainty,
    solve_error_terms,
)
from .lossfit import (
    LossBudget,
    QpParams,
    TlsParams,
    fit_power_sweep,
    fit_temperature_sweep,
    mb_sigma,
    q_sigma,
    q_tls,
    qe_loss_correlation,
    qi_total,
)
from .netdata import ComplexSweep, DriveLevel, TwoPortSet, crop, read_sweep_csv, read_touchstone
from .resfit import ResonanceFit, ResonanceParams, estimate_photon_number, fit_resonance, s21_model
from .synth import (
    NoiseSpec,
    synth_embedded,
    synth_power_sweep,
    synth_resonance,
    synth_temperature_sweep,
)
from .taper import (
    Contour,
    TaperSpec,
    contour_y,
    export_geometry,
    generate_contour,
    qe_of_separation,
    separation_for_qe,
)
