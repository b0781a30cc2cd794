"""Command-line pipeline: ingest, calibrate, fit, budget, report.

One verb per stage: ``fit`` (notch resonances), ``powerfit``/``tempfit``
(loss budgets), ``cal solve``/``cal apply`` (error network), ``taper`` and
``qe`` (geometry and coupling rule), ``synth`` (seeded generators), and
``report`` (aggregation across runs).

Conventions shared by every command: outputs land in --out; the resolved
configuration is written next to them as run_config.json; JSON payloads are
canonical (sorted keys, no timestamps) so a rerun with identical inputs and
seed is byte-identical. Exit codes: 0 success, 1 input/config error,
2 numerical failure.

A key=value config file (INI sections, e.g. [defaults], [taper], [qe]) can
be passed with --config or the MMWRES_CONFIG environment variable; explicit
flags always win.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, calib, lossfit, netdata, resfit, synth, taper
from .errors import DataError, MmwresError, NumericsError
from .svgplot import Series, render_plot

SCHEMA_VERSION = 1


class _UsageError(DataError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def _jsonable(obj):
    """Make a payload canonical-JSON safe: tuples to lists, numpy scalars to
    python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def canonical_json(payload: dict) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(canonical_json(payload), encoding="utf-8")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run_config(out: Path, command: str, args) -> None:
    options = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func",) and not k.startswith("_")
    }
    _write_json(
        out / "run_config.json",
        {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "version": __version__,
            "rng": synth.RNG_ALGORITHM,
            "options": {k: (str(v) if isinstance(v, Path) else v) for k, v in options.items()},
        },
    )


def _load_config(args) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    path = getattr(args, "config", None) or os.environ.get("MMWRES_CONFIG")
    if path:
        if not Path(path).exists():
            raise DataError(f"config file not found: {path}")
        cfg.read(path)
    return cfg


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise DataError(f"cannot parse complex number from {text!r}") from None


def _provenance(args, command: str, extra: dict | None = None) -> dict:
    p = {"command": command, "version": __version__}
    if hasattr(args, "seed"):
        p["seed"] = args.seed
    p.update(extra or {})
    return p


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _fit_one_file(path: str, args, out: Path) -> list[Path]:
    sweeps = netdata.read_sweep_csv(path)
    if args.label:
        sweeps = [s for s in sweeps if s.label == args.label]
    if not sweeps:
        raise DataError(f"{path}: no sweeps matching label {args.label!r}")
    stem = Path(path).stem
    written = []
    for i, sw in enumerate(sweeps):
        if args.fmin is not None or args.fmax is not None:
            sw = netdata.crop(
                sw,
                args.fmin if args.fmin is not None else sw.freqs_ghz[0],
                args.fmax if args.fmax is not None else sw.freqs_ghz[-1],
            )
        fit = resfit.fit_resonance(sw, fix_phi=args.fix_phi)
        payload = fit.to_json_dict()
        payload.update(
            {
                "chip": args.chip,
                "resonator": args.resonator if args.resonator else f"{stem}-{i:02d}",
                "label": sw.label,
                "input": Path(path).name,
                "temperature_k": sw.temperature_k,
            }
        )
        if sw.drive is not None:
            payload["drive_kind"] = sw.drive.kind
            payload["drive_value"] = sw.drive.value
        if args.power_w is not None:
            payload["photon_number_at_power_w"] = resfit.estimate_photon_number(args.power_w, fit)
        fit_path = out / f"{stem}_fit_{i:02d}.json"
        _write_json(fit_path, payload)
        written.append(fit_path)
        if args.plot:
            model = resfit.s21_model(sw.freqs_ghz, fit.params)
            svg = render_plot(
                [
                    Series(sw.freqs_ghz, sw.values.real, "Re data", markers=True, line=False),
                    Series(sw.freqs_ghz, model.real, "Re model"),
                    Series(sw.freqs_ghz, sw.values.imag, "Im data", markers=True, line=False),
                    Series(sw.freqs_ghz, model.imag, "Im model"),
                ],
                xlabel="frequency (GHz)",
                ylabel="S21 quadratures",
                title=f"{stem} [{i}]: Qi={fit.qi:.4g}",
                provenance=_provenance(args, "fit", {"input": Path(path).name}),
            )
            (out / f"{stem}_fit_{i:02d}.svg").write_text(svg, encoding="utf-8")
    return written


def cmd_fit(args) -> int:
    out = _outdir(args)
    _write_run_config(out, "fit", args)
    jobs = max(1, args.jobs)
    if jobs == 1 or len(args.inputs) == 1:
        for path in args.inputs:
            _fit_one_file(path, args, out)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_fit_one_file, p, args, out) for p in args.inputs]
            for fut in futures:
                fut.result()
    return 0


# ---------------------------------------------------------------------------
# powerfit / tempfit
# ---------------------------------------------------------------------------


def _budget_qi(tls: lossfit.TlsParams, q_other: float, nbar: float, t_k: float, f_ghz: float) -> float:
    loss = 1.0 / lossfit.q_tls(nbar, t_k, f_ghz, tls) + 1.0 / q_other
    return 1.0 / loss


def cmd_powerfit(args) -> int:
    out = _outdir(args)
    _write_run_config(out, "powerfit", args)
    kind, points = lossfit.read_loss_csv(args.input)
    if kind != "nbar":
        raise DataError(f"{args.input}: powerfit expects an 'nbar' column, found {kind!r}")
    res = lossfit.fit_power_sweep(points, t_k=args.t_k, f_ghz=args.f_ghz)
    nbar = points[:, 0]
    payload = res.to_json_dict()
    payload.update(
        {
            "chip": args.chip,
            "resonator": args.resonator,
            "t_k": args.t_k,
            "f_ghz": args.f_ghz,
            "input": Path(args.input).name,
            "qi_low_power": _budget_qi(res.tls, res.q_other, nbar.min(), args.t_k, args.f_ghz),
            "qi_high_power": _budget_qi(res.tls, res.q_other, nbar.max(), args.t_k, args.f_ghz),
        }
    )
    _write_json(out / "power_budget.json", payload)
    if args.plot:
        grid = np.logspace(math.log10(nbar.min()), math.log10(nbar.max()), 200)
        total = [_budget_qi(res.tls, res.q_other, n, args.t_k, args.f_ghz) for n in grid]
        series = [
            Series(nbar, points[:, 1], "data", markers=True, line=False),
            Series(grid, total, "total model"),
            Series(grid, np.full(grid.size, res.q_other), "Q_other"),
        ]
        if math.isfinite(res.tls.q_tls0):
            series.append(
                Series(grid, [lossfit.q_tls(n, args.t_k, args.f_ghz, res.tls) for n in grid], "Q_TLS")
            )
        svg = render_plot(
            series,
            xlabel="mean photon number",
            ylabel="Qi",
            title="internal quality factor vs drive",
            xlog=True,
            ylog=True,
            provenance=_provenance(args, "powerfit", {"input": Path(args.input).name}),
        )
        (out / "power_budget.svg").write_text(svg, encoding="utf-8")
    return 0


def cmd_tempfit(args) -> int:
    out = _outdir(args)
    _write_run_config(out, "tempfit", args)
    kind, points = lossfit.read_loss_csv(args.input)
    if kind != "temperature_k":
        raise DataError(f"{args.input}: tempfit expects a 'temperature_k' column, found {kind!r}")
    fixed = {"n_c": args.n_c, "beta": args.beta}
    if args.tc is not None:
        fixed["tc_k"] = args.tc
    res = lossfit.fit_temperature_sweep(points, nbar=args.nbar, f_ghz=args.f_ghz, fixed=fixed)
    payload = res.to_json_dict()
    payload.update(
        {
            "chip": args.chip,
            "resonator": args.resonator,
            "nbar": args.nbar,
            "f_ghz": args.f_ghz,
            "input": Path(args.input).name,
        }
    )
    _write_json(out / "temperature_budget.json", payload)
    if args.plot:
        t = points[:, 0]
        grid = np.linspace(t.min(), t.max(), 200)
        b = res.budget
        total = [lossfit.qi_total(tt, args.nbar, args.f_ghz, b) for tt in grid]
        series = [
            Series(t, points[:, 1], "data", markers=True, line=False),
            Series(grid, total, "total model"),
            Series(grid, [lossfit.q_tls(args.nbar, tt, args.f_ghz, b.tls) for tt in grid], "Q_TLS"),
            Series(grid, np.full(grid.size, b.q_other), "Q_other"),
        ]
        if "q_sigma0" not in res.unconstrained:
            series.append(Series(grid, [lossfit.q_sigma(tt, args.f_ghz, b.qp) for tt in grid], "Q_sigma"))
        svg = render_plot(
            series,
            xlabel="temperature (K)",
            ylabel="Qi",
            title="internal quality factor vs temperature",
            ylog=True,
            provenance=_provenance(args, "tempfit", {"input": Path(args.input).name}),
        )
        (out / "temperature_budget.svg").write_text(svg, encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# cal
# ---------------------------------------------------------------------------


def _read_freq_complex_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """CSV with columns freq_ghz plus one or two re/im pairs."""
    rows = []
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    header = [c.strip().lower() for c in lines[0].split(",")]
    for ln in lines[1:]:
        rows.append([float(c) for c in ln.split(",")])
    arr = np.array(rows)
    if "freq_ghz" not in header:
        raise DataError(f"{path}: missing freq_ghz column")
    f = arr[:, header.index("freq_ghz")]
    if {"e10_re", "e10_im", "e23_re", "e23_im"} <= set(header):
        e10 = arr[:, header.index("e10_re")] + 1j * arr[:, header.index("e10_im")]
        e23 = arr[:, header.index("e23_re")] + 1j * arr[:, header.index("e23_im")]
        return f, e10, e23
    if {"re", "im"} <= set(header):
        z = arr[:, header.index("re")] + 1j * arr[:, header.index("im")]
        return f, z, None
    raise DataError(f"{path}: expected re/im or e10_*/e23_* columns")


def cmd_cal(args) -> int:
    out = _outdir(args)
    _write_run_config(out, f"cal {args.cal_command}", args)
    if args.cal_command == "solve":
        standards = calib.CalStandards(
            thru=netdata.read_touchstone(args.thru),
            reflect=netdata.read_touchstone(args.reflect),
            line=netdata.read_touchstone(args.line),
            reflect_gamma=_parse_complex(args.reflect_gamma),
            line_s21=None,
        )
        if args.line_s21 is not None:
            f, z, _ = _read_freq_complex_csv(args.line_s21)
            grid = calib.common_grid(
                [standards.thru.freqs_ghz, standards.reflect.freqs_ghz, standards.line.freqs_ghz]
            )
            standards = calib.CalStandards(
                standards.thru, standards.reflect, standards.line,
                reflect_gamma=standards.reflect_gamma,
                line_s21=calib._interp_complex(f, z, grid),
            )
        input_paths = None
        if args.input_paths is not None:
            f, e10, e23 = _read_freq_complex_csv(args.input_paths)
            if e23 is None:
                raise DataError(f"{args.input_paths}: needs e10_re/e10_im/e23_re/e23_im columns")
            grid = calib.common_grid(
                [standards.thru.freqs_ghz, standards.reflect.freqs_ghz, standards.line.freqs_ghz]
            )
            input_paths = (
                calib._interp_complex(f, e10, grid),
                calib._interp_complex(f, e23, grid),
            )
        terms = calib.solve_error_terms(standards, input_paths)
        calib.save_terms(out / "terms.json", terms)
        return 0

    # apply
    terms = calib.load_terms(args.terms)
    measured = netdata.read_touchstone(args.input)
    dut = calib.correct(measured, terms)
    corrected = netdata.TwoPortSet(
        dut.freqs_ghz, dut.s21, dut.s22, provenance="corrected (symmetric DUT: S11=S22, S12=S21)"
    )
    (out / "corrected.s2p").write_text(netdata.write_touchstone(corrected), encoding="utf-8")
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "correction",
        "input": Path(args.input).name,
        "n_points": int(dut.freqs_ghz.size),
        "max_passivity_excess": float(np.max(dut.passivity_excess())),
    }
    if args.term_error is not None:
        d21, d22 = calib.propagate_uncertainty(measured, terms, args.term_error)
        payload["term_error_magnitude"] = args.term_error
        payload["max_d_s21"] = float(np.max(d21))
        payload["max_d_s22"] = float(np.max(d22))
        lines = ["freq_ghz,d_s21,d_s22"]
        lines += [
            f"{float(f)!r},{float(a)!r},{float(b)!r}"
            for f, a, b in zip(dut.freqs_ghz, d21, d22)
        ]
        (out / "uncertainty.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_json(out / "correction.json", payload)
    return 0


# ---------------------------------------------------------------------------
# taper / qe
# ---------------------------------------------------------------------------


def _taper_spec_from(args, cfg) -> taper.TaperSpec:
    dims: dict[str, str] = {}
    if cfg.has_section("taper"):
        dims.update({k: v for k, v in cfg.items("taper")})
    for item in args.dim or []:
        if "=" not in item:
            raise DataError(f"--dim expects NAME=VALUE, got {item!r}")
        name, value = item.split("=", 1)
        dims[name] = value
    return taper.TaperSpec.from_mapping(dims, n_points=args.n_points)


def cmd_taper(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    _write_run_config(out, "taper", args)
    spec = _taper_spec_from(args, cfg)
    contour = taper.generate_contour(spec)
    formats = [f.strip() for f in args.formats.split(",") if f.strip()]
    written = {}
    if "csv" in formats:
        p = out / "taper_contour.csv"
        p.write_text(taper.export_geometry(contour, "csv"), encoding="utf-8")
        written["csv"] = p.name
    if "svg" in formats:
        p = out / "taper_slot.svg"
        p.write_text(taper.export_geometry(contour, "svg", slot_width_mm=spec.S1), encoding="utf-8")
        written["svg"] = p.name
    _write_json(
        out / "taper.json",
        {
            "schema_version": SCHEMA_VERSION,
            "kind": "taper_geometry",
            "dims_mm": {k: getattr(spec, k) for k in taper.DEFAULT_DIMS_MM},
            "n_points": spec.n_points,
            "y_end_mm": float(contour.y_mm[-1]),
            "files": written,
        },
    )
    return 0


def cmd_qe(args) -> int:
    cfg = _load_config(args)
    intercept = args.intercept
    slope = args.slope
    if cfg.has_section("qe"):
        if intercept is None and cfg.has_option("qe", "intercept"):
            intercept = cfg.getfloat("qe", "intercept")
        if slope is None and cfg.has_option("qe", "slope"):
            slope = cfg.getfloat("qe", "slope")
    intercept = taper.QE_LOG10_INTERCEPT if intercept is None else intercept
    slope = taper.QE_LOG10_SLOPE_PER_UM if slope is None else slope

    if (args.separation is None) == (args.target is None):
        raise DataError("give exactly one of --separation or --target")
    if args.separation is not None:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "kind": "qe_rule",
            "separation_um": args.separation,
            "qe": taper.qe_of_separation(args.separation, intercept, slope),
        }
    else:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "kind": "qe_rule",
            "qe_target": args.target,
            "separation_um": taper.separation_for_qe(args.target, intercept, slope),
        }
    payload["log10_intercept"] = intercept
    payload["log10_slope_per_um"] = slope
    if args.out:
        out = _outdir(args)
        _write_run_config(out, "qe", args)
        _write_json(out / "qe.json", payload)
    else:
        sys.stdout.write(canonical_json(payload))
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def _noise_from(args) -> synth.NoiseSpec:
    return synth.NoiseSpec(kind=args.noise, sigma=args.sigma, seed=args.seed)


def _resonance_params_from(args) -> resfit.ResonanceParams:
    inv_q = 1.0 / args.qi + math.cos(args.phi) / args.qe_mag
    return resfit.ResonanceParams(
        f0_ghz=args.f0,
        q_total=1.0 / inv_q,
        qe_mag=args.qe_mag,
        phi_rad=args.phi,
        baseline_amp=args.amp,
        baseline_phase_rad=args.phase,
        electrical_delay_ns=args.delay,
    )


def _budget_from(args) -> lossfit.LossBudget:
    return lossfit.LossBudget(
        tls=lossfit.TlsParams(q_tls0=args.q_tls0, n_c=args.n_c, beta=args.beta),
        qp=lossfit.QpParams(q_sigma0=args.q_sigma0, tc_k=args.tc),
        q_other=args.q_other,
    )


def cmd_synth(args) -> int:
    out = _outdir(args)
    _write_run_config(out, f"synth {args.synth_command}", args)
    noise = _noise_from(args)
    meta = (
        f"generator: {synth.RNG_ALGORITHM}",
        f"seed: {noise.seed}",
        f"noise: {noise.kind} sigma={noise.sigma}",
    )
    if args.synth_command == "resonance":
        p = _resonance_params_from(args)
        f = np.linspace(args.fmin, args.fmax, args.points)
        sw = synth.synth_resonance(p, f, noise, temperature_k=args.t_k, nbar=args.nbar)
        (out / "resonance.csv").write_text(netdata.write_sweep_csv(sw, comments=meta), encoding="utf-8")
        _write_json(
            out / "resonance_truth.json",
            {
                "schema_version": SCHEMA_VERSION,
                "kind": "synth_truth",
                "qi": p.qi,
                "f0_ghz": p.f0_ghz,
                "q_total": p.q_total,
                "qe_mag": p.qe_mag,
                "phi_rad": p.phi_rad,
            },
        )
        return 0
    if args.synth_command == "power":
        b = _budget_from(args)
        nbars = np.logspace(math.log10(args.nbar_min), math.log10(args.nbar_max), args.points)
        pts = synth.synth_power_sweep(b, nbars, args.t_k, args.f_ghz, noise)
        (out / "power.csv").write_text(lossfit.write_loss_csv("nbar", pts, comments=meta), encoding="utf-8")
        return 0
    if args.synth_command == "temperature":
        b = _budget_from(args)
        temps = np.linspace(args.t_min, args.t_max, args.points)
        pts = synth.synth_temperature_sweep(b, temps, args.nbar, args.f_ghz, noise)
        (out / "temperature.csv").write_text(
            lossfit.write_loss_csv("temperature_k", pts, comments=meta), encoding="utf-8"
        )
        return 0
    if args.synth_command == "embedded":
        terms = calib.load_terms(args.terms)
        p = _resonance_params_from(args)
        f = terms.freqs_ghz
        s21 = np.asarray(resfit.s21_model(f, p), dtype=complex)
        dut = calib.SymmetricDut(f, s21=s21, s22=s21 - 1.0)  # shunt-resonator convention
        tps = synth.synth_embedded(dut, terms, noise)
        (out / "embedded.s2p").write_text(netdata.write_touchstone(tps, comments=meta), encoding="utf-8")
        return 0
    # standards: forward-embed ideal thru/reflect/line through the given terms
    terms = calib.load_terms(args.terms)
    f = terms.freqs_ghz
    gamma = _parse_complex(args.gamma)
    t_line = _parse_complex(args.line_t)
    ones, zeros = np.ones(f.size, dtype=complex), np.zeros(f.size, dtype=complex)
    devices = (
        ("thru", calib.SymmetricDut(f, ones, zeros)),
        ("reflect", calib.SymmetricDut(f, zeros, gamma * ones)),
        ("line", calib.SymmetricDut(f, t_line * ones, zeros)),
    )
    for index, (name, dut) in enumerate(devices):
        tps = synth.synth_embedded(dut, terms, noise.child(index) if noise.kind != "none" else noise)
        (out / f"{name}.s2p").write_text(netdata.write_touchstone(tps, comments=meta), encoding="utf-8")
    _write_json(
        out / "standards_truth.json",
        {
            "schema_version": SCHEMA_VERSION,
            "kind": "synth_standards",
            "gamma": [gamma.real, gamma.imag],
            "line_t": [t_line.real, t_line.imag],
        },
    )
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    out = _outdir(args)
    _write_run_config(out, "report", args)
    fits, budgets = [], []
    for path in sorted(Path(args.dir).glob("*.json")):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            continue
        kind = doc.get("kind")
        if kind == "resonance_fit":
            fits.append(doc)
        elif kind in ("power_budget", "temperature_budget"):
            budgets.append(doc)
    if not fits and not budgets:
        raise DataError(f"{args.dir}: no fit or budget JSON documents found")

    chips = sorted({d.get("chip") or "unknown" for d in fits + budgets})
    rows = []
    for chip in chips:
        cf = [d for d in fits if (d.get("chip") or "unknown") == chip]
        cb = [d for d in budgets if (d.get("chip") or "unknown") == chip]

        def mean(vals):
            vals = [v for v in vals if v is not None]
            return float(np.mean(vals)) if vals else None

        rows.append(
            {
                "chip": chip,
                "n_fits": len(cf),
                "n_budgets": len(cb),
                "qi_mean": mean([d.get("qi") for d in cf]),
                "qi_low_mean": mean([d.get("qi_low_power") for d in cb]),
                "qi_high_mean": mean([d.get("qi_high_power") for d in cb]),
                "q_tls0_mean": mean([d.get("q_tls0") for d in cb]),
            }
        )

    # join coupling (from resonance fits) with power limits (from budgets)
    joined = []
    budget_by_key = {(d.get("chip"), d.get("resonator")): d for d in budgets}
    for d in fits:
        b = budget_by_key.get((d.get("chip"), d.get("resonator")))
        if b and d.get("qe_mag") and b.get("qi_low_power") and b.get("qi_high_power"):
            joined.append(
                {"qe_mag": d["qe_mag"], "qi_low": b["qi_low_power"], "qi_high": b["qi_high_power"]}
            )
    correlation = None
    if len(joined) >= 3:
        correlation = lossfit.qe_loss_correlation(joined, seed=args.seed).to_json_dict()

    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "report",
        "rows": rows,
        "n_joined": len(joined),
        "correlation": correlation,
    }
    _write_json(out / "report.json", payload)

    header = f"{'chip':<10}{'fits':>6}{'budgets':>9}{'Qi(mean)':>12}{'Qi(low)':>12}{'Qi(high)':>12}{'Q_TLS0':>12}"
    print(header)
    for r in rows:
        def f(v):
            return f"{v:.4g}" if isinstance(v, float) else "-"
        print(
            f"{r['chip']:<10}{r['n_fits']:>6}{r['n_budgets']:>9}"
            f"{f(r['qi_mean']):>12}{f(r['qi_low_mean']):>12}{f(r['qi_high_mean']):>12}{f(r['q_tls0_mean']):>12}"
        )
    if correlation:
        print(
            f"log-log Pearson(Qe, Qi): low-power r={correlation['pearson_low']:.3f} "
            f"(p={correlation['p_low']:.3f}), high-power r={correlation['pearson_high']:.3f} "
            f"(p={correlation['p_high']:.3f})"
        )
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(p, out_default="mmwres_out"):
    p.add_argument("--out", default=out_default, help="output directory")
    p.add_argument("--config", default=None, help="key=value config file (or MMWRES_CONFIG)")
    p.add_argument("--seed", type=int, default=0, help="seed for any randomized step")


def build_parser() -> _Parser:
    parser = _Parser(prog="mmwres", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"mmwres {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit notch resonances in sweep CSV files")
    p.add_argument("inputs", nargs="+", help="sweep CSV file(s)")
    p.add_argument("--label", default=None, help="only fit sweeps with this label")
    p.add_argument("--fmin", type=float, default=None)
    p.add_argument("--fmax", type=float, default=None)
    p.add_argument("--fix-phi", dest="fix_phi", type=float, default=None)
    p.add_argument("--chip", default=None)
    p.add_argument("--resonator", default=None)
    p.add_argument("--power-w", dest="power_w", type=float, default=None,
                   help="applied power (W); adds a photon-number estimate to the report")
    p.add_argument("--plot", action="store_true")
    p.add_argument("--jobs", type=int, default=1, help="process input files concurrently")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("powerfit", help="fit a Qi-vs-photon-number sweep")
    p.add_argument("--input", required=True, help="CSV with nbar,qi[,qi_err]")
    p.add_argument("--t-k", dest="t_k", type=float, required=True)
    p.add_argument("--f-ghz", dest="f_ghz", type=float, required=True)
    p.add_argument("--chip", default=None)
    p.add_argument("--resonator", default=None)
    p.add_argument("--plot", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_powerfit)

    p = sub.add_parser("tempfit", help="fit a Qi-vs-temperature sweep")
    p.add_argument("--input", required=True, help="CSV with temperature_k,qi[,qi_err]")
    p.add_argument("--nbar", type=float, required=True)
    p.add_argument("--f-ghz", dest="f_ghz", type=float, required=True)
    p.add_argument("--tc", type=float, default=None, help="fix the critical temperature (K)")
    p.add_argument("--n-c", dest="n_c", type=float, default=100.0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--chip", default=None)
    p.add_argument("--resonator", default=None)
    p.add_argument("--plot", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_tempfit)

    p = sub.add_parser("cal", help="solve or apply an error-network calibration")
    calsub = p.add_subparsers(dest="cal_command", required=True)
    ps = calsub.add_parser("solve", help="solve error terms from T/R/L standards")
    ps.add_argument("--thru", required=True)
    ps.add_argument("--reflect", required=True)
    ps.add_argument("--line", required=True)
    ps.add_argument("--reflect-gamma", dest="reflect_gamma", default="-1")
    ps.add_argument("--line-s21", dest="line_s21", default=None,
                    help="CSV freq_ghz,re,im with the known line transmission")
    ps.add_argument("--input-paths", dest="input_paths", default=None,
                    help="CSV freq_ghz,e10_re,e10_im,e23_re,e23_im from direct input-line measurements")
    _add_common(ps)
    ps.set_defaults(func=cmd_cal)
    pa = calsub.add_parser("apply", help="de-embed a measurement with saved terms")
    pa.add_argument("--terms", required=True)
    pa.add_argument("--input", required=True)
    pa.add_argument("--term-error", dest="term_error", type=float, default=None,
                    help="error-term vector magnitude for uncertainty propagation")
    _add_common(pa)
    pa.set_defaults(func=cmd_cal)

    p = sub.add_parser("taper", help="generate and export the taper contour")
    p.add_argument("--dim", action="append", default=None, metavar="NAME=VALUE",
                   help="override a dimension (repeatable)")
    p.add_argument("--n-points", dest="n_points", type=int, default=1001)
    p.add_argument("--formats", default="csv,svg")
    _add_common(p)
    p.set_defaults(func=cmd_taper)

    p = sub.add_parser("qe", help="coupling design rule: Qe(d) and its inverse")
    p.add_argument("--separation", type=float, default=None, help="separation d in um")
    p.add_argument("--target", type=float, default=None, help="target Qe")
    p.add_argument("--intercept", type=float, default=None)
    p.add_argument("--slope", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_qe)

    p = sub.add_parser("synth", help="generate synthetic datasets")
    synthsub = p.add_subparsers(dest="synth_command", required=True)

    def add_noise(sp):
        sp.add_argument("--noise", choices=("none", "complex_gaussian", "multiplicative"), default="none")
        sp.add_argument("--sigma", type=float, default=0.0)

    def add_resonance_params(sp):
        sp.add_argument("--f0", type=float, default=95.0)
        sp.add_argument("--qi", type=float, default=8.27e5)
        sp.add_argument("--qe-mag", dest="qe_mag", type=float, default=2e5)
        sp.add_argument("--phi", type=float, default=0.0)
        sp.add_argument("--amp", type=float, default=1.0)
        sp.add_argument("--phase", type=float, default=0.0)
        sp.add_argument("--delay", type=float, default=0.0)

    def add_budget_params(sp):
        sp.add_argument("--q-tls0", dest="q_tls0", type=float, default=0.953e6)
        sp.add_argument("--n-c", dest="n_c", type=float, default=100.0)
        sp.add_argument("--beta", type=float, default=0.5)
        sp.add_argument("--q-other", dest="q_other", type=float, default=1.17e5)
        sp.add_argument("--q-sigma0", dest="q_sigma0", type=float, default=1e12)
        sp.add_argument("--tc", type=float, default=9.2)

    sp = synthsub.add_parser("resonance")
    add_resonance_params(sp)
    sp.add_argument("--fmin", type=float, default=94.99)
    sp.add_argument("--fmax", type=float, default=95.01)
    sp.add_argument("--points", type=int, default=401)
    sp.add_argument("--t-k", dest="t_k", type=float, default=None)
    sp.add_argument("--nbar", type=float, default=None)
    add_noise(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = synthsub.add_parser("power")
    add_budget_params(sp)
    sp.add_argument("--nbar-min", dest="nbar_min", type=float, default=1.0)
    sp.add_argument("--nbar-max", dest="nbar_max", type=float, default=1e6)
    sp.add_argument("--points", type=int, default=20)
    sp.add_argument("--t-k", dest="t_k", type=float, default=0.86)
    sp.add_argument("--f-ghz", dest="f_ghz", type=float, default=95.0)
    add_noise(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = synthsub.add_parser("temperature")
    add_budget_params(sp)
    sp.add_argument("--t-min", dest="t_min", type=float, default=0.86)
    sp.add_argument("--t-max", dest="t_max", type=float, default=7.5)
    sp.add_argument("--points", type=int, default=25)
    sp.add_argument("--nbar", type=float, default=1e5)
    sp.add_argument("--f-ghz", dest="f_ghz", type=float, default=95.0)
    add_noise(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = synthsub.add_parser("embedded")
    add_resonance_params(sp)
    sp.add_argument("--terms", required=True, help="error-terms JSON defining network and grid")
    add_noise(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_synth)

    sp = synthsub.add_parser("standards")
    sp.add_argument("--terms", required=True)
    sp.add_argument("--gamma", default="-1")
    sp.add_argument("--line-t", dest="line_t", default="0.45-0.7794j",
                    help="line transmission, default magnitude 0.9 at -60 degrees")
    add_noise(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="aggregate fit/budget JSON documents")
    p.add_argument("--dir", required=True, help="directory of result JSON files")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except MmwresError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
