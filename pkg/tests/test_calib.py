import math
import warnings

import numpy as np
import pytest

from mmwres.calib import (
    CalStandards,
    ErrorTerms,
    SymmetricDut,
    common_grid,
    correct,
    embed,
    load_terms,
    propagate_uncertainty,
    save_terms,
    solve_error_terms,
    terms_from_json_dict,
    terms_to_json_dict,
)
from mmwres.errors import GridError, SingularityError, SolveError
from mmwres.netdata import TwoPortSet

F = np.linspace(90.0, 100.0, 51)


def scalar_terms(f=F, **kw):
    vals = dict(e10=1.0, e23=1.0, e32=1.0, e30=0.0, e33=0.0, e11=0.0)
    vals.update(kw)
    return ErrorTerms(f, **vals)


def random_terms(rng, f=F, e11_scale=0.3, dir_scale=0.1):
    def rc(scale):
        return scale * (rng.uniform(-1, 1, f.size) + 1j * rng.uniform(-1, 1, f.size))

    return ErrorTerms(
        f,
        e10=0.5 + rc(0.2),
        e23=0.4 + rc(0.2),
        e32=1.0 + rc(0.3),
        e30=rc(dir_scale / math.sqrt(2)),
        e33=rc(dir_scale / math.sqrt(2)),
        e11=rc(e11_scale / math.sqrt(2)),
    )


def random_passive_dut(rng, f=F):
    # smooth, comfortably passive
    mag21 = 0.7 + 0.1 * np.sin(f)
    mag22 = 0.2 + 0.05 * np.cos(2 * f)
    return SymmetricDut(f, mag21 * np.exp(1j * 0.3 * f), mag22 * np.exp(-1j * 0.2 * f))


def ideal_standards(terms, gamma=-1.0 + 0j, t=None):
    f = terms.freqs_ghz
    ones = np.ones(f.size, complex)
    zeros = np.zeros(f.size, complex)
    t = 0.9 * np.exp(-1j * np.pi / 3) if t is None else t
    thru = embed(SymmetricDut(f, ones, zeros), terms)
    reflect = embed(SymmetricDut(f, zeros, gamma * ones), terms)
    line = embed(SymmetricDut(f, t * ones, zeros), terms)
    return CalStandards(thru, reflect, line, reflect_gamma=gamma), t


class TestEmbed:
    def test_identity_network_is_passthrough(self):
        dut = random_passive_dut(np.random.default_rng(0))
        m = embed(dut, scalar_terms())
        np.testing.assert_allclose(m.s21m, dut.s21, atol=1e-15)
        np.testing.assert_allclose(m.s22m, dut.s22, atol=1e-15)

    def test_thru_with_leakage_and_attenuation(self):
        # S21=1, S22=0 through e30=0.01, e10*e32=0.5 -> s21m = 0.51
        dut = SymmetricDut(F, np.ones(F.size), np.zeros(F.size))
        m = embed(dut, scalar_terms(e10=0.5, e30=0.01))
        np.testing.assert_allclose(m.s21m, 0.51, atol=1e-15)

    def test_hand_evaluated_point(self):
        # S21=0.8, S22=0.1, e11=0.2, unity paths, no leakage
        dut = SymmetricDut(F, 0.8 * np.ones(F.size), 0.1 * np.ones(F.size))
        m = embed(dut, scalar_terms(e11=0.2))
        np.testing.assert_allclose(m.s21m, 0.8 / 0.98, rtol=1e-14)
        np.testing.assert_allclose(m.s22m, 0.1 + 0.2 * 0.64 / 0.98, rtol=1e-14)

    def test_matches_independent_expression_at_random_points(self):
        # compare the vectorized model against a scalar transcription
        rng = np.random.default_rng(42)
        terms = random_terms(rng)
        dut = random_passive_dut(rng)
        m = embed(dut, terms)
        for i in rng.integers(0, F.size, 3):
            e10, e23, e32 = terms.e10[i], terms.e23[i], terms.e32[i]
            e30, e33, e11 = terms.e30[i], terms.e33[i], terms.e11[i]
            s21, s22 = dut.s21[i], dut.s22[i]
            s21m = e30 + e10 * e32 * s21 / (1 - e11 * s22)
            s22m = e33 + (s22 + e11 * s21 * s21 / (1 - e11 * s22)) * e23 * e32
            assert m.s21m[i] == pytest.approx(s21m, rel=1e-14)
            assert m.s22m[i] == pytest.approx(s22m, rel=1e-14)

    def test_singular_denominator_reports_index(self):
        dut = SymmetricDut(F, np.ones(F.size), np.ones(F.size))
        with pytest.raises(SingularityError, match="index 0"):
            embed(dut, scalar_terms(e11=1.0))


class TestCorrect:
    def test_round_trip_recovers_dut(self):
        rng = np.random.default_rng(1)
        terms = random_terms(rng)
        dut = random_passive_dut(rng)
        back = correct(embed(dut, terms), terms)
        np.testing.assert_allclose(back.s21, dut.s21, atol=1e-9)
        np.testing.assert_allclose(back.s22, dut.s22, atol=1e-9)

    def test_identity_terms_return_measured_values(self):
        rng = np.random.default_rng(2)
        dut = random_passive_dut(rng)
        m = TwoPortSet(F, dut.s21, dut.s22)
        back = correct(m, scalar_terms())
        np.testing.assert_allclose(back.s21, m.s21m, atol=1e-15)
        np.testing.assert_allclose(back.s22, m.s22m, atol=1e-15)

    def test_zero_source_match_reduces_to_linear_scaling(self):
        terms = scalar_terms(e10=0.5, e30=0.02 + 0.01j)
        rng = np.random.default_rng(3)
        dut = random_passive_dut(rng)
        m = embed(dut, terms)
        back = correct(m, terms)
        np.testing.assert_allclose(back.s21, (m.s21m - 0.02 - 0.01j) / 0.5, atol=1e-12)

    def test_embed_correct_composition_is_identity_on_measurement(self):
        rng = np.random.default_rng(4)
        terms = random_terms(rng)
        dut = random_passive_dut(rng)
        m = embed(dut, terms)
        again = embed(correct(m, terms), terms)
        np.testing.assert_allclose(again.s21m, m.s21m, atol=1e-9)
        np.testing.assert_allclose(again.s22m, m.s22m, atol=1e-9)

    def test_corrected_branch_is_continuous_on_smooth_dut(self):
        rng = np.random.default_rng(5)
        terms = random_terms(rng)
        dut = random_passive_dut(rng)
        back = correct(embed(dut, terms), terms)
        jumps = np.abs(np.diff(back.s22))
        truth_jumps = np.abs(np.diff(dut.s22))
        assert np.all(jumps <= truth_jumps * (1 + 1e-6) + 1e-12)

    def test_passivity_violation_reported_not_raised(self):
        dut = SymmetricDut(F, 1.2 * np.ones(F.size), np.zeros(F.size))
        assert np.max(dut.passivity_excess()) == pytest.approx(0.44, abs=1e-12)


class TestSolveErrorTerms:
    def assert_terms_match(self, solved, truth, tol=1e-10):
        np.testing.assert_allclose(solved.e30, truth.e30, rtol=tol, atol=tol * 1e-3)
        np.testing.assert_allclose(solved.e33, truth.e33, rtol=tol, atol=tol * 1e-3)
        np.testing.assert_allclose(solved.e11, truth.e11, rtol=tol, atol=tol * 1e-3)
        np.testing.assert_allclose(
            solved.e10 * solved.e32, truth.e10 * truth.e32, rtol=tol
        )
        np.testing.assert_allclose(
            solved.e23 * solved.e32, truth.e23 * truth.e32, rtol=tol
        )

    def test_recovers_generating_network(self):
        rng = np.random.default_rng(6)
        truth = random_terms(rng)
        standards, _ = ideal_standards(truth)
        self.assert_terms_match(solve_error_terms(standards), truth)

    def test_identity_network_standards(self):
        truth = scalar_terms()
        standards, _ = ideal_standards(truth)
        solved = solve_error_terms(standards)
        np.testing.assert_allclose(solved.e30, 0, atol=1e-15)
        np.testing.assert_allclose(solved.e33, 0, atol=1e-15)
        np.testing.assert_allclose(solved.e11, 0, atol=1e-15)
        np.testing.assert_allclose(solved.e10 * solved.e32, 1, atol=1e-15)

    def test_known_line_transmission_used_when_given(self):
        rng = np.random.default_rng(7)
        truth = random_terms(rng)
        standards, t = ideal_standards(truth)
        standards = CalStandards(
            standards.thru, standards.reflect, standards.line,
            reflect_gamma=standards.reflect_gamma,
            line_s21=np.full(F.size, t),
        )
        self.assert_terms_match(solve_error_terms(standards), truth)

    def test_line_equal_to_thru_is_degenerate(self):
        rng = np.random.default_rng(8)
        truth = random_terms(rng)
        standards, _ = ideal_standards(truth, t=1.0 + 0j)
        with pytest.raises(SolveError, match="indistinguish"):
            solve_error_terms(standards)

    def test_zero_gamma_is_degenerate(self):
        rng = np.random.default_rng(9)
        truth = random_terms(rng)
        standards, _ = ideal_standards(truth)
        standards = CalStandards(
            standards.thru, standards.reflect, standards.line, reflect_gamma=0.0
        )
        with pytest.raises(SolveError, match="gamma"):
            solve_error_terms(standards)

    def test_quarter_wave_line_with_short_reflect_solves(self):
        # t = i (quarter-wave lossless line) with gamma = -1 gives
        # gamma == t**2; the system is still full rank and must solve.
        rng = np.random.default_rng(10)
        truth = random_terms(rng)
        standards, _ = ideal_standards(truth, gamma=-1.0 + 0j, t=1j)
        self.assert_terms_match(solve_error_terms(standards), truth)

    def test_input_path_measurement_splits_products(self):
        rng = np.random.default_rng(11)
        truth = random_terms(rng)
        standards, _ = ideal_standards(truth)
        solved = solve_error_terms(standards, input_path_products=(truth.e10, truth.e23))
        np.testing.assert_allclose(solved.e10, truth.e10, rtol=1e-10)
        np.testing.assert_allclose(solved.e32, truth.e32, rtol=1e-10)
        np.testing.assert_allclose(solved.e23, truth.e23, rtol=1e-10)

    def test_solve_then_embed_round_trip_on_dut(self):
        rng = np.random.default_rng(12)
        truth = random_terms(rng)
        standards, _ = ideal_standards(truth)
        solved = solve_error_terms(standards)
        dut = random_passive_dut(rng)
        m = embed(dut, truth)
        back = correct(m, solved)
        np.testing.assert_allclose(back.s21, dut.s21, atol=1e-9)
        np.testing.assert_allclose(back.s22, dut.s22, atol=1e-9)

    def test_standards_on_different_grids_are_interpolated(self):
        truth_f = np.linspace(90, 100, 201)
        truth = scalar_terms(f=truth_f, e10=0.6, e11=0.1 + 0.05j, e30=0.02, e33=0.03)
        ones = np.ones(truth_f.size, complex)
        zeros = np.zeros(truth_f.size, complex)
        t = 0.8 * np.exp(-0.5j)
        thru = embed(SymmetricDut(truth_f, ones, zeros), truth)
        refl = embed(SymmetricDut(truth_f, zeros, -ones), truth)
        line = embed(SymmetricDut(truth_f, t * ones, zeros), truth)

        def resample(tps, f_new):
            idx = np.searchsorted(tps.freqs_ghz, f_new)
            return TwoPortSet(tps.freqs_ghz[idx], tps.s21m[idx], tps.s22m[idx])

        coarse = np.linspace(90, 100, 41)
        standards = CalStandards(
            resample(thru, coarse), refl, resample(line, np.linspace(90, 100, 101)),
            reflect_gamma=-1.0 + 0j,
        )
        solved = solve_error_terms(standards)
        # coarsest grid wins; constant network so interpolation is exact
        assert solved.freqs_ghz.size == 41
        np.testing.assert_allclose(solved.e11, 0.1 + 0.05j, rtol=1e-9)

    def test_disjoint_grids_error(self):
        with pytest.raises(GridError):
            common_grid([np.linspace(90, 95, 10), np.linspace(96, 100, 10)])


class TestUncertainty:
    def measured(self, rng):
        terms = random_terms(rng)
        dut = random_passive_dut(rng)
        return embed(dut, terms), terms

    def test_zero_magnitude_gives_zero(self):
        m, terms = self.measured(np.random.default_rng(13))
        d21, d22 = propagate_uncertainty(m, terms, 0.0)
        assert np.all(d21 == 0) and np.all(d22 == 0)

    def test_monotone_in_magnitude(self):
        m, terms = self.measured(np.random.default_rng(14))
        d21a, d22a = propagate_uncertainty(m, terms, 0.03)
        d21b, d22b = propagate_uncertainty(m, terms, 0.09)
        assert np.all(d21b >= d21a) and np.all(d22b >= d22a)

    def test_transparent_dut_reflection_less_certain_than_transmission(self):
        # |S21| ~ 1, |S22| ~ 0 through a representative network whose
        # reflection path has less dynamic range than the transmission path
        # (coupler-fed reflect input): the small parameter comes out with the
        # larger uncertainty. Ordering is cross-checked against a Monte-Carlo
        # perturbation oracle (1e4 draws of random-phase term errors).
        rng = np.random.default_rng(15)
        f = np.linspace(90, 100, 21)

        def rc(scale):
            return scale * (rng.uniform(-1, 1, f.size) + 1j * rng.uniform(-1, 1, f.size))

        terms = ErrorTerms(
            f,
            e10=0.8 + rc(0.05),
            e23=0.35 + rc(0.05),
            e32=1.0 + rc(0.05),
            e30=rc(0.04),
            e33=rc(0.06),
            e11=0.15 + rc(0.05),
        )
        dut = SymmetricDut(f, 0.98 * np.ones(f.size), 0.01 * np.ones(f.size))
        m = embed(dut, terms)
        d21, d22 = propagate_uncertainty(m, terms, 0.06)
        assert np.median(d22) > np.median(d21)

        draws = 10_000
        dev21 = np.zeros(f.size)
        dev22 = np.zeros(f.size)
        base = correct(m, terms)
        for _ in range(draws):
            pert = terms
            for name in ("e10", "e23", "e32", "e30", "e33", "e11"):
                phase = np.exp(1j * rng.uniform(-np.pi, np.pi))
                pert = pert.with_term(name, pert.term(name) + 0.06 * phase)
            c = correct(m, pert)
            dev21 += (np.abs(c.s21) - np.abs(base.s21)) ** 2
            dev22 += (np.abs(c.s22) - np.abs(base.s22)) ** 2
        rms21 = np.sqrt(dev21 / draws)
        rms22 = np.sqrt(dev22 / draws)
        assert np.median(rms22) > np.median(rms21)
        # the first-order figure uses worst-case phases, so it should not
        # fall below the typical Monte-Carlo deviation
        assert np.median(d21) > 0.5 * np.median(rms21)
        assert np.median(d22) > 0.5 * np.median(rms22)


class TestErrorTermsType:
    def test_amplifying_input_path_warns(self):
        with pytest.warns(UserWarning, match="attenuate"):
            scalar_terms(e10=1.5)

    def test_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(16)
        terms = random_terms(rng)
        doc = terms_to_json_dict(terms)
        back = terms_from_json_dict(doc)
        np.testing.assert_array_equal(back.freqs_ghz, terms.freqs_ghz)
        for name in ("e10", "e23", "e32", "e30", "e33", "e11"):
            np.testing.assert_array_equal(getattr(back, name), getattr(terms, name))

        path = tmp_path / "terms.json"
        save_terms(path, terms)
        loaded = load_terms(path)
        np.testing.assert_array_equal(loaded.e11, terms.e11)

    def test_interpolation_out_of_range_errors(self):
        terms = scalar_terms()
        with pytest.raises(GridError):
            terms.interpolated(np.array([80.0, 85.0]))
