import math

import numpy as np
import pytest
from scipy.constants import h, k

from mmwres.errors import DataError, FitError
from mmwres.lossfit import (
    LossBudget,
    QpParams,
    TlsParams,
    bcs_gap_k,
    fit_power_sweep,
    fit_temperature_sweep,
    mb_sigma,
    photon_energy_k,
    q_sigma,
    q_tls,
    qe_loss_correlation,
    qi_total,
    read_loss_csv,
    write_loss_csv,
)
from mmwres.synth import NoiseSpec, synth_power_sweep, synth_temperature_sweep

from _mb_oracle import mb_sigma_trapz

TC_NB = 9.2
NB = QpParams(q_sigma0=1.0, tc_k=TC_NB)


def rel(a, b):
    return abs(a - b) / abs(b)


class TestTls:
    def test_unsaturated_single_photon_limit(self):
        # nbar = 0 and tanh -> 1 at T << hf/k
        p = TlsParams(q_tls0=1e6, n_c=100.0, beta=0.5)
        assert q_tls(0.0, 1e-3, 95.0, p) == pytest.approx(1e6, rel=1e-12)

    def test_critical_photon_number_sqrt2(self):
        p = TlsParams(q_tls0=1e6, n_c=100.0, beta=1.0)
        assert q_tls(100.0, 1e-3, 95.0, p) == pytest.approx(1e6 * math.sqrt(2.0), rel=1e-9)

    def test_thermal_factor_against_constants(self):
        # hf/k at 95 GHz is about 4.559 K; cross-check the tanh argument
        hw_k = h * 95e9 / k
        assert hw_k == pytest.approx(4.559, abs=2e-3)
        assert photon_energy_k(95.0) == pytest.approx(hw_k, rel=1e-15)
        p = TlsParams(q_tls0=1e6, n_c=100.0, beta=0.5)
        t = 0.86
        expected = 1e6 * math.sqrt(1.0 + math.sqrt(10.0 / 100.0) ** 0.5 * 0 + math.tanh(hw_k / t) * (10.0 / 100.0) ** 0.5) / math.tanh(hw_k / t)
        assert q_tls(10.0, t, 95.0, p) == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_drive_and_equal_at_zero(self):
        p = TlsParams(q_tls0=5e5, n_c=30.0, beta=0.7)
        nbars = np.logspace(-2, 7, 40)
        vals = [q_tls(n, 0.86, 95.0, p) for n in nbars]
        assert np.all(np.diff(vals) > 0)
        assert q_tls(0.0, 0.86, 95.0, p) == min(q_tls(0.0, 0.86, 95.0, p), vals[0])

    def test_beta_bounds(self):
        with pytest.raises(DataError):
            TlsParams(q_tls0=1e6, n_c=10.0, beta=2.5)


class TestMbSigma:
    def test_normal_state_limit_close_to_tc(self):
        # Delta -> 0: sigma1 -> 1, sigma2 -> 0. At 1e-7 below Tc the gap is
        # ~5e-4 of its zero-temperature value and both limits are met to 1e-3.
        s1, s2 = mb_sigma(TC_NB * (1 - 1e-7), 95.0, NB)
        assert abs(s1 - 1.0) < 1e-3
        assert abs(s2) < 1e-3

    def test_frozen_quasiparticles_at_low_temperature(self):
        # Boltzmann suppression: at 0.05*Tc the absorption is ~2e-15 (the
        # photon-assist factor exp(+hf/2kT) keeps it far above 1e-30, which
        # is only reached near 0.02*Tc)
        s1_005, _ = mb_sigma(0.05 * TC_NB, 95.0, NB)
        assert 0.0 <= s1_005 < 1e-12
        s1_002, _ = mb_sigma(0.02 * TC_NB, 95.0, NB)
        assert 0.0 <= s1_002 < 1e-30

    def test_oracle_agreement_at_half_tc(self):
        s = mb_sigma(4.6, 95.0, NB)
        o = mb_sigma_trapz(4.6, 95.0, TC_NB)
        assert rel(s[0], o[0]) < 1e-5
        assert rel(s[1], o[1]) < 1e-5

    def test_sigma1_bounded_and_sigma2_nonnegative(self):
        for t in (0.5, 2.0, 4.6, 7.0, 8.9):
            s1, s2 = mb_sigma(t, 95.0, NB)
            assert s1 >= 0.0
            assert s2 >= 0.0
        # sub-gap absorption cannot exceed normal-state by much except at the
        # coherence peak; sanity-check the deep sub-gap point
        assert mb_sigma(0.86, 95.0, NB)[0] < 1.0

    def test_sigma2_monotone_decreasing_in_t(self):
        ts = np.linspace(0.2 * TC_NB, 0.999 * TC_NB, 30)
        s2 = [mb_sigma(t, 95.0, NB)[1] for t in ts]
        assert np.all(np.diff(s2) < 0)

    def test_small_steps_in_midrange(self):
        # a 1 mK step moves sigma1 by < 1e-3 everywhere below Tc and sigma2
        # by < 1e-3 up to ~half Tc (above that the smooth slope of sigma2 is
        # itself a few 1e-3 per mK as it falls from ~11 to 0)
        for t in (2.0, 3.0, 4.6):
            a = mb_sigma(t, 95.0, NB)
            b = mb_sigma(t + 1e-3, 95.0, NB)
            assert abs(a[0] - b[0]) < 1e-3
            assert abs(a[1] - b[1]) < 1e-3
        for t in (7.0, 8.5, 9.0):
            a = mb_sigma(t, 95.0, NB)
            b = mb_sigma(t + 1e-3, 95.0, NB)
            assert abs(a[0] - b[0]) < 1e-3

    def test_continuity_by_step_refinement(self):
        # no discontinuities: halving the temperature step halves the change,
        # including at the absorption edge where the photon energy crosses
        # 2*Delta(T) (sigma1 keeps a derivative kink there but stays
        # continuous) and close to Tc
        from scipy.optimize import brentq

        hw = photon_energy_k(95.0)
        tstar = brentq(lambda t: 2.0 * bcs_gap_k(t, NB) - hw, 8.0, 9.199)
        for t in (4.6, 8.0, tstar, 9.15):
            for idx in (0, 1):
                d_coarse = abs(mb_sigma(t + 2e-3, 95.0, NB)[idx] - mb_sigma(t, 95.0, NB)[idx])
                d_fine = abs(mb_sigma(t + 1e-3, 95.0, NB)[idx] - mb_sigma(t, 95.0, NB)[idx])
                assert d_fine <= 0.75 * d_coarse + 1e-9

    def test_t_at_or_above_tc_rejected(self):
        with pytest.raises(DataError):
            mb_sigma(9.2, 95.0, NB)

    def test_gap_interpolation_endpoints(self):
        assert bcs_gap_k(1e-6, NB) == pytest.approx(1.764 * TC_NB, rel=1e-12)
        assert bcs_gap_k(9.2, NB) == 0.0

    def test_gap_ratio_sanity_range(self):
        with pytest.raises(DataError):
            QpParams(q_sigma0=1.0, tc_k=9.2, gap0_k=50.0)


class TestQSigma:
    def test_ratio_at_base_temperature_exceeds_1e8(self):
        assert q_sigma(0.86, 95.0, NB) > 1e8

    def test_monotone_decreasing_on_scan(self):
        ts = np.linspace(0.3 * TC_NB, 0.99 * TC_NB, 50)
        qs = [q_sigma(t, 95.0, NB) for t in ts]
        assert np.all(np.diff(qs) < 0)

    def test_vanishes_toward_tc(self):
        assert q_sigma(TC_NB * (1 - 1e-7), 95.0, NB) < 1e-2

    def test_underflow_returns_infinity_sentinel(self):
        assert q_sigma(0.002 * TC_NB, 95.0, NB) == math.inf


class TestQiTotal:
    def budget(self, q_tls0=9.53e5, q_other=1.17e5, n_c=100.0, beta=0.5, q_sigma0=1e12):
        return LossBudget(
            tls=TlsParams(q_tls0=q_tls0, n_c=n_c, beta=beta),
            qp=QpParams(q_sigma0=q_sigma0, tc_k=TC_NB),
            q_other=q_other,
        )

    def test_three_equal_channels(self):
        # all channels at 3e5 -> Qi = 1e5; pick T/f making tanh -> 1 and a
        # q_sigma0 that lands the conductivity channel at 3e5 exactly
        s1, s2 = mb_sigma(0.86, 95.0, NB)
        b = LossBudget(
            tls=TlsParams(q_tls0=3e5, n_c=100.0, beta=0.5),
            qp=QpParams(q_sigma0=3e5 / (s2 / s1), tc_k=TC_NB),
            q_other=3e5,
        )
        got = qi_total(0.86, 0.0, 95.0, b)
        th = math.tanh(photon_energy_k(95.0) / 0.86)
        expected = 1.0 / (th / 3e5 + 1.0 / 3e5 + 1.0 / 3e5)
        assert got == pytest.approx(expected, rel=1e-9)
        assert got == pytest.approx(1e5, rel=1e-4)

    def test_channel_removal_when_quasiparticles_frozen(self):
        b = self.budget()
        got = qi_total(0.86, 0.0, 95.0, b)
        th = math.tanh(photon_energy_k(95.0) / 0.86)
        expected = 1.0 / (th / 9.53e5 + 1.0 / 1.17e5)
        assert got == pytest.approx(expected, rel=1e-6)

    def test_single_photon_value_of_reference_budget(self):
        # {q_tls0=9.53e5, q_other=1.17e5} at base temperature: Qi ~ 1.04e5
        got = qi_total(0.86, 0.0, 95.0, self.budget())
        assert got == pytest.approx(1.04e5, rel=5e-3)

    def test_never_exceeds_any_channel(self):
        b = self.budget()
        for nbar in (0.0, 1e2, 1e6):
            for t in (0.5, 0.86, 2.0):
                qi = qi_total(t, nbar, 95.0, b)
                assert qi <= q_tls(nbar, t, 95.0, b.tls)
                assert qi <= q_sigma(t, 95.0, b.qp)
                assert qi <= b.q_other


class TestPowerFit:
    def make_points(self, q_tls0, q_other, n_c=50.0, beta=0.8, noise=NoiseSpec(), n=20):
        b = LossBudget(
            tls=TlsParams(q_tls0=q_tls0, n_c=n_c, beta=beta),
            qp=QpParams(q_sigma0=1e12, tc_k=TC_NB),
            q_other=q_other,
        )
        return synth_power_sweep(b, np.logspace(0, 6, n), 0.86, 95.0, noise)

    def test_noiseless_closure_to_1e4(self):
        pts = self.make_points(1.03e6, 4.18e6)
        res = fit_power_sweep(pts, 0.86, 95.0)
        assert rel(res.tls.q_tls0, 1.03e6) < 1e-4
        assert rel(res.tls.n_c, 50.0) < 1e-4
        assert rel(res.tls.beta, 0.8) < 1e-4
        assert rel(res.q_other, 4.18e6) < 1e-4
        assert res.unconstrained == ()

    def test_flat_sweep_flags_tls_unconstrained(self):
        b = LossBudget(
            tls=TlsParams(q_tls0=1e30, n_c=100.0, beta=0.5),
            qp=QpParams(q_sigma0=1e12, tc_k=TC_NB),
            q_other=2.2e5,
        )
        pts = synth_power_sweep(b, np.logspace(0, 6, 10), 0.86, 95.0)
        res = fit_power_sweep(pts, 0.86, 95.0)
        assert set(res.unconstrained) == {"q_tls0", "n_c", "beta"}
        assert rel(res.q_other, 2.2e5) < 1e-9
        assert math.isinf(res.tls.q_tls0)

    def test_noisy_monte_carlo_median_within_10pct(self):
        recovered = []
        for seed in range(50):
            pts = self.make_points(0.953e6, 1.17e5, noise=NoiseSpec("multiplicative", 0.02, seed))
            try:
                res = fit_power_sweep(pts, 0.86, 95.0)
            except FitError:
                continue
            recovered.append(res.tls.q_tls0)
        assert len(recovered) >= 45
        assert rel(float(np.median(recovered)), 0.953e6) < 0.10

    def test_insufficient_span_rejected(self):
        pts = self.make_points(1e6, 2e5)
        narrow = pts[(pts[:, 0] >= 1e2) & (pts[:, 0] <= 1e4)]
        with pytest.raises(DataError, match="span"):
            fit_power_sweep(narrow, 0.86, 95.0)

    def test_too_few_points_rejected(self):
        pts = self.make_points(1e6, 2e5)[::6]
        with pytest.raises(DataError, match="5 points"):
            fit_power_sweep(pts, 0.86, 95.0)

    def test_weighted_fit_uses_errors(self):
        pts = self.make_points(0.953e6, 1.17e5)
        err = np.column_stack([pts, 0.01 * pts[:, 1]])
        res = fit_power_sweep(err, 0.86, 95.0)
        assert rel(res.tls.q_tls0, 0.953e6) < 1e-4

    def test_jacobian_matches_central_differences(self):
        # the optimizer consumes forward differences of the loss residual;
        # verify they agree with central differences at a random interior
        # point to 1e-6 relative
        pts = self.make_points(0.953e6, 1.17e5)
        nbar, qi = pts[:, 0], pts[:, 1]
        th = math.tanh(photon_energy_k(95.0) / 0.86)

        def loss_model(u):
            sat = (nbar / math.exp(u[1])) ** u[2]
            return 1.0 / (math.exp(u[0]) * np.sqrt(1.0 + sat * th) / th) + 1.0 / math.exp(u[3])

        u = np.array([math.log(0.9e6), math.log(40.0), 0.7, math.log(1.3e5)])
        for j in range(4):
            hstep = 1e-6 * max(1.0, abs(u[j]))
            up, dn = u.copy(), u.copy()
            up[j] += hstep
            dn[j] -= hstep
            fwd = (loss_model(up) - loss_model(u)) / hstep
            ctr = (loss_model(up) - loss_model(dn)) / (2 * hstep)
            scale = np.max(np.abs(ctr))
            assert np.allclose(fwd, ctr, atol=1e-6 * scale, rtol=1e-5)


class TestTemperatureFit:
    def make_points(self, q_sigma0=2.0, tc=TC_NB, q_tls0=0.953e6, q_other=1.17e5,
                    n_c=100.0, beta=0.5, tmax=7.5, n=25, noise=NoiseSpec()):
        b = LossBudget(
            tls=TlsParams(q_tls0=q_tls0, n_c=n_c, beta=beta),
            qp=QpParams(q_sigma0=q_sigma0, tc_k=tc),
            q_other=q_other,
        )
        return synth_temperature_sweep(b, np.linspace(0.86, tmax, n), 1e5, 95.0, noise)

    def test_noiseless_closure_all_free(self):
        pts = self.make_points()
        res = fit_temperature_sweep(pts, 1e5, 95.0, fixed={"n_c": 100.0, "beta": 0.5})
        assert rel(res.budget.qp.q_sigma0, 2.0) < 0.02
        assert rel(res.budget.qp.tc_k, TC_NB) < 0.02
        assert rel(res.budget.tls.q_tls0, 0.953e6) < 0.02
        assert rel(res.budget.q_other, 1.17e5) < 0.02

    def test_fixed_tc_recovers_q_sigma0_to_0p1pct(self):
        pts = self.make_points()
        res = fit_temperature_sweep(
            pts, 1e5, 95.0, fixed={"tc_k": TC_NB, "n_c": 100.0, "beta": 0.5}
        )
        assert rel(res.budget.qp.q_sigma0, 2.0) < 1e-3
        assert "tc_k" not in res.param_names

    def test_low_temperature_only_flags_conductivity(self):
        pts = self.make_points(tmax=1.5, n=10)
        res = fit_temperature_sweep(pts, 1e5, 95.0)
        assert "q_sigma0" in res.unconstrained

    def test_points_above_fixed_tc_rejected(self):
        pts = self.make_points()
        with pytest.raises(DataError):
            fit_temperature_sweep(pts, 1e5, 95.0, fixed={"tc_k": 5.0})


class TestCorrelation:
    def test_perfect_correlation(self):
        qe = np.logspace(3, 5, 8)
        fits = [{"qe_mag": q, "qi_low": 10 * q, "qi_high": 100 * q} for q in qe]
        res = qe_loss_correlation(fits, n_permutations=200, seed=1)
        assert res.pearson_low == pytest.approx(1.0, abs=1e-12)
        assert res.pearson_high == pytest.approx(1.0, abs=1e-12)
        assert res.p_low < 0.05

    def test_constant_qi_degenerate_flag(self):
        fits = [{"qe_mag": q, "qi_low": 1e5, "qi_high": 2e5} for q in (1e3, 1e4, 1e5)]
        res = qe_loss_correlation(fits, n_permutations=100, seed=2)
        assert res.pearson_low == 0.0
        assert res.degenerate_low and res.degenerate_high
        assert res.p_low == 1.0

    def test_uncorrelated_distribution_over_seeds(self):
        # independent random Qi over a fixed Qe grid: |r| < 0.5 for most
        # seeds and p > 0.05 typically
        qe = np.logspace(3, 6, 16)
        rng = np.random.default_rng(0)
        small_r = 0
        large_p = 0
        n_seeds = 40
        for seed in range(n_seeds):
            qi = 10 ** rng.uniform(4.5, 6.0, qe.size)
            fits = [
                {"qe_mag": q, "qi_low": v, "qi_high": v * 2} for q, v in zip(qe, qi)
            ]
            res = qe_loss_correlation(fits, n_permutations=300, seed=seed)
            small_r += abs(res.pearson_low) < 0.5
            large_p += res.p_low > 0.05
        assert small_r >= int(0.8 * n_seeds)
        assert large_p >= int(0.5 * n_seeds)

    def test_fewer_than_three_rejected(self):
        with pytest.raises(DataError):
            qe_loss_correlation([{"qe_mag": 1e3, "qi_low": 1e5, "qi_high": 1e5}] * 2)


class TestLossCsv:
    def test_round_trip_power(self):
        pts = np.array([[1.0, 1e5], [1e3, 1.1e5], [1e6, 1.2e5]])
        kind, back = read_loss_csv(write_loss_csv("nbar", pts).encode())
        assert kind == "nbar"
        np.testing.assert_array_equal(back, pts)

    def test_round_trip_with_errors(self):
        pts = np.array([[0.9, 1e5, 1e3], [1.5, 1.1e5, 1.2e3]])
        kind, back = read_loss_csv(write_loss_csv("temperature_k", pts).encode())
        assert kind == "temperature_k"
        np.testing.assert_array_equal(back, pts)

    def test_missing_column_rejected(self):
        with pytest.raises(Exception):
            read_loss_csv(b"x,qi\n1,2\n")
