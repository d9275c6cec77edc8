import numpy as np
import pytest

from bfl.experiments import (
    EnsembleRunConfig,
    EnsembleRunError,
    FreezeNotEndedError,
    TimeGrid,
    detect_freeze_end,
    detect_plateau,
    detect_revival_period,
    dominated_perturbation,
    find_freeze_end,
    fit_scaling,
    realize_member,
    run_ensemble,
)
from bfl.ensemble import sample_couplings


def small_cfg(**overrides):
    base = dict(
        n=16,
        k=2,
        beta=1,
        lam=1e-4,
        realizations=4,
        master_seed=7,
        grid=TimeGrid(t_max=6.0, points_per_unit=256),
    )
    base.update(overrides)
    return EnsembleRunConfig(**base)


class TestRunEnsemble:
    def test_single_realization_equals_member_trace(self):
        cfg = small_cfg(realizations=1)
        result = run_ensemble(cfg)
        trace = realize_member(cfg, 0)
        np.testing.assert_array_equal(result.mean_f, trace.fidelities)
        assert result.n_realizations == 1
        assert not result.std_f.any()

    def test_lambda_zero_unity(self):
        result = run_ensemble(small_cfg(lam=0.0, realizations=3))
        np.testing.assert_allclose(result.mean_f, 1.0, atol=1e-10)
        assert result.mean_f[0] == 1.0

    def test_thread_count_bitwise_invariant(self):
        a = run_ensemble(small_cfg(threads=1))
        b = run_ensemble(small_cfg(threads=4))
        np.testing.assert_array_equal(a.mean_f, b.mean_f)
        np.testing.assert_array_equal(a.std_f, b.std_f)

    def test_rerun_bitwise_deterministic(self):
        a = run_ensemble(small_cfg())
        b = run_ensemble(small_cfg())
        np.testing.assert_array_equal(a.mean_f, b.mean_f)

    def test_mean_bounds(self):
        result = run_ensemble(small_cfg(realizations=6))
        assert result.mean_f[0] == 1.0
        assert result.mean_f.min() >= 0.0
        assert result.mean_f.max() <= 1.0 + 1e-10

    def test_keep_traces(self):
        result = run_ensemble(small_cfg(realizations=3, keep_traces=True))
        assert result.per_realization_f.shape == (3, result.times.size)
        np.testing.assert_allclose(
            result.per_realization_f.mean(axis=0), result.mean_f, atol=1e-12
        )

    def test_failed_realizations_abort_run(self, monkeypatch):
        import bfl.experiments as exp
        from bfl.dynamics import EigendecompositionError

        def boom(*args, **kwargs):
            raise EigendecompositionError("synthetic failure")

        monkeypatch.setattr(exp, "build_perturbed", boom)
        with pytest.raises(EnsembleRunError) as err:
            run_ensemble(small_cfg(realizations=2))
        assert err.value.failures[0][0] == 0
        assert "synthetic failure" in err.value.failures[0][1]

    def test_dominated_config_keeps_reference_diagonal(self):
        plain = run_ensemble(small_cfg(realizations=2))
        boosted = run_ensemble(small_cfg(realizations=2, dominant_c=2, boost=50.0))
        assert plain.heisenberg_time == boosted.heisenberg_time


class TestDominatedPerturbation:
    def test_identity_boost(self):
        c = sample_couplings(3, 2, np.random.default_rng(5))
        np.testing.assert_array_equal(dominated_perturbation(c, 2, 1.0).v, c.v)

    def test_k2_c2_scales_only_corner(self):
        c = sample_couplings(2, 1, np.random.default_rng(6))
        boosted = dominated_perturbation(c, 2, 100.0)
        assert boosted.v[2, 0] == pytest.approx(100 * c.v[2, 0])
        assert boosted.v[0, 2] == pytest.approx(100 * c.v[0, 2])
        changed = boosted.v != c.v
        assert changed.sum() == 2

    def test_diagonal_never_changes(self):
        c = sample_couplings(3, 2, np.random.default_rng(7))
        for cc in (1, 2, 3):
            np.testing.assert_array_equal(
                dominated_perturbation(c, cc, 1000.0).diagonal, c.diagonal
            )

    def test_hermiticity_preserved(self):
        c = sample_couplings(3, 2, np.random.default_rng(8))
        boosted = dominated_perturbation(c, 1, 40.0)
        np.testing.assert_allclose(boosted.v, boosted.v.conj().T, atol=1e-12)

    def test_c_out_of_range(self):
        c = sample_couplings(2, 1, np.random.default_rng(9))
        with pytest.raises(ValueError):
            dominated_perturbation(c, 3, 10.0)
        with pytest.raises(ValueError):
            dominated_perturbation(c, 0, 10.0)


class TestFitScaling:
    def test_exact_square_law(self):
        fit = fit_scaling([(1, 1), (2, 4), (4, 16)])
        assert fit.exponent == pytest.approx(2.0, abs=1e-12)
        assert fit.prefactor == pytest.approx(1.0, abs=1e-12)
        assert fit.residual == pytest.approx(0.0, abs=1e-12)

    def test_constant(self):
        fit = fit_scaling([(1, 3.7), (10, 3.7)])
        assert fit.exponent == pytest.approx(0.0, abs=1e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            fit_scaling([(1, 1)])
        with pytest.raises(ValueError):
            fit_scaling([(1, 1), (-2, 4)])
        with pytest.raises(ValueError):
            fit_scaling([(1, 1), (2, -4)])
        with pytest.raises(ValueError):
            fit_scaling([(1, 1), (1, 2)])


def synthetic_freeze_trace(ppu=64, t_max=40.0, plateau=1e-8, t_e=10.0, ramp=1e-6):
    times = np.linspace(0, t_max, int(t_max * ppu) + 1)
    g = np.full_like(times, plateau)
    g[times < 0.7] = plateau * (times[times < 0.7] / 0.7) ** 2
    late = times > t_e
    g[late] += ramp * (times[late] - t_e) ** 2
    return times, 1.0 - g


class TestPlateauAndFreezeEnd:
    def test_constant_plateau(self):
        times = np.linspace(0, 8, 8 * 256 + 1)
        mean_f = 1.0 - np.full_like(times, 1e-8)
        stats = detect_plateau(times, mean_f)
        assert stats.plateau_level == pytest.approx(1e-8, rel=1e-12)
        assert stats.freeze_end is None

    def test_oscillating_plateau_with_revivals(self):
        times = np.linspace(0, 8, 8 * 256 + 1)
        g = 1e-8 * (1 - np.cos(2 * np.pi * times)) / 2
        stats = detect_plateau(times, 1.0 - g)
        assert stats.plateau_level == pytest.approx(0.5e-8, rel=0.2)

    def test_synthetic_freeze_end(self):
        times, mean_f = synthetic_freeze_trace()
        stats = detect_plateau(times, mean_f)
        assert stats.plateau_level == pytest.approx(1e-8, rel=0.05)
        assert stats.freeze_end == pytest.approx(10.0, abs=0.5)

    def test_exact_inverse_law_family(self):
        entries = []
        for lam in (1e-4, 2e-4, 4e-4):
            t_e = 2e-3 / lam
            times, mean_f = synthetic_freeze_trace(t_max=3 * t_e, t_e=t_e)
            entries.append((lam, times, mean_f))
        scan = detect_freeze_end(entries)
        assert scan.fit.exponent == pytest.approx(-1.0, abs=0.05)
        np.testing.assert_allclose(scan.freeze_ends, [20.0, 10.0, 5.0], atol=0.5)

    def test_freeze_not_ended(self):
        times = np.linspace(0, 30, 30 * 64 + 1)
        g = np.full_like(times, 1e-8)
        with pytest.raises(FreezeNotEndedError) as err:
            find_freeze_end(times, g, 1e-8)
        assert err.value.lower_bound == pytest.approx(29.5, abs=0.1)

    def test_short_trace_rejected(self):
        times = np.linspace(0, 3, 301)
        with pytest.raises(ValueError):
            detect_plateau(times, np.ones_like(times))


class TestRevivalDetection:
    def test_pure_tone(self):
        times = np.linspace(0, 6, 6 * 512 + 1)
        g = 1e-8 * np.cos(2 * np.pi * times / 0.5)
        report = detect_revival_period(times, 1.0 - g, (1.0, 5.0))
        assert report is not None
        assert report.period == pytest.approx(0.5, abs=1 / 512)
        assert report.c == 2

    def test_white_noise(self):
        rng = np.random.default_rng(2024)
        times = np.linspace(0, 6, 6 * 512 + 1)
        g = 1e-8 * rng.standard_normal(times.size)
        report = detect_revival_period(times, 1.0 - g, (1.0, 5.0))
        assert report is None

    def test_spike_train(self):
        # narrow periodic dips, closer to the real revival shape
        times = np.linspace(0, 6, 6 * 512 + 1)
        g = np.full_like(times, 1e-9)
        phase = times / (1 / 3)
        dips = np.abs(phase - np.round(phase)) < 0.02
        g[dips] = 1e-11
        report = detect_revival_period(times, 1.0 - g, (1.0, 5.0))
        assert report is not None
        assert report.period == pytest.approx(1 / 3, abs=1 / 512)
        assert report.c == 3
        assert report.confidence >= 3.0

    def test_window_too_short(self):
        times = np.linspace(0, 6, 6 * 512 + 1)
        with pytest.raises(ValueError):
            detect_revival_period(times, np.ones_like(times), (1.0, 1.02), min_periods=8)
        # enough points but too few candidate lags for 8 periods
        coarse = np.linspace(0, 6, 33)
        with pytest.raises(ValueError):
            detect_revival_period(coarse, np.ones(33), (0.0, 6.0), min_periods=8)


class TestConfigValidation:
    def test_bad_values(self):
        with pytest.raises(ValueError):
            small_cfg(k=20)
        with pytest.raises(ValueError):
            small_cfg(beta=3)
        with pytest.raises(ValueError):
            small_cfg(lam=-1e-6)
        with pytest.raises(ValueError):
            small_cfg(realizations=0)
        with pytest.raises(ValueError):
            small_cfg(diagonal_policy="sometimes")
        with pytest.raises(ValueError):
            small_cfg(dominant_c=5)
        with pytest.raises(ValueError):
            TimeGrid(t_max=-1.0)

    def test_grid_times(self):
        grid = TimeGrid(t_max=2.0, points_per_unit=512)
        t = grid.times()
        assert t.size == 1025
        assert t[0] == 0.0
        assert t[-1] == 2.0
