import numpy as np
import pytest

from romcast import forecast, neural, pca, snapshots, training
from romcast.errors import InvalidConfig, ShapeMismatch, StartOutOfRange


def tiny_setup(seed=0, n=120, tau=3):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    scores = 0.5 + 0.4 * np.sin(2 * np.pi * t[:, None] / (9.0 + 3 * np.arange(tau)))
    scores = scores + 0.01 * rng.standard_normal(scores.shape)
    scaler = snapshots.fit_scaler(scores)
    model = neural.init_forecaster(tau, 8, tau, "sigmoid", 0.0, 2, rng)
    return scores, scaler, model


class TestRollout:
    def test_zero_horizon(self):
        scores, scaler, model = tiny_setup()
        result = forecast.rollout(model, scaler, scaler.scale(scores)[:2], 0)
        assert result.predictions.shape == (0, 3)
        assert result.errors.shape == (0,)
        assert result.diverged_at is None

    def test_stub_fixed_point(self, monkeypatch):
        scores, scaler, model = tiny_setup()

        def last_row(model_, window):
            return window[-1].copy()

        monkeypatch.setattr(forecast, "forecaster_step", last_row)
        window = scaler.scale(scores)[:2]
        result = forecast.rollout(model, scaler, window, 7)
        assert np.allclose(result.predictions_scaled,
                           np.tile(window[-1], (7, 1)))

    def test_first_step_equals_direct_prediction(self):
        scores, scaler, model = tiny_setup()
        window = scaler.scale(scores)[10:12]
        direct, _ = neural.forecaster_forward(model, window)
        result = forecast.rollout(model, scaler, window, 5)
        assert result.predictions_scaled[0].tobytes() == direct.tobytes()

    def test_errors_fill_only_where_truth_exists(self):
        scores, scaler, model = tiny_setup()
        window = scaler.scale(scores)[0:2]
        truth = scores[2:5]
        result = forecast.rollout(model, scaler, window, 6, truth=truth)
        assert np.all(np.isfinite(result.errors[:3]))
        assert np.all(np.isnan(result.errors[3:]))
        expected = np.linalg.norm(result.predictions[1] - truth[1])
        assert result.errors[1] == expected

    def test_divergence_recorded_not_raised(self):
        scores, scaler, model = tiny_setup()
        model.head.bias[0] = np.nan
        result = forecast.rollout(model, scaler, scaler.scale(scores)[:2], 4)
        assert result.diverged_at == 0
        assert np.all(np.isnan(result.predictions))

    def test_inference_purity(self):
        scores, scaler, model = tiny_setup()
        window = scaler.scale(scores)[3:5]
        before = {k: v.copy() for k, v in model.params().items()}
        a = forecast.rollout(model, scaler, window, 10)
        b = forecast.rollout(model, scaler, window, 10)
        assert a.predictions.tobytes() == b.predictions.tobytes()
        for key, val in model.params().items():
            assert val.tobytes() == before[key].tobytes()

    def test_bad_window_rejected(self):
        scores, scaler, model = tiny_setup()
        with pytest.raises(ShapeMismatch):
            forecast.rollout(model, scaler, scaler.scale(scores)[:3], 4)


class TestEvaluateEnsemble:
    def test_identical_models_zero_reduction(self):
        scores, scaler, model = tiny_setup()
        report = forecast.evaluate_ensemble(model, model, scores, scaler,
                                            range(10, 20), 15)
        assert np.array_equal(report.reduction_pct, np.zeros(15))
        assert report.aggregate_reduction_pct == 0.0

    def test_reduction_formula(self):
        assert forecast._reduction(2.0, 1.0) == 50.0
        assert forecast._reduction(0.0, 1.0) == 0.0

    def test_swapping_models_swaps_curves(self):
        scores, scaler, model_a = tiny_setup(seed=1)
        _, _, model_b = tiny_setup(seed=2)
        fwd = forecast.evaluate_ensemble(model_a, model_b, scores, scaler,
                                         range(5, 15), 10)
        rev = forecast.evaluate_ensemble(model_b, model_a, scores, scaler,
                                         range(5, 15), 10)
        assert np.array_equal(fwd.mean_classic, rev.mean_adv)
        assert np.array_equal(fwd.mean_adv, rev.mean_classic)
        assert np.array_equal(fwd.std_classic, rev.std_adv)

    def test_start_out_of_range(self):
        scores, scaler, model = tiny_setup()
        with pytest.raises(StartOutOfRange):
            forecast.evaluate_ensemble(model, model, scores, scaler,
                                       [200], 10)
        with pytest.raises(StartOutOfRange):
            forecast.evaluate_ensemble(model, model, scores, scaler, [], 10)

    def test_mismatched_lags_rejected(self):
        scores, scaler, model = tiny_setup()
        rng = np.random.default_rng(9)
        other = neural.init_forecaster(3, 8, 3, "sigmoid", 0.0, 3, rng)
        with pytest.raises(InvalidConfig):
            forecast.evaluate_ensemble(model, other, scores, scaler, [5], 10)

    def test_csv_round_trip(self, tmp_path):
        scores, scaler, model = tiny_setup()
        report = forecast.evaluate_ensemble(model, model, scores, scaler,
                                            range(10, 20), 8)
        path = tmp_path / "report.csv"
        report.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == ("horizon,mean_classic,std_classic,mean_adv,"
                            "std_adv,error_reduction_pct")
        assert len(lines) == 9
        loaded = forecast.EnsembleReport.from_csv(path)
        assert np.allclose(loaded.mean_classic, report.mean_classic,
                           rtol=1e-5)
        assert loaded.aggregate_reduction_pct == pytest.approx(
            report.aggregate_reduction_pct, abs=1e-4)


class TestReconstructForecast:
    def test_zero_scores_give_mean_rows(self):
        data = np.random.default_rng(0).standard_normal((20, 12))
        basis = pca.fit(data, tau=3)
        result = forecast.RolloutResult(
            start_step=0, horizon=4,
            predictions_scaled=np.zeros((4, 3)),
            predictions=np.zeros((4, 3)),
            errors=np.full(4, np.nan),
        )
        fields = forecast.reconstruct_forecast(basis, result)
        assert np.allclose(fields, np.tile(basis.mean, (4, 1)))

    def test_ground_truth_scores_match_pca_reconstruction(self):
        data = np.random.default_rng(1).standard_normal((20, 12))
        basis = pca.fit(data, tau=4)
        scores = pca.project(basis, data[:5])
        result = forecast.RolloutResult(
            start_step=0, horizon=5,
            predictions_scaled=scores,
            predictions=scores,
            errors=np.full(5, np.nan),
        )
        fields = forecast.reconstruct_forecast(basis, result)
        assert np.allclose(fields, pca.reconstruct(basis, scores), atol=1e-9)

    def test_tau_mismatch_rejected(self):
        data = np.random.default_rng(2).standard_normal((20, 12))
        basis = pca.fit(data, tau=4)
        result = forecast.RolloutResult(
            start_step=0, horizon=2,
            predictions_scaled=np.zeros((2, 3)),
            predictions=np.zeros((2, 3)),
            errors=np.full(2, np.nan),
        )
        with pytest.raises(ShapeMismatch):
            forecast.reconstruct_forecast(basis, result)


class TestTimingBenchmark:
    def test_smoke_and_single_ratio(self):
        scores, scaler, model = tiny_setup()
        config = snapshots.default_config(grid_nx=16, grid_ny=16, n_steps=40,
                                          source_period=4.0)
        timing = forecast.timing_benchmark(model, scaler, config, horizon=20,
                                           ensemble_width=16)
        assert timing.sim_seconds_per_step > 0
        assert timing.forecast_seconds_per_step > 0
        assert timing.ratio_ensemble > timing.ratio_single
