import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from romcast import neural, optim, training
from romcast.errors import (
    EmptyInput,
    InvalidConfig,
    NonFiniteLoss,
    TooFewSteps,
)


def wave_scores(n=140, tau=3, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    data = 0.5 + 0.4 * np.sin(2 * np.pi * t[:, None] / (11.0 + 4 * np.arange(tau)))
    return data + 0.01 * rng.standard_normal(data.shape)


def quick_config(**overrides):
    base = dict(batch_size=16, hidden_nodes=8, dropout=0.0,
                output_activation="sigmoid", time_lag=2, epochs=5, seed=0)
    base.update(overrides)
    return training.TrainConfig(**base)


class TestMakeWindows:
    def test_window_arithmetic(self):
        scores = np.arange(8.0).reshape(4, 2)
        ds = training.make_windows(scores, 2, 0.9)
        assert ds.k == 2
        assert np.array_equal(ds.inputs[0], scores[0:2])
        assert np.array_equal(ds.targets[0], scores[2])
        assert np.array_equal(ds.inputs[1], scores[1:3])
        assert np.array_equal(ds.targets[1], scores[3])

    def test_single_sample_boundary(self):
        ds = training.make_windows(np.zeros((3, 2)), 2, 0.5)
        assert ds.k == 1

    def test_paper_scale_split(self):
        ds = training.make_windows(np.zeros((1500, 2)), 2, 0.9)
        assert ds.k == 1498
        assert ds.split == 1348
        assert ds.k - ds.split == 150

    def test_too_few_steps(self):
        with pytest.raises(TooFewSteps):
            training.make_windows(np.zeros((2, 3)), 2, 0.9)

    def test_chronological_split(self):
        ds = training.make_windows(wave_scores(), 2, 0.8)
        assert ds.train_inputs.shape[0] == ds.split
        assert np.array_equal(ds.inputs[ds.split], ds.val_inputs[0])

    @settings(deadline=None, max_examples=40)
    @given(st.integers(4, 60), st.integers(1, 5))
    def test_target_is_next_windows_last_row(self, n, lag):
        if n <= lag:
            return
        scores = np.arange(float(n * 2)).reshape(n, 2)
        ds = training.make_windows(scores, lag, 0.7)
        for i in range(ds.k - 1):
            assert np.array_equal(ds.targets[i], ds.inputs[i + 1][-1])


class TestTrainClassic:
    def test_constant_sequence_reaches_tiny_loss(self):
        scores = np.full((40, 2), 0.5)
        ds = training.make_windows(scores, 2, 0.9)
        _, report = training.train_classic(ds, quick_config(epochs=200))
        assert report.train_loss[-1] < 1e-4

    def test_optimizer_step_bookkeeping(self):
        ds = training.make_windows(wave_scores(), 2, 0.9)
        config = quick_config(epochs=1, batch_size=16)
        _, report = training.train_classic(ds, config)
        assert report.optimizer_steps == math.ceil(ds.split / 16)

    def test_bit_identical_given_seed(self):
        ds = training.make_windows(wave_scores(), 2, 0.9)
        m1, _ = training.train_classic(ds, quick_config(seed=5, dropout=0.3))
        m2, _ = training.train_classic(ds, quick_config(seed=5, dropout=0.3))
        for key, val in m1.params().items():
            assert val.tobytes() == m2.params()[key].tobytes()

    def test_report_lengths_and_csv(self, tmp_path):
        ds = training.make_windows(wave_scores(), 2, 0.9)
        _, report = training.train_classic(ds, quick_config(epochs=4))
        assert len(report.train_loss) == 4
        assert len(report.val_loss) == 4
        assert len(report.epoch_seconds) == 4
        path = tmp_path / "report.csv"
        report.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,train_mse,val_mse,d_loss,g_adv_loss"
        assert len(lines) == 5

    def test_adversarial_flag_rejected(self):
        ds = training.make_windows(wave_scores(), 2, 0.9)
        with pytest.raises(InvalidConfig):
            training.train_classic(ds, quick_config(adversarial=True))

    def test_diverged_training_raises(self):
        # bounded LSTM activations survive huge rates; the head does not
        ds = training.make_windows(wave_scores(), 2, 0.9)
        with pytest.raises(NonFiniteLoss):
            training.train_classic(
                ds, quick_config(output_activation="linear", lr=1e200,
                                 epochs=40)
            )


class TestTrainAdversarial:
    def test_untrained_discriminator_loss_is_two_ln_two(self):
        # zero head weights force D(x) = 0.5 exactly
        rng = np.random.default_rng(0)
        disc = neural.init_discriminator(3, 8, rng)
        disc.head.weight[:] = 0.0
        disc.head.bias[:] = 0.0
        seq = rng.random((10, 1, 3))
        prob, _ = neural.discriminator_forward(disc, seq)
        loss = optim.bce(prob, 1.0) + optim.bce(prob, 0.0)
        assert loss == pytest.approx(2 * math.log(2), rel=1e-12)

    def test_lambda_zero_generator_step_equals_classic_step(self):
        ds = training.make_windows(wave_scores(), 2, 0.9)
        config = quick_config(epochs=1, batch_size=ds.split, dropout=0.3)
        classic, _ = training.train_classic(ds, config)
        adv_cfg = quick_config(epochs=1, batch_size=ds.split, dropout=0.3,
                               adversarial=True, adv_weight=0.0)
        adv, _, _ = training.train_adversarial(ds, adv_cfg)
        for key, val in classic.params().items():
            assert val.tobytes() == adv.params()[key].tobytes(), key

    def test_phase_isolation(self):
        ds = training.make_windows(wave_scores(), 2, 0.9)
        rng_streams = training._rng_streams(3)
        model = neural.init_forecaster(3, 8, 3, "sigmoid", 0.0, 2,
                                       rng_streams["model"])
        disc = neural.init_discriminator(3, 8, rng_streams["disc"])
        opt_g = optim.NadamState(lr=1e-3)
        opt_d = optim.NadamState(lr=1e-3)
        config = quick_config(adversarial=True)
        windows, targets = ds.inputs[:16], ds.targets[:16]

        g_before = {k: v.copy() for k, v in model.params().items()}
        training._discriminator_step(disc, opt_d, model, windows, targets,
                                     config)
        for key, val in model.params().items():
            assert val.tobytes() == g_before[key].tobytes()

        d_before = {k: v.copy() for k, v in disc.params().items()}
        training._forecaster_step(model, opt_g, windows, targets,
                                  rng_streams["dropout"], config, disc=disc)
        for key, val in disc.params().items():
            assert val.tobytes() == d_before[key].tobytes()

    def test_adversarial_losses_finite_and_discriminator_useful(self):
        scores = wave_scores(n=160)
        ds = training.make_windows(scores, 2, 0.9)
        config = quick_config(epochs=60, adversarial=True, hidden_nodes=16,
                              batch_size=16)
        model, disc, report = training.train_adversarial(ds, config)
        assert all(np.isfinite(report.d_loss))
        assert all(np.isfinite(report.g_adv_loss))
        assert all(np.isfinite(report.train_loss))
        # held-out accuracy of D on real vs predicted pairs
        pred, _ = neural.forecaster_forward(model, ds.val_inputs)
        seq_real = training._disc_input(ds.val_inputs, ds.val_targets,
                                        config.disc_mode)
        seq_fake = training._disc_input(ds.val_inputs, pred, config.disc_mode)
        p_real, _ = neural.discriminator_forward(disc, seq_real)
        p_fake, _ = neural.discriminator_forward(disc, seq_fake)
        accuracy = 0.5 * ((p_real > 0.5).mean() + (p_fake < 0.5).mean())
        assert 0.45 < accuracy <= 1.0

    def test_classic_flag_rejected(self):
        ds = training.make_windows(wave_scores(), 2, 0.9)
        with pytest.raises(InvalidConfig):
            training.train_adversarial(ds, quick_config())


class TestGridSearch:
    def test_single_point_returns_it(self):
        scores = wave_scores()
        base = quick_config(epochs=3)
        best, results = training.grid_search(scores, {"dropout": [0.2]}, base)
        assert len(results) == 1
        assert best.dropout == 0.2

    def test_product_count(self):
        scores = wave_scores()
        base = quick_config(epochs=2)
        grid = {"dropout": [0.0, 0.3], "hidden_nodes": [4, 8],
                "batch_size": [16]}
        best, results = training.grid_search(scores, grid, base)
        assert len(results) == 4
        assert {point.config.hidden_nodes for point in results} == {4, 8}

    def test_default_grid_contains_reference_axes(self):
        assert training.DEFAULT_GRID["dropout"] == [0.3, 0.5]
        assert training.DEFAULT_GRID["output_activation"] == ["relu", "sigmoid"]
        assert training.DEFAULT_GRID["time_lag"] == [2]

    def test_selection_prefers_lower_val_then_smaller_model(self):
        scores = wave_scores()
        base = quick_config(epochs=3)
        grid = {"hidden_nodes": [8, 4]}
        best, results = training.grid_search(scores, grid, base)
        viable = [p for p in results if not p.failed]
        min_val = min(p.val_mse for p in viable)
        assert best.hidden_nodes == min(
            p.config.hidden_nodes for p in viable if p.val_mse == min_val
        )

    def test_failed_point_skipped_not_fatal(self, monkeypatch):
        scores = wave_scores()
        base = quick_config(epochs=2)
        real_train = training.train_classic

        def flaky(dataset, config):
            if config.dropout == 0.3:
                raise NonFiniteLoss("boom")
            return real_train(dataset, config)

        monkeypatch.setattr(training, "train_classic", flaky)
        best, results = training.grid_search(scores, {"dropout": [0.3, 0.0]},
                                             base)
        assert results[0].failed and not results[1].failed
        assert best.dropout == 0.0

    def test_empty_grid_rejected(self):
        with pytest.raises(EmptyInput):
            training.grid_search(wave_scores(), {}, quick_config())

    def test_unknown_axis_rejected(self):
        with pytest.raises(InvalidConfig):
            training.grid_search(wave_scores(), {"lr": [0.1]}, quick_config())


class TestConfigValidation:
    def test_bad_fraction(self):
        with pytest.raises(InvalidConfig):
            quick_config(train_fraction=1.0).validate()

    def test_bad_adv_weight(self):
        with pytest.raises(InvalidConfig):
            quick_config(adv_weight=-0.5).validate()

    def test_bad_disc_mode(self):
        with pytest.raises(InvalidConfig):
            quick_config(disc_mode="nope").validate()
