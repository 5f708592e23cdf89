"""Supervised and adversarial training of the LSTM forecaster.

Classic training minimises next-step MSE. Adversarial co-training
alternates, per mini-batch, a discriminator step (real next steps
labelled 1, forecaster outputs labelled 0) with a generator step whose
loss adds ``adv_weight * bce(D(prediction), 1)`` on top of the MSE;
gradients flow through the discriminator without updating it.
"""

import itertools
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    EmptyInput,
    InvalidConfig,
    NonFiniteLoss,
    TooFewSteps,
)
from .neural import (
    ACTIVATIONS,
    backward,
    discriminator_forward,
    forecaster_forward,
    init_discriminator,
    init_forecaster,
)
from .optim import NadamState, bce, bce_grad, clip_global_norm, mse, mse_grad, nadam_step

DISC_MODES = ("step", "conditional")

# desk-scale default search space (dropout/activation/lag axes as used
# for the full-scale experiments, plus a small hidden-size axis)
DEFAULT_GRID = {
    "dropout": [0.3, 0.5],
    "output_activation": ["relu", "sigmoid"],
    "time_lag": [2],
    "hidden_nodes": [32, 64],
    "batch_size": [32],
}

GRID_KEYS = ("dropout", "hidden_nodes", "batch_size", "output_activation",
             "time_lag")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    hidden_nodes: int = 64
    dropout: float = 0.3
    output_activation: str = "sigmoid"
    time_lag: int = 2
    epochs: int = 300
    train_fraction: float = 0.9
    seed: int = 0
    adversarial: bool = False
    adv_weight: float = 1.0
    lr: float = 1e-3
    d_lr: float = 3e-3  # discriminator Nadam rate; D must outpace the generator
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 0.0  # 0 disables the global-norm cap
    disc_mode: str = "conditional"  # D sees window + candidate; "step": candidate only
    d_steps: int = 2  # discriminator updates per generator update

    def validate(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfig("train_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidConfig("batch_size and epochs must be >= 1")
        if self.adv_weight < 0:
            raise InvalidConfig("adv_weight must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfig("dropout must lie in [0, 1)")
        if self.hidden_nodes < 1 or self.time_lag < 1:
            raise InvalidConfig("hidden_nodes and time_lag must be >= 1")
        if self.output_activation not in ACTIVATIONS:
            raise InvalidConfig(
                f"unknown output_activation {self.output_activation!r}"
            )
        if self.disc_mode not in DISC_MODES:
            raise InvalidConfig(f"unknown disc_mode {self.disc_mode!r}")
        if self.d_steps < 1:
            raise InvalidConfig("d_steps must be >= 1")


@dataclass(frozen=True)
class WindowedDataset:
    """Overlapping stride-1 windows of scaled PC rows, split chronologically."""

    inputs: np.ndarray  # (k, N, tau)
    targets: np.ndarray  # (k, tau)
    split: int  # first `split` samples are training

    @property
    def k(self):
        return self.inputs.shape[0]

    @property
    def time_lag(self):
        return self.inputs.shape[1]

    @property
    def tau(self):
        return self.inputs.shape[2]

    @property
    def train_inputs(self):
        return self.inputs[: self.split]

    @property
    def train_targets(self):
        return self.targets[: self.split]

    @property
    def val_inputs(self):
        return self.inputs[self.split:]

    @property
    def val_targets(self):
        return self.targets[self.split:]


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    d_loss: list = None
    g_adv_loss: list = None
    epoch_seconds: list = field(default_factory=list)
    optimizer_steps: int = 0

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("epoch,train_mse,val_mse,d_loss,g_adv_loss\n")
            for epoch in range(len(self.train_loss)):
                d = "" if self.d_loss is None else f"{self.d_loss[epoch]:.6g}"
                g = "" if self.g_adv_loss is None else f"{self.g_adv_loss[epoch]:.6g}"
                fh.write(
                    f"{epoch},{self.train_loss[epoch]:.6g},"
                    f"{self.val_loss[epoch]:.6g},{d},{g}\n"
                )


def make_windows(scores, time_lag, train_fraction=0.9):
    """Build k = n - N windows (stride 1) with a chronological split."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise InvalidConfig("scores must be an n x tau matrix")
    if not 0.0 < train_fraction < 1.0:
        raise InvalidConfig("train_fraction must lie in (0, 1)")
    n = scores.shape[0]
    if n <= time_lag:
        raise TooFewSteps(f"need more than {time_lag} steps, got {n}")
    k = n - time_lag
    inputs = np.stack([scores[i:i + time_lag] for i in range(k)])
    targets = scores[time_lag:].copy()
    return WindowedDataset(inputs=inputs, targets=targets,
                           split=int(k * train_fraction))


def _rng_streams(seed):
    children = np.random.SeedSequence(seed).spawn(4)
    return {
        name: np.random.default_rng(child)
        for name, child in zip(("model", "disc", "shuffle", "dropout"), children)
    }


def _disc_input(windows, candidates, mode):
    step = candidates[:, None, :]
    if mode == "step":
        return step
    return np.concatenate([windows, step], axis=1)


def _forecaster_step(model, opt, windows, targets, rng_dropout, config,
                     disc=None):
    """One optimizer step on the forecaster; returns (mse, adv bce or None)."""
    pred, tape = forecaster_forward(model, windows, training_mode=True,
                                    rng=rng_dropout)
    loss = mse(pred, targets)
    d_pred = mse_grad(pred, targets)
    adv_loss = None
    if disc is not None:
        prob, d_tape = discriminator_forward(
            disc, _disc_input(windows, pred, config.disc_mode)
        )
        adv_loss = bce(prob, 1.0)
        _, d_seq = backward(d_tape, bce_grad(prob, 1.0)[:, None])
        d_pred = d_pred + config.adv_weight * d_seq[:, -1, :]
    if not np.isfinite(loss) or (adv_loss is not None and not np.isfinite(adv_loss)):
        raise NonFiniteLoss("forecaster loss diverged")
    grads, _ = backward(tape, d_pred)
    clip_global_norm(grads, config.clip_norm)
    nadam_step(opt, model.params(), grads)
    return loss, adv_loss


def _discriminator_step(disc, opt, model, windows, targets, config):
    """One optimizer step on the discriminator; generator outputs are
    treated as constants."""
    fake, _ = forecaster_forward(model, windows, training_mode=False)
    p_real, tape_real = discriminator_forward(
        disc, _disc_input(windows, targets, config.disc_mode)
    )
    p_fake, tape_fake = discriminator_forward(
        disc, _disc_input(windows, fake, config.disc_mode)
    )
    loss = bce(p_real, 1.0) + bce(p_fake, 0.0)
    if not np.isfinite(loss):
        raise NonFiniteLoss("discriminator loss diverged")
    g_real, _ = backward(tape_real, bce_grad(p_real, 1.0)[:, None])
    g_fake, _ = backward(tape_fake, bce_grad(p_fake, 0.0)[:, None])
    grads = {key: g_real[key] + g_fake[key] for key in g_real}
    clip_global_norm(grads, config.clip_norm)
    nadam_step(opt, disc.params(), grads)
    return loss


def _validation_loss(model, dataset):
    if dataset.val_inputs.shape[0] == 0:
        return float("nan")
    pred, _ = forecaster_forward(model, dataset.val_inputs, training_mode=False)
    return mse(pred, dataset.val_targets)


def _train(dataset, config):
    config.validate()
    streams = _rng_streams(config.seed)
    tau = dataset.tau
    if dataset.time_lag != config.time_lag:
        raise InvalidConfig(
            f"dataset windows have lag {dataset.time_lag}, "
            f"config expects {config.time_lag}"
        )
    k_train = dataset.split
    if k_train < 1:
        raise TooFewSteps("no training samples after the chronological split")
    model = init_forecaster(
        tau, config.hidden_nodes, tau, config.output_activation,
        config.dropout, config.time_lag, streams["model"],
    )
    opt_g = NadamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                       eps=config.eps)
    disc = opt_d = None
    if config.adversarial:
        disc = init_discriminator(tau, config.hidden_nodes, streams["disc"])
        opt_d = NadamState(lr=config.d_lr, beta1=config.beta1,
                           beta2=config.beta2, eps=config.eps)
    report = TrainReport(
        d_loss=[] if config.adversarial else None,
        g_adv_loss=[] if config.adversarial else None,
    )
    for _ in range(config.epochs):
        tic = time.perf_counter()
        perm = streams["shuffle"].permutation(k_train)
        sq_sum = 0.0
        d_sum = 0.0
        adv_sum = 0.0
        n_batches = 0
        for lo in range(0, k_train, config.batch_size):
            idx = perm[lo:lo + config.batch_size]
            windows = dataset.inputs[idx]
            targets = dataset.targets[idx]
            if config.adversarial:
                for _ in range(config.d_steps):
                    d_sum += _discriminator_step(disc, opt_d, model, windows,
                                                 targets, config)
            loss, adv_loss = _forecaster_step(
                model, opt_g, windows, targets, streams["dropout"], config,
                disc=disc if config.adversarial else None,
            )
            sq_sum += loss * len(idx)
            if adv_loss is not None:
                adv_sum += adv_loss
            n_batches += 1
        report.train_loss.append(sq_sum / k_train)
        report.val_loss.append(_validation_loss(model, dataset))
        if config.adversarial:
            report.d_loss.append(d_sum / (n_batches * config.d_steps))
            report.g_adv_loss.append(adv_sum / n_batches)
        report.epoch_seconds.append(time.perf_counter() - tic)
    report.optimizer_steps = opt_g.t
    return model, disc, report


def train_classic(dataset, config):
    """Mini-batch Nadam on next-step MSE; returns (model, report)."""
    if config.adversarial:
        raise InvalidConfig("train_classic requires config.adversarial=False")
    model, _, report = _train(dataset, config)
    return model, report


def train_adversarial(dataset, config):
    """Adversarial co-training; returns (model, discriminator, report)."""
    if not config.adversarial:
        raise InvalidConfig("train_adversarial requires config.adversarial=True")
    model, disc, report = _train(dataset, config)
    return model, disc, report


@dataclass
class GridPoint:
    config: TrainConfig
    val_mse: float
    failed: bool = False


def grid_search(scores, grid, base_config, search_epochs=None):
    """Train one classic model per cartesian-product point; pick the best.

    ``scores`` is the scaled n x tau score matrix (windows are rebuilt per
    point so the lag axis can vary). Selection is minimum final validation
    MSE; ties break to fewer hidden nodes, then lower dropout, then
    declaration order. Diverged points are marked failed, not fatal.
    """
    if not grid or any(len(values) == 0 for values in grid.values()):
        raise EmptyInput("grid must list at least one candidate per axis")
    unknown = set(grid) - set(GRID_KEYS)
    if unknown:
        raise InvalidConfig(f"unknown grid axes: {sorted(unknown)}")
    epochs = search_epochs if search_epochs is not None else base_config.epochs
    axes = list(grid.items())
    results = []
    for values in itertools.product(*(vals for _, vals in axes)):
        overrides = dict(zip((name for name, _ in axes), values))
        config = replace(base_config, adversarial=False, epochs=epochs,
                         **overrides)
        dataset = make_windows(scores, config.time_lag, config.train_fraction)
        try:
            _, report = train_classic(dataset, config)
            results.append(GridPoint(config=config, val_mse=report.val_loss[-1]))
        except NonFiniteLoss:
            results.append(GridPoint(config=config, val_mse=float("inf"),
                                     failed=True))
    viable = [(i, point) for i, point in enumerate(results) if not point.failed]
    if not viable:
        raise NonFiniteLoss("every grid point diverged")
    _, best = min(
        viable,
        key=lambda item: (
            item[1].val_mse,
            item[1].config.hidden_nodes,
            item[1].config.dropout,
            item[0],
        ),
    )
    return best.config, results
