"""From-scratch differentiable primitives: LSTM, dense head, dropout, BPTT.

Everything is float64 numpy. Forward passes record a Tape of
intermediates; ``backward`` replays it in reverse for exact gradients.
Batched inputs use the leading axis; single sequences are promoted
internally and squeezed on the way out.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import romf
from .errors import (
    InvalidConfig,
    NonFiniteInput,
    ShapeMismatch,
    TapeMismatch,
)

GATES = ("i", "f", "o", "g")


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(x, 0.0)


ACTIVATIONS = {
    "relu": relu,
    "sigmoid": sigmoid,
    "linear": lambda x: x,
}


@dataclass
class LstmParams:
    """Gate weights (hidden x input), recurrent weights, biases."""

    w_i: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    w_g: np.ndarray
    u_i: np.ndarray
    u_f: np.ndarray
    u_o: np.ndarray
    u_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray

    @property
    def input_dim(self):
        return self.w_i.shape[1]

    @property
    def hidden_dim(self):
        return self.w_i.shape[0]

    def params(self, prefix=""):
        return {
            prefix + name: getattr(self, name)
            for name in (
                "w_i", "w_f", "w_o", "w_g",
                "u_i", "u_f", "u_o", "u_g",
                "b_i", "b_f", "b_o", "b_g",
            )
        }


@dataclass
class DenseParams:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def params(self, prefix=""):
        return {prefix + "weight": self.weight, prefix + "bias": self.bias}


@dataclass
class LstmForecaster:
    """Single-layer LSTM plus dense output head predicting the next step."""

    lstm: LstmParams
    head: DenseParams
    output_activation: str = "sigmoid"
    dropout_rate: float = 0.0
    time_lag: int = 2

    def __post_init__(self):
        if self.output_activation not in ACTIVATIONS:
            raise InvalidConfig(
                f"unknown output activation {self.output_activation!r}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig("dropout_rate must lie in [0, 1)")
        if self.time_lag < 1:
            raise InvalidConfig("time_lag must be >= 1")

    @property
    def output_dim(self):
        return self.head.weight.shape[0]

    def params(self):
        out = self.lstm.params("lstm.")
        out.update(self.head.params("head."))
        return out


@dataclass
class Discriminator:
    """Mirrored LSTM scoring a PC sequence as real (1) or predicted (0)."""

    lstm: LstmParams
    head: DenseParams  # output dim 1, sigmoid fixed

    def __post_init__(self):
        if self.head.weight.shape[0] != 1:
            raise InvalidConfig("discriminator head must output a scalar")

    def params(self):
        out = self.lstm.params("lstm.")
        out.update(self.head.params("head."))
        return out


class Tape:
    """Recorded forward intermediates sufficient for exact BPTT."""

    def __init__(self, kind, **fields):
        self.kind = kind
        self.__dict__.update(fields)


def init_lstm_params(input_dim, hidden_dim, rng):
    """uniform(-s, s) matrices with s = 1/sqrt(hidden), zero biases,
    forget-gate bias +1."""
    s = 1.0 / np.sqrt(hidden_dim)
    def mat(rows, cols):
        return rng.uniform(-s, s, size=(rows, cols))

    params = LstmParams(
        w_i=mat(hidden_dim, input_dim),
        w_f=mat(hidden_dim, input_dim),
        w_o=mat(hidden_dim, input_dim),
        w_g=mat(hidden_dim, input_dim),
        u_i=mat(hidden_dim, hidden_dim),
        u_f=mat(hidden_dim, hidden_dim),
        u_o=mat(hidden_dim, hidden_dim),
        u_g=mat(hidden_dim, hidden_dim),
        b_i=np.zeros(hidden_dim),
        b_f=np.ones(hidden_dim),
        b_o=np.zeros(hidden_dim),
        b_g=np.zeros(hidden_dim),
    )
    return params


def init_forecaster(input_dim, hidden_dim, output_dim, output_activation,
                    dropout_rate, time_lag, rng):
    rng = np.random.default_rng(rng)
    lstm = init_lstm_params(input_dim, hidden_dim, rng)
    s = 1.0 / np.sqrt(hidden_dim)
    head = DenseParams(
        weight=rng.uniform(-s, s, size=(output_dim, hidden_dim)),
        bias=np.zeros(output_dim),
    )
    return LstmForecaster(
        lstm=lstm,
        head=head,
        output_activation=output_activation,
        dropout_rate=dropout_rate,
        time_lag=time_lag,
    )


def init_discriminator(input_dim, hidden_dim, rng):
    rng = np.random.default_rng(rng)
    lstm = init_lstm_params(input_dim, hidden_dim, rng)
    s = 1.0 / np.sqrt(hidden_dim)
    head = DenseParams(
        weight=rng.uniform(-s, s, size=(1, hidden_dim)),
        bias=np.zeros(1),
    )
    return Discriminator(lstm=lstm, head=head)


def _promote_sequence(sequence, input_dim):
    seq = np.asarray(sequence, dtype=np.float64)
    squeezed = seq.ndim == 2
    if squeezed:
        seq = seq[None]
    if seq.ndim != 3 or seq.shape[2] != input_dim:
        raise ShapeMismatch(
            f"sequence shape {np.shape(sequence)} incompatible with "
            f"input_dim {input_dim}"
        )
    if seq.shape[1] < 1:
        raise ShapeMismatch("sequence must have at least one step")
    if not np.all(np.isfinite(seq)):
        raise NonFiniteInput("sequence contains NaN/Inf")
    return seq, squeezed


def lstm_forward(params, sequence, h0=None, c0=None):
    """Run the standard LSTM recurrence over a (B,)T x input_dim sequence.

    Returns (hidden states over time, final hidden, tape).
    """
    seq, squeezed = _promote_sequence(sequence, params.input_dim)
    batch, steps, _ = seq.shape
    hidden = params.hidden_dim
    h = np.zeros((batch, hidden)) if h0 is None else np.array(h0, dtype=np.float64)
    c = np.zeros((batch, hidden)) if c0 is None else np.array(c0, dtype=np.float64)
    if h.shape != (batch, hidden) or c.shape != (batch, hidden):
        raise ShapeMismatch("initial state shape mismatch")

    hs = np.empty((batch, steps, hidden))
    gates = []
    for t in range(steps):
        x = seq[:, t]
        a_i = x @ params.w_i.T + h @ params.u_i.T + params.b_i
        a_f = x @ params.w_f.T + h @ params.u_f.T + params.b_f
        a_o = x @ params.w_o.T + h @ params.u_o.T + params.b_o
        a_g = x @ params.w_g.T + h @ params.u_g.T + params.b_g
        gi, gf, go = sigmoid(a_i), sigmoid(a_f), sigmoid(a_o)
        gg = np.tanh(a_g)
        c_new = gf * c + gi * gg
        tc = np.tanh(c_new)
        h_new = go * tc
        gates.append({
            "x": x, "h_prev": h, "c_prev": c,
            "i": gi, "f": gf, "o": go, "g": gg, "tc": tc,
        })
        h, c = h_new, c_new
        hs[:, t] = h
    tape = Tape(
        "lstm",
        params=params,
        steps=gates,
        hs=hs,
        h_final=h,
        squeezed=squeezed,
        shape=seq.shape,
    )
    if squeezed:
        return hs[0], h[0], tape
    return hs, h, tape


def _lstm_backward(tape, d_h_final=None, d_hs=None):
    """Exact BPTT. Returns (plain-key grads, d_sequence)."""
    params = tape.params
    batch, steps, _ = tape.shape
    hidden = params.hidden_dim
    grads = {key: np.zeros_like(val) for key, val in params.params().items()}
    d_seq = np.zeros(tape.shape)
    dh = np.zeros((batch, hidden)) if d_h_final is None else d_h_final.copy()
    dc = np.zeros((batch, hidden))
    for t in reversed(range(steps)):
        if d_hs is not None:
            dh = dh + d_hs[:, t]
        rec = tape.steps[t]
        do = dh * rec["tc"]
        dc = dc + dh * rec["o"] * (1.0 - rec["tc"] ** 2)
        di = dc * rec["g"]
        dg = dc * rec["i"]
        df = dc * rec["c_prev"]
        dc_prev = dc * rec["f"]
        da_i = di * rec["i"] * (1.0 - rec["i"])
        da_f = df * rec["f"] * (1.0 - rec["f"])
        da_o = do * rec["o"] * (1.0 - rec["o"])
        da_g = dg * (1.0 - rec["g"] ** 2)
        x, h_prev = rec["x"], rec["h_prev"]
        for name, da in (("i", da_i), ("f", da_f), ("o", da_o), ("g", da_g)):
            grads["w_" + name] += da.T @ x
            grads["u_" + name] += da.T @ h_prev
            grads["b_" + name] += da.sum(axis=0)
        d_seq[:, t] = (
            da_i @ params.w_i + da_f @ params.w_f
            + da_o @ params.w_o + da_g @ params.w_g
        )
        dh = (
            da_i @ params.u_i + da_f @ params.u_f
            + da_o @ params.u_o + da_g @ params.u_g
        )
        dc = dc_prev
    return grads, d_seq


def forecaster_forward(model, window, training_mode=False, rng=None):
    """Predict the next PC vector from an N x tau window.

    Inverted dropout is applied to the final hidden state only when
    ``training_mode`` is set and the rate is nonzero; ``rng`` then supplies
    the mask.
    """
    seq, squeezed = _promote_sequence(window, model.lstm.input_dim)
    if seq.shape[1] != model.time_lag:
        raise ShapeMismatch(
            f"window has {seq.shape[1]} rows, model expects {model.time_lag}"
        )
    _, h_final, lstm_tape = lstm_forward(model.lstm, seq)
    mask = None
    h_drop = h_final
    if training_mode and model.dropout_rate > 0.0:
        if rng is None:
            raise InvalidConfig("dropout in training mode needs an rng")
        keep = 1.0 - model.dropout_rate
        mask = (rng.random(h_final.shape) >= model.dropout_rate) / keep
        h_drop = h_final * mask
    y_lin = h_drop @ model.head.weight.T + model.head.bias
    pred = ACTIVATIONS[model.output_activation](y_lin)
    tape = Tape(
        "head",
        model=model,
        lstm_tape=lstm_tape,
        h_final=h_final,
        mask=mask,
        h_drop=h_drop,
        y_lin=y_lin,
        pred=pred,
        activation=model.output_activation,
        squeezed=squeezed,
    )
    if squeezed:
        return pred[0], tape
    return pred, tape


def forecaster_step(model, windows):
    """Tape-free inference: predictions for a (B,) N x tau window batch.

    Performs the same operations in the same order as
    ``forecaster_forward`` in inference mode, so outputs are bit-identical;
    it skips the tape, input validation and dropout plumbing, which is what
    makes autoregressive rollouts cheap.
    """
    squeezed = windows.ndim == 2
    seq = windows[None] if squeezed else windows
    batch = seq.shape[0]
    params = model.lstm
    h = np.zeros((batch, params.hidden_dim))
    c = np.zeros((batch, params.hidden_dim))
    for t in range(seq.shape[1]):
        x = seq[:, t]
        gi = sigmoid(x @ params.w_i.T + h @ params.u_i.T + params.b_i)
        gf = sigmoid(x @ params.w_f.T + h @ params.u_f.T + params.b_f)
        go = sigmoid(x @ params.w_o.T + h @ params.u_o.T + params.b_o)
        gg = np.tanh(x @ params.w_g.T + h @ params.u_g.T + params.b_g)
        c = gf * c + gi * gg
        h = go * np.tanh(c)
    pred = ACTIVATIONS[model.output_activation](
        h @ model.head.weight.T + model.head.bias
    )
    return pred[0] if squeezed else pred


def discriminator_forward(disc, sequence):
    """Score sequences; returns probabilities in (0, 1) plus the tape."""
    seq, squeezed = _promote_sequence(sequence, disc.lstm.input_dim)
    _, h_final, lstm_tape = lstm_forward(disc.lstm, seq)
    y_lin = h_final @ disc.head.weight.T + disc.head.bias
    prob = sigmoid(y_lin)
    tape = Tape(
        "head",
        model=disc,
        lstm_tape=lstm_tape,
        h_final=h_final,
        mask=None,
        h_drop=h_final,
        y_lin=y_lin,
        pred=prob,
        activation="sigmoid",
        squeezed=squeezed,
    )
    if squeezed:
        return prob[0, 0], tape
    return prob[:, 0], tape


def _activation_deriv(tape):
    if tape.activation == "relu":
        return (tape.y_lin > 0).astype(np.float64)
    if tape.activation == "sigmoid":
        return tape.pred * (1.0 - tape.pred)
    return np.ones_like(tape.y_lin)


def backward(tape, upstream):
    """Exact gradients of the recorded computation.

    For a model tape, ``upstream`` is dL/dprediction; returns
    (param grads keyed like ``model.params()``, input grads). For a raw
    LSTM tape, ``upstream`` is dL/d(final hidden) or dL/d(all hiddens).
    """
    if tape.kind == "lstm":
        batch, steps, _ = tape.shape
        hidden = tape.params.hidden_dim
        up = np.asarray(upstream, dtype=np.float64)
        if tape.squeezed:
            up = up[None] if up.ndim in (1, 2) else up
        if up.shape == (batch, hidden):
            grads, d_seq = _lstm_backward(tape, d_h_final=up)
        elif up.shape == (batch, steps, hidden):
            grads, d_seq = _lstm_backward(tape, d_hs=up)
        else:
            raise TapeMismatch(
                f"upstream shape {np.shape(upstream)} matches neither the "
                "final hidden nor the full hidden-state stack"
            )
        return grads, d_seq[0] if tape.squeezed else d_seq

    if tape.kind != "head":
        raise TapeMismatch(f"unknown tape kind {tape.kind!r}")
    model = tape.model
    d_pred = np.asarray(upstream, dtype=np.float64)
    if tape.squeezed:
        d_pred = np.atleast_1d(d_pred)
        d_pred = d_pred.reshape(tape.pred[0].shape)[None]
    if d_pred.shape != tape.pred.shape:
        raise TapeMismatch(
            f"upstream shape {np.shape(upstream)} != prediction shape "
            f"{tape.pred.shape}"
        )
    d_ylin = d_pred * _activation_deriv(tape)
    grads = {
        "head.weight": d_ylin.T @ tape.h_drop,
        "head.bias": d_ylin.sum(axis=0),
    }
    d_h = d_ylin @ model.head.weight
    if tape.mask is not None:
        d_h = d_h * tape.mask
    lstm_grads, d_seq = _lstm_backward(tape.lstm_tape, d_h_final=d_h)
    grads.update({"lstm." + key: val for key, val in lstm_grads.items()})
    return grads, d_seq[0] if tape.squeezed else d_seq


def replay(tape):
    """Recompute the recorded forward output from the tape's inputs."""
    if tape.kind == "lstm":
        seq = np.stack([rec["x"] for rec in tape.steps], axis=1)
        hs, h_final, _ = lstm_forward(tape.params, seq)
        return hs[:, -1] if not tape.squeezed else h_final
    lstm_tape = tape.lstm_tape
    seq = np.stack([rec["x"] for rec in lstm_tape.steps], axis=1)
    _, h_final, _ = lstm_forward(tape.model.lstm, seq)
    h_drop = h_final if tape.mask is None else h_final * tape.mask
    y_lin = h_drop @ tape.model.head.weight.T + tape.model.head.bias
    pred = ACTIVATIONS[tape.activation](y_lin)
    return pred[0] if tape.squeezed else pred


def grad_check(params, loss_fn, grads, n_samples=100, epsilon=1e-5, rng=None):
    """Worst relative error between analytic grads and central differences.

    ``params`` is a dict of live arrays that ``loss_fn()`` closes over;
    entries are perturbed in place and restored. The loss must be
    deterministic (dropout disabled or its mask frozen).
    """
    rng = np.random.default_rng(rng)
    coords = []
    for key in sorted(params):
        for idx in range(params[key].size):
            coords.append((key, idx))
    if n_samples < len(coords):
        chosen = [coords[k] for k in rng.choice(len(coords), size=n_samples,
                                                replace=False)]
    else:
        chosen = coords
    worst = 0.0
    for key, idx in chosen:
        arr = params[key]
        orig = arr.flat[idx]
        arr.flat[idx] = orig + epsilon
        up = loss_fn()
        arr.flat[idx] = orig - epsilon
        down = loss_fn()
        arr.flat[idx] = orig
        fd = (up - down) / (2.0 * epsilon)
        analytic = grads[key].flat[idx]
        rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8)
        worst = max(worst, rel)
    return worst


def _meta(model, kind, seed):
    meta = {
        "kind": kind,
        "input_dim": model.lstm.input_dim,
        "hidden_dim": model.lstm.hidden_dim,
        "output_dim": model.head.weight.shape[0],
        "seed": seed,
    }
    if kind == "forecaster":
        meta.update(
            output_activation=model.output_activation,
            dropout_rate=model.dropout_rate,
            time_lag=model.time_lag,
        )
    return meta


def save_model(path, model, seed=None, extra_arrays=None):
    """Persist weights in a ROMF container plus a JSON sidecar manifest."""
    kind = "forecaster" if isinstance(model, LstmForecaster) else "discriminator"
    arrays = dict(model.params())
    if extra_arrays:
        arrays.update(extra_arrays)
    romf.write_arrays(path, arrays)
    with open(str(path) + ".json", "w") as fh:
        json.dump(_meta(model, kind, seed), fh, indent=2)
        fh.write("\n")


def load_model(path):
    """Load a model saved by ``save_model``; returns (model, meta, extras)."""
    arrays = romf.read_arrays(path)
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    lstm_keys = {key for key in arrays if key.startswith("lstm.")}
    lstm = LstmParams(**{key[5:]: arrays[key] for key in lstm_keys})
    head = DenseParams(weight=arrays["head.weight"], bias=arrays["head.bias"])
    extras = {
        key: val
        for key, val in arrays.items()
        if not key.startswith(("lstm.", "head."))
    }
    if meta["kind"] == "forecaster":
        model = LstmForecaster(
            lstm=lstm,
            head=head,
            output_activation=meta["output_activation"],
            dropout_rate=meta["dropout_rate"],
            time_lag=meta["time_lag"],
        )
    else:
        model = Discriminator(lstm=lstm, head=head)
    return model, meta, extras
