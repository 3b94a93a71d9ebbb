"""Smoother-supervised training of a causal recurrent filter.

The trainable filter is a stack of gated recurrent (LSTM) layers followed by a
linear readout. For layer input x_t and previous (h_{t-1}, c_{t-1}) each layer
computes, with weights packed in gate order (i, f, g, o):

    a = Wx x_t + Wh h_{t-1} + bias
    i = sigmoid(a_i)   f = sigmoid(a_f)   g = tanh(a_g)   o = sigmoid(a_o)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

Predictions are strictly causal one-step-ahead: output index k is read out
from the state after consuming inputs 0..k-1, and output 0 comes from the
zero-initialized state. Training regresses predictions onto the model-based
smoother's estimates of the same trajectories; true states are carried in the
dataset for evaluation only and never touch the loss. Gradients are exact
full-unroll reverse-mode (checked against finite differences in the tests) and
the optimizer is Adam with bias-corrected moments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, Divergence, LengthMismatch
from .estimators import SteadyStateKalman, run_estimators_batch
from .model import Injector, LinearSystem, simulate_batch
from .rngstream import generator

__all__ = [
    "RecurrentFilterParams",
    "TrainingConfig",
    "Dataset",
    "TrainResult",
    "EvalResult",
    "build_dataset",
    "forward",
    "loss",
    "backward",
    "train",
    "evaluate",
    "params_to_json",
    "params_from_json",
]

PARAMS_FORMAT = "smoothbound-recurrent-filter"
PARAMS_VERSION = 1


@dataclass
class RecurrentFilterParams:
    """Weights of the recurrent causal filter, as named float64 arrays.

    Per layer l: ``Wx{l}`` (4h x in), ``Wh{l}`` (4h x h), ``b{l}`` (4h,);
    readout ``Wo`` (out x h) and ``bo`` (out,).
    """

    input_dim: int
    hidden_size: int
    output_dim: int
    num_layers: int
    weights: dict[str, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def initialize(
        input_dim: int,
        hidden_size: int,
        output_dim: int,
        num_layers: int,
        rng: np.random.Generator,
    ) -> "RecurrentFilterParams":
        """Uniform(-k, k) init with k = 1/sqrt(hidden_size), the stock recipe."""
        k = 1.0 / np.sqrt(hidden_size)
        weights: dict[str, np.ndarray] = {}
        for layer in range(num_layers):
            d_in = input_dim if layer == 0 else hidden_size
            weights[f"Wx{layer}"] = rng.uniform(-k, k, (4 * hidden_size, d_in))
            weights[f"Wh{layer}"] = rng.uniform(-k, k, (4 * hidden_size, hidden_size))
            weights[f"b{layer}"] = rng.uniform(-k, k, 4 * hidden_size)
        weights["Wo"] = rng.uniform(-k, k, (output_dim, hidden_size))
        weights["bo"] = rng.uniform(-k, k, output_dim)
        return RecurrentFilterParams(
            input_dim=input_dim,
            hidden_size=hidden_size,
            output_dim=output_dim,
            num_layers=num_layers,
            weights=weights,
        )

    def copy(self) -> "RecurrentFilterParams":
        return RecurrentFilterParams(
            input_dim=self.input_dim,
            hidden_size=self.hidden_size,
            output_dim=self.output_dim,
            num_layers=self.num_layers,
            weights={k: v.copy() for k, v in self.weights.items()},
        )


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 320
    learning_rate: float = 1e-3
    num_epochs: int = 75
    seed: int = 0
    clip_norm: float = 10.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    divergence_factor: float = 1e3
    hidden_size: int = 10
    num_layers: int = 2


@dataclass(frozen=True)
class Dataset:
    """Corrupted measurements paired with smoother targets; states for eval only."""

    inputs: np.ndarray   # (M, N, m) corrupted measurements
    targets: np.ndarray  # (M, N, n) smoother estimates of the same runs
    states: np.ndarray   # (M, N, n) true states, never used in the loss

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def horizon(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class TrainResult:
    params: RecurrentFilterParams
    curve: list[dict]  # per-epoch rows: epoch, train_loss, eval_mse_states, eval_mse_targets


@dataclass(frozen=True)
class EvalResult:
    mse_states: float
    se_states: float
    mse_targets: float
    se_targets: float
    num_sequences: int


def build_dataset(
    sys: LinearSystem,
    kal: SteadyStateKalman,
    injector: Injector,
    count: int,
    horizon: int,
    seed: int,
    *,
    burn_in: int = 200,
    path: tuple = ("dataset",),
) -> Dataset:
    """Simulate ``count`` corrupted trajectories and label them with the smoother.

    States start stationary (after burn-in) so the injector sees its deployment
    distribution. The smoother runs on the corrupted channel, exactly what an
    unlabeled offline dataset would allow.
    """
    batch = simulate_batch(
        sys, horizon, count, injector, seed,
        path=path, init="stationary", burn_in=burn_in,
    )
    _, smoothed = run_estimators_batch(kal, batch.corrupted_meas)
    return Dataset(
        inputs=batch.corrupted_meas,
        targets=smoothed,
        states=batch.states,
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def forward(
    params: RecurrentFilterParams,
    inputs: np.ndarray,
    *,
    want_cache: bool = False,
):
    """Causal predictions for (N, m) or (batch, N, m) inputs.

    Output index k is produced after consuming inputs 0..k-1 only; the last
    input is never consumed. Hidden and cell states start at zero.
    """
    inputs = np.asarray(inputs, dtype=float)
    single = inputs.ndim == 2
    if single:
        inputs = inputs[None]
    if inputs.ndim != 3 or inputs.shape[2] != params.input_dim:
        raise DimensionMismatch(
            f"inputs must be (batch, N, {params.input_dim}), got {inputs.shape}"
        )
    batch, N, _ = inputs.shape
    h_size = params.hidden_size
    w = params.weights

    hs = [np.zeros((batch, h_size)) for _ in range(params.num_layers)]
    cs = [np.zeros((batch, h_size)) for _ in range(params.num_layers)]
    out = np.empty((batch, N, params.output_dim))
    out[:, 0] = w["bo"]
    caches: list[list[tuple]] = []
    for t in range(N - 1):
        x = inputs[:, t]
        step: list[tuple] = []
        for layer in range(params.num_layers):
            a = x @ w[f"Wx{layer}"].T + hs[layer] @ w[f"Wh{layer}"].T + w[f"b{layer}"]
            ai, af, ag, ao = np.split(a, 4, axis=1)
            gi, gf, gg, go = _sigmoid(ai), _sigmoid(af), np.tanh(ag), _sigmoid(ao)
            c = gf * cs[layer] + gi * gg
            tc = np.tanh(c)
            h_new = go * tc
            if want_cache:
                step.append((x, hs[layer], cs[layer], gi, gf, gg, go, tc))
            hs[layer] = h_new
            cs[layer] = c
            x = h_new
        out[:, t + 1] = x @ w["Wo"].T + w["bo"]
        if want_cache:
            caches.append(step)
    if single:
        out = out[0]
    return (out, caches) if want_cache else out


def loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over batch and time of the squared error norm."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise LengthMismatch(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(np.sum(diff**2, axis=-1)))


def backward(
    params: RecurrentFilterParams, inputs: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients for one (batch, N, m) minibatch."""
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if inputs.ndim == 2:
        inputs = inputs[None]
        targets = targets[None]
    out, caches = forward(params, inputs, want_cache=True)
    if out.shape != targets.shape:
        raise LengthMismatch(f"prediction {out.shape} vs target {targets.shape}")
    batch, N, _ = out.shape
    diff = out - targets
    value = float(np.mean(np.sum(diff**2, axis=-1)))
    dout = (2.0 / (batch * N)) * diff

    w = params.weights
    grads = {name: np.zeros_like(arr) for name, arr in w.items()}
    grads["bo"] += dout.sum(axis=(0, 1))
    L = params.num_layers
    h_size = params.hidden_size
    dh = [np.zeros((batch, h_size)) for _ in range(L)]
    dc = [np.zeros((batch, h_size)) for _ in range(L)]
    for t in range(N - 2, -1, -1):
        top_cache = caches[t][L - 1]
        h_top = top_cache[6] * top_cache[7]  # o * tanh(c)
        dtop = dout[:, t + 1]
        grads["Wo"] += dtop.T @ h_top
        dh[L - 1] += dtop @ w["Wo"]
        d_from_above: np.ndarray | None = None
        for layer in range(L - 1, -1, -1):
            x, h_prev, c_prev, gi, gf, gg, go, tc = caches[t][layer]
            dht = dh[layer] if d_from_above is None else dh[layer] + d_from_above
            d_go = dht * tc
            d_ct = dht * go * (1.0 - tc**2) + dc[layer]
            d_gi = d_ct * gg
            d_gg = d_ct * gi
            d_gf = d_ct * c_prev
            dc[layer] = d_ct * gf
            da = np.concatenate(
                [
                    d_gi * gi * (1.0 - gi),
                    d_gf * gf * (1.0 - gf),
                    d_gg * (1.0 - gg**2),
                    d_go * go * (1.0 - go),
                ],
                axis=1,
            )
            grads[f"Wx{layer}"] += da.T @ x
            grads[f"Wh{layer}"] += da.T @ h_prev
            grads[f"b{layer}"] += da.sum(axis=0)
            dh[layer] = da @ w[f"Wh{layer}"]
            d_from_above = da @ w[f"Wx{layer}"] if layer > 0 else None
    return value, grads


def train(
    dataset: Dataset,
    config: TrainingConfig,
    eval_dataset: Dataset | None = None,
    params: RecurrentFilterParams | None = None,
) -> TrainResult:
    """Minibatch Adam over shuffled sequences; deterministic given the seed.

    Shuffling, init, and every reduction follow a fixed order, so identical
    (dataset, config) pairs give bit-identical parameters. The trailing
    partial batch of each epoch is dropped. Raises :class:`Divergence` if the
    epoch loss exceeds ``divergence_factor`` times the first epoch's loss.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if params is None:
        params = RecurrentFilterParams.initialize(
            input_dim=dataset.inputs.shape[2],
            hidden_size=config.hidden_size,
            output_dim=dataset.targets.shape[2],
            num_layers=config.num_layers,
            rng=generator(config.seed, "learner", "init"),
        )
    else:
        params = params.copy()
    shuffle_rng = generator(config.seed, "learner", "shuffle")
    count = len(dataset)
    bs = min(config.batch_size, count)

    adam_m = {k: np.zeros_like(v) for k, v in params.weights.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.weights.items()}
    step = 0
    curve: list[dict] = []
    first_epoch_loss: float | None = None
    for epoch in range(config.num_epochs):
        perm = shuffle_rng.permutation(count)
        total = 0.0
        batches = 0
        for start in range(0, count - bs + 1, bs):
            idx = perm[start : start + bs]
            value, grads = backward(params, dataset.inputs[idx], dataset.targets[idx])
            gnorm = np.sqrt(sum(float(np.sum(g**2)) for g in grads.values()))
            if gnorm > config.clip_norm:
                scale = config.clip_norm / gnorm
                for g in grads.values():
                    g *= scale
            step += 1
            corr1 = 1.0 - config.adam_beta1**step
            corr2 = 1.0 - config.adam_beta2**step
            for name, wval in params.weights.items():
                adam_m[name] = config.adam_beta1 * adam_m[name] + (1 - config.adam_beta1) * grads[name]
                adam_v[name] = config.adam_beta2 * adam_v[name] + (1 - config.adam_beta2) * grads[name] ** 2
                wval -= config.learning_rate * (adam_m[name] / corr1) / (
                    np.sqrt(adam_v[name] / corr2) + config.adam_eps
                )
            total += value
            batches += 1
        epoch_loss = total / max(batches, 1)
        if first_epoch_loss is None:
            first_epoch_loss = epoch_loss
        if not np.isfinite(epoch_loss) or epoch_loss > config.divergence_factor * max(
            first_epoch_loss, 1e-300
        ):
            raise Divergence(
                f"epoch {epoch} loss {epoch_loss:.6g} exceeds guard over initial {first_epoch_loss:.6g}"
            )
        row = {"epoch": epoch, "train_loss": epoch_loss}
        if eval_dataset is not None:
            ev = evaluate(params, eval_dataset)
            row["eval_mse_states"] = ev.mse_states
            row["eval_mse_targets"] = ev.mse_targets
        else:
            row["eval_mse_states"] = float("nan")
            row["eval_mse_targets"] = float("nan")
        curve.append(row)
    return TrainResult(params=params, curve=curve)


def evaluate(params: RecurrentFilterParams, dataset: Dataset) -> EvalResult:
    """MSE of the causal predictions against true states and smoother targets.

    Standard errors come from the spread of per-sequence MSEs.
    """
    pred = forward(params, dataset.inputs)
    per_seq_states = np.mean(np.sum((dataset.states - pred) ** 2, axis=2), axis=1)
    per_seq_targets = np.mean(np.sum((dataset.targets - pred) ** 2, axis=2), axis=1)
    count = len(dataset)

    def se(x: np.ndarray) -> float:
        return float(x.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0

    return EvalResult(
        mse_states=float(per_seq_states.mean()),
        se_states=se(per_seq_states),
        mse_targets=float(per_seq_targets.mean()),
        se_targets=se(per_seq_targets),
        num_sequences=count,
    )


def params_to_json(params: RecurrentFilterParams) -> str:
    """Serialize weights to a versioned JSON document.

    Floats are written as shortest round-trip decimals, so loading reproduces
    every weight bit-for-bit on any platform.
    """
    doc = {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "arch": {
            "input_dim": params.input_dim,
            "hidden_size": params.hidden_size,
            "output_dim": params.output_dim,
            "num_layers": params.num_layers,
        },
        "weights": {
            name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            for name, arr in sorted(params.weights.items())
        },
    }
    return json.dumps(doc, indent=2)


def params_from_json(text: str) -> RecurrentFilterParams:
    doc = json.loads(text)
    if doc.get("format") != PARAMS_FORMAT:
        raise ValueError(f"not a {PARAMS_FORMAT} document")
    if doc.get("version") != PARAMS_VERSION:
        raise ValueError(f"unsupported version {doc.get('version')}")
    arch = doc["arch"]
    weights = {}
    for name, spec in doc["weights"].items():
        arr = np.array(spec["data"], dtype=float).reshape(spec["shape"])
        weights[name] = arr
    return RecurrentFilterParams(
        input_dim=int(arch["input_dim"]),
        hidden_size=int(arch["hidden_size"]),
        output_dim=int(arch["output_dim"]),
        num_layers=int(arch["num_layers"]),
        weights=weights,
    )
