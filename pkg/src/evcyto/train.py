"""Surrogate-gradient BPTT training of the LIF classifier.

The loss is a mean squared error on output spike rates: each output
neuron's firing rate over the sample (spikes / T) is pushed toward
``rate_correct`` if the neuron belongs to the true class's population
and ``rate_incorrect`` otherwise, averaged over the 20 output neurons.

The backward pass unrolls the membrane recurrence in reverse time. The
hard threshold has a zero-almost-everywhere derivative, so its backward
is replaced by the fast-sigmoid surrogate

    d spike / d membrane  :=  1 / (1 + k * |membrane - u_thr|)**2

with slope k = 75, and the reset contribution is gradient-blocked
(detached), matching common practice. In smooth mode the forward pass is
genuinely differentiable, so the backward uses the exact derivative of
sigma_k (half the surrogate value) and lets gradient flow through the
reset; this path exists so the whole BPTT machinery can be validated
against central finite differences.

Gradient accumulation over a batch is a single GEMM over the collapsed
(sample, timestep) axis in sample-index order, which makes every metric
bitwise reproducible for a fixed seed regardless of BLAS thread count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .seeds import TAG_SHUFFLE, mix_seed
from .snn import BatchTrace, ForwardTrace, Network, forward_batch, output_spike_counts


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    rate_correct: float = 0.8
    rate_incorrect: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if not (0.0 <= self.rate_correct <= 1.0 and 0.0 <= self.rate_incorrect <= 1.0):
            raise ValueError("target rates must lie in [0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the network parameters."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    mean_loss: float
    train_acc: float
    test_acc: float
    seconds: float


@dataclass
class RasterSet:
    """Preprocessed samples as bit-packed rasters plus integer labels.

    Bit packing keeps a desk-scale dataset (4,800 samples of 100 x 1536)
    under 100 MB; batches are unpacked to float64 on demand.
    """

    packed: np.ndarray  # [N, steps, ceil(channels/8)] uint8
    labels: np.ndarray  # [N] int64 class indices
    steps: int
    channels: int

    def __len__(self) -> int:
        return self.packed.shape[0]

    @classmethod
    def from_rasters(cls, rasters: Sequence[np.ndarray], labels: Sequence[int]) -> "RasterSet":
        if len(rasters) != len(labels):
            raise ValueError("rasters and labels length mismatch")
        if not rasters:
            raise ValueError("empty raster set")
        steps, channels = rasters[0].shape
        packed = np.stack([np.packbits(r.astype(np.uint8), axis=1) for r in rasters])
        return cls(
            packed=packed,
            labels=np.asarray(labels, dtype=np.int64),
            steps=steps,
            channels=channels,
        )

    def subset(self, indices) -> "RasterSet":
        indices = np.asarray(indices)
        return RasterSet(
            packed=self.packed[indices],
            labels=self.labels[indices],
            steps=self.steps,
            channels=self.channels,
        )

    def batch(self, indices) -> np.ndarray:
        """Unpack selected samples to a float64 [b, steps, channels] block."""
        bits = np.unpackbits(self.packed[indices], axis=2, count=self.channels)
        return bits.astype(np.float64)


def class_targets(labels: np.ndarray, config, train_config: TrainConfig) -> np.ndarray:
    """Per-output-neuron target rates, [batch x output size]."""
    labels = np.asarray(labels, dtype=np.int64)
    n_out = config.layer_sizes[-1]
    npc = config.neurons_per_class
    targets = np.full((labels.shape[0], n_out), train_config.rate_incorrect, dtype=np.float64)
    cols = labels[:, None] * npc + np.arange(npc)[None, :]
    np.put_along_axis(targets, cols, train_config.rate_correct, axis=1)
    return targets


def rate_mse_loss(trace: ForwardTrace, label: int, config: TrainConfig) -> float:
    """Mean squared error between output spike rates and the class targets."""
    rates = trace.spikes[-1].mean(axis=0)
    targets = class_targets(np.array([label]), trace.config, config)[0]
    return float(np.mean((rates - targets) ** 2))


def surrogate_grad(v, k: float):
    """Fast-sigmoid surrogate derivative 1/(1+k|v|)^2 at centered membrane v.

    Even in v, equal to 1 at v = 0, strictly decreasing in |v|.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    v = np.asarray(v, dtype=np.float64)
    out = 1.0 / (1.0 + k * np.abs(v)) ** 2
    return float(out) if out.ndim == 0 else out


def backward_batch(
    network: Network,
    trace: BatchTrace,
    labels: np.ndarray,
    config: TrainConfig,
) -> tuple[Gradients, float]:
    """BPTT over a batched trace; returns gradients of the batch-mean loss
    and the loss value itself.

    Reverse-time recurrence per layer: the gradient arriving at a stored
    membrane is beta times the gradient at the next step's pre-reset
    membrane; spikes route gradient through the surrogate (hard mode) or
    the exact smooth derivative (smooth mode, reset attached).
    """
    cfg = trace.config
    beta, u_thr, k = cfg.beta, cfg.u_thr, cfg.surrogate_slope
    hard = trace.mode == "hard"
    batch, steps = trace.inputs.shape[0], trace.steps
    n_layers = len(network.weights)
    n_out = cfg.layer_sizes[-1]

    rates = trace.spikes[-1].mean(axis=1)  # [B, out]
    targets = class_targets(labels, cfg, config)
    loss = float(np.mean(np.mean((rates - targets) ** 2, axis=1)))

    # dL/d spike(n) of the output layer, identical at every timestep.
    g_out_step = (2.0 / (n_out * batch * steps)) * (rates - targets)  # [B, out]
    ext = np.broadcast_to(g_out_step[:, None, :], (batch, steps, n_out))

    grad_w: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]

    for layer in range(n_layers - 1, -1, -1):
        mem = trace.membranes[layer]
        spk = trace.spikes[layer]
        ds_dm = surrogate_grad(mem - u_thr, k)
        if not hard:
            ds_dm = 0.5 * ds_dm  # exact derivative of smooth_spike

        size = network.weights[layer].shape[0]
        g_mem = np.empty((batch, steps, size), dtype=np.float64)
        g_next = np.zeros((batch, size), dtype=np.float64)
        for n in range(steps - 1, -1, -1):
            g_post = beta * g_next
            g_s = ext[:, n].copy()
            if hard:
                # Reset path detached: only the direct membrane carry remains.
                carry = g_post if cfg.reset_mode == "subtract" else g_post * (1.0 - spk[:, n])
            else:
                if cfg.reset_mode == "subtract":
                    g_s += g_post * (-u_thr)
                    carry = g_post
                else:
                    g_s += g_post * (-mem[:, n])
                    carry = g_post * (1.0 - spk[:, n])
            g = g_s * ds_dm[:, n] + carry
            g_mem[:, n] = g
            g_next = g

        prev = trace.spikes[layer - 1] if layer > 0 else trace.inputs
        flat_g = g_mem.reshape(batch * steps, size)
        grad_w[layer] = flat_g.T @ prev.reshape(batch * steps, -1)
        grad_b[layer] = g_mem.sum(axis=(0, 1))
        if layer > 0:
            ext = (flat_g @ network.weights[layer]).reshape(batch, steps, -1)

    return Gradients(weights=grad_w, biases=grad_b), loss


def backward(network: Network, trace: ForwardTrace, label: int, config: TrainConfig) -> Gradients:
    """Gradients of the single-sample loss w.r.t. all weights and biases."""
    batched = BatchTrace(
        inputs=trace.inputs[None],
        currents=[c[None] for c in trace.currents],
        membranes=[m[None] for m in trace.membranes],
        spikes=[s[None] for s in trace.spikes],
        mode=trace.mode,
        config=trace.config,
    )
    grads, _ = backward_batch(network, batched, np.array([label]), config)
    return grads


def init_adam_state(network: Network) -> AdamState:
    return AdamState(
        m_weights=[np.zeros_like(w) for w in network.weights],
        v_weights=[np.zeros_like(w) for w in network.weights],
        m_biases=[np.zeros_like(b) for b in network.biases],
        v_biases=[np.zeros_like(b) for b in network.biases],
        step=0,
    )


def adam_step(
    network: Network,
    grads: Gradients,
    state: AdamState,
    config: TrainConfig,
) -> tuple[Network, AdamState]:
    """Standard bias-corrected Adam update, applied in place."""
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradients")
    b1, b2, eps, lr = (
        config.adam_beta1,
        config.adam_beta2,
        config.adam_epsilon,
        config.learning_rate,
    )
    t = state.step + 1
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    params = network.weights + network.biases
    gs = grads.weights + grads.biases
    ms = state.m_weights + state.m_biases
    vs = state.v_weights + state.v_biases
    for p, g, m, v in zip(params, gs, ms, vs):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    state.step = t
    return network, state


def batch_slices(n: int, batch_size: int) -> list[slice]:
    return [slice(i, min(i + batch_size, n)) for i in range(0, n, batch_size)]


def train_epoch(
    network: Network,
    data: RasterSet,
    config: TrainConfig,
    state: AdamState,
    epoch: int,
) -> tuple[Network, AdamState, EpochMetrics]:
    """One pass over the training set: seeded shuffle, forward (hard mode),
    batch-mean loss, BPTT, Adam. Training accuracy is measured on the fly
    from each mini-batch's own forward pass (before that batch's update).
    Test accuracy is left NaN; the harness fills it in."""
    if len(data) == 0:
        raise ValueError("empty training set")
    t_start = time.perf_counter()
    rng = np.random.default_rng(mix_seed(config.seed, TAG_SHUFFLE, epoch))
    order = rng.permutation(len(data))

    total_loss = 0.0
    correct = 0
    for sl in batch_slices(len(data), config.batch_size):
        idx = order[sl]
        x = data.batch(idx)
        labels = data.labels[idx]
        trace = forward_batch(network, x, mode="hard")
        grads, loss = backward_batch(network, trace, labels, config)
        counts = (
            trace.spikes[-1]
            .sum(axis=1)
            .reshape(len(idx), trace.config.n_classes, trace.config.neurons_per_class)
            .sum(axis=2)
        )
        correct += int(np.count_nonzero(np.argmax(counts, axis=1) == labels))
        total_loss += loss * len(idx)
        adam_step(network, grads, state, config)

    metrics = EpochMetrics(
        epoch=epoch,
        mean_loss=total_loss / len(data),
        train_acc=correct / len(data),
        test_acc=float("nan"),
        seconds=time.perf_counter() - t_start,
    )
    return network, state, metrics


def evaluate(network: Network, data: RasterSet, chunk: int = 128) -> float:
    """Fraction of samples whose predicted class matches the label."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty sample set")
    correct = 0
    for sl in batch_slices(len(data), chunk):
        idx = np.arange(sl.start, sl.stop)
        counts = output_spike_counts(network, data.batch(idx))
        correct += int(np.count_nonzero(np.argmax(counts, axis=1) == data.labels[idx]))
    return correct / len(data)
