"""Feedforward LIF classifier: forward dynamics and population readout.

The network is a stack of dense layers of leaky integrate-and-fire
neurons (default 1536-100-20). Per timestep n and layer l:

    current_l(n) = W_l @ spikes_{l-1}(n) + b_l
    m_pre = beta * m_post(n-1) + current_l(n)
    spike = 1 if m_pre >= u_thr else 0          (hard mode)
    m_post = m_pre - spike * u_thr              (subtract reset)
           = m_pre * (1 - spike)                (zero reset)

Membrane state starts at zero for every sample; traces record currents,
pre-reset membranes, and spikes of every non-input layer for the
backward pass. The output layer is read out with population coding:
each class owns a contiguous block of ``neurons_per_class`` neurons and
the predicted class is the argmax of summed population spike counts.

Smooth mode replaces the hard threshold with the differentiable
sigma_k(v) = 0.5 * (1 + v / (1 + k|v|)) at v = m_pre - u_thr and drives
the reset with that smooth value. It exists to make the entire forward
pass differentiable so the analytic backward pass can be checked against
finite differences; it is not the inference path.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

RESET_MODES = ("subtract", "zero")
MODES = ("hard", "smooth")


@dataclass(frozen=True)
class NetworkConfig:
    layer_sizes: tuple[int, ...] = (1536, 100, 20)
    beta: float = 0.9
    u_thr: float = 0.5
    neurons_per_class: int = 10
    reset_mode: str = "subtract"
    surrogate_slope: float = 75.0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output layers")
        if self.reset_mode not in RESET_MODES:
            raise ValueError(f"reset_mode must be one of {RESET_MODES}")
        if self.layer_sizes[-1] % self.neurons_per_class:
            raise ValueError("output size must be a multiple of neurons_per_class")
        if self.surrogate_slope <= 0:
            raise ValueError("surrogate_slope must be positive")

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1] // self.neurons_per_class


@dataclass
class Network:
    """Layer weights [out x in] and biases [out], all float64."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: NetworkConfig

    def clone(self) -> "Network":
        return Network(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            config=self.config,
        )


@dataclass
class ForwardTrace:
    """Everything the backward pass needs, for one sample: the input
    raster plus per-layer currents, pre-reset membranes, and spikes,
    each [T x layer size]."""

    inputs: np.ndarray
    currents: list[np.ndarray]
    membranes: list[np.ndarray]
    spikes: list[np.ndarray]
    mode: str
    config: NetworkConfig

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]


@dataclass
class BatchTrace:
    """Batched variant of ForwardTrace; arrays are [batch x T x size]."""

    inputs: np.ndarray
    currents: list[np.ndarray]
    membranes: list[np.ndarray]
    spikes: list[np.ndarray]
    mode: str
    config: NetworkConfig

    @property
    def steps(self) -> int:
        return self.inputs.shape[1]

    def sample(self, i: int) -> ForwardTrace:
        return ForwardTrace(
            inputs=self.inputs[i],
            currents=[c[i] for c in self.currents],
            membranes=[m[i] for m in self.membranes],
            spikes=[s[i] for s in self.spikes],
            mode=self.mode,
            config=self.config,
        )


def init_network(config: NetworkConfig, seed: int) -> Network:
    """Seeded init: weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)],
    biases zero. Layers are drawn in order from one PCG64 stream."""
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(config.layer_sizes[:-1], config.layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return Network(weights=weights, biases=biases, config=config)


def smooth_spike(v: np.ndarray, k: float) -> np.ndarray:
    """Differentiable spike stand-in sigma_k(v) = 0.5 * (1 + v/(1+k|v|))."""
    return 0.5 * (1.0 + v / (1.0 + k * np.abs(v)))


def lif_layer_step(
    membrane: np.ndarray,
    current: np.ndarray,
    beta: float,
    u_thr: float,
    reset_mode: str = "subtract",
) -> tuple[np.ndarray, np.ndarray]:
    """One hard-threshold LIF step; returns (stored membrane, spikes).

    Spikes on m_pre >= u_thr, equality included. The stored membrane is
    the post-reset value carried to the next step.
    """
    membrane = np.asarray(membrane, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    if membrane.shape != current.shape:
        raise ValueError(f"shape mismatch: membrane {membrane.shape} vs current {current.shape}")
    m_pre = beta * membrane + current
    spikes = (m_pre >= u_thr).astype(np.float64)
    if reset_mode == "subtract":
        m_post = m_pre - spikes * u_thr
    elif reset_mode == "zero":
        m_post = m_pre * (1.0 - spikes)
    else:
        raise ValueError(f"reset_mode must be one of {RESET_MODES}")
    return m_post, spikes


def _reset(m_pre: np.ndarray, spikes: np.ndarray, u_thr: float, reset_mode: str) -> np.ndarray:
    if reset_mode == "subtract":
        return m_pre - spikes * u_thr
    return m_pre * (1.0 - spikes)


def forward_batch(network: Network, rasters: np.ndarray, mode: str = "hard") -> BatchTrace:
    """Run the network over a [batch x T x channels] raster block.

    Currents for a whole layer are one GEMM over the collapsed
    (batch*T) axis; only the membrane recurrence is stepped in time.
    The per-element arithmetic is identical to the single-sample path,
    so batched and individual forwards agree bitwise.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cfg = network.config
    x = np.ascontiguousarray(rasters, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != cfg.layer_sizes[0]:
        raise ValueError(
            f"raster channels {x.shape[-1] if x.ndim == 3 else '?'} "
            f"do not match input size {cfg.layer_sizes[0]}"
        )
    batch, steps, _ = x.shape
    k = cfg.surrogate_slope

    inputs = x
    currents: list[np.ndarray] = []
    membranes: list[np.ndarray] = []
    spikes: list[np.ndarray] = []
    prev = x
    for w, b in zip(network.weights, network.biases):
        size = w.shape[0]
        cur = prev.reshape(batch * steps, -1) @ w.T
        cur += b
        cur = cur.reshape(batch, steps, size)
        mem = np.empty((batch, steps, size), dtype=np.float64)
        spk = np.empty((batch, steps, size), dtype=np.float64)
        m_post = np.zeros((batch, size), dtype=np.float64)
        for n in range(steps):
            m_pre = cfg.beta * m_post + cur[:, n]
            if mode == "hard":
                s = (m_pre >= cfg.u_thr).astype(np.float64)
            else:
                s = smooth_spike(m_pre - cfg.u_thr, k)
            mem[:, n] = m_pre
            spk[:, n] = s
            m_post = _reset(m_pre, s, cfg.u_thr, cfg.reset_mode)
        currents.append(cur)
        membranes.append(mem)
        spikes.append(spk)
        prev = spk
    return BatchTrace(
        inputs=inputs, currents=currents, membranes=membranes, spikes=spikes,
        mode=mode, config=cfg,
    )


def forward(network: Network, raster: np.ndarray, mode: str = "hard") -> ForwardTrace:
    """Forward one sample ([T x channels] raster) with fresh zero state."""
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise ValueError("raster must be 2-D [steps, channels]")
    return forward_batch(network, raster[None], mode=mode).sample(0)


def output_spike_counts(network: Network, rasters: np.ndarray) -> np.ndarray:
    """Hard-mode per-class output spike counts, [batch x n_classes].

    Trace-free fast path for evaluation; arithmetic matches forward_batch
    step for step.
    """
    cfg = network.config
    x = np.ascontiguousarray(rasters, dtype=np.float64)
    batch, steps, _ = x.shape
    prev = x
    for li, (w, b) in enumerate(zip(network.weights, network.biases)):
        size = w.shape[0]
        cur = (prev.reshape(batch * steps, -1) @ w.T + b).reshape(batch, steps, size)
        spk = np.empty((batch, steps, size), dtype=np.float64)
        m_post = np.zeros((batch, size), dtype=np.float64)
        for n in range(steps):
            m_pre = cfg.beta * m_post + cur[:, n]
            s = (m_pre >= cfg.u_thr).astype(np.float64)
            spk[:, n] = s
            m_post = _reset(m_pre, s, cfg.u_thr, cfg.reset_mode)
        prev = spk
    counts = prev.sum(axis=1)  # [batch, out]
    return counts.reshape(batch, cfg.n_classes, cfg.neurons_per_class).sum(axis=2)


def population_counts(trace: ForwardTrace) -> np.ndarray:
    """Summed spike counts per output population; population c owns output
    neurons [c*npc, (c+1)*npc)."""
    cfg = trace.config
    out = trace.spikes[-1].sum(axis=0)
    return out.reshape(cfg.n_classes, cfg.neurons_per_class).sum(axis=1)


def predict(trace: ForwardTrace) -> int:
    """Argmax class over population counts; ties go to the lower index."""
    return int(np.argmax(population_counts(trace)))


# ---------------------------------------------------------------------------
# Checkpoints


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode(text: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"))
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def save_network(network: Network, path: str | Path) -> None:
    """Write a bit-exact JSON checkpoint (parameters as base64 of
    little-endian float64 bytes)."""
    doc = {
        "format": "evcyto-network",
        "version": 1,
        "config": asdict(network.config),
        "layers": [
            {
                "weight_shape": list(w.shape),
                "weight": _encode(w),
                "bias": _encode(b),
            }
            for w, b in zip(network.weights, network.biases)
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_network(path: str | Path) -> Network:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "evcyto-network":
        raise ValueError("not a network checkpoint")
    cfg_d = doc["config"]
    cfg_d["layer_sizes"] = tuple(cfg_d["layer_sizes"])
    config = NetworkConfig(**cfg_d)
    weights = []
    biases = []
    for layer in doc["layers"]:
        shape = tuple(layer["weight_shape"])
        weights.append(_decode(layer["weight"], shape))
        biases.append(_decode(layer["bias"], (shape[0],)))
    return Network(weights=weights, biases=biases, config=config)
