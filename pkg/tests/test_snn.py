import numpy as np
import pytest

from evcyto.snn import (
    Network,
    NetworkConfig,
    forward,
    forward_batch,
    init_network,
    lif_layer_step,
    load_network,
    output_spike_counts,
    population_counts,
    predict,
    save_network,
    smooth_spike,
)
from oracles import reference_lif_layer


def tiny_config(**kw):
    base = dict(layer_sizes=(2, 2, 2), neurons_per_class=1, u_thr=0.5, beta=0.9)
    base.update(kw)
    return NetworkConfig(**base)


def make_net(weights, biases, config):
    return Network(
        weights=[np.asarray(w, dtype=np.float64) for w in weights],
        biases=[np.asarray(b, dtype=np.float64) for b in biases],
        config=config,
    )


# ---------------------------------------------------------------------------
# init_network


def test_init_shapes_default():
    net = init_network(NetworkConfig(), seed=0)
    assert net.weights[0].shape == (100, 1536)
    assert net.weights[1].shape == (20, 100)
    assert net.biases[0].shape == (100,)
    assert net.biases[1].shape == (20,)


def test_init_deterministic():
    a = init_network(NetworkConfig(), seed=42)
    b = init_network(NetworkConfig(), seed=42)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    c = init_network(NetworkConfig(), seed=43)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_init_uniform_bounds():
    net = init_network(NetworkConfig(), seed=7)
    bound0 = 1.0 / np.sqrt(1536)
    assert np.all(np.abs(net.weights[0]) <= bound0)
    assert np.abs(net.weights[0]).max() > 0.9 * bound0  # actually fills the range
    assert np.all(net.weights[1] <= 1.0 / np.sqrt(100))
    assert np.all(net.biases[0] == 0.0) and np.all(net.biases[1] == 0.0)


def test_config_validates_population_divisibility():
    with pytest.raises(ValueError):
        NetworkConfig(layer_sizes=(10, 5, 7), neurons_per_class=10)


# ---------------------------------------------------------------------------
# lif_layer_step


def test_step_zero_state_zero_current():
    m, s = lif_layer_step(np.zeros(3), np.zeros(3), beta=0.9, u_thr=0.5)
    assert np.all(m == 0.0) and np.all(s == 0.0)


def test_step_spike_and_subtract_reset():
    m, s = lif_layer_step(np.zeros(1), np.array([0.6]), beta=0.9, u_thr=0.5)
    assert s[0] == 1.0
    assert np.isclose(m[0], 0.1)


def test_step_decay_without_input():
    m, s = lif_layer_step(np.array([0.4]), np.array([0.0]), beta=0.9, u_thr=0.5)
    assert s[0] == 0.0
    assert np.isclose(m[0], 0.36)


def test_step_zero_reset_clears_membrane():
    m, s = lif_layer_step(np.zeros(1), np.array([0.8]), beta=0.9, u_thr=0.5, reset_mode="zero")
    assert s[0] == 1.0 and m[0] == 0.0


def test_step_equality_spikes():
    m, s = lif_layer_step(np.zeros(1), np.array([0.5]), beta=0.9, u_thr=0.5)
    assert s[0] == 1.0 and m[0] == 0.0


def test_step_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        lif_layer_step(np.zeros(2), np.zeros(3), beta=0.9, u_thr=0.5)


# ---------------------------------------------------------------------------
# forward


def test_forward_zero_raster_zero_biases_silent():
    net = init_network(tiny_config(), seed=1)
    trace = forward(net, np.zeros((5, 2), dtype=np.uint8))
    for layer in range(2):
        assert np.all(trace.spikes[layer] == 0.0)
        assert np.all(trace.membranes[layer] == 0.0)
        assert np.all(trace.currents[layer] == 0.0)


def test_forward_single_step_hand_computed():
    """T = 1 on a hand-set 2-2-2 net, checked against hand arithmetic."""
    cfg = tiny_config()
    net = make_net(
        weights=[[[1.0, 0.0], [0.0, 0.25]], [[1.0, 1.0], [0.0, 0.0]]],
        biases=[[0.0, 0.1], [0.0, 0.3]],
        config=cfg,
    )
    trace = forward(net, np.array([[1, 1]], dtype=np.uint8))
    # layer 1: currents (1.0, 0.35); both membranes from zero state
    np.testing.assert_allclose(trace.currents[0], [[1.0, 0.35]])
    np.testing.assert_allclose(trace.membranes[0], [[1.0, 0.35]])
    np.testing.assert_allclose(trace.spikes[0], [[1.0, 0.0]])
    # layer 2: current = W2 @ (1, 0) + b2 = (1.0, 0.3)
    np.testing.assert_allclose(trace.currents[1], [[1.0, 0.3]])
    np.testing.assert_allclose(trace.spikes[1], [[1.0, 0.0]])


def test_forward_matches_scalar_reference_per_layer():
    cfg = tiny_config(layer_sizes=(3, 4, 2), neurons_per_class=1, reset_mode="zero")
    rng = np.random.default_rng(0)
    net = init_network(cfg, seed=5)
    x = (rng.random((12, 3)) < 0.5).astype(np.uint8)
    trace = forward(net, x)
    cur0 = x.astype(np.float64) @ net.weights[0].T + net.biases[0]
    mem0, spk0 = reference_lif_layer(cur0, cfg.beta, cfg.u_thr, cfg.reset_mode)
    np.testing.assert_array_equal(trace.membranes[0], mem0)
    np.testing.assert_array_equal(trace.spikes[0], spk0)
    cur1 = spk0 @ net.weights[1].T + net.biases[1]
    mem1, spk1 = reference_lif_layer(cur1, cfg.beta, cfg.u_thr, cfg.reset_mode)
    np.testing.assert_array_equal(trace.spikes[1], spk1)


def test_forward_hard_spikes_binary():
    net = init_network(tiny_config(layer_sizes=(8, 6, 2)), seed=3)
    rng = np.random.default_rng(1)
    x = (rng.random((20, 8)) < 0.6).astype(np.uint8)
    trace = forward(net, x, mode="hard")
    for s in trace.spikes:
        assert set(np.unique(s)).issubset({0.0, 1.0})


def test_forward_smooth_spikes_in_open_unit_interval():
    net = init_network(tiny_config(layer_sizes=(8, 6, 2)), seed=3)
    rng = np.random.default_rng(1)
    x = (rng.random((20, 8)) < 0.6).astype(np.uint8)
    trace = forward(net, x, mode="smooth")
    for s in trace.spikes:
        assert np.all((s > 0.0) & (s < 1.0))


def test_forward_state_isolation():
    net = init_network(NetworkConfig(), seed=2)
    rng = np.random.default_rng(8)
    x = (rng.random((30, 1536)) < 0.02).astype(np.uint8)
    t1 = forward(net, x)
    t2 = forward(net, x)
    assert np.array_equal(t1.spikes[-1], t2.spikes[-1])
    assert np.array_equal(t1.membranes[0], t2.membranes[0])


def test_forward_batch_matches_individual_forwards_bitwise():
    net = init_network(tiny_config(layer_sizes=(16, 8, 4), neurons_per_class=2), seed=4)
    rng = np.random.default_rng(3)
    x = (rng.random((5, 25, 16)) < 0.3).astype(np.uint8)
    bt = forward_batch(net, x)
    for i in range(5):
        single = forward(net, x[i])
        for layer in range(2):
            assert np.array_equal(bt.spikes[layer][i], single.spikes[layer])
            assert np.array_equal(bt.membranes[layer][i], single.membranes[layer])


def test_forward_subtract_reset_conservation():
    cfg = tiny_config(layer_sizes=(4, 4, 2), neurons_per_class=1)
    net = init_network(cfg, seed=9)
    net.biases[0][:] = 0.3  # force spiking
    rng = np.random.default_rng(0)
    x = (rng.random((15, 4)) < 0.8).astype(np.uint8)
    trace = forward(net, x)
    mem = trace.membranes[0]
    spk = trace.spikes[0]
    stored = np.zeros(4)
    for n in range(15):
        m_pre = cfg.beta * stored + trace.currents[0][n]
        np.testing.assert_array_equal(m_pre, mem[n])
        stored = mem[n] - spk[n] * cfg.u_thr
        fired = spk[n] == 1.0
        np.testing.assert_allclose(stored[fired], mem[n][fired] - cfg.u_thr)


def test_forward_rejects_channel_mismatch():
    net = init_network(tiny_config(), seed=0)
    with pytest.raises(ValueError, match="channels"):
        forward(net, np.zeros((5, 3), dtype=np.uint8))


def test_output_spike_counts_matches_trace_path():
    net = init_network(tiny_config(layer_sizes=(12, 6, 4), neurons_per_class=2), seed=6)
    rng = np.random.default_rng(5)
    x = (rng.random((3, 40, 12)) < 0.4).astype(np.uint8)
    counts = output_spike_counts(net, x)
    bt = forward_batch(net, x)
    want = bt.spikes[-1].sum(axis=1).reshape(3, 2, 2).sum(axis=2)
    assert np.array_equal(counts, want)


# ---------------------------------------------------------------------------
# population readout


def _trace_with_output_spikes(spikes, npc=10):
    cfg = NetworkConfig(layer_sizes=(4, 4, spikes.shape[1]), neurons_per_class=npc)
    zeros = np.zeros_like(spikes, dtype=np.float64)
    from evcyto.snn import ForwardTrace

    return ForwardTrace(
        inputs=np.zeros((spikes.shape[0], 4)),
        currents=[zeros, zeros],
        membranes=[zeros, zeros],
        spikes=[zeros, np.asarray(spikes, dtype=np.float64)],
        mode="hard",
        config=cfg,
    )


def test_population_counts_zero_trace():
    trace = _trace_with_output_spikes(np.zeros((5, 20)))
    assert population_counts(trace).tolist() == [0.0, 0.0]


def test_population_counts_block_structure():
    spikes = np.zeros((3, 20))
    spikes[0, :10] = 1.0  # neurons 0-9 fire once each
    trace = _trace_with_output_spikes(spikes)
    assert population_counts(trace).tolist() == [10.0, 0.0]


def test_population_counts_brute_force():
    rng = np.random.default_rng(12)
    spikes = (rng.random((17, 20)) < 0.3).astype(np.float64)
    trace = _trace_with_output_spikes(spikes)
    counts = population_counts(trace)
    brute = [
        sum(spikes[n, j] for n in range(17) for j in range(c * 10, (c + 1) * 10))
        for c in range(2)
    ]
    np.testing.assert_allclose(counts, brute)


def test_predict_argmax_and_tie_break():
    spikes = np.zeros((10, 20))
    spikes[:3, 15] = 1.0
    assert predict(_trace_with_output_spikes(spikes)) == 1
    spikes = np.zeros((10, 20))
    spikes[0, 0] = 1.0
    spikes[0, 10] = 1.0  # tie: both populations at 1
    assert predict(_trace_with_output_spikes(spikes)) == 0


def test_predict_depends_only_on_count_difference():
    rng = np.random.default_rng(1)
    spikes = (rng.random((30, 20)) < 0.2).astype(np.float64)
    base = _trace_with_output_spikes(spikes)
    shifted = spikes.copy()
    shifted[:, :] += 0  # no-op; constant-offset invariance checked on counts
    counts = population_counts(base)
    assert predict(base) == int(np.argmax(counts - counts.min()))


# ---------------------------------------------------------------------------
# smooth spike + checkpoints


def test_smooth_spike_shape_and_midpoint():
    assert smooth_spike(np.array(0.0), 75.0) == 0.5
    v = np.linspace(-2, 2, 101)
    s = smooth_spike(v, 75.0)
    assert np.all((s > 0) & (s < 1))
    assert np.all(np.diff(s) > 0)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    net = init_network(NetworkConfig(), seed=33)
    net.biases[1][:] = np.pi / 7  # non-trivial bits
    path = tmp_path / "net.json"
    save_network(net, path)
    loaded = load_network(path)
    assert loaded.config == net.config
    for a, b in zip(net.weights + net.biases, loaded.weights + loaded.biases):
        assert np.array_equal(a, b)
