import numpy as np
import pytest

from hgcn import autodiff as ad
from hgcn.autodiff import Adam, Tape
from hgcn.encoder import TrainableLookup
from hgcn.model import (
    ModelConfig,
    ModelParams,
    build_target,
    forward,
    init_label_features,
    sample_loss,
    train_step,
)

from oracles import finite_difference_grad, max_rel_err


def tiny_setup(num_layers=2, hidden=6, n=3, d=5, vocab=8, seed=0, **kw):
    cfg = ModelConfig(num_labels=n, num_layers=num_layers, hidden=hidden,
                      input_dim=d, seed=seed, **kw)
    rng = np.random.default_rng(seed)
    params = ModelParams.init(cfg, rng)
    provider = TrainableLookup(vocab, d, rng)
    return cfg, params, provider


def test_init_label_features_identity():
    feats = init_label_features(3)
    assert np.array_equal(feats, np.eye(3))
    # rows pairwise orthogonal
    assert np.allclose(feats @ feats.T, np.eye(3))


def test_label_projection_width():
    cfg, params, _ = tiny_setup()
    projected = init_label_features(cfg.num_labels) @ params.w_label_in.value
    assert projected.shape == (cfg.num_labels, cfg.hidden)
    assert np.array_equal(projected, params.w_label_in.value)


def test_forward_shapes_single_token_single_label():
    cfg, params, provider = tiny_setup(num_layers=1, n=1)
    with Tape():
        trace = forward([0], provider, params, cfg)
    assert trace.layer_token_features[0].shape == (1, cfg.hidden)
    assert trace.layer_label_features[0].shape == (1, cfg.hidden)
    assert trace.final_edges.shape == (1, 1)


def test_first_layer_token_features_independent_of_label_params():
    # the token-label block is zero at layer 1, so layer-1 token features
    # cannot depend on the label inputs
    cfg, params, provider = tiny_setup()
    with Tape():
        before = forward([0, 2, 3], provider, params, cfg)
    params.w_label_in.value = params.w_label_in.value + 0.5
    with Tape():
        after = forward([0, 2, 3], provider, params, cfg)
    assert np.array_equal(before.layer_token_features[1], after.layer_token_features[1])
    assert not np.array_equal(before.layer_label_features[1],
                              after.layer_label_features[1])


def test_forward_probabilities_sum_to_one():
    cfg, params, provider = tiny_setup()
    with Tape():
        trace = forward([0, 4, 5, 1], provider, params, cfg)
    assert abs(trace.probs.sum() - 1.0) < 1e-9
    assert np.all(trace.final_edges >= 0) and np.all(trace.final_edges <= 1)


def test_forward_exposes_per_layer_edges():
    cfg, params, provider = tiny_setup(num_layers=3)
    with Tape():
        trace = forward([0, 4, 1], provider, params, cfg)
    assert len(trace.layer_edges) == 3
    assert np.array_equal(trace.layer_edges[0], np.zeros((3, cfg.num_labels)))
    assert not np.array_equal(trace.layer_edges[1], np.zeros((3, cfg.num_labels)))


def test_build_target_examples():
    assert np.allclose(build_target([1, 0, 1, 0]), [[0.5, 0, 0.5, 0]], atol=1e-15)
    assert np.allclose(build_target([1, 0, 0]), [[1, 0, 0]], atol=1e-15)
    assert np.allclose(build_target([0, 0]), [[0.5, 0.5]], atol=1e-15)


def test_end_to_end_gradient_matches_finite_differences():
    cfg, params, provider = tiny_setup(num_layers=2, hidden=6, n=3, d=4)
    ids = [0, 4, 5, 1]
    target = build_target([1, 0, 1])

    def loss_with(node, value):
        old = node.value
        node.value = value
        with Tape():
            loss = sample_loss(ids, target, provider, params, cfg)
        node.value = old
        return float(loss.value[0, 0])

    with Tape() as tape:
        loss = sample_loss(ids, target, provider, params, cfg)
        tape.backward(loss)

    for node in params.parameters() + provider.parameters():
        fd = finite_difference_grad(lambda v, n=node: loss_with(n, v), node.value)
        assert max_rel_err(node.grad, fd) < 1e-3


def test_end_to_end_gradient_with_tanh():
    cfg, params, provider = tiny_setup(num_layers=2, hidden=5, n=2, d=4,
                                       activation="tanh")
    ids = [0, 4, 1]
    target = build_target([0, 1])

    def loss_with(node, value):
        old = node.value
        node.value = value
        with Tape():
            loss = sample_loss(ids, target, provider, params, cfg)
        node.value = old
        return float(loss.value[0, 0])

    with Tape() as tape:
        loss = sample_loss(ids, target, provider, params, cfg)
        tape.backward(loss)
    for node in params.parameters():
        fd = finite_difference_grad(lambda v, n=node: loss_with(n, v), node.value)
        assert max_rel_err(node.grad, fd) < 1e-3


def test_detach_edges_changes_gradients_not_forward():
    ids = [0, 4, 5, 1]
    target = build_target([1, 0])

    def grads(detach):
        cfg, params, provider = tiny_setup(n=2, activation="tanh",
                                           detach_edges=detach)
        with Tape() as tape:
            loss = sample_loss(ids, target, provider, params, cfg)
            tape.backward(loss)
        return float(loss.value[0, 0]), [p.grad.copy() for p in params.parameters()]

    loss_full, grads_full = grads(False)
    loss_detached, grads_detached = grads(True)
    assert loss_full == loss_detached
    assert any(not np.array_equal(a, b)
               for a, b in zip(grads_full, grads_detached))


def test_label_permutation_equivariance():
    cfg, params, provider = tiny_setup(n=4)
    ids = [0, 4, 6, 1]
    with Tape():
        base = forward(ids, provider, params, cfg)
    perm = np.array([2, 0, 3, 1])
    params.w_label_in.value = params.w_label_in.value[perm]
    with Tape():
        permuted = forward(ids, provider, params, cfg)
    assert np.allclose(permuted.probs[0], base.probs[0][perm], atol=1e-9)


def test_train_step_zero_loss_leaves_params():
    # when prediction already equals target the gradient is zero
    cfg, params, provider = tiny_setup(n=2, optimizer="sgd", lr=0.5)
    with Tape():
        trace = forward([0, 4, 1], provider, params, cfg)
    target = trace.probs.copy()
    before = [p.value.copy() for p in params.parameters()]
    loss = train_step([([0, 4, 1], target)], params, cfg, provider)
    assert loss == pytest.approx(0.0, abs=1e-15)
    for b, p in zip(before, params.parameters()):
        assert np.array_equal(b, p.value)


def test_train_step_rejects_empty_batch():
    cfg, params, provider = tiny_setup()
    with pytest.raises(ValueError):
        train_step([], params, cfg, provider)


def test_loss_decreases_on_separable_fixture():
    cfg, params, provider = tiny_setup(n=2, d=6, hidden=8, vocab=10,
                                       activation="tanh", lr=0.05)
    rng = np.random.default_rng(0)
    batch = []
    for i in range(20):
        label = i % 2
        trigger = 4 + label  # token 4 -> label 0, token 5 -> label 1
        ids = [0, trigger, int(rng.integers(6, 10)), 1]
        binary = [0, 0]
        binary[label] = 1
        batch.append((ids, build_target(binary)))
    optimizer = Adam(params.parameters() + provider.parameters(), cfg.lr)
    losses = [train_step(batch, params, cfg, provider, optimizer) for _ in range(50)]
    assert losses[-1] < losses[0]
    assert losses[-1] < 0.05


def test_training_determinism():
    def run():
        cfg, params, provider = tiny_setup(n=2, seed=11)
        optimizer = Adam(params.parameters() + provider.parameters(), cfg.lr)
        batch = [([0, 4, 1], build_target([1, 0])),
                 ([0, 5, 6, 1], build_target([0, 1]))]
        losses = [train_step(batch, params, cfg, provider, optimizer)
                  for _ in range(5)]
        return losses, [p.value.copy() for p in params.parameters()]

    l1, p1 = run()
    l2, p2 = run()
    assert l1 == l2
    for a, b in zip(p1, p2):
        assert np.array_equal(a, b)


def test_frozen_provider_bitwise_unchanged_by_training():
    cfg, params, provider = tiny_setup()
    provider = TrainableLookup(8, cfg.input_dim, np.random.default_rng(0), freeze=True)
    before = provider.table.value.copy()
    batch = [([0, 4, 1], build_target([1, 0, 0]))]
    optimizer = Adam(params.parameters() + provider.parameters(), cfg.lr)
    for _ in range(10):
        train_step(batch, params, cfg, provider, optimizer)
    assert np.array_equal(provider.table.value, before)


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(num_labels=2, num_layers=0)
    with pytest.raises(ValueError):
        ModelConfig(num_labels=2, hidden=0)
    with pytest.raises(ValueError):
        ModelConfig(num_labels=2, precision="float16")
