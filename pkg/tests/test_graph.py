import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgcn import autodiff as ad
from hgcn.autodiff import ShapeError, Tape, constant, parameter
from hgcn.graph import (
    AdjacencyBlocks,
    assemble_block,
    assemble_block_node,
    build_chain_adjacency,
    build_label_adjacency,
    initial_blocks,
    normalize_adjacency,
    normalize_adjacency_node,
    reconstruct_token_label,
)

from oracles import finite_difference_grad, max_rel_err


def test_chain_single_node():
    assert np.array_equal(build_chain_adjacency(1), [[1.0]])


def test_chain_m3_exact():
    expected = [[1, 1, 0], [1, 1, 1], [0, 1, 1]]
    assert np.array_equal(build_chain_adjacency(3), expected)


def test_chain_m4_bandwidth():
    a = build_chain_adjacency(4)
    assert np.array_equal(a, a.T)
    assert a[0, 2] == a[0, 3] == a[1, 3] == 0


def test_chain_rejects_zero():
    with pytest.raises(ValueError):
        build_chain_adjacency(0)


@given(st.integers(min_value=1, max_value=50))
def test_chain_nonzero_count(m):
    assert np.count_nonzero(build_chain_adjacency(m)) == 3 * m - 2


def test_label_adjacency_identity():
    assert np.array_equal(build_label_adjacency(2), np.eye(2))
    assert np.array_equal(build_label_adjacency(1), [[1.0]])
    a = build_label_adjacency(11)
    assert np.trace(a) == 11
    assert np.sum(a) - np.trace(a) == 0


def test_label_adjacency_rejects_zero():
    with pytest.raises(ValueError):
        build_label_adjacency(0)


def test_assemble_zero_cross_block_is_block_diagonal():
    blocks = initial_blocks(3, 2)
    full = assemble_block(blocks)
    assert np.array_equal(full[:3, 3:], np.zeros((3, 2)))
    assert np.array_equal(full[3:, :3], np.zeros((2, 3)))
    assert np.array_equal(full[:3, :3], blocks.a_token)
    assert np.array_equal(full[3:, 3:], blocks.a_label)


def test_assemble_placement_and_symmetry():
    rng = np.random.default_rng(0)
    atl = rng.uniform(0, 1, (3, 2))
    blocks = AdjacencyBlocks(build_chain_adjacency(3), build_label_adjacency(2), atl)
    full = assemble_block(blocks)
    for i in range(3):
        for j in range(2):
            assert full[i, 3 + j] == atl[i, j]
    assert np.array_equal(full, full.T)


def test_assemble_shape_mismatch():
    blocks = AdjacencyBlocks(build_chain_adjacency(3), build_label_adjacency(2),
                             np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        assemble_block(blocks)


def test_normalize_zeros_gives_identity():
    assert np.allclose(normalize_adjacency(np.zeros((2, 2))), np.eye(2), atol=1e-15)


def test_normalize_hand_value():
    out = normalize_adjacency(np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert np.allclose(out, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-12)


@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=1000))
@settings(max_examples=50)
def test_normalize_symmetric_bounded(size, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, (size, size))
    a = (a + a.T) / 2
    out = normalize_adjacency(a)
    assert np.allclose(out, out.T, atol=1e-12)
    assert np.all(out >= 0) and np.all(out <= 1 + 1e-12)


def test_normalize_node_matches_pure_function():
    rng = np.random.default_rng(1)
    a = rng.uniform(0, 1, (5, 5))
    a = (a + a.T) / 2
    with Tape():
        out = normalize_adjacency_node(constant(a))
    assert np.allclose(out.value, normalize_adjacency(a), atol=1e-15)


def test_normalize_node_gradient_vs_finite_differences():
    rng = np.random.default_rng(2)
    a0 = rng.uniform(0, 1, (4, 4))
    t = rng.uniform(0, 1, (4, 4))

    def run(a_val):
        a = parameter(a_val)
        with Tape() as tape:
            loss = ad.mse_loss(normalize_adjacency_node(a), t)
            tape.backward(loss)
        return float(loss.value[0, 0]), a.grad

    _, grad = run(a0)
    fd = finite_difference_grad(lambda a: run(a)[0], a0)
    assert max_rel_err(grad, fd) < 1e-4


def test_assemble_node_gradient_collects_both_placements():
    rng = np.random.default_rng(3)
    atl0 = rng.uniform(0, 1, (3, 2))
    at = build_chain_adjacency(3)
    al = build_label_adjacency(2)
    t = rng.uniform(0, 1, (5, 5))

    def run(atl_val):
        atl = parameter(atl_val)
        with Tape() as tape:
            loss = ad.mse_loss(assemble_block_node(at, al, atl), t)
            tape.backward(loss)
        return float(loss.value[0, 0]), atl.grad

    _, grad = run(atl0)
    fd = finite_difference_grad(lambda x: run(x)[0], atl0)
    assert max_rel_err(grad, fd) < 1e-4


def test_reconstruct_extreme_cosines():
    v = np.array([[1.0, 2.0, 3.0]])
    with Tape():
        out = reconstruct_token_label(
            constant(np.vstack([v, -v])), constant(np.vstack([v, [[3.0, 0.0, -1.0]]])))
    assert out.value[0, 0] == pytest.approx(1.0, abs=1e-12)   # identical -> 1
    assert out.value[1, 0] == pytest.approx(0.0, abs=1e-12)   # opposite -> 0
    assert out.value[0, 1] == pytest.approx(0.5, abs=1e-12)   # orthogonal -> 0.5


def test_reconstruct_zero_norm_row_forced_to_zero():
    with Tape():
        out = reconstruct_token_label(
            constant([[0.0, 0.0], [1.0, 0.0]]), constant([[1.0, 1.0]]))
    assert out.value[0, 0] == 0.0


def test_reconstruct_width_mismatch():
    with pytest.raises(ShapeError):
        reconstruct_token_label(constant(np.ones((2, 3))), constant(np.ones((2, 2))))


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=100)
def test_reconstruct_entries_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    with Tape():
        out = reconstruct_token_label(
            constant(rng.normal(size=(4, 6))), constant(rng.normal(size=(3, 6))))
    assert np.all(out.value >= 0) and np.all(out.value <= 1)


def test_reconstruct_scale_invariance():
    rng = np.random.default_rng(5)
    xt = rng.normal(size=(4, 6))
    xl = rng.normal(size=(3, 6))
    with Tape():
        base = reconstruct_token_label(constant(xt), constant(xl))
    scaled = xt.copy()
    scaled[2] *= 37.5
    with Tape():
        out = reconstruct_token_label(constant(scaled), constant(xl))
    assert np.allclose(out.value[2], base.value[2], atol=1e-9)


def test_reconstruct_gradient_vs_finite_differences():
    rng = np.random.default_rng(6)
    xt0 = rng.uniform(0.2, 1, (3, 4)) * rng.choice([-1, 1], (3, 4))
    xl0 = rng.uniform(0.2, 1, (2, 4)) * rng.choice([-1, 1], (2, 4))
    t = rng.uniform(0, 1, (3, 2))

    def run(xt_val, xl_val):
        xt, xl = parameter(xt_val), parameter(xl_val)
        with Tape() as tape:
            loss = ad.mse_loss(reconstruct_token_label(xt, xl), t)
            tape.backward(loss)
        return float(loss.value[0, 0]), xt.grad, xl.grad

    _, gt, gl = run(xt0, xl0)
    fd_t = finite_difference_grad(lambda x: run(x, xl0)[0], xt0)
    fd_l = finite_difference_grad(lambda x: run(xt0, x)[0], xl0)
    assert max_rel_err(gt, fd_t) < 1e-4
    assert max_rel_err(gl, fd_l) < 1e-4
