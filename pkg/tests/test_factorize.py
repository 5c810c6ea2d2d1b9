import numpy as np
import pytest

from tensorpress.errors import ConfigError, ShapeError
from tensorpress.factorize import (
    AnnealConfig,
    FactorPair,
    anneal_factorize,
    compressed_matrix,
    frobenius_loss,
    loss_gradient,
)
from tensorpress.tensors import DenseTensor


def test_loss_zero_at_exact_product():
    rng = np.random.default_rng(0)
    w1 = rng.standard_normal((4, 2)).astype(np.float32)
    w2 = rng.standard_normal((2, 3)).astype(np.float32)
    w = (w1.astype(np.float64) @ w2.astype(np.float64)).astype(np.float32)
    assert frobenius_loss(w, w1, w2) < 1e-10


def test_loss_scalar_case():
    assert frobenius_loss([[1.0]], [[0.0]], [[0.0]]) == 1.0


def test_loss_matches_entrywise_oracle():
    rng = np.random.default_rng(1)
    w = rng.standard_normal((5, 4))
    w1 = rng.standard_normal((5, 2))
    w2 = rng.standard_normal((2, 4))
    got = frobenius_loss(w, w1, w2)
    prod = w1 @ w2
    want = sum((w[i, j] - prod[i, j]) ** 2 for i in range(5) for j in range(4))
    assert got == pytest.approx(want, rel=1e-12)


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        frobenius_loss(np.ones((2, 2)), np.ones((2, 1)), np.ones((2, 2)))


def test_gradient_zero_at_minimum():
    rng = np.random.default_rng(2)
    w1 = rng.standard_normal((4, 2))
    w2 = rng.standard_normal((2, 3))
    g1, g2 = loss_gradient(w1 @ w2, w1, w2)
    assert np.abs(g1).max() < 1e-10
    assert np.abs(g2).max() < 1e-10


def test_gradient_scalar_zero_factors():
    g1, g2 = loss_gradient([[1.0]], [[0.0]], [[0.0]])
    assert g1.tolist() == [[0.0]]
    assert g2.tolist() == [[0.0]]


def finite_diff(w, w1, w2, h=1e-4):
    g1 = np.zeros_like(w1)
    for idx in np.ndindex(w1.shape):
        p, m = w1.copy(), w1.copy()
        p[idx] += h
        m[idx] -= h
        g1[idx] = (frobenius_loss(w, p, w2) - frobenius_loss(w, m, w2)) / (2 * h)
    g2 = np.zeros_like(w2)
    for idx in np.ndindex(w2.shape):
        p, m = w2.copy(), w2.copy()
        p[idx] += h
        m[idx] -= h
        g2[idx] = (frobenius_loss(w, w1, p) - frobenius_loss(w, w1, m)) / (2 * h)
    return g1, g2


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    w = rng.standard_normal((6, 5))
    w1 = rng.standard_normal((6, 2))
    w2 = rng.standard_normal((2, 5))
    a1, a2 = loss_gradient(w, w1, w2)
    n1, n2 = finite_diff(w, w1, w2)
    assert np.abs(a1 - n1).max() / np.abs(n1).max() < 1e-4
    assert np.abs(a2 - n2).max() / np.abs(n2).max() < 1e-4


def test_exact_rank_reaches_near_zero():
    rng = np.random.default_rng(4)
    w = DenseTensor(rng.standard_normal((12, 3)) @ rng.standard_normal((3, 10)))
    pair = anneal_factorize(w, AnnealConfig(rank=3, seed=0))
    assert pair.final_loss < 1e-6 * np.linalg.norm(w.data) ** 2


def test_rank1_of_diag_matches_eckart_young():
    w = DenseTensor(np.diag([3.0, 2.0]))
    pair = anneal_factorize(w, AnnealConfig(rank=1, seed=0))
    assert pair.final_loss == pytest.approx(4.0, rel=0.05)


def test_random_matrix_reaches_svd_tail():
    rng = np.random.default_rng(5)
    w = DenseTensor(rng.standard_normal((64, 64)))
    pair = anneal_factorize(w, AnnealConfig(rank=8, seed=1))
    s = np.linalg.svd(w.data.astype(np.float64), compute_uv=False)
    tail = float(np.sum(s[8:] ** 2))
    assert pair.final_loss <= 1.05 * tail
    assert pair.final_loss >= tail * (1 - 1e-6)  # SVD is the global optimum


def test_loss_trace_monotone():
    rng = np.random.default_rng(6)
    w = DenseTensor(rng.standard_normal((20, 15)))
    pair = anneal_factorize(w, AnnealConfig(rank=4, seed=2))
    trace = pair.loss_trace
    assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_final_loss_consistent_with_factors():
    rng = np.random.default_rng(7)
    w = DenseTensor(rng.standard_normal((10, 10)))
    pair = anneal_factorize(w, AnnealConfig(rank=3, seed=3))
    recomputed = frobenius_loss(w, pair.w1, pair.w2)
    assert recomputed == pytest.approx(pair.final_loss, rel=1e-6)


def test_seeded_determinism_bit_identical():
    rng = np.random.default_rng(8)
    w = DenseTensor(rng.standard_normal((16, 12)))
    cfg = AnnealConfig(rank=4, seed=77)
    a = anneal_factorize(w, cfg)
    b = anneal_factorize(w, cfg)
    assert a.w1.data.tobytes() == b.w1.data.tobytes()
    assert a.w2.data.tobytes() == b.w2.data.tobytes()
    assert a.loss_trace == b.loss_trace


def test_rank_out_of_range():
    w = DenseTensor(np.ones((4, 3)))
    with pytest.raises(ConfigError):
        anneal_factorize(w, AnnealConfig(rank=4, seed=0))


def test_config_validation():
    with pytest.raises(ConfigError):
        AnnealConfig(rank=0)
    with pytest.raises(ConfigError):
        AnnealConfig(rank=2, decay=0.0)
    with pytest.raises(ConfigError):
        AnnealConfig(rank=2, eta0=-1.0)
    with pytest.raises(ConfigError):
        AnnealConfig(rank=2, max_iters=0)


def test_compressed_matrix_outer_product():
    pair = FactorPair(
        w1=DenseTensor(np.array([[1.0], [2.0]])),
        w2=DenseTensor(np.array([[3.0, 4.0]])),
        final_loss=0.0,
    )
    assert compressed_matrix(pair).data.tolist() == [[3.0, 4.0], [6.0, 8.0]]


def test_compressed_matrix_identity_left_factor():
    w2 = np.random.default_rng(9).standard_normal((2, 4)).astype(np.float32)
    pair = FactorPair(
        w1=DenseTensor(np.eye(2, dtype=np.float32)),
        w2=DenseTensor(w2),
        final_loss=0.0,
    )
    assert np.allclose(compressed_matrix(pair).data, w2)


def test_compressed_matrix_round_trip_loss():
    rng = np.random.default_rng(10)
    w = DenseTensor(rng.standard_normal((8, 8)))
    pair = anneal_factorize(w, AnnealConfig(rank=2, seed=4))
    wc = compressed_matrix(pair)
    assert float(np.sum((w.data.astype(np.float64) - wc.data.astype(np.float64)) ** 2)) == (
        pytest.approx(pair.final_loss, rel=1e-5)
    )
