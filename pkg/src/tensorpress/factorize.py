"""Annealing-style low-rank factorization W ~ W1 @ W2.

Gradient descent on the squared Frobenius reconstruction loss with a
geometrically decaying step size (the annealing schedule) and backtracking:
a step that would increase the loss is retried with the step halved, so
accepted iterates are monotone in loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError, ShapeError
from .tensors import DenseTensor

MAX_HALVINGS = 20


@dataclass(frozen=True)
class AnnealConfig:
    rank: int
    init_scale: float | None = None  # default 1/sqrt(max(m, n)) at run time
    eta0: float | None = None        # default 0.5 / ||W||_F at run time
    decay: float = 0.999
    max_iters: int = 2000
    rel_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError(f"rank must be positive, got {self.rank}")
        if self.init_scale is not None and self.init_scale <= 0:
            raise ConfigError(f"init_scale must be > 0, got {self.init_scale}")
        if self.eta0 is not None and self.eta0 <= 0:
            raise ConfigError(f"eta0 must be > 0, got {self.eta0}")
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError(f"decay must be in (0, 1], got {self.decay}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be positive, got {self.max_iters}")
        if self.rel_tol <= 0:
            raise ConfigError(f"rel_tol must be > 0, got {self.rel_tol}")


@dataclass(frozen=True)
class FactorPair:
    w1: DenseTensor  # m x r
    w2: DenseTensor  # r x n
    final_loss: float
    loss_trace: list[float] = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.w1.shape[1]

    def param_count(self) -> int:
        return self.w1.size + self.w2.size


def _as_matrices(w, w1, w2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a = w.data if isinstance(w, DenseTensor) else np.asarray(w)
    b = w1.data if isinstance(w1, DenseTensor) else np.asarray(w1)
    c = w2.data if isinstance(w2, DenseTensor) else np.asarray(w2)
    if a.ndim != 2 or b.ndim != 2 or c.ndim != 2:
        raise ShapeError("frobenius_loss needs three matrices")
    m, n = a.shape
    if b.shape[0] != m or c.shape[1] != n or b.shape[1] != c.shape[0]:
        raise ShapeError(
            f"shapes not conformable: W {a.shape}, W1 {b.shape}, W2 {c.shape}"
        )
    return (a.astype(np.float64), b.astype(np.float64), c.astype(np.float64))


def frobenius_loss(w, w1, w2) -> float:
    """Squared Frobenius norm of W - W1 @ W2."""
    a, b, c = _as_matrices(w, w1, w2)
    return float(np.sum((a - b @ c) ** 2))


def loss_gradient(w, w1, w2) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of frobenius_loss: (2 R W2^T, 2 W1^T R), R = W1W2 - W."""
    a, b, c = _as_matrices(w, w1, w2)
    resid = b @ c - a
    return 2.0 * resid @ c.T, 2.0 * b.T @ resid


def compressed_matrix(f: FactorPair) -> DenseTensor:
    """The replacement matrix W_c = W1 @ W2."""
    return DenseTensor(f.w1.data.astype(np.float64) @ f.w2.data.astype(np.float64))


def anneal_factorize(w: DenseTensor, cfg: AnnealConfig) -> FactorPair:
    """Fit W ~ W1 @ W2 by decaying-step gradient descent. Deterministic given seed."""
    if len(w.shape) != 2:
        raise ShapeError(f"anneal_factorize needs a 2-axis tensor, got {len(w.shape)}")
    m, n = w.shape
    if cfg.rank > min(m, n):
        raise ConfigError(f"rank {cfg.rank} exceeds min(m, n) = {min(m, n)}")
    a = w.data.astype(np.float64)
    norm = float(np.linalg.norm(a))
    init_scale = cfg.init_scale if cfg.init_scale is not None else 1.0 / np.sqrt(max(m, n))
    eta0 = cfg.eta0 if cfg.eta0 is not None else (0.5 / norm if norm > 0 else 0.5)

    rng = np.random.default_rng(cfg.seed)
    w1 = rng.uniform(-init_scale, init_scale, (m, cfg.rank))
    w2 = rng.uniform(-init_scale, init_scale, (cfg.rank, n))

    loss = float(np.sum((a - w1 @ w2) ** 2))
    trace = [loss]
    for t in range(cfg.max_iters):
        eta = eta0 * cfg.decay**t
        resid = w1 @ w2 - a
        g1 = 2.0 * resid @ w2.T
        g2 = 2.0 * w1.T @ resid
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand1 = w1 - eta * g1
            cand2 = w2 - eta * g2
            cand_loss = float(np.sum((a - cand1 @ cand2) ** 2))
            if not np.isfinite(cand_loss):
                raise DivergenceError(t)
            if cand_loss <= loss:
                accepted = True
                break
            eta /= 2.0
        if not accepted:
            break
        improvement = (loss - cand_loss) / loss if loss > 0 else 0.0
        w1, w2, loss = cand1, cand2, cand_loss
        trace.append(loss)
        if improvement < cfg.rel_tol:
            break
    out1, out2 = DenseTensor(w1), DenseTensor(w2)
    # final_loss reflects the f32 factors actually returned
    return FactorPair(
        w1=out1,
        w2=out2,
        final_loss=frobenius_loss(w, out1, out2),
        loss_trace=trace,
    )
