"""SVD of the flattened weight matrix, rank truncation, and reconstruction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensors import DenseTensor


@dataclass(frozen=True)
class SvdFactors:
    u: DenseTensor            # m x r
    sigma: tuple[float, ...]  # non-increasing, >= 0
    v: DenseTensor            # n x r
    original_shape: tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.sigma)

    def param_count(self) -> int:
        m, n = self.u.shape[0], self.v.shape[0]
        return self.rank * (m + n + 1)


def svd(w_f: DenseTensor) -> SvdFactors:
    """Full SVD of a 2-axis tensor, rank min(m, n), deterministic sign convention."""
    if len(w_f.shape) != 2:
        raise ShapeError(f"svd needs a 2-axis tensor, got {len(w_f.shape)} axes")
    a = w_f.data.astype(np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("svd input contains non-finite entries")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    v = vt.T
    u, v = _fix_signs(u, v)
    return SvdFactors(
        u=DenseTensor(u),
        sigma=tuple(float(x) for x in s),
        v=DenseTensor(v),
        original_shape=w_f.shape,
    )


def _fix_signs(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # first nonzero entry of each u column made non-negative
    for j in range(u.shape[1]):
        col = u[:, j]
        nz = np.flatnonzero(col)
        if nz.size and col[nz[0]] < 0:
            u[:, j] = -col
            v[:, j] = -v[:, j]
    return u, v


def truncate(f: SvdFactors, r: int) -> SvdFactors:
    """Keep the leading r singular triples."""
    if not 1 <= r <= f.rank:
        raise ConfigError(f"rank {r} out of range [1, {f.rank}]")
    if r == f.rank:
        return f
    return SvdFactors(
        u=DenseTensor(f.u.data[:, :r]),
        sigma=f.sigma[:r],
        v=DenseTensor(f.v.data[:, :r]),
        original_shape=f.original_shape,
    )


def reconstruct(f: SvdFactors) -> DenseTensor:
    """u @ diag(sigma) @ v.T reshaped back to the original shape."""
    u, v = f.u.data, f.v.data
    if u.shape[1] != len(f.sigma) or v.shape[1] != len(f.sigma):
        raise ShapeError(
            f"inconsistent factors: u {u.shape}, v {v.shape}, {len(f.sigma)} sigmas"
        )
    mat = (u.astype(np.float64) * np.asarray(f.sigma)) @ v.astype(np.float64).T
    if int(np.prod(f.original_shape)) != mat.size:
        raise ShapeError(
            f"original shape {f.original_shape} incompatible with {mat.shape} product"
        )
    return DenseTensor(mat.reshape(f.original_shape))
