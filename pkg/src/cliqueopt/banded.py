"""Symmetric block-banded matrices and a regularized banded Cholesky solve."""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded


class FactorizationError(RuntimeError):
    """Raised when the shifted matrix stays indefinite up to the shift cap."""


class BlockBandedMatrix:
    """Symmetric matrix of ``n_blocks x n_blocks`` blocks of size ``d``.

    Only the lower band is stored: ``bands[b, j]`` is block ``(j + b, j)``.
    """

    def __init__(self, n_blocks: int, block_size: int, bandwidth: int, dtype=float):
        self.n_blocks = n_blocks
        self.d = block_size
        self.bandwidth = bandwidth
        self.bands = np.zeros((bandwidth + 1, n_blocks, block_size, block_size), dtype=dtype)

    @property
    def shape(self):
        n = self.n_blocks * self.d
        return (n, n)

    def add_block(self, i: int, j: int, block):
        """``A[i, j] += block`` (and the mirrored transpose)."""
        if i < j:
            i, j = j, i
            block = np.asarray(block).T
        b = i - j
        if b > self.bandwidth or i >= self.n_blocks or j < 0:
            raise IndexError(f"block ({i}, {j}) outside the band")
        self.bands[b, j] += block

    def block(self, i: int, j: int) -> np.ndarray:
        if i < j:
            return self.block(j, i).T
        b = i - j
        if b > self.bandwidth:
            return np.zeros((self.d, self.d), dtype=self.bands.dtype)
        return self.bands[b, j]

    def to_dense(self) -> np.ndarray:
        d = self.d
        A = np.zeros(self.shape, dtype=self.bands.dtype)
        for b in range(self.bandwidth + 1):
            for j in range(self.n_blocks - b):
                i = j + b
                blk = self.bands[b, j]
                A[i * d : (i + 1) * d, j * d : (j + 1) * d] = blk
                if b:
                    A[j * d : (j + 1) * d, i * d : (i + 1) * d] = blk.T
        return A

    def matvec(self, x) -> np.ndarray:
        return self.to_dense() @ np.asarray(x)

    def lower_band(self) -> np.ndarray:
        """LAPACK lower band storage ``ab[i - j, j] = A[i, j]``."""
        d, nb = self.d, self.n_blocks
        n = nb * d
        u = (self.bandwidth + 1) * d - 1
        ab = np.zeros((u + 1, n), dtype=self.bands.dtype)
        cols = np.arange(nb) * d
        for b in range(self.bandwidth + 1):
            valid = nb - b
            for r in range(d):
                for c in range(d):
                    off = b * d + r - c
                    if off < 0:
                        continue
                    ab[off, cols[:valid] + c] = self.bands[b, :valid, r, c]
        return ab

    def copy(self) -> "BlockBandedMatrix":
        out = BlockBandedMatrix(self.n_blocks, self.d, self.bandwidth, self.bands.dtype)
        out.bands[...] = self.bands
        return out

    @classmethod
    def from_dense(cls, A, block_size: int, bandwidth: int) -> "BlockBandedMatrix":
        A = np.asarray(A)
        nb = A.shape[0] // block_size
        out = cls(nb, block_size, bandwidth, A.dtype)
        d = block_size
        for b in range(bandwidth + 1):
            for j in range(nb - b):
                i = j + b
                out.bands[b, j] = A[i * d : (i + 1) * d, j * d : (j + 1) * d]
        return out


def banded_cholesky_solve(H: BlockBandedMatrix, rhs, shift0=1e-8, growth=10.0, max_shift=1e4):
    """Solve ``(H + shift I) x = rhs`` with a banded Cholesky factorization.

    The Levenberg shift starts at ``shift0`` and grows by ``growth`` on each
    failed factorization.  Returns ``(x, shift, L_diag)`` where ``L_diag`` is
    the diagonal of the Cholesky factor (useful as a conditioning estimate).
    """
    ab = H.lower_band()
    rhs = np.asarray(rhs, dtype=float)
    shift = shift0
    while True:
        shifted = ab.copy()
        shifted[0] += shift
        try:
            cb = cholesky_banded(shifted, lower=True, check_finite=True)
        except (LinAlgError, ValueError):
            # a zero starting shift escalates from a tiny one
            shift = shift * growth if shift > 0 else 1e-12
            if shift > max_shift:
                raise FactorizationError(f"matrix not positive definite with shift up to {max_shift:g}")
            continue
        x = cho_solve_banded((cb, True), rhs)
        return x, shift, cb[0].copy()
