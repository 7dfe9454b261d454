"""Discrete trajectories, clique windows and finite-difference stencils.

A trajectory holds a fixed prefix configuration ``q_0``, ``T`` free
configurations ``q_1 .. q_T`` and one extra free suffix configuration
``q_{T+1}``.  The optimization variable is the stack ``(q_1; ...; q_{T+1})``.

Cliques are windows of ``K + 1`` consecutive configurations.  Clique ``t``
(1-based) starts at configuration index ``tau_t = t - 1``; the number of
cliques is ``T + 2 - K`` so the windows exactly tile ``q_0 .. q_{T+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .banded import BlockBandedMatrix

# Forward stencils anchored at the clique start.
DEFAULT_STENCILS: dict[int, tuple[float, ...]] = {
    1: (-1.0, 1.0),
    2: (1.0, -2.0, 1.0),
}


def _readonly(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FiniteDiffOperator:
    """Blockwise stencil ``D^(k) = [sigma_0 I, ..., sigma_k I] / dt^k``."""

    k: int
    dt: float
    sigma: tuple[float, ...]

    @property
    def scale(self) -> float:
        return 1.0 / self.dt**self.k

    @property
    def coefficients(self) -> np.ndarray:
        return np.asarray(self.sigma, dtype=float) * self.scale

    @property
    def S_k(self) -> float:
        return float(np.sum(np.square(self.sigma)))

    @property
    def alpha(self) -> np.ndarray:
        # alpha_i = sigma_{k-i}^2 / S_k, i.e. the reversed squared stencil
        return np.square(np.asarray(self.sigma[::-1], dtype=float)) / self.S_k

    def padded(self, n: int) -> np.ndarray:
        """Coefficients zero-padded on the right to a window of ``n``."""
        if n < self.k + 1:
            raise ValueError(f"window of {n} too small for order {self.k}")
        out = np.zeros(n)
        out[: self.k + 1] = self.coefficients
        return out


def make_fd_operator(k: int, dt: float, sigma=None) -> FiniteDiffOperator:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if sigma is None:
        if k not in DEFAULT_STENCILS:
            raise ValueError(f"no default stencil for order {k}; pass sigma")
        sigma = DEFAULT_STENCILS[k]
    sigma = tuple(float(s) for s in sigma)
    if len(sigma) != k + 1:
        raise ValueError(f"order {k} stencil needs {k + 1} coefficients")
    return FiniteDiffOperator(k=k, dt=float(dt), sigma=sigma)


def apply_fd(op: FiniteDiffOperator, clique) -> np.ndarray:
    """Return ``sum_i sigma_i / dt^k * z_{tau+i}`` over the clique entries."""
    try:
        z = np.asarray(clique)
    except ValueError as exc:  # ragged input
        raise ValueError("clique entries have mismatched dimensions") from exc
    if z.dtype == object:
        raise ValueError("clique entries have mismatched dimensions")
    if z.ndim == 1:
        z = z[:, None]
        return (op.padded(len(z)) @ z)[0]
    return op.padded(len(z)) @ z


@dataclass(frozen=True)
class Trajectory:
    """Fixed prefix, ``T`` free states and one free suffix configuration."""

    q_prefix: np.ndarray
    states: np.ndarray
    q_suffix: np.ndarray
    dt: float

    def __post_init__(self):
        prefix = np.asarray(self.q_prefix)
        states = np.asarray(self.states)
        suffix = np.asarray(self.q_suffix)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if states.ndim != 2 or states.shape[0] < 1:
            raise ValueError("states must be a (T, d) array with T >= 1")
        d = states.shape[1]
        if prefix.shape != (d,) or suffix.shape != (d,):
            raise ValueError("prefix/suffix dimension does not match states")
        object.__setattr__(self, "q_prefix", _readonly(prefix))
        object.__setattr__(self, "states", _readonly(states))
        object.__setattr__(self, "q_suffix", _readonly(suffix))

    @property
    def T(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def n_vars(self) -> int:
        return (self.T + 1) * self.d

    def configs(self) -> np.ndarray:
        """All configurations ``q_0 .. q_{T+1}`` as a ``(T + 2, d)`` array."""
        return np.vstack([self.q_prefix, self.states, self.q_suffix])

    def variables(self) -> np.ndarray:
        return self.configs()[1:].reshape(-1)

    def with_variables(self, x) -> "Trajectory":
        x = np.asarray(x).reshape(self.T + 1, self.d)
        return Trajectory(self.q_prefix, x[:-1], x[-1], self.dt)

    @classmethod
    def from_configs(cls, configs, dt: float) -> "Trajectory":
        configs = np.asarray(configs)
        if configs.ndim != 2 or configs.shape[0] < 3:
            raise ValueError("need at least q_0, q_1 and the suffix")
        return cls(configs[0], configs[1:-1], configs[-1], dt)

    @classmethod
    def zero_motion(cls, q_start, T: int, dt: float) -> "Trajectory":
        q_start = np.asarray(q_start, dtype=float)
        return cls.from_configs(np.tile(q_start, (T + 2, 1)), dt)


@dataclass(frozen=True)
class CliqueIndexing:
    """Clique windows of ``K + 1`` configurations over a horizon of ``T``."""

    K: int
    T: int
    _n: int = field(init=False, repr=False)

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("clique order must be nonnegative")
        if self.T < 1:
            raise ValueError("T must be positive")
        if self.K > self.T + 1:
            raise ValueError(f"clique order {self.K} too large for T={self.T}")
        object.__setattr__(self, "_n", self.T + 2 - self.K)

    @property
    def width(self) -> int:
        return self.K + 1

    @property
    def n_cliques(self) -> int:
        return self._n

    def tau(self, t: int) -> int:
        self._check(t)
        return t - 1

    def window(self, t: int) -> range:
        start = self.tau(t)
        return range(start, start + self.K + 1)

    def cliques_containing(self, j: int) -> list[int]:
        """Clique indices whose window includes configuration ``j``."""
        return [t for t in range(1, self._n + 1) if t - 1 <= j <= t - 1 + self.K]

    def resolve(self, times) -> np.ndarray:
        """0-based clique positions for ``times`` (1-based, negatives from the end)."""
        if times is None:
            return np.arange(self._n)
        pos = []
        for t in times:
            t = int(t)
            if t < 0:
                t = self._n + 1 + t
            self._check(t)
            pos.append(t - 1)
        return np.unique(pos)

    def windows(self, configs: np.ndarray) -> np.ndarray:
        """Stack every clique window of a ``(T + 2, d)`` array: ``(n, K + 1, d)``."""
        configs = np.asarray(configs)
        if configs.shape[0] != self.T + 2:
            raise ValueError("configuration count does not match the indexing")
        idx = np.arange(self._n)[:, None] + np.arange(self.K + 1)[None, :]
        return configs[idx]

    def _check(self, t):
        if not 1 <= t <= self._n:
            raise IndexError(f"clique index {t} outside 1..{self._n}")


def extract_clique(traj: Trajectory, t: int, indexing: CliqueIndexing) -> np.ndarray:
    """Stacked clique vector ``(q_tau; ...; q_{tau+K})``."""
    if indexing.T != traj.T:
        raise ValueError("indexing horizon does not match the trajectory")
    w = indexing.window(t)
    return traj.configs()[w.start : w.stop].reshape(-1)


def scatter_clique(block, t: int, target, indexing: CliqueIndexing, d: int):
    """Accumulate a clique-local gradient or Hessian into global coordinates.

    ``target`` is either the flat ``(T + 1) * d`` gradient or a
    :class:`BlockBandedMatrix`.  Entries touching the fixed prefix are dropped.
    """
    block = np.asarray(block)
    n = indexing.width
    start = indexing.tau(t)
    if block.ndim == 1:
        if block.shape != (n * d,):
            raise ValueError(f"gradient block must have length {n * d}")
        g = block.reshape(n, d)
        for a in range(n):
            j = start + a
            if j == 0:
                continue
            target[(j - 1) * d : j * d] += g[a]
        return target
    if block.shape != (n * d, n * d):
        raise ValueError(f"Hessian block must be {n * d}x{n * d}")
    if not isinstance(target, BlockBandedMatrix):
        raise TypeError("Hessian target must be a BlockBandedMatrix")
    for a in range(n):
        ja = start + a
        if ja == 0:
            continue
        for b in range(a + 1):
            jb = start + b
            if jb == 0:
                continue
            target.add_block(ja - 1, jb - 1, block[a * d : (a + 1) * d, b * d : (b + 1) * d])
    return target
