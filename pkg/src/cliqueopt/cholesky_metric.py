"""Metric-only velocity terms approximated through Cholesky factors.

For ``l = 1/2 |phi(q_t) - phi(q_{t-1})|^2`` where only the pullback metric
``A(q) = J^T J`` is available, ``A = C^T C`` (C upper triangular) differs from
the unknown Jacobian by an orthogonal factor, ``J = U C``.  Linearizing the
map at each endpoint gives the gradient, and ``U_{t-1}^T U_t ~ I`` gives the
cross blocks of the Gauss-Newton Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from . import kinematics as kin
from .objective import CliqueTerm

NEAR_SINGULAR = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    def __init__(self, pivot: int, msg: str = ""):
        self.pivot = pivot
        super().__init__(msg or f"matrix is not positive definite (pivot {pivot})")


class MetricField:
    """``q -> A(q)``, symmetric positive definite; batched over leading axes."""

    smooth = True

    def evaluate(self, q) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, q):
        return self.evaluate(q)


class FunctionMetric(MetricField):
    def __init__(self, fun, smooth=True):
        self._f = fun
        self.smooth = smooth

    def evaluate(self, q):
        q = np.asarray(q, dtype=float)
        if q.ndim == 1:
            return np.asarray(self._f(q), dtype=float)
        flat = q.reshape(-1, q.shape[-1])
        out = np.stack([self._f(x) for x in flat])
        return out.reshape(q.shape[:-1] + out.shape[-2:])


class PullbackMetric(MetricField):
    """``A = J^T J`` of an explicit task map (useful as a reference)."""

    def __init__(self, task_map):
        self.task_map = task_map

    def evaluate(self, q):
        J = self.task_map.jacobian(q)
        return np.swapaxes(J, -1, -2) @ J


class InertiaMetric(MetricField):
    def __init__(self, chain: kin.KinematicChain):
        self.chain = chain

    def evaluate(self, q):
        return kin.inertia_matrix(self.chain, q)


@dataclass(frozen=True)
class CholeskyPair:
    C: np.ndarray
    q: np.ndarray | None = None

    @property
    def A(self) -> np.ndarray:
        return self.C.T @ self.C


def cholesky_factor(A, q=None, jitter: float = 0.0) -> CholeskyPair:
    """Upper-triangular ``C`` with ``A = C^T C`` and a positive diagonal.

    Raises :class:`NotPositiveDefiniteError` naming the failing pivot, also
    when the smallest eigenvalue is at most 1e-10 (treated as singular).
    ``jitter`` adds ``jitter * mean(diag A)`` to the diagonal first; it is
    off by default.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("metric must be a square matrix")
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12):
        raise ValueError("metric is not symmetric")
    A = 0.5 * (A + A.T)
    if jitter:
        A = A + jitter * np.mean(np.diag(A)) * np.eye(len(A))
    C, info = lapack.dpotrf(A, lower=0, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"dpotrf argument {-info} invalid")
    w = np.linalg.eigvalsh(A)
    if w[0] <= NEAR_SINGULAR:
        raise NotPositiveDefiniteError(int(np.argmin(np.diag(C))), f"metric nearly singular (min eigenvalue {w[0]:.3e})")
    return CholeskyPair(np.triu(C), None if q is None else np.asarray(q))


def _metric(metric, q):
    return metric.evaluate(q) if isinstance(metric, MetricField) else np.asarray(metric(q), dtype=float)


def metric_velocity_gradient(metric, q_prev, q_curr) -> np.ndarray:
    """Approximate gradient ``(-A_{t-1} dq; A_t dq)`` of the squared map step."""
    q_prev = np.asarray(q_prev, dtype=float)
    q_curr = np.asarray(q_curr, dtype=float)
    A0, A1 = _metric(metric, q_prev), _metric(metric, q_curr)
    cholesky_factor(A0)
    cholesky_factor(A1)
    dq = q_curr - q_prev
    return np.concatenate([-A0 @ dq, A1 @ dq])


def metric_velocity_gn_hessian(metric, q_prev, q_curr) -> np.ndarray:
    """``[[A_{t-1}, -C_{t-1}^T C_t], [-C_t^T C_{t-1}, A_t]]``, exactly symmetric."""
    A0, A1 = _metric(metric, q_prev), _metric(metric, q_curr)
    C0, C1 = cholesky_factor(A0).C, cholesky_factor(A1).C
    off = -C0.T @ C1
    d = len(A0)
    H = np.empty((2 * d, 2 * d))
    H[:d, :d] = 0.5 * (A0 + A0.T)
    H[d:, d:] = 0.5 * (A1 + A1.T)
    H[:d, d:] = off
    H[d:, :d] = off.T
    return H


def metric_velocity_value(metric, q_prev, q_curr) -> float:
    """``1/2 dq^T (A_{t-1} + A_t)/2 dq``, the trapezoid estimate of the step energy."""
    dq = np.asarray(q_curr, dtype=float) - np.asarray(q_prev, dtype=float)
    Abar = 0.5 * (_metric(metric, q_prev) + _metric(metric, q_curr))
    return 0.5 * float(dq @ Abar @ dq)


class MetricVelocityTerm(CliqueTerm):
    """``w/2 |phi(q_t) - phi(q_{t-1})|^2 / dt`` from the metric alone.

    Uses window slots 0 and 1.  ``jitter`` (relative to the mean diagonal) is
    applied before factorizing; 0 disables it.
    """

    order = 1

    def __init__(self, metric: MetricField, weight: float, dt: float, jitter=1e-8, times=None, dim=None):
        if weight < 0:
            raise ValueError("weight must be nonnegative")
        self.metric = metric
        self.weight = float(weight)
        self.dt = float(dt)
        self.jitter = jitter
        self.integrated = True
        self.times = None if times is None else tuple(times)
        if dim is None:
            dim = getattr(getattr(metric, "chain", None), "dof", None)
        if dim is None:
            dim = getattr(getattr(metric, "task_map", None), "d", None)
        self.dim = dim

    def _factors(self, A):
        d = A.shape[-1]
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
        if self.jitter:
            scale = np.trace(A, axis1=-2, axis2=-1)[..., None, None] / d
            A = A + self.jitter * scale * np.eye(d)
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            # re-run per point for a pivot-level diagnosis
            for a in A.reshape(-1, d, d):
                cholesky_factor(a)
            raise
        return A, np.swapaxes(L, -1, -2)

    def evaluate(self, W, need=2):
        W = np.asarray(W, dtype=float)
        nc, n, d = W.shape
        s = self.weight / self.dt
        A, C = self._factors(self.metric.evaluate(W[:, :2]))
        A0, A1 = A[:, 0], A[:, 1]
        dq = W[:, 1] - W[:, 0]
        Abar = 0.5 * (A0 + A1)
        values = 0.5 * s * np.einsum("ci,cij,cj->c", dq, Abar, dq)
        if need < 1:
            return values, None, None
        grads = np.zeros((nc, n, d))
        grads[:, 0] = -s * np.einsum("cij,cj->ci", A0, dq)
        grads[:, 1] = s * np.einsum("cij,cj->ci", A1, dq)
        if need < 2:
            return values, grads, None
        C0, C1 = C[:, 0], C[:, 1]
        off = -np.swapaxes(C0, -1, -2) @ C1
        H = np.zeros((nc, n * d, n * d))
        H[:, :d, :d] = A0
        H[:, d : 2 * d, d : 2 * d] = A1
        H[:, :d, d : 2 * d] = off
        H[:, d : 2 * d, :d] = np.swapaxes(off, -1, -2)
        return values, grads, s * H
