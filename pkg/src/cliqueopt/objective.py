"""Clique objective terms, trajectory-wide assembly and the true-Hessian oracle.

Every term evaluates a batch of clique windows ``W`` of shape
``(n_cliques, n, d)`` (``n`` configurations per window) and returns per-clique
values, gradients ``(n_cliques, n, d)`` and Gauss-Newton Hessians
``(n_cliques, n*d, n*d)``.  Terms of order ``k < n - 1`` use the first
``k + 1`` slots of the window (right zero-padding).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kinematics as kin
from .banded import BlockBandedMatrix
from .trajectory import CliqueIndexing, Trajectory, make_fd_operator


class FDBreakdownError(RuntimeError):
    """Finite-difference Hessian too asymmetric to trust (bad step size)."""


# -- task maps -------------------------------------------------------------


class TaskMap:
    """``phi: R^d -> R^m`` evaluated on batches ``(..., d)``."""

    d: int
    m: int

    def map(self, q):
        raise NotImplementedError

    def jacobian(self, q):
        raise NotImplementedError


class IdentityMap(TaskMap):
    def __init__(self, d: int):
        self.d = self.m = d

    def map(self, q):
        return np.asarray(q)

    def jacobian(self, q):
        q = np.asarray(q)
        return np.broadcast_to(np.eye(self.d), q.shape[:-1] + (self.d, self.d))


class AffineMap(TaskMap):
    def __init__(self, A, b=None):
        self.A = np.asarray(A, dtype=float)
        self.m, self.d = self.A.shape
        self.b = np.zeros(self.m) if b is None else np.asarray(b, dtype=float)

    def map(self, q):
        return np.asarray(q) @ self.A.T + self.b

    def jacobian(self, q):
        q = np.asarray(q)
        return np.broadcast_to(self.A, q.shape[:-1] + self.A.shape)


class PointMap(TaskMap):
    """World position of a chain frame (forward kinematics)."""

    def __init__(self, chain: kin.KinematicChain, frame="ee"):
        self.chain = chain
        self.frame = chain.resolve_frame(frame)
        self.d, self.m = chain.dof, 3

    def map(self, q):
        return kin.point_position(self.chain, q, self.frame)

    def jacobian(self, q):
        return kin.jacobian_point(self.chain, q, self.frame)


class InertialMap(TaskMap):
    """Rigid-body inertial map: its squared velocity is the kinetic energy."""

    def __init__(self, chain: kin.KinematicChain):
        if not chain.bodies:
            raise ValueError("chain has no registered bodies")
        self.chain = chain
        self.d, self.m = chain.dof, 12 * len(chain.bodies)

    def map(self, q):
        return kin.inertial_map(self.chain, q)

    def jacobian(self, q):
        return kin.inertial_map_jacobian(self.chain, q)


class FunctionMap(TaskMap):
    def __init__(self, fun, jac, d, m):
        self._f, self._j = fun, jac
        self.d, self.m = d, m

    def map(self, q):
        return self._f(q)

    def jacobian(self, q):
        return self._j(q)


# -- clique terms ----------------------------------------------------------


class CliqueTerm:
    """Objective term on clique windows.

    ``order`` is the highest configuration offset the term reads; ``times``
    restricts it to some cliques (1-based, negative counts from the end).
    """

    order = 0
    weight = 1.0
    integrated = False
    times = None
    dim = None
    exact_gn = False

    def evaluate(self, W, need=2):
        """Return ``(values, grads, hessians)``; entries past ``need`` are None."""
        raise NotImplementedError

    def _window(self, qc):
        qc = np.asarray(qc)
        if qc.ndim == 1:
            qc = qc.reshape(-1, self.dim)
        if qc.shape[0] < self.order + 1:
            raise ValueError(f"clique of {qc.shape[0]} too short for order {self.order}")
        return qc[None]

    def value(self, qc) -> float:
        return self.evaluate(self._window(qc), need=0)[0][0]

    def gradient(self, qc) -> np.ndarray:
        return self.evaluate(self._window(qc), need=1)[1][0].reshape(-1)

    def gn_hessian(self, qc) -> np.ndarray:
        return self.evaluate(self._window(qc), need=2)[2][0]


def _slot(n):
    # configuration the single-configuration terms act on: q_t sits at
    # offset 1 of the window (tau_t = t - 1) whenever the window has room
    return min(1, n - 1)


class SquaredDerivativeTerm(CliqueTerm):
    """``(w / 2) |D^(k) phi(q^c)|^2 (* dt)``."""

    def __init__(self, task_map: TaskMap, k: int, weight: float, dt: float, integrated=True, times=None, sigma=None):
        if weight < 0:
            raise ValueError("weight must be nonnegative")
        self.op = make_fd_operator(k, dt, sigma)
        self.task_map = task_map
        self.order = k
        self.weight = float(weight)
        self.dt = float(dt)
        self.integrated = integrated
        self.times = None if times is None else tuple(times)
        self.dim = task_map.d
        self.exact_gn = isinstance(task_map, (IdentityMap, AffineMap))

    @property
    def scale(self):
        return self.weight * (self.dt if self.integrated else 1.0)

    def evaluate(self, W, need=2):
        W = np.asarray(W)
        nc, n, d = W.shape
        coeff = self.op.padded(n)
        used = np.flatnonzero(coeff)
        sub = W[:, used]
        Z = self.task_map.map(sub)  # (nc, u, m)
        V = np.einsum("i,cim->cm", coeff[used], Z)
        s = self.scale
        values = 0.5 * s * np.einsum("cm,cm->c", V, V)
        if need < 1:
            return values, None, None
        J = self.task_map.jacobian(sub)  # (nc, u, m, d)
        A = coeff[used][None, :, None, None] * J
        grads = np.zeros((nc, n, d), dtype=np.result_type(W, float))
        grads[:, used] = s * np.einsum("cimd,cm->cid", A, V)
        if need < 2:
            return values, grads, None
        G = np.zeros((nc, A.shape[2], n, d), dtype=A.dtype)
        G[:, :, used] = np.swapaxes(A, 1, 2)
        G = G.reshape(nc, A.shape[2], n * d)
        H = s * np.einsum("cmi,cmj->cij", G, G)
        return values, grads, H


class PostureTerm(CliqueTerm):
    """``(w / 2) |q - q_default|^2`` on the clique's own configuration."""

    def __init__(self, q_default, weight=1.0, times=None, dt=None):
        self.q_default = np.asarray(q_default, dtype=float)
        self.dim = self.q_default.size
        self.weight = float(weight)
        self.times = None if times is None else tuple(times)
        self.integrated = dt is not None
        self.dt = 1.0 if dt is None else float(dt)
        self.exact_gn = True
        self.order = 0

    def evaluate(self, W, need=2):
        W = np.asarray(W)
        nc, n, d = W.shape
        if d != self.dim:
            raise ValueError("posture dimension mismatch")
        a = _slot(n)
        s = self.weight * self.dt
        r = W[:, a] - self.q_default
        values = 0.5 * s * np.einsum("ci,ci->c", r, r)
        if need < 1:
            return values, None, None
        grads = np.zeros((nc, n, d), dtype=np.result_type(W, float))
        grads[:, a] = s * r
        if need < 2:
            return values, grads, None
        H = np.zeros((nc, n * d, n * d))
        idx = a * d + np.arange(d)
        H[:, idx, idx] = s
        return values, grads, H


class JointLimitPenalty(CliqueTerm):
    """``w * sum_i max(0, q_i - (q_max - eps), (q_min + eps) - q_i)^2``."""

    def __init__(self, q_min, q_max, margin=0.0, weight=1.0, times=None):
        self.q_min = np.asarray(q_min, dtype=float)
        self.q_max = np.asarray(q_max, dtype=float)
        if np.any(self.q_min >= self.q_max):
            raise ValueError("need q_min < q_max")
        if margin < 0:
            raise ValueError("margin must be nonnegative")
        self.margin = float(margin)
        self.weight = float(weight)
        self.dim = self.q_min.size
        self.times = None if times is None else tuple(times)
        self.exact_gn = True
        self.order = 0

    def _hinge(self, q):
        upper = q - (self.q_max - self.margin)
        lower = (self.q_min + self.margin) - q
        # at most one side is positive when the margins do not overlap
        return np.where(np.real(upper) > 0, upper, 0.0) - np.where(np.real(lower) > 0, lower, 0.0)

    def evaluate(self, W, need=2):
        W = np.asarray(W)
        nc, n, d = W.shape
        a = _slot(n)
        h = self._hinge(W[:, a])
        values = self.weight * np.einsum("ci,ci->c", h, h)
        if need < 1:
            return values, None, None
        grads = np.zeros((nc, n, d), dtype=np.result_type(W, float))
        grads[:, a] = 2.0 * self.weight * h
        if need < 2:
            return values, grads, None
        H = np.zeros((nc, n * d, n * d))
        idx = a * d + np.arange(d)
        H[:, idx, idx] = 2.0 * self.weight * (np.real(h) != 0)
        return values, grads, H


def squared_derivative_term(phi: TaskMap, k: int, weight: float, dt: float, **kw) -> SquaredDerivativeTerm:
    if k not in (1, 2) and kw.get("sigma") is None:
        raise ValueError(f"unsupported derivative order {k}")
    return SquaredDerivativeTerm(phi, k, weight, dt, **kw)


def kinetic_energy_term(chain: kin.KinematicChain, weight: float, dt: float, formulation="exact", **kw) -> CliqueTerm:
    """Kinetic energy integrated along the trajectory.

    ``exact`` squares velocities through the inertial map; ``cholesky`` uses
    the metric-only approximation built from factorizations of ``M(q)``.
    """
    if formulation == "exact":
        return SquaredDerivativeTerm(InertialMap(chain), 1, weight, dt, **kw)
    if formulation == "cholesky":
        from .cholesky_metric import InertiaMetric, MetricVelocityTerm

        return MetricVelocityTerm(InertiaMetric(chain), weight, dt, **kw)
    raise ValueError(f"unknown kinetic energy formulation {formulation!r}")


def config_penalty_terms(alpha1: float, alpha2: float, dt: float, d: int, times=None) -> list[CliqueTerm]:
    """``alpha1 |qdot|^2 + alpha2 |qddot|^2`` integrated over the trajectory."""
    if alpha1 < 0 or alpha2 < 0:
        raise ValueError("penalty weights must be nonnegative")
    ident = IdentityMap(d)
    return [
        SquaredDerivativeTerm(ident, 1, 2.0 * alpha1, dt, times=times),
        SquaredDerivativeTerm(ident, 2, 2.0 * alpha2, dt, times=times),
    ]


def posture_term(q_default, weight=1.0, **kw) -> PostureTerm:
    return PostureTerm(q_default, weight, **kw)


def joint_limit_penalty(q_min, q_max, margin=0.0, weight=1.0, **kw) -> JointLimitPenalty:
    return JointLimitPenalty(q_min, q_max, margin, weight, **kw)


# -- assembly --------------------------------------------------------------


@dataclass
class Assembly:
    value: float
    gradient: np.ndarray
    H: BlockBandedMatrix | None


def clique_order(terms) -> int:
    return max((t.order for t in terms), default=0)


def assemble(terms, traj: Trajectory, indexing: CliqueIndexing | None = None, need=2) -> Assembly:
    """Sum per-clique values, gradients and Gauss-Newton Hessians.

    Gradient and Hessian are over the free variables ``q_1 .. q_{T+1}``;
    anything touching the fixed prefix is dropped.
    """
    terms = list(terms)
    if indexing is None:
        indexing = CliqueIndexing(clique_order(terms), traj.T)
    if indexing.T != traj.T:
        raise ValueError("indexing horizon does not match the trajectory")
    X = traj.configs()
    d = traj.d
    dtype = np.result_type(X, float)
    n = indexing.width
    windows = indexing.windows(X)
    value = 0.0
    grad = np.zeros((traj.T + 2, d), dtype=dtype) if need >= 1 else None
    H = BlockBandedMatrix(traj.T + 1, d, indexing.K, dtype) if need >= 2 else None
    for term in terms:
        if term.order > indexing.K:
            raise ValueError(f"term of order {term.order} exceeds clique order {indexing.K}")
        if term.dim is not None and term.dim != d:
            raise ValueError(f"term dimension {term.dim} does not match trajectory dimension {d}")
        pos = indexing.resolve(term.times)
        vals, grads, hess = term.evaluate(windows[pos], need)
        value = value + vals.sum()
        if need < 1:
            continue
        for a in range(n):
            np.add.at(grad, pos + a, grads[:, a])
        if need < 2:
            continue
        hess = hess.reshape(len(pos), n, d, n, d)
        for a in range(n):
            for b in range(a + 1):
                rows = pos + a  # configuration index of slot a
                cols = pos + b
                keep = cols > 0  # rows >= cols, so this drops all prefix blocks
                if not np.any(keep):
                    continue
                blk = hess[keep, a, :, b, :]
                # block (rows-1, cols-1) of the variable matrix; band = a - b
                np.add.at(H.bands[a - b], cols[keep] - 1, blk)
    g = grad[1:].reshape(-1) if need >= 1 else None
    return Assembly(value, g, H)


def objective_value(terms, traj: Trajectory, indexing=None) -> float:
    return assemble(terms, traj, indexing, need=0).value


# -- true Hessian oracle ---------------------------------------------------


@dataclass
class HessianComparison:
    t: int
    H_true: np.ndarray
    H_gn: np.ndarray
    err: float


def _gradient_block(terms, traj, j, x_block, indexing):
    X = traj.configs().astype(np.result_type(x_block, float))
    X[j] = x_block
    tr = Trajectory.from_configs(X, traj.dt)
    g = assemble(terms, tr, indexing, need=1).gradient
    return g.reshape(traj.T + 1, traj.d)


def true_hessian_block(terms, traj: Trajectory, j: int, method="complex", h=None, indexing=None, rows=None):
    """Column-by-column Hessian of the assembled objective w.r.t. ``q_j``.

    Returns the ``(T + 1, d, d)`` stack of blocks ``d grad_{q_i} / d q_j``.
    ``complex`` uses the complex step on the analytic gradient (no
    subtractive cancellation); ``central`` uses central differences with
    step ``h`` (default ``max(1e-4, 1e-4 |q|_inf)``).
    """
    if not 1 <= j <= traj.T + 1:
        raise IndexError(f"configuration index {j} outside 1..{traj.T + 1}")
    q = traj.configs()[j].astype(float)
    d = traj.d
    cols = []
    if method == "complex":
        step = 1e-30
        for c in range(d):
            xq = q.astype(complex)
            xq[c] += 1j * step
            cols.append(_gradient_block(terms, traj, j, xq, indexing).imag / step)
    elif method == "central":
        step = max(1e-4, 1e-4 * np.abs(q).max()) if h is None else h
        for c in range(d):
            e = np.zeros(d)
            e[c] = step
            gp = _gradient_block(terms, traj, j, q + e, indexing)
            gm = _gradient_block(terms, traj, j, q - e, indexing)
            cols.append((gp - gm) / (2 * step))
    else:
        raise ValueError(f"unknown Hessian method {method!r}")
    return np.stack(cols, axis=-1)  # (T+1, d, d): [i, :, c]


def full_hessian_fd(terms, traj: Trajectory, t: int, k_scale=None, method="complex", h=None, asym_tol=1e-3, indexing=None) -> HessianComparison:
    """Compare the true and Gauss-Newton diagonal blocks for ``q_t``.

    Both blocks are scaled by ``dt^(2k) / (S_k dt)`` so they approach a finite
    nonzero limit for trajectory-integrated terms; the normalized error
    ``|H - H_gn|_F / |H|_F`` is scale free.
    """
    terms = list(terms)
    if k_scale is None:
        k_scale = min((tm.order for tm in terms if isinstance(tm, SquaredDerivativeTerm)), default=0)
    blocks = true_hessian_block(terms, traj, t, method, h, indexing)
    H_true = blocks[t - 1]
    asym = np.linalg.norm(H_true - H_true.T) / max(np.linalg.norm(H_true), 1e-300)
    if asym > asym_tol:
        raise FDBreakdownError(f"finite-difference Hessian asymmetry {asym:.2e} at t={t}")
    H_true = 0.5 * (H_true + H_true.T)
    H_gn = assemble(terms, traj, indexing).H.block(t - 1, t - 1)
    if k_scale > 0:
        scale = traj.dt ** (2 * k_scale) / (make_fd_operator(k_scale, traj.dt).S_k * traj.dt)
    else:
        scale = 1.0
    H_true, H_gn = scale * H_true, scale * np.array(H_gn)
    denom = np.linalg.norm(H_true)
    err = float(np.linalg.norm(H_true - H_gn) / denom) if denom > 0 else 0.0
    return HessianComparison(t, H_true, H_gn, err)


def check_term_gradient(term: CliqueTerm, qc, h=1e-6) -> float:
    """Relative error between a term's gradient and central differences of its value."""
    qc = np.asarray(qc, dtype=float).reshape(-1)
    g = term.gradient(qc)
    fd = np.zeros_like(qc)
    for i in range(qc.size):
        e = np.zeros_like(qc)
        e[i] = h
        fd[i] = (term.value(qc + e) - term.value(qc - e)) / (2 * h)
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12))
