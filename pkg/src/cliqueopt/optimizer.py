"""Augmented Lagrangian outer loop over a Gauss-Newton Newton inner loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kinematics as kin
from .banded import FactorizationError, banded_cholesky_solve
from .objective import assemble, clique_order
from .trajectory import CliqueIndexing, Trajectory

log = logging.getLogger(__name__)

TERMINATIONS = ("converged", "max-iter", "line-search-failure", "solver-failure")


@dataclass(frozen=True)
class ConstraintTerm:
    """Per-configuration constraint rows attached to some time steps.

    ``fun(q) -> (..., r)``, ``jac(q) -> (..., r, d)`` and optionally
    ``gn_hess(q) -> (..., r, d, d)`` (a PSD curvature part per row).
    ``times`` is ``None`` (every free configuration ``q_1 .. q_{T+1}``),
    ``"final"`` (``q_T``) or explicit configuration indices.
    """

    kind: str
    fun: object
    jac: object
    gn_hess: object = None
    times: object = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("eq", "ineq"):
            raise ValueError("constraint kind must be 'eq' or 'ineq'")

    def indices(self, T: int) -> np.ndarray:
        if self.times is None:
            return np.arange(1, T + 2)
        if isinstance(self.times, str):
            if self.times != "final":
                raise ValueError(f"unknown time attachment {self.times!r}")
            return np.array([T])
        idx = np.asarray(self.times, dtype=int)
        if np.any(idx < 1) or np.any(idx > T + 1):
            raise IndexError("constraint attached outside q_1..q_{T+1}")
        return idx


def obstacle_constraint(chain: kin.KinematicChain, center, radius, margin=0.0, frame="ee", times=None) -> ConstraintTerm:
    """``(radius + margin) - |x(q) - center| <= 0`` for a chain point."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    f = chain.resolve_frame(frame)
    center = np.asarray(center, dtype=float)
    reach = radius + margin

    def fun(q):
        r = kin.point_position(chain, q, f) - center
        return (reach - np.sqrt(np.sum(r * r, axis=-1)))[..., None]

    def jac(q):
        r = kin.point_position(chain, q, f) - center
        n = r / np.sqrt(np.sum(r * r, axis=-1))[..., None]
        return -np.einsum("...i,...id->...d", n, kin.jacobian_point(chain, q, f))[..., None, :]

    return ConstraintTerm("ineq", fun, jac, times=times, name=f"obstacle@{f.name or f.link}")


def goal_constraint(chain: kin.KinematicChain, goal, frame="ee", times="final", curvature="gauss-newton") -> ConstraintTerm:
    """``|x(q_T) - goal|^2 = 0``.

    ``curvature="full"`` adds the second-order map term ``2 sum r_i grad^2 x_i``
    to the ``2 J^T J`` curvature, clipped to its PSD part.  The multiplier of this squared-distance
    constraint grows like ``1/|r|``, so that term stays finite at the solution
    and matters for motions along the redundant directions.
    """
    if curvature not in ("gauss-newton", "full"):
        raise ValueError(f"unknown curvature model {curvature!r}")
    f = chain.resolve_frame(frame)
    goal = np.asarray(goal, dtype=float)

    def fun(q):
        r = kin.point_position(chain, q, f) - goal
        return np.sum(r * r, axis=-1)[..., None]

    def jac(q):
        r = kin.point_position(chain, q, f) - goal
        return 2.0 * np.einsum("...i,...id->...d", r, kin.jacobian_point(chain, q, f))[..., None, :]

    def gn(q):
        J = kin.jacobian_point(chain, q, f)
        G = 2.0 * np.swapaxes(J, -1, -2) @ J
        if curvature == "full":
            r = kin.point_position(chain, q, f) - goal
            G = G + 2.0 * np.einsum("...i,...ide->...de", r, kin.hessian_point(chain, q, f))
            # keep the curvature PSD so the banded factorization needs no shift
            w, V = np.linalg.eigh(G)
            G = (V * np.maximum(w, 0.0)[..., None, :]) @ np.swapaxes(V, -1, -2)
        return G[..., None, :, :]

    return ConstraintTerm("eq", fun, jac, gn, times=times, name="goal")


def joint_limit_constraints(q_min, q_max, times=None) -> list[ConstraintTerm]:
    """``q - q_max <= 0`` and ``q_min - q <= 0`` row-wise."""
    q_min = np.asarray(q_min, dtype=float)
    q_max = np.asarray(q_max, dtype=float)
    if not (np.all(np.isfinite(q_min)) and np.all(np.isfinite(q_max))):
        raise ValueError("joint limits must be finite")
    d = q_min.size
    eye = np.eye(d)

    def jac_of(sign):
        return lambda q: np.broadcast_to(sign * eye, np.shape(q)[:-1] + (d, d))

    return [
        ConstraintTerm("ineq", lambda q: np.asarray(q) - q_max, jac_of(1.0), times=times, name="joint_upper"),
        ConstraintTerm("ineq", lambda q: q_min - np.asarray(q), jac_of(-1.0), times=times, name="joint_lower"),
    ]


@dataclass
class Problem:
    terms: list
    constraints: list = field(default_factory=list)


@dataclass
class SolverConfig:
    tol_g: float = 1e-6
    tol_c: float = 1e-6
    max_inner: int = 100
    max_outer: int = 30
    rho0: float = 10.0
    rho_growth: float = 10.0
    rho_max: float = 1e8
    stall_factor: float = 4.0
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_halvings: int = 30
    shift0: float = 1e-8
    shift_growth: float = 10.0
    shift_max: float = 1e4
    # Newton decrement below this fraction of |f| is treated as converged
    roundoff_floor: float = 1e-14

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown optimizer options {sorted(unknown)}")
        return cls(**d)


@dataclass
class AugLagState:
    """Multiplier estimates (one array per constraint term) and penalty."""

    multipliers: list
    rho: float
    outer_iter: int = 0
    inner_iter: int = 0

    @classmethod
    def initial(cls, constraints, traj: Trajectory, rho0: float) -> "AugLagState":
        lams = [np.zeros_like(_constraint_rows(c, traj, need_jac=False)[1]) for c in constraints]
        return cls(lams, rho0)

    def update(self, constraints, traj: Trajectory):
        for i, c in enumerate(constraints):
            _, h, _ = _constraint_rows(c, traj, need_jac=False)
            if c.kind == "eq":
                self.multipliers[i] = self.multipliers[i] + self.rho * h
            else:
                self.multipliers[i] = np.maximum(0.0, self.multipliers[i] + self.rho * h)


@dataclass
class SolveReport:
    trajectory: Trajectory
    objective_history: list
    violation_history: list
    proxy_history: list
    inner_iterations: int
    outer_iterations: int
    termination: str
    multipliers: list = field(default_factory=list)
    rho: float = 0.0
    shifts: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    cond_estimates: list = field(default_factory=list)
    infeasible: bool = False

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    @property
    def final_violation(self) -> float:
        return self.violation_history[-1] if self.violation_history else 0.0

    def to_dict(self) -> dict:
        tr = self.trajectory
        return {
            "termination": self.termination,
            "infeasible": self.infeasible,
            "inner_iterations": self.inner_iterations,
            "outer_iterations": self.outer_iterations,
            "objective_history": [float(v) for v in self.objective_history],
            "violation_history": [float(v) for v in self.violation_history],
            "proxy_history": [[float(v) for v in run] for run in self.proxy_history],
            "rho": float(self.rho),
            "multipliers": [np.asarray(m).tolist() for m in self.multipliers],
            "shifts": [float(s) for s in self.shifts],
            "backtracks": [int(b) for b in self.backtracks],
            "cond_estimates": [float(c) for c in self.cond_estimates],
            "dt": tr.dt,
            "configs": tr.configs().tolist(),
        }


# -- constraint evaluation -------------------------------------------------


def _constraint_rows(c: ConstraintTerm, traj: Trajectory, need_jac=True):
    idx = c.indices(traj.T)
    Q = traj.configs()[idx]
    h = np.asarray(c.fun(Q), dtype=float)
    J = np.asarray(c.jac(Q), dtype=float) if need_jac else None
    return idx, h, J


def max_violation(constraints, traj: Trajectory) -> float:
    v = 0.0
    for c in constraints:
        _, h, _ = _constraint_rows(c, traj, need_jac=False)
        if h.size == 0:
            continue
        viol = np.abs(h) if c.kind == "eq" else np.maximum(h, 0.0)
        v = max(v, float(viol.max()))
    return v


class ProxyObjective:
    """Objective terms plus augmented-Lagrangian penalties for the constraints."""

    def __init__(self, problem: Problem, traj: Trajectory, multipliers, rho):
        self.terms = problem.terms
        self.constraints = problem.constraints
        self.multipliers = multipliers
        self.rho = rho
        K = clique_order(self.terms)
        self.indexing = CliqueIndexing(K, traj.T)

    def _penalty(self, traj, need):
        value = 0.0
        d = traj.d
        grad = np.zeros((traj.T + 1, d)) if need >= 1 else None
        diag = np.zeros((traj.T + 1, d, d)) if need >= 2 else None
        rho = self.rho
        for c, lam in zip(self.constraints, self.multipliers):
            idx, h, J = _constraint_rows(c, traj, need_jac=need >= 1)
            if c.kind == "eq":
                value += float(np.sum(lam * h + 0.5 * rho * h * h))
                coef = lam + rho * h
                active = np.ones_like(h, dtype=bool)
            else:
                s = np.maximum(0.0, lam + rho * h)
                value += float(np.sum((s * s - lam * lam) / (2.0 * rho)))
                coef = s
                active = (lam + rho * h) > 0
            if need < 1:
                continue
            np.add.at(grad, idx - 1, np.einsum("nr,nrd->nd", coef, J))
            if need < 2:
                continue
            Ja = J * active[..., None]
            blk = rho * np.einsum("nrd,nre->nde", Ja, Ja)
            if c.gn_hess is not None:
                G = np.asarray(c.gn_hess(traj.configs()[idx]), dtype=float)
                blk = blk + np.einsum("nr,nrde->nde", np.maximum(coef, 0.0), G)
            np.add.at(diag, idx - 1, blk)
        return value, grad, diag

    def evaluate(self, traj: Trajectory, need=2):
        asm = assemble(self.terms, traj, self.indexing, need=need)
        pv, pg, pd = self._penalty(traj, need)
        value = asm.value + pv
        if need < 1:
            return value, None, None
        grad = asm.gradient + pg.reshape(-1)
        if need < 2:
            return value, grad, None
        H = asm.H
        H.bands[0] += pd
        return value, grad, H


@dataclass
class InnerResult:
    trajectory: Trajectory
    values: list
    iterations: int
    reason: str
    shifts: list
    backtracks: list
    cond_estimates: list
    grad_norm: float


def newton_inner_loop(proxy: ProxyObjective, traj: Trajectory, config: SolverConfig) -> InnerResult:
    """Gauss-Newton steps from banded solves with Armijo backtracking."""
    shifts, backtracks, conds = [], [], []
    f, g, H = proxy.evaluate(traj)
    values = [float(f)]
    reason = "max-iter"
    it = 0
    while True:
        gnorm = float(np.abs(g).max()) if g.size else 0.0
        if gnorm <= config.tol_g:
            reason = "converged"
            break
        if it >= config.max_inner:
            break
        try:
            p, shift, Ldiag = banded_cholesky_solve(H, -g, config.shift0, config.shift_growth, config.shift_max)
        except FactorizationError as exc:
            log.warning("inner loop: %s", exc)
            reason = "solver-failure"
            break
        shifts.append(shift)
        conds.append(float((Ldiag.max() / Ldiag.min()) ** 2))
        slope = float(g @ p)
        if -slope <= config.roundoff_floor * max(1.0, abs(f)):
            reason = "converged"
            break
        if slope >= 0:
            reason = "line-search-failure"
            break
        x = traj.variables()
        alpha = 1.0
        accepted = False
        for n_back in range(config.max_halvings + 1):
            trial = traj.with_variables(x + alpha * p)
            f_new = proxy.evaluate(trial, need=0)[0]
            if np.isfinite(f_new) and f_new <= f + config.armijo_c * alpha * slope:
                accepted = True
                break
            alpha *= config.shrink
        backtracks.append(n_back)
        if not accepted:
            reason = "line-search-failure"
            break
        traj = trial
        it += 1
        f, g, H = proxy.evaluate(traj)
        values.append(float(f))
    return InnerResult(traj, values, it, reason, shifts, backtracks, conds, gnorm)


def augmented_lagrangian_solve(problem: Problem, traj_init: Trajectory, config: SolverConfig | None = None) -> SolveReport:
    """Alternate inner Newton solves with multiplier and penalty updates."""
    config = config or SolverConfig()
    traj = traj_init
    constraints = list(problem.constraints)
    state = AugLagState.initial(constraints, traj, config.rho0)
    obj_hist, viol_hist, proxy_hist = [], [], []
    shifts, backtracks, conds = [], [], []
    termination = "max-iter"
    prev_viol = np.inf
    while state.outer_iter < config.max_outer:
        state.outer_iter += 1
        proxy = ProxyObjective(problem, traj, state.multipliers, state.rho)
        res = newton_inner_loop(proxy, traj, config)
        traj = res.trajectory
        state.inner_iter += res.iterations
        proxy_hist.append(res.values)
        shifts += res.shifts
        backtracks += res.backtracks
        conds += res.cond_estimates
        obj_hist.append(float(assemble(problem.terms, traj, need=0).value))
        viol = max_violation(constraints, traj)
        viol_hist.append(viol)
        log.debug(
            "outer %d: f=%.6g viol=%.3e rho=%.1e inner=%d (%s)",
            state.outer_iter, obj_hist[-1], viol, state.rho, res.iterations, res.reason,
        )
        if res.reason == "solver-failure":
            termination = res.reason
            break
        # update also at convergence so the reported multipliers satisfy
        # stationarity of the plain Lagrangian
        state.update(constraints, traj)
        if viol <= config.tol_c and res.reason == "converged":
            termination = "converged"
            break
        # a stalled line search only ends this inner solve; it becomes the
        # termination reason if no later inner solve recovers
        termination = "line-search-failure" if res.reason == "line-search-failure" else "max-iter"
        if not constraints:
            break
        if viol > prev_viol / config.stall_factor:
            state.rho = min(config.rho_max, config.rho_growth * state.rho)
        prev_viol = viol
    infeasible = bool(constraints) and viol_hist[-1] > config.tol_c
    return SolveReport(
        trajectory=traj,
        objective_history=obj_hist,
        violation_history=viol_hist,
        proxy_history=proxy_hist,
        inner_iterations=state.inner_iter,
        outer_iterations=state.outer_iter,
        termination=termination,
        multipliers=state.multipliers,
        rho=state.rho,
        shifts=shifts,
        backtracks=backtracks,
        cond_estimates=conds,
        infeasible=infeasible,
    )


def kkt_residual(problem: Problem, report: SolveReport) -> float:
    """``|grad f + sum lambda grad h + sum mu grad g|_inf`` at the final iterate."""
    traj = report.trajectory
    g = assemble(problem.terms, traj, need=1).gradient.reshape(traj.T + 1, traj.d)
    for c, lam in zip(problem.constraints, report.multipliers):
        idx, _, J = _constraint_rows(c, traj)
        np.add.at(g, idx - 1, np.einsum("nr,nrd->nd", lam, J))
    return float(np.abs(g).max())
