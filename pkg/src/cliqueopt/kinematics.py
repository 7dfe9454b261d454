"""Serial revolute chains, rigid-body inertial maps and inertia conversions.

All chain evaluations accept a single configuration ``(d,)`` or a batch
``(..., d)`` and broadcast over the leading axes.  Computations are written
without conjugation or absolute values so complex inputs propagate
holomorphically; the complex-step Hessian oracle relies on this.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHAIN_FILE_VERSION = 1


class NonRealizableInertiaWarning(UserWarning):
    """A distributional inertia diagonal came out negative."""


def skew(v) -> np.ndarray:
    v = np.asarray(v)
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _cross(a, b):
    # np.cross broadcasting without conj; fine for complex
    a, b = np.broadcast_arrays(a, b)
    out = np.empty(a.shape, dtype=np.result_type(a, b))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def rotation_about(axis, angle) -> np.ndarray:
    """Rodrigues rotation, batched over ``angle``."""
    K = skew(axis)
    angle = np.asarray(angle)
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def rpy_matrix(roll, pitch, yaw) -> np.ndarray:
    rx = rotation_about([1.0, 0.0, 0.0], roll)
    ry = rotation_about([0.0, 1.0, 0.0], pitch)
    rz = rotation_about([0.0, 0.0, 1.0], yaw)
    return rz @ ry @ rx


def _orthonormal(R, what):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"{what} must be 3x3")
    if not np.allclose(R.T @ R, np.eye(3), atol=1e-10) or np.linalg.det(R) < 0:
        raise ValueError(f"{what} must be a proper rotation")
    return R


@dataclass(frozen=True)
class Joint:
    """Revolute joint: fixed offset from the parent link, then rotation about ``axis``."""

    axis: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    name: str = ""
    limits: tuple[float, float] | None = None

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError(f"joint axis must be a unit 3-vector, got {axis}")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        object.__setattr__(self, "rotation", _orthonormal(self.rotation, "joint rotation"))
        if self.limits is not None:
            lo, hi = self.limits
            if not lo < hi:
                raise ValueError("joint limits need lo < hi")
            object.__setattr__(self, "limits", (float(lo), float(hi)))


@dataclass(frozen=True)
class RigidBodySpec:
    """Mass and distributional inertia diagonal ``b`` along principal axes.

    ``com`` and the columns of ``axes`` (principal directions e_1*, e_2*,
    e_3*) are expressed in the frame of link ``link`` (-1 for the base).
    """

    mass: float
    b: np.ndarray
    link: int
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    axes: np.ndarray = field(default_factory=lambda: np.eye(3))
    name: str = ""
    shape: object = None

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if not self.mass > 0:
            raise ValueError("body mass must be positive")
        if b.shape != (3,) or np.any(b < 0):
            raise ValueError("b must be three nonnegative entries")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float))
        object.__setattr__(self, "axes", _orthonormal(self.axes, "body axes"))

    @property
    def inertia(self) -> np.ndarray:
        """Traditional inertia tensor about the COM in principal coordinates."""
        return traditional_from_distributional(np.diag(self.b))


@dataclass(frozen=True)
class Frame:
    """Named point (and orientation) rigidly attached to a link."""

    name: str
    link: int
    point: np.ndarray = field(default_factory=lambda: np.zeros(3))
    axes: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "axes", _orthonormal(self.axes, "frame axes"))


@dataclass(frozen=True)
class FramePose:
    origin: np.ndarray
    axes: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.axes)
        if np.isrealobj(R):
            if not np.allclose(R.T @ R, np.eye(3), atol=1e-10):
                raise ValueError("frame axes are not orthonormal")
            if not np.allclose(np.cross(R[:, 0], R[:, 1]), R[:, 2], atol=1e-10):
                raise ValueError("frame axes are not right-handed")


@dataclass(frozen=True)
class ChainState:
    """Batched link kinematics for one or more configurations."""

    R: np.ndarray  # (..., n, 3, 3) link rotations
    p: np.ndarray  # (..., n, 3) link origins (= joint origins)
    axes: np.ndarray  # (..., n, 3) world joint axes


class KinematicChain:
    """Serial chain of revolute joints with attached bodies and named frames."""

    def __init__(self, joints, bodies=(), frames=(), name: str = ""):
        self.joints = tuple(joints)
        self.bodies = tuple(bodies)
        self.frames = {f.name: f for f in frames}
        self.name = name
        self._axes = np.array([j.axis for j in self.joints]).reshape(-1, 3)
        K = np.array([skew(a) for a in self._axes]).reshape(-1, 3, 3)
        self._fixed = np.array([j.rotation for j in self.joints]).reshape(-1, 3, 3)
        self._fixed_K = self._fixed @ K
        self._fixed_KK = self._fixed @ K @ K
        self._offsets = np.array([j.translation for j in self.joints]).reshape(-1, 3, 1)
        for body in self.bodies:
            self._check_link(body.link)
        for f in self.frames.values():
            self._check_link(f.link)

    @property
    def dof(self) -> int:
        return len(self.joints)

    def _check_link(self, link):
        if not -1 <= link < self.dof:
            raise ValueError(f"link index {link} outside -1..{self.dof - 1}")

    @property
    def limits(self):
        lo = np.array([j.limits[0] if j.limits else -np.inf for j in self.joints])
        hi = np.array([j.limits[1] if j.limits else np.inf for j in self.joints])
        return lo, hi

    def state(self, q) -> ChainState:
        q = np.asarray(q)
        if q.shape[-1] != self.dof:
            raise ValueError(f"configuration has {q.shape[-1]} entries, chain has {self.dof} joints")
        dtype = np.result_type(q, float)
        batch = q.shape[:-1]
        s = np.sin(q)[..., None, None]
        c = np.cos(q)[..., None, None]
        # fixed offset rotation followed by the joint rotation, all joints at once
        local = self._fixed + s * self._fixed_K + (1.0 - c) * self._fixed_KK
        R = np.broadcast_to(np.eye(3, dtype=dtype), batch + (3, 3))
        p = np.zeros(batch + (3, 1), dtype=dtype)
        Rs = np.empty(batch + (self.dof, 3, 3), dtype=dtype)
        ps = np.empty(batch + (self.dof, 3), dtype=dtype)
        for i in range(self.dof):
            p = p + R @ self._offsets[i]
            R = R @ local[..., i, :, :]
            Rs[..., i, :, :] = R
            ps[..., i, :] = p[..., 0]
        # the joint rotation leaves its own axis fixed
        world_axes = (Rs @ self._axes[:, :, None])[..., 0]
        return ChainState(Rs, ps, world_axes)

    def resolve_frame(self, frame) -> Frame:
        if isinstance(frame, Frame):
            return frame
        if isinstance(frame, str):
            try:
                return self.frames[frame]
            except KeyError:
                raise KeyError(f"chain has no frame named {frame!r}") from None
        link, point = frame
        self._check_link(link)
        return Frame("", int(link), point)


def _link_pose(st: ChainState, link: int, dtype):
    if link < 0:
        batch = st.p.shape[:-2]
        return np.broadcast_to(np.eye(3, dtype=dtype), batch + (3, 3)), np.zeros(batch + (3,), dtype)
    return st.R[..., link, :, :], st.p[..., link, :]


def _point(st, link, local, dtype):
    R, p = _link_pose(st, link, dtype)
    return p + np.einsum("...ij,j->...i", R, local)


def _mask(chain, link):
    return (np.arange(chain.dof) <= link).astype(float)


def forward_kinematics(chain: KinematicChain, q) -> dict[str, FramePose]:
    """World poses of every link frame, body COM frame and named frame."""
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise ValueError(f"expected a configuration of length {chain.dof}")
    st = chain.state(q)
    out = {}
    for i, joint in enumerate(chain.joints):
        out[joint.name or f"link{i}"] = FramePose(st.p[i], st.R[i])
    for k, body in enumerate(chain.bodies):
        R, p = _link_pose(st, body.link, float)
        out[f"body:{body.name or k}"] = FramePose(p + R @ body.com, R @ body.axes)
    for name, f in chain.frames.items():
        R, p = _link_pose(st, f.link, float)
        out[name] = FramePose(p + R @ f.point, R @ f.axes)
    return out


def point_position(chain: KinematicChain, q, frame) -> np.ndarray:
    f = chain.resolve_frame(frame)
    q = np.asarray(q)
    st = chain.state(q)
    return _point(st, f.link, f.point, np.result_type(q, float))


def jacobian_point(chain: KinematicChain, q, frame) -> np.ndarray:
    """``(..., 3, d)`` Jacobian of a link-fixed point; column j is a_j x (p - o_j)."""
    f = chain.resolve_frame(frame)
    q = np.asarray(q)
    st = chain.state(q)
    p = _point(st, f.link, f.point, np.result_type(q, float))
    cols = _cross(st.axes, p[..., None, :] - st.p) * _mask(chain, f.link)[:, None]
    return np.swapaxes(cols, -1, -2)


def hessian_point(chain: KinematicChain, q, frame) -> np.ndarray:
    """``(..., 3, d, d)`` second derivatives of a link-fixed point.

    Entry ``[:, j, k]`` is ``a_m x (a_n x (p - o_n))`` with ``m = min(j, k)``
    and ``n = max(j, k)``.
    """
    f = chain.resolve_frame(frame)
    q = np.asarray(q)
    st = chain.state(q)
    p = _point(st, f.link, f.point, np.result_type(q, float))
    mask = _mask(chain, f.link)
    cols = _cross(st.axes, p[..., None, :] - st.p) * mask[:, None]  # (..., d, 3)
    # inner[..., m, n, :] = a_m x cols[n]
    inner = _cross(st.axes[..., :, None, :], cols[..., None, :, :]) * mask[:, None, None]
    upper = np.triu(np.ones((chain.dof, chain.dof)))
    H = inner * upper[..., None]
    H = H + np.swapaxes(H, -2, -3) * (1 - np.eye(chain.dof))[..., None]
    return np.moveaxis(H, -1, -3)


def jacobian_axis(chain: KinematicChain, q, body: int, i: int) -> np.ndarray:
    """``(..., 3, d)`` Jacobian of principal axis ``i`` (1-based) of ``body``."""
    if i not in (1, 2, 3):
        raise ValueError("axis index must be 1, 2 or 3")
    rb = chain.bodies[body]
    q = np.asarray(q)
    dtype = np.result_type(q, float)
    st = chain.state(q)
    R, _ = _link_pose(st, rb.link, dtype)
    e = np.einsum("...ij,j->...i", R, rb.axes[:, i - 1])
    cols = _cross(st.axes, np.broadcast_to(e[..., None, :], st.axes.shape)) * _mask(chain, rb.link)[:, None]
    return np.swapaxes(cols, -1, -2)


def _body_frames(chain, st, dtype):
    for rb in chain.bodies:
        R, p = _link_pose(st, rb.link, dtype)
        xc = p + R @ rb.com
        yield rb, xc, R @ rb.axes  # columns are e_i*


def inertial_map(chain: KinematicChain, q) -> np.ndarray:
    """Stacked ``[sqrt(M) x_c; sqrt(b_i) e_i*]`` per body, 12 entries each."""
    q = np.asarray(q)
    if not chain.bodies:
        raise ValueError("chain has no registered bodies")
    dtype = np.result_type(q, float)
    parts = []
    for rb, xc, E in _body_frames(chain, chain.state(q), dtype):
        parts.append(np.sqrt(rb.mass) * xc)
        parts.append((np.swapaxes(E, -1, -2) * np.sqrt(rb.b)[:, None]).reshape(E.shape[:-2] + (9,)))
    return np.concatenate(parts, axis=-1)


def inertial_map_jacobian(chain: KinematicChain, q) -> np.ndarray:
    q = np.asarray(q)
    if not chain.bodies:
        raise ValueError("chain has no registered bodies")
    dtype = np.result_type(q, float)
    st = chain.state(q)
    parts = []
    for rb, xc, E in _body_frames(chain, st, dtype):
        mask = _mask(chain, rb.link)[:, None]
        parts.append(np.sqrt(rb.mass) * _cross(st.axes, xc[..., None, :] - st.p) * mask)
        for i in range(3):
            parts.append(np.sqrt(rb.b[i]) * _cross(st.axes, E[..., None, :, i]) * mask)
    # parts hold (..., d, 3) column stacks
    return np.swapaxes(np.concatenate(parts, axis=-1), -1, -2)


def inertia_matrix(chain: KinematicChain, q) -> np.ndarray:
    """Generalized inertia ``M(q) = J^T J`` of the rigid-body inertial map."""
    J = inertial_map_jacobian(chain, q)
    return np.swapaxes(J, -1, -2) @ J


def kinetic_energy(chain: KinematicChain, q, qdot) -> float:
    v = inertial_map_jacobian(chain, q) @ np.asarray(qdot)
    return 0.5 * float(v @ v)


def kinetic_energy_minimal(chain: KinematicChain, q, qdot) -> float:
    """Kinetic energy from ``(x_c, e_1*, e_2*)`` alone with ``e_3* = e_1* x e_2*``."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    total = 0.0
    st = chain.state(q)
    for rb, xc, E in _body_frames(chain, st, float):
        w = (st.axes * _mask(chain, rb.link)[:, None]).T @ qdot  # angular velocity
        xd = np.cross(w, xc) - ((_cross(st.axes, st.p) * _mask(chain, rb.link)[:, None]).T @ qdot)
        e1, e2 = E[:, 0], E[:, 1]
        e1d, e2d = np.cross(w, e1), np.cross(w, e2)
        e3d = np.cross(e1d, e2) + np.cross(e1, e2d)
        total += 0.5 * rb.mass * xd @ xd
        total += 0.5 * (rb.b[0] * e1d @ e1d + rb.b[1] * e2d @ e2d + rb.b[2] * e3d @ e3d)
    return total


# -- inertia conversions ----------------------------------------------------


def _symmetric(A, what):
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise ValueError(f"{what} must be 3x3")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError(f"{what} must be symmetric")
    return A


def distributional_from_traditional(I) -> np.ndarray:
    """``B_ii = (I_jj + I_kk - I_ii) / 2`` and ``B_ij = -I_ij``."""
    I = _symmetric(I, "inertia tensor")
    B = -I.copy()
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        B[i, i] = 0.5 * (I[j, j] + I[k, k] - I[i, i])
    if np.any(np.diag(B) < 0):
        warnings.warn(
            f"distributional diagonal {np.diag(B)} is negative: not a realizable mass distribution",
            NonRealizableInertiaWarning,
            stacklevel=2,
        )
    return B


def traditional_from_distributional(B) -> np.ndarray:
    """``I_ii = B_jj + B_kk`` and ``I_ij = -B_ij``."""
    B = _symmetric(B, "distributional inertia")
    I = -B.copy()
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        I[i, i] = B[j, j] + B[k, k]
    return I


def principal_axes(B):
    """Eigen-decompose a full B into ``(b, axes)`` with right-handed axes."""
    B = _symmetric(B, "distributional inertia")
    b, V = np.linalg.eigh(B)
    if np.linalg.det(V) < 0:
        V[:, 2] = -V[:, 2]
    return b, V


# -- shapes (uniform density) ----------------------------------------------


@dataclass(frozen=True)
class Cylinder:
    """Uniform solid cylinder; principal axis 1 runs along its length."""

    mass: float
    length: float
    radius: float

    @property
    def b(self) -> np.ndarray:
        return np.array([self.mass * self.length**2 / 12.0, self.mass * self.radius**2 / 4.0, self.mass * self.radius**2 / 4.0])

    def sample(self, n, rng):
        u1 = rng.uniform(-0.5 * self.length, 0.5 * self.length, n)
        r = self.radius * np.sqrt(rng.uniform(0.0, 1.0, n))
        th = rng.uniform(0.0, 2 * np.pi, n)
        return np.column_stack([u1, r * np.cos(th), r * np.sin(th)])


@dataclass(frozen=True)
class Box:
    mass: float
    extents: tuple[float, float, float]

    @property
    def b(self) -> np.ndarray:
        return self.mass * np.square(np.asarray(self.extents, dtype=float)) / 12.0

    def sample(self, n, rng):
        half = 0.5 * np.asarray(self.extents, dtype=float)
        return rng.uniform(-half, half, (n, 3))


@dataclass(frozen=True)
class Sphere:
    mass: float
    radius: float

    @property
    def b(self) -> np.ndarray:
        return np.full(3, self.mass * self.radius**2 / 5.0)

    def sample(self, n, rng):
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * self.radius * rng.uniform(0.0, 1.0, n)[:, None] ** (1.0 / 3.0)


SHAPES = {"cylinder": Cylinder, "box": Box, "sphere": Sphere}


def sampled_energy_oracle(shape, pose: FramePose, linear_velocity, angular_velocity, n_samples=100_000, rng=None) -> float:
    """Monte-Carlo ``1/2 int rho |xdot|^2`` over a uniformly dense shape.

    ``pose`` places the shape's principal COM frame in the world; particle
    velocities are ``v + w x (x - x_c)``.
    """
    if not hasattr(shape, "sample"):
        raise TypeError(f"unsupported shape {type(shape).__name__}")
    if n_samples < 1000:
        raise ValueError("use at least 1e3 samples")
    rng = np.random.default_rng(rng)
    u = shape.sample(n_samples, rng)
    r = u @ np.asarray(pose.axes).T
    v = np.asarray(linear_velocity, dtype=float) + np.cross(np.asarray(angular_velocity, dtype=float), r)
    return 0.5 * shape.mass * float(np.mean(np.einsum("ij,ij->i", v, v)))


# -- chain files -----------------------------------------------------------


def _body_from_dict(d):
    shape = None
    if "shape" in d:
        sd = dict(d["shape"])
        kind = sd.pop("type")
        if kind not in SHAPES:
            raise ValueError(f"unknown shape type {kind!r}")
        shape = SHAPES[kind](mass=d["mass"], **sd)
    b = d.get("b")
    if b is None:
        if shape is None:
            raise ValueError("body needs either 'b' or 'shape'")
        b = shape.b * d.get("b_scale", 1.0)
    return RigidBodySpec(
        mass=d["mass"],
        b=b,
        link=d["link"],
        com=d.get("com", [0.0, 0.0, 0.0]),
        axes=np.asarray(d.get("axes", np.eye(3))),
        name=d.get("name", ""),
        shape=shape,
    )


def chain_from_dict(data: dict) -> KinematicChain:
    version = data.get("version")
    if version != CHAIN_FILE_VERSION:
        raise ValueError(f"unsupported chain file version {version!r}")
    joints = []
    for jd in data["joints"]:
        if "rpy" in jd:
            rot = rpy_matrix(*jd["rpy"])
        else:
            rot = np.asarray(jd.get("rotation", np.eye(3)))
        joints.append(
            Joint(
                axis=jd["axis"],
                translation=jd.get("translation", [0.0, 0.0, 0.0]),
                rotation=rot,
                name=jd.get("name", ""),
                limits=tuple(jd["limits"]) if jd.get("limits") else None,
            )
        )
    bodies = [_body_from_dict(bd) for bd in data.get("bodies", [])]
    frames = [
        Frame(fd["name"], fd["link"], fd.get("point", [0.0, 0.0, 0.0]), np.asarray(fd.get("axes", np.eye(3))))
        for fd in data.get("frames", [])
    ]
    return KinematicChain(joints, bodies, frames, name=data.get("name", ""))


def chain_to_dict(chain: KinematicChain) -> dict:
    def joint(j):
        d = {"name": j.name, "axis": j.axis.tolist(), "translation": j.translation.tolist(), "rotation": j.rotation.tolist()}
        if j.limits:
            d["limits"] = list(j.limits)
        return d

    def body(rb):
        return {"name": rb.name, "link": rb.link, "mass": rb.mass, "b": rb.b.tolist(), "com": rb.com.tolist(), "axes": rb.axes.tolist()}

    return {
        "version": CHAIN_FILE_VERSION,
        "name": chain.name,
        "joints": [joint(j) for j in chain.joints],
        "bodies": [body(rb) for rb in chain.bodies],
        "frames": [{"name": f.name, "link": f.link, "point": f.point.tolist(), "axes": f.axes.tolist()} for f in chain.frames.values()],
    }


def load_chain(path) -> KinematicChain:
    with open(path) as fh:
        return chain_from_dict(json.load(fh))


def save_chain(chain: KinematicChain, path):
    Path(path).write_text(json.dumps(chain_to_dict(chain), indent=2))


# -- stock chains ----------------------------------------------------------

# principal axis 1 along the link's local z
_ALONG_Z = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
_ALONG_X = np.eye(3)

ARM_CYLINDER = Cylinder(mass=9.0, length=0.5, radius=0.12)
SHOULDER = Cylinder(mass=2.0, length=0.2, radius=0.08)
FINGER = Cylinder(mass=0.1, length=0.1, radius=0.01)
X, Y, Z = np.eye(3)


def planar_two_link(l1=1.0, l2=1.0, m1=None, m2=None) -> KinematicChain:
    """Two revolute joints about z with unit links along x; frame 'ee' at the tip."""
    joints = [Joint(Z, name="j0"), Joint(Z, translation=[l1, 0, 0], name="j1")]
    bodies = []
    if m1:
        bodies.append(RigidBodySpec(m1, np.zeros(3), 0, com=[l1, 0, 0], name="m1"))
    if m2:
        bodies.append(RigidBodySpec(m2, np.zeros(3), 1, com=[l2, 0, 0], name="m2"))
    return KinematicChain(joints, bodies, [Frame("ee", 1, [l2, 0, 0])], name="planar_two_link")


def pendulum(mass=1.0, length=1.0) -> KinematicChain:
    return KinematicChain(
        [Joint(Z, name="j0")],
        [RigidBodySpec(mass, np.zeros(3), 0, com=[length, 0, 0], name="bob")],
        [Frame("ee", 0, [length, 0, 0])],
        name="pendulum",
    )


def three_joint_arm() -> KinematicChain:
    """Yaw-pitch-pitch arm carrying two 9 kg cylinders as upper arm and forearm."""
    c = ARM_CYLINDER
    joints = [
        Joint(Z, name="yaw", limits=(-np.pi, np.pi)),
        Joint(Y, translation=[0, 0, 0.3], name="shoulder", limits=(-2.0, 2.0)),
        Joint(Y, translation=[0.5, 0, 0], name="elbow", limits=(-2.5, 2.5)),
    ]
    bodies = [
        RigidBodySpec(c.mass, c.b, 1, com=[0.25, 0, 0], axes=_ALONG_X, name="upper_arm", shape=c),
        RigidBodySpec(c.mass, c.b, 2, com=[0.25, 0, 0], axes=_ALONG_X, name="forearm", shape=c),
    ]
    return KinematicChain(joints, bodies, [Frame("ee", 2, [0.5, 0, 0])], name="three_joint_arm")


def desk_arm(dof: int = 8) -> KinematicChain:
    """Seven-joint lightweight-arm layout plus a finger joint.

    Axes alternate z/y with coincident shoulder and wrist joint pairs (0.31 m
    base, 0.4 m upper arm, 0.39 m forearm, 0.078 m flange).  Upper arm and
    forearm are 9 kg, 0.5 m x 0.12 m cylinders; the hand has the same
    b-profile scaled to 0.9 kg.  ``dof=8`` adds a finger pitch joint at the
    flange whose tip is frame ``ee``.  A light shoulder housing and finger
    keep ``M(q)`` positive definite (otherwise the finger and, at zero
    shoulder pitch, the first and third joints move no mass).
    """
    if dof < 4:
        raise ValueError("desk arm needs at least 4 joints")
    c = ARM_CYLINDER
    offsets = [0.0, 0.31, 0.2, 0.2, 0.2, 0.19, 0.0, 0.078]
    limits = [(-2.9, 2.9), (-2.0, 2.0), (-2.9, 2.9), (-2.0, 2.0), (-2.9, 2.9), (-2.0, 2.0), (-2.9, 2.9), (-1.5, 1.5)]
    joints = []
    for i in range(dof):
        off = offsets[i] if i < len(offsets) else 0.06
        lim = limits[i] if i < len(limits) else (-1.5, 1.5)
        joints.append(Joint(Z if i % 2 == 0 else Y, translation=[0, 0, off], name=f"j{i}", limits=lim))
    hand_link = min(6, dof - 1)
    bodies = [
        RigidBodySpec(SHOULDER.mass, SHOULDER.b, 1, axes=_ALONG_Z, name="shoulder", shape=SHOULDER),
        # link 2 and link 4 origins sit mid-way along upper arm and forearm
        RigidBodySpec(c.mass, c.b, 2, axes=_ALONG_Z, name="upper_arm", shape=c),
        RigidBodySpec(c.mass, c.b, min(4, dof - 1), axes=_ALONG_Z, name="forearm", shape=c),
        RigidBodySpec(0.9, 0.1 * c.b, hand_link, com=[0, 0, 0.12], axes=_ALONG_Z, name="hand"),
    ]
    if dof > 7:
        bodies.append(RigidBodySpec(FINGER.mass, FINGER.b, dof - 1, com=[0, 0, 0.05], axes=_ALONG_Z, name="finger", shape=FINGER))
    return KinematicChain(joints, bodies, [Frame("ee", dof - 1, [0, 0, 0.1])], name=f"desk_arm_{dof}dof")


BUILTIN_CHAINS = {
    "planar_two_link": planar_two_link,
    "pendulum": pendulum,
    "three_joint_arm": three_joint_arm,
    "desk_arm": desk_arm,
}


def get_chain(spec) -> KinematicChain:
    """Resolve a chain from an instance, ``builtin:<name>`` or a JSON file path."""
    if isinstance(spec, KinematicChain):
        return spec
    spec = str(spec)
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_CHAINS:
            raise ValueError(f"unknown builtin chain {name!r}")
        return BUILTIN_CHAINS[name]()
    return load_chain(spec)
