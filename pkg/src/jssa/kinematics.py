"""Serial-arm kinematics on a discrete-time triple integrator.

Joint state is (theta, theta_dot, theta_ddot); the control input is joint
jerk, held constant over each sampling interval, so propagation is exact.
Forward kinematics places link frames and capsule geometry; translational
point Jacobians and their first/second time derivatives feed the Cartesian
side of the safe-control constraint.

All angles are radians internally.  Jerk bounds quoted in deg/s^3 are
converted at the config boundary.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
import numpy as np

DEG = math.pi / 180.0


class KinematicsError(ValueError):
    """Dimension mismatch or non-finite input to a kinematics operation."""


def _as_vector(x, n: int | None = None, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise KinematicsError(f"{name} must be 1-D, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise KinematicsError(f"{name} must have length {n}, got {v.shape[0]}")
    # a finite sum implies finite entries (inf-inf yields nan and is caught)
    if not math.isfinite(float(np.sum(v))):
        raise KinematicsError(f"{name} has non-finite entries")
    return v


@dataclass(frozen=True)
class JointState:
    """Stacked per-joint position / velocity / acceleration."""

    theta: np.ndarray
    theta_dot: np.ndarray
    theta_ddot: np.ndarray

    def __post_init__(self):
        th = _as_vector(self.theta, None, "theta")
        n = th.shape[0]
        if n < 1:
            raise KinematicsError("joint state needs at least one joint")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "theta_dot", _as_vector(self.theta_dot, n, "theta_dot"))
        object.__setattr__(self, "theta_ddot", _as_vector(self.theta_ddot, n, "theta_ddot"))

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @classmethod
    def rest(cls, theta) -> "JointState":
        th = np.asarray(theta, dtype=float)
        return cls(th, np.zeros_like(th), np.zeros_like(th))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.theta, self.theta_dot, self.theta_ddot])


@dataclass(frozen=True)
class JerkBounds:
    """Per-joint box on the jerk command, u_min <= 0 <= u_max."""

    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        lo = _as_vector(self.u_min, None, "u_min")
        hi = _as_vector(self.u_max, lo.shape[0], "u_max")
        if np.any(lo > 0.0) or np.any(hi < 0.0):
            raise KinematicsError("jerk bounds must satisfy u_min <= 0 <= u_max")
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)

    @property
    def n(self) -> int:
        return self.u_min.shape[0]

    @classmethod
    def symmetric(cls, magnitudes) -> "JerkBounds":
        m = np.abs(np.asarray(magnitudes, dtype=float))
        return cls(-m, m)

    @classmethod
    def symmetric_deg(cls, magnitudes_deg) -> "JerkBounds":
        """Build symmetric bounds from magnitudes given in deg/s^3."""
        return cls.symmetric(np.asarray(magnitudes_deg, dtype=float) * DEG)

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.u_min, self.u_max)

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(u >= self.u_min - tol) and np.all(u <= self.u_max + tol))


# Jerk limits of the reference 6-DOF arm, deg/s^3 per joint.
REFERENCE_JERK_LIMITS_DEG = (3798.0, 3408.0, 3505.0, 7011.0, 7011.0, 10712.0)


def step_joint_state(q: JointState, u, tau: float) -> JointState:
    """Propagate the joint state one step under constant jerk u.

    The update is the exact constant-jerk integral over tau, so it is
    valid for any step size, not only small ones:

        theta'      = theta + tau*theta_dot + tau^2/2*theta_ddot + tau^3/6*u
        theta_dot'  = theta_dot + tau*theta_ddot + tau^2/2*u
        theta_ddot' = theta_ddot + tau*u
    """
    if not (tau > 0.0):
        raise KinematicsError(f"tau must be positive, got {tau}")
    uv = _as_vector(u, q.n, "jerk command")
    t2 = 0.5 * tau * tau
    t3 = tau * tau * tau / 6.0
    return JointState(
        q.theta + tau * q.theta_dot + t2 * q.theta_ddot + t3 * uv,
        q.theta_dot + tau * q.theta_ddot + t2 * uv,
        q.theta_ddot + tau * uv,
    )


# ---------------------------------------------------------------------------
# chain description


@dataclass(frozen=True)
class JointSpec:
    """One revolute joint: fixed transform from the parent frame, then a
    rotation about `axis` (unit vector in the post-transform frame)."""

    axis: np.ndarray
    origin_xyz: np.ndarray
    origin_rpy: np.ndarray

    def __post_init__(self):
        ax = _as_vector(self.axis, 3, "axis")
        nrm = float(np.linalg.norm(ax))
        if nrm < 1e-12:
            raise KinematicsError("joint axis must be nonzero")
        object.__setattr__(self, "axis", ax / nrm)
        object.__setattr__(self, "origin_xyz", _as_vector(self.origin_xyz, 3, "origin_xyz"))
        object.__setattr__(self, "origin_rpy", _as_vector(self.origin_rpy, 3, "origin_rpy"))


@dataclass(frozen=True)
class CapsuleSpec:
    """Capsule rigidly attached to a link (link 0 is the fixed base)."""

    link: int
    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "p0", _as_vector(self.p0, 3, "p0"))
        object.__setattr__(self, "p1", _as_vector(self.p1, 3, "p1"))
        if not (self.radius > 0.0):
            raise KinematicsError("capsule radius must be positive")


def _rpy_matrix(rpy: np.ndarray) -> np.ndarray:
    r, p, y = rpy
    cr, sr = math.cos(r), math.sin(r)
    cp, sp = math.cos(p), math.sin(p)
    cy, sy = math.cos(y), math.sin(y)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def _axis_cross(axis: np.ndarray) -> np.ndarray:
    x, y, z = axis
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


_EYE3 = np.eye(3)


def _axis_rotations(axis: np.ndarray, angles: np.ndarray, K: np.ndarray = None, K2: np.ndarray = None) -> np.ndarray:
    """Rodrigues rotation about a fixed axis for a batch of angles -> (B,3,3)."""
    if K is None:
        K = _axis_cross(axis)
        K2 = K @ K
    c = np.cos(angles)[:, None, None]
    s = np.sin(angles)[:, None, None]
    return _EYE3[None] + s * K[None] + (1.0 - c) * K2[None]


@dataclass(frozen=True)
class KinematicChain:
    """Serial revolute chain plus its collision capsules.

    The joint count must match the joint-state dimension everywhere; link i
    (1-based) is the body moved by joint i, link 0 is the fixed base.
    """

    joints: tuple[JointSpec, ...]
    capsules: tuple[CapsuleSpec, ...]
    origin_R: np.ndarray = field(repr=False, default=None)  # (n,3,3), precomputed
    axis_K: np.ndarray = field(repr=False, default=None)  # (n,3,3) cross matrices
    axis_K2: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "capsules", tuple(self.capsules))
        n = len(self.joints)
        if n < 1:
            raise KinematicsError("chain needs at least one joint")
        for c in self.capsules:
            if not (0 <= c.link <= n):
                raise KinematicsError(f"capsule link {c.link} out of range 0..{n}")
        R = np.stack([_rpy_matrix(j.origin_rpy) for j in self.joints])
        object.__setattr__(self, "origin_R", R)
        K = np.stack([_axis_cross(j.axis) for j in self.joints])
        object.__setattr__(self, "axis_K", K)
        object.__setattr__(self, "axis_K2", np.einsum("nij,njk->nik", K, K))

    @property
    def n(self) -> int:
        return len(self.joints)

    @classmethod
    def from_config(cls, config: dict) -> "KinematicChain":
        joints = []
        for j in config["joints"]:
            origin = j.get("origin_transform", j.get("origin", {}))
            joints.append(
                JointSpec(
                    axis=np.asarray(j["axis"], dtype=float),
                    origin_xyz=np.asarray(origin.get("xyz", [0, 0, 0]), dtype=float),
                    origin_rpy=np.asarray(origin.get("rpy", [0, 0, 0]), dtype=float),
                )
            )
        capsules = [
            CapsuleSpec(link=int(c["link"]), p0=np.asarray(c["p0"], dtype=float),
                        p1=np.asarray(c["p1"], dtype=float), radius=float(c["radius"]))
            for c in config.get("capsules", [])
        ]
        return cls(joints=tuple(joints), capsules=tuple(capsules))

    def to_config(self) -> dict:
        return {
            "joints": [
                {"axis": j.axis.tolist(),
                 "origin_transform": {"xyz": j.origin_xyz.tolist(), "rpy": j.origin_rpy.tolist()}}
                for j in self.joints
            ],
            "capsules": [
                {"link": c.link, "p0": c.p0.tolist(), "p1": c.p1.tolist(), "radius": c.radius}
                for c in self.capsules
            ],
        }

    @classmethod
    def from_json(cls, path) -> "KinematicChain":
        with open(path) as f:
            return cls.from_config(json.load(f))


@dataclass(frozen=True)
class FkFrames:
    """World poses of every link for a batch of configurations.

    link_R / link_p: pose of link i (after its joint rotation).
    joint_axis / joint_origin: the joint's rotation axis and center in world,
    i.e. what the geometric Jacobian columns are built from.
    """

    link_R: np.ndarray  # (B, n, 3, 3)
    link_p: np.ndarray  # (B, n, 3)
    joint_axis: np.ndarray  # (B, n, 3)
    joint_origin: np.ndarray  # (B, n, 3)


def fk_batch(chain: KinematicChain, thetas: np.ndarray) -> FkFrames:
    """Forward kinematics for thetas of shape (B, n)."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 1:
        thetas = thetas[None]
    B, n = thetas.shape
    if n != chain.n:
        raise KinematicsError(f"theta has {n} joints, chain has {chain.n}")
    link_R = np.empty((B, n, 3, 3))
    link_p = np.empty((B, n, 3))
    axes_w = np.empty((B, n, 3))
    origins_w = np.empty((B, n, 3))
    R = np.broadcast_to(_EYE3, (B, 3, 3))
    p = np.zeros((B, 3))
    for i, joint in enumerate(chain.joints):
        p = p + R @ joint.origin_xyz
        R_pre = R @ chain.origin_R[i]
        axes_w[:, i] = R_pre @ joint.axis
        origins_w[:, i] = p
        R = R_pre @ _axis_rotations(joint.axis, thetas[:, i], chain.axis_K[i], chain.axis_K2[i])
        link_R[:, i] = R
        link_p[:, i] = p
    return FkFrames(link_R, link_p, axes_w, origins_w)


def forward_kinematics(chain: KinematicChain, theta) -> list[tuple[np.ndarray, np.ndarray]]:
    """World pose (R, p) of each link frame for a single configuration."""
    th = _as_vector(theta, chain.n, "theta")
    fk = fk_batch(chain, th[None])
    return [(fk.link_R[0, i], fk.link_p[0, i]) for i in range(chain.n)]


def link_point_world(fk: FkFrames, link: int, local_point: np.ndarray) -> np.ndarray:
    """Map a link-fixed point to world, batched -> (B, 3).

    local_point may be (3,) shared across the batch or (B, 3) per-row.
    """
    local_point = np.asarray(local_point, dtype=float)
    if link == 0:
        return np.broadcast_to(local_point, (fk.link_p.shape[0], 3)).copy()
    if local_point.ndim == 1:
        return (
            np.einsum("bij,j->bi", fk.link_R[:, link - 1], local_point)
            + fk.link_p[:, link - 1]
        )
    return (
        np.einsum("bij,bj->bi", fk.link_R[:, link - 1], local_point)
        + fk.link_p[:, link - 1]
    )


def world_point_local(fk: FkFrames, link: int, world_point: np.ndarray, batch: int = 0) -> np.ndarray:
    """Express a world point in a link frame (single batch entry)."""
    if link == 0:
        return np.asarray(world_point, dtype=float).copy()
    R = fk.link_R[batch, link - 1]
    p = fk.link_p[batch, link - 1]
    return R.T @ (np.asarray(world_point, dtype=float) - p)


def point_jacobian(chain: KinematicChain, fk: FkFrames, link: int, local_point: np.ndarray) -> np.ndarray:
    """Translational point Jacobian (B, 3, n) of a link-fixed point.

    Column i is axis_i x (p - origin_i) for joints i up the chain to the
    owning link, zero beyond it (rotation rows are intentionally absent).
    local_point may be (3,) or (B, 3).
    """
    if not (0 <= link <= chain.n):
        raise KinematicsError(f"link {link} out of range 0..{chain.n}")
    B = fk.link_p.shape[0]
    J = np.zeros((B, 3, chain.n))
    if link == 0:
        return J
    pw = link_point_world(fk, link, local_point)
    rel = pw[:, None, :] - fk.joint_origin[:, :link, :]  # (B, link, 3)
    cols = np.cross(fk.joint_axis[:, :link, :], rel)  # (B, link, 3)
    J[:, :, :link] = np.transpose(cols, (0, 2, 1))
    return J


@dataclass(frozen=True)
class PointJacobianBundle:
    """Point Jacobian with its first and second time derivatives.

    Satisfies v = J theta_dot and a = J theta_ddot + J_dot theta_dot at the
    state it was evaluated for.
    """

    J: np.ndarray  # (3, n)
    J_dot: np.ndarray  # (3, n)
    J_ddot: np.ndarray  # (3, n)
    point: np.ndarray  # (3,) world position of the evaluated point
    link: int
    local_point: np.ndarray


_FD_STEP = 1e-5  # rad, symmetric differences of J along theta_dot / theta_ddot


def bundle_stencil(chain: KinematicChain, q: JointState) -> FkFrames:
    """FK at the five stencil configurations a Jacobian bundle needs.

    Row 0 is the unperturbed configuration, so the result doubles as the
    plain FK of the current state (shared by the collision scan).
    """
    h = _FD_STEP
    thetas = np.stack(
        [
            q.theta,
            q.theta + h * q.theta_dot,
            q.theta - h * q.theta_dot,
            q.theta + h * q.theta_ddot,
            q.theta - h * q.theta_ddot,
        ]
    )
    return fk_batch(chain, thetas)


def point_jacobian_bundle(
    chain: KinematicChain, q: JointState, link: int, local_point, stencil: FkFrames | None = None
) -> PointJacobianBundle:
    """Evaluate J, dJ/dt and d2J/dt2 for a link-fixed point.

    J is the analytic geometric Jacobian.  Its time derivatives follow from
    the chain rule along the motion implied by (theta_dot, theta_ddot):

        dJ/dt   = dJ/dtheta [theta_dot]
        d2J/dt2 = d2J/dtheta2 [theta_dot, theta_dot] + dJ/dtheta [theta_ddot]

    with the directional derivatives taken by symmetric finite differences
    of the analytic J (step 1e-5 rad).
    """
    local = _as_vector(local_point, 3, "local_point")
    h = _FD_STEP
    fk = stencil if stencil is not None else bundle_stencil(chain, q)
    Js = point_jacobian(chain, fk, link, local)
    J0 = Js[0]
    J_dot = (Js[1] - Js[2]) / (2.0 * h)
    J_ddot = (Js[1] - 2.0 * J0 + Js[2]) / (h * h) + (Js[3] - Js[4]) / (2.0 * h)
    point = link_point_world(fk, link, local)[0]
    return PointJacobianBundle(J0, J_dot, J_ddot, point, link, local)


def cartesian_jerk_of_point(bundle: PointJacobianBundle, q: JointState, u) -> np.ndarray:
    """Cartesian jerk of the bundled point under joint jerk u:
    j = J_ddot theta_dot + 2 J_dot theta_ddot + J u."""
    uv = _as_vector(u, q.n, "jerk command")
    return bundle.J_ddot @ q.theta_dot + 2.0 * bundle.J_dot @ q.theta_ddot + bundle.J @ uv


def point_kinematics(bundle: PointJacobianBundle, q: JointState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(p, v, a) of the bundled point: v = J qd, a = J qdd + J_dot qd."""
    v = bundle.J @ q.theta_dot
    a = bundle.J @ q.theta_ddot + bundle.J_dot @ q.theta_dot
    return bundle.point.copy(), v, a


# ---------------------------------------------------------------------------
# reference arm (geometry is approximate: a plausible 6-DOF industrial-arm
# layout; nothing downstream depends on exact link lengths)


def default_arm() -> KinematicChain:
    z = np.zeros(3)
    joints = (
        JointSpec(axis=np.array([0.0, 0.0, 1.0]), origin_xyz=np.array([0.0, 0.0, 0.330]), origin_rpy=z),
        JointSpec(axis=np.array([0.0, 1.0, 0.0]), origin_xyz=np.array([0.050, 0.0, 0.0]), origin_rpy=z),
        JointSpec(axis=np.array([0.0, 1.0, 0.0]), origin_xyz=np.array([0.0, 0.0, 0.330]), origin_rpy=z),
        JointSpec(axis=np.array([1.0, 0.0, 0.0]), origin_xyz=np.array([0.035, 0.0, 0.035]), origin_rpy=z),
        JointSpec(axis=np.array([0.0, 1.0, 0.0]), origin_xyz=np.array([0.300, 0.0, 0.0]), origin_rpy=z),
        JointSpec(axis=np.array([1.0, 0.0, 0.0]), origin_xyz=np.array([0.080, 0.0, 0.0]), origin_rpy=z),
    )
    capsules = (
        CapsuleSpec(link=0, p0=np.array([0.0, 0.0, 0.05]), p1=np.array([0.0, 0.0, 0.30]), radius=0.080),
        CapsuleSpec(link=2, p0=np.array([0.0, 0.0, 0.0]), p1=np.array([0.0, 0.0, 0.330]), radius=0.060),
        CapsuleSpec(link=3, p0=np.array([0.0, 0.0, 0.035]), p1=np.array([0.335, 0.0, 0.035]), radius=0.050),
        CapsuleSpec(link=5, p0=np.array([-0.050, 0.0, 0.0]), p1=np.array([0.050, 0.0, 0.0]), radius=0.050),
        CapsuleSpec(link=6, p0=np.array([0.0, 0.0, 0.0]), p1=np.array([0.090, 0.0, 0.0]), radius=0.045),
    )
    return KinematicChain(joints=joints, capsules=capsules)


# Home posture used by the shipped scenarios: elbow up, tool pointing +x.
HOME_THETA = np.array([0.0, 0.35, -0.40, 0.0, -0.55, 0.0])
