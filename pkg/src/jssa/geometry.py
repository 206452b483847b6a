"""Capsule collision geometry.

Robot and agent bodies are capsule sets (segment + radius).  The safeguard
constrains the single closest robot/agent pair, so the operations here are:
minimum distance between two capsules with the witness points, the global
critical pair over a scene, and the time derivatives of the separation
distance from the relative state of the witness points.

Distances between capsule *surfaces* subtract both radii and may be
negative in penetration.  Derivative formulas act on the segment (core)
points; radii are constant so the same derivatives apply to the surface
distance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kinematics import (
    JointState,
    KinematicChain,
    FkFrames,
    PointJacobianBundle,
    fk_batch,
    link_point_world,
    point_jacobian_bundle,
    point_kinematics,
    world_point_local,
)


def _first_row(fk: FkFrames) -> FkFrames:
    return FkFrames(fk.link_R[:1], fk.link_p[:1], fk.joint_axis[:1], fk.joint_origin[:1])

CORE_DISTANCE_EPS = 1e-9  # below this the separation direction is undefined

_PARALLEL_EPS = 1e-10


class DegenerateDistance(Exception):
    """Witness points (nearly) coincide; d and its derivatives are undefined."""


@dataclass(frozen=True)
class Capsule:
    """Line segment swept by a sphere. p0 == p1 gives a sphere."""

    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float)
        p1 = np.asarray(self.p1, dtype=float)
        if p0.shape != (3,) or p1.shape != (3,):
            raise ValueError("capsule endpoints must be 3-vectors")
        if not (np.all(np.isfinite(p0)) and np.all(np.isfinite(p1))):
            raise ValueError("capsule endpoints must be finite")
        if not (self.radius > 0.0):
            raise ValueError("capsule radius must be positive")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p1", p1)


def closest_segment_params(p0, p1, q0, q1) -> tuple[float, float]:
    """Segment parameters (s, t) in [0,1]^2 minimizing |P(s) - Q(t)|.

    Parallel overlaps have a whole interval of minimizers; the pair with
    minimal s (then minimal t) is returned so results are deterministic.
    """
    u = p1 - p0
    v = q1 - q0
    w0 = p0 - q0
    a = float(u @ u)
    b = float(u @ v)
    c = float(v @ v)
    d = float(u @ w0)
    e = float(v @ w0)

    tiny = 1e-18
    if a <= tiny and c <= tiny:
        return 0.0, 0.0
    if a <= tiny:
        return 0.0, min(1.0, max(0.0, e / c))
    if c <= tiny:
        return min(1.0, max(0.0, -d / a)), 0.0

    D = a * c - b * b
    if D > _PARALLEL_EPS * a * c:
        s = min(1.0, max(0.0, (b * e - c * d) / D))
        t = (b * s + e) / c
        if t < 0.0:
            t = 0.0
            s = min(1.0, max(0.0, -d / a))
        elif t > 1.0:
            t = 1.0
            s = min(1.0, max(0.0, (b - d) / a))
        return s, t

    # parallel: pick the minimal-s point of the overlap window
    s_lo = -d / a
    s_hi = (b - d) / a
    lo, hi = min(s_lo, s_hi), max(s_lo, s_hi)
    if hi < 0.0:
        s = 0.0
    elif lo > 1.0:
        s = 1.0
    else:
        s = max(0.0, lo)
    t = min(1.0, max(0.0, (e + s * b) / c))
    return s, t


def closest_segment_params_batch(p0, p1, q0, q1):
    """Vectorized closest_segment_params over (m, 3) endpoint arrays.

    Same case analysis and tie-breaking as the scalar routine (the scalar
    path is the reference; agreement is covered by tests).
    """
    u = p1 - p0
    v = q1 - q0
    w0 = p0 - q0
    a = np.einsum("mi,mi->m", u, u)
    b = np.einsum("mi,mi->m", u, v)
    c = np.einsum("mi,mi->m", v, v)
    d = np.einsum("mi,mi->m", u, w0)
    e = np.einsum("mi,mi->m", v, w0)
    tiny = 1e-18

    with np.errstate(divide="ignore", invalid="ignore"):
        D = a * c - b * b
        nonpar = D > _PARALLEL_EPS * a * c
        # general case
        s_gen = np.clip((b * e - c * d) / np.where(D == 0.0, 1.0, D), 0.0, 1.0)
        t_gen = (b * s_gen + e) / np.where(c == 0.0, 1.0, c)
        t_low = t_gen < 0.0
        t_high = t_gen > 1.0
        s_gen = np.where(t_low, np.clip(-d / np.where(a == 0.0, 1.0, a), 0.0, 1.0), s_gen)
        s_gen = np.where(t_high, np.clip((b - d) / np.where(a == 0.0, 1.0, a), 0.0, 1.0), s_gen)
        t_gen = np.clip(t_gen, 0.0, 1.0)
        # parallel case: minimal s in the overlap window
        s0 = -d / np.where(a == 0.0, 1.0, a)
        s1 = (b - d) / np.where(a == 0.0, 1.0, a)
        lo = np.minimum(s0, s1)
        hi = np.maximum(s0, s1)
        s_par = np.where(hi < 0.0, 0.0, np.where(lo > 1.0, 1.0, np.maximum(0.0, lo)))
        s_cand = np.where(nonpar, s_gen, s_par)
        t_cand = np.where(
            nonpar, t_gen, np.clip((e + s_cand * b) / np.where(c == 0.0, 1.0, c), 0.0, 1.0)
        )
        # degenerate segments
        s_cand = np.where(a <= tiny, 0.0, s_cand)
        t_cand = np.where(a <= tiny, np.clip(e / np.where(c == 0.0, 1.0, c), 0.0, 1.0), t_cand)
        t_cand = np.where(c <= tiny, 0.0, t_cand)
        s_cand = np.where(c <= tiny, np.clip(-d / np.where(a == 0.0, 1.0, a), 0.0, 1.0), s_cand)
        s_cand = np.where((a <= tiny) & (c <= tiny), 0.0, s_cand)
        t_cand = np.where((a <= tiny) & (c <= tiny), 0.0, t_cand)
    return s_cand, t_cand


@dataclass(frozen=True)
class CapsuleDistance:
    distance: float  # surface separation, negative in penetration
    witness_a: np.ndarray  # closest core point on a
    witness_b: np.ndarray
    s: float
    t: float


def capsule_distance(a: Capsule, b: Capsule) -> CapsuleDistance:
    """Minimum surface distance between two capsules with its witnesses."""
    s, t = closest_segment_params(a.p0, a.p1, b.p0, b.p1)
    wa = a.p0 + s * (a.p1 - a.p0)
    wb = b.p0 + t * (b.p1 - b.p0)
    core = float(np.linalg.norm(wa - wb))
    return CapsuleDistance(core - a.radius - b.radius, wa, wb, s, t)


@dataclass(frozen=True)
class PointState:
    """Cartesian position / velocity / acceleration of one point."""

    p: np.ndarray
    v: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        total = 0.0
        for name in ("p", "v", "a"):
            vec = np.asarray(getattr(self, name), dtype=float)
            if vec.shape != (3,):
                raise ValueError(f"PointState.{name} must be a 3-vector")
            total += float(vec.sum())
            object.__setattr__(self, name, vec)
        if not math.isfinite(total):  # finite sum <=> finite entries
            raise ValueError("PointState entries must be finite")

    @classmethod
    def stationary(cls, p) -> "PointState":
        return cls(np.asarray(p, dtype=float), np.zeros(3), np.zeros(3))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.a])

    def predicted(self, tau: float) -> "PointState":
        """Constant-velocity advance: p + tau v, same v, zero acceleration."""
        return PointState(self.p + tau * self.v, self.v.copy(), np.zeros(3))


@dataclass(frozen=True)
class BodyCapsule:
    """A capsule belonging to an agent, with the motion of its endpoints."""

    owner: str
    link: int
    radius: float
    end0: PointState
    end1: PointState

    def capsule(self) -> Capsule:
        return Capsule(self.end0.p, self.end1.p, self.radius)

    def point_state_at(self, t: float) -> PointState:
        return PointState(
            (1.0 - t) * self.end0.p + t * self.end1.p,
            (1.0 - t) * self.end0.v + t * self.end1.v,
            (1.0 - t) * self.end0.a + t * self.end1.a,
        )


@dataclass(frozen=True)
class CriticalPair:
    """Closest robot/agent point pair and the states needed to constrain it."""

    robot_point: PointState
    agent_point: PointState
    distance: float  # surface distance (core minus both radii)
    robot_link: int
    agent_link: int
    agent_owner: str
    robot_local_point: np.ndarray
    robot_radius: float
    agent_radius: float
    bundle: PointJacobianBundle | None = None

    @property
    def radius_sum(self) -> float:
        return self.robot_radius + self.agent_radius

    @property
    def core_distance(self) -> float:
        return self.distance + self.radius_sum

    def delta(self) -> np.ndarray:
        """Relative 9-state of the witness core points (robot minus agent)."""
        return self.robot_point.stacked() - self.agent_point.stacked()


def robot_capsules_world(chain: KinematicChain, fk: FkFrames) -> list[tuple[int, Capsule, np.ndarray, np.ndarray]]:
    """World-frame robot capsules: (link, capsule, local_p0, local_p1)."""
    out = []
    for spec in chain.capsules:
        p0 = link_point_world(fk, spec.link, spec.p0)[0]
        p1 = link_point_world(fk, spec.link, spec.p1)[0]
        out.append((spec.link, Capsule(p0, p1, spec.radius), spec.p0, spec.p1))
    return out


def critical_pair(
    chain: KinematicChain,
    q: JointState,
    agent_capsules: Sequence[BodyCapsule],
    fk: FkFrames | None = None,
    stencil: FkFrames | None = None,
) -> CriticalPair:
    """Globally minimal robot/agent capsule pair with witness kinematics.

    Ties are broken by lowest (robot_link, agent position in the list), so
    symmetric scenes resolve deterministically.  The robot witness is
    treated as frozen on its link for this control step; its velocity and
    acceleration come from the point Jacobian bundle at the witness.
    A precomputed FK stencil (bundle_stencil) avoids recomputing FK.
    """
    if not agent_capsules:
        raise ValueError("no agent capsules in scene")
    if fk is None:
        if stencil is not None:
            fk = _first_row(stencil)
        else:
            fk = fk_batch(chain, q.theta[None])
    robot_caps = robot_capsules_world(chain, fk)
    if not robot_caps:
        raise ValueError("chain has no collision capsules")

    # all pairs at once, rows ordered (robot_link, agent list position) so the
    # first minimum realizes the lexicographic tie-break
    robot_caps = sorted(robot_caps, key=lambda rc: rc[0])
    R, A = len(robot_caps), len(agent_capsules)
    P0 = np.repeat(np.stack([rc[1].p0 for rc in robot_caps]), A, axis=0)
    P1 = np.repeat(np.stack([rc[1].p1 for rc in robot_caps]), A, axis=0)
    Q0 = np.tile(np.stack([ac.end0.p for ac in agent_capsules]), (R, 1))
    Q1 = np.tile(np.stack([ac.end1.p for ac in agent_capsules]), (R, 1))
    r_r = np.repeat(np.array([rc[1].radius for rc in robot_caps]), A)
    r_a = np.tile(np.array([ac.radius for ac in agent_capsules]), R)
    ss, tt = closest_segment_params_batch(P0, P1, Q0, Q1)
    wa = P0 + ss[:, None] * (P1 - P0)
    wb = Q0 + tt[:, None] * (Q1 - Q0)
    dist = np.linalg.norm(wa - wb, axis=1) - r_r - r_a
    idx = int(np.argmin(dist))
    link, cap, local0, local1 = robot_caps[idx // A]
    agent_cap = agent_capsules[idx % A]
    res = CapsuleDistance(float(dist[idx]), wa[idx], wb[idx], float(ss[idx]), float(tt[idx]))

    # witness in link coordinates (frozen on the link for this step)
    local_witness = local0 + res.s * (local1 - local0)
    bundle = point_jacobian_bundle(chain, q, link, local_witness, stencil=stencil)
    p, v, a = point_kinematics(bundle, q)
    robot_point = PointState(p, v, a)
    agent_point = agent_cap.point_state_at(res.t)
    return CriticalPair(
        robot_point=robot_point,
        agent_point=agent_point,
        distance=res.distance,
        robot_link=link,
        agent_link=agent_cap.link,
        agent_owner=agent_cap.owner,
        robot_local_point=local_witness,
        robot_radius=cap.radius,
        agent_radius=agent_cap.radius,
        bundle=bundle,
    )


def distance_derivatives(pair: CriticalPair) -> tuple[float, float, float]:
    """(d, d_dot, d_ddot) of the core-point separation.

    d here is the core (segment point) distance; subtract the pair's radius
    sum for the surface distance used in the safety index.  Raises
    DegenerateDistance when the core points coincide.
    """
    delta = pair.delta()
    dp, dv, da = delta[0:3], delta[3:6], delta[6:9]
    d = float(np.linalg.norm(dp))
    if d <= CORE_DISTANCE_EPS:
        raise DegenerateDistance(f"core distance {d:.3e} below {CORE_DISTANCE_EPS}")
    d_dot = float(dp @ dv) / d
    d_ddot = (float(dv @ dv) + float(dp @ da) - d_dot * d_dot) / d
    return d, d_dot, d_ddot


def selector_matrices() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """9x9 selectors extracting the quadratic forms of the relative state:
    delta'U1 delta = |dp|^2, delta'U2 delta = dp.dv, delta'U3 delta = |dv|^2,
    delta'U4 delta = dp.da."""
    I3 = np.eye(3)
    U1 = np.zeros((9, 9))
    U2 = np.zeros((9, 9))
    U3 = np.zeros((9, 9))
    U4 = np.zeros((9, 9))
    U1[0:3, 0:3] = I3
    U2[0:3, 3:6] = I3
    U3[3:6, 3:6] = I3
    U4[0:3, 6:9] = I3
    return U1, U2, U3, U4
