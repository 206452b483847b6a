"""Environment agents: static obstacles and moving (human-like) bodies.

Dynamic agents are rigid capsule skeletons carried by a root point.  The
root is driven either by a scripted trajectory (reproducible benchmarks)
or by an external target stream (interactive steering).  Both drivers
rate-limit the motion so the configured speed and acceleration bounds hold
by construction, and both estimate velocity by backward difference: the
constant-velocity model the safeguard predicts with.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import BodyCapsule, Capsule, PointState

STALENESS_THRESHOLD = 0.2  # s without external input before the driver holds


@dataclass(frozen=True)
class StaticAgent:
    """Obstacle whose state never changes across steps."""

    name: str
    capsules: tuple[tuple[int, Capsule], ...]  # (link id, capsule)

    def body_capsules(self) -> list[BodyCapsule]:
        return [
            BodyCapsule(
                owner=self.name,
                link=link,
                radius=c.radius,
                end0=PointState.stationary(c.p0),
                end1=PointState.stationary(c.p1),
            )
            for link, c in self.capsules
        ]


@dataclass(frozen=True)
class SkeletonLink:
    link_id: int
    name: str
    offset0: np.ndarray  # endpoint offsets from the root point
    offset1: np.ndarray
    radius: float


def human_skeleton(scale: float = 1.0) -> tuple[SkeletonLink, ...]:
    """Six-capsule human body around a root at chest height.

    Dimensions are approximate defaults (head r=0.1, torso r=0.15,
    limbs r=0.06); scenarios may override but tests never depend on them.
    """
    s = scale

    def link(lid, name, o0, o1, r):
        return SkeletonLink(lid, name, np.asarray(o0) * s, np.asarray(o1) * s, r * s)

    return (
        link(1, "head", (0.0, 0.0, 0.62), (0.0, 0.0, 0.72), 0.10),
        link(2, "core body", (0.0, 0.0, -0.25), (0.0, 0.0, 0.50), 0.15),
        link(3, "right arm", (0.05, -0.25, 0.42), (0.12, -0.25, -0.12), 0.06),
        link(4, "left arm", (0.05, 0.25, 0.42), (0.12, 0.25, -0.12), 0.06),
        link(5, "right leg", (0.0, -0.10, -0.30), (0.0, -0.10, -0.92), 0.06),
        link(6, "left leg", (0.0, 0.10, -0.30), (0.0, 0.10, -0.92), 0.06),
    )


def hand_skeleton(radius: float = 0.07) -> tuple[SkeletonLink, ...]:
    """Single capsule standing in for a tracked hand."""
    return (
        SkeletonLink(1, "hand", np.zeros(3), np.array([0.0, 0.0, 0.10]), radius),
    )


@dataclass(frozen=True)
class ScriptedTrajectory:
    """Time-stamped root waypoints with linear or eased interpolation.

    "smooth" uses the quintic smoothstep per segment, so the root arrives
    at every waypoint with zero velocity and acceleration (humans decelerate
    before they stop).
    """

    times: np.ndarray
    points: np.ndarray  # (N, 3)
    mode: str = "smooth"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.points, dtype=float)
        if t.ndim != 1 or p.shape != (t.shape[0], 3) or t.shape[0] < 1:
            raise ValueError("trajectory needs matching times (N,) and points (N,3)")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        if self.mode not in ("linear", "smooth"):
            raise ValueError(f"unknown interpolation mode {self.mode!r}")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    def sample(self, t: float) -> np.ndarray:
        times, pts = self.times, self.points
        if t <= times[0]:
            return pts[0].copy()
        if t >= times[-1]:
            return pts[-1].copy()
        i = bisect.bisect_right(times.tolist(), t) - 1
        x = (t - times[i]) / (times[i + 1] - times[i])
        if self.mode == "smooth":
            x = x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
        return (1.0 - x) * pts[i] + x * pts[i + 1]


@dataclass
class ExternalInput:
    target: np.ndarray
    time: float


class DynamicAgent:
    """Rigid skeleton on a driven root point.

    The simulation loop is the only mutator; external targets arrive via a
    single-producer queue drained by the loop (set_target).
    """

    def __init__(
        self,
        name: str,
        skeleton: Sequence[SkeletonLink],
        root: np.ndarray,
        speed_bound: float,
        accel_bound: Optional[float] = None,
        driver: str = "scripted",
        script: Optional[ScriptedTrajectory] = None,
        velocity_smoothing: float = 0.0,
    ):
        if driver not in ("scripted", "external"):
            raise ValueError(f"unknown driver {driver!r}")
        if driver == "scripted" and script is None:
            raise ValueError("scripted driver needs a trajectory")
        self.name = name
        self.skeleton = tuple(skeleton)
        self.speed_bound = float(speed_bound)
        self.accel_bound = None if accel_bound is None else float(accel_bound)
        self.driver = driver
        self.script = script
        self.velocity_smoothing = float(velocity_smoothing)
        self.root = PointState.stationary(np.asarray(root, dtype=float))
        self.accel_estimate = np.zeros(3)  # logged only; prediction uses a = 0
        self._last_input: Optional[ExternalInput] = None

    # -- driver ------------------------------------------------------------

    def set_target(self, target, t: float) -> None:
        self._last_input = ExternalInput(np.asarray(target, dtype=float), t)

    def advance(self, t: float, tau: float) -> None:
        """Move the root for the step ending at time t."""
        if self.driver == "scripted":
            target = self.script.sample(t)
            track = True
        else:
            if self._last_input is None:
                target = self.root.p
                track = True
            elif t - self._last_input.time > STALENESS_THRESHOLD:
                target = None  # stale: hold last velocity
                track = False
            else:
                target = self._last_input.target
                track = True

        v_prev = self.root.v
        if track:
            v_cmd = (target - self.root.p) / tau
        else:
            v_cmd = v_prev
        speed = float(np.linalg.norm(v_cmd))
        if speed > self.speed_bound:
            v_cmd = v_cmd * (self.speed_bound / speed)
        if self.accel_bound is not None:
            dv = v_cmd - v_prev
            dv_max = self.accel_bound * tau
            dv_norm = float(np.linalg.norm(dv))
            if dv_norm > dv_max:
                v_cmd = v_prev + dv * (dv_max / dv_norm)
        if self.velocity_smoothing > 0.0:
            v_cmd = self.velocity_smoothing * v_prev + (1.0 - self.velocity_smoothing) * v_cmd

        p_new = self.root.p + tau * v_cmd
        # backward-difference velocity estimate; equals v_cmd by construction
        v_est = (p_new - self.root.p) / tau
        self.accel_estimate = (v_est - v_prev) / tau
        self.root = PointState(p_new, v_est, np.zeros(3))

    # -- geometry ----------------------------------------------------------

    @property
    def joints(self) -> dict[str, PointState]:
        out = {}
        for lk in self.skeleton:
            out[f"{lk.name}/0"] = PointState(self.root.p + lk.offset0, self.root.v, self.root.a)
            out[f"{lk.name}/1"] = PointState(self.root.p + lk.offset1, self.root.v, self.root.a)
        return out

    def body_capsules(self) -> list[BodyCapsule]:
        caps = []
        for lk in self.skeleton:
            caps.append(
                BodyCapsule(
                    owner=self.name,
                    link=lk.link_id,
                    radius=lk.radius,
                    end0=PointState(self.root.p + lk.offset0, self.root.v, self.root.a),
                    end1=PointState(self.root.p + lk.offset1, self.root.v, self.root.a),
                )
            )
        return caps

    def predicted(self, tau: float) -> "DynamicAgent":
        """Constant-velocity prediction of the whole skeleton at t + tau."""
        clone = DynamicAgent(
            name=self.name,
            skeleton=self.skeleton,
            root=self.root.p,
            speed_bound=self.speed_bound,
            accel_bound=self.accel_bound,
            driver=self.driver,
            script=self.script,
            velocity_smoothing=self.velocity_smoothing,
        )
        clone.root = self.root.predicted(tau)
        clone._last_input = self._last_input
        return clone


def predict_agent(agent: DynamicAgent, tau: float) -> DynamicAgent:
    """Constant-velocity model: every point advances p + tau v, a = 0."""
    if not (tau > 0.0):
        raise ValueError("tau must be positive")
    return agent.predicted(tau)


def advance_driver(agent: DynamicAgent, t: float, tau: float, external_input=None) -> DynamicAgent:
    """Advance the agent's driver to time t (mutates and returns the agent)."""
    if external_input is not None:
        agent.set_target(external_input, t)
    agent.advance(t, tau)
    return agent


def scene_capsules(static_agents: Sequence[StaticAgent], dynamic_agents: Sequence[DynamicAgent]) -> list[BodyCapsule]:
    caps: list[BodyCapsule] = []
    for a in dynamic_agents:
        caps.extend(a.body_capsules())
    for a in static_agents:
        caps.extend(a.body_capsules())
    return caps
