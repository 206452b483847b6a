"""Jerk-bounded nominal controller: waypoint tracking, command buffer,
stabilization and host replanning.

Command synthesis works directly in discrete time.  Each waypoint segment
gets the least-norm jerk sequence that drives the exact triple-integrator
state onto the next knot state (position from the waypoint, velocity and
acceleration from central differences, rest at both ends), so executing a
buffer reproduces every waypoint to machine precision.  This is the
discrete counterpart of quintic interpolation: the least-norm jerk profile
is piecewise quadratic in time.  If any sample exceeds the jerk bounds the
segment durations are uniformly time-scaled by (max ratio)^(1/3) and the
buffer regenerated until compliant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .kinematics import JerkBounds, JointState


class TaskInfeasible(Exception):
    """The waypoint task cannot be realized under the jerk bounds."""


@dataclass(frozen=True)
class Task:
    """Joint-space waypoints visited every sample_time seconds."""

    waypoints: np.ndarray  # (N, n)
    sample_time: float

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.ndim == 1:
            wp = wp[None, :]
        if wp.ndim != 2 or wp.shape[0] < 1:
            raise TaskInfeasible("task needs at least one waypoint")
        if not np.all(np.isfinite(wp)):
            raise TaskInfeasible("waypoints must be finite")
        if not (self.sample_time > 0.0):
            raise TaskInfeasible("sample time must be positive")
        object.__setattr__(self, "waypoints", wp)

    @property
    def n_waypoints(self) -> int:
        return self.waypoints.shape[0]

    def remaining_after(self, k_passed: int) -> "Task":
        """Waypoints not yet scheduled; always keeps the final goal."""
        k = min(max(k_passed, 0), self.n_waypoints - 1)
        return Task(self.waypoints[k:], self.sample_time)


@dataclass
class CommandBuffer:
    """Open-loop jerk sequence with a cursor; exhausted buffers hold zero.

    Generated buffers end at rest, so the zero-jerk hold keeps the robot
    exactly where the buffer left it.
    """

    commands: np.ndarray  # (m, n)
    epoch: int = 0
    cursor: int = 0

    @property
    def length(self) -> int:
        return self.commands.shape[0]

    @property
    def exhausted(self) -> bool:
        return self.cursor >= self.length

    def peek(self) -> np.ndarray:
        if self.exhausted:
            return np.zeros(self.commands.shape[1])
        return self.commands[self.cursor].copy()

    def pop(self) -> np.ndarray:
        u = self.peek()
        if not self.exhausted:
            self.cursor += 1
        return u


def next_command(buffer: CommandBuffer) -> np.ndarray:
    """Pop the cursor element; zero-jerk hold once exhausted."""
    return buffer.pop()


def dump_buffer_csv(buffer: CommandBuffer, path) -> None:
    """Debug dump: one row per step with the per-joint jerk samples."""
    import csv

    n = buffer.commands.shape[1] if buffer.length else 0
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "epoch"] + [f"u_{i}" for i in range(n)])
        for k in range(buffer.length):
            w.writerow([k, buffer.epoch] + [f"{x:.17g}" for x in buffer.commands[k]])


# ---------------------------------------------------------------------------
# discrete least-norm segment solver


def _controllability(m: int, tau: float) -> np.ndarray:
    """G (3, m): final-state contribution of each of m unit jerk samples."""
    j = np.arange(m - 1, -1, -1, dtype=float)  # powers of A applied after sample k
    G = np.empty((3, m))
    G[0] = tau**3 * (1.0 / 6.0 + 0.5 * j + 0.5 * j * j)
    G[1] = tau**2 * (0.5 + j)
    G[2] = tau * np.ones(m)
    return G


def _transition(m: int, tau: float) -> np.ndarray:
    t = m * tau
    return np.array([[1.0, t, 0.5 * t * t], [0.0, 1.0, t], [0.0, 0.0, 1.0]])


def _segment_jerk(start: np.ndarray, end: np.ndarray, m: int, tau: float) -> np.ndarray:
    """Least-norm jerk (m, n) driving (3, n) knot states start -> end."""
    G = _controllability(m, tau)
    target = end - _transition(m, tau) @ start
    M = G @ G.T
    alpha = np.linalg.solve(M, target)
    return G.T @ alpha


def _knot_states(waypoints: np.ndarray, initial: JointState, T: float) -> np.ndarray:
    """Knot (pos, vel, acc) per joint: initial state, then waypoints with
    central-difference derivative estimates, rest at the end."""
    N, n = waypoints.shape
    knots = np.zeros((N + 1, 3, n))
    knots[0] = np.stack([initial.theta, initial.theta_dot, initial.theta_ddot])
    pos = np.vstack([initial.theta[None, :], waypoints])
    for i in range(1, N + 1):
        knots[i, 0] = pos[i]
        if i < N:
            knots[i, 1] = (pos[i + 1] - pos[i - 1]) / (2.0 * T)
            knots[i, 2] = (pos[i + 1] - 2.0 * pos[i] + pos[i - 1]) / (T * T)
        # final knot keeps zero velocity/acceleration (rest)
    return knots


_MAX_SCALING_ITERS = 60


def generate(task: Task, initial: JointState, bounds: JerkBounds, tau: float) -> CommandBuffer:
    """Jerk buffer tracking the task waypoints from the initial state.

    Every waypoint is reproduced exactly at its knot time and the buffer
    terminates at rest.  Segments are time-scaled uniformly until all jerk
    samples respect the bounds.
    """
    if not (tau > 0.0):
        raise TaskInfeasible("tau must be positive")
    n = initial.n
    if task.waypoints.shape[1] != n:
        raise TaskInfeasible("waypoint dimension does not match the joint state")
    T = task.sample_time
    if abs(round(T / tau) * tau - T) > 1e-9:
        raise TaskInfeasible("sample time must be an integer multiple of tau")
    m_seg = max(int(round(T / tau)), 3)  # 3 constraints per segment need >= 3 samples

    tiny = 1e-300
    for _ in range(_MAX_SCALING_ITERS):
        T_eff = m_seg * tau
        knots = _knot_states(task.waypoints, initial, T_eff)
        segs = [
            _segment_jerk(knots[i], knots[i + 1], m_seg, tau)
            for i in range(task.n_waypoints)
        ]
        commands = np.vstack(segs)
        ratio_hi = np.where(commands > 0.0, commands / np.maximum(bounds.u_max[None, :], tiny), 0.0)
        ratio_lo = np.where(commands < 0.0, commands / np.minimum(bounds.u_min[None, :], -tiny), 0.0)
        ratio = float(max(np.max(ratio_hi), np.max(ratio_lo)))
        if ratio <= 1.0 + 1e-12:
            return CommandBuffer(commands=commands)
        scale = max(ratio ** (1.0 / 3.0) * 1.0001, 1.01)
        m_seg = int(math.ceil(m_seg * scale))
    raise TaskInfeasible("time scaling did not converge")


# ---------------------------------------------------------------------------
# internal replan (stabilize to rest)


def _bang_bang_time(v0: float, a0: float, u_lim: float) -> float:
    """Minimum time driving (velocity, acceleration) to rest with |u|<=u_lim."""
    if u_lim <= 0.0:
        return math.inf
    if abs(v0) < 1e-15 and abs(a0) < 1e-15:
        return 0.0
    best = math.inf
    for sigma in (1.0, -1.0):
        disc = 0.5 * a0 * a0 - sigma * u_lim * v0
        if disc < 0.0:
            continue
        root = math.sqrt(disc)
        for sgn in (1.0, -1.0):
            t1 = (-a0 + sgn * root) / (sigma * u_lim)
            if t1 < -1e-12:
                continue
            t1 = max(t1, 0.0)
            t2 = t1 + a0 * sigma / u_lim
            if t2 < -1e-12:
                continue
            best = min(best, t1 + max(t2, 0.0))
    return best


def internal_replan(q: JointState, bounds: JerkBounds, tau: float) -> CommandBuffer:
    """Shortest bound-feasible profile driving all joints to rest.

    Uses the least-norm jerk sequence over a shared horizon, grown from the
    per-joint bang-bang lower bound until the samples fit the bounds;
    terminal velocity and acceleration are exact up to rounding.
    """
    n = q.n
    if float(np.max(np.abs(q.theta_dot))) < 1e-15 and float(np.max(np.abs(q.theta_ddot))) < 1e-15:
        return CommandBuffer(commands=np.zeros((0, n)))
    u_lim = np.minimum(np.abs(bounds.u_min), np.abs(bounds.u_max))
    t_lb = max(
        _bang_bang_time(q.theta_dot[i], q.theta_ddot[i], u_lim[i]) for i in range(n)
    )
    if not math.isfinite(t_lb):
        raise TaskInfeasible("zero jerk authority on a moving joint")
    m = max(int(math.ceil(t_lb / tau)), 2)
    for _ in range(200):
        j = np.arange(m - 1, -1, -1, dtype=float)
        G = np.empty((2, m))
        G[0] = tau * tau * (0.5 + j)
        G[1] = tau * np.ones(m)
        t = m * tau
        target = -np.stack([q.theta_dot + t * q.theta_ddot, q.theta_ddot])  # (2, n)
        alpha = np.linalg.solve(G @ G.T, target)
        commands = G.T @ alpha  # (m, n)
        if np.all(commands >= bounds.u_min[None, :] - 0.0) and np.all(
            commands <= bounds.u_max[None, :] + 0.0
        ):
            return CommandBuffer(commands=commands)
        m = max(m + 1, int(math.ceil(m * 1.15)))
    raise TaskInfeasible("stabilization horizon search did not converge")


# ---------------------------------------------------------------------------
# host replan and the buffered controller


@dataclass(frozen=True)
class ReplanRequest:
    kind: str  # "host" | "internal"
    trigger_time: float
    state: JointState


@dataclass
class PendingHostReplan:
    """Host replan in flight: the new buffer materializes after the latency
    (unknown to the controller) from the robot state at delivery time."""

    task_remaining: Task
    request_time: float
    deliver_at: float

    def deliver(self, q: JointState, bounds: JerkBounds, tau: float) -> CommandBuffer:
        return generate(self.task_remaining, q, bounds, tau)


def host_replan(
    task_remaining: Task, q: JointState, bounds: JerkBounds, tau: float, latency: float,
    now: float = 0.0,
) -> PendingHostReplan:
    if latency < 0.0:
        raise TaskInfeasible("latency must be nonnegative")
    return PendingHostReplan(task_remaining=task_remaining, request_time=now, deliver_at=now + latency)


class BufferedController:
    """Owns the active command buffer; swaps are atomic at step boundaries.

    Every swap increments the epoch and resets the cursor, so no command is
    ever composed from two buffers.
    """

    def __init__(self, buffer: CommandBuffer):
        self._epoch = 0
        self._buffer = buffer
        buffer.epoch = 0

    @property
    def epoch(self) -> int:
        return self._epoch

    @property
    def buffer(self) -> CommandBuffer:
        return self._buffer

    def swap(self, commands: np.ndarray) -> int:
        self._epoch += 1
        self._buffer = CommandBuffer(commands=commands, epoch=self._epoch)
        return self._epoch

    def next(self) -> tuple[np.ndarray, int]:
        return self._buffer.pop(), self._epoch
