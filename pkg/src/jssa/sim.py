"""Deterministic 125 Hz closed-loop simulation.

Each step advances the agent drivers, pulls the nominal jerk from the
command buffer, runs the selected safeguard, integrates the joint state and
logs one telemetry record.  After a safeguard episode ends (active falling
edge sustained for the debounce window) the loop stabilizes the arm with an
internal replan and requests a fresh task buffer from the simulated host,
which lands after the configured latency; buffer swaps are atomic and
carry an epoch id so no stale command ever executes.

Everything is a pure function of (scenario, seed): telemetry is
byte-reproducible.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .agents import (
    DynamicAgent,
    ScriptedTrajectory,
    StaticAgent,
    hand_skeleton,
    human_skeleton,
    scene_capsules,
)
from .geometry import Capsule, DegenerateDistance, critical_pair, distance_derivatives
from .jpc import BufferedController, Task, generate, internal_replan
from .kinematics import (
    JerkBounds,
    JointState,
    KinematicChain,
    default_arm,
    fk_batch,
    step_joint_state,
    REFERENCE_JERK_LIMITS_DEG,
    HOME_THETA,
)
from .safeguard import (
    CostMatrix,
    FALLBACK_NONE,
    SafeControlOutcome,
    StepDiagnostics,
    jssa_step,
    ssa_step,
)
from .safety_index import SafetyIndexParams, phi

MODES = ("jssa", "ssa", "off")


@dataclass
class Scenario:
    """Plain-data recipe for one reproducible run (JSON round-trippable)."""

    name: str = "scenario"
    mode: str = "jssa"
    duration_s: float = 6.0
    tau_s: float = 0.008
    seed: int = 0
    host_latency_s: float = 0.2
    debounce_steps: int = 5
    d_min: float = 0.05
    lambda1: float = 3.0
    lambda2: float = 1.0
    v_diag: tuple = tuple([1.0] * 6)
    jerk_bounds_deg: tuple = REFERENCE_JERK_LIMITS_DEG
    chain_config: Optional[dict] = None  # None -> reference arm
    initial_theta: Optional[tuple] = None  # None -> first waypoint
    task_waypoints: tuple = (tuple(HOME_THETA),)
    task_sample_time_s: float = 1.0
    static_agents: tuple = ()
    dynamic_agents: tuple = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not (self.tau_s > 0.0):
            raise ValueError("tau must be positive")
        if not (self.duration_s > 0.0):
            raise ValueError("duration must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.tau_s))

    # -- JSON ----------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "duration_s": self.duration_s,
            "tau_s": self.tau_s,
            "seed": self.seed,
            "host_latency_s": self.host_latency_s,
            "debounce_steps": self.debounce_steps,
            "safety": {"d_min": self.d_min, "lambda1": self.lambda1, "lambda2": self.lambda2},
            "v_diag": list(self.v_diag),
            "jerk_bounds_deg": list(self.jerk_bounds_deg),
            "chain": self.chain_config if self.chain_config is not None else "default",
            "initial_theta": None if self.initial_theta is None else list(self.initial_theta),
            "task": {
                "waypoints": [list(w) for w in self.task_waypoints],
                "sample_time_s": self.task_sample_time_s,
            },
            "agents": {
                "static": [dict(s) for s in self.static_agents],
                "dynamic": [dict(d) for d in self.dynamic_agents],
            },
        }

    @classmethod
    def from_dict(cls, cfg: dict) -> "Scenario":
        safety = cfg.get("safety", {})
        task = cfg.get("task", {})
        chain = cfg.get("chain", "default")
        return cls(
            name=cfg.get("name", "scenario"),
            mode=cfg.get("mode", "jssa"),
            duration_s=float(cfg.get("duration_s", 6.0)),
            tau_s=float(cfg.get("tau_s", 0.008)),
            seed=int(cfg.get("seed", 0)),
            host_latency_s=float(cfg.get("host_latency_s", 0.2)),
            debounce_steps=int(cfg.get("debounce_steps", 5)),
            d_min=float(safety.get("d_min", 0.05)),
            lambda1=float(safety.get("lambda1", 3.0)),
            lambda2=float(safety.get("lambda2", 1.0)),
            v_diag=tuple(cfg.get("v_diag", [1.0] * 6)),
            jerk_bounds_deg=tuple(cfg.get("jerk_bounds_deg", REFERENCE_JERK_LIMITS_DEG)),
            chain_config=None if chain == "default" else chain,
            initial_theta=None if cfg.get("initial_theta") is None else tuple(cfg["initial_theta"]),
            task_waypoints=tuple(tuple(w) for w in task.get("waypoints", [tuple(HOME_THETA)])),
            task_sample_time_s=float(task.get("sample_time_s", 1.0)),
            static_agents=tuple(cfg.get("agents", {}).get("static", [])),
            dynamic_agents=tuple(cfg.get("agents", {}).get("dynamic", [])),
        )

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def from_json(cls, path) -> "Scenario":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _build_skeleton(spec):
    if spec == "human":
        return human_skeleton()
    if spec == "hand":
        return hand_skeleton()
    from .agents import SkeletonLink

    return tuple(
        SkeletonLink(
            link_id=int(s["link"]), name=s.get("name", f"link{s['link']}"),
            offset0=np.asarray(s["p0"], float), offset1=np.asarray(s["p1"], float),
            radius=float(s["radius"]),
        )
        for s in spec
    )


def build_dynamic_agent(spec: dict) -> DynamicAgent:
    script = None
    if spec.get("script") is not None:
        sc = spec["script"]
        script = ScriptedTrajectory(np.asarray(sc["times"], float), np.asarray(sc["points"], float), sc.get("mode", "smooth"))
    return DynamicAgent(
        name=spec.get("name", "agent"),
        skeleton=_build_skeleton(spec.get("skeleton", "human")),
        root=np.asarray(spec.get("root", [2.0, 0.0, 0.9]), float),
        speed_bound=float(spec.get("speed_bound", 1.5)),
        accel_bound=spec.get("accel_bound", 4.0),
        driver=spec.get("driver", "scripted"),
        script=script,
        velocity_smoothing=float(spec.get("velocity_smoothing", 0.0)),
    )


def build_static_agent(spec: dict) -> StaticAgent:
    caps = tuple(
        (int(c.get("link", i + 1)), Capsule(np.asarray(c["p0"], float), np.asarray(c["p1"], float), float(c["radius"])))
        for i, c in enumerate(spec.get("capsules", []))
    )
    return StaticAgent(name=spec.get("name", "obstacle"), capsules=caps)


@dataclass
class TelemetryRecord:
    t: float
    d: float
    d_dot: float
    d_ddot: float
    phi: float
    active: int
    fallback: str
    robot_link: int
    agent_link: int
    S: float
    Lu_nom: float
    rel_speed: float
    rel_accel: float
    preclip_violation: int
    epoch: int
    u_nom: np.ndarray
    u_safe: np.ndarray
    theta: np.ndarray


@dataclass
class RunMetrics:
    min_distance: float
    first_trigger: Optional[float]
    last_trigger: Optional[float]
    active_duration: float
    mean_critical_velocity: float
    mean_critical_acceleration: float
    mean_critical_velocity_active: float
    mean_critical_acceleration_active: float
    preclip_violations: int
    fallback_steps: int
    max_joint_speed: float
    max_joint_accel: float


def compute_metrics(records: Sequence[TelemetryRecord], tau: float) -> RunMetrics:
    """Pure function of the log; recomputable from the CSV alone."""
    d = np.array([r.d for r in records])
    active = np.array([r.active for r in records], dtype=bool)
    t = np.array([r.t for r in records])
    rel_v = np.array([r.rel_speed for r in records])
    rel_a = np.array([r.rel_accel for r in records])
    first = float(t[active][0]) if active.any() else None
    last = float(t[active][-1]) if active.any() else None
    return RunMetrics(
        min_distance=float(np.min(d)),
        first_trigger=first,
        last_trigger=last,
        active_duration=float(tau * int(active.sum())),
        mean_critical_velocity=float(np.nanmean(rel_v)),
        mean_critical_acceleration=float(np.nanmean(rel_a)),
        mean_critical_velocity_active=float(np.nanmean(rel_v[active])) if active.any() else math.nan,
        mean_critical_acceleration_active=float(np.nanmean(rel_a[active])) if active.any() else math.nan,
        preclip_violations=int(sum(r.preclip_violation for r in records)),
        fallback_steps=int(sum(1 for r in records if r.fallback != FALLBACK_NONE)),
        max_joint_speed=0.0,  # filled by SimState.metrics (not in the log)
        max_joint_accel=0.0,
    )


class SimState:
    """One live run; the step() method is the only mutator of world state."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.tau = scenario.tau_s
        self.chain = (
            default_arm() if scenario.chain_config is None else KinematicChain.from_config(scenario.chain_config)
        )
        self.bounds = JerkBounds.symmetric_deg(scenario.jerk_bounds_deg)
        self.params = SafetyIndexParams(scenario.d_min, scenario.lambda1, scenario.lambda2)
        self.ssa_params = SafetyIndexParams(scenario.d_min, scenario.lambda1, 0.0)
        self.V = CostMatrix.diagonal(scenario.v_diag)
        waypoints = np.asarray(scenario.task_waypoints, float)
        self.task = Task(waypoints, scenario.task_sample_time_s)
        theta0 = np.asarray(
            scenario.initial_theta if scenario.initial_theta is not None else waypoints[0], float
        )
        self.q = JointState.rest(theta0)
        self.controller = BufferedController(generate(self.task, self.q, self.bounds, self.tau))
        self.static_agents = [build_static_agent(s) for s in scenario.static_agents]
        self.dynamic_agents = [build_dynamic_agent(d) for d in scenario.dynamic_agents]
        self.k = 0
        self.records: list[TelemetryRecord] = []
        self.replan_events: list[tuple[str, float]] = []
        self.executed_epochs: list[int] = []
        self.max_joint_speed = 0.0
        self.max_joint_accel = 0.0
        self._episode_open = False
        self._inactive_streak = 0
        self._pending_host: Optional[tuple[float, Task]] = None
        self._last_active = False

    @property
    def t(self) -> float:
        return self.k * self.tau

    def _remaining_task(self) -> Task:
        passed = int(self.t // self.task.sample_time)
        return self.task.remaining_after(passed)

    def step(self, external_targets: Optional[dict] = None) -> TelemetryRecord:
        tau = self.tau
        t_now = self.k * tau
        t_next = (self.k + 1) * tau
        for agent in self.dynamic_agents:
            target = None if external_targets is None else external_targets.get(agent.name)
            if target is not None:
                agent.set_target(target, t_now)
            agent.advance(t_next, tau)

        u_nom, epoch = self.controller.next()
        caps = scene_capsules(self.static_agents, self.dynamic_agents)
        mode = self.scenario.mode
        if mode == "jssa":
            out = jssa_step(u_nom, self.q, self.chain, caps, self.params, self.bounds, self.V, tau)
        elif mode == "ssa":
            out = ssa_step(u_nom, self.q, self.chain, caps, self.ssa_params, self.bounds, tau)
        else:
            out = self._monitor_only(u_nom, caps)

        self.q = step_joint_state(self.q, out.u_safe, tau)
        self.max_joint_speed = max(self.max_joint_speed, float(np.max(np.abs(self.q.theta_dot))))
        self.max_joint_accel = max(self.max_joint_accel, float(np.max(np.abs(self.q.theta_ddot))))
        diag = out.diagnostics
        rec = TelemetryRecord(
            t=t_now, d=diag.d, d_dot=diag.d_dot, d_ddot=diag.d_ddot, phi=diag.phi,
            active=int(out.active), fallback=out.fallback_used,
            robot_link=diag.robot_link, agent_link=diag.agent_link,
            S=diag.S, Lu_nom=diag.Lu_nom,
            rel_speed=diag.rel_speed, rel_accel=diag.rel_accel,
            preclip_violation=int(diag.preclip_violation), epoch=epoch,
            u_nom=u_nom, u_safe=out.u_safe, theta=self.q.theta.copy(),
        )
        self.records.append(rec)
        self.executed_epochs.append(epoch)
        self._handle_replan(bool(out.active) and mode != "off", t_next)
        self.k += 1
        return rec

    def _monitor_only(self, u_nom, caps) -> SafeControlOutcome:
        diag = StepDiagnostics()
        try:
            pair = critical_pair(self.chain, self.q, caps)
            diag.d = pair.distance
            diag.robot_link, diag.agent_link = pair.robot_link, pair.agent_link
            delta = pair.delta()
            diag.rel_speed = float(np.linalg.norm(delta[3:6]))
            diag.rel_accel = float(np.linalg.norm(delta[6:9]))
            _, d_dot, d_ddot = distance_derivatives(pair)
            diag.d_dot, diag.d_ddot = d_dot, d_ddot
            diag.phi = float(phi(self.params, pair.distance, d_dot, d_ddot))
        except DegenerateDistance:
            pass
        return SafeControlOutcome(
            u_safe=np.asarray(u_nom, float).copy(), active=False, constraint=None,
            fallback_used=FALLBACK_NONE, objective_value=0.0, diagnostics=diag,
        )

    def _handle_replan(self, active: bool, t_next: float) -> None:
        if active:
            self._episode_open = True
            self._inactive_streak = 0
        else:
            self._inactive_streak += 1
            if self._episode_open and self._inactive_streak >= self.scenario.debounce_steps:
                self._episode_open = False
                stab = internal_replan(self.q, self.bounds, self.tau)
                self.controller.swap(stab.commands)
                self.replan_events.append(("internal", t_next))
                self._pending_host = (t_next + self.scenario.host_latency_s, self._remaining_task())
                self.replan_events.append(("host_request", t_next))
        if self._pending_host is not None and t_next >= self._pending_host[0] - 1e-12:
            deliver_at, remaining = self._pending_host
            self._pending_host = None
            if not active and not self._episode_open:
                buf = generate(remaining, self.q, self.bounds, self.tau)
                self.controller.swap(buf.commands)
                self.replan_events.append(("host_delivered", t_next))
            else:
                self.replan_events.append(("host_dropped", t_next))
        self._last_active = active

    def metrics(self) -> RunMetrics:
        m = compute_metrics(self.records, self.tau)
        m.max_joint_speed = self.max_joint_speed
        m.max_joint_accel = self.max_joint_accel
        return m


def run(scenario: Scenario) -> tuple[list[TelemetryRecord], RunMetrics]:
    """Execute the full scenario; returns the telemetry log and its metrics."""
    sim = SimState(scenario)
    for _ in range(scenario.n_steps):
        sim.step()
    return sim.records, sim.metrics()


def sweep(scenario: Scenario, lambda1_values, lambda2_values) -> list[dict]:
    """One run per (lambda1, lambda2) cell with the identical agent script."""
    if len(lambda1_values) == 0 or len(lambda2_values) == 0:
        raise ValueError("sweep grid must be non-empty")
    rows = []
    for l1 in lambda1_values:
        for l2 in lambda2_values:
            cell = replace(scenario, lambda1=float(l1), lambda2=float(l2))
            _, metrics = run(cell)
            rows.append({"lambda1": float(l1), "lambda2": float(l2), "metrics": metrics})
    return rows


def compare_modes(scenario: Scenario) -> dict:
    """Identical scenario under the jerk-level safeguard and the baseline."""
    out = {}
    for mode in ("jssa", "ssa"):
        recs, metrics = run(replace(scenario, mode=mode))
        out[mode] = {"records": recs, "metrics": metrics}
    return out


# ---------------------------------------------------------------------------
# CSV serialization (fixed float format: runs are byte-reproducible)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def telemetry_columns(n_joints: int) -> list[str]:
    cols = [
        "t", "d", "d_dot", "d_ddot", "phi", "active", "fallback", "robot_link",
        "agent_link", "S", "Lu_nom", "rel_speed", "rel_accel", "preclip_violation", "epoch",
    ]
    cols += [f"u_nom_{i}" for i in range(n_joints)]
    cols += [f"u_safe_{i}" for i in range(n_joints)]
    cols += [f"theta_{i}" for i in range(n_joints)]
    return cols


def write_telemetry_csv(records: Sequence[TelemetryRecord], path) -> None:
    n = len(records[0].u_nom) if records else 6
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(telemetry_columns(n))
        for r in records:
            row = [
                _fmt(r.t), _fmt(r.d), _fmt(r.d_dot), _fmt(r.d_ddot), _fmt(r.phi),
                r.active, r.fallback, r.robot_link, r.agent_link,
                _fmt(r.S), _fmt(r.Lu_nom), _fmt(r.rel_speed), _fmt(r.rel_accel),
                r.preclip_violation, r.epoch,
            ]
            row += [_fmt(float(x)) for x in r.u_nom]
            row += [_fmt(float(x)) for x in r.u_safe]
            row += [_fmt(float(x)) for x in r.theta]
            w.writerow(row)


METRICS_COLUMNS = [
    "scenario", "mode", "seed", "lambda1", "lambda2", "min_distance", "first_trigger",
    "last_trigger", "active_duration", "mean_critical_velocity", "mean_critical_acceleration",
    "mean_critical_velocity_active", "mean_critical_acceleration_active",
    "preclip_violations", "fallback_steps", "max_joint_speed", "max_joint_accel",
]


def metrics_row(scenario: Scenario, m: RunMetrics, lambda1=None, lambda2=None) -> list[str]:
    return [
        scenario.name, scenario.mode, str(scenario.seed),
        _fmt(float(lambda1 if lambda1 is not None else scenario.lambda1)),
        _fmt(float(lambda2 if lambda2 is not None else scenario.lambda2)),
        _fmt(m.min_distance),
        "" if m.first_trigger is None else _fmt(m.first_trigger),
        "" if m.last_trigger is None else _fmt(m.last_trigger),
        _fmt(m.active_duration), _fmt(m.mean_critical_velocity),
        _fmt(m.mean_critical_acceleration),
        _fmt(m.mean_critical_velocity_active), _fmt(m.mean_critical_acceleration_active),
        str(m.preclip_violations), str(m.fallback_steps),
        _fmt(m.max_joint_speed), _fmt(m.max_joint_accel),
    ]


def write_metrics_csv(rows: Sequence[list], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_COLUMNS)
        for row in rows:
            w.writerow(row)
