"""WebSocket telemetry/control endpoint around a live simulation.

One asyncio loop paces the simulation at 125 steps per second of wall
clock; connected clients receive state broadcasts (downsampled to at most
30 per second) and may steer dynamic agents, tune the safety parameters or
control the scenario.  All client mutations go through a queue drained at
step boundaries, so the simulation loop stays the sole world mutator and a
parameter change never lands mid-step.
"""
from __future__ import annotations

import asyncio
import contextlib
import math
import numpy as np
import websockets

from .agents import scene_capsules
from .kinematics import fk_batch
from .sim import Scenario, SimState
from .wire import WireError, error_message, metrics_message, parse_message, serialize_message, state_message

PARAM_RANGES = {
    "lambda1": [0.5, 12.0],
    "lambda2": [0.0, 12.0],
    "d_min": [0.01, 0.5],
}


class TelemetryServer:
    """Paced simulation with a broadcast endpoint.

    steps_per_second and telemetry_every are construction parameters so
    tests can run tighter loops; the CLI serves the standard 125 Hz pacing
    with every-5th-step telemetry (25 msg/s).
    """

    def __init__(self, scenario: Scenario, host: str = "127.0.0.1", port: int = 8765,
                 steps_per_second: float = 125.0, telemetry_every: int = 5):
        self.scenario = scenario
        self.host = host
        self.port = port
        self.steps_per_second = steps_per_second
        self.telemetry_every = max(1, int(telemetry_every))
        self.sim = SimState(scenario)
        self.clients: set = set()
        self.seq = 0
        self.running = True  # stepping (vs paused)
        self._mutations: asyncio.Queue = asyncio.Queue()
        self._stop = asyncio.Event()
        self._metrics_sent = False
        self.bound_port: int | None = None

    # -- lifecycle -----------------------------------------------------------

    async def serve_forever(self) -> None:
        async with websockets.serve(self._handle_client, self.host, self.port) as server:
            self.bound_port = server.sockets[0].getsockname()[1] if server.sockets else self.port
            loop_task = asyncio.create_task(self._sim_loop())
            try:
                await self._stop.wait()
            finally:
                loop_task.cancel()
                with contextlib.suppress(asyncio.CancelledError):
                    await loop_task

    def stop(self) -> None:
        self._stop.set()

    # -- client handling -----------------------------------------------------

    async def _handle_client(self, ws) -> None:
        self.clients.add(ws)
        try:
            await ws.send(serialize_message(self._state_msg()))
            async for raw in ws:
                try:
                    msg = parse_message(raw)
                except WireError as exc:
                    self.seq += 1
                    await ws.send(serialize_message(error_message(self.seq, "bad_message", str(exc))))
                    continue  # connection stays open
                if msg["kind"] in ("control", "param_update", "scenario_cmd"):
                    await self._mutations.put(msg)
                else:
                    self.seq += 1
                    await ws.send(
                        serialize_message(error_message(self.seq, "bad_kind", f"clients may not send {msg['kind']}"))
                    )
        finally:
            self.clients.discard(ws)

    async def _broadcast(self, msg: dict) -> None:
        if not self.clients:
            return
        text = serialize_message(msg)
        await asyncio.gather(*(self._safe_send(ws, text) for ws in list(self.clients)))

    async def _safe_send(self, ws, text: str) -> None:
        try:
            await ws.send(text)
        except Exception:
            self.clients.discard(ws)

    # -- simulation loop -----------------------------------------------------

    def _drain_mutations(self) -> dict:
        """Apply queued client messages at the step boundary; returns the
        external targets for this step."""
        targets = {}
        while True:
            try:
                msg = self._mutations.get_nowait()
            except asyncio.QueueEmpty:
                break
            kind = msg["kind"]
            if kind == "control":
                agent_id = msg.get("agent_id") or (
                    self.sim.dynamic_agents[0].name if self.sim.dynamic_agents else None
                )
                if agent_id is not None:
                    targets[agent_id] = np.asarray(msg["target_xyz"], dtype=float)
            elif kind == "param_update":
                p = self.sim.params
                for key in ("lambda1", "lambda2", "d_min"):
                    if key in msg and msg[key] is not None:
                        lo, hi = PARAM_RANGES[key]
                        setattr(p, key, float(min(max(msg[key], lo), hi)))
                self.sim.ssa_params.d_min = p.d_min
                self.sim.ssa_params.lambda1 = p.lambda1
            elif kind == "scenario_cmd":
                op = msg["op"]
                if op == "pause":
                    self.running = False
                elif op == "start":
                    self.running = True
                elif op == "reset":
                    self.sim = SimState(self.scenario)
                    self._metrics_sent = False
                elif op == "load":
                    spec = msg["scenario"]
                    if isinstance(spec, dict) and "preset" in spec:
                        from .scenarios import make

                        self.scenario = make(spec["preset"])
                    else:
                        self.scenario = Scenario.from_dict(spec)
                    self.sim = SimState(self.scenario)
                    self._metrics_sent = False
        return targets

    async def _sim_loop(self) -> None:
        period = 1.0 / self.steps_per_second
        next_tick = asyncio.get_running_loop().time()
        while not self._stop.is_set():
            targets = self._drain_mutations()
            if self.running:
                self.sim.step(targets if targets else None)
                if self.sim.k % self.telemetry_every == 0:
                    await self._broadcast(self._state_msg())
                if not self._metrics_sent and self.sim.k >= self.scenario.n_steps:
                    self._metrics_sent = True
                    await self._broadcast(self._metrics_msg())
            next_tick += period
            delay = next_tick - asyncio.get_running_loop().time()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                next_tick = asyncio.get_running_loop().time()  # fell behind; resync

    # -- message builders ------------------------------------------------------

    def _capsule_list(self) -> list[dict]:
        sim = self.sim
        fk = fk_batch(sim.chain, sim.q.theta[None])
        caps = []
        from .geometry import robot_capsules_world

        for link, cap, _, _ in robot_capsules_world(sim.chain, fk):
            caps.append({
                "p0": [round(float(x), 6) for x in cap.p0],
                "p1": [round(float(x), 6) for x in cap.p1],
                "r": cap.radius, "owner": "robot", "link": link,
            })
        for bc in scene_capsules(sim.static_agents, sim.dynamic_agents):
            caps.append({
                "p0": [round(float(x), 6) for x in bc.end0.p],
                "p1": [round(float(x), 6) for x in bc.end1.p],
                "r": bc.radius, "owner": bc.owner, "link": bc.link,
            })
        return caps

    def _state_msg(self) -> dict:
        sim = self.sim
        self.seq += 1
        rec = sim.records[-1] if sim.records else None
        return state_message(
            seq=self.seq,
            t=round(sim.t, 6),
            theta=[round(float(x), 9) for x in sim.q.theta],
            capsules=self._capsule_list(),
            d=None if rec is None or math.isnan(rec.d) else round(rec.d, 9),
            phi=None if rec is None or math.isnan(rec.phi) else round(rec.phi, 9),
            active=bool(rec.active) if rec is not None else False,
            robot_link=rec.robot_link if rec is not None else -1,
            agent_link=rec.agent_link if rec is not None else -1,
            params={"lambda1": sim.params.lambda1, "lambda2": sim.params.lambda2, "d_min": sim.params.d_min},
            param_ranges=PARAM_RANGES,
        )

    def _metrics_msg(self) -> dict:
        m = self.sim.metrics()
        self.seq += 1
        payload = {
            "min_distance": m.min_distance,
            "first_trigger": m.first_trigger,
            "last_trigger": m.last_trigger,
            "active_duration": m.active_duration,
            "mean_critical_velocity": m.mean_critical_velocity,
            "mean_critical_acceleration": m.mean_critical_acceleration,
        }
        return metrics_message(self.seq, payload)


def serve(scenario: Scenario, host: str = "127.0.0.1", port: int = 8765) -> None:
    """Blocking entry point used by the CLI."""
    server = TelemetryServer(scenario, host=host, port=port)
    asyncio.run(server.serve_forever())
