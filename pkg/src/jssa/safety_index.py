"""Safety index and its linearized control constraint.

The index over the critical-pair separation d (surface distance) is

    phi = d_min^2 - d^2 - lambda1 * d_dot - lambda2 * d_ddot

with lambda1, lambda2 chosen so that 1 + lambda1 s + lambda2 s^2 has only
negative real roots, and so that a jerk command within bounds can always
push phi downward on the boundary phi = 0 (checked here by sampled minimax).

For control, phi at the next step is multiplied by the (positive) core
distance and expanded in the relative witness state delta = M - H:

    phi * d_core = d_min^2 sqrt(Q1) - (sqrt(Q1) - r)^2 sqrt(Q1)
                   - lambda1 Q2 + lambda2 (Q2^2/Q1 - Q3 - Q4)

with Q1 = |dp|^2, Q2 = dp.dv, Q3 = |dv|^2, Q4 = dp.da and r the capsule
radius sum (r = 0 recovers the pure point-pair expression).  Propagating
delta one step and keeping the exact first-order term in the jerk command u
yields a single affine constraint L u >= S; the truncation error is second
order in u and is covered by the linearization-fidelity tests.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import CriticalPair, DegenerateDistance, PointState
from .kinematics import (
    JerkBounds,
    JointState,
    KinematicChain,
    PointJacobianBundle,
    fk_batch,
    point_jacobian,
)


@dataclass
class SafetyIndexParams:
    """Margin d_min plus the velocity/acceleration sensitivities.

    lambda1 weighs the approach speed, lambda2 the relative acceleration;
    raising either makes the safeguard trigger earlier.
    """

    d_min: float
    lambda1: float
    lambda2: float
    roots_negative_real: bool = False
    minimax_passed: bool = False

    def __post_init__(self):
        if not (self.d_min > 0.0):
            raise ValueError("d_min must be positive")


def phi(params: SafetyIndexParams, d, d_dot, d_ddot):
    """Safety index value; nonpositive means the state is allowed."""
    d = np.asarray(d, dtype=float)
    return (
        params.d_min * params.d_min
        - d * d
        - params.lambda1 * np.asarray(d_dot, dtype=float)
        - params.lambda2 * np.asarray(d_ddot, dtype=float)
    )


def validate_roots(params: SafetyIndexParams) -> bool:
    """True iff all roots of 1 + lambda1 s + lambda2 s^2 are negative real.

    lambda2 = 0 degenerates to the single root -1/lambda1.
    """
    l1, l2 = params.lambda1, params.lambda2
    if l2 < 0.0:
        ok = False
    elif l2 == 0.0:
        ok = l1 > 0.0
    else:
        ok = l1 > 0.0 and l1 * l1 >= 4.0 * l2
    params.roots_negative_real = ok
    return ok


# ---------------------------------------------------------------------------
# linearized constraint


def cartesian_transition(tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Triple-integrator transition (A, B) for a Cartesian point state."""
    I3 = np.eye(3)
    A = np.zeros((9, 9))
    A[0:3, 0:3] = I3
    A[0:3, 3:6] = tau * I3
    A[0:3, 6:9] = 0.5 * tau * tau * I3
    A[3:6, 3:6] = I3
    A[3:6, 6:9] = tau * I3
    A[6:9, 6:9] = I3
    B = np.vstack([tau**3 / 6.0 * I3, 0.5 * tau * tau * I3, tau * I3])
    return A, B


@dataclass(frozen=True)
class LinearizedConstraint:
    """Affine safe-control condition L u >= S (encodes phi_next * d <= 0)."""

    L: np.ndarray  # (n,) row acting on the joint jerk command
    S: float
    delta_cap: np.ndarray  # (9,) drift-propagated relative state
    radius_sum: float
    valid: bool = True


def phi_times_core(params: SafetyIndexParams, delta: np.ndarray, radius_sum: float):
    """phi * core-distance evaluated from a relative 9-state (vectorized).

    delta may be (9,) or (..., 9).
    """
    delta = np.asarray(delta, dtype=float)
    dp, dv, da = delta[..., 0:3], delta[..., 3:6], delta[..., 6:9]
    q1 = np.einsum("...i,...i", dp, dp)
    q2 = np.einsum("...i,...i", dp, dv)
    q3 = np.einsum("...i,...i", dv, dv)
    q4 = np.einsum("...i,...i", dp, da)
    rho = np.sqrt(q1)
    r = radius_sum
    return (
        params.d_min**2 * rho
        - (rho - r) ** 2 * rho
        - params.lambda1 * q2
        + params.lambda2 * (q2 * q2 / q1 - q3 - q4)
    )


def build_constraint(
    params: SafetyIndexParams,
    pair: CriticalPair,
    bundle: PointJacobianBundle,
    agent_next: PointState,
    q: JointState,
    tau: float,
) -> LinearizedConstraint:
    """Linearize phi_next * d_core <= 0 in the jerk command.

    The relative state is propagated by the Cartesian triple integrator with
    the witness jerk split into drift (J_ddot qd + 2 J_dot qdd) and control
    (J u); everything u-free lands in S, the exact first-order u coefficient
    in L.  Constraint direction: L u >= S keeps phi_next <= 0.
    """
    if not (tau > 0.0):
        raise ValueError("tau must be positive")
    A, B = cartesian_transition(tau)
    j_drift = bundle.J_ddot @ q.theta_dot + 2.0 * bundle.J_dot @ q.theta_ddot
    delta_cap = A @ pair.robot_point.stacked() + B @ j_drift - agent_next.stacked()

    dp, dv, da = delta_cap[0:3], delta_cap[3:6], delta_cap[6:9]
    q1 = float(dp @ dp)
    if q1 <= 1e-18:
        raise DegenerateDistance("drift-propagated witness points coincide")
    q2 = float(dp @ dv)
    rho = math.sqrt(q1)
    r = pair.radius_sum
    l1, l2 = params.lambda1, params.lambda2

    S = float(phi_times_core(params, delta_cap, r))

    c1 = params.d_min**2 / rho - 3.0 * rho + 4.0 * r - r * r / rho - 2.0 * l2 * q2 * q2 / (q1 * q1)
    c2 = -l1 + 2.0 * l2 * q2 / q1
    g_p = c1 * dp + c2 * dv - l2 * da
    g_v = c2 * dp - 2.0 * l2 * dv
    g_a = -l2 * dp
    w = (tau**3 / 6.0) * g_p + (0.5 * tau * tau) * g_v + tau * g_a
    L = -(bundle.J.T @ w)
    return LinearizedConstraint(L=L, S=S, delta_cap=delta_cap, radius_sum=r)


def build_acceleration_constraint(
    d_min: float,
    lambda1: float,
    pair: CriticalPair,
    bundle: PointJacobianBundle,
    agent_next: PointState,
    q: JointState,
    tau: float,
) -> LinearizedConstraint:
    """Relative-degree-2 variant: the control is the joint acceleration.

    Same construction on the reduced (position, velocity) relative state
    with index d_min^2 - d^2 - lambda1 d_dot; used by the acceleration-level
    baseline safeguard.
    """
    I3 = np.eye(3)
    A6 = np.block([[I3, tau * I3], [np.zeros((3, 3)), I3]])
    B6 = np.vstack([0.5 * tau * tau * I3, tau * I3])
    m6 = np.concatenate([pair.robot_point.p, pair.robot_point.v])
    h6 = np.concatenate([agent_next.p, agent_next.v])
    a_drift = bundle.J_dot @ q.theta_dot
    delta6 = A6 @ m6 + B6 @ a_drift - h6

    dp, dv = delta6[0:3], delta6[3:6]
    q1 = float(dp @ dp)
    if q1 <= 1e-18:
        raise DegenerateDistance("drift-propagated witness points coincide")
    q2 = float(dp @ dv)
    rho = math.sqrt(q1)
    r = pair.radius_sum

    S = float(d_min**2 * rho - (rho - r) ** 2 * rho - lambda1 * q2)
    c1 = d_min**2 / rho - 3.0 * rho + 4.0 * r - r * r / rho
    g_p = c1 * dp - lambda1 * dv
    g_v = -lambda1 * dp
    w = (0.5 * tau * tau) * g_p + tau * g_v
    L = -(bundle.J.T @ w)
    delta_cap = np.concatenate([delta6, np.zeros(3)])
    return LinearizedConstraint(L=L, S=S, delta_cap=delta_cap, radius_sum=r)


# ---------------------------------------------------------------------------
# sampled minimax feasibility check


@dataclass
class MinimaxEnvelope:
    """Operating envelope the feasibility check samples over.

    The guarantee is only meaningful where the control has authority over
    the witness point, so the envelope pins down the scene: joint positions
    within `joint_half_width` of `joint_center` (the task posture region),
    joint rates as the scenarios exhibit them, witness points on the
    capsules of links >= `min_guarded_link` (the base column and shoulder
    cannot retreat; standoff margins cover them), and agent speeds up to
    the scenario bound.  `effective_radius` converts the sampled surface
    distance to core distance.
    """

    d_surface_max: float = 2.5
    agent_speed: float = 1.5
    joint_center: tuple = (0.0, 0.35, -0.40, 0.0, -0.55, 0.0)
    joint_half_width: float = 0.9
    joint_speed: float = 0.8
    joint_accel: float = 1.8
    effective_radius: float = 0.2
    min_guarded_link: int = 4

    def to_config(self) -> dict:
        return {
            "d_surface_max": self.d_surface_max,
            "agent_speed": self.agent_speed,
            "joint_center": list(self.joint_center),
            "joint_half_width": self.joint_half_width,
            "joint_speed": self.joint_speed,
            "joint_accel": self.joint_accel,
            "effective_radius": self.effective_radius,
            "min_guarded_link": self.min_guarded_link,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "MinimaxEnvelope":
        cfg = dict(cfg)
        if "joint_center" in cfg:
            cfg["joint_center"] = tuple(cfg["joint_center"])
        return cls(**cfg)

    def theta_bounds(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        center = np.asarray(self.joint_center, dtype=float)
        if center.shape[0] != n:
            center = np.full(n, center[0] if center.size else 0.0)
        return center - self.joint_half_width, center + self.joint_half_width


@dataclass
class MinimaxReport:
    passed: bool
    worst_value: float
    worst_state: Optional[dict]
    samples_used: int
    samples_rejected: int
    seed: int


_CHUNK = 4096  # fixed so a longer budget extends the same sample sequence


def verify_minimax(
    params: SafetyIndexParams,
    bounds: JerkBounds,
    chain: KinematicChain,
    sampling_budget: int,
    seed: int = 0,
    envelope: Optional[MinimaxEnvelope] = None,
) -> MinimaxReport:
    """Sampled check that phi can always be pushed down on phi = 0.

    States are sampled on the manifold phi = 0 by drawing (d, d_dot) and a
    robot configuration, then solving the acceleration term from phi = 0 and
    realizing it with a radial joint-acceleration adjustment.  Samples whose
    required acceleration leaves the envelope are rejected (reported, not
    fatal).  For each kept sample the best-case derivative

        min_u  -2 d d_dot - lambda1 d_ddot - lambda2 d_dddot(u)

    is evaluated over the jerk box; the check passes iff the maximum over
    samples stays nonpositive.  Deterministic for a given seed, and a larger
    budget only extends the sampled prefix (a failure cannot disappear).
    """
    if sampling_budget < 1:
        raise ValueError("sampling budget must be >= 1")
    env = envelope or MinimaxEnvelope()
    rng = np.random.default_rng(seed)
    guarded = [c for c in chain.capsules if c.link >= env.min_guarded_link]
    if not guarded:
        raise ValueError("no guarded capsules on the chain")

    n = chain.n
    l1, l2 = params.lambda1, params.lambda2
    worst_value = -math.inf
    worst_state = None
    used = 0
    rejected = 0
    remaining = sampling_budget

    th_lo, th_hi = env.theta_bounds(n)
    while remaining > 0:
        m = _CHUNK
        take = min(m, remaining)
        theta = rng.uniform(th_lo, th_hi, size=(m, n))
        theta_dot = rng.uniform(-env.joint_speed, env.joint_speed, size=(m, n))
        theta_ddot = rng.uniform(-env.joint_accel, env.joint_accel, size=(m, n))
        cap_idx = rng.integers(0, len(guarded), size=m)
        seg = rng.uniform(0.0, 1.0, size=m)
        dirn = rng.normal(size=(m, 3))
        dirn /= np.linalg.norm(dirn, axis=1, keepdims=True)
        d_surf = rng.uniform(params.d_min, env.d_surface_max, size=m)
        v_h = rng.normal(size=(m, 3))
        v_h *= (rng.uniform(0.0, env.agent_speed, size=m) / np.linalg.norm(v_h, axis=1))[:, None]

        # truncate the chunk only after drawing it, keeping the stream aligned
        sl = slice(0, take)
        value, state, n_rej = _minimax_chunk(
            params, bounds, chain, guarded, env,
            theta[sl], theta_dot[sl], theta_ddot[sl], cap_idx[sl], seg[sl],
            dirn[sl], d_surf[sl], v_h[sl],
        )
        used += take - n_rej
        rejected += n_rej
        if value is not None and value > worst_value:
            worst_value = value
            worst_state = state
        remaining -= take

    if used == 0:
        # nothing reachable on the manifold under this envelope
        return MinimaxReport(False, math.inf, None, 0, rejected, seed)
    passed = worst_value <= 0.0
    params.minimax_passed = passed
    return MinimaxReport(passed, worst_value, worst_state, used, rejected, seed)


class FkSubset:
    """Row view over batched FK frames (duck-typed FkFrames)."""

    def __init__(self, fk, rows):
        self.link_R = fk.link_R[rows]
        self.link_p = fk.link_p[rows]
        self.joint_axis = fk.joint_axis[rows]
        self.joint_origin = fk.joint_origin[rows]


def _grouped_point_jacobians(chain, fk, links, locals_, copies, m):
    """Per-sample point Jacobians for `copies` stacked stencil batches.

    fk holds copies*m configurations (sample-major within each copy);
    links/locals_ give the owning link and link-frame point per sample.
    Returns (copies*m, 3, n), grouped by link so the work stays batched.
    """
    J_all = np.zeros((copies * m, 3, chain.n))
    for link in np.unique(links):
        idx = np.where(links == link)[0]
        rows = np.concatenate([idx + k * m for k in range(copies)])
        pts = np.tile(locals_[idx], (copies, 1))
        J_all[rows] = point_jacobian(chain, FkSubset(fk, rows), int(link), pts)
    return J_all


def _jacobian_set(chain, theta, dtheta, links, locals_, h=1e-5):
    """J, dJ/dtheta[dtheta] and d2J/dtheta2[dtheta,dtheta] per sample."""
    m = theta.shape[0]
    stacked = np.concatenate([theta, theta + h * dtheta, theta - h * dtheta])
    fk = fk_batch(chain, stacked)
    J_all = _grouped_point_jacobians(chain, fk, links, locals_, 3, m)
    J0, Jp, Jm = J_all[0:m], J_all[m : 2 * m], J_all[2 * m : 3 * m]
    return J0, (Jp - Jm) / (2.0 * h), (Jp - 2.0 * J0 + Jm) / (h * h)


def _directional_jacobian(chain, theta, direction, links, locals_, h=1e-5):
    """dJ/dtheta[direction] per sample, symmetric difference."""
    m = theta.shape[0]
    stacked = np.concatenate([theta + h * direction, theta - h * direction])
    fk = fk_batch(chain, stacked)
    J_all = _grouped_point_jacobians(chain, fk, links, locals_, 2, m)
    return (J_all[0:m] - J_all[m : 2 * m]) / (2.0 * h)


def _minimax_chunk(params, bounds, chain, guarded, env, theta, theta_dot, theta_ddot,
                   cap_idx, seg, dirn, d_surf, v_h):
    m, n = theta.shape
    l1, l2 = params.lambda1, params.lambda2
    links = np.array([guarded[i].link for i in cap_idx])
    p0 = np.stack([guarded[i].p0 for i in cap_idx])
    p1 = np.stack([guarded[i].p1 for i in cap_idx])
    locals_ = p0 + seg[:, None] * (p1 - p0)

    J, J_dot, d2J = _jacobian_set(chain, theta, theta_dot, links, locals_)

    v_r = np.einsum("mij,mj->mi", J, theta_dot)
    rho = d_surf + env.effective_radius
    dp = rho[:, None] * dirn
    dv = v_r - v_h
    d_dot = np.einsum("mi,mi->m", dirn, dv)
    speed2 = np.einsum("mi,mi->m", dv, dv)

    c_vec = np.einsum("mij,mi->mj", J, dirn)  # J' * direction, (m, n)
    denom = np.einsum("mj,mj->m", c_vec, c_vec)

    if l2 > 0.0:
        dddot_req = (params.d_min**2 - d_surf**2 - l1 * d_dot) / l2
        need_radial = dddot_req + (d_dot**2 - speed2) / rho
        cur_radial = np.einsum("mi,mi->m", dirn, np.einsum("mij,mj->mi", J, theta_ddot)
                               + np.einsum("mij,mj->mi", J_dot, theta_dot))
        with np.errstate(divide="ignore", invalid="ignore"):
            alpha = (need_radial - cur_radial) / denom
        tdd_adj = theta_ddot + alpha[:, None] * c_vec
        keep = (denom > 1e-10) & np.all(np.abs(tdd_adj) <= env.joint_accel, axis=1)
        if not np.any(keep):
            return None, None, m
        idx = np.where(keep)[0]
        # redo the theta_ddot stencil with the adjusted accelerations
        dJ_adj = _directional_jacobian(chain, theta[idx], tdd_adj[idx], links[idx], locals_[idx])
        J_k = J[idx]
        da = np.einsum("mij,mj->mi", J_k, tdd_adj[idx]) + np.einsum("mij,mj->mi", J_dot[idx], theta_dot[idx])
        J_ddot = d2J[idx] + dJ_adj
        j_drift = np.einsum("mij,mj->mi", J_ddot, theta_dot[idx]) + 2.0 * np.einsum(
            "mij,mj->mi", J_dot[idx], tdd_adj[idx]
        )
        rho_k = rho[idx]
        drift = (
            -2.0 * d_surf[idx] * d_dot[idx]
            - l1 * dddot_req[idx]
            - l2 * (
                (3.0 * np.einsum("mi,mi->m", dv[idx], da) + np.einsum("mi,mi->m", dp[idx], j_drift)) / rho_k
                - 3.0 * d_dot[idx] * dddot_req[idx] / rho_k
            )
        )
        gain = np.maximum(c_vec[idx] * bounds.u_min[None, :], c_vec[idx] * bounds.u_max[None, :]).sum(axis=1)
        values = drift - l2 * gain
        j_best = int(np.argmax(values))
        state = {
            "theta": theta[idx[j_best]].tolist(),
            "theta_dot": theta_dot[idx[j_best]].tolist(),
            "theta_ddot": tdd_adj[idx[j_best]].tolist(),
            "link": int(links[idx[j_best]]),
            "local_point": locals_[idx[j_best]].tolist(),
            "d_surface": float(d_surf[idx[j_best]]),
            "d_dot": float(d_dot[idx[j_best]]),
            "d_ddot": float(dddot_req[idx[j_best]]),
        }
        return float(values[j_best]), state, m - idx.shape[0]

    # lambda2 = 0: u drops out; solve d_dot from phi = 0 instead
    ddot_req = (params.d_min**2 - d_surf**2) / l1
    dv_tan = dv - d_dot[:, None] * dirn
    dv_new = ddot_req[:, None] * dirn + dv_tan
    vh_new = v_r - dv_new
    keep = np.linalg.norm(vh_new, axis=1) <= env.agent_speed + 1e-12
    if not np.any(keep):
        return None, None, m
    idx = np.where(keep)[0]
    da = np.einsum("mij,mj->mi", J[idx], theta_ddot[idx]) + np.einsum(
        "mij,mj->mi", J_dot[idx], theta_dot[idx]
    )
    speed2_new = np.einsum("mi,mi->m", dv_new[idx], dv_new[idx])
    d_ddot = (speed2_new + np.einsum("mi,mi->m", dp[idx], da) - ddot_req[idx] ** 2) / rho[idx]
    values = -2.0 * d_surf[idx] * ddot_req[idx] - l1 * d_ddot
    j_best = int(np.argmax(values))
    state = {
        "theta": theta[idx[j_best]].tolist(),
        "d_surface": float(d_surf[idx[j_best]]),
        "d_dot": float(ddot_req[idx[j_best]]),
        "d_ddot": float(d_ddot[j_best]),
    }
    return float(values[j_best]), state, m - idx.shape[0]


# ---------------------------------------------------------------------------
# phase-surface export

SURFACE_CSV_COLUMNS = ("d", "d_dot", "d_ddot", "phi", "lambda1", "lambda2", "d_min")


def phase_surface_points(
    params: SafetyIndexParams,
    d_range: tuple[float, float] = (0.0, 1.5),
    d_dot_range: tuple[float, float] = (-2.0, 2.0),
    d_ddot_range: tuple[float, float] = (-10.0, 10.0),
    resolution: int = 41,
) -> np.ndarray:
    """Sample the phi = 0 and phi0 = 0 isosurfaces on a grid.

    Rows are (d, d_dot, d_ddot, phi, lambda1, lambda2, d_min).  For
    lambda2 = 0 the phi = 0 surface collapses to the plane
    d^2 + lambda1 d_dot = d_min^2, sampled over (d, d_ddot).
    """
    ds = np.linspace(d_range[0], d_range[1], resolution)
    dds = np.linspace(d_dot_range[0], d_dot_range[1], resolution)
    ddds = np.linspace(d_ddot_range[0], d_ddot_range[1], resolution)
    rows = []
    if params.lambda2 != 0.0:
        for d in ds:
            for dd in dds:
                ddd = (params.d_min**2 - d * d - params.lambda1 * dd) / params.lambda2
                rows.append((d, dd, ddd))
    else:
        for d in ds:
            for ddd in ddds:
                dd = (params.d_min**2 - d * d) / params.lambda1
                rows.append((d, dd, ddd))
    # phi0 = 0 slice: d pinned at the margin
    for dd in dds:
        for ddd in ddds:
            rows.append((params.d_min, dd, ddd))
    out = np.empty((len(rows), 7))
    for i, (d, dd, ddd) in enumerate(rows):
        out[i] = (d, dd, ddd, float(phi(params, d, dd, ddd)), params.lambda1, params.lambda2, params.d_min)
    return out


def export_phase_surface(params: SafetyIndexParams, path, **kwargs) -> int:
    """Write phase_surface_points to CSV; returns the row count."""
    pts = phase_surface_points(params, **kwargs)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SURFACE_CSV_COLUMNS)
        for row in pts:
            w.writerow([f"{x:.17g}" for x in row])
    return pts.shape[0]
