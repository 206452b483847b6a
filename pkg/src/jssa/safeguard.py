"""Real-time safe-control synthesis.

Projects the nominal jerk command onto the safe half-space L u >= S inside
the jerk box by solving

    min (u - u_nom)' V (u - u_nom)   s.t.  L u >= S,  u_min <= u <= u_max

exactly: the single inequality gives two active-set cases, and with the
(diagonal) weight the equality case reduces to a one-dimensional monotone
dual root found by breakpoint scan.  No iterative solver, no tolerance
tuning; emitted commands are within bounds by construction.

Also provides the acceleration-level baseline: the same machinery at
relative degree two, projecting acceleration and converting back to jerk by
a difference quotient with saturation (pre-clip violations are reported).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    BodyCapsule,
    CriticalPair,
    DegenerateDistance,
    critical_pair,
    distance_derivatives,
)
from .kinematics import JerkBounds, JointState, KinematicChain, bundle_stencil
from .safety_index import (
    LinearizedConstraint,
    SafetyIndexParams,
    build_acceleration_constraint,
    build_constraint,
    phi,
)

FALLBACK_NONE = "none"
FALLBACK_CLIP = "clip"
FALLBACK_MAX_BRAKE = "max_brake"

_ACTIVE_ATOL = 1e-12


@dataclass(frozen=True)
class CostMatrix:
    """Positive definite weight on the command deviation."""

    V: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise ValueError("V must be square")
        if not np.allclose(V, V.T, atol=1e-12):
            raise ValueError("V must be symmetric")
        try:
            np.linalg.cholesky(V)
        except np.linalg.LinAlgError as exc:
            raise ValueError("V must be positive definite") from exc
        object.__setattr__(self, "V", V)

    @classmethod
    def identity(cls, n: int) -> "CostMatrix":
        return cls(np.eye(n))

    @classmethod
    def diagonal(cls, diag) -> "CostMatrix":
        return cls(np.diag(np.asarray(diag, dtype=float)))

    @property
    def diag_or_none(self) -> Optional[np.ndarray]:
        V = self.V
        if np.count_nonzero(V - np.diag(np.diagonal(V))) == 0:
            return np.diagonal(V).copy()
        return None


@dataclass
class StepDiagnostics:
    """Per-step record matching the telemetry panels."""

    d: float = math.nan  # surface distance
    d_dot: float = math.nan
    d_ddot: float = math.nan
    phi: float = math.nan
    S: float = math.nan
    Lu_nom: float = math.nan
    robot_link: int = -1
    agent_link: int = -1
    agent_owner: str = ""
    rel_speed: float = math.nan
    rel_accel: float = math.nan
    preclip_violation: bool = False


@dataclass
class SafeControlOutcome:
    u_safe: np.ndarray
    active: bool
    constraint: Optional[LinearizedConstraint]
    fallback_used: str = FALLBACK_NONE
    objective_value: float = 0.0
    diagnostics: StepDiagnostics = field(default_factory=StepDiagnostics)


def _max_brake_infeasible(u_nom: np.ndarray, L: np.ndarray, bounds: JerkBounds) -> np.ndarray:
    """No u in the box satisfies L u >= S: push L u as high as it goes."""
    u = bounds.clip(u_nom.copy())
    pos = L > 0.0
    neg = L < 0.0
    u[pos] = bounds.u_max[pos]
    u[neg] = bounds.u_min[neg]
    return u


def max_brake_command(q: JointState, bounds: JerkBounds) -> np.ndarray:
    """Jerk that decelerates each joint as hard as possible (used when the
    separation direction is undefined and no constraint can be formed)."""
    u = np.zeros(q.n)
    for i in range(q.n):
        ref = q.theta_dot[i] if abs(q.theta_dot[i]) > 1e-12 else q.theta_ddot[i]
        if ref > 1e-12:
            u[i] = bounds.u_min[i]
        elif ref < -1e-12:
            u[i] = bounds.u_max[i]
    return u


def _solve_equality_diag(u_nom, L, S, lo, hi, v_diag):
    """Exact minimizer with the inequality active (L u = S) and diagonal V.

    The dual variable mu >= 0 moves every free coordinate toward its bound
    in the direction of L; L u(mu) is piecewise linear and nondecreasing,
    so the root is located by scanning saturation breakpoints.
    Returns None when max_u L u < S (infeasible).
    """
    step = np.where(v_diag > 0.0, L / (2.0 * v_diag), 0.0)

    def u_of(mu):
        return np.clip(u_nom + mu * step, lo, hi)

    def g(mu):
        return float(L @ u_of(mu)) - S

    bps = []
    for i in range(len(L)):
        if L[i] == 0.0 or step[i] == 0.0:
            continue
        for bound in (lo[i], hi[i]):
            mu_b = (bound - u_nom[i]) / step[i]
            if mu_b > 0.0 and math.isfinite(mu_b):
                bps.append(mu_b)
    bps = sorted(set(bps))

    mu_prev, g_prev = 0.0, g(0.0)
    if g_prev >= 0.0:
        return u_of(0.0)
    for mu_b in bps:
        g_b = g(mu_b)
        if g_b >= 0.0:
            # linear on [mu_prev, mu_b]
            frac = 0.0 if g_b == g_prev else (0.0 - g_prev) / (g_b - g_prev)
            return u_of(mu_prev + frac * (mu_b - mu_prev))
        mu_prev, g_prev = mu_b, g_b
    # past the last breakpoint every L-coupled coordinate sits at its
    # L-favorable bound, so g is constant: feasible iff it reaches zero
    u_sat = u_of(mu_prev + 1.0)
    if float(L @ u_sat) - S >= -1e-12 * max(1.0, abs(S)):
        return u_sat
    return None


def _kkt_candidates_general(V, u_nom, L, S, lo, hi):
    """Enumerate box active sets for a general PD weight (n small).

    Yields every KKT candidate of the two inequality cases; the caller takes
    the feasible minimum.  Only used off the hot path (non-diagonal V).
    """
    n = len(u_nom)
    for pattern in itertools.product((-1, 0, 1), repeat=n):
        fixed_idx = [i for i, s in enumerate(pattern) if s != 0]
        fixed_val = np.array([lo[i] if pattern[i] < 0 else hi[i] for i in fixed_idx])
        free = [i for i in range(n) if pattern[i] == 0]
        for ineq_active in (False, True):
            u = np.empty(n)
            u[fixed_idx] = fixed_val
            if free:
                Vff = V[np.ix_(free, free)]
                cross = (
                    V[np.ix_(free, fixed_idx)] @ (fixed_val - u_nom[fixed_idx])
                    if fixed_idx
                    else np.zeros(len(free))
                )
                if ineq_active:
                    Lf = L[free]
                    K = np.zeros((len(free) + 1, len(free) + 1))
                    K[:-1, :-1] = 2.0 * Vff
                    K[:-1, -1] = -Lf
                    K[-1, :-1] = Lf
                    b = np.concatenate([
                        2.0 * (Vff @ u_nom[free]) - 2.0 * cross,
                        [S - (float(L[fixed_idx] @ fixed_val) if fixed_idx else 0.0)],
                    ])
                    try:
                        sol = np.linalg.solve(K, b)
                    except np.linalg.LinAlgError:
                        continue
                    u[free] = sol[:-1]
                else:
                    try:
                        u[free] = u_nom[free] - np.linalg.solve(Vff, cross)
                    except np.linalg.LinAlgError:
                        continue
            yield u, ineq_active


def _project_general(V, u_nom, L, S, lo, hi):
    best = None
    for u, ineq_active in _kkt_candidates_general(V, u_nom, L, S, lo, hi):
        if np.any(u < lo - 1e-9) or np.any(u > hi + 1e-9):
            continue
        if float(L @ u) < S - 1e-9:
            continue
        obj = float((u - u_nom) @ V @ (u - u_nom))
        if best is None or obj < best[0] - 0.0:
            best = (obj, np.clip(u, lo, hi))
    return None if best is None else best[1]


def project_safe(
    u_nom,
    constraint: LinearizedConstraint,
    bounds: JerkBounds,
    V: CostMatrix,
) -> SafeControlOutcome:
    """Minimally modify u_nom so that L u >= S holds within the jerk box.

    Passthrough when the nominal command already complies; exact QP
    minimizer otherwise.  When no command in the box can satisfy the
    constraint, the command maximizing L u is emitted (maximal safety
    effort) and fallback_used is set to "max_brake".
    """
    u_nom = np.asarray(u_nom, dtype=float)
    n = bounds.n
    if u_nom.shape != (n,) or constraint.L.shape != (n,):
        raise ValueError("dimension mismatch between command, constraint and bounds")
    if V.V.shape != (n, n):
        raise ValueError("cost matrix dimension mismatch")
    L, S = constraint.L, constraint.S
    lo, hi = bounds.u_min, bounds.u_max

    if float(L @ u_nom) >= S and bounds.contains(u_nom):
        return SafeControlOutcome(
            u_safe=u_nom.copy(), active=False, constraint=constraint,
            fallback_used=FALLBACK_NONE, objective_value=0.0,
        )

    v_diag = V.diag_or_none
    if v_diag is not None:
        u_box = np.clip(u_nom, lo, hi)
        if float(L @ u_box) >= S:
            u_star = u_box
        else:
            u_star = _solve_equality_diag(u_nom, L, S, lo, hi, v_diag)
    else:
        u_star = _project_general(V.V, u_nom, L, S, lo, hi)

    if u_star is None:
        u_star = _max_brake_infeasible(u_nom, L, bounds)
        fallback = FALLBACK_MAX_BRAKE
    else:
        fallback = FALLBACK_NONE
    obj = float((u_star - u_nom) @ V.V @ (u_star - u_nom))
    active = bool(np.max(np.abs(u_star - u_nom)) > _ACTIVE_ATOL)
    return SafeControlOutcome(
        u_safe=u_star, active=active, constraint=constraint,
        fallback_used=fallback, objective_value=obj,
    )


def kkt_residual(u_nom, outcome: SafeControlOutcome, bounds: JerkBounds, V: CostMatrix) -> float:
    """Max KKT violation of a returned solution (stationarity, primal
    feasibility, complementary slackness, dual signs)."""
    u = outcome.u_safe
    L, S = outcome.constraint.L, outcome.constraint.S
    lo, hi = bounds.u_min, bounds.u_max
    grad = 2.0 * (V.V @ (u - np.asarray(u_nom, dtype=float)))

    scale = max(1.0, float(np.max(np.abs(grad))))
    act_eps = 1e-9
    normals = []
    if abs(float(L @ u) - S) <= act_eps * max(1.0, abs(S)):
        normals.append(L)
    for i in range(len(u)):
        if abs(u[i] - hi[i]) <= act_eps * max(1.0, abs(hi[i])):
            e = np.zeros(len(u)); e[i] = -1.0
            normals.append(e)
        if abs(u[i] - lo[i]) <= act_eps * max(1.0, abs(lo[i])):
            e = np.zeros(len(u)); e[i] = 1.0
            normals.append(e)
    primal = max(0.0, float(S - L @ u)) + float(np.sum(np.maximum(0.0, u - hi))) + float(
        np.sum(np.maximum(0.0, lo - u))
    )
    if outcome.fallback_used != FALLBACK_NONE:
        return primal  # stationarity does not apply to the fallback command
    if not normals:
        return max(primal, float(np.max(np.abs(grad))) )
    A = np.stack(normals, axis=1)
    mult, *_ = np.linalg.lstsq(A, grad, rcond=None)
    mult = np.maximum(mult, 0.0)  # dual feasibility enforced, residual shows the gap
    res = grad - A @ mult
    return max(primal, float(np.max(np.abs(res))) / scale)


# ---------------------------------------------------------------------------
# full safeguard steps


def jssa_step(
    u_nom,
    q: JointState,
    chain: KinematicChain,
    agent_capsules: Sequence[BodyCapsule],
    params: SafetyIndexParams,
    bounds: JerkBounds,
    V: CostMatrix,
    tau: float,
    fk=None,
) -> SafeControlOutcome:
    """Monitor the nominal jerk and minimally modify it when needed.

    Pipeline: critical pair -> distance derivatives -> linearized constraint
    -> QP projection.  If the witness points coincide (no separation
    direction) the maximal-braking command is emitted instead.
    """
    u_nom = np.asarray(u_nom, dtype=float)
    stencil = bundle_stencil(chain, q)
    pair = critical_pair(chain, q, agent_capsules, fk=fk, stencil=stencil)
    diag = StepDiagnostics(
        d=pair.distance, robot_link=pair.robot_link, agent_link=pair.agent_link,
        agent_owner=pair.agent_owner,
    )
    delta = pair.delta()
    diag.rel_speed = float(np.linalg.norm(delta[3:6]))
    diag.rel_accel = float(np.linalg.norm(delta[6:9]))
    try:
        d_core, d_dot, d_ddot = distance_derivatives(pair)
        diag.d_dot, diag.d_ddot = d_dot, d_ddot
        diag.phi = float(phi(params, pair.distance, d_dot, d_ddot))
        agent_next = pair.agent_point.predicted(tau)
        constraint = build_constraint(params, pair, pair.bundle, agent_next, q, tau)
    except DegenerateDistance:
        u_brake = max_brake_command(q, bounds)
        out = SafeControlOutcome(
            u_safe=u_brake, active=bool(np.max(np.abs(u_brake - u_nom)) > _ACTIVE_ATOL),
            constraint=None, fallback_used=FALLBACK_MAX_BRAKE,
            objective_value=float((u_brake - u_nom) @ V.V @ (u_brake - u_nom)),
            diagnostics=diag,
        )
        return out
    diag.S = constraint.S
    diag.Lu_nom = float(constraint.L @ u_nom)
    out = project_safe(u_nom, constraint, bounds, V)
    out.diagnostics = diag
    return out


def ssa_step(
    u_nom,
    q: JointState,
    chain: KinematicChain,
    agent_capsules: Sequence[BodyCapsule],
    ssa_params: SafetyIndexParams,
    bounds: JerkBounds,
    tau: float,
    fk=None,
) -> SafeControlOutcome:
    """Acceleration-level baseline with jerk saturation.

    Projects the nominal next acceleration onto the relative-degree-2 safe
    half-space (no acceleration box: the baseline's premise), converts back
    to jerk via (a_safe - a_now) / tau, then clips to the jerk bounds.
    Pre-clip violations are recorded in the diagnostics.
    """
    if ssa_params.lambda1 <= 0.0:
        raise ValueError("the baseline needs lambda1 > 0")
    u_nom = np.asarray(u_nom, dtype=float)
    stencil = bundle_stencil(chain, q)
    pair = critical_pair(chain, q, agent_capsules, fk=fk, stencil=stencil)
    diag = StepDiagnostics(
        d=pair.distance, robot_link=pair.robot_link, agent_link=pair.agent_link,
        agent_owner=pair.agent_owner,
    )
    delta = pair.delta()
    diag.rel_speed = float(np.linalg.norm(delta[3:6]))
    diag.rel_accel = float(np.linalg.norm(delta[6:9]))
    a_nom = q.theta_ddot + tau * u_nom
    try:
        d_core, d_dot, d_ddot = distance_derivatives(pair)
        diag.d_dot, diag.d_ddot = d_dot, d_ddot
        diag.phi = float(phi(ssa_params, pair.distance, d_dot, 0.0))
        agent_next = pair.agent_point.predicted(tau)
        constraint = build_acceleration_constraint(
            ssa_params.d_min, ssa_params.lambda1, pair, pair.bundle, agent_next, q, tau
        )
    except DegenerateDistance:
        u_brake = max_brake_command(q, bounds)
        return SafeControlOutcome(
            u_safe=u_brake, active=True, constraint=None,
            fallback_used=FALLBACK_MAX_BRAKE, objective_value=0.0, diagnostics=diag,
        )
    diag.S = constraint.S
    diag.Lu_nom = float(constraint.L @ a_nom)
    L = constraint.L
    lnorm2 = float(L @ L)
    slack = float(L @ a_nom) - constraint.S
    if slack >= 0.0 and bounds.contains(u_nom):
        # bit-exact passthrough: re-deriving u from a_nom would add rounding
        return SafeControlOutcome(
            u_safe=u_nom.copy(), active=False, constraint=constraint,
            fallback_used=FALLBACK_NONE, objective_value=0.0, diagnostics=diag,
        )
    if slack >= 0.0:
        a_safe = a_nom
    elif lnorm2 <= 1e-16:
        u_brake = max_brake_command(q, bounds)
        return SafeControlOutcome(
            u_safe=u_brake, active=True, constraint=constraint,
            fallback_used=FALLBACK_MAX_BRAKE, objective_value=0.0, diagnostics=diag,
        )
    else:
        a_safe = a_nom - (slack / lnorm2) * L
    u_pre = (a_safe - q.theta_ddot) / tau
    violated = not bounds.contains(u_pre, tol=1e-9)
    u_safe = bounds.clip(u_pre)
    diag.preclip_violation = violated
    active = bool(np.max(np.abs(u_safe - u_nom)) > _ACTIVE_ATOL)
    return SafeControlOutcome(
        u_safe=u_safe, active=active, constraint=constraint,
        fallback_used=FALLBACK_CLIP if violated else FALLBACK_NONE,
        objective_value=float((u_safe - u_nom) @ (u_safe - u_nom)),
        diagnostics=diag,
    )
