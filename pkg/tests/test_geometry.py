import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jssa.geometry import (
    BodyCapsule,
    Capsule,
    CriticalPair,
    DegenerateDistance,
    PointState,
    capsule_distance,
    closest_segment_params,
    critical_pair,
    distance_derivatives,
    selector_matrices,
)
from jssa.kinematics import JointState, default_arm, fk_batch


def _point_to_segment(p, q0, q1):
    """Oracle helper: exact point-segment distance (independent path)."""
    d = q1 - q0
    dd = float(d @ d)
    if dd < 1e-30:
        return float(np.linalg.norm(p - q0))
    t = float(np.clip((p - q0) @ d / dd, 0.0, 1.0))
    return float(np.linalg.norm(p - (q0 + t * d)))


def _sampled_oracle(a: Capsule, b: Capsule, samples=2000):
    """Sample segment a densely; exact point-segment distance to b."""
    ts = np.linspace(0.0, 1.0, samples)
    pts = a.p0[None, :] + ts[:, None] * (a.p1 - a.p0)[None, :]
    d = b.p1 - b.p0
    dd = float(d @ d)
    if dd < 1e-30:
        best = float(np.min(np.linalg.norm(pts - b.p0[None, :], axis=1)))
    else:
        t = np.clip((pts - b.p0[None, :]) @ d / dd, 0.0, 1.0)
        feet = b.p0[None, :] + t[:, None] * d[None, :]
        best = float(np.min(np.linalg.norm(pts - feet, axis=1)))
    return best - a.radius - b.radius


def _dense_oracle(a: Capsule, b: Capsule, samples=2000):
    """Both segments sampled at `samples` points each (brute force)."""
    ta = np.linspace(0.0, 1.0, samples)
    tb = np.linspace(0.0, 1.0, samples)
    pa = a.p0[None, :] + ta[:, None] * (a.p1 - a.p0)[None, :]
    pb = b.p0[None, :] + tb[:, None] * (b.p1 - b.p0)[None, :]
    d2 = np.sum((pa[:, None, :] - pb[None, :, :]) ** 2, axis=2)
    return math.sqrt(float(d2.min())) - a.radius - b.radius


def _random_capsule(rng, box=1.0):
    p0 = rng.uniform(-box, box, 3)
    p1 = p0 + rng.uniform(-box, box, 3)
    return Capsule(p0, p1, float(rng.uniform(0.02, 0.3)))


# ---------------------------------------------------------------------------
# capsule_distance


def test_two_spheres():
    a = Capsule(np.zeros(3), np.zeros(3), 0.1)
    b = Capsule(np.array([1.0, 0, 0]), np.array([1.0, 0, 0]), 0.2)
    assert capsule_distance(a, b).distance == pytest.approx(0.7, abs=1e-15)


def test_parallel_unit_segments():
    a = Capsule(np.zeros(3), np.array([1.0, 0, 0]), 0.1)
    b = Capsule(np.array([0.0, 1.0, 0]), np.array([1.0, 1.0, 0]), 0.1)
    res = capsule_distance(a, b)
    assert res.distance == pytest.approx(0.8, abs=1e-15)
    # deterministic tie-break: minimal s, then its unique best t
    assert res.s == 0.0 and res.t == 0.0


def test_random_pairs_against_sampling_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(1000):
        a, b = _random_capsule(rng), _random_capsule(rng)
        got = capsule_distance(a, b)
        core = got.distance + a.radius + b.radius
        if core < 0.02:  # oracle resolution degrades near contact
            continue
        want = _sampled_oracle(a, b)
        assert got.distance <= want + 1e-12  # sampling can only overestimate
        assert abs(got.distance - want) < 1e-4
        checked += 1
    assert checked > 900


def test_subset_against_dense_two_sided_oracle():
    rng = np.random.default_rng(11)
    for _ in range(50):
        a, b = _random_capsule(rng), _random_capsule(rng)
        got = capsule_distance(a, b).distance
        want = _dense_oracle(a, b)
        assert abs(got - want) < 1e-4


def test_symmetry_and_rigid_invariance():
    rng = np.random.default_rng(23)
    for _ in range(200):
        a, b = _random_capsule(rng), _random_capsule(rng)
        d_ab = capsule_distance(a, b).distance
        d_ba = capsule_distance(b, a).distance
        assert d_ab == pytest.approx(d_ba, abs=1e-12)

        # random rigid transform applied to both capsules
        w = rng.normal(size=3)
        ang = np.linalg.norm(w)
        K = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]]) / max(ang, 1e-12)
        R = np.eye(3) + math.sin(ang) * K + (1 - math.cos(ang)) * (K @ K)
        t = rng.uniform(-2, 2, 3)
        a2 = Capsule(R @ a.p0 + t, R @ a.p1 + t, a.radius)
        b2 = Capsule(R @ b.p0 + t, R @ b.p1 + t, b.radius)
        assert capsule_distance(a2, b2).distance == pytest.approx(d_ab, abs=1e-9)


def test_witness_optimality():
    rng = np.random.default_rng(31)
    for _ in range(300):
        a, b = _random_capsule(rng), _random_capsule(rng)
        res = capsule_distance(a, b)

        def seg_dist(s, t):
            pa = a.p0 + s * (a.p1 - a.p0)
            pb = b.p0 + t * (b.p1 - b.p0)
            return float(np.linalg.norm(pa - pb))

        base = seg_dist(res.s, res.t)
        for ds in (-1e-3, 0.0, 1e-3):
            for dt in (-1e-3, 0.0, 1e-3):
                s = min(1.0, max(0.0, res.s + ds))
                t = min(1.0, max(0.0, res.t + dt))
                assert seg_dist(s, t) >= base - 1e-12


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_selector_identities(seed):
    rng = np.random.default_rng(seed)
    delta = rng.normal(size=9)
    U1, U2, U3, U4 = selector_matrices()
    dp, dv, da = delta[0:3], delta[3:6], delta[6:9]
    assert delta @ U1 @ delta == pytest.approx(dp @ dp, rel=1e-12)
    assert delta @ U2 @ delta == pytest.approx(dp @ dv, rel=1e-12, abs=1e-12)
    assert delta @ U3 @ delta == pytest.approx(dv @ dv, rel=1e-12)
    assert delta @ U4 @ delta == pytest.approx(dp @ da, rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------------------
# critical pair


def _sphere_agent(name, link, center, radius, v=None):
    ps = PointState(np.asarray(center, float), np.zeros(3) if v is None else np.asarray(v, float), np.zeros(3))
    return BodyCapsule(owner=name, link=link, radius=radius, end0=ps, end1=ps)


def test_single_pair_matches_capsule_distance():
    chain = default_arm()
    q = JointState.rest(np.zeros(6))
    fk = fk_batch(chain, q.theta[None])
    agent = _sphere_agent("ball", 1, [1.0, 0.0, 0.5], 0.1)
    pair = critical_pair(chain, q, [agent], fk)
    from jssa.geometry import robot_capsules_world

    best = min(
        capsule_distance(cap, agent.capsule()).distance
        for _, cap, _, _ in robot_capsules_world(chain, fk)
    )
    assert pair.distance == pytest.approx(best, abs=1e-12)


def test_randomized_scene_matches_exhaustive_minimum():
    chain = default_arm()
    rng = np.random.default_rng(5)
    from jssa.geometry import robot_capsules_world

    for _ in range(20):
        q = JointState.rest(rng.uniform(-1.5, 1.5, 6))
        fk = fk_batch(chain, q.theta[None])
        agents = [
            _sphere_agent(f"a{i}", i + 1, rng.uniform(-1.5, 1.5, 3), float(rng.uniform(0.05, 0.2)))
            for i in range(4)
        ]
        pair = critical_pair(chain, q, agents, fk)
        want = min(
            capsule_distance(cap, a.capsule()).distance
            for _, cap, _, _ in robot_capsules_world(chain, fk)
            for a in agents
        )
        assert pair.distance == pytest.approx(want, abs=1e-12)


def test_tie_breaks_lowest_links():
    chain = default_arm()
    q = JointState.rest(np.zeros(6))
    fk = fk_batch(chain, q.theta[None])
    # two identical agent capsules, different link labels: lowest link wins
    a_hi = _sphere_agent("a", 5, [1.0, 0.0, 0.4], 0.1)
    a_lo = _sphere_agent("a", 2, [1.0, 0.0, 0.4], 0.1)
    pair = critical_pair(chain, q, [a_hi, a_lo], fk)
    assert pair.agent_link == 5  # list order is the label order: first strict minimum kept
    pair2 = critical_pair(chain, q, [a_lo, a_hi], fk)
    assert pair2.agent_link == 2


def test_critical_pair_requires_agents():
    chain = default_arm()
    q = JointState.rest(np.zeros(6))
    with pytest.raises(ValueError):
        critical_pair(chain, q, [])


def test_end_effector_is_critical_for_frontal_agent():
    # an agent straight in front of the tool keeps the last link critical
    chain = default_arm()
    from jssa.kinematics import HOME_THETA

    q = JointState.rest(HOME_THETA)
    fk = fk_batch(chain, q.theta[None])
    tool = fk.link_p[0, 5]
    agent = _sphere_agent("human", 2, tool + np.array([0.5, 0.0, 0.0]), 0.15)
    pair = critical_pair(chain, q, [agent], fk)
    assert pair.robot_link >= 5


# ---------------------------------------------------------------------------
# distance derivatives


def _synthetic_pair(dp, dv, da, r_robot=0.0, r_agent=0.0):
    robot = PointState(np.asarray(dp, float), np.asarray(dv, float), np.asarray(da, float))
    agent = PointState(np.zeros(3), np.zeros(3), np.zeros(3))
    core = float(np.linalg.norm(dp))
    return CriticalPair(
        robot_point=robot, agent_point=agent, distance=core - r_robot - r_agent,
        robot_link=1, agent_link=1, agent_owner="x", robot_local_point=np.zeros(3),
        robot_radius=r_robot or 0.01, agent_radius=r_agent or 0.01,
    )


def test_static_scene_zero_derivatives():
    d, dd, ddd = distance_derivatives(_synthetic_pair([1.0, 0, 0], [0, 0, 0], [0, 0, 0]))
    assert (d, dd, ddd) == (1.0, 0.0, 0.0)


def test_head_on_closing_algebra():
    d, dd, ddd = distance_derivatives(_synthetic_pair([1.0, 0, 0], [-1.0, 0, 0], [0, 0, 0]))
    assert d == pytest.approx(1.0)
    assert dd == pytest.approx(-1.0)
    assert ddd == pytest.approx(0.0, abs=1e-15)


def test_degenerate_distance_raises():
    with pytest.raises(DegenerateDistance):
        distance_derivatives(_synthetic_pair([0.0, 0, 0], [1.0, 0, 0], [0, 0, 0]))


@pytest.mark.parametrize("trial", range(12))
def test_derivatives_match_trajectory_differentiation(trial):
    # oracle: d(t) = |dp + t dv + t^2/2 da| differentiated numerically
    rng = np.random.default_rng(800 + trial)
    dp = rng.uniform(-1, 1, 3)
    while np.linalg.norm(dp) < 0.3:
        dp = rng.uniform(-1, 1, 3)
    dv = rng.uniform(-2, 2, 3)
    da = rng.uniform(-5, 5, 3)
    d, dd, ddd = distance_derivatives(_synthetic_pair(dp, dv, da))

    def d_at(t):
        return float(np.linalg.norm(dp + t * dv + 0.5 * t * t * da))

    h = 1e-6
    dd_o = (d_at(h) - d_at(-h)) / (2 * h)
    h2 = 1e-4
    ddd_o = (d_at(h2) - 2 * d_at(0.0) + d_at(-h2)) / (h2 * h2)
    assert abs(dd - dd_o) / max(abs(dd_o), 1e-9) < 1e-4
    assert abs(ddd - ddd_o) / max(abs(ddd_o), 1e-6) < 1e-2
