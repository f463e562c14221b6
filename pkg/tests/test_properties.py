"""Hypothesis property suite over invariants of every module."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from slimnav.energy import EnergyProfile, cost, episode_energy
from slimnav.eval import rho_heatmap, saturation_analysis
from slimnav.perception import SlimmableConfig, SlimmableNet, emulate_depth
from slimnav.policy import ActionSpace, CurriculumState, QNet, ReplayBuffer, select_action
from slimnav.policy.episode import StepRecord
from slimnav.world import DepthScan, GridWorld, MotionSet, Pose, astar, bfs_action_counts, raycast_depth, step_motion

PROFILE = EnergyProfile.default()
FAST = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def grid(seed, w=12, h=12, density=0.25):
    rng = np.random.default_rng(seed)
    occ = rng.random((h, w)) < density
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    return GridWorld(occ, occ.astype(np.uint8)), rng


@FAST
@given(st.integers(0, 2**31 - 1), st.lists(st.tuples(st.integers(0, 3), st.sampled_from([1, 2, 4, 8])),
                                           min_size=1, max_size=40))
def test_motion_stays_free(seed, moves):
    w, rng = grid(seed)
    cells = w.free_cells()
    if len(cells) == 0:
        return
    ix, iy = cells[rng.integers(len(cells))]
    pose = Pose(ix + rng.random(), iy + rng.random())
    for d, m in moves:
        new, truncated, moved = step_motion(w, pose, d, m)
        assert w.is_free_pose(new) and 0 <= moved <= m
        assert math.isclose(abs(new.x - pose.x) + abs(new.y - pose.y), moved, abs_tol=1e-9)
        assert truncated or moved == m
        pose = new


@FAST
@given(st.integers(0, 2**31 - 1))
def test_astar_optimal_against_bfs(seed):
    w, rng = grid(seed, 10, 10)
    cells = w.free_cells()
    if len(cells) < 2:
        return
    s, t = (w.cell_center(*cells[i]) for i in rng.choice(len(cells), 2, replace=False))
    path = astar(w, s, t, MotionSet((1.0, 2.0)))
    counts = bfs_action_counts(w, s, MotionSet((1.0, 2.0)))
    goal = w.cell_of(t.x, t.y)
    assert (path is None) == (goal not in counts)
    if path is not None:
        assert len(path) == counts[goal]


@FAST
@given(st.integers(0, 2**31 - 1), st.floats(0, 2 * math.pi))
def test_raycast_bounded_and_monotone(seed, theta):
    w, rng = grid(seed, 16, 16, 0.15)
    cells = w.free_cells()
    if len(cells) < 2:
        return
    ix, iy = cells[0]
    pose = Pose(ix + rng.random(), iy + rng.random())
    r = raycast_depth(w, pose).ranges
    assert np.all((r >= 0) & (r <= 40))
    jx, jy = cells[-1]
    r2 = raycast_depth(w.with_cell(int(jx), int(jy)), pose).ranges
    assert np.all(r2 <= r + 1e-12)


@given(st.floats(0.5, 256), st.floats(0.5, 256))
def test_cost_monotone_energy(a, b):
    lo, hi = sorted((a, b))
    assert cost(PROFILE, lo).energy_mj <= cost(PROFILE, hi).energy_mj + 1e-12


@given(st.lists(st.sampled_from([0, 8, 16, 32, 64]), max_size=60))
def test_episode_energy_additive(sizes):
    s = episode_energy(PROFILE, sizes)
    assert s.acquisitions == sum(1 for x in sizes if x > 0)
    assert math.isclose(s.energy_mj, sum(cost(PROFILE, x).energy_mj for x in sizes), abs_tol=1e-9)
    assert (s.mean_power_mw is None) == (s.acquisitions == 0)


@given(st.lists(st.sampled_from([1.0, 2.0, 4.0, 8.0, 3.0]), min_size=1, max_size=4, unique=True),
       st.integers(1, 6), st.data())
def test_action_space_roundtrip(mags, n_gates, data):
    gates = tuple(sorted({0.0, *[1.0 / 2**k for k in range(n_gates)]}))
    space = ActionSpace(MotionSet(tuple(mags)), gates)
    flat = data.draw(st.integers(0, len(space) - 1))
    j = space.decode(flat)
    assert space.encode(j.motion, j.rho_index) == flat and 0 <= j.flat(space.m) < space.n * space.m


@FAST
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 100))
def test_greedy_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    net = QNet(4, 6, hidden=(5,), rng=rng, dtype=np.float64)
    s = rng.normal(size=4)
    a = select_action(net, s, 0.0, rng)
    net.weights[-1] *= scale
    net.biases[-1] *= scale
    assert select_action(net, s, 0.0, rng) == a


@FAST
@given(st.integers(0, 2**31 - 1), st.integers(1, 4),
       st.lists(st.sampled_from([1.0, 0.75, 0.5, 0.25, 0.125]), min_size=1, max_size=4, unique=True))
def test_slice_consistency(seed, alpha, rhos):
    rng = np.random.default_rng(seed)
    cfg = SlimmableConfig(alpha=alpha, rho_set=tuple(sorted(rhos, reverse=True)), rays=3)
    net = SlimmableNet.init(cfg, rng)
    x = rng.normal(size=(4, 6))
    for rho in cfg.rho_set:
        out, _ = net.forward_batch(x, rho)
        h, prev = x, 6
        for w, a, st_ in zip(net.weights[:-1], cfg.active(rho), net.bn[rho]):
            h = np.maximum((h @ w[:a, :prev].T - st_.running_mean) / np.sqrt(st_.running_var + cfg.bn_eps)
                           * st_.gamma + st_.beta, 0)
            prev = a
        np.testing.assert_allclose(out, h @ net.weights[-1][:, :prev].T + net.out_bias, rtol=1e-10, atol=1e-12)


@given(st.lists(st.floats(0, 40), min_size=32, max_size=32), st.sampled_from([0.0, 0.125, 0.25, 0.5, 1.0]),
       st.integers(0, 1000))
def test_emulator_in_range(ranges, rho, seed):
    out = emulate_depth(DepthScan(np.array(ranges), 40.0), rho, rng=np.random.default_rng(seed)).ranges
    assert out.shape == (32,) and np.all((out >= 0) & (out <= 40))


@given(st.dictionaries(st.text(min_size=1, max_size=3), st.frozensets(st.integers(0, 30), max_size=12),
                       min_size=2, max_size=6), st.data())
def test_saturation_curves(sets, data):
    sizes = {k: data.draw(st.sampled_from([1, 2, 4, 8, 16, 32, 64])) for k in sets}
    r = saturation_analysis(sets, sizes)
    union = len(set().union(*sets.values()))
    for curve, gains in ((r.greedy_curve, r.greedy_gains), (r.descending_curve, r.descending_gains)):
        assert curve[-1] == union and list(np.cumsum(gains)) == list(curve)
        assert all(g >= 0 for g in gains)
    assert r.greedy_curve[0] == max(len(s) for s in sets.values())
    assert sorted(r.greedy_order) == sorted(sets) == sorted(r.descending_order)


@given(st.lists(st.tuples(st.floats(0, 31.9), st.floats(0, 31.9), st.sampled_from([0.0, 0.125, 0.5, 1.0])),
                min_size=1, max_size=80), st.sampled_from([1.0, 2.0, 4.0, 8.0]))
def test_heatmap_counts_and_range(events, bin_size):
    tr = [StepRecord(i, x, y, 1.0, r, r, 0, 0, 1.0, 1.0, False, False, None, -1.0, r > 0)
          for i, (x, y, r) in enumerate(events)]
    h = rho_heatmap([tr], bin_size, extent=(32.0, 32.0))
    assert h.count.sum() == len(events)
    vals = h.mean[h.count > 0]
    assert np.all((vals >= 0) & (vals <= 1)) and np.isnan(h.mean[h.count == 0]).all()


@given(st.integers(1, 20), st.integers(0, 60))
def test_replay_keeps_latest(capacity, n):
    buf = ReplayBuffer(capacity, 1)
    for i in range(n):
        buf.add(np.array([i], np.float32), i, float(i), np.array([i], np.float32), False)
    assert len(buf) == min(n, capacity)
    assert [int(buf.get(k).actions[0]) for k in range(len(buf))] == list(range(max(0, n - capacity), n))


@given(st.integers(0, 6), st.integers(1, 50), st.floats(0, 1), st.integers(0, 400))
def test_curriculum_probabilities(max_level, period, top, episodes):
    c = CurriculumState(max_level, period, top)
    for _ in range(episodes):
        c.record_episode()
        p = c.probabilities()
        assert math.isclose(p.sum(), 1.0) and c.level <= max_level and np.all(p >= 0)
    assert c.level == min(episodes // period, max_level)
