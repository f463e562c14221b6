import numpy as np
import pytest

from slimnav.energy import EnergyProfile
from slimnav.errors import ContractViolation
from slimnav.nn import max_relative_error, numeric_gradient
from slimnav.perception import EmulatorBackend, GroundTruthBackend
from slimnav.policy import (GOAL_REWARD, TIMEOUT_REWARD, ActionSpace, Batch, CurriculumState, FixedAgent,
                            ObservationQueue, OracleAgent, PolicyConfig, QNet, RandomAgent, ReplayBuffer,
                            TaskConfig, check_gate_timing, double_dqn_targets, double_dqn_update, greedy_results,
                            load_policy, pose_features, read_curve, reward, run_episode, save_policy,
                            select_action, train_policy, write_curve)
from slimnav.world import (EAST, WEST, DifficultyIndex, EpisodeSpec, GridWorld, MotionSet, ObservationCache, Pose,
                           build_holdout_sets, sample_episode)

PROFILE = EnergyProfile.default()


def bias_net(q, input_size=1, dtype=np.float64):
    """QNet without hidden layers whose outputs are the constant vector ``q``."""
    net = QNet(input_size, len(q), hidden=(), dtype=dtype)
    net.weights[0][:] = 0
    net.biases[0][:] = q
    net.sync_target()
    return net


# -- reward --------------------------------------------------------------------------------


def test_reward_constants():
    task = TaskConfig(alpha=256)
    assert reward("goal", 3.0, 1.0, PROFILE, task) == 40.0
    assert reward("timeout", 3.0, 1.0, PROFILE, task) == -10.0
    assert round(reward("step", 5.0, 0.5, PROFILE, task), 4) == -2.0293
    assert reward("step", 0.0, 0.0, PROFILE, task) == -1.0
    with pytest.raises(ContractViolation):
        reward("step", -1.0, 1.0, PROFILE, task)


# -- action space and selection ------------------------------------------------------------


def test_action_space_layout():
    space = ActionSpace()
    assert (space.n, space.m, len(space)) == (5, 16, 80)
    for flat in range(80):
        j = space.decode(flat)
        assert 0 <= j.motion < 16 and 0 <= j.rho_index < 5 and j.flat(16) == flat
    assert space.encode(3, 2) == 35 and space.first_rho == 1.0
    with pytest.raises(ContractViolation):
        space.decode(80)


def test_epsilon_one_uniform():
    net = bias_net(np.arange(80.0))
    rng = np.random.default_rng(0)
    n = 100_000
    counts = np.bincount([select_action(net, np.zeros(1), 1.0, rng) for _ in range(n)], minlength=80)
    p = 1 / 80
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)


def test_greedy_unique_max_and_tie():
    q = np.zeros(16)
    q[7] = 1.0
    assert select_action(bias_net(q), np.zeros(1), 0.0, np.random.default_rng(0)) == 7
    q = np.zeros(16)
    q[3] = q[9] = 2.0
    assert select_action(bias_net(q), np.zeros(1), 0.0, np.random.default_rng(0)) == 3


def test_argmax_scale_invariance():
    rng = np.random.default_rng(1)
    net = QNet(6, 10, hidden=(8,), rng=rng, dtype=np.float64)
    states = rng.normal(size=(50, 6))
    before = [select_action(net, s, 0.0, rng) for s in states]
    for w in (net.weights[-1], net.biases[-1]):
        w *= 3.7
    assert [select_action(net, s, 0.0, rng) for s in states] == before


# -- double DQN ------------------------------------------------------------------------------


def test_double_dqn_target_toy():
    net = bias_net(np.array([1.0, 5.0]))
    net.target_biases[0][:] = [10.0, 2.0]
    batch = Batch(np.zeros((1, 1)), np.array([0]), np.array([0.0]), np.zeros((1, 1)), np.array([0.0]))
    assert double_dqn_targets(net, batch, 0.9)[0] == pytest.approx(1.8, abs=1e-12)


def test_terminal_target_ignores_next_state():
    net = bias_net(np.array([100.0, -3.0]))
    batch = Batch(np.zeros((1, 1)), np.array([1]), np.array([40.0]), np.ones((1, 1)), np.array([1.0]))
    assert double_dqn_targets(net, batch, 0.99)[0] == 40.0


def test_bellman_chain_fixed_point():
    # A --(r=0)--> B --(r=1, terminal)--> end; one action; Q*(B)=1, Q*(A)=gamma
    gamma = 0.9
    net = QNet(2, 1, hidden=(8,), rng=np.random.default_rng(0), lr=1e-2, dtype=np.float64)
    s = np.array([[1.0, 0.0], [0.0, 1.0]])
    batch = Batch(s, np.array([0, 0]), np.array([0.0, 1.0]), np.array([[0.0, 1.0], [0.0, 0.0]]),
                  np.array([0.0, 1.0]))
    for i in range(3000):
        double_dqn_update(net, batch, gamma)
        if (i + 1) % 100 == 0:
            net.sync_target()
    q = net.q_values(s)[:, 0]
    assert abs(q[1] - 1.0) <= 1e-3 and abs(q[0] - gamma) <= 1e-3


def test_update_leaves_target_untouched_until_sync():
    rng = np.random.default_rng(2)
    net = QNet(4, 3, hidden=(5,), rng=rng, dtype=np.float64)
    target = [w.copy() for w in net.target_weights]
    batch = Batch(rng.normal(size=(8, 4)), rng.integers(3, size=8), rng.normal(size=8), rng.normal(size=(8, 4)),
                  np.zeros(8))
    for _ in range(5):
        double_dqn_update(net, batch, 0.9)
        assert all(np.array_equal(a, b) for a, b in zip(target, net.target_weights))
    assert any(not np.array_equal(a, b) for a, b in zip(net.weights, net.target_weights))
    net.sync_target()
    assert all(np.array_equal(a, b) for a, b in zip(net.weights, net.target_weights))


def test_update_contract():
    net = QNet(2, 2, hidden=(), dtype=np.float64)
    empty = Batch(np.zeros((0, 2)), np.zeros(0, int), np.zeros(0), np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ContractViolation):
        double_dqn_update(net, empty, 0.9)
    one = Batch(np.zeros((1, 2)), np.zeros(1, int), np.zeros(1), np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(ContractViolation):
        double_dqn_update(net, one, 1.0)


def test_huber_gradient_check():
    rng = np.random.default_rng(3)
    net = QNet(5, 4, hidden=(6, 5), rng=rng, dtype=np.float64)
    for b in net.biases:
        b[:] = rng.normal(0, 0.3, len(b))
    states = rng.normal(size=(10, 5))
    actions = rng.integers(4, size=10)
    targets = rng.normal(0, 2, size=10)  # mixes the quadratic and linear Huber regimes
    _, analytic = net.loss_and_grads(states, actions, targets)
    numeric = numeric_gradient(lambda: net.loss_and_grads(states, actions, targets)[0], net.parameters(), 1e-5)
    assert max_relative_error(analytic, numeric) <= 1e-4


# -- replay buffer -------------------------------------------------------------------------------


def test_replay_fifo_and_roundtrip():
    buf = ReplayBuffer(3, 2)
    items = [(np.array([i, -i], np.float32), i, float(i) / 3, np.array([i + 0.5, 1], np.float32), i % 2 == 0)
             for i in range(5)]
    for it in items:
        buf.add(*it)
    assert len(buf) == 3
    for k, (s, a, r, s2, term) in enumerate(items[2:]):
        b = buf.get(k)
        assert np.array_equal(b.states[0], s) and b.actions[0] == a and b.rewards[0] == r
        assert np.array_equal(b.next_states[0], s2) and b.terminals[0] == float(term)
    with pytest.raises(ContractViolation):
        buf.add(np.array([np.nan, 0]), 0, 0.0, np.zeros(2), False)


# -- curriculum ------------------------------------------------------------------------------------


def test_curriculum_trace():
    c = CurriculumState(max_level=3, period=10)
    changes = []
    for ep in range(1, 61):
        if c.record_episode():
            changes.append((ep, c.level, c.uniform))
    assert changes == [(10, 1, False), (20, 2, False), (30, 3, False), (40, 3, True)]
    assert np.allclose(c.probabilities(), 0.25)


def test_curriculum_mix():
    c = CurriculumState(max_level=4, period=10, level=3)
    p = c.probabilities()
    assert p.sum() == pytest.approx(1.0) and p[3] == 0.7 and p[4] == 0.0 and p[0] == pytest.approx(0.1)
    rng = np.random.default_rng(0)
    draws = np.bincount([c.sample(rng) for _ in range(20_000)], minlength=5) / 20_000
    assert np.allclose(draws, p, atol=0.015)


# -- observation queue -----------------------------------------------------------------------------


def test_queue_zero_padding_and_order():
    q = ObservationQueue(3, 4, 40.0)
    assert np.array_equal(q.vector(), np.zeros(27, np.float32)) and q.mean_depth() is None
    q.push(np.full(4, 20.0), np.ones(5))
    v = q.vector()
    assert np.all(v[:8] == 0) and np.all(v[8:12] == 0.5) and np.all(v[12:22] == 0) and np.all(v[22:] == 1)
    q.push(np.zeros(4), np.ones(5))  # bypass scan
    assert q.mean_depth() == 20.0
    for _ in range(3):
        q.push(np.full(4, 40.0), np.full(5, 0.5))
    assert np.all(q.vector()[:12] == 1.0)


def test_pose_features_bounded():
    w = GridWorld.empty(10, 20)
    f = pose_features(w, Pose(1.5, 1.5), Pose(8.5, 18.5))
    assert np.all(np.abs(f) <= 1) and f[3] ** 2 + f[4] ** 2 == pytest.approx(1.0)


# -- episodes -----------------------------------------------------------------------------------------


def corridor():
    return GridWorld.empty(30, 3)  # single free row y=1, x in [1, 28]


def world_setup(world, backend_cls=None):
    obs = ObservationCache(world, noise_seed=0)
    be = backend_cls(obs) if backend_cls else GroundTruthBackend(obs, rho_set=(1.0, 0.5, 0.25, 0.125))
    return DifficultyIndex(world), be


def test_zero_step_success():
    w = corridor()
    idx, be = world_setup(w)
    ep = EpisodeSpec(Pose(5.5, 1.5), Pose(6.5, 1.5), 1, (0,))
    res = run_episode(w, be, PROFILE, FixedAgent(0), ep, ActionSpace(), TaskConfig(), np.random.default_rng(0))
    assert res.success and res.steps == 0 and res.total_reward == GOAL_REWARD and res.energy_mj == 0


def test_forced_timeout():
    w = corridor()
    idx, be = world_setup(w)
    ep = idx.make_episode(idx.index_of(Pose(10.5, 1.5)), idx.index_of(Pose(25.5, 1.5)))
    space = ActionSpace()
    away = space.encode(space.motion_set.encode(WEST, 1.0), space.gates.index(1.0))
    task = TaskConfig()
    res = run_episode(w, be, PROFILE, FixedAgent(away), ep, space, task, np.random.default_rng(0))
    assert not res.success and res.steps == task.budget(ep.difficulty) == 20
    assert res.trace[-1].reward == TIMEOUT_REWARD
    assert all(s.reward < 0 for s in res.trace)
    assert res.acquisitions == res.steps and res.energy_mj == pytest.approx(20 * 196.4)


def test_oracle_agent_replays_plan():
    w = GridWorld.empty(16, 16)
    idx, be = world_setup(w)
    rng = np.random.default_rng(1)
    space = ActionSpace()
    for _ in range(20):
        ep = sample_episode(idx, 1, rng)
        res = run_episode(w, be, PROFILE, OracleAgent(space), ep, space, TaskConfig(), rng)
        assert res.success and res.steps <= ep.difficulty
        assert res.acquisitions == 1  # only the first stage, at the widest gate
        check_gate_timing(res, space.first_rho)


def test_gate_timing_and_bypass_random_agent():
    w = GridWorld.empty(16, 16)
    idx, be = world_setup(w, lambda obs: EmulatorBackend(obs, seed=0))
    rng = np.random.default_rng(2)
    space = ActionSpace()
    for _ in range(30):
        ep = sample_episode(idx, 1, rng)
        res = run_episode(w, be, PROFILE, RandomAgent(space), ep, space, TaskConfig(), rng)
        check_gate_timing(res, space.first_rho)
        assert res.trace[0].rho == 1.0
        for s in res.trace:
            if s.rho == 0:
                assert not s.acquired
        zero = sum(s.rho == 0 for s in res.trace)
        assert res.acquisitions == res.steps - zero


def test_gate_timing_detects_violation():
    w = GridWorld.empty(16, 16)
    idx, be = world_setup(w)
    ep = sample_episode(idx, 1, np.random.default_rng(3))
    res = run_episode(w, be, PROFILE, RandomAgent(ActionSpace()), ep, ActionSpace(), TaskConfig(),
                      np.random.default_rng(3))
    res.trace[1].rho = 0.5 if res.trace[0].gate != 0.5 else 0.25
    with pytest.raises(ContractViolation):
        check_gate_timing(res, 1.0)


def test_sink_receives_consistent_transitions():
    w = GridWorld.empty(16, 16)
    idx, be = world_setup(w)
    got = []
    ep = sample_episode(idx, 1, np.random.default_rng(4))
    res = run_episode(w, be, PROFILE, RandomAgent(ActionSpace()), ep, ActionSpace(), TaskConfig(),
                      np.random.default_rng(4), sink=lambda *t: got.append(t))
    assert len(got) == res.steps
    assert [t[2] for t in got] == [s.reward for s in res.trace]
    assert [t[4] for t in got] == [False] * (res.steps - 1) + [True]
    for (s, a, r, s2, term), nxt in zip(got, got[1:]):
        assert np.array_equal(s2, nxt[0])


# -- training ------------------------------------------------------------------------------------------


def small_training(energy_weight=2.0, episodes=400, seed=0):
    w = GridWorld.empty(12, 12)
    idx = DifficultyIndex(w)
    val = build_holdout_sets(idx, {"validation": 10}, seed=0, region="all", min_separation=2.0)["validation"]
    be = EmulatorBackend(ObservationCache(w, noise_seed=0), seed=0)
    cfg = PolicyConfig(episodes=episodes, validate_every=200, curriculum_period=100, learn_start=200,
                       target_sync=200, task=TaskConfig(energy_weight=energy_weight), seed=seed)
    return w, be, val, cfg, train_policy(w, be, PROFILE, idx, val, cfg)


def test_training_deterministic_and_checkpoint_roundtrip(tmp_path):
    *_, a = small_training(episodes=300)
    w, be, val, cfg, b = small_training(episodes=300)
    assert a.curve == b.curve
    assert all(np.array_equal(x, y) for x, y in zip(a.qnet.parameters(), b.qnet.parameters()))
    save_policy(tmp_path / "p.npz", a.qnet, a.space, cfg, config_hash="abc")
    qnet, space, cfg2, meta = load_policy(tmp_path / "p.npz", expect_hash="abc")
    assert space == a.space and cfg2 == cfg and meta["rho_set"] == [0.125, 0.25, 0.5, 1.0]
    assert all(np.array_equal(x, y) for x, y in zip(qnet.parameters(), a.qnet.parameters()))
    with pytest.raises(ContractViolation):
        load_policy(tmp_path / "p.npz", expect_hash="other")
    write_curve(tmp_path / "c.csv", a.curve)
    assert read_curve(tmp_path / "c.csv") == a.curve


def test_energy_weight_pushes_rho_down():
    means = {}
    for we in (0.0, 2.0):
        w, be, val, cfg, res = small_training(energy_weight=we, episodes=800)
        rs = greedy_results(w, be, PROFILE, res.qnet, val, res.space, cfg.task)
        means[we] = np.mean([s.gate for r in rs for s in r.trace])
    assert means[0.0] >= means[2.0]


def test_policy_config_epsilon_schedule():
    cfg = PolicyConfig(episodes=1000)
    assert cfg.epsilon(0) == 1.0 and cfg.epsilon(200) == pytest.approx(0.525)
    assert cfg.epsilon(400) == pytest.approx(0.05) and cfg.epsilon(999) == pytest.approx(0.05)
    assert PolicyConfig.from_json(cfg.to_json()) == cfg


def test_training_rejects_mismatched_motion_sets():
    w = GridWorld.empty(12, 12)
    idx = DifficultyIndex(w, MotionSet((1.0, 2.0)))
    be = GroundTruthBackend(ObservationCache(w))
    ep = EpisodeSpec(Pose(1.5, 1.5), Pose(8.5, 1.5), 1, (0,))
    with pytest.raises(ContractViolation):
        train_policy(w, be, PROFILE, idx, [ep], PolicyConfig(episodes=1))
