import numpy as np
import pytest

from dmca.agent import (
    AgentHyperParams,
    OUNoise,
    PddpgAgent,
    ReplayBuffer,
    Transition,
    pddpg_target,
    soft_update,
    stack,
    train,
)
from dmca.agent.train import write_episode_log
from dmca.env import ChannelConfig, DmcaEnv, RequirementGenerator, generate_synthetic_trace, make_users
from dmca.errors import ConfigError
from dmca.nn import ParamSet


def batch_for(agent, n=8, seed=0, rho=0.0):
    rng = np.random.default_rng(seed)
    trs = [
        Transition(
            rng.normal(size=agent.state_dim),
            rng.uniform(0.05, 0.95, agent.action_dim),
            float(rng.normal()),
            rng.normal(size=agent.state_dim),
            rng.normal(size=agent.state_dim),
            rho,
        )
        for _ in range(n)
    ]
    return stack(trs)


def small_hp(**kw):
    base = dict(hidden=16, batch_size=8, warmup=8, capacity=64)
    base.update(kw)
    return AgentHyperParams(**base)


def test_target_examples():
    assert pddpg_target(1.0, 2.0, 3.0, 0.5, 0.92) == pytest.approx(3.42, rel=1e-12)
    assert pddpg_target(1.0, 2.0, 3.0, 0.0, 0.92) == pytest.approx(1.0 + 0.92 * 2.0, rel=1e-12)
    assert pddpg_target(1.0, 2.0, 3.0, 1.0, 0.92) == pytest.approx(4.0, rel=1e-12)
    assert pddpg_target(1.0, 2.0, 3.0, 0.5, 0.92, discount_predicted=True) == pytest.approx(1 + 0.92 + 1.38)


def test_hyperparam_validation():
    with pytest.raises(ConfigError):
        AgentHyperParams(gamma=0.0)
    with pytest.raises(ConfigError):
        AgentHyperParams(capacity=10, batch_size=32)


def test_ou_noise_recurrence():
    n = OUNoise(1, theta=0.15, sigma=0.0)
    n.state[:] = 1.0
    assert n.sample()[0] == pytest.approx(0.85)
    for _ in range(10):
        n.sample()
    assert n.state[0] == pytest.approx(0.85**11)


def test_actions_stay_inside_open_interval():
    agent = PddpgAgent(6, 3, small_hp(ou_sigma=50.0), seed=0)
    for _ in range(50):
        a = agent.select_action(np.random.default_rng(1).normal(size=6) * 100)
        assert np.all(a > 0) and np.all(a < 1)


def test_zero_noise_is_deterministic_policy():
    agent = PddpgAgent(4, 2, small_hp(ou_sigma=0.0), seed=0)
    s = np.arange(4.0)
    assert np.array_equal(agent.select_action(s), agent.policy(s))


def test_critic_zero_weights_gives_bias_and_determinism():
    agent = PddpgAgent(3, 2, small_hp(), seed=0)
    for name in agent.critic.params:
        agent.critic.params[name][...] = 0.0
    agent.critic.params["critic2.b"][...] = 1.25
    q = agent.critic_value(np.ones((2, 3)), np.full((2, 2), 0.5))
    assert np.all(q == 1.25)
    agent2 = PddpgAgent(3, 2, small_hp(), seed=0)
    s, a = np.ones(3), np.full(2, 0.3)
    assert agent2.critic_value(s, a)[0] == agent2.critic_value(s, a)[0]


def test_action_gradient_matches_finite_differences():
    agent = PddpgAgent(3, 2, small_hp(), seed=1)
    s = np.array([[0.3, -0.2, 0.9]])
    a = np.array([[0.4, 0.6]])
    g = agent.action_gradient(s, a)[0]
    eps = 1e-6
    for j in range(2):
        up, dn = a.copy(), a.copy()
        up[0, j] += eps
        dn[0, j] -= eps
        fd = (agent.critic_value(s, up)[0] - agent.critic_value(s, dn)[0]) / (2 * eps)
        assert abs(fd - g[j]) <= 1e-4 * max(1.0, abs(fd))


def test_critic_exact_fit_has_zero_loss_and_grad():
    agent = PddpgAgent(3, 2, small_hp(), seed=0)
    b = batch_for(agent)
    y = agent.critic_value(b.states, b.actions)
    before = agent.critic.params.copy()
    assert agent.update_critic(b, y) == 0.0
    for name in before:
        assert np.array_equal(before[name], agent.critic.params[name])


def test_critic_loss_decreases_on_frozen_batch():
    agent = PddpgAgent(4, 2, small_hp(), seed=0)
    b = batch_for(agent, n=16)
    y = agent.targets(b)
    losses = [agent.update_critic(b, y) for _ in range(100)]
    smooth = np.convolve(losses, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(smooth) <= 0) and smooth[-1] < smooth[0]


def test_linear_critic_one_step_matches_hand_gradient():
    hp = small_hp(optimizer="sgd", critic_lr=0.1, clip_norm=1e9)
    agent = PddpgAgent(2, 1, hp, seed=0)
    from dmca.nn import MLP, make_optimizer

    agent.critic = MLP([3, 1], ["linear"], np.random.default_rng(0), prefix="critic")
    agent.critic_opt = make_optimizer("sgd", agent.critic.params, 0.1, None)
    W0, b0 = agent.critic.params["critic0.W"].copy(), agent.critic.params["critic0.b"].copy()
    s, a, y = np.array([[1.0, 2.0]]), np.array([[0.5]]), np.array([3.0])
    b = stack([Transition(s[0], a[0], 0.0, s[0], s[0], 0.0)])
    x = np.array([1.0, 2.0, 0.5])
    err = float(x @ W0[:, 0] + b0[0] - y[0])
    agent.update_critic(b, y)
    assert np.allclose(agent.critic.params["critic0.W"][:, 0], W0[:, 0] - 0.1 * 2 * err * x)
    assert agent.critic.params["critic0.b"][0] == pytest.approx(b0[0] - 0.1 * 2 * err)


def test_actor_gradient_zero_when_critic_ignores_action():
    agent = PddpgAgent(3, 2, small_hp(), seed=0)
    agent.critic.params["critic0.W"][3:, :] = 0.0
    assert agent.update_actor(batch_for(agent)) == 0.0


def test_actor_gradient_matches_finite_differences():
    agent = PddpgAgent(3, 2, small_hp(), seed=2)
    b = batch_for(agent, n=4)
    a, rec = agent.actor.forward(b.states)
    dq = agent.action_gradient(b.states, a)
    agent.actor.params.zero_grad()
    agent.actor.backward(rec, -dq / len(b))
    name = "actor0.W"
    analytic = -agent.actor.params.grad(name)  # gradient of mean Q
    w = agent.actor.params[name]
    eps = 1e-6

    def mean_q():
        return float(np.mean(agent.critic_value(b.states, agent.actor(b.states))))

    for idx in [(0, 0), (1, 3), (2, 7)]:
        orig = w[idx]
        w[idx] = orig + eps
        up = mean_q()
        w[idx] = orig - eps
        dn = mean_q()
        w[idx] = orig
        fd = (up - dn) / (2 * eps)
        assert abs(fd - analytic[idx]) <= 1e-4 * max(1.0, abs(fd))


def test_actor_climbs_quadratic_critic():
    hp = small_hp(actor_lr=0.05)
    agent = PddpgAgent(1, 1, hp, seed=0)
    target = 0.3
    # Q(s, a) = -(a - a*)^2 built as a fixed critic stand-in
    agent.action_gradient = lambda s, a: -2.0 * (a - target)
    b = stack([Transition(np.array([1.0]), np.array([0.5]), 0.0, np.array([1.0]), np.array([1.0]), 0.0)])
    for _ in range(3000):
        agent.update_actor(b)
    assert abs(agent.policy(np.array([1.0]))[0] - target) < 1e-2


def test_soft_update_rules():
    a, b = ParamSet(), ParamSet()
    a.add("w", np.zeros(3))
    b.add("w", np.ones(3))
    soft_update(a, b, 0.01)
    assert np.allclose(a["w"], 0.01)
    gaps = []
    for _ in range(5):
        gaps.append(np.linalg.norm(a["w"] - b["w"]))
        soft_update(a, b, 0.01)
    assert np.allclose(np.array(gaps[1:]) / np.array(gaps[:-1]), 0.99)
    soft_update(a, b, 1.0)
    assert np.array_equal(a["w"], b["w"])
    with pytest.raises(ConfigError):
        soft_update(a, b, 0.0)


def test_replay_fifo_and_sampling():
    buf = ReplayBuffer(3, np.random.default_rng(0))
    for i in range(5):
        buf.push(Transition(np.array([i]), np.array([0.5]), float(i), np.array([i]), np.array([i]), 0.0))
    assert len(buf) == 3
    assert [t.reward for t in buf.oldest_first()] == [2.0, 3.0, 4.0]
    b = buf.sample(3)
    assert sorted(b.rewards.tolist()) == [2.0, 3.0, 4.0]


def test_zero_confidence_is_standard_ddpg_bit_exact():
    """ϱ ≡ 0: the predicted-state term drops out of target and update."""
    hp = small_hp()
    one = PddpgAgent(5, 2, hp, seed=7)
    two = PddpgAgent(5, 2, hp, seed=7)
    b1 = batch_for(one, n=8, seed=3, rho=0.0)
    b2 = batch_for(two, n=8, seed=3, rho=0.0)
    b2.pred_states = np.zeros_like(b2.pred_states)  # what a predictor-less run stores
    q_next = one.critic_value(b1.next_states, one.actor_target(b1.next_states), target=True)
    standard = b1.rewards + hp.gamma * q_next
    assert np.array_equal(one.targets(b1), standard)
    for _ in range(5):
        assert one.learn(b1) == two.learn(b2)
    for name in one.critic.params:
        assert np.array_equal(one.critic.params[name], two.critic.params[name])


def tiny_env(slots=60, seed=0):
    trace = generate_synthetic_trace("sum-of-sinusoids", slots, 4, seed=seed, doppler=0.01)
    cfg = ChannelConfig.from_paper(4)
    gen = RequirementGenerator(1.5e-7, 4e-7, seed=seed)
    return DmcaEnv(trace, cfg, make_users([0.85, 0.95], 2), gen)


def test_one_episode_one_step_stores_one_transition():
    env = tiny_env()
    res = train(env, small_hp(episodes=1, max_steps=1, warmup=1, batch_size=1), seed=0)
    assert res.steps.tolist() == [1]
    assert len(res.critic_loss) <= 1


def test_training_is_deterministic(tmp_path):
    hp = small_hp(episodes=4, max_steps=10)
    a = train(tiny_env(), hp, seed=3)
    b = train(tiny_env(), hp, seed=3)
    write_episode_log(tmp_path / "a.csv", a.episodes)
    write_episode_log(tmp_path / "b.csv", b.episodes)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_checkpoint_round_trip(tmp_path):
    agent = PddpgAgent(4, 2, small_hp(), seed=0)
    agent.save(str(tmp_path / "ag"))
    other = PddpgAgent(4, 2, small_hp(), seed=9)
    other.load(str(tmp_path / "ag"))
    s = np.linspace(-1, 1, 4)
    assert np.array_equal(agent.policy(s), other.policy(s))


def penalty_loss(agent, states, c):
    _, rec = agent.actor.forward(states)
    z = agent.actor.output_logits(rec)
    return c * np.sum(z * z) / len(states)


def test_logit_penalty_gradient_matches_finite_differences():
    agent = PddpgAgent(4, 2, small_hp(hidden=5, logit_penalty=0.3), seed=2)
    for name in agent.critic.params:  # flat critic: the penalty is the whole actor objective
        agent.critic.params[name][...] = 0.0
    b = batch_for(agent, n=6, seed=1)
    before = agent.actor.params.copy()
    agent.update_actor(b)
    grads = {n: agent.actor.params.grad(n).copy() for n in agent.actor.params}
    agent.actor.params.assign(before)
    eps = 1e-6
    for name in agent.actor.params:
        flat = agent.actor.params[name].reshape(-1)
        for j in range(0, flat.size, 3):
            orig = flat[j]
            flat[j] = orig + eps
            up = penalty_loss(agent, b.states, 0.3)
            flat[j] = orig - eps
            down = penalty_loss(agent, b.states, 0.3)
            flat[j] = orig
            assert grads[name].reshape(-1)[j] == pytest.approx((up - down) / (2 * eps), rel=1e-5, abs=1e-9)


def test_logit_penalty_pulls_saturated_outputs_inward():
    agent = PddpgAgent(3, 1, small_hp(hidden=4, logit_penalty=1.0, actor_lr=0.05, optimizer="sgd"), seed=0)
    for name in agent.critic.params:
        agent.critic.params[name][...] = 0.0
    agent.actor.params["actor2.b"][...] = 30.0  # sigmoid(30): gradient of Q alone is ~1e-13
    b = batch_for(agent, n=8, seed=0)
    start = np.abs(agent.actor.output_logits(agent.actor.forward(b.states)[1])).mean()
    for _ in range(50):
        agent.update_actor(b)
    end = np.abs(agent.actor.output_logits(agent.actor.forward(b.states)[1])).mean()
    assert end < 0.5 * start
    with pytest.raises(ConfigError):
        AgentHyperParams(logit_penalty=-1.0)
