"""Acceptance criteria 1 to 10; the summary prints one PASS/FAIL line for each."""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from ofdma_marl.actions import EPS_POWER, Allocation, PowerLevels, decode, feasibility_violations, normalize_power
from ofdma_marl.actions import validity_mask
from ofdma_marl.baselines import MethodKind, heuristic_allocation
from ofdma_marl.channel import (
    ChannelConfig,
    FadingState,
    LargeScaleGains,
    init_fading,
    init_large_scale,
    own_cell_mask,
    own_gains,
    power_gains,
    step_fading,
)
from ofdma_marl.env import (
    EnvConfig,
    InterferenceGraph,
    OFDMAEnv,
    complete_graph,
    compute_sinr,
    crosslink_sample,
    leakage,
    neighbor_aggregates,
    path_graph,
    per_ue_rates,
    shaped_rewards,
    team_reward,
    update_crosslink_avg,
    update_occupancy,
    update_virtual_queues,
)
from ofdma_marl.federation import (
    advantage_disagreement_check,
    consensus_experiment,
    contraction_factor,
    disagreement,
    gossip_mix,
    identity_mixing,
    metropolis_weights,
)
from ofdma_marl.harness.config import reduced_config
from ofdma_marl.harness.experiments import run_trend
from ofdma_marl.harness.training import run_training
from ofdma_marl.learner import (
    CriticNet,
    HeadDists,
    ParamVector,
    PolicyNet,
    actor_loss_and_grad,
    critic_loss_and_grad,
    gae_advantages,
    log_softmax,
    policy_forward,
    sample_action,
    sample_categorical,
)
from ofdma_marl.oracle import enumerate_and_solve, enumerate_decisions, objective_value, random_instance

TOL = 1e-10


def close(a, b, tol=TOL):
    np.testing.assert_allclose(a, b, rtol=tol, atol=tol)


# ---------------------------------------------------------------------------
# criterion 1: equation-level examples


def c_zero_shadowing():
    cfg = ChannelConfig(n_bs=2, n_subcarriers=2, ues_per_cell=2, sigma_pl=0.0, crosslink_scale=1.0)
    a = init_large_scale(cfg, np.random.default_rng(0)).alpha
    close(a[np.broadcast_to(own_cell_mask(2), a.shape)], math.exp(-2.3))


def c_seed_determinism():
    cfg = ChannelConfig(n_bs=2, n_subcarriers=3, ues_per_cell=2)
    a = init_large_scale(cfg, np.random.default_rng(4)).alpha
    b = init_large_scale(cfg, np.random.default_rng(4)).alpha
    assert a.tobytes() == b.tobytes()


def c_rho_zero_and_one():
    cfg = ChannelConfig(n_bs=2, n_subcarriers=3, ues_per_cell=2)
    h = init_fading(cfg, np.random.default_rng(0))
    fresh = step_fading(FadingState(np.zeros_like(h.h)), 0.0, np.random.default_rng(1))
    assert np.array_equal(step_fading(h, 0.0, np.random.default_rng(1)).h, fresh.h)
    assert np.array_equal(step_fading(h, 1.0, np.random.default_rng(1)).h, h.h)


def c_power_gain():
    one = (1, 1, 1, 1)
    close(power_gains(LargeScaleGains(np.full(one, 2.0)), FadingState(np.full(one, 1 + 0j))), 2.0)
    close(power_gains(LargeScaleGains(np.full(one, 0.5)), FadingState(np.zeros(one, complex))), 0.0)


def c_sinr_single_and_pair():
    alloc = Allocation(np.ones((1, 1, 1), np.int8), np.ones((1, 1)))
    close(compute_sinr(alloc, np.full((1, 1, 1, 1), 2.0), 1e-3)[0, 0, 0], 2000.0)
    alloc2 = Allocation(np.ones((2, 1, 1), np.int8), np.ones((2, 1)))
    close(compute_sinr(alloc2, np.ones((2, 1, 2, 1)), 1e-3)[:, 0, 0], 1 / 1.001)


def c_rates():
    alloc = Allocation(np.ones((1, 1, 1), np.int8), np.ones((1, 1)))
    r, c = per_ue_rates(alloc, np.ones((1, 1, 1)), 1.0)
    close(r, 1.0)
    close(c, 1.0)
    x = np.zeros((1, 2, 2), np.int8)
    x[0, :, 0] = 1
    r, _ = per_ue_rates(Allocation(x, np.ones((1, 2))), np.full((1, 2, 2), 3.0), 1.0)
    assert r[0, 1] == 0.0


def c_queues():
    close(update_virtual_queues(np.array([0.0]), 2.0, np.array([5.0])), 0.0)
    close(update_virtual_queues(np.array([1.0]), 2.0, np.array([0.5])), 2.5)
    q = np.array([1.7])
    for _ in range(50):
        q = update_virtual_queues(q, 2.0, np.array([2.0]))
    close(q, 1.7)


def c_occupancy():
    close(update_occupancy(np.zeros(1), np.ones(1), 0.9), 0.1)
    ema = np.zeros(1)
    for t in range(1, 30):
        ema = update_occupancy(ema, np.ones(1), 0.9)
        close(1 - ema, 0.9 ** t)
    close(update_occupancy(np.array([0.3]), np.ones(1), 1.0), 0.3)


def c_neighbor_stats():
    mean, mx = neighbor_aggregates(np.array([[0.2], [0.9], [0.6]]), path_graph(3))
    close(mean[1], 0.4)
    close(mx[1], 0.6)
    mean, mx = neighbor_aggregates(np.full((4, 2), 0.35), path_graph(4))
    close(mean, mx)


def c_rewards():
    g = path_graph(2)
    zeros = np.zeros((2, 1))
    c_nk = np.array([[3.0, 0.0], [1.0, 0.0]])
    br = shaped_rewards(np.ones((2, 1)), c_nk, np.ones((2, 2)), zeros, np.ones((2, 2, 2)), g, 0.0, 1.0)
    close(br.shaped, c_nk.sum(-1))
    br = shaped_rewards(np.array([[1.0], [0.0]]), c_nk, np.ones((2, 2)), np.array([[2.0], [0.0]]),
                        np.ones((2, 2, 2)), g, 0.0, 1.0)
    close(br.shaped[0], 5.0)
    br = shaped_rewards(np.zeros((2, 1)), np.zeros((2, 2)), np.zeros((2, 2)), np.ones((2, 1)),
                        np.ones((2, 2, 2)), g, 0.1, 1.0)
    close(br.leakage, 0.0)
    close(br.shaped, 0.0)
    close(team_reward([1.0, 2.0, 3.0]), 6.0)
    close(team_reward([0.0, 0.0]), 0.0)


def c_crosslink():
    gains = np.random.default_rng(0).exponential(size=(3, 2, 3, 2))
    close(update_crosslink_avg(np.ones((3, 3, 2)), gains, 0.0), crosslink_sample(gains))
    g_bar = np.zeros((3, 3, 2))
    for _ in range(4000):
        g_bar = update_crosslink_avg(g_bar, gains, 0.99)
    close(g_bar, crosslink_sample(gains))
    assert leakage(np.zeros((3, 2)), g_bar, path_graph(3), 1.0).sum() == 0.0


def c_env_mute_and_frozen():
    ch = ChannelConfig(n_bs=3, n_subcarriers=4, ues_per_cell=2)
    env = OFDMAEnv(EnvConfig(channel=ch, warmup_slots=3, fading_rho=1.0), np.random.default_rng(0))
    env.reset()
    res = env.step(Allocation.mute(3, 4, 2))
    assert res.team_reward == 0.0
    close(env.state.q, 2.0)
    alloc = decode(np.ones((3, 4), int), np.zeros((3, 4), int), np.full((3, 4), 2), env.cfg.levels, 2)
    first = env.step(alloc).rates
    for _ in range(3):
        assert np.array_equal(env.step(alloc).rates, first)


def c_action_space():
    levels = PowerLevels()
    z = np.zeros((2, 3), int)
    a = decode(z, z, z, levels, 2)
    assert not a.x.any() and not a.p.any()
    a = decode(np.ones((1, 2), int), np.zeros((1, 2), int), np.full((1, 2), 3), levels, 2)
    close(a.p, 0.6 / (1.2 + EPS_POWER))
    close(normalize_power(np.array([0.2, 0.3]), 1.0), [0.2, 0.3])
    close(normalize_power(np.array([1.0, 1.0]), 1.0), 1 / (2 + EPS_POWER))
    assert not normalize_power(np.zeros(3), 1.0).any()
    ue, lv = validity_mask(np.array([0, 1]), 3, 5)
    assert not ue[0].any() and not lv[0].any() and ue[1].all() and lv[1].all()


def c_policy_heads():
    net = PolicyNet(2, 3, 5, (4,))
    params = ParamVector(np.zeros(net.layout.size), net.layout)
    d = policy_forward(net, params, np.random.default_rng(0).normal(size=(1, 4, 2)))
    ones = np.ones((1, 4), int)
    close(d.log_prob(ones, 0 * ones, 2 * ones).sum(), 4 * (math.log(0.5) + math.log(1 / 3) + math.log(1 / 5)))
    mute = np.zeros((1, 4), int)
    close(d.log_prob(mute, 0 * ones, 0 * ones), d.log_prob(mute, 2 * ones, 4 * ones))
    rng = np.random.default_rng(1)
    p2 = net.init(rng, out_scale=1.0)
    _, lp, _ = sample_action(net, p2, rng.normal(size=(4, 2)), rng)
    assert np.all(np.isfinite(lp)) and np.all(lp <= 0)
    a1 = sample_action(net, p2, np.ones((4, 2)), np.random.default_rng(3))[0]
    a2 = sample_action(net, p2, np.ones((4, 2)), np.random.default_rng(3))[0]
    assert np.array_equal(a1.m, a2.m) and np.array_equal(a1.l, a2.l)
    lp = log_softmax(np.array([[0.0, 900.0]]))
    assert np.all(sample_categorical(np.repeat(lp, 200, 0), rng) == 1)
    close(HeadDists(lp[None], lp[None], lp[None]).entropy(), 0.0)


def c_gae():
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=5), rng.normal(size=5)
    adv, _ = gae_advantages(r, v, 0.3, 0.9, 0.0)
    close(adv, r + 0.9 * np.append(v[1:], 0.3) - v)
    adv, _ = gae_advantages(r, v, 0.3, 1.0, 1.0)
    close(adv, [r[t:].sum() + 0.3 - v[t] for t in range(5)])


def c_zero_advantage_and_critic():
    rng = np.random.default_rng(2)
    net = PolicyNet(3, 2, 2, (4,))
    params = net.init(rng, out_scale=1.0)
    feats = rng.normal(size=(2, 3, 3))
    u, m, l = rng.integers(0, 2, (2, 3)), rng.integers(0, 2, (2, 3)), rng.integers(0, 2, (2, 3))
    old = policy_forward(net, params, feats).log_prob(u, m, l)
    assert not actor_loss_and_grad(net, params, feats, u, m, l, old, np.zeros(2), 0.2, 0.0)[1].any()
    critic = CriticNet(3, (4,))
    zero = ParamVector(np.zeros(critic.layout.size), critic.layout)
    assert not critic.value(zero, feats).any()
    p = critic.init(rng)
    assert critic.value(p, feats).tobytes() == critic.value(p.copy(), feats).tobytes()


def c_federation():
    close(metropolis_weights(path_graph(3)).w, np.array([[2, 1, 0], [1, 1, 1], [0, 1, 2]]) / 3)
    close(metropolis_weights(complete_graph(2)).w, 0.5)
    close(contraction_factor(identity_mixing(InterferenceGraph(np.zeros((3, 3), bool)))), 1.0)
    close(contraction_factor(np.full((4, 4), 0.25)), 0.0)
    w7 = metropolis_weights(path_graph(7))
    net = CriticNet(2, (3,))
    v = net.init(np.random.default_rng(0))
    for out in gossip_mix([v.copy() for _ in range(7)], w7):
        close(out.data, v.data)
    a, b = ParamVector(np.zeros(v.data.size), v.layout), ParamVector(np.full(v.data.size, 3.0), v.layout)
    for out in gossip_mix([a, b], metropolis_weights(complete_graph(2))):
        close(out.data, 1.5)
    assert disagreement([np.ones(2)] * 3) == 0.0
    close(disagreement([np.array([0.0]), np.array([2.0])]), 2.0)
    psi = np.random.default_rng(1).normal(size=(4, 3))
    close(disagreement(psi + 7.0), disagreement(psi))
    single = consensus_experiment(InterferenceGraph(np.zeros((1, 1), bool)), 50, seed=0)
    assert not single.disagreements().any()
    rep = advantage_disagreement_check(np.ones((3, 2)), np.random.default_rng(2).normal(size=(3, 9, 2)),
                                       np.zeros(8), 0.99)
    assert rep.max_gap == 0.0


EQUATION_CHECKS = [
    c_zero_shadowing, c_seed_determinism, c_rho_zero_and_one, c_power_gain, c_sinr_single_and_pair, c_rates,
    c_queues, c_occupancy, c_neighbor_stats, c_rewards, c_crosslink, c_env_mute_and_frozen, c_action_space,
    c_policy_heads, c_gae, c_zero_advantage_and_critic, c_federation,
]


@pytest.mark.criterion(1, "equation-level examples exact to 1e-10, under 5 s")
def test_criterion_01_equation_examples(record_property):
    start = time.perf_counter()
    failures = []
    for check in EQUATION_CHECKS:
        try:
            check()
        except AssertionError as exc:
            failures.append(f"{check.__name__}: {exc}")
    elapsed = time.perf_counter() - start
    record_property("detail", f"{len(EQUATION_CHECKS)} groups, {len(failures)} failing, {elapsed:.2f} s")
    assert not failures, failures
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# criterion 2: feasibility


@pytest.mark.criterion(2, "10^4 random action tensors decode feasibly, under 30 s")
def test_criterion_02_feasibility(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    levels = PowerLevels()
    N, K, M, L = 7, 32, 8, levels.n_levels
    n = 10_000
    u = rng.integers(0, 2, (n, N, K))
    # raw tensors include out-of-range indices on muted subcarriers, which decoding ignores
    m = np.where(u == 1, rng.integers(0, M, (n, N, K)), rng.integers(-5, 20, (n, N, K)))
    l = np.where(u == 1, rng.integers(0, L, (n, N, K)), rng.integers(-5, 20, (n, N, K)))
    alloc = decode(u, m, l, levels, M)
    violations = sum(bool(feasibility_violations(Allocation(alloc.x[i], alloc.p[i]), levels.budget))
                     for i in range(n))
    elapsed = time.perf_counter() - start
    record_property("detail", f"{n} tensors, {violations} violations, {elapsed:.1f} s")
    assert violations == 0
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# criterion 3: gradients


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


@pytest.mark.criterion(3, "analytic gradients match central differences, rel. error < 1e-4")
def test_criterion_03_gradients(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    policy = PolicyNet(3, 3, 4, (5,))
    critic = CriticNet(3, (6, 4))
    assert policy.layout.size <= 100 and critic.layout.size <= 100
    worst = 0.0
    for _ in range(100):
        theta = policy.init(rng, out_scale=1.0)
        feats = rng.normal(size=(1, 4, 3))
        u, m, l = rng.integers(0, 2, (1, 4)), rng.integers(0, 3, (1, 4)), rng.integers(0, 4, (1, 4))
        adv = rng.normal(size=1)
        old = policy_forward(policy, theta, feats).log_prob(u, m, l) + rng.normal(scale=0.05, size=(1, 4))

        def actor_loss(x):
            return actor_loss_and_grad(policy, theta.with_data(x), feats, u, m, l, old, adv, 0.2, 0.01)[0]

        g = actor_loss_and_grad(policy, theta, feats, u, m, l, old, adv, 0.2, 0.01)[1]
        worst = max(worst, rel_err(g, central_diff(actor_loss, theta.data)))

        psi = critic.init(rng)
        target = rng.normal(size=1)
        gc = critic_loss_and_grad(critic, psi, feats, target)[1]
        fdc = central_diff(lambda x: critic_loss_and_grad(critic, psi.with_data(x), feats, target)[0], psi.data)
        worst = max(worst, rel_err(gc, fdc))
    elapsed = time.perf_counter() - start
    record_property("detail", f"worst relative error {worst:.2e} over 100 triples "
                              f"({policy.layout.size}-parameter actor, {critic.layout.size}-parameter critic), "
                              f"{elapsed:.1f} s")
    assert worst < 1e-4
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# criterion 4: consensus under periodic gossip


@pytest.mark.criterion(4, "consensus on quadratic losses with periodic gossip")
def test_criterion_04_consensus(record_property):
    start = time.perf_counter()
    graph = path_graph(7)
    w = metropolis_weights(graph)
    sigma = contraction_factor(w)
    assert sigma < 1
    lines = [f"sigma = {sigma:.6f}"]
    for period in (1, 5):
        res = consensus_experiment(graph, 5000, period=period, scale=0.1, seed=0)
        assert len(np.unique(res.targets.round(12), axis=0)) == 7
        d, g2 = res.disagreements(), res.grad_norms() ** 2
        lines.append(f"K_g={period}: terminal/initial disagreement {d[-1] / d[0]:.2e}, "
                     f"min ||grad F||^2 {g2.min():.2e}")
        assert d[-1] < 1e-3 * d[0]
        assert g2.min() < 1e-4

    pure = consensus_experiment(graph, 80, gradients=False, seed=1)
    d = pure.disagreements()
    s = np.arange(d.size)
    envelope = sigma ** (2 * s) * d[0]
    assert np.all(d <= 1.05 * envelope)
    # the per-round contraction settles on sigma^2 once the slowest mode dominates
    late = d[41:] / d[40:-1]
    lines.append(f"pure gossip: max d_s / envelope {np.max(d / envelope):.3f}, "
                 f"late contraction / sigma^2 in [{late.min() / sigma ** 2:.4f}, {late.max() / sigma ** 2:.4f}]")
    assert np.all(np.abs(late / sigma ** 2 - 1) < 0.05)
    elapsed = time.perf_counter() - start
    lines.append(f"{elapsed:.1f} s")
    for line in lines:
        record_property("detail", line)
    assert elapsed < 120.0


# ---------------------------------------------------------------------------
# criterion 5: advantage disagreement bound


@pytest.mark.criterion(5, "advantage gap bound holds pointwise for linear critics")
def test_criterion_05_advantage_bound(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    holds, worst = 0, 0.0
    for _ in range(20):
        psi = rng.normal(size=(7, 6))
        feats = rng.uniform(-1, 1, size=(7, 129, 6))
        rep = advantage_disagreement_check(psi, feats, rng.normal(size=128), 0.99)
        # the Lipschitz constant is the exact max feature norm over the rollout
        assert rep.lipschitz == np.max(np.linalg.norm(feats, axis=-1))
        holds += rep.holds
        worst = max(worst, float(np.max(rep.gaps / rep.bounds[:, None])))
    elapsed = time.perf_counter() - start
    record_property("detail", f"bound held on {holds}/20 critic sets, worst gap/bound {worst:.3f}, {elapsed:.2f} s")
    assert holds == 20
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# criterion 6: oracle equivalence


@pytest.mark.criterion(6, "environment reward pipeline equals the oracle objective")
def test_criterion_06_oracle_equivalence(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    worst, heuristic_excess = 0.0, -np.inf
    for _ in range(50):
        inst = random_instance(rng, n_bs=2, n_sub=2, n_ue=2, levels=(0.35, 1.0))
        sol = enumerate_and_solve(inst)
        u, m, l = enumerate_decisions(inst)
        alloc = decode(u, m, l, inst.levels, inst.n_ue)
        ch = ChannelConfig(n_bs=2, n_subcarriers=2, ues_per_cell=2, noise_psd_times_df=inst.noise,
                           delta_f=inst.delta_f)
        env = OFDMAEnv(EnvConfig(channel=ch, levels=inst.levels, r_min=float(inst.r_min[0, 0]), lambda_int=0.0,
                                 warmup_slots=0), np.random.default_rng(1), complete_graph(2))
        env.reset(LargeScaleGains(inst.gains), FadingState(np.ones(inst.gains.shape, complex)))
        env.state = replace(env.state, q=inst.queues.copy())
        _, _, _, br = env.evaluate(alloc)
        team = br.shaped.sum(axis=-1)
        const = float((inst.queues * inst.r_min).sum())
        err = np.abs(team - const - sol.values) / np.maximum(1.0, np.abs(sol.values))
        worst = max(worst, float(err.max()))
        g = own_gains(inst.gains)
        for kind in (MethodKind.GREEDY, MethodKind.QOS):
            val = objective_value(inst, heuristic_allocation(kind, g, inst.queues, inst.levels))[0]
            heuristic_excess = max(heuristic_excess, val - sol.value)
    elapsed = time.perf_counter() - start
    record_property("detail", f"50 instances x 625 decisions, worst relative mismatch {worst:.1e}, "
                              f"max heuristic minus optimum {heuristic_excess:.3f}, {elapsed:.1f} s")
    assert worst <= 1e-9
    assert heuristic_excess <= 0.0
    assert elapsed < 120.0


# ---------------------------------------------------------------------------
# criterion 7: virtual queues


@pytest.mark.criterion(7, "virtual queues drain with surplus and grow linearly when muted")
def test_criterion_07_virtual_queues(record_property):
    ch = ChannelConfig(n_bs=2, n_subcarriers=4, ues_per_cell=2)
    levels = PowerLevels()
    # fixed allocation on a frozen channel: UE m gets subcarriers m and m + 2
    m = np.tile([0, 1, 0, 1], (2, 1))
    alloc = decode(np.ones((2, 4), int), m, np.full((2, 4), 4), levels, 2)
    probe = OFDMAEnv(EnvConfig(channel=ch, warmup_slots=2, fading_rho=1.0), np.random.default_rng(3))
    probe.reset()
    rates = probe.step(alloc).rates
    delta = 0.2 * float(rates.min())
    r_min = float(rates.min()) - delta
    assert np.all(rates >= r_min + delta)

    env = OFDMAEnv(EnvConfig(channel=ch, warmup_slots=2, fading_rho=1.0, r_min=r_min), np.random.default_rng(3))
    env.reset()
    # every UE starts with 5.2 slots' worth of the smallest surplus
    q0 = np.full((2, 2), 5.2 * delta)
    env.state = replace(env.state, q=q0.copy())
    bound = math.ceil(q0.max() / delta)
    hit = None
    for t in range(1, bound + 4):
        env.step(alloc)
        if hit is None and not env.state.q.any():
            hit = t
        if hit is not None:
            assert not env.state.q.any()
    record_property("detail", f"surplus {delta:.4f}: queues empty after {hit} slots (bound {bound})")
    assert hit is not None and hit <= bound

    env = OFDMAEnv(EnvConfig(channel=ch, warmup_slots=2, r_min=2.0), np.random.default_rng(4))
    env.reset()
    start = np.array([[0.0, 1.0], [2.5, 0.25]])
    env.state = replace(env.state, q=start.copy())
    for t in range(1, 101):
        env.step(Allocation.mute(2, 4, 2))
        assert np.array_equal(env.state.q, start + 2.0 * t)
    record_property("detail", "all-mute: queues grew by exactly r_min = 2 per slot for 100 slots")


# ---------------------------------------------------------------------------
# criterion 8: trends at reduced scale


@pytest.mark.slow
@pytest.mark.criterion(8, "reduced-scale trends: proposed method vs centralized-critic baseline (B1)")
def test_criterion_08_trends(record_property):
    start = time.perf_counter()
    res = run_trend(reduced_config(), seeds=(0, 1, 2), methods=("fedcritic", "ctde"))
    elapsed = time.perf_counter() - start
    for line in res.report():
        record_property("detail", line)
    record_property("detail", f"total {elapsed / 60:.1f} min")
    assert elapsed < 30 * 60
    assert res.accepted(min_seeds=2), "\n".join(res.report())


# ---------------------------------------------------------------------------
# criterion 9: determinism


@pytest.mark.criterion(9, "identical config and seed give byte-identical exports")
def test_criterion_09_determinism(tmp_path, record_property):
    cfg = reduced_config(n_updates=4, eval_every=2, n_seeds=2, episodes_per_seed=2)
    run_training(cfg, out_dir=tmp_path / "a")
    run_training(cfg, out_dir=tmp_path / "b")
    names = ["metrics.csv", "summary.json", "manifest.json"]
    names += [str(p.relative_to(tmp_path / "a")) for p in sorted((tmp_path / "a" / "checkpoints").rglob("*.ckpt"))]
    same = [(tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names]
    record_property("detail", f"{sum(same)}/{len(names)} files identical")
    assert all(same)


# ---------------------------------------------------------------------------
# criterion 10: mixing matrix


@pytest.mark.criterion(10, "Metropolis weights on the 7-node path and mean-preserving gossip")
def test_criterion_10_mixing_matrix(record_property):
    graph = path_graph(7)
    w = metropolis_weights(graph)
    assert np.abs(w.w.sum(axis=0) - 1).max() <= 1e-12
    assert np.abs(w.w.sum(axis=1) - 1).max() <= 1e-12
    off = ~np.eye(7, dtype=bool)
    assert np.all((w.w[off] > 0) == graph.adjacency[off])
    sigma = contraction_factor(w)
    assert sigma < 1
    rng = np.random.default_rng(0)
    net = CriticNet(8, (16, 16))
    worst = 0.0
    for _ in range(100):
        ps = [ParamVector(rng.normal(scale=rng.uniform(0.1, 10), size=net.layout.size), net.layout)
              for _ in range(7)]
        before = np.mean([p.data for p in ps], axis=0)
        after = np.mean([p.data for p in gossip_mix(ps, w)], axis=0)
        worst = max(worst, float(np.linalg.norm(after - before) / np.linalg.norm(before)))
    record_property("detail", f"sigma = {sigma:.6f}, worst relative mean drift {worst:.1e}")
    assert worst <= 1e-10
