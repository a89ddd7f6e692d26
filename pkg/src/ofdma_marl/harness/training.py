"""Training loop shared by every learning method.

Per update round: every BS collects ``horizon`` slots with its own actor,
advantages come from its local critic (or from the centralized critic),
PPO runs locally, and finally parameters are gossiped if the method calls
for it and the round index is a multiple of the gossip period.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..baselines import MethodSpec, method_spec
from ..env import OFDMAEnv, path_graph
from ..federation import GossipSchedule, disagreement, gossip_mix, metropolis_weights
from ..learner import (
    Adam,
    CriticNet,
    PolicyNet,
    PPOBatch,
    ParamVector,
    RewardScaler,
    feature_dim,
    fit_critic,
    gae_advantages,
    joint_features,
    ppo_update,
    sample_action,
    save_checkpoint,
)
from ..actions import decode
from .config import ExperimentConfig
from .evaluation import PolicySet, heuristic_policy, run_evaluation
from .export import write_records_csv, write_summary_json
from .metrics import MetricRecord


@dataclass
class Agents:
    """Networks, per-BS parameters and optimizer states of one run."""

    spec: MethodSpec
    policy: PolicyNet
    critic: CriticNet
    actors: list[ParamVector]
    critics: list[ParamVector]  # one entry when the critic is centralized
    actor_opts: list[Adam]
    critic_opts: list[Adam]
    # replicated at every BS; identical because every BS sees the same team reward
    reward_scaler: RewardScaler = field(default_factory=RewardScaler)

    def policy_set(self) -> PolicySet:
        return PolicySet(self.spec.kind, self.policy, self.actors)

    def critic_disagreement(self) -> float:
        return disagreement(self.critics) if len(self.critics) > 1 else 0.0

    def actor_disagreement(self) -> float:
        return disagreement(self.actors) if len(self.actors) > 1 else 0.0


def build_agents(cfg: ExperimentConfig, spec: MethodSpec) -> Agents:
    """Initialize actors first (BS order), then critics, all from the init stream."""
    rng = cfg.rng("init")
    d = feature_dim(cfg.ues_per_cell)
    policy = PolicyNet(d, cfg.ues_per_cell, len(cfg.levels), cfg.hidden)
    n_critics = 1 if spec.central_critic else cfg.n_bs
    critic = CriticNet(d * cfg.n_bs if spec.central_critic else d, cfg.hidden)
    actors = [policy.init(rng) for _ in range(cfg.n_bs)]
    critics = [critic.init(rng) for _ in range(n_critics)]
    return Agents(
        spec, policy, critic, actors, critics,
        [Adam(policy.layout.size, cfg.lr_actor) for _ in range(cfg.n_bs)],
        [Adam(critic.layout.size, cfg.lr_critic) for _ in range(n_critics)],
        RewardScaler(cfg.beta),
    )


@dataclass
class Rollout:
    feats: np.ndarray  # (H, N, K, d)
    last_feats: np.ndarray  # (N, K, d)
    u: np.ndarray  # (H, N, K)
    m: np.ndarray
    l: np.ndarray
    logp: np.ndarray  # (H, N, K)
    rewards: np.ndarray  # (H,) learner reward, scaled
    raw_rewards: np.ndarray  # (H,) before scaling


def collect_rollout(env: OFDMAEnv, agents: Agents, cfg: ExperimentConfig, rng: np.random.Generator) -> Rollout:
    """Fresh episode of ``horizon`` slots; all BSs act from their local observations."""
    ps = agents.policy_set()
    layout = env.cfg.obs_layout
    N = cfg.n_bs
    feats, us, ms, ls, logps, rewards = [], [], [], [], [], []
    obs = env.reset()
    agents.reward_scaler.reset_episode()
    for _ in range(cfg.horizon):
        f = ps.features(obs, layout)
        draws = [sample_action(agents.policy, agents.actors[n], f[n], rng) for n in range(N)]
        u = np.stack([a.u for a, _, _ in draws])
        m = np.stack([a.m for a, _, _ in draws])
        l = np.stack([a.l for a, _, _ in draws])
        res = env.step(decode(u, m, l, env.cfg.levels, env.cfg.n_ue))
        r = res.team_reward
        if not agents.spec.use_queues:
            r -= float(res.breakdown.qos.sum())
        feats.append(f)
        us.append(u)
        ms.append(m)
        ls.append(l)
        logps.append(np.stack([lp for _, lp, _ in draws]))
        agents.reward_scaler.observe(r)
        rewards.append(r)
        obs = res.observations
    return Rollout(np.stack(feats), ps.features(obs, layout), np.stack(us), np.stack(ms), np.stack(ls),
                   np.stack(logps), agents.reward_scaler.scale(rewards), np.asarray(rewards))


@dataclass
class UpdateLog:
    update: int
    mean_reward: float
    critic_disagreement: float  # after this round's gossip
    actor_disagreement: float
    aborted: bool
    value_ev: float = 0.0  # explained variance of pre-update values vs returns


@dataclass
class TrainingResult:
    cfg: ExperimentConfig
    records: list[MetricRecord]
    logs: list[UpdateLog] = field(default_factory=list)
    agents: Agents | None = None

    @property
    def final(self) -> MetricRecord:
        return self.records[-1]


def explained_variance(pred, target) -> float:
    var = float(np.var(target))
    return 0.0 if var == 0.0 else 1.0 - float(np.var(target - pred)) / var


def train_round(env, agents: Agents, cfg: ExperimentConfig, update: int, rngs: dict, schedule: GossipSchedule,
                w) -> UpdateLog:
    ppo = cfg.ppo_config()
    spec = agents.spec
    ro = collect_rollout(env, agents, cfg, rngs["act"])
    ent = ppo.entropy_coef(update - 1, cfg.n_updates)
    aborted = False

    if spec.central_critic:
        # one value function on the per-subcarrier concatenation of all BSs' features
        cfeats = [joint_features(list(np.moveaxis(ro.feats, 1, 0)))]  # (H, K, N d)
        clast = [joint_features(list(ro.last_feats[:, None]))]  # (1, K, N d)
    else:
        cfeats = [ro.feats[:, n] for n in range(cfg.n_bs)]
        clast = [ro.last_feats[n][None] for n in range(cfg.n_bs)]

    # advantages from the pre-update critics, then value regression
    advs, evs = [], []
    for i, (f, fl) in enumerate(zip(cfeats, clast)):
        v = agents.critic.value(agents.critics[i], f)
        last_v = float(agents.critic.value(agents.critics[i], fl)[0])
        adv, ret = gae_advantages(ro.rewards, v, last_v, cfg.beta, cfg.gae_lambda)
        advs.append(adv)
        evs.append(explained_variance(v, ret))
        agents.critics[i], loss = fit_critic(agents.critic, agents.critics[i], f, ret, ppo, rngs["shuffle"],
                                             agents.critic_opts[i])
        aborted |= not np.isfinite(loss)

    for n in range(cfg.n_bs):
        adv = advs[0] if spec.central_critic else advs[n]
        batch = PPOBatch(ro.feats[:, n], ro.u[:, n], ro.m[:, n], ro.l[:, n], ro.logp[:, n], adv, adv)
        agents.actors[n], _, diag = ppo_update(
            agents.policy, None, agents.actors[n], None, batch, ppo, ent, rngs["shuffle"],
            agents.actor_opts[n], None)
        aborted |= diag["aborted"]

    if spec.gossip and schedule.mixes_at(update):
        if spec.gossip == "critic":
            agents.critics = gossip_mix(agents.critics, w)
        else:
            agents.actors = gossip_mix(agents.actors, w)
    return UpdateLog(update, float(ro.raw_rewards.mean()), agents.critic_disagreement(),
                     agents.actor_disagreement(), bool(aborted), float(np.mean(evs)))


def write_checkpoints(out: Path, agents: Agents, update: int) -> list[str]:
    base = out / "checkpoints" / f"update_{update:04d}"
    written = []
    for n, a in enumerate(agents.actors):
        path = base / f"actor_{n}.ckpt"
        save_checkpoint(path, a, agents.policy.descriptor(), "actor", n, update)
        written.append(str(path.relative_to(out)))
    for n, c in enumerate(agents.critics):
        path = base / f"critic_{n}.ckpt"
        role = "central_critic" if agents.spec.central_critic else "critic"
        save_checkpoint(path, c, agents.critic.descriptor(), role, n, update)
        written.append(str(path.relative_to(out)))
    return written


def _write_manifest(out: Path, status: str, completed: int, files: list[str], error: str | None = None):
    doc = {"status": status, "completed_updates": completed, "files": sorted(files)}
    if error:
        doc["error"] = error
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run_training(cfg: ExperimentConfig, out_dir=None, progress=None, keep_agents: bool = True) -> TrainingResult:
    """Train ``cfg.method`` for ``cfg.n_updates`` rounds with periodic evaluation.

    Evaluation runs before the first round (update 0), every ``eval_every``
    rounds and after the last one. If ``out_dir`` (or ``cfg.out_dir``) is set,
    checkpoints go to ``checkpoints/update_XXXX/`` at each evaluation and
    ``metrics.csv``, ``summary.json`` and ``manifest.json`` are kept current.
    On an I/O error the manifest records what was completed before the
    error propagates. Heuristic methods skip training and are evaluated once.
    """
    spec = method_spec(cfg.method)
    out = Path(out_dir or cfg.out_dir) if (out_dir or cfg.out_dir) else None
    files: list[str] = []
    done = 0

    def persist(records, agents, update):
        if out is None:
            return
        if agents is not None:
            files.extend(write_checkpoints(out, agents, update))
        write_records_csv(records, out / "metrics.csv")
        write_summary_json(out / "summary.json", records, cfg.to_dict())
        for name in ("metrics.csv", "summary.json"):
            if name not in files:
                files.append(name)
        _write_manifest(out, "running", update, files)

    try:
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        if not spec.learning:
            records = [run_evaluation(heuristic_policy(spec.kind, cfg.heuristic_level), cfg, keep_traces=False).record]
            persist(records, None, 0)
            if out is not None:
                _write_manifest(out, "complete", 0, files)
            return TrainingResult(cfg, records)

        graph = path_graph(cfg.n_bs, cfg.graph_radius)
        env = OFDMAEnv(cfg.env_config(), cfg.rng("channel"), graph)
        agents = build_agents(cfg, spec)
        w = metropolis_weights(graph)
        schedule = GossipSchedule(cfg.gossip_period)
        rngs = {"act": cfg.rng("act"), "shuffle": cfg.rng("shuffle")}

        records = [run_evaluation(agents.policy_set(), cfg, update=0,
                                  critic_disagreement=agents.critic_disagreement(), keep_traces=False).record]
        persist(records, agents, 0)
        logs = []
        for r in range(1, cfg.n_updates + 1):
            logs.append(train_round(env, agents, cfg, r, rngs, schedule, w))
            done = r
            if r % cfg.eval_every == 0 or r == cfg.n_updates:
                rec = run_evaluation(agents.policy_set(), cfg, update=r,
                                     critic_disagreement=agents.critic_disagreement(), keep_traces=False).record
                records.append(rec)
                persist(records, agents, r)
            if progress is not None:
                progress(logs[-1], records[-1])
        if out is not None:
            _write_manifest(out, "complete", done, files)
        return TrainingResult(cfg, records, logs, agents if keep_agents else None)
    except OSError as exc:
        if out is not None:
            try:
                _write_manifest(out, "aborted", done, files, f"{type(exc).__name__}: {exc}")
            except OSError:
                pass
        raise
