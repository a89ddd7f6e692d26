"""Evaluation protocol: fixed evaluation channels, per-seed averages, 95% CIs."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from ..actions import Allocation, decode
from ..baselines import MethodKind, heuristic_allocation, method_spec
from ..env import ObsLayout, OFDMAEnv, path_graph
from ..learner import PolicyNet, ParamVector, feature_dim, load_checkpoint, sample_action, subcarrier_features
from .config import ExperimentConfig
from .metrics import MetricRecord, SlotTraces, aggregate, compute_metrics


class LayoutMismatch(ValueError):
    """A checkpoint does not fit the network implied by the configuration."""


def mask_queues(obs: np.ndarray, layout: ObsLayout) -> np.ndarray:
    """Copy of ``obs`` with the queue block zeroed (methods that ignore queues)."""
    out = np.array(obs, dtype=float)
    out[..., layout.slices()["queues"]] = 0.0
    return out


@dataclass
class PolicySet:
    """Decision rule for all BSs: learned actors, a heuristic, or a custom callable.

    ``custom(env, obs, rng, greedy)`` must return an Allocation.
    """

    kind: MethodKind
    net: PolicyNet | None = None
    actors: list[ParamVector] | None = None
    custom: Callable | None = None
    level: int | None = None  # heuristic power level index override

    def features(self, obs: np.ndarray, layout: ObsLayout) -> np.ndarray:
        if not method_spec(self.kind).use_queues:
            obs = mask_queues(obs, layout)
        return subcarrier_features(obs, layout)  # (N, K, d)

    def act(self, env: OFDMAEnv, obs: np.ndarray, rng: np.random.Generator, greedy: bool = False) -> Allocation:
        if self.custom is not None:
            return self.custom(env, obs, rng, greedy)
        if not method_spec(self.kind).learning:
            return heuristic_allocation(self.kind, env.own_gains, env.state.q, env.cfg.levels, self.level)
        feats = self.features(obs, env.cfg.obs_layout)
        acts = [sample_action(self.net, self.actors[n], feats[n], rng, greedy)[0] for n in range(env.cfg.n_bs)]
        u = np.stack([a.u for a in acts])
        m = np.stack([a.m for a in acts])
        l = np.stack([a.l for a in acts])
        return decode(u, m, l, env.cfg.levels, env.cfg.n_ue)


def mute_policy() -> PolicySet:
    def act(env, obs, rng, greedy):
        c = env.cfg
        return Allocation.mute(c.n_bs, c.n_sub, c.n_ue)
    return PolicySet(MethodKind.GREEDY, custom=act)


def heuristic_policy(kind, level: int | None = None) -> PolicySet:
    kind = method_spec(kind).kind
    if method_spec(kind).learning:
        raise ValueError(f"{kind.value} is a learning method")
    return PolicySet(kind, level=level)


@dataclass
class EvalResult:
    record: MetricRecord  # aggregate over evaluation seeds
    per_seed: list[MetricRecord]
    traces: SlotTraces  # all evaluation slots, seeds in order


def run_evaluation(policies: PolicySet, cfg: ExperimentConfig, greedy: bool | None = None, update: int = 0,
                   critic_disagreement: float = 0.0, env_overrides: dict | None = None,
                   keep_traces: bool = True) -> EvalResult:
    """Run ``n_seeds x episodes_per_seed x steps_per_episode`` evaluation slots.

    Each evaluation seed has its own channel stream, derived from the run seed
    only, so every method and every checkpoint of a run faces the same
    channels. Episodes start from a fresh channel realization with empty
    queues. ``env_overrides`` patches the environment config (tests use it to
    freeze the fading process).
    """
    greedy = cfg.eval_greedy if greedy is None else greedy
    env_cfg = cfg.env_config()
    if env_overrides:
        env_cfg = replace(env_cfg, **env_overrides)
    graph = path_graph(cfg.n_bs, cfg.graph_radius)
    per_seed, all_traces = [], SlotTraces()
    for s in range(cfg.n_seeds):
        env = OFDMAEnv(env_cfg, cfg.rng("eval_channel", s), graph)
        rng = cfg.rng("eval_act", s)
        traces = SlotTraces()
        for _ in range(cfg.episodes_per_seed):
            obs = env.reset()
            for _ in range(cfg.steps_per_episode):
                res = env.step(policies.act(env, obs, rng, greedy))
                traces.append(res)
                obs = res.observations
        per_seed.append(compute_metrics(traces, graph, update, critic_disagreement))
        if keep_traces:
            all_traces.extend(traces)
    return EvalResult(aggregate(per_seed), per_seed, all_traces)


def expected_policy_arch(cfg: ExperimentConfig) -> dict:
    return PolicyNet(feature_dim(cfg.ues_per_cell), cfg.ues_per_cell, len(cfg.levels), cfg.hidden).descriptor()


def load_policy_set(ckpt_dir, cfg: ExperimentConfig) -> PolicySet:
    """Load ``actor_<n>.ckpt`` for every BS and check them against ``cfg``."""
    ckpt_dir = Path(ckpt_dir)
    arch = expected_policy_arch(cfg)
    net = PolicyNet(arch["d_in"], arch["n_ue"], arch["n_levels"], arch["hidden"])
    actors = []
    for n in range(cfg.n_bs):
        path = ckpt_dir / f"actor_{n}.ckpt"
        if not path.exists():
            raise LayoutMismatch(f"missing checkpoint {path}")
        params, header = load_checkpoint(path)
        if header["architecture"] != arch or params.layout != net.layout:
            raise LayoutMismatch(f"{path}: architecture {header['architecture']} does not match config {arch}")
        actors.append(params)
    return PolicySet(method_spec(cfg.method).kind, net, actors)
