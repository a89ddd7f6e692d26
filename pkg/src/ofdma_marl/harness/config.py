"""Flat experiment configuration and seed streams."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import yaml

from ..actions import DEFAULT_LEVELS, PowerLevels
from ..channel import ChannelConfig
from ..env import EnvConfig
from ..learner import PPOConfig

# stable ids: adding a stream must never renumber the existing ones
STREAMS = {"channel": 0, "init": 1, "act": 2, "shuffle": 3, "eval_channel": 4, "eval_act": 5}
POLICY_STREAMS = {"init", "act", "shuffle", "eval_act"}


@dataclass(frozen=True)
class ExperimentConfig:
    # network and channel
    n_bs: int = 7
    n_subcarriers: int = 32
    ues_per_cell: int = 8
    p_max: float = 1.0
    levels: tuple[float, ...] = DEFAULT_LEVELS
    noise_psd: float = 1e-3
    mu_pl: float = -2.3
    sigma_pl: float = 0.8
    crosslink_scale: float = 1.2
    rho: float = 0.85
    delta_f: float = 1.0
    frequency_selective: bool = False
    graph_radius: int = 1
    # reward, queues, summaries
    r_min: float = 2.0
    alpha_o: float = 0.9
    alpha_g: float = 0.99
    lambda_int: float = 0.1
    eta: float = 1.0
    warmup_slots: int = 100
    # PPO
    n_updates: int = 250
    horizon: int = 128
    beta: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 6
    minibatch: int = 256
    max_grad_norm: float = 0.5
    ent_start: float = 0.010
    ent_end: float = 0.001
    lr_actor: float = 3e-4
    lr_critic: float = 1e-3
    hidden: tuple[int, ...] = (128, 128)
    # federation
    gossip_period: int = 1
    # evaluation
    eval_every: int = 10
    n_seeds: int = 6
    episodes_per_seed: int = 6
    steps_per_episode: int = 24
    eval_greedy: bool = False
    heuristic_level: int | None = None  # power level index for GREEDY/QoS; None keeps their defaults
    # rates are in units of delta_f; reports also scale by this many Mbps per unit
    mbps_per_unit: float = 0.18
    # run
    method: str = "fedcritic"
    seed: int = 0
    policy_seed: int | None = None
    out_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        object.__setattr__(self, "hidden", tuple(int(v) for v in self.hidden))
        if self.n_updates < 0 or self.horizon < 1:
            raise ValueError("n_updates must be >= 0 and horizon >= 1")
        if self.eval_every < 1 or self.gossip_period < 1:
            raise ValueError("eval_every and gossip_period must be >= 1")
        if self.n_seeds < 1 or self.episodes_per_seed < 1 or self.steps_per_episode < 1:
            raise ValueError("evaluation protocol sizes must be >= 1")
        # validate the nested configs eagerly
        self.env_config()
        self.ppo_config()

    # -- derived configs ---------------------------------------------------

    def channel_config(self) -> ChannelConfig:
        return ChannelConfig(
            n_bs=self.n_bs, n_subcarriers=self.n_subcarriers, ues_per_cell=self.ues_per_cell,
            mu_pl=self.mu_pl, sigma_pl=self.sigma_pl, crosslink_scale=self.crosslink_scale,
            rho=self.rho, noise_psd_times_df=self.noise_psd, delta_f=self.delta_f,
            frequency_selective=self.frequency_selective,
        )

    def power_levels(self) -> PowerLevels:
        return PowerLevels(self.levels, self.p_max)

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            channel=self.channel_config(), levels=self.power_levels(), r_min=self.r_min,
            alpha_o=self.alpha_o, alpha_g=self.alpha_g, lambda_int=self.lambda_int, eta=self.eta,
            graph_radius=self.graph_radius, warmup_slots=self.warmup_slots,
        )

    def ppo_config(self) -> PPOConfig:
        return PPOConfig(
            beta=self.beta, gae_lambda=self.gae_lambda, clip=self.clip, epochs=self.epochs,
            minibatch=self.minibatch, max_grad_norm=self.max_grad_norm, ent_start=self.ent_start,
            ent_end=self.ent_end, lr_actor=self.lr_actor, lr_critic=self.lr_critic,
            horizon=self.horizon, hidden=self.hidden,
        )

    # -- seeds ---------------------------------------------------------------

    def rng(self, stream: str, index: int = 0) -> np.random.Generator:
        """Independent generator for a named stream.

        Policy-side streams key off ``policy_seed`` (default ``seed``) so the
        learner randomness can change without touching any channel draw.
        """
        root = self.seed
        if stream in POLICY_STREAMS and self.policy_seed is not None:
            root = self.policy_seed
        return np.random.default_rng(np.random.SeedSequence(root, spawn_key=(STREAMS[stream], index)))

    # -- (de)serialization ---------------------------------------------------

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = list(self.levels)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """Read a flat key-value document (JSON or YAML)."""
        text = Path(path).read_text()
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        return cls.from_dict(data or {})

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def reduced_config(**kw) -> ExperimentConfig:
    """Desk-scale setup: 3 BSs, 8 subcarriers, 2 UEs per cell, 3 power levels, 50 updates."""
    base = dict(n_bs=3, n_subcarriers=8, ues_per_cell=2, levels=(0.05, 0.35, 1.0), n_updates=50)
    base.update(kw)
    return ExperimentConfig(**base)
