"""Interference-coupled multi-cell OFDMA environment.

The free functions implement the per-slot physics and bookkeeping; they accept
extra leading batch axes wherever that is cheap so the oracle and metric code
can evaluate many allocations at once. :class:`OFDMAEnv` strings them together
into the sequential slot dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .actions import Allocation, PowerLevels, check_feasible
from .channel import (
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

EULER_GAMMA = 0.5772156649015329


# ---------------------------------------------------------------------------
# interference graph


@dataclass(frozen=True)
class InterferenceGraph:
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be square")
        if np.any(np.diag(adj)):
            raise ValueError("interference graph must not have self-loops")
        if not np.array_equal(adj, adj.T):
            raise ValueError("interference graph must be symmetric")
        adj = adj.copy()
        adj.flags.writeable = False
        object.__setattr__(self, "adjacency", adj)

    @property
    def n_bs(self) -> int:
        return self.adjacency.shape[0]

    @property
    def neighbor_sets(self) -> list[list[int]]:
        return [list(np.flatnonzero(row)) for row in self.adjacency]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def is_connected(self) -> bool:
        seen = {0}
        frontier = [0]
        while frontier:
            n = frontier.pop()
            for j in np.flatnonzero(self.adjacency[n]):
                if j not in seen:
                    seen.add(int(j))
                    frontier.append(int(j))
        return len(seen) == self.n_bs


def path_graph(n_bs: int, radius: int = 1) -> InterferenceGraph:
    """Line topology: BSs ``i`` and ``j`` interfere iff ``0 < |i - j| <= radius``."""
    idx = np.arange(n_bs)
    d = np.abs(idx[:, None] - idx[None, :])
    return InterferenceGraph((d > 0) & (d <= radius))


def complete_graph(n_bs: int) -> InterferenceGraph:
    return InterferenceGraph(~np.eye(n_bs, dtype=bool))


# ---------------------------------------------------------------------------
# per-slot physics


def compute_sinr(alloc: Allocation, gains: np.ndarray, noise: float) -> np.ndarray:
    """SINR for every (n, k, m): own signal over cross-cell interference plus noise.

    ``gains`` is (tx, k, cell, ue). Values are defined for all UEs; callers
    mask with ``alloc.x``.
    """
    p = np.asarray(alloc.p, dtype=float)
    tx = alloc.activity * p  # (..., N, K)
    n_bs = gains.shape[0]
    cross = np.where(own_cell_mask(n_bs), 0.0, gains)
    interference = np.einsum("...jk,jknm->...nkm", tx, cross)
    signal = p[..., None] * own_gains(gains)
    return signal / (interference + noise)


def per_ue_rates(alloc: Allocation, sinr: np.ndarray, delta_f: float):
    """Return ``(R, c)``: per-UE rates (..., N, M) and per-subcarrier rates (..., N, K)."""
    link = alloc.x * (delta_f * np.log2(1.0 + sinr))
    return link.sum(axis=-2), link.sum(axis=-1)


def update_virtual_queues(q: np.ndarray, r_min: np.ndarray | float, rates: np.ndarray) -> np.ndarray:
    return np.maximum(q + r_min - rates, 0.0)


def update_occupancy(ema: np.ndarray, activity: np.ndarray, alpha_o: float) -> np.ndarray:
    return alpha_o * ema + (1.0 - alpha_o) * activity


def neighbor_aggregates(ema: np.ndarray, graph: InterferenceGraph):
    """Neighbor mean and max of the occupancy EMA; both 0 for isolated BSs."""
    adj = graph.adjacency
    deg = adj.sum(axis=1)
    mean = np.zeros_like(ema, dtype=float)
    mx = np.zeros_like(ema, dtype=float)
    for n in range(graph.n_bs):
        if deg[n] == 0:
            continue
        nb = ema[adj[n]]
        mean[n] = nb.mean(axis=0)
        mx[n] = nb.max(axis=0)
    return mean, mx


def crosslink_sample(gains: np.ndarray) -> np.ndarray:
    """Per-slot cross-link proxy (src, target cell, k): mean over the target cell's UEs."""
    per_cell = gains.mean(axis=-1)  # (tx, k, cell)
    out = np.transpose(per_cell, (0, 2, 1)).copy()
    n = gains.shape[0]
    out[np.arange(n), np.arange(n)] = 0.0
    return out


def update_crosslink_avg(g_bar: np.ndarray, gains: np.ndarray, alpha_g: float) -> np.ndarray:
    return alpha_g * g_bar + (1.0 - alpha_g) * crosslink_sample(gains)


def leakage(p: np.ndarray, g_bar: np.ndarray, graph: InterferenceGraph, eta: np.ndarray) -> np.ndarray:
    """Per-BS leakage ``sum_k sum_{j in N(n)} eta_nj p_nk gbar_{n->j,k}``."""
    w = np.where(graph.adjacency, eta, 0.0)  # (n, j)
    return np.einsum("...nk,nj,njk->...n", p, w, g_bar)


@dataclass(frozen=True)
class RewardBreakdown:
    rate: np.ndarray
    qos: np.ndarray
    leakage: np.ndarray
    lambda_int: float

    @property
    def shaped(self) -> np.ndarray:
        return self.rate + self.qos - self.lambda_int * self.leakage

    @property
    def team(self) -> float:
        return team_reward(self.shaped)


def shaped_rewards(rates_ue, c_nk, p, q, g_bar, graph, lambda_int, eta) -> RewardBreakdown:
    return RewardBreakdown(
        rate=c_nk.sum(axis=-1),
        qos=(q * rates_ue).sum(axis=-1),
        leakage=leakage(p, g_bar, graph, eta),
        lambda_int=float(lambda_int),
    )


def shaped_reward(n: int, rates_ue, c_nk, p, q, g_bar, graph, lambda_int, eta) -> float:
    """Shaped reward of a single BS ``n``."""
    return float(shaped_rewards(rates_ue, c_nk, p, q, g_bar, graph, lambda_int, eta).shaped[n])


def team_reward(shaped) -> float:
    return float(np.sum(shaped))


# ---------------------------------------------------------------------------
# observations


@dataclass(frozen=True)
class ObsLayout:
    n_sub: int
    n_ue: int

    @property
    def length(self) -> int:
        return self.n_sub * self.n_ue + self.n_ue + 4 * self.n_sub

    def slices(self) -> dict[str, slice]:
        K, M = self.n_sub, self.n_ue
        edges = {"gains": K * M, "queues": M, "ema": K, "nbr_mean": K, "nbr_max": K, "prev_activity": K}
        out, start = {}, 0
        for name, size in edges.items():
            out[name] = slice(start, start + size)
            start += size
        return out

    def split(self, obs: np.ndarray) -> dict[str, np.ndarray]:
        """Views into ``obs`` (..., length); gains come back as (..., K, M)."""
        s = self.slices()
        parts = {name: obs[..., sl] for name, sl in s.items()}
        parts["gains"] = parts["gains"].reshape(obs.shape[:-1] + (self.n_sub, self.n_ue))
        return parts


# ---------------------------------------------------------------------------
# environment


@dataclass(frozen=True)
class EnvConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    levels: PowerLevels = field(default_factory=PowerLevels)
    r_min: float = 2.0
    alpha_o: float = 0.9
    alpha_g: float = 0.99
    lambda_int: float = 0.1
    eta: float = 1.0
    graph_radius: int = 1
    warmup_slots: int = 100
    # test hook: fading correlation override, 1.0 freezes the channel
    fading_rho: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha_o <= 1.0:
            raise ValueError("alpha_o must lie in [0, 1]")
        if not 0.0 <= self.alpha_g <= 1.0:
            raise ValueError("alpha_g must lie in [0, 1]")
        if self.r_min < 0 or self.lambda_int < 0 or self.eta < 0:
            raise ValueError("r_min, lambda_int and eta must be nonnegative")

    @property
    def n_bs(self) -> int:
        return self.channel.n_bs

    @property
    def n_sub(self) -> int:
        return self.channel.n_subcarriers

    @property
    def n_ue(self) -> int:
        return self.channel.ues_per_cell

    @property
    def obs_layout(self) -> ObsLayout:
        return ObsLayout(self.n_sub, self.n_ue)

    @property
    def rho(self) -> float:
        return self.channel.rho if self.fading_rho is None else self.fading_rho


@dataclass(frozen=True)
class EnvState:
    large_scale: LargeScaleGains
    fading: FadingState
    q: np.ndarray
    ema: np.ndarray
    g_bar: np.ndarray
    prev_activity: np.ndarray
    t: int = 0

    @property
    def gains(self) -> np.ndarray:
        return power_gains(self.large_scale, self.fading)


@dataclass
class StepResult:
    observations: np.ndarray  # (N, obs_len), built from the next state
    team_reward: float
    breakdown: RewardBreakdown
    alloc: Allocation
    sinr: np.ndarray
    rates: np.ndarray  # per-UE (N, M)
    link_rates: np.ndarray  # per-subcarrier (N, K)
    queues: np.ndarray  # queues used in this slot's reward


def _gain_moments(cfg: ChannelConfig) -> tuple[float, float]:
    # log g = log alpha + log |h|^2 with |h|^2 ~ Exp(1)
    mean = cfg.mu_pl - EULER_GAMMA
    std = np.sqrt(cfg.sigma_pl ** 2 + np.pi ** 2 / 6.0)
    return mean, std


def observe(state: EnvState, cfg: EnvConfig, graph: InterferenceGraph) -> np.ndarray:
    """Deterministic per-BS observations (N, obs_len) of ``state``."""
    g_own = own_gains(state.gains)  # (N, K, M)
    mean, std = _gain_moments(cfg.channel)
    log_g = (np.log(g_own + 1e-300) - mean) / std
    q_scaled = state.q / cfg.r_min if cfg.r_min > 0 else state.q
    nbr_mean, nbr_max = neighbor_aggregates(state.ema, graph)
    n = cfg.n_bs
    return np.concatenate(
        [
            log_g.reshape(n, -1),
            q_scaled,
            state.ema,
            nbr_mean,
            nbr_max,
            state.prev_activity,
        ],
        axis=1,
    )


class OFDMAEnv:
    """Sequential multi-cell downlink; one instance per simulation."""

    def __init__(self, cfg: EnvConfig, rng: np.random.Generator, graph: InterferenceGraph | None = None):
        self.cfg = cfg
        self.rng = rng
        self.graph = graph if graph is not None else path_graph(cfg.n_bs, cfg.graph_radius)
        if self.graph.n_bs != cfg.n_bs:
            raise ValueError("graph size does not match n_bs")
        self.eta = np.where(self.graph.adjacency, cfg.eta, 0.0)
        self.state: EnvState | None = None

    @property
    def obs_len(self) -> int:
        return self.cfg.obs_layout.length

    def reset(self, large_scale: LargeScaleGains | None = None, fading: FadingState | None = None) -> np.ndarray:
        """Start a new episode: fresh channel realization, zero queues and occupancy.

        Cross-link averages are seeded by advancing the channel through
        ``warmup_slots`` slots before the episode begins.
        """
        c = self.cfg.channel
        ls = large_scale if large_scale is not None else init_large_scale(c, self.rng)
        fd = fading if fading is not None else init_fading(c, self.rng)
        g_bar = crosslink_sample(power_gains(ls, fd))
        for _ in range(self.cfg.warmup_slots):
            fd = step_fading(fd, self.cfg.rho, self.rng)
            g_bar = update_crosslink_avg(g_bar, power_gains(ls, fd), self.cfg.alpha_g)
        n, k, m = self.cfg.n_bs, self.cfg.n_sub, self.cfg.n_ue
        self.state = EnvState(
            large_scale=ls,
            fading=fd,
            q=np.zeros((n, m)),
            ema=np.zeros((n, k)),
            g_bar=g_bar,
            prev_activity=np.zeros((n, k)),
            t=0,
        )
        return self.observe()

    def observe(self) -> np.ndarray:
        return observe(self.state, self.cfg, self.graph)

    @property
    def own_gains(self) -> np.ndarray:
        return own_gains(self.state.gains)

    def evaluate(self, alloc: Allocation, gains: np.ndarray | None = None):
        """SINR, rates and reward breakdown of ``alloc`` in the current state (no transition)."""
        s = self.state
        gains = s.gains if gains is None else gains
        c = self.cfg.channel
        sinr = compute_sinr(alloc, gains, c.noise_psd_times_df)
        rates, link = per_ue_rates(alloc, sinr, c.delta_f)
        br = shaped_rewards(rates, link, alloc.p, s.q, s.g_bar, self.graph, self.cfg.lambda_int, self.eta)
        return sinr, rates, link, br

    def step(self, alloc: Allocation) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        check_feasible(alloc, self.cfg.levels.budget)
        s = self.state
        gains = s.gains
        sinr, rates, link, br = self.evaluate(alloc, gains)
        activity = alloc.activity.astype(float)
        fading = step_fading(s.fading, self.cfg.rho, self.rng)
        self.state = replace(
            s,
            fading=fading,
            q=update_virtual_queues(s.q, self.cfg.r_min, rates),
            ema=update_occupancy(s.ema, activity, self.cfg.alpha_o),
            g_bar=update_crosslink_avg(s.g_bar, gains, self.cfg.alpha_g),
            prev_activity=activity,
            t=s.t + 1,
        )
        return StepResult(
            observations=self.observe(),
            team_reward=br.team,
            breakdown=br,
            alloc=alloc,
            sinr=sinr,
            rates=rates,
            link_rates=link,
            queues=s.q,
        )
