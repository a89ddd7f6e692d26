"""Per-BS actor-critic learner with hand-written reverse-mode gradients.

Both networks are applied per subcarrier with weights shared across ``k``, so
the parameter count does not depend on the number of subcarriers. The policy
emits, for every subcarrier, ``2 + M + L`` logits: the mute/active head, the
UE head and the power-level head. The critic pools its per-subcarrier trunk
output by averaging before the scalar value head.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import ObsLayout

# ---------------------------------------------------------------------------
# flat parameter vectors


@dataclass(frozen=True)
class Layout:
    entries: tuple[tuple[str, tuple[int, ...]], ...]

    @property
    def size(self) -> int:
        return int(sum(np.prod(s) for _, s in self.entries))

    def offsets(self) -> dict[str, tuple[int, int, tuple[int, ...]]]:
        out, start = {}, 0
        for name, shape in self.entries:
            n = int(np.prod(shape))
            out[name] = (start, start + n, shape)
            start += n
        return out

    def unflatten(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        return {name: flat[a:b].reshape(shape) for name, (a, b, shape) in self.offsets().items()}

    def flatten(self, arrays: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(arrays[name], dtype=float).ravel() for name, _ in self.entries])

    def to_json(self):
        return [[name, list(shape)] for name, shape in self.entries]

    @classmethod
    def from_json(cls, obj) -> "Layout":
        return cls(tuple((name, tuple(shape)) for name, shape in obj))


@dataclass
class ParamVector:
    data: np.ndarray
    layout: Layout

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.layout.size,):
            raise ValueError(f"parameter vector has shape {self.data.shape}, layout needs ({self.layout.size},)")

    def views(self) -> dict[str, np.ndarray]:
        return self.layout.unflatten(self.data)

    def copy(self) -> "ParamVector":
        return ParamVector(self.data.copy(), self.layout)

    def with_data(self, data: np.ndarray) -> "ParamVector":
        return ParamVector(data, self.layout)


# ---------------------------------------------------------------------------
# multilayer perceptron


class MLP:
    """Dense layers with tanh between them; ``out_act`` adds tanh after the last one."""

    def __init__(self, sizes, out_act: bool = False, prefix: str = ""):
        self.sizes = tuple(int(s) for s in sizes)
        self.out_act = out_act
        self.prefix = prefix

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def shapes(self):
        out = []
        for i in range(self.n_layers):
            out.append((f"{self.prefix}W{i}", (self.sizes[i], self.sizes[i + 1])))
            out.append((f"{self.prefix}b{i}", (self.sizes[i + 1],)))
        return out

    def _act(self, i: int) -> bool:
        return i < self.n_layers - 1 or self.out_act

    def init(self, rng: np.random.Generator, out_scale: float = 1.0) -> dict[str, np.ndarray]:
        arrays = {}
        for i in range(self.n_layers):
            fan_in, fan_out = self.sizes[i], self.sizes[i + 1]
            std = 1.0 / np.sqrt(fan_in)
            if i == self.n_layers - 1:
                std *= out_scale
            arrays[f"{self.prefix}W{i}"] = rng.normal(0.0, std, size=(fan_in, fan_out))
            arrays[f"{self.prefix}b{i}"] = np.zeros(fan_out)
        return arrays

    def forward(self, v: dict, x: np.ndarray):
        lead = x.shape[:-1]
        a = x.reshape(-1, x.shape[-1])
        acts = [a]
        for i in range(self.n_layers):
            a = a @ v[f"{self.prefix}W{i}"] + v[f"{self.prefix}b{i}"]
            if self._act(i):
                a = np.tanh(a)
            acts.append(a)
        return a.reshape(lead + (a.shape[-1],)), acts

    def backward(self, v: dict, acts: list, dout: np.ndarray, grads: dict) -> np.ndarray:
        d = dout.reshape(-1, dout.shape[-1])
        for i in reversed(range(self.n_layers)):
            if self._act(i):
                d = d * (1.0 - acts[i + 1] ** 2)
            grads[f"{self.prefix}W{i}"] += acts[i].T @ d
            grads[f"{self.prefix}b{i}"] += d.sum(axis=0)
            d = d @ v[f"{self.prefix}W{i}"].T
        return d


# ---------------------------------------------------------------------------
# observation -> per-subcarrier features


N_EXTRA_FEATURES = 8


def feature_dim(n_ue: int) -> int:
    return 2 * n_ue + N_EXTRA_FEATURES


def subcarrier_features(obs: np.ndarray, layout: ObsLayout) -> np.ndarray:
    """Turn observations (B, obs_len) into per-subcarrier inputs (B, K, 2M + 8).

    Row ``k`` holds the own-cell gains on ``k``, the four occupancy features of
    ``k``, a two-dimensional subcarrier position code, the (log-compressed)
    queues, and the cell's mean EMA and mean previous activity.
    """
    obs = np.atleast_2d(obs)
    p = layout.split(obs)
    B, K, M = obs.shape[0], layout.n_sub, layout.n_ue
    phase = 2.0 * np.pi * np.arange(K) / K
    pos = np.broadcast_to(np.stack([np.sin(phase), np.cos(phase)], axis=-1), (B, K, 2))
    occ = np.stack([p["ema"], p["nbr_mean"], p["nbr_max"], p["prev_activity"]], axis=-1)
    q = np.broadcast_to(np.log1p(np.maximum(p["queues"], 0.0))[:, None, :], (B, K, M))
    glob = np.stack([p["ema"].mean(axis=-1), p["prev_activity"].mean(axis=-1)], axis=-1)
    glob = np.broadcast_to(glob[:, None, :], (B, K, 2))
    return np.concatenate([p["gains"], occ, pos, q, glob], axis=-1)


def joint_features(feats: list[np.ndarray]) -> np.ndarray:
    """Concatenate per-BS feature tensors (B, K, d) along the feature axis."""
    return np.concatenate(feats, axis=-1)


# ---------------------------------------------------------------------------
# categorical helpers


def log_softmax(z: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    zmax = np.max(z, axis=-1, keepdims=True)
    s = z - zmax
    return s - np.log(np.sum(np.exp(s), axis=-1, keepdims=True))


def _finite(logp: np.ndarray) -> np.ndarray:
    # masked entries carry -inf; they have zero probability and contribute nothing
    return np.where(np.isfinite(logp), logp, 0.0)


def categorical_entropy(logp: np.ndarray) -> np.ndarray:
    return -np.sum(np.exp(logp) * _finite(logp), axis=-1)


def _entropy_grad(logp: np.ndarray, h: np.ndarray) -> np.ndarray:
    """d entropy / d logits for a softmax head."""
    return -np.exp(logp) * (_finite(logp) + h[..., None])


def sample_categorical(logp: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sample along the last axis; one uniform per distribution."""
    cdf = np.cumsum(np.exp(logp), axis=-1)
    r = rng.random(logp.shape[:-1] + (1,)) * cdf[..., -1:]
    idx = (cdf <= r).sum(axis=-1)
    return np.minimum(idx, logp.shape[-1] - 1)


# ---------------------------------------------------------------------------
# policy


@dataclass
class HeadDists:
    logp_u: np.ndarray  # (B, K, 2)
    logp_m: np.ndarray  # (B, K, M)
    logp_l: np.ndarray  # (B, K, L)

    @property
    def p_active(self) -> np.ndarray:
        return np.exp(self.logp_u[..., 1])

    def log_prob(self, u, m, l) -> np.ndarray:
        """Per-subcarrier log-probability (B, K); UE/level terms vanish where u == 0."""
        u = np.asarray(u)
        lu = np.take_along_axis(self.logp_u, u[..., None], -1)[..., 0]
        lm = np.take_along_axis(self.logp_m, np.asarray(m)[..., None], -1)[..., 0]
        ll = np.take_along_axis(self.logp_l, np.asarray(l)[..., None], -1)[..., 0]
        return lu + np.where(u == 1, lm + ll, 0.0)

    def entropy(self) -> np.ndarray:
        hu = categorical_entropy(self.logp_u)
        hm = categorical_entropy(self.logp_m)
        hl = categorical_entropy(self.logp_l)
        return hu + self.p_active * (hm + hl)


@dataclass
class BSAction:
    u: np.ndarray
    m: np.ndarray
    l: np.ndarray


class PolicyNet:
    def __init__(self, d_in: int, n_ue: int, n_levels: int, hidden=(128, 128)):
        self.d_in, self.n_ue, self.n_levels = int(d_in), int(n_ue), int(n_levels)
        self.hidden = tuple(int(h) for h in hidden)
        self.mlp = MLP((self.d_in, *self.hidden, 2 + self.n_ue + self.n_levels), out_act=False, prefix="pi.")
        self.layout = Layout(tuple(self.mlp.shapes()))

    def descriptor(self) -> dict:
        return {"kind": "policy", "d_in": self.d_in, "n_ue": self.n_ue, "n_levels": self.n_levels,
                "hidden": list(self.hidden)}

    def init(self, rng: np.random.Generator, out_scale: float = 0.01) -> ParamVector:
        return ParamVector(self.layout.flatten(self.mlp.init(rng, out_scale)), self.layout)

    def forward(self, params: ParamVector, feats: np.ndarray, ue_valid: np.ndarray | None = None):
        if not np.all(np.isfinite(feats)):
            raise ValueError("non-finite observation features")
        v = params.views()
        z, acts = self.mlp.forward(v, feats)
        M = self.n_ue
        mask = None if ue_valid is None else np.broadcast_to(ue_valid, z.shape[:-1] + (M,))
        dists = HeadDists(
            logp_u=log_softmax(z[..., :2]),
            logp_m=log_softmax(z[..., 2:2 + M], mask),
            logp_l=log_softmax(z[..., 2 + M:]),
        )
        return dists, (v, acts)

    def backward(self, cache, dlogits: np.ndarray) -> np.ndarray:
        v, acts = cache
        grads = {k: np.zeros_like(a) for k, a in v.items()}
        self.mlp.backward(v, acts, dlogits, grads)
        return self.layout.flatten(grads)


def log_prob_grad(d: HeadDists, u, m, l) -> np.ndarray:
    """d log pi(a_k) / d logits, shape (B, K, 2 + M + L)."""
    u = np.asarray(u)
    pu, pm, pl = np.exp(d.logp_u), np.exp(d.logp_m), np.exp(d.logp_l)
    gu = np.eye(2)[u] - pu
    on = (u == 1)[..., None]
    gm = np.where(on, np.eye(pm.shape[-1])[np.asarray(m)] - pm, 0.0)
    gl = np.where(on, np.eye(pl.shape[-1])[np.asarray(l)] - pl, 0.0)
    return np.concatenate([gu, gm, gl], axis=-1)


def entropy_grad(d: HeadDists) -> np.ndarray:
    """d H_k / d logits with ``H_k = H(u) + P(u=1) (H(m) + H(l))``."""
    hu = categorical_entropy(d.logp_u)
    hm = categorical_entropy(d.logp_m)
    hl = categorical_entropy(d.logp_l)
    pu = np.exp(d.logp_u)
    p1 = pu[..., 1]
    dp1 = p1[..., None] * (np.eye(2)[1] - pu)
    gu = _entropy_grad(d.logp_u, hu) + (hm + hl)[..., None] * dp1
    gm = p1[..., None] * _entropy_grad(d.logp_m, hm)
    gl = p1[..., None] * _entropy_grad(d.logp_l, hl)
    return np.concatenate([gu, gm, gl], axis=-1)


def policy_forward(net: PolicyNet, params: ParamVector, feats: np.ndarray, ue_valid=None) -> HeadDists:
    return net.forward(params, feats, ue_valid)[0]


def sample_action(net: PolicyNet, params: ParamVector, feats: np.ndarray, rng: np.random.Generator,
                  greedy: bool = False, ue_valid=None):
    """Draw one action per subcarrier for a single observation.

    ``feats`` is (K, d) or (1, K, d). Returns ``(BSAction, logp, entropy)``
    with per-subcarrier log-probabilities (K,) and the total entropy.
    """
    feats = feats.reshape((1,) + feats.shape[-2:])
    d = policy_forward(net, params, feats, ue_valid)
    if greedy:
        u, m, l = (np.argmax(x, axis=-1) for x in (d.logp_u, d.logp_m, d.logp_l))
    else:
        u = sample_categorical(d.logp_u, rng)
        m = sample_categorical(d.logp_m, rng)
        l = sample_categorical(d.logp_l, rng)
    logp = d.log_prob(u, m, l)[0]
    return BSAction(u[0], m[0], l[0]), logp, float(d.entropy()[0].sum())


# ---------------------------------------------------------------------------
# critic


class CriticNet:
    def __init__(self, d_in: int, hidden=(128, 128)):
        self.d_in = int(d_in)
        self.hidden = tuple(int(h) for h in hidden)
        self.trunk = MLP((self.d_in, *self.hidden), out_act=True, prefix="v.trunk.")
        self.head = MLP((self.hidden[-1], 1), out_act=False, prefix="v.head.")
        self.layout = Layout(tuple(self.trunk.shapes() + self.head.shapes()))

    def descriptor(self) -> dict:
        return {"kind": "critic", "d_in": self.d_in, "hidden": list(self.hidden)}

    def init(self, rng: np.random.Generator, out_scale: float = 1.0) -> ParamVector:
        arrays = {**self.trunk.init(rng), **self.head.init(rng, out_scale)}
        return ParamVector(self.layout.flatten(arrays), self.layout)

    def forward(self, params: ParamVector, feats: np.ndarray):
        v = params.views()
        feats = feats.reshape((-1,) + feats.shape[-2:])
        h, acts_t = self.trunk.forward(v, feats)  # (B, K, H)
        pooled = h.mean(axis=1)
        out, acts_h = self.head.forward(v, pooled)
        return out[:, 0], (v, acts_t, acts_h, feats.shape[1])

    def value(self, params: ParamVector, feats: np.ndarray) -> np.ndarray:
        return self.forward(params, feats)[0]

    def backward(self, cache, dv: np.ndarray) -> np.ndarray:
        v, acts_t, acts_h, K = cache
        grads = {k: np.zeros_like(a) for k, a in v.items()}
        dpooled = self.head.backward(v, acts_h, dv[:, None], grads)  # (B, H)
        dh = np.repeat(dpooled[:, None, :] / K, K, axis=1)
        self.trunk.backward(v, acts_t, dh, grads)
        return self.layout.flatten(grads)


def critic_value(net: CriticNet, params: ParamVector, feats: np.ndarray) -> np.ndarray:
    return net.value(params, feats)


# ---------------------------------------------------------------------------
# rollouts


@dataclass
class PPOConfig:
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
    horizon: int = 128
    hidden: tuple[int, ...] = (128, 128)

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if not self.clip > 0:
            raise ValueError("clip must be positive")
        self.hidden = tuple(self.hidden)

    def entropy_coef(self, update: int, n_updates: int) -> float:
        """Linear decay from ``ent_start`` (first update) to ``ent_end`` (last)."""
        if n_updates <= 1:
            return self.ent_start
        frac = min(max(update / (n_updates - 1), 0.0), 1.0)
        return self.ent_start + frac * (self.ent_end - self.ent_start)


@dataclass
class RolloutBuffer:
    """Local trajectory of one BS: H slots of per-subcarrier decisions."""

    obs: list = field(default_factory=list)
    next_obs: list = field(default_factory=list)
    u: list = field(default_factory=list)
    m: list = field(default_factory=list)
    l: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    last_value: float = 0.0
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def add(self, obs, action: BSAction, logp, value, reward, next_obs):
        self.obs.append(obs)
        self.u.append(action.u)
        self.m.append(action.m)
        self.l.append(action.l)
        self.logp.append(logp)
        self.values.append(float(value))
        self.rewards.append(float(reward))
        self.next_obs.append(next_obs)

    def __len__(self):
        return len(self.rewards)

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "obs": np.asarray(self.obs),
            "next_obs": np.asarray(self.next_obs),
            "u": np.asarray(self.u),
            "m": np.asarray(self.m),
            "l": np.asarray(self.l),
            "logp": np.asarray(self.logp),
            "values": np.asarray(self.values),
            "rewards": np.asarray(self.rewards),
        }


def gae_advantages(rewards, values, last_value: float, beta: float, lam: float):
    """Generalized advantage estimates by backward recursion.

    ``values[t] = V(o_t)``; ``last_value`` bootstraps the truncated rollout.
    Returns ``(advantages, returns)`` with ``returns = advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    H = rewards.shape[0]
    next_v = np.append(values[1:], last_value)
    delta = rewards + beta * next_v - values
    adv = np.zeros(H)
    acc = 0.0
    for t in reversed(range(H)):
        acc = delta[t] + beta * lam * acc
        adv[t] = acc
    return adv, adv + values


def standardize(x: np.ndarray) -> np.ndarray:
    std = x.std()
    return (x - x.mean()) / (std if std > 1e-8 else 1.0)


@dataclass
class RewardScaler:
    """Divide rewards by the running std of their discounted return.

    The statistics depend only on the reward stream, so agents that receive
    the same team reward hold identical scalers without communicating.
    """

    beta: float = 0.99
    eps: float = 1e-8
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    ret: float = 0.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.m2 / self.count)) if self.count > 1 else 1.0

    def reset_episode(self) -> None:
        self.ret = 0.0

    def observe(self, r: float) -> None:
        self.ret = self.beta * self.ret + r
        self.count += 1
        d = self.ret - self.mean
        self.mean += d / self.count
        self.m2 += d * (self.ret - self.mean)

    def scale(self, rewards) -> np.ndarray:
        return np.asarray(rewards, dtype=float) / max(self.std, self.eps)


# ---------------------------------------------------------------------------
# losses and optimization


def actor_loss_and_grad(net: PolicyNet, params: ParamVector, feats, u, m, l, old_logp, adv,
                        clip: float, ent_coef: float, ue_valid=None):
    """Negative clipped surrogate minus entropy bonus, averaged over (slot, subcarrier).

    ``adv`` is per slot (B,) and shared by that slot's K decisions;
    ``old_logp`` is per decision (B, K).
    """
    d, cache = net.forward(params, feats, ue_valid)
    logp = d.log_prob(u, m, l)
    ratio = np.exp(logp - old_logp)
    A = np.broadcast_to(np.asarray(adv, dtype=float)[:, None], ratio.shape)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surr = np.minimum(ratio * A, clipped * A)
    ent = d.entropy()
    count = ratio.size
    loss = -surr.mean() - ent_coef * ent.mean()

    # gradient flows through the ratio only where the unclipped branch is selected
    unclipped = ratio * A <= clipped * A
    dlogp = -np.where(unclipped, ratio * A, 0.0) / count
    dlogits = dlogp[..., None] * log_prob_grad(d, u, m, l) - (ent_coef / count) * entropy_grad(d)
    grad = net.backward(cache, dlogits)
    info = {
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip)),
        "approx_kl": float(np.mean(old_logp - logp)),
        "entropy": float(ent.mean()),
    }
    return float(loss), grad, info


def vanilla_pg_grad(net: PolicyNet, params: ParamVector, feats, u, m, l, adv, ue_valid=None):
    """Gradient of ``-mean(A * log pi)``; reference for the unclipped PPO step."""
    d, cache = net.forward(params, feats, ue_valid)
    A = np.asarray(adv, dtype=float)[:, None]
    count = d.logp_u.shape[0] * d.logp_u.shape[1]
    dlogits = (-A / count)[..., None] * log_prob_grad(d, u, m, l)
    return net.backward(cache, dlogits)


def critic_loss_and_grad(net: CriticNet, params: ParamVector, feats, targets):
    v, cache = net.forward(params, feats)
    err = v - targets
    loss = float(np.mean(err ** 2))
    grad = net.backward(cache, 2.0 * err / err.size)
    return loss, grad


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(grad))
    if max_norm is not None and np.isfinite(max_norm) and norm > max_norm:
        grad = grad * (max_norm / (norm + 1e-6))
    return grad, norm


@dataclass
class Adam:
    size: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = None
    v: np.ndarray = None

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)

    def copy(self) -> "Adam":
        return Adam(self.size, self.lr, self.beta1, self.beta2, self.eps, self.t, self.m.copy(), self.v.copy())

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def minibatch_slices(n_slots: int, n_sub: int, minibatch: int, rng: np.random.Generator):
    """Shuffle slots into groups holding about ``minibatch`` per-subcarrier samples."""
    per = max(1, minibatch // max(n_sub, 1))
    perm = rng.permutation(n_slots)
    return [perm[i:i + per] for i in range(0, n_slots, per)]


@dataclass
class PPOBatch:
    feats: np.ndarray  # (H, K, d)
    u: np.ndarray
    m: np.ndarray
    l: np.ndarray
    logp: np.ndarray  # (H, K)
    advantages: np.ndarray  # (H,)
    returns: np.ndarray  # (H,)
    critic_feats: np.ndarray | None = None  # defaults to feats


def ppo_update(
    policy: PolicyNet,
    critic: CriticNet | None,
    actor: ParamVector,
    critic_params: ParamVector | None,
    batch: PPOBatch,
    cfg: PPOConfig,
    ent_coef: float,
    rng: np.random.Generator,
    actor_opt: Adam,
    critic_opt: Adam | None,
):
    """E epochs of minibatch PPO; per minibatch a critic step then an actor step.

    Pass ``critic=None`` to update the actor only (the centralized critic is
    trained separately). Returns ``(actor', critic', diagnostics)``. On a
    non-finite loss the update is abandoned and the inputs are returned
    unchanged with ``diagnostics["aborted"] = True``.
    """
    a_data, a_opt0 = actor.data.copy(), actor_opt.copy()
    c_data = critic_params.data.copy() if critic_params is not None else None
    c_opt0 = critic_opt.copy() if critic_opt is not None else None
    cfeats = batch.critic_feats if batch.critic_feats is not None else batch.feats
    adv = standardize(batch.advantages)
    H, K = batch.logp.shape
    diag = {"actor_loss": [], "critic_loss": [], "clip_frac": [], "approx_kl": [], "entropy": [],
            "aborted": False}

    for _ in range(cfg.epochs):
        for idx in minibatch_slices(H, K, cfg.minibatch, rng):
            if critic is not None:
                closs, cgrad = critic_loss_and_grad(critic, ParamVector(c_data, critic.layout),
                                                    cfeats[idx], batch.returns[idx])
                if not (np.isfinite(closs) and np.all(np.isfinite(cgrad))):
                    return _abort(actor, critic_params, actor_opt, critic_opt, a_opt0, c_opt0, diag)
                cgrad, _ = clip_grad_norm(cgrad, cfg.max_grad_norm)
                c_data = critic_opt.step(c_data, cgrad)
                diag["critic_loss"].append(closs)
            aloss, agrad, info = actor_loss_and_grad(
                policy, ParamVector(a_data, policy.layout), batch.feats[idx], batch.u[idx], batch.m[idx],
                batch.l[idx], batch.logp[idx], adv[idx], cfg.clip, ent_coef)
            if not (np.isfinite(aloss) and np.all(np.isfinite(agrad))):
                return _abort(actor, critic_params, actor_opt, critic_opt, a_opt0, c_opt0, diag)
            agrad, _ = clip_grad_norm(agrad, cfg.max_grad_norm)
            a_data = actor_opt.step(a_data, agrad)
            diag["actor_loss"].append(aloss)
            for key in ("clip_frac", "approx_kl", "entropy"):
                diag[key].append(info[key])

    summary = {k: (float(np.mean(v)) if isinstance(v, list) and v else v) for k, v in diag.items()}
    new_critic = ParamVector(c_data, critic.layout) if critic is not None else critic_params
    return ParamVector(a_data, policy.layout), new_critic, summary


def _abort(actor, critic_params, actor_opt, critic_opt, a_opt0, c_opt0, diag):
    actor_opt.__dict__.update(a_opt0.__dict__)
    if critic_opt is not None and c_opt0 is not None:
        critic_opt.__dict__.update(c_opt0.__dict__)
    diag = dict(diag, aborted=True)
    return actor, critic_params, diag


def fit_critic(critic: CriticNet, params: ParamVector, feats, targets, cfg: PPOConfig,
               rng: np.random.Generator, opt: Adam):
    """E epochs of minibatch value regression (used by the centralized critic)."""
    data = params.data.copy()
    H, K = feats.shape[0], feats.shape[1]
    losses = []
    for _ in range(cfg.epochs):
        for idx in minibatch_slices(H, K, cfg.minibatch, rng):
            loss, grad = critic_loss_and_grad(critic, ParamVector(data, critic.layout), feats[idx], targets[idx])
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                return params, float("nan")
            grad, _ = clip_grad_norm(grad, cfg.max_grad_norm)
            data = opt.step(data, grad)
            losses.append(loss)
    return ParamVector(data, critic.layout), float(np.mean(losses)) if losses else 0.0


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"OFDMAPV1"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ParamVector, arch: dict, role: str, bs_index: int, update: int) -> None:
    """Binary checkpoint: magic, version, JSON header, little-endian float64 parameters."""
    header = {
        "architecture": arch,
        "layout": params.layout.to_json(),
        "role": role,
        "bs_index": int(bs_index),
        "update": int(update),
        "size": int(params.layout.size),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(params.data.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[ParamVector, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint")
    version, hlen = struct.unpack("<HI", raw[8:14])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[14:14 + hlen])
    data = np.frombuffer(raw[14 + hlen:], dtype="<f8").astype(np.float64)
    layout = Layout.from_json(header["layout"])
    if data.size != layout.size:
        raise ValueError(f"{path}: truncated parameter block")
    return ParamVector(data, layout), header


def build_net(arch: dict):
    if arch["kind"] == "policy":
        return PolicyNet(arch["d_in"], arch["n_ue"], arch["n_levels"], arch["hidden"])
    if arch["kind"] == "critic":
        return CriticNet(arch["d_in"], arch["hidden"])
    raise ValueError(f"unknown architecture kind {arch['kind']!r}")
