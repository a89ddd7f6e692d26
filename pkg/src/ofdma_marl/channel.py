"""Large-scale and small-scale channel model for the multi-cell downlink.

All link tensors share the index order ``(tx, k, cell, ue)``: transmitting BS
``tx``, subcarrier ``k``, receiving cell ``cell`` and UE ``ue`` inside that
cell. Entries with ``tx == cell`` are serving links, the rest are cross links.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChannelConfig:
    n_bs: int = 7
    n_subcarriers: int = 32
    ues_per_cell: int = 8
    mu_pl: float = -2.3
    sigma_pl: float = 0.8
    crosslink_scale: float = 1.2
    rho: float = 0.85
    noise_psd_times_df: float = 1e-3
    delta_f: float = 1.0
    # independent large-scale draw per subcarrier instead of frequency-flat
    frequency_selective: bool = False

    def __post_init__(self):
        if self.n_bs < 1 or self.n_subcarriers < 1 or self.ues_per_cell < 1:
            raise ValueError("n_bs, n_subcarriers and ues_per_cell must be >= 1")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if self.sigma_pl < 0:
            raise ValueError("sigma_pl must be nonnegative")
        if self.noise_psd_times_df <= 0 or self.delta_f <= 0:
            raise ValueError("noise_psd_times_df and delta_f must be positive")
        if self.crosslink_scale <= 0:
            raise ValueError("crosslink_scale must be positive")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.n_bs, self.n_subcarriers, self.n_bs, self.ues_per_cell)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class LargeScaleGains:
    alpha: np.ndarray  # (tx, k, cell, ue), fixed for an episode

    def __post_init__(self):
        object.__setattr__(self, "alpha", _frozen(self.alpha))


@dataclass(frozen=True)
class FadingState:
    h: np.ndarray  # complex, same layout as LargeScaleGains.alpha

    def __post_init__(self):
        object.__setattr__(self, "h", _frozen(self.h))


def own_cell_mask(n_bs: int) -> np.ndarray:
    """Boolean (tx, 1, cell, 1) mask selecting serving links."""
    return np.eye(n_bs, dtype=bool)[:, None, :, None]


def init_large_scale(cfg: ChannelConfig, rng: np.random.Generator) -> LargeScaleGains:
    """Draw log-normal large-scale gains; cross links get ``crosslink_scale``."""
    n, k, m = cfg.n_bs, cfg.n_subcarriers, cfg.ues_per_cell
    k_draw = k if cfg.frequency_selective else 1
    z = rng.normal(cfg.mu_pl, cfg.sigma_pl, size=(n, k_draw, n, m))
    alpha = np.exp(z)
    alpha = np.where(own_cell_mask(n), alpha, cfg.crosslink_scale * alpha)
    alpha = np.broadcast_to(alpha, cfg.shape)
    return LargeScaleGains(alpha)


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def init_fading(cfg: ChannelConfig, rng: np.random.Generator) -> FadingState:
    """Stationary draw: i.i.d. CN(0, 1) per entry."""
    return FadingState(_complex_normal(rng, cfg.shape))


def step_fading(state: FadingState, rho: float, rng: np.random.Generator) -> FadingState:
    """One Gauss-Markov step ``h' = rho h + sqrt(1 - rho^2) w``.

    ``rho == 1`` is accepted so tests can freeze the channel.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    w = _complex_normal(rng, state.h.shape)
    return FadingState(rho * state.h + np.sqrt(1.0 - rho * rho) * w)


def power_gains(ls: LargeScaleGains, f: FadingState) -> np.ndarray:
    if ls.alpha.shape != f.h.shape:
        raise ValueError(f"shape mismatch: alpha {ls.alpha.shape} vs h {f.h.shape}")
    return ls.alpha * (f.h.real ** 2 + f.h.imag ** 2)


def own_gains(gains: np.ndarray) -> np.ndarray:
    """Serving-link gains ``g[n, k, n, m]`` as an (n, k, m) array."""
    n = gains.shape[0]
    idx = np.arange(n)
    return gains[idx, :, idx, :]


class Channel:
    """Single-owner channel process; each ``step`` swaps in a new snapshot."""

    def __init__(self, cfg: ChannelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.large_scale = init_large_scale(cfg, rng)
        self.fading = init_fading(cfg, rng)

    @property
    def gains(self) -> np.ndarray:
        return power_gains(self.large_scale, self.fading)

    def step(self, rho: float | None = None) -> None:
        self.fading = step_fading(self.fading, self.cfg.rho if rho is None else rho, self.rng)
