"""Per-step constants for the continuous chain and the synced discrete chain.

The continuous chain runs T steps under a cosine noise schedule; the
discrete absorbing chain runs T/10 steps and is synchronized to the
continuous clock through `discrete_step_of` (floor division by 10).
All arrays are float64 and immutable after construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

COSINE_OFFSET = 0.008
BETA_CLIP = 0.999
DISCRETE_SYNC = 10  # continuous steps per discrete step

DEFAULT_T = 100
DEFAULT_BETA_DISC = 0.15


class ScheduleError(ValueError):
    """Invalid schedule configuration."""


@dataclass(frozen=True)
class DiffusionSchedule:
    """Precomputed noise constants, indexed 0..T (continuous) and 0..S (discrete).

    beta[0] is unused (the chain starts at t=1); alpha_bar[0] == 1.
    stay_bar[s] is the probability that a real class survives s discrete
    steps unmasked: beta_disc ** s.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_disc: float
    S_disc: int
    stay_bar: np.ndarray

    def __post_init__(self) -> None:
        for name in ("beta", "alpha", "alpha_bar", "stay_bar"):
            getattr(self, name).flags.writeable = False

    def config(self) -> dict:
        """Self-describing constructor arguments, stored in checkpoints."""
        return {"T": self.T, "beta_disc": self.beta_disc, "kind": "cosine"}

    @classmethod
    def from_config(cls, cfg: dict) -> "DiffusionSchedule":
        if cfg.get("kind", "cosine") != "cosine":
            raise ScheduleError(f"unknown schedule kind {cfg.get('kind')!r}")
        return build_cosine_schedule(int(cfg["T"]), beta_disc=float(cfg["beta_disc"]))


def build_cosine_schedule(T: int, beta_disc: float = DEFAULT_BETA_DISC) -> DiffusionSchedule:
    """Cosine schedule: alpha_bar[t] tracks cos^2(((t/T + s)/(1 + s)) * pi/2) / f(0).

    Per-step betas are the ratios 1 - f(t)/f(t-1), clipped at BETA_CLIP, and
    alpha_bar is then recomputed as the exact running product of (1 - beta)
    so the product invariant holds bit-for-bit.
    """
    if T < DISCRETE_SYNC or T % DISCRETE_SYNC != 0:
        raise ScheduleError(
            f"T={T} must be a positive multiple of {DISCRETE_SYNC}: the chain "
            f"sync rule takes one discrete step per {DISCRETE_SYNC} continuous steps"
        )
    if not 0.0 < beta_disc < 1.0:
        raise ScheduleError(f"beta_disc={beta_disc} outside (0, 1)")

    t = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((t / T) + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * (math.pi / 2.0)) ** 2
    raw_bar = f / f[0]

    beta = np.zeros(T + 1, dtype=np.float64)
    beta[1:] = np.clip(1.0 - raw_bar[1:] / raw_bar[:-1], 0.0, BETA_CLIP)
    alpha = 1.0 - beta
    alpha[0] = 1.0
    alpha_bar = np.cumprod(alpha)

    S = T // DISCRETE_SYNC
    # cumulative product (not vectorized powers) so the one-step recurrence
    # stay_bar[s+1] == stay_bar[s] * beta_disc holds bit-for-bit
    stay_bar = np.concatenate(([1.0], np.cumprod(np.full(S, beta_disc))))

    sched = DiffusionSchedule(
        T=T,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        beta_disc=beta_disc,
        S_disc=S,
        stay_bar=stay_bar,
    )
    _check(sched)
    return sched


def discrete_step_of(t: int, T: int) -> int:
    """Discrete step index synced to continuous step t: floor(t / 10)."""
    if not 0 <= t <= T:
        raise ScheduleError(f"t={t} outside [0, {T}]")
    return t // DISCRETE_SYNC


def _check(s: DiffusionSchedule) -> None:
    if not np.all((s.beta[1:] > 0.0) & (s.beta[1:] < 1.0)):
        raise ScheduleError("beta must lie strictly inside (0, 1)")
    if not np.all(np.diff(s.alpha_bar) < 0.0):
        raise ScheduleError("alpha_bar must be strictly decreasing")
    if abs(s.alpha_bar[0] - 1.0) > 1e-4:
        raise ScheduleError(f"alpha_bar[0]={s.alpha_bar[0]} not ~1")
    if s.alpha_bar[s.T] >= 0.01:
        raise ScheduleError(f"alpha_bar[T]={s.alpha_bar[s.T]} not < 0.01")
    if not np.all(np.diff(s.stay_bar) < 0.0):
        raise ScheduleError("stay_bar must be strictly decreasing")
