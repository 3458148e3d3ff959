"""Gaussian chain over box coordinates: forward noising, reverse posterior, box loss.

Chain operations are numpy/float64 and driven by an explicit
`numpy.random.Generator`, so they are deterministic per seed and safe to
run in parallel with per-item streams.  The loss is torch so gradients can
flow to the denoiser during training.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .schedule import DiffusionSchedule


@dataclass(frozen=True)
class NoisedBoxes:
    """A forward draw x_t together with the Gaussian noise that produced it."""

    x_t: np.ndarray
    t: int
    eps: np.ndarray


def _check_t(t: int, schedule: DiffusionSchedule) -> None:
    if not 1 <= t <= schedule.T:
        raise ValueError(f"t={t} outside [1, {schedule.T}]")


def q_sample(
    x0: np.ndarray, t: int, rng: np.random.Generator, schedule: DiffusionSchedule
) -> NoisedBoxes:
    """Closed-form forward marginal: x_t ~ N(sqrt(a_bar_t) x0, (1 - a_bar_t) I)."""
    _check_t(t, schedule)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = rng.standard_normal(x0.shape)
    a_bar = schedule.alpha_bar[t]
    x_t = np.sqrt(a_bar) * x0 + np.sqrt(1.0 - a_bar) * eps
    return NoisedBoxes(x_t=x_t, t=t, eps=eps)


def q_sample_step(
    x_prev: np.ndarray, t: int, rng: np.random.Generator, schedule: DiffusionSchedule
) -> np.ndarray:
    """One forward kernel step: x_t ~ N(sqrt(1 - beta_t) x_{t-1}, beta_t I)."""
    _check_t(t, schedule)
    x_prev = np.asarray(x_prev, dtype=np.float64)
    b = schedule.beta[t]
    return np.sqrt(1.0 - b) * x_prev + np.sqrt(b) * rng.standard_normal(x_prev.shape)


def posterior_mean_var(
    x_t: np.ndarray, x0_hat: np.ndarray, t: int, schedule: DiffusionSchedule
) -> tuple[np.ndarray, float]:
    """Mean and variance of q(x_{t-1} | x_t, x0_hat)."""
    _check_t(t, schedule)
    a_bar_t = schedule.alpha_bar[t]
    a_bar_prev = schedule.alpha_bar[t - 1]
    alpha_t = schedule.alpha[t]
    beta_t = schedule.beta[t]
    coef0 = np.sqrt(a_bar_prev) * beta_t / (1.0 - a_bar_t)
    coeft = np.sqrt(alpha_t) * (1.0 - a_bar_prev) / (1.0 - a_bar_t)
    mean = coef0 * np.asarray(x0_hat, dtype=np.float64) + coeft * np.asarray(
        x_t, dtype=np.float64
    )
    var = beta_t * (1.0 - a_bar_prev) / (1.0 - a_bar_t)
    return mean, float(var)


def posterior_sample(
    x_t: np.ndarray,
    x0_hat: np.ndarray,
    t: int,
    rng: np.random.Generator,
    schedule: DiffusionSchedule,
) -> np.ndarray:
    """Sample x_{t-1} from the reverse posterior given a clean-signal estimate.

    The final step t=1 returns the posterior mean with no added noise, which
    collapses to x0_hat exactly (alpha_bar[0] == 1).
    """
    mean, var = posterior_mean_var(x_t, x0_hat, t, schedule)
    if t == 1:
        return mean
    return mean + np.sqrt(var) * rng.standard_normal(mean.shape)


def box_loss(
    x0_hat: torch.Tensor | np.ndarray,
    x0: torch.Tensor | np.ndarray,
    loss_mask: torch.Tensor | np.ndarray | None = None,
) -> torch.Tensor:
    """Squared error averaged over unmasked coordinates.

    `loss_mask` marks what is EXCLUDED (conditioned attributes and padding);
    it broadcasts from per-slot (..., N) or applies per-coordinate
    (..., N, 4).  Returns 0 when everything is masked.
    """
    x0_hat = torch.as_tensor(x0_hat)
    x0 = torch.as_tensor(x0, dtype=x0_hat.dtype)
    if loss_mask is None:
        keep = torch.ones_like(x0_hat, dtype=torch.bool)
    else:
        mask = torch.as_tensor(loss_mask, dtype=torch.bool)
        if mask.dim() == x0_hat.dim() - 1:
            mask = mask.unsqueeze(-1).expand_as(x0_hat)
        keep = ~mask
    n = keep.sum()
    sq = (x0_hat - x0) ** 2
    if n == 0:
        # Keep the graph attached so a fully-masked term still backprops zeros.
        return sq.sum() * 0.0
    return (sq * keep).sum() / n
