"""Absorbing-state Markov chain over component classes.

Classes live in {0..K-1} with index K the absorbing mask state.  One
forward step keeps a real class with probability beta_disc and otherwise
masks it; masked stays masked.  The s-step matrix has the closed form
stay probability beta_disc**s, which `cum_transition` uses directly (a
brute-force matrix power is kept as a test oracle).

Matrices are column-stochastic: Q[i, j] = P(y_t = i | y_{t-1} = j).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .schedule import DiffusionSchedule


@dataclass(frozen=True)
class ClassState:
    """Class indices at discrete step s; mask entries are index K."""

    y: np.ndarray
    s: int


def build_transition(beta_disc: float, K: int) -> np.ndarray:
    """(K+1) x (K+1) single-step transition matrix with absorbing column K."""
    if not 0.0 < beta_disc < 1.0:
        raise ValueError(f"beta_disc={beta_disc} outside (0, 1)")
    if K < 1:
        raise ValueError(f"K={K} must be >= 1")
    Q = np.zeros((K + 1, K + 1), dtype=np.float64)
    for j in range(K):
        Q[j, j] = beta_disc
        Q[K, j] = 1.0 - beta_disc
    Q[K, K] = 1.0
    return Q


def cum_transition(beta_disc: float, K: int, s: int) -> np.ndarray:
    """Q**s in closed form: real classes survive with probability beta_disc**s."""
    if s < 0:
        raise ValueError(f"s={s} must be >= 0")
    stay = beta_disc**s
    Q = np.zeros((K + 1, K + 1), dtype=np.float64)
    for j in range(K):
        Q[j, j] = stay
        Q[K, j] = 1.0 - stay
    Q[K, K] = 1.0
    return Q


def q_sample_discrete(
    y0: np.ndarray, s: int, rng: np.random.Generator, schedule: DiffusionSchedule, K: int
) -> ClassState:
    """Independently mask each clean class with probability 1 - beta_disc**s."""
    if not 0 <= s <= schedule.S_disc:
        raise ValueError(f"s={s} outside [0, {schedule.S_disc}]")
    y0 = np.asarray(y0, dtype=np.int64)
    if np.any((y0 < 0) | (y0 >= K)):
        raise ValueError("y0 must be a clean class vector without mask entries")
    keep = rng.random(y0.shape) < schedule.stay_bar[s]
    y = np.where(keep, y0, K)
    return ClassState(y=y, s=s)


def reverse_posterior(
    y_s: np.ndarray, p0_hat: np.ndarray, s: int, beta_disc: float
) -> np.ndarray:
    """Per-slot distribution of y_{s-1} given y_s and predicted clean-class rows.

    p0_hat is N x (K+1) with zero mass on the mask column.  Unmasked slots
    are deterministic (the forward chain never unmasks, so y_{s-1} must equal
    y_s).  Masked slots unmask into class k with probability
    (beta**(s-1) - beta**s) / (1 - beta**s) * p0_hat[k] and otherwise stay
    masked.  At s=1 the mask mass vanishes, so every slot resolves.
    """
    if s < 1:
        raise ValueError(f"s={s} must be >= 1")
    p0_hat = np.asarray(p0_hat, dtype=np.float64)
    y_s = np.asarray(y_s, dtype=np.int64)
    N, K1 = p0_hat.shape
    K = K1 - 1
    row_sums = p0_hat.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6):
        raise ValueError("p0_hat rows must sum to 1")
    if np.any(p0_hat < -1e-12):
        raise ValueError("p0_hat rows must be nonnegative")
    if np.any(p0_hat[:, K] > 1e-9):
        raise ValueError("p0_hat must place zero mass on the mask class")

    stay_prev = beta_disc ** (s - 1)
    stay_now = beta_disc**s
    unmask_coef = (stay_prev - stay_now) / (1.0 - stay_now)
    mask_mass = (1.0 - stay_prev) / (1.0 - stay_now)

    out = np.zeros_like(p0_hat)
    masked = y_s == K
    out[masked, :K] = unmask_coef * p0_hat[masked, :K]
    out[masked, K] = mask_mass
    idx = np.nonzero(~masked)[0]
    out[idx, y_s[idx]] = 1.0
    return out


def sample_categorical(
    rows: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw one index per probability row (inverse-CDF on a single uniform)."""
    rows = np.asarray(rows, dtype=np.float64)
    u = rng.random(rows.shape[0])
    cdf = np.cumsum(rows, axis=1)
    cdf[:, -1] = np.maximum(cdf[:, -1], 1.0)  # guard the last bin against rounding
    return (u[:, None] > cdf).sum(axis=1).astype(np.int64)


def class_loss(
    logits: torch.Tensor | np.ndarray,
    y0: torch.Tensor | np.ndarray,
    loss_mask: torch.Tensor | np.ndarray | None = None,
) -> torch.Tensor:
    """Cross-entropy against clean classes, averaged over unmasked slots.

    Logits cover only the K real classes; the mask class is never a target.
    `loss_mask` marks excluded slots (conditioned classes and padding).
    """
    logits = torch.as_tensor(logits)
    y0 = torch.as_tensor(np.asarray(y0), dtype=torch.long)
    if loss_mask is None:
        keep = torch.ones(y0.shape, dtype=torch.bool)
    else:
        keep = ~torch.as_tensor(loss_mask, dtype=torch.bool)
    flat_logits = logits.reshape(-1, logits.shape[-1])
    flat_y = y0.reshape(-1)
    flat_keep = keep.reshape(-1)
    n = flat_keep.sum()
    if n == 0:
        return flat_logits.sum() * 0.0
    # Padded slots carry the mask index as target; they are excluded by the
    # mask but must not trip the K-way cross entropy's index check.
    safe_y = flat_y.clamp(min=0, max=flat_logits.shape[-1] - 1)
    ce = torch.nn.functional.cross_entropy(flat_logits, safe_y, reduction="none")
    return (ce * flat_keep).sum() / n
