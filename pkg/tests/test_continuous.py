import numpy as np
import pytest
import torch
from scipy import stats

from layoutdiff.continuous import (
    box_loss,
    posterior_mean_var,
    posterior_sample,
    q_sample,
    q_sample_step,
)
from layoutdiff.schedule import DiffusionSchedule


def _toy_schedule(betas):
    """Schedule with hand-picked betas, for analytic corner cases."""
    betas = np.asarray([0.0] + list(betas), dtype=np.float64)
    alpha = 1.0 - betas
    alpha[0] = 1.0
    return DiffusionSchedule(
        T=len(betas) - 1,
        beta=betas,
        alpha=alpha,
        alpha_bar=np.cumprod(alpha),
        beta_disc=0.15,
        S_disc=1,
        stay_bar=np.array([1.0, 0.15]),
    )


def test_q_sample_matches_marginal_identity(schedule100, rng):
    x0 = rng.standard_normal((6, 4))
    for t in (1, 37, 100):
        noised = q_sample(x0, t, np.random.default_rng(7), schedule100)
        a = schedule100.alpha_bar[t]
        np.testing.assert_allclose(
            noised.x_t, np.sqrt(a) * x0 + np.sqrt(1 - a) * noised.eps, atol=1e-12
        )


def test_q_sample_zero_noise_component(schedule100):
    # subtracting the retained draw isolates the deterministic part
    x0 = np.full((3, 4), 0.8)
    noised = q_sample(x0, 50, np.random.default_rng(0), schedule100)
    a = schedule100.alpha_bar[50]
    np.testing.assert_allclose(noised.x_t - np.sqrt(1 - a) * noised.eps, np.sqrt(a) * x0)


def test_q_sample_terminal_step_is_noise(schedule100, rng):
    x0 = rng.standard_normal((5, 4)) * 2.0
    noised = q_sample(x0, 100, np.random.default_rng(3), schedule100)
    np.testing.assert_allclose(noised.x_t, noised.eps, atol=5e-3)


def test_q_sample_monte_carlo_mean(schedule100):
    t = 40
    x0 = np.array([[1.3]])
    n = 100_000
    rng = np.random.default_rng(42)
    draws = np.array([q_sample(x0, t, rng, schedule100).x_t[0, 0] for _ in range(n)])
    a = schedule100.alpha_bar[t]
    se = np.sqrt(1 - a) / np.sqrt(n)
    assert abs(draws.mean() - np.sqrt(a) * 1.3) < 4 * se


def test_q_sample_rejects_bad_t(schedule100):
    with pytest.raises(ValueError):
        q_sample(np.zeros((1, 4)), 0, np.random.default_rng(0), schedule100)
    with pytest.raises(ValueError):
        q_sample(np.zeros((1, 4)), 101, np.random.default_rng(0), schedule100)


def test_q_sample_deterministic_per_seed(schedule100):
    x0 = np.ones((2, 4))
    a = q_sample(x0, 9, np.random.default_rng(5), schedule100)
    b = q_sample(x0, 9, np.random.default_rng(5), schedule100)
    assert np.array_equal(a.x_t, b.x_t)


def test_marginal_consistency_ks(schedule100):
    """Composing single-step kernels matches the closed-form marginal."""
    t_star = 30
    n = 10_000
    rng = np.random.default_rng(11)
    x0 = np.full(n, 0.5)
    x = x0.copy()
    for t in range(1, t_star + 1):
        x = q_sample_step(x, t, rng, schedule100)
    closed = q_sample(x0, t_star, np.random.default_rng(12), schedule100).x_t
    assert stats.ks_2samp(x, closed).pvalue > 0.01


def test_posterior_identity_in_no_noise_limit():
    sched = _toy_schedule([0.3, 1e-12, 0.2])
    v = np.array([[0.37, -1.2, 0.9, 2.2]])
    mean, var = posterior_mean_var(v, v, 2, sched)
    np.testing.assert_allclose(mean, v, atol=1e-9)
    assert var < 1e-11


def test_posterior_matches_grid_bayes(schedule100):
    """Brute-force Bayes on a discretized grid, scalar case."""
    t = 5
    x0 = 0.7
    x_t = 0.3
    a_bar_prev = schedule100.alpha_bar[t - 1]
    alpha_t = schedule100.alpha[t]
    beta_t = schedule100.beta[t]
    grid = np.linspace(-6, 6, 200_001)
    lik = stats.norm.pdf(x_t, loc=np.sqrt(alpha_t) * grid, scale=np.sqrt(beta_t))
    prior = stats.norm.pdf(grid, loc=np.sqrt(a_bar_prev) * x0, scale=np.sqrt(1 - a_bar_prev))
    w = lik * prior
    w /= w.sum()
    grid_mean = float((w * grid).sum())
    grid_var = float((w * (grid - grid_mean) ** 2).sum())
    mean, var = posterior_mean_var(np.array([[x_t]]), np.array([[x0]]), t, schedule100)
    assert mean[0, 0] == pytest.approx(grid_mean, abs=1e-3)
    assert var == pytest.approx(grid_var, abs=1e-3)


def test_posterior_final_step_returns_mean_exactly(schedule100, rng):
    x0_hat = rng.standard_normal((4, 4))
    x_1 = rng.standard_normal((4, 4))
    out = posterior_sample(x_1, x0_hat, 1, np.random.default_rng(0), schedule100)
    # alpha_bar[0] == 1 collapses the mean onto x0_hat and suppresses noise
    np.testing.assert_allclose(out, x0_hat, atol=1e-12)


def test_oracle_reverse_chain_recovers_x0(schedule100):
    """With x0_hat = x0 the chain preserves forward marginals and ends at x0."""
    x0 = 0.6
    n_chains = 2000
    rng = np.random.default_rng(99)
    x = q_sample(np.full(n_chains, x0), 100, rng, schedule100).x_t
    for t in range(100, 0, -1):
        x = posterior_sample(x, np.full(n_chains, x0), t, rng, schedule100)
        if t == 2:
            x1 = x.copy()
    a1 = schedule100.alpha_bar[1]
    se = np.sqrt(1 - a1) / np.sqrt(n_chains)
    assert abs(x1.mean() - np.sqrt(a1) * x0) < 4 * se
    np.testing.assert_allclose(x, x0, atol=1e-12)


def test_posterior_deterministic_per_seed(schedule100):
    x_t = np.ones((2, 4))
    x0 = np.zeros((2, 4))
    a = posterior_sample(x_t, x0, 40, np.random.default_rng(8), schedule100)
    b = posterior_sample(x_t, x0, 40, np.random.default_rng(8), schedule100)
    assert np.array_equal(a, b)


def test_box_loss_zero_for_exact_prediction():
    x = torch.randn(5, 4, dtype=torch.float64)
    assert box_loss(x, x.clone()).item() == 0.0


def test_box_loss_hand_value():
    x0 = torch.zeros(3, 4, dtype=torch.float64)
    x0_hat = x0.clone()
    x0_hat[1, 0] = 1.0
    mask = torch.tensor([True, False, True])
    assert box_loss(x0_hat, x0, mask).item() == pytest.approx(0.25)


def test_box_loss_all_masked_is_zero():
    x0 = torch.randn(3, 4, dtype=torch.float64)
    assert box_loss(x0 + 1, x0, torch.ones(3, dtype=torch.bool)).item() == 0.0


def test_box_loss_per_coordinate_mask():
    x0 = torch.zeros(1, 4, dtype=torch.float64)
    x0_hat = torch.tensor([[1.0, 1.0, 3.0, 3.0]], dtype=torch.float64)
    coord_mask = torch.tensor([[False, False, True, True]])
    # only the two position coordinates count: mean((1,1)^2) = 1
    assert box_loss(x0_hat, x0, coord_mask).item() == pytest.approx(1.0)


def test_box_loss_gradient_flows():
    x0 = torch.zeros(2, 4, dtype=torch.float64)
    x0_hat = torch.ones(2, 4, dtype=torch.float64, requires_grad=True)
    mask = torch.tensor([False, True])
    loss = box_loss(x0_hat, x0, mask)
    loss.backward()
    assert torch.all(x0_hat.grad[1] == 0)
    assert torch.all(x0_hat.grad[0] != 0)
