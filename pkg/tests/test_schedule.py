import numpy as np
import pytest

from layoutdiff.discrete import build_transition
from layoutdiff.schedule import (
    DiffusionSchedule,
    ScheduleError,
    build_cosine_schedule,
    discrete_step_of,
)


def test_alpha_bar_endpoints(schedule100):
    s = schedule100
    assert s.alpha_bar[0] == pytest.approx(1.0, abs=1e-4)
    assert s.alpha_bar[100] < 0.01


def test_alpha_bar_strictly_decreasing(schedule100):
    assert np.all(np.diff(schedule100.alpha_bar) < 0)


def test_alpha_bar_is_exact_running_product(schedule100):
    s = schedule100
    prod = 1.0
    for t in range(1, s.T + 1):
        prod = prod * (1.0 - s.beta[t])
        assert s.alpha_bar[t] == prod


def test_beta_range_and_clip(schedule100):
    s = schedule100
    assert np.all(s.beta[1:] > 0)
    assert np.all(s.beta[1:] <= 0.999)
    # the cosine ratio hits 1 at the last step and must be clipped
    assert s.beta[100] == 0.999


def test_stay_bar_closed_form_vs_matrix_power(schedule100):
    s = schedule100
    Q = build_transition(s.beta_disc, K=4)
    for step in range(s.S_disc + 1):
        Qs = np.linalg.matrix_power(Q, step)
        assert Qs[0, 0] == pytest.approx(s.stay_bar[step], abs=1e-12)
    assert s.stay_bar[10] == pytest.approx(0.15**10, abs=1e-12)
    assert s.stay_bar[10] == pytest.approx(5.7665e-9, rel=1e-3)
    assert s.stay_bar[s.S_disc] < 1e-6


def test_stay_bar_recurrence(schedule100):
    s = schedule100
    assert s.stay_bar[0] == 1.0
    for step in range(s.S_disc):
        assert s.stay_bar[step + 1] == s.stay_bar[step] * s.beta_disc


def test_schedule_deterministic():
    a = build_cosine_schedule(100)
    b = build_cosine_schedule(100)
    assert np.array_equal(a.alpha_bar, b.alpha_bar)
    assert np.array_equal(a.beta, b.beta)
    assert np.array_equal(a.stay_bar, b.stay_bar)


def test_schedule_arrays_immutable(schedule100):
    with pytest.raises(ValueError):
        schedule100.beta[1] = 0.5


def test_discrete_fields(schedule100):
    assert schedule100.S_disc == 10
    assert schedule100.beta_disc == 0.15


def test_bad_T_rejected():
    with pytest.raises(ScheduleError):
        build_cosine_schedule(101)
    with pytest.raises(ScheduleError):
        build_cosine_schedule(0)
    with pytest.raises(ScheduleError):
        build_cosine_schedule(100, beta_disc=1.0)


def test_discrete_step_of(schedule100):
    T = schedule100.T
    assert discrete_step_of(0, T) == 0
    assert discrete_step_of(10, T) == 1
    assert discrete_step_of(99, T) == 9
    assert discrete_step_of(100, T) == 10
    with pytest.raises(ScheduleError):
        discrete_step_of(101, T)
    with pytest.raises(ScheduleError):
        discrete_step_of(-1, T)


def test_config_round_trip(schedule100):
    cfg = schedule100.config()
    back = DiffusionSchedule.from_config(cfg)
    assert np.array_equal(back.alpha_bar, schedule100.alpha_bar)
    assert back.beta_disc == schedule100.beta_disc
