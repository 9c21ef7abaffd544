import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from app.errors import ConfigError, DimensionError
from app.schemas import SchedulerSpec, TrainConfig
from app.services.numerics import Tensor
from app.services.optim import (
    AdamState,
    AdamW,
    SwaState,
    adamw_step,
    lr_for_epoch,
    scheduler_lr,
    swa_lr_at,
    swa_update,
)


def one_param(value):
    return {"w": np.asarray(value, dtype=np.float64)}


def test_first_step_moves_by_lr():
    params = one_param([0.0])
    state = AdamState.zeros_like(params)
    new, state = adamw_step(params, one_param([1.0]), state, lr=0.003)
    assert_allclose(new["w"], [-0.003], rtol=1e-6)
    assert state.step == 1
    assert_array_equal(params["w"], [0.0])


def test_zero_grad_decays_weights():
    params = one_param([2.0, -1.0])
    state = AdamState.zeros_like(params)
    for step in range(1, 4):
        params, state = adamw_step(params, one_param([0.0, 0.0]), state, lr=0.1, weight_decay=0.01)
        assert_allclose(params["w"], np.array([2.0, -1.0]) * (1 - 0.1 * 0.01) ** step)


def test_without_weight_decay_matches_adam():
    gen = np.random.default_rng(0)
    params = one_param(gen.standard_normal(5))
    state = AdamState.zeros_like(params)
    m = np.zeros(5)
    v = np.zeros(5)
    theta = params["w"].copy()
    for t in range(1, 6):
        g = gen.standard_normal(5)
        params, state = adamw_step(params, {"w": g}, state, lr=0.01, weight_decay=0.0)
        m = 0.9 * m + (1 - 0.9) * g
        v = 0.999 * v + (1 - 0.999) * (g * g)
        theta = theta - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert_allclose(params["w"], theta, rtol=1e-12)


def test_adamw_wrapper_updates_tensors_in_place():
    w = Tensor([1.0, 2.0], requires_grad=True, dtype=np.float64)
    frozen = Tensor([3.0], requires_grad=True, dtype=np.float64)
    w.grad = np.array([1.0, -1.0])
    optimizer = AdamW({"w": w, "frozen": frozen}, weight_decay=0.0)
    optimizer.step(0.5)
    assert_allclose(w.data, [0.5, 2.5], rtol=1e-6)
    assert_array_equal(frozen.data, [3.0])
    assert optimizer.state_dict()["step"] == 1


@pytest.mark.parametrize("epoch, expected", [(0, 0.003), (25, 0.0), (50, 0.003)])
def test_cosine_schedule(epoch, expected):
    spec = SchedulerSpec(kind="cosine", t_max=25, eta_min=0.0)
    assert scheduler_lr(spec, epoch, 0.003) == pytest.approx(expected, abs=1e-12)


def test_cosine_midpoint():
    spec = SchedulerSpec(kind="cosine", t_max=10, eta_min=0.001)
    assert scheduler_lr(spec, 5, 0.003) == pytest.approx(0.002, abs=1e-12)


def test_exponential_schedule():
    spec = SchedulerSpec(kind="exponential", gamma=0.95)
    assert scheduler_lr(spec, 1, 0.003) == pytest.approx(0.00285, abs=1e-12)
    assert scheduler_lr(spec, 0, 0.003) == 0.003


def test_plateau_waits_for_patience():
    spec = SchedulerSpec(kind="plateau", patience=10, factor=0.1)
    history = [0.5] + [0.4] * 9
    assert scheduler_lr(spec, 10, 0.003, history) == 0.003
    history = [0.5] + [0.4] * 10
    assert scheduler_lr(spec, 11, 0.003, history) == pytest.approx(0.0003)
    # counter resets after a reduction
    history = [0.5] + [0.4] * 20
    assert scheduler_lr(spec, 21, 0.003, history) == pytest.approx(0.00003)


def test_plateau_improvement_resets_counter_and_respects_min_mode():
    spec = SchedulerSpec(kind="plateau", patience=2, factor=0.5)
    assert scheduler_lr(spec, 5, 1.0, [0.1, 0.1, 0.2, 0.2, 0.3]) == 1.0
    low = SchedulerSpec(kind="plateau", patience=2, factor=0.5, mode="min")
    assert scheduler_lr(low, 3, 1.0, [1.0, 2.0, 3.0]) == 0.5


def test_plateau_never_goes_below_min_lr_or_up():
    spec = SchedulerSpec(kind="plateau", patience=1, factor=0.1, min_lr=1e-6)
    history = [1.0] + [0.0] * 30
    rates = [scheduler_lr(spec, e, 0.003, history) for e in range(31)]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    assert rates[-1] == 1e-6


@pytest.mark.parametrize("spec, epoch", [
    (SchedulerSpec(kind="linear"), 1),
    (SchedulerSpec(kind="cosine"), -1),
    (SchedulerSpec(kind="cosine", t_max=0), 1),
    (SchedulerSpec(kind="plateau", mode="sideways"), 1),
])
def test_scheduler_config_errors(spec, epoch):
    with pytest.raises(ConfigError):
        scheduler_lr(spec, epoch, 0.003)


def test_swa_lr_anneals_then_holds():
    config = TrainConfig(swa_start_epoch=80, swa_lr=0.0005, swa_anneal_epochs=5)
    start = 0.001
    assert swa_lr_at(config, 80, start) == pytest.approx(0.001 - 0.0005 / 5)
    assert swa_lr_at(config, 84, start) == pytest.approx(0.0005)
    assert swa_lr_at(config, 100, start) == pytest.approx(0.0005)
    with pytest.raises(ConfigError):
        swa_lr_at(config, 79, start)


def test_lr_for_epoch_switches_to_swa_phase():
    config = TrainConfig(epochs=100, scheduler=SchedulerSpec(kind="cosine", t_max=25))
    assert lr_for_epoch(config, 1) == pytest.approx(0.003)
    assert lr_for_epoch(config, 26) == pytest.approx(0.0)
    start = scheduler_lr(config.scheduler, 78, 0.003)
    assert lr_for_epoch(config, 79) == pytest.approx(start)
    assert lr_for_epoch(config, 80) == pytest.approx(start + (0.0005 - start) / 5)
    assert lr_for_epoch(config, 100) == pytest.approx(0.0005)


def test_swa_running_mean_matches_brute_force():
    gen = np.random.default_rng(3)
    snapshots = [{"a": gen.standard_normal((4, 3)).astype(np.float32), "b": gen.standard_normal(3).astype(np.float32)}
                 for _ in range(21)]
    state = SwaState()
    for snap in snapshots:
        state = swa_update(state, snap)
    assert state.n_averaged == 21
    for name in ("a", "b"):
        brute = np.mean([s[name].astype(np.float64) for s in snapshots], axis=0)
        assert_allclose(state.averaged[name], brute, atol=1e-7)


def test_swa_small_examples():
    state = swa_update(SwaState(), {"w": np.zeros(3)})
    assert_array_equal(state.averaged["w"], np.zeros(3))
    state = swa_update(state, {"w": np.full(3, 2.0)})
    assert_array_equal(state.averaged["w"], np.ones(3))
    same = swa_update(swa_update(SwaState(), {"w": np.arange(3.0)}), {"w": np.arange(3.0)})
    assert_array_equal(same.averaged["w"], np.arange(3.0))


def test_swa_shape_mismatch():
    state = swa_update(SwaState(), {"w": np.zeros(3)})
    with pytest.raises(DimensionError):
        swa_update(state, {"w": np.zeros(4)})
    with pytest.raises(DimensionError):
        swa_update(state, {"u": np.zeros(3)})
