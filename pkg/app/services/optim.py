"""AdamW, per-epoch learning-rate schedules and stochastic weight averaging."""
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from app.errors import ConfigError, DimensionError
from app.schemas import SchedulerSpec, TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First/second moment estimates per parameter and the step counter."""
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls(
            m={name: np.zeros_like(p) for name, p in params.items()},
            v={name: np.zeros_like(p) for name, p in params.items()},
            step=0,
        )


def adamw_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One AdamW update with decoupled weight decay.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * theta

    Inputs are not modified.

    Returns:
        Tuple of (updated params, updated state)
    """
    beta1, beta2 = betas
    t = state.step + 1
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for name, theta in params.items():
        g = grads[name]
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        update = lr * m_hat / (np.sqrt(v_hat) + eps) + lr * weight_decay * theta
        new_params[name] = (theta - update).astype(theta.dtype, copy=False)
        new_m[name] = m.astype(theta.dtype, copy=False)
        new_v[name] = v.astype(theta.dtype, copy=False)
    return new_params, AdamState(m=new_m, v=new_v, step=t)


class AdamW:
    """Stateful wrapper over ``adamw_step`` for a model's named tensors.

    Parameters without a gradient in a step are treated as having a zero
    gradient (they still decay).
    """

    def __init__(self, params, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.01,
                 state: Optional[AdamState] = None):
        self.params = params
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = state or AdamState.zeros_like({n: p.data for n, p in params.items()})

    def step(self, lr: float) -> None:
        data = {name: p.data for name, p in self.params.items()}
        grads = {name: p.grad if p.grad is not None else np.zeros_like(p.data)
                 for name, p in self.params.items()}
        updated, self.state = adamw_step(data, grads, self.state, lr, self.betas, self.eps, self.weight_decay)
        for name, p in self.params.items():
            p.data = updated[name]

    def state_dict(self) -> dict:
        return {"step": self.state.step, "betas": list(self.betas), "eps": self.eps,
                "weight_decay": self.weight_decay}


# --------- schedules --------- #

def scheduler_lr(
    spec: SchedulerSpec, epoch: int, base_lr: float, monitor_history: Sequence[float] = ()
) -> float:
    """Learning rate for 0-based scheduler ``epoch``.

    cosine and exponential are closed forms. plateau replays the monitor
    values of the epochs before ``epoch``: an epoch improves when its value
    is strictly better than the best so far; after ``patience`` consecutive
    non-improving epochs the rate is multiplied by ``factor`` (floored at
    ``min_lr``) and the counter resets.
    """
    if epoch < 0:
        raise ConfigError(f"scheduler epoch must be >= 0, got {epoch}")
    if spec.kind == "cosine":
        if spec.t_max < 1:
            raise ConfigError("cosine t_max must be >= 1")
        return spec.eta_min + 0.5 * (base_lr - spec.eta_min) * (1.0 + math.cos(math.pi * epoch / spec.t_max))
    if spec.kind == "exponential":
        return base_lr * spec.gamma ** epoch
    if spec.kind == "plateau":
        if spec.mode not in ("max", "min"):
            raise ConfigError(f"plateau mode must be max or min, got {spec.mode}")
        sign = 1.0 if spec.mode == "max" else -1.0
        lr = base_lr
        best = -math.inf
        bad_epochs = 0
        for value in monitor_history[:epoch]:
            score = sign * value
            if score > best:
                best = score
                bad_epochs = 0
            else:
                bad_epochs += 1
            if bad_epochs >= spec.patience:
                lr = max(lr * spec.factor, spec.min_lr)
                bad_epochs = 0
        return lr
    raise ConfigError(f"unknown scheduler kind: {spec.kind}")


def swa_lr_at(config: TrainConfig, epoch: int, start_lr: float) -> float:
    """SWALR rate for 1-based training ``epoch`` >= swa_start_epoch.

    Linear anneal from ``start_lr`` to ``swa_lr`` over ``swa_anneal_epochs``,
    then constant.
    """
    i = epoch - config.swa_start_epoch + 1
    if i < 1:
        raise ConfigError(f"epoch {epoch} is before the SWA phase (starts at {config.swa_start_epoch})")
    alpha = min(1.0, i / config.swa_anneal_epochs)
    return start_lr + (config.swa_lr - start_lr) * alpha


def lr_for_epoch(config: TrainConfig, epoch: int, monitor_history: Sequence[float] = ()) -> float:
    """Learning rate used during 1-based training ``epoch``."""
    if epoch < config.swa_start_epoch:
        return scheduler_lr(config.scheduler, epoch - 1, config.lr, monitor_history)
    if config.swa_start_epoch > 1:
        start = scheduler_lr(config.scheduler, config.swa_start_epoch - 2, config.lr, monitor_history)
    else:
        start = config.lr
    return swa_lr_at(config, epoch, start)


# --------- weight averaging --------- #

@dataclass
class SwaState:
    """Running mean of weight snapshots (kept in float64)."""
    averaged: dict[str, np.ndarray] = field(default_factory=dict)
    n_averaged: int = 0


def swa_update(state: SwaState, weights: Mapping[str, np.ndarray]) -> SwaState:
    """avg <- avg + (w - avg) / (n + 1); n <- n + 1."""
    if state.n_averaged == 0:
        return SwaState({name: np.array(w, dtype=np.float64) for name, w in weights.items()}, 1)
    if set(weights) != set(state.averaged):
        raise DimensionError("SWA snapshot has a different parameter set")
    n = state.n_averaged
    averaged = {}
    for name, avg in state.averaged.items():
        w = np.asarray(weights[name], dtype=np.float64)
        if w.shape != avg.shape:
            raise DimensionError(f"SWA snapshot {name} has shape {w.shape}, expected {avg.shape}")
        averaged[name] = avg + (w - avg) / (n + 1)
    return SwaState(averaged, n + 1)
