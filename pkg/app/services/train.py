"""Training engine: multi-task loss, shuffled batches, AdamW, schedules, SWA.

Epochs before ``swa_start_epoch`` follow the configured scheduler; from that
epoch the rate anneals linearly to ``swa_lr`` and a weight snapshot joins the
running average at the end of every epoch. The best raw model by validation
metric (mean of POS and Contlex weighted F1) is checkpointed as it improves;
the SWA-averaged model is the one reported.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from sklearn.metrics import f1_score

from app.config import BEST_CHECKPOINT, CHECKPOINT_DIR, HISTORY_FILE, SWA_CHECKPOINT
from app.errors import ConfigError, DimensionError, NumericError
from app.schemas import EpochRecord, LossWeights, SchedulerSpec, TrainConfig
from app.services import numerics as nx
from app.services.evaluation import decide, predict_logits
from app.services.labels import LabelSpace
from app.services.model import EncodedDataset, TransformerClassifier, forward, save_checkpoint
from app.services.numerics import Rng, Tensor
from app.services.optim import AdamW, SwaState, lr_for_epoch, swa_update

logger = logging.getLogger(__name__)

# Reference grid rows: (experiment id, scheduler, dropout, layers, heads)
GRID_ROWS: tuple[tuple[int, SchedulerSpec, float, int, int], ...] = (
    (1, SchedulerSpec(kind="cosine", t_max=25), 0.1, 2, 4),
    (2, SchedulerSpec(kind="cosine", t_max=25), 0.2, 3, 4),
    (3, SchedulerSpec(kind="cosine", t_max=25), 0.2, 3, 8),
    (4, SchedulerSpec(kind="exponential", gamma=0.95), 0.2, 3, 8),
    (5, SchedulerSpec(kind="plateau", patience=10), 0.2, 3, 8),
    (6, SchedulerSpec(kind="cosine", t_max=25), 0.2, 10, 8),
)


def task_losses(pos_logits: Tensor, contlex_logits: Tensor, pos_targets, contlex_targets) -> tuple[Tensor, Tensor]:
    pos_targets = np.asarray(pos_targets)
    contlex_targets = np.asarray(contlex_targets)
    if not (pos_logits.shape[0] == contlex_logits.shape[0] == len(pos_targets) == len(contlex_targets)):
        raise DimensionError("batch sizes of logits and targets disagree")
    return nx.cross_entropy(pos_logits, pos_targets), nx.cross_entropy(contlex_logits, contlex_targets)


def combined_loss(
    pos_logits: Tensor,
    contlex_logits: Tensor,
    pos_targets,
    contlex_targets,
    weights: LossWeights = LossWeights(),
    parts: bool = False,
):
    """w_pos * CE_pos + w_contlex * CE_contlex.

    With ``parts`` the per-task cross-entropies come back too, as
    (total, ce_pos, ce_contlex).
    """
    if weights.pos < 0 or weights.contlex < 0:
        raise ConfigError(f"loss weights must be non-negative, got ({weights.pos}, {weights.contlex})")
    ce_pos, ce_contlex = task_losses(pos_logits, contlex_logits, pos_targets, contlex_targets)
    total = nx.add(nx.mul(ce_pos, weights.pos), nx.mul(ce_contlex, weights.contlex))
    return (total, ce_pos, ce_contlex) if parts else total


def iterate_batches(n: int, batch_size: int, rng: Rng) -> Iterator[np.ndarray]:
    """Shuffled index batches covering ``range(n)`` once; the last may be short."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def validation_metric(
    model: TransformerClassifier, dataset: EncodedDataset, space: LabelSpace, batch_size: int = 1024
) -> tuple[float, float]:
    """(POS weighted F1, Contlex weighted F1) with unmasked argmax decisions."""
    pos_logits, contlex_logits = predict_logits(model, dataset, batch_size)
    pos_pred, contlex_pred = decide(pos_logits, contlex_logits, space)
    pos_f1 = f1_score(dataset.pos_ids, pos_pred, labels=np.arange(space.n_pos), average="weighted", zero_division=0)
    contlex_f1 = f1_score(dataset.contlex_ids, contlex_pred, labels=np.arange(space.n_contlex),
                          average="weighted", zero_division=0)
    return float(pos_f1), float(contlex_f1)


@dataclass
class RunHistory:
    """Per-epoch records plus where the selected models were written."""
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = -math.inf
    best_checkpoint: Optional[str] = None
    swa_checkpoint: Optional[str] = None
    n_swa_snapshots: int = 0

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]

    @property
    def learning_rates(self) -> list[float]:
        return [r.lr for r in self.records]


@dataclass
class TrainResult:
    swa_model: TransformerClassifier
    best_model: TransformerClassifier
    history: RunHistory


def train(
    model: TransformerClassifier,
    train_set: EncodedDataset,
    val_set: Optional[EncodedDataset],
    config: TrainConfig,
    space: LabelSpace,
    out_dir=None,
) -> TrainResult:
    """Train ``model`` in place and return the SWA and best-validation models.

    When ``out_dir`` is given the run history is appended there as JSON lines
    (one epoch per line) and checkpoints go to ``out_dir/checkpoints``.
    """
    config.ensure_valid()
    if len(train_set) == 0:
        raise ConfigError("training set is empty")
    if val_set is None or len(val_set) == 0:
        logger.warning("No validation data; checkpoint selection uses the training set")
        val_set = train_set

    out_dir = Path(out_dir) if out_dir is not None else None
    history_path = best_path = swa_path = None
    if out_dir is not None:
        (out_dir / CHECKPOINT_DIR).mkdir(parents=True, exist_ok=True)
        history_path = out_dir / HISTORY_FILE
        history_path.write_text("", encoding="utf-8")
        best_path = out_dir / CHECKPOINT_DIR / BEST_CHECKPOINT
        swa_path = out_dir / CHECKPOINT_DIR / SWA_CHECKPOINT

    rng = Rng(config.seed)
    shuffle_rng = rng.split("shuffle")
    dropout_rng = rng.split("dropout")
    params = model.parameters()
    optimizer = AdamW(params, betas=config.betas, eps=config.eps, weight_decay=config.weight_decay)
    swa = SwaState()
    history = RunHistory()
    best_state: Optional[dict] = None
    monitor: list[float] = []

    logger.info(f"Training on {len(train_set)} examples (validation {len(val_set)}) for {config.epochs} epochs, "
                f"batch {config.batch_size}, lr {config.lr}, {config.scheduler.describe()}, "
                f"SWA from epoch {config.swa_start_epoch}")

    for epoch in range(1, config.epochs + 1):
        lr = lr_for_epoch(config, epoch, monitor)
        in_swa = epoch >= config.swa_start_epoch
        seen = 0
        sums = np.zeros(3)
        for index in iterate_batches(len(train_set), config.batch_size, shuffle_rng):
            ids, pad, pos_targets, contlex_targets = train_set.batch(index)
            model.zero_grad()
            pos_logits, contlex_logits = forward(model, ids, pad, training=True, rng=dropout_rng)
            loss, ce_pos, ce_contlex = combined_loss(pos_logits, contlex_logits, pos_targets, contlex_targets,
                                                     config.loss_weights, parts=True)
            if not math.isfinite(loss.item()):
                raise NumericError(f"loss became {loss.item()} in epoch {epoch}")
            nx.backward(loss)
            optimizer.step(lr)
            sums += len(index) * np.array([loss.item(), ce_pos.item(), ce_contlex.item()])
            seen += len(index)
        mean_loss, mean_pos, mean_contlex = (sums / seen).tolist()

        val_pos_f1, val_contlex_f1 = validation_metric(model, val_set, space, config.eval_batch_size)
        metric = 0.5 * (val_pos_f1 + val_contlex_f1)
        monitor.append(metric)

        if in_swa:
            swa = swa_update(swa, model.state_dict())

        checkpoint = None
        if metric > history.best_metric:
            history.best_metric = metric
            history.best_epoch = epoch
            best_state = model.state_dict()
            if best_path is not None:
                save_checkpoint(model, optimizer.state, best_path, epoch=epoch,
                                extra={"val_metric": metric, "kind": "best"})
                checkpoint = str(best_path)
                history.best_checkpoint = checkpoint

        record = EpochRecord(
            epoch=epoch, lr=lr, loss=mean_loss, loss_pos=mean_pos, loss_contlex=mean_contlex,
            val_pos_f1=val_pos_f1, val_contlex_f1=val_contlex_f1, val_metric=metric,
            swa=in_swa, checkpoint=checkpoint,
        )
        history.records.append(record)
        if history_path is not None:
            with open(history_path, "a", encoding="utf-8") as f:
                f.write(record.model_dump_json() + "\n")
        logger.info(f"Epoch {epoch}/{config.epochs}: lr {lr:.6g}, loss {mean_loss:.4f} "
                    f"(pos {mean_pos:.4f}, contlex {mean_contlex:.4f}), val F1 pos {val_pos_f1:.4f} "
                    f"contlex {val_contlex_f1:.4f}{' [swa]' if in_swa else ''}{' *' if checkpoint else ''}")

    history.n_swa_snapshots = swa.n_averaged
    swa_model = model.copy()
    swa_model.load_state({name: avg.astype(np.float32) for name, avg in swa.averaged.items()})
    best_model = model.copy()
    best_model.load_state(best_state)
    if swa_path is not None:
        save_checkpoint(swa_model, None, swa_path, epoch=config.epochs,
                        extra={"kind": "swa", "n_averaged": swa.n_averaged})
        history.swa_checkpoint = str(swa_path)
    logger.info(f"Finished: best epoch {history.best_epoch} (val {history.best_metric:.4f}), "
                f"{swa.n_averaged} SWA snapshots")
    return TrainResult(swa_model=swa_model, best_model=best_model, history=history)


def read_history(path) -> list[EpochRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [EpochRecord.model_validate_json(line) for line in lines if line.strip()]
