"""Classification metrics, model evaluation, the word-form sweep and reports."""
import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from app.errors import ConfigError, LabelIndexError, UsageError
from app.schemas import LabelMetrics, MetricsReport, SweepRow
from app.services.augment import AugmentedEntry
from app.services.bpe import BpeModel
from app.services.labels import LabelSpace, decode_contlex, pos_block_masks
from app.services.model import EncodedDataset, TransformerClassifier, encode_batch, encode_entries, forward
from app.services.numerics import no_grad

logger = logging.getLogger(__name__)

MASKING_MODES = ("none", "predicted-pos", "gold-pos")


@dataclass
class ConfusionTally:
    """Per-label true positive, false positive and false negative counts."""
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    n: int

    @classmethod
    def from_ids(cls, preds, golds, n_labels: int) -> "ConfusionTally":
        matrix = confusion_matrix(golds, preds, labels=np.arange(n_labels))
        tp = np.diag(matrix)
        return cls(tp=tp, fp=matrix.sum(axis=0) - tp, fn=matrix.sum(axis=1) - tp, n=int(matrix.sum()))

    @property
    def support(self) -> np.ndarray:
        return self.tp + self.fn


def compute_metrics(
    preds: Sequence[int],
    golds: Sequence[int],
    label_names: Sequence[str],
    task: str = "contlex",
    masking_mode: str = "none",
) -> MetricsReport:
    """Per-label and averaged precision/recall/F1 plus accuracy.

    Zero denominators give 0. Weighted averages use gold support as weights;
    macro averages cover only labels with gold support.

    Raises:
        UsageError: Empty input or length mismatch
        LabelIndexError: An id outside ``label_names``
    """
    preds = np.asarray(preds, dtype=np.int64)
    golds = np.asarray(golds, dtype=np.int64)
    if preds.shape != golds.shape:
        raise UsageError(f"{len(preds)} predictions vs {len(golds)} gold labels")
    if preds.size == 0:
        raise UsageError("cannot compute metrics on an empty set")
    n_labels = len(label_names)
    if min(preds.min(), golds.min()) < 0 or max(preds.max(), golds.max()) >= n_labels:
        raise LabelIndexError(f"label ids outside [0, {n_labels})")

    labels = np.arange(n_labels)
    tally = ConfusionTally.from_ids(preds, golds, n_labels)
    precision, recall, f1, support = precision_recall_fscore_support(
        golds, preds, labels=labels, average=None, zero_division=0
    )
    supported = labels[support > 0]
    weighted = precision_recall_fscore_support(golds, preds, labels=labels, average="weighted", zero_division=0)
    macro = precision_recall_fscore_support(golds, preds, labels=supported, average="macro", zero_division=0)

    zero_division = [label_names[i] for i in labels
                     if tally.tp[i] + tally.fp[i] == 0 or tally.tp[i] + tally.fn[i] == 0]
    rows = [
        LabelMetrics(label=label_names[i], precision=float(precision[i]), recall=float(recall[i]),
                     f1=float(f1[i]), support=int(support[i]))
        for i in labels
    ]
    return MetricsReport(
        task=task,
        masking_mode=masking_mode,
        n=int(tally.n),
        accuracy=float(tally.tp.sum() / tally.n),
        labels=rows,
        weighted_precision=float(weighted[0]),
        weighted_recall=float(weighted[1]),
        weighted_f1=float(weighted[2]),
        macro_precision=float(macro[0]),
        macro_recall=float(macro[1]),
        macro_f1=float(macro[2]),
        zero_division=zero_division,
    )


def predict_logits(
    model: TransformerClassifier, dataset: EncodedDataset, batch_size: int = 1024
) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode logits for every row of ``dataset``, in order."""
    pos_out, contlex_out = [], []
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            ids, pad, _, _ = dataset.batch(np.arange(start, min(start + batch_size, len(dataset))))
            pos_logits, contlex_logits = forward(model, ids, pad, training=False)
            pos_out.append(pos_logits.data)
            contlex_out.append(contlex_logits.data)
    if not pos_out:
        return (np.zeros((0, model.config.n_pos), model.dtype), np.zeros((0, model.config.n_contlex), model.dtype))
    return np.concatenate(pos_out), np.concatenate(contlex_out)


def masked_contlex_logits(
    contlex_logits: np.ndarray, pos_ids: np.ndarray, space: LabelSpace
) -> np.ndarray:
    """Set logits outside each row's POS block to -inf."""
    allowed = pos_block_masks(space)[pos_ids]
    return np.where(allowed, contlex_logits, -np.inf)


def decide(
    pos_logits: np.ndarray,
    contlex_logits: np.ndarray,
    space: LabelSpace,
    masking_mode: str = "none",
    gold_pos: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Argmax decisions (ties go to the lowest id) under a masking mode."""
    if masking_mode not in MASKING_MODES:
        raise ConfigError(f"unknown masking mode {masking_mode!r}; expected one of {', '.join(MASKING_MODES)}")
    pos_pred = np.argmax(pos_logits, axis=1)
    if masking_mode == "predicted-pos":
        contlex_logits = masked_contlex_logits(contlex_logits, pos_pred, space)
    elif masking_mode == "gold-pos":
        if gold_pos is None:
            raise UsageError("gold-pos masking needs gold POS ids")
        contlex_logits = masked_contlex_logits(contlex_logits, np.asarray(gold_pos), space)
    return pos_pred, np.argmax(contlex_logits, axis=1)


def check_compatible(model: TransformerClassifier, space: LabelSpace, bpe: Optional[BpeModel] = None) -> None:
    cfg = model.config
    if cfg.n_pos != space.n_pos or cfg.n_contlex != space.n_contlex:
        raise ConfigError(
            f"checkpoint has {cfg.n_pos} POS / {cfg.n_contlex} Contlex outputs, "
            f"label space has {space.n_pos} / {space.n_contlex}"
        )
    if bpe is not None and len(bpe) != cfg.vocab_size:
        raise ConfigError(f"BPE vocabulary has {len(bpe)} ids, the checkpoint was trained with {cfg.vocab_size}")


def evaluate_model(
    model: TransformerClassifier,
    dataset: EncodedDataset,
    space: LabelSpace,
    masking_mode: str = "none",
    batch_size: int = 1024,
    bpe: Optional[BpeModel] = None,
) -> tuple[MetricsReport, MetricsReport]:
    """POS and Contlex reports for ``dataset`` in eval mode."""
    check_compatible(model, space, bpe)
    if len(dataset) and dataset.token_ids.max() >= model.config.vocab_size:
        raise ConfigError("dataset token ids exceed the checkpoint vocabulary")
    pos_logits, contlex_logits = predict_logits(model, dataset, batch_size)
    pos_pred, contlex_pred = decide(pos_logits, contlex_logits, space, masking_mode, dataset.pos_ids)
    pos_report = compute_metrics(pos_pred, dataset.pos_ids, space.pos_labels, "pos", masking_mode)
    contlex_report = compute_metrics(contlex_pred, dataset.contlex_ids, space.global_contlex, "contlex", masking_mode)
    logger.info(f"Evaluated {len(dataset)} examples ({masking_mode}): POS weighted F1 "
                f"{pos_report.weighted_f1:.4f}, Contlex weighted F1 {contlex_report.weighted_f1:.4f}")
    return pos_report, contlex_report


def sweep_forms(
    model: TransformerClassifier,
    entries: Sequence[AugmentedEntry],
    bpe: BpeModel,
    space: LabelSpace,
    k_values: Iterable[int],
    masking_mode: str = "none",
    batch_size: int = 1024,
    paradigm_size: Optional[int] = None,
) -> list[SweepRow]:
    """Accuracy of both tasks when inputs are capped at ``k`` slots (lemma = slot 1)."""
    k_values = list(k_values)
    if any(k < 1 for k in k_values):
        raise UsageError(f"k values must be >= 1, got {min(k_values)}")
    limit = 1 + (paradigm_size if paradigm_size is not None else max((len(e.forms) for e in entries), default=0))
    beyond = [k for k in k_values if k > limit]
    if beyond:
        logger.warning(f"k values {beyond} exceed 1 + paradigm size ({limit}); they use every available form")
    check_compatible(model, space, bpe)
    rows = []
    for k in k_values:
        dataset = encode_entries(entries, bpe, space, model.config.max_len, k)
        pos_logits, contlex_logits = predict_logits(model, dataset, batch_size)
        pos_pred, contlex_pred = decide(pos_logits, contlex_logits, space, masking_mode, dataset.pos_ids)
        row = SweepRow(
            k=k,
            pos_accuracy=float(np.mean(pos_pred == dataset.pos_ids)),
            contlex_accuracy=float(np.mean(contlex_pred == dataset.contlex_ids)),
        )
        logger.info(f"k={k}: POS accuracy {row.pos_accuracy:.4f}, Contlex accuracy {row.contlex_accuracy:.4f}")
        rows.append(row)
    return rows


def write_sweep(rows: Iterable[SweepRow], csv_path, dat_path=None) -> None:
    """CSV with header ``k,pos_accuracy,contlex_accuracy``; optional gnuplot table."""
    rows = list(rows)
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["k", "pos_accuracy", "contlex_accuracy"])
        for r in rows:
            writer.writerow([r.k, f"{r.pos_accuracy:.6f}", f"{r.contlex_accuracy:.6f}"])
    if dat_path is not None:
        lines = ["# k pos_accuracy contlex_accuracy"]
        lines.extend(f"{r.k} {r.pos_accuracy:.6f} {r.contlex_accuracy:.6f}" for r in rows)
        Path(dat_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report(reports: Sequence[MetricsReport], path, config_hash: str = "", extra: Optional[dict] = None) -> None:
    """JSON document keyed by task, with stable key order."""
    modes = sorted({r.masking_mode for r in reports})
    payload = {
        "config_hash": config_hash,
        "masking_mode": modes[0] if len(modes) == 1 else modes,
        "reports": {r.task: r.model_dump(mode="json") for r in reports},
    }
    if extra:
        payload["extra"] = extra
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def read_report(path) -> dict[str, MetricsReport]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {task: MetricsReport.model_validate(r) for task, r in payload["reports"].items()}


@dataclass(frozen=True)
class Prediction:
    """One ranked Contlex candidate for an input."""
    pos: str
    contlex: str
    probability: float
    pos_probability: float


def _softmax(logits: np.ndarray) -> np.ndarray:
    logits = logits.astype(np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def predict(
    model: TransformerClassifier,
    bpe: BpeModel,
    space: LabelSpace,
    texts: Sequence[str],
    masking_mode: str = "predicted-pos",
    top_k: int = 3,
) -> list[list[Prediction]]:
    """Ranked Contlex candidates for unseen assembled inputs.

    With ``predicted-pos`` masking candidates come only from the predicted
    POS block; ``none`` ranks the whole Contlex index.
    """
    if masking_mode not in ("none", "predicted-pos"):
        raise ConfigError(f"masking mode {masking_mode!r} is not available without gold labels")
    if top_k < 1:
        raise UsageError("top_k must be >= 1")
    check_compatible(model, space, bpe)
    token_ids, pad_mask = encode_batch(bpe, texts, model.config.max_len)
    n = len(texts)
    dataset = EncodedDataset(token_ids, pad_mask, np.zeros(n, np.int64), np.zeros(n, np.int64))
    pos_logits, contlex_logits = predict_logits(model, dataset)
    pos_probs = _softmax(pos_logits)
    pos_pred = np.argmax(pos_logits, axis=1)
    if masking_mode == "predicted-pos":
        contlex_logits = masked_contlex_logits(contlex_logits, pos_pred, space)
    contlex_probs = _softmax(contlex_logits)

    results = []
    for i in range(n):
        # Stable sort keeps the lowest id first among equal probabilities
        order = np.argsort(-contlex_probs[i], kind="stable")[:top_k]
        ranked = []
        for j in order:
            if contlex_probs[i, j] <= 0.0 and ranked:
                break
            owner, label = decode_contlex(space, int(j))
            ranked.append(Prediction(pos=owner, contlex=label, probability=float(contlex_probs[i, j]),
                                     pos_probability=float(pos_probs[i, space.pos_labels.index(owner)])))
        results.append(ranked)
    return results
