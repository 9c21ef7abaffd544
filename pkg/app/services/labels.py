"""Hierarchical label encoding.

POS labels get one encoder; Contlex labels get one encoder per POS. The
per-POS lists are concatenated (in POS order) into one global Contlex index
so a single classification head can cover every class, and each POS owns a
contiguous block of that index.
"""
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from app.errors import DataError, DataFormatError, LabelIndexError, LabelLookupError, PreconditionError
from app.services.corpus import LexemeRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelSpace:
    """Fitted POS and Contlex encoders."""
    pos_labels: tuple[str, ...]
    per_pos_contlex: dict[str, tuple[str, ...]]
    counts: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        global_contlex = []
        pos_of_global = []
        offsets = {}
        for pos in self.pos_labels:
            offsets[pos] = len(global_contlex)
            for label in self.per_pos_contlex.get(pos, ()):
                global_contlex.append(label)
                pos_of_global.append(pos)
        object.__setattr__(self, "global_contlex", tuple(global_contlex))
        object.__setattr__(self, "pos_of_global", tuple(pos_of_global))
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "_pos_index", {p: i for i, p in enumerate(self.pos_labels)})
        object.__setattr__(self, "_contlex_index", {
            (pos_of_global[i], label): i for i, label in enumerate(global_contlex)
        })

    @property
    def n_pos(self) -> int:
        return len(self.pos_labels)

    @property
    def n_contlex(self) -> int:
        return len(self.global_contlex)

    def block(self, pos: str) -> range:
        """Global ids owned by ``pos``."""
        start = self.offsets[pos]
        return range(start, start + len(self.per_pos_contlex.get(pos, ())))


def fit(records: Iterable[LexemeRecord]) -> LabelSpace:
    """Build sorted label spaces from normalized records."""
    records = list(records)
    if not records:
        raise PreconditionError("cannot fit labels on an empty record list")
    per_pos: dict[str, set] = {}
    counts: Counter = Counter()
    for r in records:
        contlex = r.contlex or r.contlex_raw
        if not contlex.startswith(f"{r.pos}_"):
            raise DataError(f"Contlex {contlex!r} of {r.lemma!r} does not carry the POS prefix {r.pos}_")
        per_pos.setdefault(r.pos, set()).add(contlex)
        counts[contlex] += 1
    space = LabelSpace(
        pos_labels=tuple(sorted(per_pos)),
        per_pos_contlex={pos: tuple(sorted(labels)) for pos, labels in sorted(per_pos.items())},
        counts=dict(sorted(counts.items())),
    )
    detail = ", ".join(f"{p}: {len(space.per_pos_contlex[p])}" for p in space.pos_labels)
    logger.info(f"Fitted label space: {space.n_pos} POS, {space.n_contlex} Contlex ({detail})")
    return space


def encode_pos(space: LabelSpace, pos: str) -> int:
    try:
        return space._pos_index[pos]
    except KeyError:
        raise LabelLookupError(f"unknown POS label {pos!r}") from None


def decode_pos(space: LabelSpace, pos_id: int) -> str:
    if not 0 <= pos_id < space.n_pos:
        raise LabelIndexError(f"POS id {pos_id} outside [0, {space.n_pos})")
    return space.pos_labels[pos_id]


def encode_contlex(space: LabelSpace, pos: str, label: str) -> int:
    try:
        return space._contlex_index[(pos, label)]
    except KeyError:
        raise LabelLookupError(f"unknown Contlex {label!r} for POS {pos!r}") from None


def decode_contlex(space: LabelSpace, contlex_id: int) -> tuple[str, str]:
    """Global id -> (owning POS, label)."""
    if not 0 <= contlex_id < space.n_contlex:
        raise LabelIndexError(f"Contlex id {contlex_id} outside [0, {space.n_contlex})")
    return space.pos_of_global[contlex_id], space.global_contlex[contlex_id]


def local_contlex_id(space: LabelSpace, contlex_id: int) -> int:
    """Id inside the owning POS encoder (global id minus block offset)."""
    pos, _ = decode_contlex(space, contlex_id)
    return contlex_id - space.offsets[pos]


def mask_for_pos(space: LabelSpace, pos: str) -> np.ndarray:
    """Boolean vector over the global index, true on ``pos``'s block."""
    mask = np.zeros(space.n_contlex, dtype=bool)
    block = space.block(pos)
    mask[block.start:block.stop] = True
    return mask


def pos_block_masks(space: LabelSpace) -> np.ndarray:
    """[n_pos, n_contlex] stack of ``mask_for_pos`` in POS id order."""
    return np.stack([mask_for_pos(space, p) for p in space.pos_labels]) if space.n_pos else np.zeros((0, 0), bool)


def encode_records(space: LabelSpace, records: Iterable[LexemeRecord]) -> tuple[np.ndarray, np.ndarray]:
    """POS ids and global Contlex ids for a list of records."""
    pos_ids, contlex_ids = [], []
    for r in records:
        pos_ids.append(encode_pos(space, r.pos))
        contlex_ids.append(encode_contlex(space, r.pos, r.contlex or r.contlex_raw))
    return np.asarray(pos_ids, dtype=np.int64), np.asarray(contlex_ids, dtype=np.int64)


def supported_table(space: LabelSpace) -> list[tuple[str, str, int]]:
    """(pos, contlex, count) rows for every fitted class."""
    return [(pos, label, space.counts.get(label, 0))
            for pos in space.pos_labels for label in space.per_pos_contlex[pos]]


def save_label_space(space: LabelSpace, path) -> None:
    payload = {
        "pos_labels": list(space.pos_labels),
        "per_pos_contlex": {p: list(space.per_pos_contlex[p]) for p in space.pos_labels},
        "counts": space.counts,
    }
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")


def load_label_space(path) -> LabelSpace:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return LabelSpace(
            pos_labels=tuple(payload["pos_labels"]),
            per_pos_contlex={p: tuple(v) for p, v in payload["per_pos_contlex"].items()},
            counts=dict(payload.get("counts", {})),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise DataFormatError(f"{path}: invalid label space: {e}") from e
