"""Lexeme ingestion, cleaning and stratified splitting.

Pipeline order is fixed: load -> filter_pos -> regex_filter -> normalize ->
min_support -> split. Every stage appends an entry to the filter log.
"""
import csv
import json
import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from app.errors import ConfigError, DataFormatError, PreconditionError
from app.schemas import FilterConfig, FilterLogEntry, SplitSpec
from app.services.numerics import Rng

logger = logging.getLogger(__name__)

LEXEME_COLUMNS = ("lemma", "pos", "contlex")
DATASET_COLUMNS = ("lemma", "pos", "contlex_raw", "contlex")


@dataclass(frozen=True)
class LexemeRecord:
    """One dictionary entry."""
    lemma: str
    pos: str
    contlex_raw: str
    contlex: str = ""

    @property
    def label(self) -> tuple[str, str]:
        """Stratification class: (pos, normalized contlex)."""
        return (self.pos, self.contlex or self.contlex_raw)


@dataclass
class Dataset:
    """Cleaned records plus where they came from and what was removed."""
    records: list[LexemeRecord]
    source: str = ""
    filter_log: list[FilterLogEntry] = field(default_factory=list)
    kept_labels: dict[str, list[str]] = field(default_factory=dict)


def _read_tsv(path: Path, columns: Sequence[str]) -> list[dict]:
    """Read a header-led UTF-8 TSV, checking that ``columns`` are present.

    Row numbers in errors are 1-based file lines (the header is line 1).
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            return []
        missing = [c for c in columns if c not in header]
        if missing:
            raise DataFormatError(f"{path}: row 1: missing column(s) {', '.join(missing)}")
        index = {c: header.index(c) for c in columns}
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < len(header):
                raise DataFormatError(
                    f"{path}: row {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            values = {c: row[i].strip() for c, i in index.items()}
            empty = [c for c, v in values.items() if not v]
            if empty:
                raise DataFormatError(f"{path}: row {line_no}: empty value for {', '.join(empty)}")
            rows.append(values)
    return rows


def load_lexemes(path) -> list[LexemeRecord]:
    """Load lexeme rows (lemma, pos, contlex) without normalizing anything."""
    rows = _read_tsv(path, LEXEME_COLUMNS)
    if not rows:
        logger.warning(f"No lexemes found in {path}")
        return []
    records = [LexemeRecord(lemma=r["lemma"], pos=r["pos"], contlex_raw=r["contlex"]) for r in rows]
    logger.info(f"Loaded {len(records)} lexemes from {path}")
    return records


def filter_pos(records: Iterable[LexemeRecord], allowed: Iterable[str] = ("N", "V")) -> list[LexemeRecord]:
    """Keep records whose POS is in ``allowed``; order preserved."""
    allowed = set(allowed)
    return [r for r in records if r.pos in allowed]


def compile_patterns(patterns: Iterable[str]) -> list[re.Pattern]:
    compiled = []
    for pattern in patterns:
        try:
            compiled.append(re.compile(pattern))
        except re.error as e:
            raise ConfigError(f"invalid exclusion pattern {pattern!r}: {e}") from e
    return compiled


def regex_filter(records: Iterable[LexemeRecord], patterns: Iterable[str]) -> list[LexemeRecord]:
    """Drop records whose lemma matches any exclusion pattern."""
    compiled = compile_patterns(patterns)
    if not compiled:
        return list(records)
    return [r for r in records if not any(p.search(r.lemma) for p in compiled)]


def normalize_contlex(label: str) -> str:
    """Cut a Contlex label at its second underscore.

    "V_JOAQTTED_ERRORTH" -> "V_JOAQTTED"; labels with fewer than two
    underscores come back unchanged, so the function is idempotent.
    """
    parts = label.split("_")
    if len(parts) <= 2:
        return label
    return "_".join(parts[:2])


def normalize_records(records: Iterable[LexemeRecord]) -> list[LexemeRecord]:
    return [replace(r, contlex=normalize_contlex(r.contlex_raw)) for r in records]


def label_inventory(records: Iterable[LexemeRecord]) -> dict[str, dict[str, int]]:
    """Count normalized Contlex labels per POS."""
    inventory: dict[str, Counter] = defaultdict(Counter)
    for r in records:
        inventory[r.pos][r.contlex or r.contlex_raw] += 1
    return {pos: dict(sorted(counts.items())) for pos, counts in sorted(inventory.items())}


def filter_min_support(
    records: Iterable[LexemeRecord], min_support: int = 50
) -> tuple[list[LexemeRecord], dict[str, list[str]]]:
    """Drop (pos, contlex) classes with fewer than ``min_support`` records.

    Returns:
        Tuple of (surviving records, sorted surviving labels per POS)
    """
    records = list(records)
    counts = Counter(r.label for r in records)
    kept = [r for r in records if counts[r.label] >= min_support]
    kept_labels: dict[str, list[str]] = defaultdict(list)
    for (pos, contlex), n in sorted(counts.items()):
        if n >= min_support:
            kept_labels[pos].append(contlex)
    return kept, dict(kept_labels)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(
    records: Sequence[LexemeRecord], spec: SplitSpec
) -> tuple[list[int], list[int]]:
    """Partition record indices into (train, test), class by class.

    Each (pos, contlex) class sends round(test_fraction * size) records to
    test, at least 1 and at most size - 1. Indices come back in input order.
    """
    by_class: dict[tuple, list[int]] = defaultdict(list)
    for i, r in enumerate(records):
        by_class[r.label].append(i)
    singletons = sorted(c for c, idx in by_class.items() if len(idx) < 2)
    if singletons:
        listed = ", ".join(f"{p}/{c}" for p, c in singletons)
        raise PreconditionError(f"stratified split needs >= 2 records per class; too small: {listed}")

    rng = Rng(spec.seed).split("stratified_split")
    test: list[int] = []
    for label in sorted(by_class):
        idx = by_class[label]
        n_test = min(len(idx) - 1, max(1, _round_half_up(spec.test_fraction * len(idx))))
        order = rng.permutation(len(idx))
        test.extend(idx[j] for j in order[:n_test])
    test_set = set(test)
    train = [i for i in range(len(records)) if i not in test_set]
    return train, sorted(test)


def run_pipeline(path, config: FilterConfig) -> Dataset:
    """Load and clean a lexeme file in the fixed stage order."""
    log: list[FilterLogEntry] = []

    def _stage(name: str, before: int, after: list) -> list:
        log.append(FilterLogEntry(stage=name, in_count=before, out_count=len(after)))
        logger.info(f"{name}: {before} -> {len(after)} records")
        return after

    records = load_lexemes(path)
    log.append(FilterLogEntry(stage="load", in_count=len(records), out_count=len(records)))

    n = len(records)
    records = _stage("filter_pos", n, filter_pos(records, config.allowed_pos))
    removed = n - len(records)
    if removed:
        logger.info(f"Removed {removed} records with unsupported POS (allowed: {', '.join(config.allowed_pos)})")

    records = _stage("regex_filter", len(records), regex_filter(records, config.exclude_patterns))

    raw_labels = len({(r.pos, r.contlex_raw) for r in records})
    records = _stage("normalize", len(records), normalize_records(records))
    logger.info(f"Contlex labels: {raw_labels} raw -> {len({r.label for r in records})} normalized")

    n = len(records)
    records, kept_labels = filter_min_support(records, config.min_support)
    log.append(FilterLogEntry(stage="min_support", in_count=n, out_count=len(records),
                              min_support=config.min_support))
    summary = ", ".join(f"{pos}: {len(labels)}" for pos, labels in kept_labels.items())
    logger.info(f"min_support={config.min_support}: {n} -> {len(records)} records; labels kept per POS: {summary or 'none'}")
    for pos, counts in label_inventory(records).items():
        logger.info(f"{pos}: " + ", ".join(f"{label}={count}" for label, count in counts.items()))

    return Dataset(records=records, source=str(path), filter_log=log, kept_labels=kept_labels)


def write_dataset(records: Iterable[LexemeRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE)
        writer.writerow(DATASET_COLUMNS)
        for r in records:
            writer.writerow([r.lemma, r.pos, r.contlex_raw, r.contlex])


def read_dataset(path) -> list[LexemeRecord]:
    rows = _read_tsv(path, DATASET_COLUMNS)
    return [LexemeRecord(r["lemma"], r["pos"], r["contlex_raw"], r["contlex"]) for r in rows]


def write_filter_log(entries: Iterable[FilterLogEntry], path) -> None:
    payload = [e.model_dump(exclude_none=True) for e in entries]
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def read_filter_log(path) -> list[FilterLogEntry]:
    return [FilterLogEntry.model_validate(e) for e in json.loads(Path(path).read_text(encoding="utf-8"))]
