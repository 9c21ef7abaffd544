"""Miniparadigm augmentation and model input assembly.

A form generator stands where a morphological transducer would: given a
lemma, its POS and a morphological tag it returns surface forms. Each
lexeme is expanded into the forms of its POS miniparadigm, and the model
input is the lemma followed by those forms, joined by a reserved separator.
"""
import csv
import json
import logging
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from app.errors import ConfigError, DataFormatError, UsageError
from app.services.corpus import LexemeRecord

logger = logging.getLogger(__name__)

# Reserved symbol joining the lemma and its forms; never merged by BPE
SEPARATOR = "␟"

FORMS_COLUMNS = ("lemma", "pos", "tag", "form")

# Miniparadigm tags per POS, in reference table order
DEFAULT_MINIPARADIGMS: dict[str, tuple[str, ...]] = {
    "V": (
        "V+Ind+Prs+ConNeg",
        "V+Ind+Prs+Sg3",
        "V+Ind+Prt+Sg1",
        "V+Ind+Prt+Sg3",
        "V+Inf",
        "V+Ind+Prs+Sg1",
        "V+Pass+PrfPrc",
        "V+Ind+Prs+Pl3",
        "V+Imprt+Sg3",
        "V+Imprt+Pl3",
    ),
    "N": (
        "N+Sg+Loc",
        "N+Sg+Ill",
        "N+Pl+Gen",
        "N+Sg+Nom",
        "N+Sg+Gen",
        "N+Sg+Loc+PxSg3",
        "N+Ess",
        "N+Der/Dimin+N+Sg+Nom",
        "N+Der/Dimin+N+Sg+Gen",
        "N+Sg+Ill+PxSg1",
    ),
}


@dataclass(frozen=True)
class MiniparadigmSpec:
    """Ordered morphological tags per POS."""
    tags: Mapping[str, tuple[str, ...]]

    def __getitem__(self, pos: str) -> tuple[str, ...]:
        return self.tags[pos]

    def __contains__(self, pos: str) -> bool:
        return pos in self.tags

    @property
    def max_forms(self) -> int:
        """Largest paradigm size over all POS."""
        return max((len(t) for t in self.tags.values()), default=0)

    def to_dict(self) -> dict[str, list[str]]:
        return {pos: list(tags) for pos, tags in self.tags.items()}

    @classmethod
    def from_dict(cls, payload: Mapping[str, Iterable[str]]) -> "MiniparadigmSpec":
        return cls({pos: tuple(tags) for pos, tags in payload.items()})


def default_miniparadigms() -> MiniparadigmSpec:
    """The reference miniparadigm inventory (10 verb tags, 10 noun tags)."""
    return MiniparadigmSpec(dict(DEFAULT_MINIPARADIGMS))


def load_miniparadigms(spec: str) -> MiniparadigmSpec:
    """Resolve ``--spec``: the word ``default`` or a JSON file {pos: [tags]}."""
    if spec == "default":
        return default_miniparadigms()
    try:
        payload = json.loads(Path(spec).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read miniparadigm spec {spec}: {e}") from e
    return MiniparadigmSpec.from_dict(payload)


class FormGenerator(ABC):
    """Abstract source of inflected surface forms."""

    @abstractmethod
    def generate(self, lemma: str, pos: str, tag: str) -> list[str]:
        """Return the surface forms for (lemma, pos, tag); empty when unknown.

        Implementations must be deterministic.
        """
        pass


class InMemoryFormGenerator(FormGenerator):
    """Generator answering from a {(lemma, pos, tag): [forms]} mapping."""

    def __init__(self, table: Optional[Mapping[tuple[str, str, str], list[str]]] = None):
        self._table: dict[tuple[str, str, str], tuple[str, ...]] = {
            key: tuple(forms) for key, forms in (table or {}).items()
        }

    def generate(self, lemma: str, pos: str, tag: str) -> list[str]:
        return list(self._table.get((lemma, pos, tag), ()))

    def __len__(self):
        return len(self._table)


class FileFormGenerator(InMemoryFormGenerator):
    """Generator backed by a forms TSV (lemma, pos, tag, form).

    Duplicate keys keep every form in file order.
    """

    def __init__(self, path):
        self.path = Path(path)
        table: dict[tuple[str, str, str], list[str]] = defaultdict(list)
        with open(self.path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
            header = next(reader, None)
            if header is None:
                logger.warning(f"Forms file {self.path} is empty")
            elif [h.strip() for h in header[:4]] != list(FORMS_COLUMNS):
                raise DataFormatError(f"{self.path}: line 1: expected header {' '.join(FORMS_COLUMNS)}")
            for line_no, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != 4 or not all(v.strip() for v in row):
                    raise DataFormatError(f"{self.path}: line {line_no}: expected 4 non-empty fields")
                lemma, pos, tag, form = (v.strip() for v in row)
                table[(lemma, pos, tag)].append(form)
        super().__init__(table)
        logger.info(f"Loaded {len(self)} (lemma, pos, tag) keys from {self.path}")


def file_backed_generator(path) -> FormGenerator:
    return FileFormGenerator(path)


@dataclass
class AugmentedEntry:
    """A lexeme and its generated (tag, form) pairs in miniparadigm order."""
    record: LexemeRecord
    forms: list[tuple[str, str]] = field(default_factory=list)

    @property
    def surface_forms(self) -> list[str]:
        return [form for _, form in self.forms]


def generate_forms(gen: FormGenerator, record: LexemeRecord, spec: MiniparadigmSpec) -> AugmentedEntry:
    """Query ``gen`` for every tag of the record's POS, keeping the first form per tag."""
    if record.pos not in spec:
        raise ConfigError(f"POS {record.pos!r} has no miniparadigm")
    forms = []
    for tag in spec[record.pos]:
        generated = gen.generate(record.lemma, record.pos, tag)
        if generated:
            forms.append((tag, generated[0]))
    return AugmentedEntry(record=record, forms=forms)


def augment_records(
    gen: FormGenerator, records: Iterable[LexemeRecord], spec: MiniparadigmSpec
) -> list[AugmentedEntry]:
    entries = [generate_forms(gen, r, spec) for r in records]
    lemma_only = sum(1 for e in entries if not e.forms)
    total = sum(len(e.forms) for e in entries)
    logger.info(f"Augmented {len(entries)} lexemes with {total} forms ({lemma_only} lemma-only)")
    return entries


def assemble_input(entry: AugmentedEntry, max_forms: int) -> str:
    """Lemma plus the first ``max_forms - 1`` forms, joined by SEPARATOR."""
    if max_forms < 1:
        raise UsageError(f"max_forms must be >= 1, got {max_forms}")
    parts = [entry.record.lemma] + entry.surface_forms[: max_forms - 1]
    return SEPARATOR.join(parts)


def bpe_corpus(entries: Iterable[AugmentedEntry], spec: MiniparadigmSpec) -> list[str]:
    """One fully assembled line per entry: lemma and every generated form."""
    return [assemble_input(e, 1 + spec.max_forms) for e in entries]


def write_entries(entries: Iterable[AugmentedEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            r = e.record
            f.write(json.dumps({
                "lemma": r.lemma, "pos": r.pos, "contlex_raw": r.contlex_raw,
                "contlex": r.contlex, "forms": [list(p) for p in e.forms],
            }, ensure_ascii=False) + "\n")


def read_entries(path) -> list[AugmentedEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                record = LexemeRecord(row["lemma"], row["pos"], row["contlex_raw"], row["contlex"])
                forms = [(tag, form) for tag, form in row["forms"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise DataFormatError(f"{path}: line {line_no}: {e}") from e
            entries.append(AugmentedEntry(record=record, forms=forms))
    return entries
