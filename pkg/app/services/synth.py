"""Synthetic lexicon with a known inflection-class structure.

Classes come in pairs that share a POS and a lemma ending, so the lemma alone
cannot tell the two classes of a pair apart. Each class inflects by a fixed
suffix-rewrite table over the miniparadigm slots: the two classes of a pair
share suffixes for the first ``decisive_form - 1`` forms and differ from
form ``decisive_form`` on. A model therefore needs to see that form to
resolve the class, which gives a controlled accuracy-vs-forms curve.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from app.errors import ConfigError
from app.services.augment import FORMS_COLUMNS, InMemoryFormGenerator, MiniparadigmSpec, default_miniparadigms
from app.services.corpus import LEXEME_COLUMNS, LexemeRecord
from app.services.numerics import Rng

logger = logging.getLogger(__name__)

VOWELS = "aeiou"
CONSONANTS = "bcfghjklmnprtv"
POS_FINAL = {"N": "s", "V": "d"}
SUFFIX_LETTERS = "aeioubklmnprtv"


@dataclass(frozen=True)
class SynthClass:
    """One generated inflection class and its rewrite table."""
    contlex: str
    pos: str
    pair: int
    ending: str
    suffixes: tuple[str, ...]


@dataclass
class SynthCorpus:
    classes: list[SynthClass]
    records: list[LexemeRecord]
    stems: dict[str, str]
    spec: MiniparadigmSpec
    decisive_form: int

    def forms_for(self, record: LexemeRecord) -> list[tuple[str, str]]:
        cls = self.class_by_name[record.contlex_raw]
        stem = self.stems[record.lemma]
        return [(tag, stem + suffix) for tag, suffix in zip(self.spec[record.pos], cls.suffixes)]

    @property
    def class_by_name(self) -> dict[str, SynthClass]:
        return {c.contlex: c for c in self.classes}

    def generator(self) -> InMemoryFormGenerator:
        table = {}
        for r in self.records:
            for tag, form in self.forms_for(r):
                table[(r.lemma, r.pos, tag)] = [form]
        return InMemoryFormGenerator(table)


def _ending(index: int, final: str) -> str:
    """Distinct lemma ending per pair within one POS: a, e, ..., aa, ee, ..."""
    return VOWELS[index % len(VOWELS)] * (1 + index // len(VOWELS)) + final


def _suffix(rng: Rng) -> str:
    return "".join(rng.choice(SUFFIX_LETTERS) for _ in range(int(rng.integers(2, 4))))


def _stem(rng: Rng) -> str:
    syllables = int(rng.integers(2, 4))
    return "".join(rng.choice(CONSONANTS) + rng.choice(VOWELS) for _ in range(syllables)) + rng.choice(CONSONANTS)


def build_classes(n_classes: int, spec: MiniparadigmSpec, decisive_form: int, rng: Rng) -> list[SynthClass]:
    pos_cycle = [p for p in ("N", "V") if p in spec]
    if not pos_cycle:
        raise ConfigError("miniparadigm spec has neither N nor V")
    classes = []
    pairs_per_pos: dict[str, int] = {}
    for pair in range((n_classes + 1) // 2):
        pos = pos_cycle[pair % len(pos_cycle)]
        slot = pairs_per_pos.get(pos, 0)
        pairs_per_pos[pos] = slot + 1
        ending = _ending(slot, POS_FINAL[pos])
        n_slots = len(spec[pos])
        shared = [_suffix(rng) for _ in range(n_slots)]
        members = [c for c in (2 * pair, 2 * pair + 1) if c < n_classes]
        own: list[list[str]] = []
        for _ in members:
            suffixes = list(shared)
            for t in range(decisive_form - 1, n_slots):
                candidate = _suffix(rng)
                while any(candidate == other[t] for other in own):
                    candidate = _suffix(rng)
                suffixes[t] = candidate
            own.append(suffixes)
        for c, suffixes in zip(members, own):
            classes.append(SynthClass(contlex=f"{pos}_SYNTH{c:02d}", pos=pos, pair=pair,
                                      ending=ending, suffixes=tuple(suffixes)))
    return classes


def generate(
    n_classes: int = 8,
    per_class: int = 80,
    seed: int = 13,
    decisive_form: int = 3,
    spec: Optional[MiniparadigmSpec] = None,
) -> SynthCorpus:
    """Generate ``per_class`` unique lexemes for each of ``n_classes`` classes.

    Raises:
        ConfigError: fewer than 2 classes, fewer than 10 per class, or a
            decisive form outside the paradigm
    """
    spec = spec or default_miniparadigms()
    if n_classes < 2:
        raise ConfigError(f"--classes must be >= 2, got {n_classes}")
    if per_class < 10:
        raise ConfigError(f"--per-class must be >= 10, got {per_class}")
    min_slots = min(len(spec[p]) for p in ("N", "V") if p in spec)
    if not 1 <= decisive_form <= min_slots:
        raise ConfigError(f"decisive form must lie in [1, {min_slots}], got {decisive_form}")

    rng = Rng(seed).split("synth")
    classes = build_classes(n_classes, spec, decisive_form, rng.split("classes"))
    stem_rng = rng.split("stems")
    used: set[str] = set()
    records: list[LexemeRecord] = []
    stems: dict[str, str] = {}
    for cls in classes:
        made = 0
        while made < per_class:
            stem = _stem(stem_rng)
            lemma = stem + cls.ending
            if lemma in used:
                continue
            used.add(lemma)
            stems[lemma] = stem
            records.append(LexemeRecord(lemma=lemma, pos=cls.pos, contlex_raw=cls.contlex))
            made += 1
    # Interleave classes so file order carries no label signal
    order = rng.split("order").permutation(len(records))
    records = [records[i] for i in order]
    logger.info(f"Generated {len(records)} synthetic lexemes in {len(classes)} classes "
                f"(decisive form {decisive_form})")
    return SynthCorpus(classes=classes, records=records, stems=stems, spec=spec, decisive_form=decisive_form)


def write_corpus(corpus: SynthCorpus, lexemes_path, forms_path) -> None:
    """Write lexemes.tsv (lemma, pos, contlex) and forms.tsv (lemma, pos, tag, form)."""
    with open(lexemes_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE)
        writer.writerow(LEXEME_COLUMNS)
        for r in corpus.records:
            writer.writerow([r.lemma, r.pos, r.contlex_raw])
    with open(forms_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE)
        writer.writerow(FORMS_COLUMNS)
        for r in corpus.records:
            for tag, form in corpus.forms_for(r):
                writer.writerow([r.lemma, r.pos, tag, form])
    logger.info(f"Wrote {Path(lexemes_path).name} and {Path(forms_path).name}")


class OracleClassifier:
    """Rule-based classifier that reads the generator's rewrite tables.

    The lemma ending picks the class pair; the first visible form whose
    suffix differs between the pair's classes picks the class. With no such
    form the lower-numbered class of the pair is returned.
    """

    def __init__(self, classes: list[SynthClass]):
        self.by_ending: dict[str, list[SynthClass]] = {}
        for c in classes:
            self.by_ending.setdefault(c.ending, []).append(c)
        # Longest ending first so "aas" is not read as "as"
        self.endings = sorted(self.by_ending, key=len, reverse=True)

    def classify(self, lemma: str, forms: list[str]) -> tuple[str, str]:
        ending = next((e for e in self.endings if lemma.endswith(e)), None)
        if ending is None:
            raise ConfigError(f"lemma {lemma!r} has no known class ending")
        candidates = self.by_ending[ending]
        stem = lemma[: -len(ending)]
        for slot, form in enumerate(forms):
            matching = [c for c in candidates if slot < len(c.suffixes) and form == stem + c.suffixes[slot]]
            if len(matching) == 1:
                return matching[0].pos, matching[0].contlex
        return candidates[0].pos, candidates[0].contlex
