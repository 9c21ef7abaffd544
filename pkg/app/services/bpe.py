"""Byte-pair encoding over unicode codepoints.

Words are split from the text on whitespace and on the input separator;
each word becomes its characters followed by the end-of-word symbol. The
trainer repeatedly merges the most frequent adjacent pair (ties go to the
lexicographically smaller left symbol, then right symbol) until the
vocabulary reaches its target size or no pair occurs ``min_frequency``
times. Merges never cross words, so the separator never takes part.
"""
import logging
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Optional, Sequence

from app.errors import ConfigError, DataFormatError, LabelIndexError
from app.services.augment import SEPARATOR

logger = logging.getLogger(__name__)

FORMAT_VERSION = "bpe/v1"

PAD = "<pad>"
UNK = "<unk>"
SEP = "<sep>"
SPECIALS = (PAD, UNK, SEP)
PAD_ID, UNK_ID, SEP_ID = 0, 1, 2
EOW = "</w>"


def split_words(text: str) -> list[list[str]]:
    """Segments between separators, each a list of whitespace-delimited words."""
    return [segment.split() for segment in text.split(SEPARATOR)]


def word_symbols(word: str) -> list[str]:
    return list(word) + [EOW]


def merge_pair(symbols: Sequence[str], pair: tuple[str, str]) -> list[str]:
    """Merge every non-overlapping occurrence of ``pair``, left to right."""
    left, right = pair
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i + 1 < n and symbols[i] == left and symbols[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


class BpeModel:
    """Alphabet, ordered merges and the vocabulary derived from them."""

    def __init__(self, alphabet: Sequence[str], merges: Sequence[tuple[str, str]], vocab_size: int):
        self.alphabet = tuple(alphabet)
        self.merges = tuple((a, b) for a, b in merges)
        self.vocab_size = int(vocab_size)
        self.id_to_symbol: list[str] = list(SPECIALS)
        self.vocab: dict[str, int] = {s: i for i, s in enumerate(SPECIALS)}
        for symbol in list(self.alphabet) + [a + b for a, b in self.merges]:
            if symbol not in self.vocab:
                self.vocab[symbol] = len(self.id_to_symbol)
                self.id_to_symbol.append(symbol)
        self.ranks = {pair: rank for rank, pair in enumerate(self.merges)}
        self._cache: dict[str, tuple[int, ...]] = {}

    def __len__(self):
        return len(self.id_to_symbol)

    def __eq__(self, other):
        return (isinstance(other, BpeModel) and self.alphabet == other.alphabet
                and self.merges == other.merges and self.vocab_size == other.vocab_size)

    def segment(self, word: str) -> list[str]:
        """Replay the merges on one word in rank order."""
        symbols = word_symbols(word)
        floor = -1
        while len(symbols) > 1:
            best: Optional[int] = None
            for pair in zip(symbols, symbols[1:]):
                rank = self.ranks.get(pair)
                if rank is not None and rank > floor and (best is None or rank < best):
                    best = rank
            if best is None:
                break
            symbols = merge_pair(symbols, self.merges[best])
            floor = best
        return symbols

    def encode_word(self, word: str) -> tuple[int, ...]:
        ids = self._cache.get(word)
        if ids is None:
            ids = tuple(self.vocab.get(s, UNK_ID) for s in self.segment(word))
            self._cache[word] = ids
        return ids


def train_bpe(corpus_lines: Iterable[str], vocab_size: int = 2000, min_frequency: int = 2) -> BpeModel:
    """Learn merges greedily from ``corpus_lines``.

    Pair counts are maintained incrementally: when a merge is applied only
    the words containing that pair are recounted.

    Exactly ``vocab_size - base`` merges are learned unless no pair reaches
    ``min_frequency``. Two merges can spell the same symbol (e.g. a+bc and
    ab+c); the second adds no id, so ``len(model)`` may end below vocab_size.
    """
    word_counts: Counter = Counter()
    for line in corpus_lines:
        for words in split_words(line):
            word_counts.update(words)
    if not word_counts:
        raise ConfigError("cannot train BPE on an empty corpus")
    if min_frequency < 1:
        raise ConfigError("min_frequency must be >= 1")

    alphabet = [EOW] + sorted({ch for word in word_counts for ch in word})
    base = len(SPECIALS) + len(alphabet)
    if vocab_size < base:
        raise ConfigError(f"vocab_size {vocab_size} is below the {base} specials + alphabet symbols")

    words = [word_symbols(w) for w in sorted(word_counts)]
    freqs = [word_counts[w] for w in sorted(word_counts)]
    pair_counts: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for i, symbols in enumerate(words):
        for pair in zip(symbols, symbols[1:]):
            pair_counts[pair] += freqs[i]
            where[pair].add(i)

    merges: list[tuple[str, str]] = []
    while len(merges) < vocab_size - base:
        best = None
        best_key = None
        for pair, count in pair_counts.items():
            if count < min_frequency:
                continue
            key = (-count, pair[0], pair[1])
            if best_key is None or key < best_key:
                best, best_key = pair, key
        if best is None:
            break
        merges.append(best)
        for i in sorted(where.pop(best, ())):
            old = words[i]
            for pair in zip(old, old[1:]):
                pair_counts[pair] -= freqs[i]
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                if pair in where:
                    where[pair].discard(i)
            new = merge_pair(old, best)
            words[i] = new
            for pair in zip(new, new[1:]):
                pair_counts[pair] += freqs[i]
                where[pair].add(i)

    model = BpeModel(alphabet, merges, vocab_size)
    logger.info(f"Trained BPE: {len(alphabet)} alphabet symbols, {len(merges)} merges, vocab {len(model)}/{vocab_size}")
    return model


def encode(model: BpeModel, text: str) -> list[int]:
    """Token ids for ``text``; unknown characters map to UNK, separators to SEP."""
    ids: list[int] = []
    for position, words in enumerate(split_words(text)):
        if position:
            ids.append(SEP_ID)
        for word in words:
            ids.extend(model.encode_word(word))
    return ids


def decode(model: BpeModel, ids: Iterable[int]) -> str:
    """Inverse of ``encode`` on text without unknown characters."""
    segments: list[list[str]] = [[]]
    word = ""
    for token in ids:
        token = int(token)
        if not 0 <= token < len(model.id_to_symbol):
            raise LabelIndexError(f"token id {token} outside vocabulary of {len(model)}")
        if token == PAD_ID:
            continue
        if token == SEP_ID:
            if word:
                segments[-1].append(word)
                word = ""
            segments.append([])
            continue
        symbol = model.id_to_symbol[token]
        if symbol.endswith(EOW):
            segments[-1].append(word + symbol[: -len(EOW)])
            word = ""
        else:
            word += symbol
    if word:
        segments[-1].append(word)
    return SEPARATOR.join(" ".join(words) for words in segments)


def save_model(model: BpeModel, path) -> None:
    lines = [f"{FORMAT_VERSION} {model.vocab_size}", f"#alphabet {len(model.alphabet)}"]
    lines.extend(model.alphabet)
    lines.append(f"#merges {len(model.merges)}")
    lines.extend(f"{a} {b}" for a, b in model.merges)
    lines.append("#end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> BpeModel:
    """Read a merges file; any truncation or version mismatch is a format error."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").split("\n")

    def _section(index: int, name: str) -> int:
        if index >= len(lines):
            raise DataFormatError(f"{path}: truncated before #{name}")
        parts = lines[index].split(" ")
        if len(parts) != 2 or parts[0] != f"#{name}" or not parts[1].isdigit():
            raise DataFormatError(f"{path}: line {index + 1}: expected '#{name} <count>'")
        return int(parts[1])

    header = lines[0].split(" ")
    if len(header) != 2 or not header[1].isdigit():
        raise DataFormatError(f"{path}: line 1: expected '{FORMAT_VERSION} <vocab_size>'")
    if header[0] != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {header[0]!r} (expected {FORMAT_VERSION})")

    n_alpha = _section(1, "alphabet")
    alphabet = lines[2:2 + n_alpha]
    cursor = 2 + n_alpha
    n_merges = _section(cursor, "merges")
    merge_lines = lines[cursor + 1:cursor + 1 + n_merges]
    cursor += 1 + n_merges
    if len(alphabet) != n_alpha or len(merge_lines) != n_merges or cursor >= len(lines) or lines[cursor] != "#end":
        raise DataFormatError(f"{path}: truncated merges file")
    merges = []
    for offset, line in enumerate(merge_lines):
        parts = line.split(" ")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise DataFormatError(f"{path}: line {cursor - n_merges + offset + 1}: malformed merge")
        merges.append((parts[0], parts[1]))
    return BpeModel(alphabet, merges, int(header[1]))
