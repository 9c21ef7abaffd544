from collections import Counter

import numpy as np
import pytest

from app.errors import ConfigError, DataFormatError, LabelIndexError
from app.services.augment import SEPARATOR, assemble_input
from app.services.bpe import (
    EOW,
    PAD_ID,
    SEP_ID,
    SPECIALS,
    UNK_ID,
    decode,
    encode,
    load_model,
    merge_pair,
    save_model,
    train_bpe,
)


def reference_merges(lines, vocab_size, min_frequency):
    """Recount every pair from scratch before each merge."""
    counts = Counter()
    for line in lines:
        for segment in line.split(SEPARATOR):
            counts.update(segment.split())
    alphabet = {EOW} | {ch for w in counts for ch in w}
    words = {w: list(w) + [EOW] for w in counts}
    merges = []
    while len(merges) < vocab_size - len(SPECIALS) - len(alphabet):
        pairs = Counter()
        for w, symbols in words.items():
            for pair in zip(symbols, symbols[1:]):
                pairs[pair] += counts[w]
        candidates = [(-c, a, b) for (a, b), c in pairs.items() if c >= min_frequency]
        if not candidates:
            break
        _, a, b = min(candidates)
        merges.append((a, b))
        words = {w: merge_pair(s, (a, b)) for w, s in words.items()}
    return merges, words


def random_corpus(gen):
    letters = "abcde"[: int(gen.integers(1, 6))]
    lines = []
    for _ in range(int(gen.integers(1, 8))):
        length = int(gen.integers(1, 31))
        chars = gen.choice(list(letters) + [" ", SEPARATOR], size=length, p=None)
        line = "".join(chars)
        if not line.replace(SEPARATOR, " ").split():
            line = letters[0]
        lines.append(line)
    return lines


def test_trainer_matches_reference_on_random_corpora():
    gen = np.random.default_rng(11)
    for _ in range(200):
        lines = random_corpus(gen)
        min_frequency = int(gen.integers(1, 4))
        alphabet = {ch for line in lines for ch in line if ch not in (" ", SEPARATOR)}
        vocab_size = len(SPECIALS) + len(alphabet) + 1 + int(gen.integers(0, 20))

        model = train_bpe(lines, vocab_size=vocab_size, min_frequency=min_frequency)
        merges, segmented = reference_merges(lines, vocab_size, min_frequency)

        assert list(model.merges) == merges
        assert len(model.merges) <= vocab_size - len(SPECIALS) - len(model.alphabet)
        new_symbols = {a + b for a, b in model.merges} - set(model.alphabet)
        assert len(model) == len(SPECIALS) + len(model.alphabet) + len(new_symbols)
        for word, symbols in segmented.items():
            assert model.segment(word) == symbols


def test_merge_ties_break_on_symbol_order():
    model = train_bpe(["ab ba"], vocab_size=len(SPECIALS) + 3 + 1, min_frequency=1)
    assert model.merges == (("a", EOW),)


def test_special_ids_are_fixed(toy_bpe):
    assert toy_bpe.id_to_symbol[:3] == list(SPECIALS)
    assert (PAD_ID, UNK_ID, SEP_ID) == (0, 1, 2)
    assert len(toy_bpe) <= 60


def test_separator_becomes_sep_and_never_merges(toy_bpe):
    ids = encode(toy_bpe, f"talo{SEPARATOR}talon")
    assert ids.count(SEP_ID) == 1
    assert all(SEPARATOR not in s for s in toy_bpe.id_to_symbol)


def test_encode_decode_inverse(toy_bpe, toy_entries):
    for entry in toy_entries:
        text = assemble_input(entry, 4)
        assert decode(toy_bpe, encode(toy_bpe, text)) == text
    assert decode(toy_bpe, [PAD_ID] + encode(toy_bpe, "talo")) == "talo"


def test_unknown_characters_map_to_unk(toy_bpe):
    ids = encode(toy_bpe, "xyz")
    assert ids[:3] == [UNK_ID] * 3


def test_decode_rejects_out_of_range_id(toy_bpe):
    with pytest.raises(LabelIndexError):
        decode(toy_bpe, [len(toy_bpe)])


def test_training_errors():
    with pytest.raises(ConfigError):
        train_bpe([], vocab_size=10)
    with pytest.raises(ConfigError):
        train_bpe(["abc"], vocab_size=5)
    with pytest.raises(ConfigError):
        train_bpe(["abc"], vocab_size=50, min_frequency=0)


def test_min_frequency_stops_training():
    model = train_bpe(["abc"], vocab_size=100, min_frequency=2)
    assert model.merges == ()
    assert len(model) == len(SPECIALS) + 4


def test_save_load_round_trip(tmp_path, toy_bpe):
    save_model(toy_bpe, tmp_path / "bpe.txt")
    loaded = load_model(tmp_path / "bpe.txt")
    assert loaded == toy_bpe
    assert loaded.id_to_symbol == toy_bpe.id_to_symbol


def test_load_rejects_truncated_file(tmp_path, toy_bpe):
    path = tmp_path / "bpe.txt"
    save_model(toy_bpe, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    path.write_text("\n".join(lines[:-2]) + "\n", encoding="utf-8")
    with pytest.raises(DataFormatError):
        load_model(path)


def test_load_rejects_other_version(tmp_path, toy_bpe):
    path = tmp_path / "bpe.txt"
    save_model(toy_bpe, path)
    text = path.read_text(encoding="utf-8")
    path.write_text(text.replace("bpe/v1", "bpe/v9", 1), encoding="utf-8")
    with pytest.raises(DataFormatError, match="version"):
        load_model(path)


def test_merge_budget_is_vocab_minus_base():
    # alphabet a b c d plus the end-of-word marker
    base = len(SPECIALS) + 5
    model = train_bpe(["abcd abcd"], vocab_size=base + 2, min_frequency=1)
    assert len(model.merges) == 2
    assert len(model) == base + 2
