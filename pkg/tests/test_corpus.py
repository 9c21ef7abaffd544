import logging
import math
from collections import Counter

import numpy as np
import pytest

from app.errors import ConfigError, DataFormatError, PreconditionError
from app.schemas import FilterConfig, SplitSpec
from app.services import corpus
from app.services.corpus import LexemeRecord


def write_tsv(path, rows, header="lemma\tpos\tcontlex"):
    path.write_text(header + "\n" + "".join("\t".join(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.mark.parametrize("raw, expected", [
    ("V_JOAQTTED_ERRORTH", "V_JOAQTTED"),
    ("N_TALO_A_B", "N_TALO"),
    ("N_TALO", "N_TALO"),
    ("N", "N"),
])
def test_normalize_contlex(raw, expected):
    assert corpus.normalize_contlex(raw) == expected
    assert corpus.normalize_contlex(expected) == expected


def test_load_lexemes_reads_columns_in_any_order(tmp_path):
    path = write_tsv(tmp_path / "lex.tsv", [("N_TALO", "talo", "N")], header="contlex\tlemma\tpos")
    (record,) = corpus.load_lexemes(path)
    assert record == LexemeRecord("talo", "N", "N_TALO")


def test_load_lexemes_reports_row_of_bad_line(tmp_path):
    path = write_tsv(tmp_path / "lex.tsv", [("talo", "N", "N_TALO"), ("kala", "N")])
    with pytest.raises(DataFormatError, match="row 3"):
        corpus.load_lexemes(path)


def test_load_lexemes_missing_column(tmp_path):
    path = write_tsv(tmp_path / "lex.tsv", [("talo", "N")], header="lemma\tpos")
    with pytest.raises(DataFormatError, match="contlex"):
        corpus.load_lexemes(path)


def test_filter_pos_and_regex_filter():
    records = [
        LexemeRecord("talo", "N", "N_TALO"),
        LexemeRecord("nopea", "A", "A_NOPEA"),
        LexemeRecord("iso talo", "N", "N_TALO"),
        LexemeRecord("-ton", "N", "N_TALO"),
        LexemeRecord("4g", "N", "N_TALO"),
    ]
    kept = corpus.filter_pos(records, ["N", "V"])
    assert [r.lemma for r in kept] == ["talo", "iso talo", "-ton", "4g"]
    kept = corpus.regex_filter(kept, FilterConfig().exclude_patterns)
    assert [r.lemma for r in kept] == ["talo"]


def test_invalid_pattern_is_config_error():
    with pytest.raises(ConfigError):
        corpus.regex_filter([], ["("])


def test_min_support_keeps_classes_at_threshold():
    records = ([LexemeRecord(f"a{i}", "N", "N_A", "N_A") for i in range(3)]
               + [LexemeRecord(f"b{i}", "N", "N_B", "N_B") for i in range(2)]
               + [LexemeRecord(f"c{i}", "V", "V_C", "V_C") for i in range(3)])
    kept, labels = corpus.filter_min_support(records, 3)
    assert len(kept) == 6
    assert labels == {"N": ["N_A"], "V": ["V_C"]}


def test_run_pipeline_logs_every_stage(tmp_path, caplog):
    caplog.set_level(logging.INFO, logger="app.services.corpus")
    rows = [(f"talo{c}", "N", "N_TALO_X") for c in "abcd"] + [("syy", "A", "A_X"), ("iso talo", "N", "N_TALO")]
    rows += [(f"kivi{c}", "N", "N_KIVI") for c in "ab"]
    dataset = corpus.run_pipeline(write_tsv(tmp_path / "lex.tsv", rows), FilterConfig(min_support=3))
    assert [e.stage for e in dataset.filter_log] == ["load", "filter_pos", "regex_filter", "normalize", "min_support"]
    assert [(e.in_count, e.out_count) for e in dataset.filter_log] == [(8, 8), (8, 7), (7, 6), (6, 6), (6, 4)]
    assert {r.contlex for r in dataset.records} == {"N_TALO"}
    assert dataset.kept_labels == {"N": ["N_TALO"]}
    assert "N: N_TALO=4" in caplog.messages


def test_label_inventory_counts_normalized_labels(toy_records):
    assert corpus.label_inventory(toy_records) == {
        "N": {"N_KIVI": 2, "N_TALO": 2},
        "V": {"V_JUOSTA": 2, "V_SANOA": 2, "V_TULLA": 1},
    }


def test_dataset_and_filter_log_files(tmp_path, toy_records):
    corpus.write_dataset(toy_records, tmp_path / "data.tsv")
    assert corpus.read_dataset(tmp_path / "data.tsv") == toy_records
    dataset = corpus.run_pipeline(write_tsv(tmp_path / "lex.tsv", [("talo", "N", "N_TALO")]), FilterConfig(min_support=1))
    corpus.write_filter_log(dataset.filter_log, tmp_path / "log.json")
    assert corpus.read_filter_log(tmp_path / "log.json") == dataset.filter_log


def expected_test_count(size, fraction):
    return min(size - 1, max(1, math.floor(fraction * size + 0.5)))


def test_stratified_split_is_proportional_per_class():
    gen = np.random.default_rng(1)
    for trial in range(100):
        records = []
        for c in range(int(gen.integers(1, 6))):
            pos = "N" if c % 2 else "V"
            records += [LexemeRecord(f"w{c}_{i}", pos, f"{pos}_C{c}", f"{pos}_C{c}")
                        for i in range(int(gen.integers(2, 40)))]
        order = gen.permutation(len(records))
        records = [records[i] for i in order]
        fraction = float(gen.uniform(0.05, 0.5))
        train, test = corpus.stratified_split(records, SplitSpec(test_fraction=fraction, seed=trial))

        assert sorted(train + test) == list(range(len(records)))
        sizes = Counter(r.label for r in records)
        in_test = Counter(records[i].label for i in test)
        for label, size in sizes.items():
            assert in_test[label] == expected_test_count(size, fraction)


def test_stratified_split_is_seeded(toy_records):
    toy_records = toy_records[:8]
    first = corpus.stratified_split(toy_records, SplitSpec(test_fraction=0.5, seed=4))
    assert corpus.stratified_split(toy_records, SplitSpec(test_fraction=0.5, seed=4)) == first


def test_stratified_split_rejects_singleton_class(toy_records):
    with pytest.raises(PreconditionError, match="V/V_TULLA"):
        corpus.stratified_split(toy_records, SplitSpec())
