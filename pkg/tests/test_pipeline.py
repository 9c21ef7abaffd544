import json

import pytest

from app.config import MANIFEST_FILE
from app.errors import DataFormatError, MissingArtifactError
from app.schemas import SplitSpec
from app.services.corpus import LexemeRecord
from app.services.pipeline import Workdir, make_splits, model_config_for, read_splits, sha256_file, write_splits


def records_for(counts):
    out = []
    for label, n in counts.items():
        pos = label.split("_")[0]
        out.extend(LexemeRecord(f"{label.lower()}{i}", pos, label, label) for i in range(n))
    return out


def test_record_writes_manifest_entry(tmp_path):
    wd = Workdir(tmp_path / "wd")
    wd.path("dataset.tsv").write_text("lemma\tpos\tcontlex\n", encoding="utf-8")
    record = wd.record("dataset.tsv", "prepare", "abc", {"input:lexemes": "ff"})
    assert record.sha256 == sha256_file(wd.path("dataset.tsv"))

    payload = json.loads((tmp_path / "wd" / MANIFEST_FILE).read_text(encoding="utf-8"))
    entry = payload["artifacts"]["dataset.tsv"]
    assert entry["command"] == "prepare" and entry["config_hash"] == "abc"

    reopened = Workdir(tmp_path / "wd")
    assert reopened.require("dataset.tsv") == {"dataset.tsv": record.sha256, "input:lexemes": "ff"}


def test_missing_artifact_names_its_producer(tmp_path):
    wd = Workdir(tmp_path)
    with pytest.raises(MissingArtifactError, match="run `augment` first"):
        wd.require("entries.jsonl")


def test_unrecorded_artifact_is_refused(tmp_path):
    wd = Workdir(tmp_path)
    wd.path("bpe.model").write_text("{}", encoding="utf-8")
    with pytest.raises(MissingArtifactError, match="not recorded"):
        wd.require("bpe.model")


def test_modified_artifact_is_refused(tmp_path):
    wd = Workdir(tmp_path)
    wd.path("splits.json").write_text("{}", encoding="utf-8")
    wd.record("splits.json", "split")
    wd.path("splits.json").write_text('{"train": []}', encoding="utf-8")
    with pytest.raises(MissingArtifactError, match="changed since it was recorded; re-run `split`"):
        wd.require("splits.json")


def test_conflicting_lineage_is_refused(tmp_path):
    wd = Workdir(tmp_path)
    for name in ("bpe.model", "labels.json"):
        wd.path(name).write_text(name, encoding="utf-8")
    wd.record("bpe.model", "train-bpe", lineage={"dataset.tsv": "aaa"})
    wd.record("labels.json", "prepare", lineage={"dataset.tsv": "bbb"})
    with pytest.raises(MissingArtifactError, match="lineage mismatch"):
        wd.require("bpe.model", "labels.json")


def test_external_input_must_exist(tmp_path):
    wd = Workdir(tmp_path / "wd")
    with pytest.raises(MissingArtifactError):
        wd.external(tmp_path / "nope.tsv", "lexemes")
    source = tmp_path / "lexemes.tsv"
    source.write_text("x", encoding="utf-8")
    assert wd.lineage_of(source, "lexemes") == {"input:lexemes": sha256_file(source)}


def test_broken_manifest_is_format_error(tmp_path):
    (tmp_path / MANIFEST_FILE).write_text("{not json", encoding="utf-8")
    with pytest.raises(DataFormatError):
        Workdir(tmp_path)


def test_splits_are_disjoint_and_cover_everything():
    records = records_for({"N_A": 20, "N_B": 10, "V_A": 30})
    splits = make_splits(records, SplitSpec(test_fraction=0.1, val_fraction=0.1, seed=3))
    indices = splits["train"] + splits["val"] + splits["test"]
    assert sorted(indices) == list(range(len(records)))
    assert len(splits["test"]) == 2 + 1 + 3
    assert set(splits["val"]).isdisjoint(splits["test"])
    assert splits == make_splits(records, SplitSpec(test_fraction=0.1, val_fraction=0.1, seed=3))


def test_class_with_one_train_record_stays_in_train():
    records = records_for({"N_A": 20, "N_B": 2})
    splits = make_splits(records, SplitSpec(test_fraction=0.1, val_fraction=0.1, seed=3))
    assert sorted(splits["train"] + splits["val"] + splits["test"]) == list(range(len(records)))
    rare = {i for i, r in enumerate(records) if r.contlex == "N_B"}
    assert rare.isdisjoint(splits["val"])
    assert len(rare & set(splits["train"])) == 1 and len(rare & set(splits["test"])) == 1
    assert len(splits["val"]) == 2


def test_zero_val_fraction_leaves_val_empty():
    records = records_for({"N_A": 10, "V_A": 10})
    splits = make_splits(records, SplitSpec(test_fraction=0.2, val_fraction=0.0))
    assert splits["val"] == []
    assert len(splits["train"]) == 16


def test_splits_file_round_trip(tmp_path):
    splits = {"train": [0, 2], "val": [3], "test": [1]}
    write_splits(splits, SplitSpec(), tmp_path / "splits.json")
    assert read_splits(tmp_path / "splits.json") == splits
    (tmp_path / "bad.json").write_text('{"train": []}', encoding="utf-8")
    with pytest.raises(DataFormatError):
        read_splits(tmp_path / "bad.json")


def test_model_config_matches_artifacts(toy_bpe, toy_space):
    config = model_config_for(toy_bpe, toy_space, d_model=16, n_heads=2)
    assert config.vocab_size == len(toy_bpe)
    assert (config.n_pos, config.n_contlex) == (2, 5)
    assert config.d_model == 16
