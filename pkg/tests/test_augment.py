import json

import pytest

from app.errors import ConfigError, DataFormatError, UsageError
from app.services.augment import (
    SEPARATOR,
    AugmentedEntry,
    FileFormGenerator,
    InMemoryFormGenerator,
    MiniparadigmSpec,
    assemble_input,
    augment_records,
    bpe_corpus,
    default_miniparadigms,
    generate_forms,
    load_miniparadigms,
    read_entries,
    write_entries,
)
from app.services.corpus import LexemeRecord

SPEC = MiniparadigmSpec({"N": ("N+Sg+Gen", "N+Pl+Gen", "N+Ess"), "V": ("V+Inf",)})
TALO = LexemeRecord("talo", "N", "N_TALO", "N_TALO")


@pytest.fixture
def generator():
    return InMemoryFormGenerator({
        ("talo", "N", "N+Sg+Gen"): ["talon"],
        ("talo", "N", "N+Pl+Gen"): ["talojen", "talojen", "taloiden"],
        ("talo", "N", "N+Ess"): ["talona"],
    })


def test_default_miniparadigms_have_ten_tags_per_pos():
    spec = default_miniparadigms()
    assert len(spec["N"]) == 10 and len(spec["V"]) == 10
    assert spec["V"][0] == "V+Ind+Prs+ConNeg"
    assert spec.max_forms == 10


def test_generate_forms_keeps_spec_order_and_first_form(generator):
    entry = generate_forms(generator, TALO, SPEC)
    assert entry.forms == [("N+Sg+Gen", "talon"), ("N+Pl+Gen", "talojen"), ("N+Ess", "talona")]


def test_missing_forms_are_skipped():
    entry = generate_forms(InMemoryFormGenerator({("talo", "N", "N+Ess"): ["talona"]}), TALO, SPEC)
    assert entry.surface_forms == ["talona"]
    (lemma_only,) = augment_records(InMemoryFormGenerator(), [TALO], SPEC)
    assert lemma_only.forms == []
    assert assemble_input(lemma_only, 11) == "talo"


def test_pos_without_miniparadigm_is_config_error(generator):
    with pytest.raises(ConfigError):
        generate_forms(generator, LexemeRecord("nopea", "A", "A_NOPEA"), SPEC)


@pytest.mark.parametrize("max_forms, expected", [
    (1, "talo"),
    (2, "talo␟talon"),
    (3, "talo␟talon␟talojen"),
    (11, "talo␟talon␟talojen␟talona"),
])
def test_assemble_input_prefixes(generator, max_forms, expected):
    assert assemble_input(generate_forms(generator, TALO, SPEC), max_forms) == expected


def test_assemble_input_rejects_zero_forms(generator):
    with pytest.raises(UsageError):
        assemble_input(generate_forms(generator, TALO, SPEC), 0)


def test_bpe_corpus_uses_every_form(generator):
    (line,) = bpe_corpus([generate_forms(generator, TALO, SPEC)], SPEC)
    assert line.split(SEPARATOR) == ["talo", "talon", "talojen", "talona"]


def test_file_form_generator(tmp_path):
    path = tmp_path / "forms.tsv"
    path.write_text("lemma\tpos\ttag\tform\ntalo\tN\tN+Ess\ttalona\ntalo\tN\tN+Ess\ttaloa\n", encoding="utf-8")
    gen = FileFormGenerator(path)
    assert gen.generate("talo", "N", "N+Ess") == ["talona", "taloa"]
    assert gen.generate("talo", "N", "N+Sg+Gen") == []


@pytest.mark.parametrize("content", [
    "lemma\tpos\tform\n",
    "lemma\tpos\ttag\tform\ntalo\tN\tN+Ess\n",
    "lemma\tpos\ttag\tform\ntalo\tN\t\ttalona\n",
])
def test_file_form_generator_rejects_malformed(tmp_path, content):
    path = tmp_path / "forms.tsv"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(DataFormatError):
        FileFormGenerator(path)


def test_load_miniparadigms_from_json(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"N": ["N+Ess"]}), encoding="utf-8")
    assert load_miniparadigms(str(path)).to_dict() == {"N": ["N+Ess"]}
    assert load_miniparadigms("default") == default_miniparadigms()
    with pytest.raises(ConfigError):
        load_miniparadigms(str(tmp_path / "absent.json"))


def test_entries_file_round_trip(tmp_path, toy_entries):
    write_entries(toy_entries, tmp_path / "augmented.jsonl")
    assert read_entries(tmp_path / "augmented.jsonl") == toy_entries


def test_read_entries_reports_line(tmp_path):
    path = tmp_path / "augmented.jsonl"
    path.write_text('{"lemma": "talo"}\n', encoding="utf-8")
    with pytest.raises(DataFormatError, match="line 1"):
        read_entries(path)


def test_augmented_entry_surface_forms():
    entry = AugmentedEntry(TALO, [("a", "x"), ("b", "y")])
    assert entry.surface_forms == ["x", "y"]
