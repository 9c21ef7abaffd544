import numpy as np
import pytest

from app.schemas import ModelConfig
from app.services import labels
from app.services.augment import AugmentedEntry, assemble_input, default_miniparadigms
from app.services.bpe import train_bpe
from app.services.corpus import LexemeRecord
from app.services.synth import generate


@pytest.fixture
def toy_records():
    return [
        LexemeRecord("talo", "N", "N_TALO_ERRORTH", "N_TALO"),
        LexemeRecord("kala", "N", "N_TALO", "N_TALO"),
        LexemeRecord("kivi", "N", "N_KIVI", "N_KIVI"),
        LexemeRecord("lahti", "N", "N_KIVI", "N_KIVI"),
        LexemeRecord("sanoa", "V", "V_SANOA", "V_SANOA"),
        LexemeRecord("antaa", "V", "V_SANOA", "V_SANOA"),
        LexemeRecord("juosta", "V", "V_JUOSTA", "V_JUOSTA"),
        LexemeRecord("nousta", "V", "V_JUOSTA", "V_JUOSTA"),
        LexemeRecord("tulla", "V", "V_TULLA", "V_TULLA"),
    ]


@pytest.fixture
def toy_space(toy_records):
    return labels.fit(toy_records)


@pytest.fixture
def toy_entries(toy_records):
    return [
        AugmentedEntry(r, [("t1", r.lemma + "n"), ("t2", r.lemma + "ssa"), ("t3", r.lemma + "lle")])
        for r in toy_records
    ]


@pytest.fixture
def toy_bpe(toy_entries):
    return train_bpe([assemble_input(e, 4) for e in toy_entries], vocab_size=60, min_frequency=2)


@pytest.fixture
def tiny_config():
    return ModelConfig(vocab_size=11, d_model=8, ffn_dim=16, n_layers=1, n_heads=2, dropout=0.0,
                       max_len=16, n_pos=2, n_contlex=4, seed=3)


@pytest.fixture
def small_synth():
    return generate(n_classes=4, per_class=12, seed=5, decisive_form=3, spec=default_miniparadigms())


@pytest.fixture
def rng():
    return np.random.default_rng(0)
