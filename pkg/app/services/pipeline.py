"""Workdir artifacts, the manifest and lineage checks, and training runs.

Every command reads and writes fixed file names inside one workdir. The
manifest records for each artifact its SHA-256, the producing command, that
command's config hash, and the SHA-256 of every artifact it descends from.
Consumers re-hash their inputs and refuse artifacts that were modified after
being recorded, or whose ancestries disagree (e.g. a BPE model trained on
one dataset and a label space fitted on another).
"""
import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from app.config import (
    BEST_CHECKPOINT,
    BPE_FILE,
    CHECKPOINT_DIR,
    DATASET_FILE,
    ENTRIES_FILE,
    HISTORY_FILE,
    LABELS_FILE,
    MANIFEST_FILE,
    REPORT_FILE,
    RUNS_DIR,
    SPLITS_FILE,
    SWA_CHECKPOINT,
)
from app.errors import DataFormatError, MissingArtifactError
from app.schemas import ArtifactRecord, ModelConfig, PipelineManifest, SplitSpec, TrainConfig, config_hash
from app.services import model as model_service
from app.services import train as train_service
from app.services.augment import AugmentedEntry, read_entries
from app.services.bpe import BpeModel, load_model
from app.services.corpus import LexemeRecord, stratified_split
from app.services.evaluation import evaluate_model, write_report
from app.services.labels import LabelSpace, load_label_space

logger = logging.getLogger(__name__)

# Which command produces each artifact, for actionable error messages
PRODUCERS = {
    "lexemes.tsv": "synth",
    "forms.tsv": "synth",
    DATASET_FILE: "prepare",
    "filter_log.json": "prepare",
    LABELS_FILE: "prepare",
    ENTRIES_FILE: "augment",
    "augmented.txt": "augment",
    BPE_FILE: "train-bpe",
    SPLITS_FILE: "split",
}


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class Workdir:
    """A pipeline directory plus its manifest."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.root / MANIFEST_FILE
        self.manifest = self._load()

    def _load(self) -> PipelineManifest:
        if not self.manifest_path.exists():
            return PipelineManifest()
        try:
            return PipelineManifest.model_validate_json(self.manifest_path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise DataFormatError(f"{self.manifest_path}: invalid manifest: {e}") from e

    def save(self) -> None:
        payload = self.manifest.model_dump(mode="json")
        self.manifest_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def path(self, name: str) -> Path:
        return self.root / name

    def _hint(self, name: str) -> str:
        producer = PRODUCERS.get(name)
        return f" (run `{producer}` first)" if producer else ""

    def require(self, *names: str) -> dict[str, str]:
        """Verify artifacts against the manifest and return their merged lineage.

        Raises:
            MissingArtifactError: absent file, unrecorded file, file changed
                since it was recorded, or artifacts with conflicting ancestry
        """
        lineage: dict[str, str] = {}
        origin: dict[str, str] = {}
        for name in names:
            path = self.path(name)
            if not path.exists():
                raise MissingArtifactError(path, f"missing artifact{self._hint(name)}")
            record = self.manifest.artifacts.get(name)
            if record is None:
                raise MissingArtifactError(path, f"artifact not recorded in {MANIFEST_FILE}{self._hint(name)}")
            if sha256_file(path) != record.sha256:
                raise MissingArtifactError(path, "artifact changed since it was recorded; re-run "
                                                 f"`{record.command}`")
            for key, digest in [(name, record.sha256), *record.upstream.items()]:
                if key in lineage and lineage[key] != digest:
                    raise MissingArtifactError(
                        path, f"lineage mismatch: {name} and {origin[key]} descend from different versions of {key}"
                    )
                lineage[key] = digest
                origin.setdefault(key, name)
        return lineage

    def external(self, path, label: str) -> dict[str, str]:
        """Lineage entry for an input file that lives outside the manifest."""
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(path, "missing input file")
        return {f"input:{label}": sha256_file(path)}

    def recorded_name(self, path) -> Optional[str]:
        """Manifest name of ``path`` if it is a recorded artifact of this workdir."""
        try:
            name = Path(path).resolve().relative_to(self.root.resolve()).as_posix()
        except ValueError:
            return None
        return name if name in self.manifest.artifacts else None

    def lineage_of(self, path, label: str) -> dict[str, str]:
        """Manifest lineage when ``path`` is a recorded artifact, else an input entry."""
        name = self.recorded_name(path)
        if name is not None:
            return self.require(name)
        return self.external(path, label)

    def record(self, name: str, command: str, config: str = "", lineage: Optional[dict[str, str]] = None) -> ArtifactRecord:
        path = self.path(name)
        record = ArtifactRecord(path=name, sha256=sha256_file(path), command=command,
                                config_hash=config, upstream=dict(sorted((lineage or {}).items())))
        self.manifest.artifacts[name] = record
        self.save()
        logger.info(f"Recorded {name} ({record.sha256[:12]}) from `{command}`")
        return record


# --------- splits --------- #

def make_splits(records: list[LexemeRecord], spec: SplitSpec) -> dict[str, list[int]]:
    """Test split of the dataset, then a validation split of the train part.

    Classes left with a single train record stay whole in train.
    """
    train_idx, test_idx = stratified_split(records, spec)
    val_idx: list[int] = []
    if spec.val_fraction > 0:
        sizes = Counter(records[i].label for i in train_idx)
        eligible = [i for i in train_idx if sizes[records[i].label] >= 2]
        if len(eligible) < len(train_idx):
            kept = sorted({records[i].label for i in train_idx} - {records[i].label for i in eligible})
            logger.info(f"No validation records for {len(kept)} class(es) with one train record: "
                        + ", ".join(f"{p}/{c}" for p, c in kept))
        if eligible:
            sub = [records[i] for i in eligible]
            _, inner_val = stratified_split(sub, SplitSpec(test_fraction=spec.val_fraction, seed=spec.seed + 1))
            val_idx = [eligible[i] for i in inner_val]
            held_out = set(val_idx)
            train_idx = [i for i in train_idx if i not in held_out]
    return {"train": train_idx, "val": val_idx, "test": test_idx}


def write_splits(splits: dict[str, list[int]], spec: SplitSpec, path) -> None:
    payload = {"spec": spec.model_dump(mode="json"), **{k: [int(i) for i in v] for k, v in splits.items()}}
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def read_splits(path) -> dict[str, list[int]]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return {k: list(payload[k]) for k in ("train", "val", "test")}
    except (json.JSONDecodeError, KeyError) as e:
        raise DataFormatError(f"{path}: invalid splits file: {e}") from e


# --------- training runs --------- #

@dataclass
class RunInputs:
    entries: list[AugmentedEntry]
    bpe: BpeModel
    space: LabelSpace
    splits: dict[str, list[int]]
    lineage: dict[str, str]

    def subset(self, split: str) -> list[AugmentedEntry]:
        return [self.entries[i] for i in self.splits[split]]


def load_run_inputs(workdir: Workdir, *extra: str) -> RunInputs:
    """Load the training inputs; ``extra`` artifacts must share their lineage."""
    lineage = workdir.require(ENTRIES_FILE, BPE_FILE, LABELS_FILE, SPLITS_FILE, *extra)
    return RunInputs(
        entries=read_entries(workdir.path(ENTRIES_FILE)),
        bpe=load_model(workdir.path(BPE_FILE)),
        space=load_label_space(workdir.path(LABELS_FILE)),
        splits=read_splits(workdir.path(SPLITS_FILE)),
        lineage=lineage,
    )


def execute_run(
    workdir_root: str,
    run_name: str,
    model_config: dict,
    train_config: dict,
    max_forms: int,
    masking_mode: str = "none",
) -> dict:
    """Train one configuration and evaluate its SWA model on the test split.

    Takes and returns plain dicts so grid rows can run in worker processes;
    manifest and registry writes stay with the caller.
    """
    workdir = Workdir(workdir_root)
    inputs = load_run_inputs(workdir)
    model_cfg = ModelConfig.model_validate(model_config)
    train_cfg = TrainConfig.model_validate(train_config)
    run_dir = workdir.path(f"{RUNS_DIR}/{run_name}")
    run_dir.mkdir(parents=True, exist_ok=True)

    def _encode(split: str):
        return model_service.encode_entries(inputs.subset(split), inputs.bpe, inputs.space, model_cfg.max_len, max_forms)

    train_set, val_set, test_set = _encode("train"), _encode("val"), _encode("test")
    model = model_service.init(model_cfg)
    result = train_service.train(model, train_set, val_set, train_cfg, inputs.space, out_dir=run_dir)

    reports = evaluate_model(result.swa_model, test_set, inputs.space, masking_mode, train_cfg.eval_batch_size, inputs.bpe)
    digest = config_hash(train_cfg) + ":" + config_hash(model_cfg)
    write_report(list(reports), run_dir / REPORT_FILE, config_hash=digest,
                 extra={"model": "swa", "run": run_name, "best_epoch": result.history.best_epoch})
    prefix = f"{RUNS_DIR}/{run_name}/"
    return {
        "run": run_name,
        "config_hash": digest,
        "artifacts": [prefix + HISTORY_FILE, f"{prefix}{CHECKPOINT_DIR}/{BEST_CHECKPOINT}",
                      f"{prefix}{CHECKPOINT_DIR}/{SWA_CHECKPOINT}", prefix + REPORT_FILE],
        "lineage": inputs.lineage,
        "pos_f1": reports[0].weighted_f1,
        "contlex_f1": reports[1].weighted_f1,
        "best_epoch": result.history.best_epoch,
        "final_loss": result.history.losses[-1],
    }


def model_config_for(bpe: BpeModel, space: LabelSpace, **overrides) -> ModelConfig:
    """Model config whose vocabulary and heads match the workdir artifacts."""
    return ModelConfig(vocab_size=len(bpe), n_pos=space.n_pos, n_contlex=space.n_contlex, **overrides)
