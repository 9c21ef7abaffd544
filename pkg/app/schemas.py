"""Pydantic schemas for configuration files, logs, reports and the manifest."""
import hashlib
import json
from typing import Optional

from pydantic import BaseModel, Field

from app.errors import ConfigError

DEFAULT_EXCLUDE_PATTERNS = [r"\s", r"\d", r"^-", r"-$"]


def config_hash(model: BaseModel) -> str:
    """SHA-256 of the canonical JSON form of a config model."""
    payload = json.dumps(model.model_dump(mode="json"), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class FilterConfig(BaseModel):
    """Cleaning rules applied by ``prepare``."""
    allowed_pos: list[str] = ["N", "V"]
    exclude_patterns: list[str] = Field(default_factory=lambda: list(DEFAULT_EXCLUDE_PATTERNS))
    min_support: int = Field(50, ge=1)


class FilterLogEntry(BaseModel):
    """Input/output counts of one cleaning stage."""
    stage: str
    in_count: int
    out_count: int
    min_support: Optional[int] = None


class SplitSpec(BaseModel):
    """Stratified train/test split; ``val_fraction`` carves validation out of train."""
    test_fraction: float = Field(0.1, gt=0.0, lt=1.0)
    val_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    seed: int = 13


class SchedulerSpec(BaseModel):
    """Per-epoch learning-rate schedule used before the SWA phase."""
    kind: str = "cosine"  # cosine | exponential | plateau
    t_max: int = 25
    eta_min: float = 0.0
    gamma: float = 0.95
    patience: int = 10
    factor: float = 0.1
    mode: str = "max"
    min_lr: float = 1e-6

    def describe(self) -> str:
        if self.kind == "cosine":
            return f"CosineAnnealingLR, T_max={self.t_max}"
        if self.kind == "exponential":
            return f"ExponentialLR, gamma={self.gamma}"
        if self.kind == "plateau":
            return f"ReduceLROnPlateau, patience={self.patience}"
        return self.kind


class ModelConfig(BaseModel):
    """Architecture of the multi-task transformer classifier."""
    vocab_size: int = Field(2000, ge=4)
    d_model: int = Field(128, ge=1)
    ffn_dim: int = Field(512, ge=1)
    n_layers: int = Field(2, ge=1)
    n_heads: int = Field(4, ge=1)
    dropout: float = 0.1
    max_len: int = Field(192, ge=1)
    n_pos: int = Field(2, ge=1)
    n_contlex: int = Field(73, ge=1)
    seed: int = 13


class LossWeights(BaseModel):
    pos: float = 1.0
    contlex: float = 1.0


class TrainConfig(BaseModel):
    """Training regimen; defaults reproduce the reference run."""
    epochs: int = 100
    batch_size: int = 512
    eval_batch_size: int = 1024
    lr: float = 0.003
    scheduler: SchedulerSpec = Field(default_factory=SchedulerSpec)
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    swa_start_epoch: int = 80
    swa_lr: float = 0.0005
    swa_anneal_epochs: int = 5
    seed: int = 13

    def ensure_valid(self) -> None:
        """Raise ConfigError when the regimen is inconsistent."""
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0 or self.swa_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if not 1 <= self.swa_start_epoch <= self.epochs:
            raise ConfigError(f"swa_start_epoch must lie in [1, {self.epochs}]")
        if self.swa_anneal_epochs < 1:
            raise ConfigError("swa_anneal_epochs must be >= 1")
        if self.loss_weights.pos < 0 or self.loss_weights.contlex < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.scheduler.kind not in ("cosine", "exponential", "plateau"):
            raise ConfigError(f"unknown scheduler kind: {self.scheduler.kind}")


class EpochRecord(BaseModel):
    """One line of the run history."""
    epoch: int
    lr: float
    loss: float
    loss_pos: float
    loss_contlex: float
    val_pos_f1: float
    val_contlex_f1: float
    val_metric: float
    swa: bool = False
    checkpoint: Optional[str] = None


class LabelMetrics(BaseModel):
    label: str
    precision: float
    recall: float
    f1: float
    support: int


class MetricsReport(BaseModel):
    """Per-label and averaged classification metrics for one task."""
    task: str
    masking_mode: str = "none"
    n: int
    accuracy: float
    labels: list[LabelMetrics]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    # Labels whose precision or recall had a zero denominator (reported as 0)
    zero_division: list[str] = []


class SweepRow(BaseModel):
    k: int
    pos_accuracy: float
    contlex_accuracy: float


class ArtifactRecord(BaseModel):
    """A file produced by a pipeline command."""
    path: str
    sha256: str
    command: str
    config_hash: str = ""
    upstream: dict[str, str] = {}


class PipelineManifest(BaseModel):
    """Index of every artifact in a workdir and the lineage between them."""
    version: str = "manifest/v1"
    artifacts: dict[str, ArtifactRecord] = {}
