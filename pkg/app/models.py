"""SQLAlchemy models for the training run registry."""
import csv
import uuid
from datetime import datetime

from sqlalchemy import Column, DateTime, Float, Integer, String, Text

from app.database import Base


class RunRecord(Base):
    """One completed training run (a grid row or a single ``train``)."""
    __tablename__ = "runs"

    id = Column(String, primary_key=True, default=lambda: str(uuid.uuid4()))
    experiment = Column(Integer, nullable=True, index=True)  # Grid row id, None for plain train
    workdir = Column(String, nullable=False, index=True)
    scheduler = Column(String, nullable=False)
    dropout = Column(Float, nullable=False)
    n_layers = Column(Integer, nullable=False)
    n_heads = Column(Integer, nullable=False)
    epochs = Column(Integer, nullable=False)
    pos_f1 = Column(Float, nullable=True)  # Weighted F1 of the reported (SWA) model
    contlex_f1 = Column(Float, nullable=True)
    best_epoch = Column(Integer, nullable=True)
    config_hash = Column(String, nullable=False, index=True)
    checkpoint = Column(Text, nullable=True)
    report = Column(Text, nullable=True)
    created_at = Column(DateTime, nullable=False, default=datetime.utcnow)

    def to_row(self) -> dict:
        return {
            "Exp": self.experiment if self.experiment is not None else "",
            "Scheduler": self.scheduler,
            "Dropout": self.dropout,
            "N_layers": self.n_layers,
            "N_heads": self.n_heads,
            "POS F-1": "" if self.pos_f1 is None else f"{self.pos_f1:.2f}",
            "Contlex F-1": "" if self.contlex_f1 is None else f"{self.contlex_f1:.2f}",
            "Epochs": self.epochs,
            "Workdir": self.workdir,
            "Created": self.created_at.isoformat(timespec="seconds"),
        }


RUN_TABLE_COLUMNS = ("Exp", "Scheduler", "Dropout", "N_layers", "N_heads", "POS F-1", "Contlex F-1",
                     "Epochs", "Workdir", "Created")


def export_runs(runs, path) -> int:
    """Write runs as a results table CSV; returns the row count."""
    runs = list(runs)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=RUN_TABLE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for run in runs:
            writer.writerow(run.to_row())
    return len(runs)
