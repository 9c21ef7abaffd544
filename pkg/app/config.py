"""Application configuration."""
import os
from pathlib import Path

from dotenv import load_dotenv

# Base directory
BASE_DIR = Path(__file__).parent.parent

# Load environment variables from .env file (if present)
load_dotenv(BASE_DIR / ".env")

# Data directories
DATA_DIR = Path(os.getenv("CONTLEX_DATA_DIR", str(BASE_DIR / "data")))
LOG_DIR = Path(os.getenv("CONTLEX_LOG_DIR", str(DATA_DIR / "logs")))

# Run registry
DATABASE_URL = os.getenv("CONTLEX_DATABASE_URL", f"sqlite:///{DATA_DIR}/runs.db")

# Logging
LOG_LEVEL = os.getenv("CONTLEX_LOG_LEVEL", "INFO").upper()
LOG_TIMEZONE = os.getenv("CONTLEX_LOG_TIMEZONE", "UTC")
# Set CONTLEX_LOG_TO_FILE=true in .env to also write a daily rotating log file
LOG_TO_FILE = os.getenv("CONTLEX_LOG_TO_FILE", "false").lower() == "true"
LOG_FILE_NAME = "contlex.log"

# Default seed for every command that accepts --seed
DEFAULT_SEED = int(os.getenv("CONTLEX_SEED", "13"))

# Fixed artifact names inside a pipeline workdir
MANIFEST_FILE = "manifest.json"
LEXEMES_FILE = "lexemes.tsv"
FORMS_FILE = "forms.tsv"
DATASET_FILE = "dataset.tsv"
FILTER_LOG_FILE = "filter_log.json"
LABELS_FILE = "labels.json"
ENTRIES_FILE = "entries.jsonl"
AUGMENTED_FILE = "augmented.txt"
BPE_FILE = "bpe.model"
SPLITS_FILE = "splits.json"
CHECKPOINT_DIR = "checkpoints"
BEST_CHECKPOINT = "best.ckpt"
SWA_CHECKPOINT = "swa.ckpt"
HISTORY_FILE = "history.jsonl"
REPORT_FILE = "report.json"
SWEEP_CSV = "sweep.csv"
SWEEP_DAT = "sweep.dat"
ENCODED_FILE = "encoded.jsonl"
PREDICTIONS_FILE = "predictions.jsonl"
RUNS_CSV = "runs.csv"
RUNS_DIR = "runs"
