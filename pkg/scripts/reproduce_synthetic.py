#!/usr/bin/env python3
"""Run the synthetic end-to-end reproduction in a fresh workdir.

synth (8 classes x 80) -> prepare -> augment -> train-bpe (vocab 500) ->
split -> train (40 epochs, d_model 64, 2 layers, 4 heads, dropout 0.2,
cosine T_max 10, SWA from epoch 32) -> evaluate -> sweep.
"""
import argparse
import sys
import tempfile
from pathlib import Path

# Add parent directory to path to import app modules
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.cli import run
from app.config import REPORT_FILE, RUNS_DIR, SWEEP_CSV
from app.errors import ContlexError
from app.services.evaluation import read_report
from app.utils.logger import setup_script_logger

logger = setup_script_logger("reproduce_synthetic")


def reproduce(workdir: Path, seed: int, epochs: int = 40, swa_start: int = 32) -> dict:
    wd = ["--workdir", str(workdir)]
    steps = [
        ["synth", "--classes", "8", "--per-class", "80", "--seed", str(seed)],
        ["prepare", "--min-support", "50"],
        ["augment"],
        ["train-bpe", "--vocab-size", "500"],
        ["split", "--seed", str(seed)],
        ["train", "--epochs", str(epochs), "--batch-size", "64", "--d-model", "64", "--ffn-dim", "256",
         "--layers", "2", "--heads", "4", "--dropout", "0.2", "--t-max", "10",
         "--swa-start", str(swa_start), "--seed", str(seed),
         "--database-url", f"sqlite:///{workdir / 'runs.db'}"],
        ["sweep", "--k", "1..11"],
    ]
    for step in steps:
        logger.info(f"==> {' '.join(step)}")
        run(wd + step)
    reports = read_report(workdir / RUNS_DIR / "main" / REPORT_FILE)
    return {
        "pos_f1": reports["pos"].weighted_f1,
        "contlex_f1": reports["contlex"].weighted_f1,
        "sweep": (workdir / RUNS_DIR / "main" / SWEEP_CSV).read_text(encoding="utf-8"),
    }


def main():
    parser = argparse.ArgumentParser(description="Synthetic end-to-end reproduction")
    parser.add_argument('--workdir', type=str, default=None, help='Workdir (default: a fresh temp dir)')
    parser.add_argument('--seed', type=int, default=13, help='Random seed (default: 13)')
    args = parser.parse_args()

    workdir = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp(prefix="contlex-"))
    try:
        result = reproduce(workdir, args.seed)
    except ContlexError as e:
        logger.error(f"Reproduction failed: {e}")
        return e.exit_code
    logger.info(f"Test POS weighted F1 {result['pos_f1']:.4f}, Contlex weighted F1 {result['contlex_f1']:.4f}")
    logger.info(f"Sweep:\n{result['sweep']}")
    rows = [line.split(",") for line in result["sweep"].splitlines()[1:]]
    pos_gain = float(rows[-1][1]) - float(rows[0][1])
    contlex_gain = float(rows[-1][2]) - float(rows[0][2])
    ok = (round(result["pos_f1"], 2) == 1.0 and result["contlex_f1"] >= 0.95
          and contlex_gain >= 0.15 and pos_gain >= 0.0)
    logger.info("PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == '__main__':
    sys.exit(main())
