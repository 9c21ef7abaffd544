"""Command-line front end wiring the pipeline end to end.

Every subcommand works inside ``--workdir`` and reads/writes the fixed
artifact names from app.config. Defaults reproduce the reference training
regimen, so a bare ``train`` runs 100 epochs at batch 512 and lr 0.003 with
SWA from epoch 80.
"""
import argparse
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from app.config import (
    AUGMENTED_FILE,
    BPE_FILE,
    CHECKPOINT_DIR,
    DATABASE_URL,
    DATASET_FILE,
    DEFAULT_SEED,
    ENCODED_FILE,
    ENTRIES_FILE,
    FILTER_LOG_FILE,
    FORMS_FILE,
    LABELS_FILE,
    LEXEMES_FILE,
    PREDICTIONS_FILE,
    REPORT_FILE,
    RUNS_CSV,
    RUNS_DIR,
    SPLITS_FILE,
    SWA_CHECKPOINT,
    SWEEP_CSV,
    SWEEP_DAT,
)
from app.database import make_session_factory
from app.errors import ConfigError, MissingArtifactError, UsageError
from app.models import RunRecord, export_runs
from app.schemas import FilterConfig, LossWeights, SchedulerSpec, SplitSpec, TrainConfig, config_hash
from app.services import augment, bpe, corpus, evaluation, labels, synth
from app.services import model as model_service
from app.services.augment import SEPARATOR
from app.services.pipeline import (
    Workdir,
    execute_run,
    load_run_inputs,
    make_splits,
    model_config_for,
    write_splits,
)
from app.services.train import GRID_ROWS

logger = logging.getLogger(__name__)


def parse_k_values(text: str) -> list[int]:
    """``1..15``, ``1-15`` or ``1,3,5`` -> list of ints."""
    text = text.strip()
    try:
        for sep in ("..", "-"):
            if sep in text:
                lo, hi = (int(v) for v in text.split(sep, 1))
                return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"cannot parse k values {text!r}; use 1..15 or 1,2,3") from e


def _load_json_model(model_cls, path: Optional[str]):
    if path is None:
        return model_cls()
    try:
        return model_cls.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValidationError) as e:
        raise ConfigError(f"invalid {model_cls.__name__} file {path}: {e}") from e


def _spec(args) -> augment.MiniparadigmSpec:
    return augment.load_miniparadigms(args.spec)


# --------- commands --------- #

def cmd_synth(args) -> int:
    wd = Workdir(args.workdir)
    generated = synth.generate(args.classes, args.per_class, args.seed, args.decisive_form, _spec(args))
    synth.write_corpus(generated, wd.path(LEXEMES_FILE), wd.path(FORMS_FILE))
    digest = f"synth:classes={args.classes}:per_class={args.per_class}:seed={args.seed}:decisive={args.decisive_form}"
    wd.record(LEXEMES_FILE, "synth", digest)
    wd.record(FORMS_FILE, "synth", digest)
    return 0


def cmd_prepare(args) -> int:
    wd = Workdir(args.workdir)
    filters = _load_json_model(FilterConfig, args.filters)
    if args.min_support is not None:
        filters.min_support = args.min_support
    if args.allowed_pos:
        filters.allowed_pos = args.allowed_pos.split(",")
    source = Path(args.lexemes) if args.lexemes else wd.path(LEXEMES_FILE)
    lineage = wd.lineage_of(source, "lexemes")

    dataset = corpus.run_pipeline(source, filters)
    corpus.write_dataset(dataset.records, wd.path(DATASET_FILE))
    corpus.write_filter_log(dataset.filter_log, wd.path(FILTER_LOG_FILE))
    space = labels.fit(dataset.records)
    labels.save_label_space(space, wd.path(LABELS_FILE))
    for pos, label, count in labels.supported_table(space):
        logger.info(f"  {pos} {label}: {count}")

    digest = config_hash(filters)
    wd.record(DATASET_FILE, "prepare", digest, lineage)
    wd.record(FILTER_LOG_FILE, "prepare", digest, lineage)
    wd.record(LABELS_FILE, "prepare", digest, {**lineage, **wd.require(DATASET_FILE)})
    return 0


def cmd_augment(args) -> int:
    wd = Workdir(args.workdir)
    lineage = wd.require(DATASET_FILE)
    forms_path = Path(args.forms) if args.forms else wd.path(FORMS_FILE)
    lineage.update(wd.lineage_of(forms_path, "forms"))
    spec = _spec(args)

    records = corpus.read_dataset(wd.path(DATASET_FILE))
    generator = augment.file_backed_generator(forms_path)
    entries = augment.augment_records(generator, records, spec)
    augment.write_entries(entries, wd.path(ENTRIES_FILE))
    lines = augment.bpe_corpus(entries, spec)
    wd.path(AUGMENTED_FILE).write_text("".join(line + "\n" for line in lines), encoding="utf-8")

    digest = "augment:" + json.dumps(spec.to_dict(), sort_keys=True)
    wd.record(ENTRIES_FILE, "augment", digest, lineage)
    wd.record(AUGMENTED_FILE, "augment", digest, lineage)
    return 0


def cmd_train_bpe(args) -> int:
    wd = Workdir(args.workdir)
    lineage = wd.require(AUGMENTED_FILE)
    lines = wd.path(AUGMENTED_FILE).read_text(encoding="utf-8").splitlines()
    model = bpe.train_bpe(lines, vocab_size=args.vocab_size, min_frequency=args.min_frequency)
    bpe.save_model(model, wd.path(BPE_FILE))
    wd.record(BPE_FILE, "train-bpe", f"bpe:vocab={args.vocab_size}:min_frequency={args.min_frequency}", lineage)
    return 0


def cmd_encode(args) -> int:
    wd = Workdir(args.workdir)
    lineage = wd.require(ENTRIES_FILE, BPE_FILE)
    tokenizer = bpe.load_model(wd.path(BPE_FILE))
    entries = augment.read_entries(wd.path(ENTRIES_FILE))
    max_forms = args.max_forms or 1 + _spec(args).max_forms
    texts = [augment.assemble_input(e, max_forms) for e in entries]
    token_ids, pad_mask = model_service.encode_batch(tokenizer, texts, args.max_len)
    with open(wd.path(ENCODED_FILE), "w", encoding="utf-8") as f:
        for entry, ids, pad in zip(entries, token_ids, pad_mask):
            f.write(json.dumps({"lemma": entry.record.lemma, "ids": ids[~pad].tolist()}, ensure_ascii=False) + "\n")
    wd.record(ENCODED_FILE, "encode", f"encode:max_forms={max_forms}:max_len={args.max_len}", lineage)
    return 0


def cmd_split(args) -> int:
    wd = Workdir(args.workdir)
    lineage = wd.require(DATASET_FILE)
    spec = SplitSpec(test_fraction=args.test_fraction, val_fraction=args.val_fraction, seed=args.seed)
    records = corpus.read_dataset(wd.path(DATASET_FILE))
    splits = make_splits(records, spec)
    write_splits(splits, spec, wd.path(SPLITS_FILE))
    logger.info(f"Split {len(records)} records: train {len(splits['train'])}, "
                f"val {len(splits['val'])}, test {len(splits['test'])}")
    wd.record(SPLITS_FILE, "split", config_hash(spec), lineage)
    return 0


def _train_config(args, scheduler: Optional[SchedulerSpec] = None) -> TrainConfig:
    if getattr(args, "config", None):
        config = _load_json_model(TrainConfig, args.config)
        if scheduler is not None:
            config = config.model_copy(update={"scheduler": scheduler})
        config.ensure_valid()
        return config
    try:
        config = TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            eval_batch_size=args.eval_batch_size,
            lr=args.lr,
            scheduler=scheduler or SchedulerSpec(kind=args.scheduler, t_max=args.t_max, gamma=args.gamma,
                                                 patience=args.patience),
            weight_decay=args.weight_decay,
            loss_weights=LossWeights(pos=args.w_pos, contlex=args.w_contlex),
            swa_start_epoch=args.swa_start,
            swa_lr=args.swa_lr,
            swa_anneal_epochs=args.swa_anneal,
            seed=args.seed,
        )
    except ValidationError as e:
        raise ConfigError(str(e)) from e
    config.ensure_valid()
    return config


def _model_overrides(args, dropout=None, n_layers=None, n_heads=None) -> dict:
    return {
        "d_model": args.d_model,
        "ffn_dim": args.ffn_dim,
        "n_layers": n_layers or args.layers,
        "n_heads": n_heads or args.heads,
        "dropout": args.dropout if dropout is None else dropout,
        "max_len": args.max_len,
        "seed": args.seed,
    }


def _record_run(wd: Workdir, summary: dict, args, experiment: Optional[int], train_config: TrainConfig,
                model_overrides: dict) -> None:
    for name in summary["artifacts"]:
        wd.record(name, "grid" if experiment else "train", summary["config_hash"], summary["lineage"])
    session_factory = make_session_factory(args.database_url)
    db = session_factory()
    try:
        db.add(RunRecord(
            experiment=experiment,
            workdir=str(Path(args.workdir).resolve()),
            scheduler=train_config.scheduler.describe(),
            dropout=model_overrides["dropout"],
            n_layers=model_overrides["n_layers"],
            n_heads=model_overrides["n_heads"],
            epochs=train_config.epochs,
            pos_f1=summary["pos_f1"],
            contlex_f1=summary["contlex_f1"],
            best_epoch=summary["best_epoch"],
            config_hash=summary["config_hash"],
            checkpoint=summary["artifacts"][2],
            report=summary["artifacts"][3],
        ))
        db.commit()
    except Exception as e:
        db.rollback()
        logger.error(f"Could not record run in registry: {e}", exc_info=True)
    finally:
        db.close()


def cmd_train(args) -> int:
    wd = Workdir(args.workdir)
    inputs = load_run_inputs(wd)
    train_config = _train_config(args)
    overrides = _model_overrides(args)
    model_config = model_config_for(inputs.bpe, inputs.space, **overrides)
    max_forms = args.max_forms or 1 + _spec(args).max_forms
    summary = execute_run(str(wd.root), args.name, model_config.model_dump(mode="json"),
                          train_config.model_dump(mode="json"), max_forms, args.masking)
    _record_run(wd, summary, args, None, train_config, overrides)
    logger.info(f"Run {args.name}: test POS F1 {summary['pos_f1']:.4f}, Contlex F1 {summary['contlex_f1']:.4f}")
    return 0


def cmd_grid(args) -> int:
    wd = Workdir(args.workdir)
    inputs = load_run_inputs(wd)
    wanted = set(parse_k_values(args.rows)) if args.rows else None
    max_forms = args.max_forms or 1 + _spec(args).max_forms
    jobs = []
    for experiment, scheduler, dropout, n_layers, n_heads in GRID_ROWS:
        if wanted is not None and experiment not in wanted:
            continue
        train_config = _train_config(args, scheduler=scheduler)
        overrides = _model_overrides(args, dropout=dropout, n_layers=n_layers, n_heads=n_heads)
        model_config = model_config_for(inputs.bpe, inputs.space, **overrides)
        jobs.append((experiment, train_config, overrides, model_config))
    if not jobs:
        raise UsageError(f"--rows {args.rows} selects no grid row")

    def _submit(runner):
        return [runner(execute_run, str(wd.root), f"exp{exp}", mc.model_dump(mode="json"),
                       tc.model_dump(mode="json"), max_forms, args.masking) for exp, tc, _, mc in jobs]

    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            summaries = [f.result() for f in _submit(pool.submit)]
    else:
        summaries = _submit(lambda fn, *a: fn(*a))
    for (experiment, train_config, overrides, _), summary in zip(jobs, summaries):
        _record_run(wd, summary, args, experiment, train_config, overrides)
        logger.info(f"Exp {experiment} ({train_config.scheduler.describe()}, dropout {overrides['dropout']}, "
                    f"{overrides['n_layers']} layers, {overrides['n_heads']} heads): "
                    f"POS F1 {summary['pos_f1']:.2f}, Contlex F1 {summary['contlex_f1']:.2f}")
    return 0


def _checkpoint_path(wd: Workdir, args) -> Path:
    if args.checkpoint:
        return Path(args.checkpoint)
    return wd.path(f"{RUNS_DIR}/{args.name}/{CHECKPOINT_DIR}/{SWA_CHECKPOINT}")


def _load_for_eval(wd: Workdir, args):
    path = _checkpoint_path(wd, args)
    if not path.exists():
        raise MissingArtifactError(path, "missing checkpoint (run `train` first)")
    # a checkpoint trained in this workdir must descend from the current inputs
    recorded = wd.recorded_name(path)
    inputs = load_run_inputs(wd, *([recorded] if recorded else []))
    model, _, header = model_service.load_checkpoint(path)
    return inputs, model, header


def cmd_evaluate(args) -> int:
    wd = Workdir(args.workdir)
    inputs, model, header = _load_for_eval(wd, args)
    entries = inputs.subset(args.split)
    max_forms = args.max_forms or 1 + _spec(args).max_forms
    dataset = model_service.encode_entries(entries, inputs.bpe, inputs.space, model.config.max_len, max_forms)
    reports = evaluation.evaluate_model(model, dataset, inputs.space, args.masking, bpe=inputs.bpe)
    output = Path(args.output) if args.output else wd.path(f"{RUNS_DIR}/{args.name}/{REPORT_FILE}")
    output.parent.mkdir(parents=True, exist_ok=True)
    evaluation.write_report(list(reports), output, config_hash=config_hash(model.config),
                            extra={"checkpoint": str(_checkpoint_path(wd, args)), "epoch": header["epoch"],
                                   "split": args.split})
    return 0


def cmd_sweep(args) -> int:
    wd = Workdir(args.workdir)
    inputs, model, _ = _load_for_eval(wd, args)
    spec = _spec(args)
    rows = evaluation.sweep_forms(model, inputs.subset(args.split), inputs.bpe, inputs.space,
                                  parse_k_values(args.k), args.masking, paradigm_size=spec.max_forms)
    out_dir = wd.path(f"{RUNS_DIR}/{args.name}")
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_sweep(rows, out_dir / SWEEP_CSV, out_dir / SWEEP_DAT)
    return 0


def cmd_predict(args) -> int:
    wd = Workdir(args.workdir)
    inputs, model, _ = _load_for_eval(wd, args)
    # One input per line: lemma, then optional word forms, tab separated
    texts = []
    for line in Path(args.input).read_text(encoding="utf-8").splitlines():
        parts = [p.strip() for p in line.split("\t") if p.strip()]
        if parts:
            texts.append(SEPARATOR.join(parts))
    predictions = evaluation.predict(model, inputs.bpe, inputs.space, texts, args.masking, args.top_k)
    output = Path(args.output) if args.output else wd.path(PREDICTIONS_FILE)
    with open(output, "w", encoding="utf-8") as f:
        for text, ranked in zip(texts, predictions):
            f.write(json.dumps({
                "lemma": text.split(SEPARATOR)[0],
                "predictions": [{"pos": p.pos, "contlex": p.contlex, "probability": round(p.probability, 6),
                                 "pos_probability": round(p.pos_probability, 6)} for p in ranked],
            }, ensure_ascii=False) + "\n")
    logger.info(f"Wrote {len(texts)} predictions to {output}")
    return 0


def cmd_runs(args) -> int:
    session_factory = make_session_factory(args.database_url)
    db = session_factory()
    try:
        query = db.query(RunRecord).order_by(RunRecord.created_at, RunRecord.experiment)
        if args.this_workdir:
            query = query.filter(RunRecord.workdir == str(Path(args.workdir).resolve()))
        output = Path(args.output)
        count = export_runs(query.all(), output)
    finally:
        db.close()
    logger.info(f"Exported {count} runs to {output}")
    return 0


# --------- parser --------- #

def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', type=str, default=None, help='TrainConfig JSON file (overrides regimen flags)')
    parser.add_argument('--epochs', type=int, default=100, help='Training epochs (default: 100)')
    parser.add_argument('--batch-size', type=int, default=512, help='Batch size (default: 512)')
    parser.add_argument('--eval-batch-size', type=int, default=1024, help='Evaluation batch size (default: 1024)')
    parser.add_argument('--lr', type=float, default=0.003, help='Base learning rate (default: 0.003)')
    parser.add_argument('--scheduler', choices=["cosine", "exponential", "plateau"], default="cosine",
                        help='Pre-SWA scheduler (default: cosine)')
    parser.add_argument('--t-max', type=int, default=25, help='Cosine period in epochs (default: 25)')
    parser.add_argument('--gamma', type=float, default=0.95, help='Exponential decay (default: 0.95)')
    parser.add_argument('--patience', type=int, default=10, help='Plateau patience (default: 10)')
    parser.add_argument('--weight-decay', type=float, default=0.01, help='AdamW weight decay (default: 0.01)')
    parser.add_argument('--w-pos', type=float, default=1.0, help='POS loss weight (default: 1.0)')
    parser.add_argument('--w-contlex', type=float, default=1.0, help='Contlex loss weight (default: 1.0)')
    parser.add_argument('--swa-start', type=int, default=80, help='First SWA epoch (default: 80)')
    parser.add_argument('--swa-lr', type=float, default=0.0005, help='SWA learning rate (default: 0.0005)')
    parser.add_argument('--swa-anneal', type=int, default=5, help='SWA anneal epochs (default: 5)')
    parser.add_argument('--d-model', type=int, default=128, help='Embedding size (default: 128)')
    parser.add_argument('--ffn-dim', type=int, default=512, help='Feed-forward hidden size (default: 512)')
    parser.add_argument('--layers', type=int, default=2, help='Encoder layers (default: 2)')
    parser.add_argument('--heads', type=int, default=4, help='Attention heads (default: 4)')
    parser.add_argument('--dropout', type=float, default=0.1, help='Dropout rate (default: 0.1)')
    parser.add_argument('--max-len', type=int, default=192, help='Maximum tokens per input (default: 192)')
    parser.add_argument('--max-forms', type=int, default=None, help='Input slots incl. lemma (default: 1 + paradigm)')
    parser.add_argument('--masking', choices=evaluation.MASKING_MODES, default="none",
                        help='Contlex masking for the test report (default: none)')
    parser.add_argument('--seed', type=int, default=DEFAULT_SEED, help=f'Random seed (default: {DEFAULT_SEED})')
    parser.add_argument('--database-url', type=str, default=DATABASE_URL, help='Run registry database URL')


def _add_eval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--name', type=str, default="main", help='Run name under runs/ (default: main)')
    parser.add_argument('--checkpoint', type=str, default=None, help='Checkpoint (default: the run\'s SWA model)')
    parser.add_argument('--split', choices=["train", "val", "test"], default="test", help='Split (default: test)')
    parser.add_argument('--max-forms', type=int, default=None, help='Input slots incl. lemma (default: 1 + paradigm)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contlex",
        description='Multi-task POS and Contlex classification from lemmas and miniparadigm word forms',
    )
    parser.add_argument('--workdir', type=str, default=".", help='Pipeline working directory (default: .)')
    parser.add_argument('--spec', type=str, default="default",
                        help='Miniparadigm spec: "default" or a JSON file {pos: [tags]}')
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate a synthetic lexicon and its forms")
    p.add_argument('--classes', type=int, default=8, help='Number of Contlex classes (default: 8)')
    p.add_argument('--per-class', type=int, default=80, help='Lexemes per class (default: 80)')
    p.add_argument('--decisive-form', type=int, default=3, help='First form that separates paired classes (default: 3)')
    p.add_argument('--seed', type=int, default=DEFAULT_SEED, help=f'Random seed (default: {DEFAULT_SEED})')
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="Clean lexemes and fit the label space")
    p.add_argument('--lexemes', type=str, default=None, help=f'Lexeme TSV (default: workdir/{LEXEMES_FILE})')
    p.add_argument('--filters', type=str, default=None, help='FilterConfig JSON file')
    p.add_argument('--min-support', type=int, default=None, help='Minimum lexemes per class (default: 50)')
    p.add_argument('--allowed-pos', type=str, default=None, help='Comma-separated POS to keep (default: N,V)')
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("augment", help="Attach miniparadigm forms to every lexeme")
    p.add_argument('--forms', type=str, default=None, help=f'Forms TSV (default: workdir/{FORMS_FILE})')
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train-bpe", help="Train the BPE tokenizer")
    p.add_argument('--vocab-size', type=int, default=2000, help='Target vocabulary size (default: 2000)')
    p.add_argument('--min-frequency', type=int, default=2, help='Minimum pair count to merge (default: 2)')
    p.set_defaults(func=cmd_train_bpe)

    p = sub.add_parser("encode", help="Tokenize the augmented entries")
    p.add_argument('--max-forms', type=int, default=None, help='Input slots incl. lemma (default: 1 + paradigm)')
    p.add_argument('--max-len', type=int, default=192, help='Maximum tokens per input (default: 192)')
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("split", help="Stratified train/validation/test split")
    p.add_argument('--test-fraction', type=float, default=0.1, help='Test share per class (default: 0.1)')
    p.add_argument('--val-fraction', type=float, default=0.1, help='Validation share of train (default: 0.1)')
    p.add_argument('--seed', type=int, default=DEFAULT_SEED, help=f'Random seed (default: {DEFAULT_SEED})')
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="Train one configuration")
    p.add_argument('--name', type=str, default="main", help='Run name under runs/ (default: main)')
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="Train the six reference grid rows")
    p.add_argument('--rows', type=str, default=None, help='Subset of rows, e.g. 1..3 or 1,5 (default: all)')
    p.add_argument('--parallel', type=int, default=1, help='Rows trained concurrently (default: 1)')
    _add_training_flags(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("evaluate", help="Metrics report for a checkpoint")
    _add_eval_flags(p)
    p.add_argument('--masking', choices=evaluation.MASKING_MODES, default="none", help='Contlex masking (default: none)')
    p.add_argument('--output', type=str, default=None, help='Report path (default: runs/<name>/report.json)')
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="Accuracy vs number of word forms")
    _add_eval_flags(p)
    p.add_argument('--k', type=str, default="1..11", help='k values, e.g. 1..15 or 1,5,10 (default: 1..11)')
    p.add_argument('--masking', choices=evaluation.MASKING_MODES, default="none", help='Contlex masking (default: none)')
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("predict", help="Rank Contlex classes for new words")
    _add_eval_flags(p)
    p.add_argument('--input', type=str, required=True, help='One word per line: lemma[<TAB>form...]')
    p.add_argument('--masking', choices=["none", "predicted-pos"], default="predicted-pos",
                   help='Restrict Contlex to the predicted POS (default: predicted-pos)')
    p.add_argument('--top-k', type=int, default=3, help='Candidates per word (default: 3)')
    p.add_argument('--output', type=str, default=None, help=f'Output JSONL (default: workdir/{PREDICTIONS_FILE})')
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("runs", help="Export the run registry as a results table")
    p.add_argument('--output', type=str, default=RUNS_CSV, help=f'CSV path (default: {RUNS_CSV})')
    p.add_argument('--this-workdir', action="store_true", help='Only runs trained in --workdir')
    p.add_argument('--database-url', type=str, default=DATABASE_URL, help='Run registry database URL')
    p.set_defaults(func=cmd_runs)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logger.info(f"Running `{args.command}` in {Path(args.workdir).resolve()}")
    return args.func(args)
