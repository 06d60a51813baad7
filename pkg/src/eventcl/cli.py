"""Command-line entry points: train, eval, ablate, sweep, embed,
generate-data.

Every run directory gets an atomically written manifest recording the
resolved config, input/output hashes, and wall clock. Exit codes: 0 success,
2 usage or input problems, 3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import evaluation
from .data import (
    SyntheticSpec,
    generate_synthetic,
    load_events,
    load_hard_pairs,
    load_mcnc,
    load_transitive,
    save_events,
    save_hard_pairs,
    save_mcnc,
    save_transitive,
)
from .errors import EventclError, InputError, NumericError
from .trainer import TrainConfig, load_run, load_train_config, train

log = logging.getLogger("eventcl.cli")

PI_SWEEP_GRID = (0.0, 0.1, 0.2, 0.3, 0.5, 1.0)
ABLATION_ROWS = ("full", "no-prompt", "pso-word-order", "no-mlm")


def _out_root(explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get("EVENTCL_OUT", "runs"))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json_atomic(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def _write_manifest(run_dir: Path, command: str, cfg: TrainConfig | None, inputs: dict[str, Path], outputs: dict[str, Path], summary: dict, wall_clock: float) -> Path:
    manifest = {
        "command": command,
        "seed": cfg.seed if cfg else None,
        "config": dataclasses.asdict(cfg) if cfg else None,
        "input_hashes": {name: _sha256(Path(p)) for name, p in inputs.items()},
        "output_hashes": {name: _sha256(Path(p)) for name, p in outputs.items()},
        "outputs": {name: str(p) for name, p in outputs.items()},
        "metrics_summary": summary,
        "wall_clock_seconds": wall_clock,
    }
    path = run_dir / "manifest.json"
    _write_json_atomic(path, manifest)
    return path


def _train_overrides(args) -> dict:
    overrides: dict = {}
    for flag, key in (
        ("seed", "seed"),
        ("pi", "pi"),
        ("tau", "tau"),
        ("template", "template_id"),
        ("word_order", "word_order"),
        ("steps", "steps"),
        ("epochs", "epochs"),
        ("batch_size", "batch_size"),
        ("lr", "learning_rate"),
        ("checkpoint_every", "checkpoint_every"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "no_prompt", False):
        overrides["enable_prompt"] = False
    if getattr(args, "no_mlm", False):
        overrides["enable_mlm"] = False
    if getattr(args, "no_cp", False):
        overrides["enable_cp"] = False
    return overrides


def _resolve_config(args) -> TrainConfig:
    overrides = _train_overrides(args)
    if getattr(args, "config", None):
        return load_train_config(args.config, overrides)
    return TrainConfig(**overrides)


def _run_training(corpus_path: Path, cfg: TrainConfig, run_dir: Path) -> tuple:
    corpus = load_events(corpus_path)
    started = time.monotonic()
    result = train(corpus, cfg, run_dir)
    wall = time.monotonic() - started
    _write_manifest(
        run_dir,
        "train",
        cfg,
        inputs={"corpus": corpus_path},
        outputs={
            "checkpoint": result.checkpoint_path,
            "vocab": result.vocab_path,
            "metrics": result.metrics_path,
            "config": result.config_path,
        },
        summary={"steps": result.steps_run, "first_loss": result.first_loss, "final_loss": result.final_loss},
        wall_clock=wall,
    )
    return result, wall


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    run_dir = _out_root(args.out) if args.out else _out_root(None) / "train"
    result, wall = _run_training(Path(args.corpus), cfg, run_dir)
    log.info("trained %d steps in %.1fs; checkpoint at %s", result.steps_run, wall, result.checkpoint_path)
    print(json.dumps({"run_dir": str(run_dir), "steps": result.steps_run, "final_loss": result.final_loss}))
    return 0


def _load_eval_sets(args):
    hard = load_hard_pairs(args.hard) if getattr(args, "hard", None) else None
    extended = load_hard_pairs(args.hard_extended) if getattr(args, "hard_extended", None) else None
    transitive = load_transitive(args.transitive) if getattr(args, "transitive", None) else None
    mcnc = load_mcnc(args.mcnc) if getattr(args, "mcnc", None) else None
    return hard, extended, transitive, mcnc


def _evaluate_run(run_dir: Path, hard, extended, transitive, mcnc) -> dict:
    enc_cfg, params, _bank, vocab, _cfg = load_run(run_dir)
    embedder = evaluation.EventEncoder(enc_cfg, params, vocab)
    return evaluation.metric_report(
        embedder,
        hard_pairs=hard,
        extended_pairs=extended,
        transitive_pairs=transitive,
        mcnc_instances=mcnc,
    ), embedder


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    hard, extended, transitive, mcnc = _load_eval_sets(args)
    report, embedder = _evaluate_run(run_dir, hard, extended, transitive, mcnc)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    if args.dump_cases:
        if not hard:
            raise InputError("--dump-cases needs --hard pairs to draw cases from")
        triples = []
        for pair in hard:
            triples.append((pair.similar[0], pair.similar[1], 1))
            triples.append((pair.dissimilar[0], pair.dissimilar[1], 0))
        rows = evaluation.case_study_dump(triples, embedder)
        with open(args.dump_cases, "w", encoding="utf-8") as fh:
            fh.write("event_a\tevent_b\tcosine\tlabel\n")
            for row in rows:
                a = f"{row.event_a.subject} {row.event_a.predicate} {row.event_a.object}"
                b = f"{row.event_b.subject} {row.event_b.predicate} {row.event_b.object}"
                fh.write(f"{a}\t{b}\t{row.cosine:.4f}\t{row.label}\n")
    if args.table_out:
        with open(args.table_out, "w", encoding="utf-8") as fh:
            fh.write("\t".join(evaluation.METRIC_KEYS) + "\n")
            fh.write("\t".join("" if report[k] is None else f"{report[k]:.6f}" for k in evaluation.METRIC_KEYS) + "\n")
    return 0


def _ablation_config(base: TrainConfig, row: str) -> TrainConfig:
    cfg = dataclasses.replace(base)
    if row == "no-prompt":
        cfg = dataclasses.replace(cfg, enable_prompt=False, pi=0.0)
    elif row == "pso-word-order":
        cfg = dataclasses.replace(cfg, word_order="PSO")
    elif row == "no-mlm":
        cfg = dataclasses.replace(cfg, enable_mlm=False)
    elif row != "full":
        raise InputError(f"unknown ablation row {row!r}")
    return cfg


def cmd_ablate(args) -> int:
    base = _resolve_config(args)
    out_dir = _out_root(args.out) if args.out else _out_root(None) / "ablate"
    out_dir.mkdir(parents=True, exist_ok=True)
    hard, _, transitive, mcnc = _load_eval_sets(args)
    if hard is None or transitive is None or mcnc is None:
        raise InputError("ablate needs --hard, --transitive, and --mcnc datasets")
    started = time.monotonic()
    rows = []
    for row in ABLATION_ROWS:
        cfg = _ablation_config(base, row)
        run_dir = out_dir / row
        _run_training(Path(args.corpus), cfg, run_dir)
        report, _ = _evaluate_run(run_dir, hard, None, transitive, mcnc)
        rows.append(
            {
                "name": row,
                "hard_acc": report["original_acc"],
                "transitive_rho": report["transitive_rho"],
                "mcnc_acc": report["mcnc_acc"],
            }
        )
        log.info("ablation row %s: %s", row, rows[-1])
    table = {"seed": base.seed, "rows": rows}
    _write_json_atomic(out_dir / "ablation.json", table)
    _write_manifest(
        out_dir,
        "ablate",
        base,
        inputs={"corpus": Path(args.corpus), "hard": Path(args.hard), "transitive": Path(args.transitive), "mcnc": Path(args.mcnc)},
        outputs={"table": out_dir / "ablation.json"},
        summary={"rows": len(rows)},
        wall_clock=time.monotonic() - started,
    )
    print(json.dumps(table, indent=2))
    return 0


def cmd_sweep(args) -> int:
    base = _resolve_config(args)
    out_dir = _out_root(args.out) if args.out else _out_root(None) / "sweep"
    out_dir.mkdir(parents=True, exist_ok=True)
    hard, _, transitive, mcnc = _load_eval_sets(args)
    if hard is None:
        raise InputError("sweep needs --hard pairs for its accuracy column")
    grid = [float(x) for x in args.pi_grid.split(",")] if args.pi_grid else list(PI_SWEEP_GRID)
    started = time.monotonic()
    rows = []
    for pi in grid:
        cfg = dataclasses.replace(base, pi=pi, enable_prompt=True)
        run_dir = out_dir / f"pi{pi:g}"
        _run_training(Path(args.corpus), cfg, run_dir)
        report, _ = _evaluate_run(run_dir, hard, None, transitive, mcnc)
        rows.append(
            {
                "pi": pi,
                "hard_acc": report["original_acc"],
                "transitive_rho": report["transitive_rho"],
                "mcnc_acc": report["mcnc_acc"],
                "align": report["align"],
                "uniform": report["uniform"],
            }
        )
        log.info("sweep pi=%g: %s", pi, rows[-1])
    table = {"seed": base.seed, "rows": rows}
    _write_json_atomic(out_dir / "sweep.json", table)
    inputs = {"corpus": Path(args.corpus), "hard": Path(args.hard)}
    if args.transitive:
        inputs["transitive"] = Path(args.transitive)
    if args.mcnc:
        inputs["mcnc"] = Path(args.mcnc)
    _write_manifest(
        out_dir,
        "sweep",
        base,
        inputs=inputs,
        outputs={"table": out_dir / "sweep.json"},
        summary={"grid": grid},
        wall_clock=time.monotonic() - started,
    )
    print(json.dumps(table, indent=2))
    return 0


def cmd_embed(args) -> int:
    enc_cfg, params, _bank, vocab, _cfg = load_run(Path(args.run))
    embedder = evaluation.EventEncoder(enc_cfg, params, vocab)
    events = load_events(args.events)
    vectors = embedder.embed_many(events) if events else []
    with open(args.out, "w", encoding="utf-8") as fh:
        for e, vec in zip(events, vectors):
            fh.write(
                json.dumps(
                    {"subject": e.subject, "predicate": e.predicate, "object": e.object, "embedding": [round(float(x), 8) for x in vec]}
                )
                + "\n"
            )
    print(json.dumps({"events": len(events), "out": str(args.out)}))
    return 0


def cmd_generate_data(args) -> int:
    out_dir = _out_root(args.out) if args.out else _out_root(None) / "data"
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSpec(
        num_synonym_clusters=args.clusters,
        events_per_cluster=args.events_per_cluster,
        seed=args.seed if args.seed is not None else 0,
        num_hard_pairs=args.hard_pairs,
        num_transitive=args.transitive_pairs,
        num_mcnc=args.mcnc_instances,
    )
    data = generate_synthetic(spec)
    save_events(out_dir / "corpus.jsonl", data.corpus)
    save_hard_pairs(out_dir / "hard_pairs.jsonl", data.hard_pairs)
    save_transitive(out_dir / "transitive.jsonl", data.transitive_pairs)
    save_mcnc(out_dir / "mcnc.jsonl", data.mcnc_instances)
    summary = {
        "corpus": len(data.corpus),
        "hard_pairs": len(data.hard_pairs),
        "transitive": len(data.transitive_pairs),
        "mcnc": len(data.mcnc_instances),
        "out_dir": str(out_dir),
    }
    print(json.dumps(summary))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventcl", description="Prompt-template contrastive event representation learning")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_train_flags(p, corpus_required=True):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--corpus", required=corpus_required, help="training events (JSON lines)")
        p.add_argument("--out", help="output directory (default: $EVENTCL_OUT)")
        p.add_argument("--seed", type=int)
        p.add_argument("--pi", type=float, help="prompt insertion probability")
        p.add_argument("--tau", type=float, help="similarity temperature")
        p.add_argument("--template", choices=["none", "bare_labels", "colon_labels", "is_labels"])
        p.add_argument("--word-order", dest="word_order", choices=["SPO", "PSO"])
        p.add_argument("--no-prompt", action="store_true", help="disable template insertion (pi = 0)")
        p.add_argument("--no-mlm", action="store_true", help="disable the masked-component loss")
        p.add_argument("--no-cp", action="store_true", help="disable the prototype clustering loss")
        p.add_argument("--steps", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)

    def add_eval_sets(p, hard_required=False):
        p.add_argument("--hard", required=hard_required, help="hard similarity pairs (JSON lines)")
        p.add_argument("--hard-extended", dest="hard_extended", help="extended hard similarity pairs")
        p.add_argument("--transitive", help="graded similarity pairs")
        p.add_argument("--mcnc", help="narrative cloze instances")

    p = sub.add_parser("train", help="train a model")
    add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a finished run")
    p.add_argument("--run", required=True, help="run directory from train")
    add_eval_sets(p)
    p.add_argument("--report", help="write the JSON metric report here")
    p.add_argument("--dump-cases", dest="dump_cases", help="write a per-pair cosine table (TSV)")
    p.add_argument("--table-out", dest="table_out", help="write a one-row TSV metric table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and score the four ablation rows")
    add_train_flags(p)
    add_eval_sets(p, hard_required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="train and score across prompt probabilities")
    add_train_flags(p)
    add_eval_sets(p, hard_required=True)
    p.add_argument("--pi-grid", dest="pi_grid", help="comma-separated probabilities (default 0,0.1,0.2,0.3,0.5,1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("embed", help="embed events with a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("generate-data", help="write the synthetic benchmark files")
    p.add_argument("--out", help="output directory (default: $EVENTCL_OUT/data)")
    p.add_argument("--clusters", type=int, default=8)
    p.add_argument("--events-per-cluster", dest="events_per_cluster", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hard-pairs", dest="hard_pairs", type=int, default=400)
    p.add_argument("--transitive-pairs", dest="transitive_pairs", type=int, default=200)
    p.add_argument("--mcnc-instances", dest="mcnc_instances", type=int, default=1000)
    p.set_defaults(func=cmd_generate_data)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except (EventclError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
