"""Command line interface.

Subcommands: train, eval, predict, stats, decode-check, heatmap, timing.
Report-writing commands put tab-delimited tables and rendered PNG figures
side by side in the output directory.

Exit codes: 0 success, 1 usage or configuration problems, 2 data problems,
3 failed self-checks (round-trip or expected-count mismatches).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus, decoder, figures, trainer
from .config import Config
from .encoder import Vocab, tokenize
from .errors import BiconError, ConfigError, DataError
from .model import BiconModel
from .tagger import RelSchema

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3

SYNTHETIC = "synthetic"


def _write_tsv(path: Path, rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(str(c) for c in row) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> Config:
    cfg = Config.load(args.config) if args.config else Config()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if overrides:
        cfg = Config.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def _load_split(data: str, fmt: str, split: str, seed: int,
                schema: RelSchema | None = None,
                max_len: int | None = None) -> tuple[list[corpus.Example], RelSchema]:
    """One split of a dataset; `data` is a path or the `synthetic` sentinel."""
    if data == SYNTHETIC:
        train, dev, syn_schema = corpus.generate_synthetic(seed=seed)
        if schema is not None and schema.names != syn_schema.names:
            raise DataError(f"checkpoint relations {schema.names} do not match "
                            f"the synthetic corpus relations {syn_schema.names}")
        return (train if split == "train" else dev), syn_schema
    result = corpus.load_dataset(data, fmt=fmt, schema=schema, max_len=max_len)
    return result.examples, result.schema


def _report_rows(report) -> list[tuple]:
    rows = [("group", "precision", "recall", "f1", "tp", "fp", "fn")]
    d = report.to_dict()
    groups = [("overall", d["overall"]), ("so", d["subtasks"]["so"]), ("r", d["subtasks"]["r"])]
    groups += [(f"pattern:{k}", v) for k, v in d["patterns"].items()]
    groups += [(f"bucket:{k}", v) for k, v in d["buckets"].items()]
    for name, c in groups:
        rows.append((name, f"{c['precision']:.6f}", f"{c['recall']:.6f}", f"{c['f1']:.6f}",
                     c["tp"], c["fp"], c["fn"]))
    return rows


# ---------------------------------------------------------------------------
# Subcommand handlers. Each returns an exit code.

def cmd_train(args) -> int:
    cfg = _load_config(args)
    train_data, schema = _load_split(args.data, args.format, "train", cfg.seed,
                                     max_len=cfg.max_len)
    if args.data == SYNTHETIC:
        dev_data, _ = _load_split(args.data, args.format, "dev", cfg.seed)
    elif args.dev:
        dev_data, _ = _load_split(args.dev, args.format, "dev", cfg.seed,
                                  schema=schema, max_len=cfg.max_len)
    else:
        dev_data = []
    out = _out_dir(args)
    vocab = Vocab.build(t for ex in train_data for t in ex.seq.tokens)
    rng = np.random.default_rng(cfg.seed)
    model = BiconModel(cfg, vocab, schema, rng)
    print(f"training on {len(train_data)} sentences ({len(dev_data)} dev), "
          f"{model.n_params} parameters, relations {list(schema.names)}")
    result = trainer.train(model, train_data, dev_data, out, rng=rng, quiet=args.quiet)
    cfg.save(out / "config.json")
    vocab.save(out / "vocab.txt")
    _write_tsv(out / "train_report.tsv", [
        ("epochs_run", result.epochs_run),
        ("best_epoch", result.best_epoch),
        ("best_dev_f1", f"{result.best_dev_f1:.6f}"),
        ("final_train_f1", f"{result.final_train_f1:.6f}"),
        ("final_dev_f1", f"{result.final_dev_f1:.6f}"),
    ])
    if result.history:
        figures.save_training_curves(result.history, out / "training_curves.png")
    print(f"done: {result.epochs_run} epochs, final train F1 {result.final_train_f1:.4f}, "
          f"dev F1 {result.final_dev_f1:.4f}; artifacts in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = trainer.load_checkpoint(args.ckpt)
    model = trainer.restore_model(ckpt)
    data, _ = _load_split(args.data, args.format, args.split, model.cfg.seed,
                          schema=model.schema, max_len=model.cfg.max_len)
    _, report = trainer.evaluate(model, data, mode=args.mode)
    out = _out_dir(args)
    _write_tsv(out / f"report_{args.mode}.tsv", _report_rows(report))
    (out / f"report_{args.mode}.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    figures.save_eval_bars(report, out / f"report_{args.mode}.png")
    print(report.to_text())
    print(f"report written to {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    ckpt = trainer.load_checkpoint(args.ckpt)
    model = trainer.restore_model(ckpt)
    if args.text:
        seqs = [("text-1", tokenize(args.text))]
    else:
        data, _ = _load_split(args.data, args.format, args.split, model.cfg.seed,
                              schema=model.schema, max_len=model.cfg.max_len)
        seqs = [(ex.sid, ex.seq) for ex in data]
    rows = [("sid", "subject", "subject_span", "relation", "object", "object_span")]
    total = 0
    for sid, seq in seqs:
        for t in sorted(model.predict(seq),
                        key=lambda t: (t.sb, t.se, t.rel, t.ob, t.oe)):
            rows.append((sid, t.subject_text, f"{t.sb}-{t.se}", t.rel_name,
                         t.object_text, f"{t.ob}-{t.oe}"))
            total += 1
    out = _out_dir(args)
    _write_tsv(out / "predictions.tsv", rows)
    print(f"{total} triples over {len(seqs)} sentences -> {out / 'predictions.tsv'}")
    return EXIT_OK


def cmd_stats(args) -> int:
    data, schema = _load_split(args.data, args.format, args.split, args.seed or 0)
    stats = corpus.dataset_stats(data)
    out = _out_dir(args)
    d = stats.to_dict()
    rows = [(k, v) for k, v in d.items() if k != "buckets"]
    rows += [(f"bucket:{k}", v) for k, v in d["buckets"].items()]
    _write_tsv(out / "stats.tsv", rows)
    figures.save_stats_bars(stats, out / "stats.png", title=str(args.data))
    for k, v in rows:
        print(f"{k}\t{v}")
    if args.expected:
        expected = json.loads(Path(args.expected).read_text(encoding="utf-8"))
        flat = {k: v for k, v in d.items() if k != "buckets"}
        flat.update({f"bucket:{k}": v for k, v in d["buckets"].items()})
        bad = {k: (v, flat.get(k)) for k, v in expected.items() if flat.get(k) != v}
        if bad:
            for k, (want, got) in sorted(bad.items()):
                print(f"MISMATCH {k}: expected {want}, got {got}", file=sys.stderr)
            return EXIT_CHECK
        print("all expected counts match")
    return EXIT_OK


def cmd_decode_check(args) -> int:
    report = decoder.enumerate_roundtrip(max_n=args.max_n, max_triples=args.max_triples)
    print(report.summary())
    if args.out:
        out = _out_dir(args)
        _write_tsv(out / "roundtrip.tsv", [
            ("max_n", report.max_n), ("total", report.total), ("exact", report.exact),
            ("ambiguous_collisions", report.ambiguous_failures),
            ("unexplained_failures", report.unexplained_failures),
        ])
    return EXIT_OK if report.ok else EXIT_CHECK


def cmd_heatmap(args) -> int:
    ckpt = trainer.load_checkpoint(args.ckpt)
    model = trainer.restore_model(ckpt)
    data, _ = _load_split(args.data, args.format, args.split, model.cfg.seed,
                          schema=model.schema, max_len=model.cfg.max_len)
    if not 0 <= args.index < len(data):
        raise ConfigError(f"--index {args.index} outside the {len(data)}-sentence split")
    ex = data[args.index]
    record: dict = {}
    model.forward(ex.seq, record=record)
    if args.stage not in record:
        raise ConfigError(f"unknown stage {args.stage!r}; available: {sorted(record)}")
    grid = record[args.stage].data.mean(axis=-1)
    lo, hi = float(grid.min()), float(grid.max())
    norm = (grid - lo) / (hi - lo) if hi > lo else np.zeros_like(grid)
    out = _out_dir(args)
    stem = f"heatmap_{args.stage}"
    np.savetxt(out / f"{stem}.csv", grid, delimiter=",", fmt="%.6f")
    levels = np.rint(norm * 255).astype(int)
    with open(out / f"{stem}.pgm", "w", encoding="ascii") as fh:
        fh.write(f"P2\n{grid.shape[1]} {grid.shape[0]}\n255\n")
        for row in levels:
            fh.write(" ".join(str(v) for v in row) + "\n")
    figures.save_heatmap(norm, out / f"{stem}.png", tokens=ex.seq.tokens,
                         title=f"{args.stage} (channel mean) - {ex.sid}")
    print(f"stage {args.stage} of sentence {ex.sid!r} -> {out / stem}.{{csv,pgm,png}}")
    return EXIT_OK


TIMING_STACKS = [
    ("CPDC-OMNI", "APDC-CCW", "RPDC-OMNI", "CNN-2D"),
    ("CNN-2D", "CNN-2D", "CNN-2D", "CNN-2D"),
    ("CNN-2D", "APDC-CCW", "RPDC-OMNI", "CNN-2D"),
    ("CPDC-OMNI", "CNN-2D", "RPDC-OMNI", "CNN-2D"),
    ("CPDC-OMNI", "APDC-CCW", "CNN-2D", "CNN-2D"),
]


def cmd_timing(args) -> int:
    cfg = _load_config(args)
    data, schema = _load_split(args.data, args.format, "train", cfg.seed)
    data = data[:args.sentences]
    vocab = Vocab.build(t for ex in data for t in ex.seq.tokens)
    rows = trainer.time_stacks(cfg, vocab, schema, data, TIMING_STACKS, epochs=args.epochs)
    out = _out_dir(args)
    tsv = [("stack", "seconds_per_epoch", "n_params")]
    for r in rows:
        tsv.append(("+".join(r.stack), f"{r.seconds_per_epoch:.4f}", r.n_params))
    _write_tsv(out / "timing.tsv", tsv)
    figures.save_timing_bars(rows, out / "timing.png")
    for row in tsv[1:]:
        print("\t".join(str(c) for c in row))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser assembly.

def _add_data_args(p: argparse.ArgumentParser, split_default: str = "dev") -> None:
    p.add_argument("--data", default=SYNTHETIC,
                   help=f"dataset path, or {SYNTHETIC!r} for the built-in corpus")
    p.add_argument("--format", default="canonical", choices=("canonical", "benchmark-text"),
                   help="file format when --data is a path")
    p.add_argument("--split", default=split_default, choices=("train", "dev"),
                   help="which synthetic split to use")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bicon",
        description="Joint relational triple extraction over pair grids with "
                    "difference convolutions and dual attention.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoints")
    _add_data_args(p, "train")
    p.add_argument("--dev", default=None, help="dev dataset path (file data only)")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--epochs", type=int, default=None, help="override the config epoch count")
    p.add_argument("--out", default="bicon-out", help="output directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    _add_data_args(p)
    p.add_argument("--mode", default="partial", choices=("partial", "exact"))
    p.add_argument("--out", default="bicon-out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="extract triples with a checkpoint")
    p.add_argument("--ckpt", required=True)
    _add_data_args(p)
    p.add_argument("--text", default=None, help="score one raw sentence instead of a dataset")
    p.add_argument("--out", default="bicon-out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("stats", help="dataset pattern/bucket statistics")
    _add_data_args(p, "train")
    p.add_argument("--seed", type=int, default=0, help="seed for the synthetic corpus")
    p.add_argument("--expected", default=None,
                   help="JSON file of expected counts; mismatches exit with code 3")
    p.add_argument("--out", default="bicon-out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("decode-check", help="exhaustive tag round-trip self-check")
    p.add_argument("--max-n", type=int, default=6)
    p.add_argument("--max-triples", type=int, default=2)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_decode_check)

    p = sub.add_parser("heatmap", help="render an intermediate grid of one sentence")
    p.add_argument("--ckpt", required=True)
    _add_data_args(p)
    p.add_argument("--index", type=int, default=0, help="sentence index within the split")
    p.add_argument("--stage", default="T_so",
                   help="M_so, block1..blockL or T_so")
    p.add_argument("--out", default="bicon-out")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("timing", help="seconds per epoch for local-stack variants")
    _add_data_args(p, "train")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--sentences", type=int, default=10,
                   help="cap on sentences used for timing")
    p.add_argument("--out", default="bicon-out")
    p.set_defaults(func=cmd_timing)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BiconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
