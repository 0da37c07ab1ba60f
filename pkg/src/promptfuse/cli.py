"""Command-line interface.

Subcommands: gen-data, train, eval, ablate, compare-prompts, plot,
validate-archive. Exit codes: 0 success, 1 user error (bad config or paths),
2 internal error. Every run writes run.json (resolved config + seed) under
--out so results can be replayed exactly.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import archive as archive_io
from .config import config_to_dict, load_config, parse_overrides
from .data import TEST, generate_synthetic
from .errors import PromptFuseError
from .experiments import (ablate, compare_prompts, read_rows_csv, write_rows_csv,
                          METRIC_NAMES)
from .plots import grouped_bar_chart
from .trainer import evaluate, load_checkpoint, train


class CliError(Exception):
    """User-level failure; message goes to stderr and exit code is 1."""


def _write_run_record(out: Path, command: str, cfg_dict: dict, extras: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    record = {"command": command, "config": cfg_dict}
    record.update(extras)
    (out / "run.json").write_text(json.dumps(record, indent=2), encoding="utf-8")


def _load_cfg(kind: str, args) -> object:
    overrides = parse_overrides(args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config is not None and not Path(args.config).is_file():
        raise CliError(f"config file not found: {args.config}")
    return load_config(kind, args.config, overrides)


def _maybe_print_config(args, cfg) -> bool:
    if args.print_config:
        print(json.dumps(config_to_dict(cfg), indent=2))
        return True
    return False


def _require_out(args) -> Path:
    if args.out is None:
        raise CliError("--out is required for this subcommand")
    return Path(args.out)


def _load_dataset(path_str: str):
    path = Path(path_str)
    if not path.exists():
        raise CliError(f"archive not found: {path}")
    return archive_io.read_feature_archive(path)


def cmd_gen_data(args) -> int:
    cfg = _load_cfg("synth", args)
    if _maybe_print_config(args, cfg):
        return 0
    out = _require_out(args)
    dataset = generate_synthetic(cfg)
    archive_io.write_feature_archive(dataset, out)
    _write_run_record(out, "gen-data", config_to_dict(cfg),
                      {"seed": cfg.seed, "archive": str(out)})
    sizes = {k: len(v) for k, v in dataset.splits.items()}
    print(f"wrote archive to {out} with splits {sizes}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg("train", args)
    if _maybe_print_config(args, cfg):
        return 0
    out = _require_out(args)
    dataset = _load_dataset(args.data)
    checkpoint, history = train(cfg, dataset, out_dir=out)
    test = dataset.splits.get(TEST) or None
    extras = {"seed": cfg.seed, "data": str(args.data),
              "best_val_acc": checkpoint.best_val_acc, "epochs_run": len(history)}
    if test:
        report = evaluate(checkpoint, test, cfg.eval_batch_size)
        extras["test"] = report.as_dict()
        print(f"best val acc {checkpoint.best_val_acc:.4f} "
              f"(epoch {checkpoint.epoch}); test acc {report.acc:.4f}")
    else:
        print(f"best val acc {checkpoint.best_val_acc:.4f} (epoch {checkpoint.epoch})")
    _write_run_record(out, "train", config_to_dict(cfg), extras)
    return 0


def cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise CliError(f"checkpoint not found: {ckpt_path}")
    checkpoint = load_checkpoint(ckpt_path)
    dataset = _load_dataset(args.data)
    samples = dataset.splits.get(args.split)
    if not samples:
        raise CliError(f"split {args.split!r} is empty or missing")
    report = evaluate(checkpoint, samples)
    line = {"split": args.split, **report.as_dict()}
    print(json.dumps(line, indent=2))
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(json.dumps(line, indent=2), encoding="utf-8")
        _write_run_record(out, "eval", checkpoint.config,
                          {"checkpoint": str(ckpt_path), "data": str(args.data)})
    return 0


def _seed_list(args, cfg) -> list[int]:
    base = cfg.seed
    return [base + i for i in range(args.seeds)]


def cmd_ablate(args) -> int:
    cfg = _load_cfg("train", args)
    if _maybe_print_config(args, cfg):
        return 0
    out = _require_out(args)
    dataset = _load_dataset(args.data)
    rows = ablate(cfg, dataset, _seed_list(args, cfg))
    out.mkdir(parents=True, exist_ok=True)
    path = write_rows_csv(rows, out / "ablation.csv")
    _write_run_record(out, "ablate", config_to_dict(cfg),
                      {"seeds": _seed_list(args, cfg), "data": str(args.data)})
    for row in rows:
        print(f"{row.setting:>14}: " + "  ".join(
            f"{m}={row.mean[m]:.4f}+-{row.std[m]:.4f}" for m in METRIC_NAMES))
    print(f"wrote {path}")
    return 0


def cmd_compare_prompts(args) -> int:
    cfg = _load_cfg("train", args)
    if _maybe_print_config(args, cfg):
        return 0
    out = _require_out(args)
    dataset = _load_dataset(args.data)
    rows = compare_prompts(cfg, dataset, _seed_list(args, cfg))
    out.mkdir(parents=True, exist_ok=True)
    path = write_rows_csv(rows, out / "prompt_comparison.csv")
    _write_run_record(out, "compare-prompts", config_to_dict(cfg),
                      {"seeds": _seed_list(args, cfg), "data": str(args.data)})
    for row in rows:
        print(f"{row.setting:>14}: " + "  ".join(
            f"{m}={row.mean[m]:.4f}+-{row.std[m]:.4f}" for m in METRIC_NAMES))
    print(f"wrote {path}")
    return 0


def cmd_plot(args) -> int:
    results = Path(args.results)
    out = Path(args.out) if args.out else results
    out.mkdir(parents=True, exist_ok=True)
    sources = {"ablation.csv": "Module ablations",
               "prompt_comparison.csv": "Prompt comparison"}
    made = []
    for name, title in sources.items():
        src = results / name
        if not src.is_file():
            continue
        rows = read_rows_csv(src)
        target = out / (src.stem + ".svg")
        grouped_bar_chart(rows, list(METRIC_NAMES), title, target)
        made.append(target)
    if not made:
        raise CliError(f"no ablation.csv or prompt_comparison.csv under {results}")
    for p in made:
        print(f"wrote {p}")
    return 0


def cmd_validate_archive(args) -> int:
    path = Path(args.archive)
    if not path.exists():
        raise CliError(f"archive not found: {path}")
    dataset, warnings = archive_io.validate_feature_archive(path)
    for w in warnings:
        print(f"warning: {w}")
    sizes = {k: len(v) for k, v in dataset.splits.items()}
    print(f"OK: {sizes} samples, {len(warnings)} warning(s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptfuse",
        description="Train and probe the prompt-fusion multimodal classifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_data=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--seeds", type=int, default=5,
                       help="number of seeds for multi-seed subcommands")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override, repeatable")
        p.add_argument("--print-config", action="store_true",
                       help="print the resolved config and exit")
        if needs_data:
            p.add_argument("--data", required=True, help="feature archive directory")

    common(sub.add_parser("gen-data", help="generate a synthetic archive"))
    common(sub.add_parser("train", help="train a model"), needs_data=True)
    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--split", default=TEST)
    p_eval.add_argument("--out")
    common(sub.add_parser("ablate", help="module ablation table"), needs_data=True)
    common(sub.add_parser("compare-prompts", help="prompt-mode comparison table"),
           needs_data=True)
    p_plot = sub.add_parser("plot", help="render experiment CSVs as SVG charts")
    p_plot.add_argument("--results", required=True, help="directory with CSVs")
    p_plot.add_argument("--out")
    p_val = sub.add_parser("validate-archive", help="check an archive on disk")
    p_val.add_argument("archive")
    return parser


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "compare-prompts": cmd_compare_prompts,
    "plot": cmd_plot,
    "validate-archive": cmd_validate_archive,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (CliError, PromptFuseError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - internal failures get code 2
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
