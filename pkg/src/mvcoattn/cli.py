"""Command-line entry point.

    python -m mvcoattn.cli <command> [--config cfg.json] [flags]

Commands: gen-data, train, evaluate, explain, ablate, regularizers, sweep.
A JSON config may hold the sections ``generator``, ``training`` and ``model``
plus the top-level keys ``data``, ``checkpoint`` and ``out``; command-line
flags override the file. Every run writes ``manifest.json`` with the fully
resolved configuration next to its outputs.

Exit codes: 0 success, 1 validation error, 2 runtime or divergence error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .coattention import ConfigError
from .datagen import DataError, SyntheticSpec, default_output_root, generate, load_dataset, save_dataset
from .eval import (
    REGULARIZER_VARIANTS,
    SWEEPABLE,
    evaluate,
    export_attention,
    export_predictions,
    fcl_baseline,
    run_ablation,
    run_regularizer_suite,
    sweep,
)
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .training import DivergenceError, TrainingConfig, train

log = logging.getLogger("mvcoattn")

COMMANDS = ("gen-data", "train", "evaluate", "explain", "ablate", "regularizers", "sweep")

# which config sections each command reads
_SECTIONS = {
    "gen-data": ("generator",),
    "train": ("training", "model"),
    "evaluate": ("training",),
    "explain": (),
    "ablate": ("training", "model"),
    "regularizers": ("training", "model"),
    "sweep": ("training", "model"),
}
_NEEDS_DATA = {"train", "evaluate", "explain", "ablate", "regularizers", "sweep"}
_NEEDS_CHECKPOINT = {"evaluate", "explain"}
_SKIP_FIELDS = {"model": {"segments", "n_classes"}, "generator": {"recipes"}, "training": set()}
_CLASSES = {"generator": SyntheticSpec, "training": TrainingConfig, "model": ModelConfig}


class UsageError(ValueError):
    pass


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_dataclass_flags(parser: argparse.ArgumentParser, section: str) -> None:
    group = parser.add_argument_group(section)
    for f in dataclasses.fields(_CLASSES[section]):
        if f.name in _SKIP_FIELDS[section]:
            continue
        dest = f"{section}.{f.name}"
        default = f.default if f.default is not dataclasses.MISSING else None
        if f.type in ("bool", bool):
            group.add_argument(
                _flag(f.name), dest=dest, action=argparse.BooleanOptionalAction,
                default=argparse.SUPPRESS, help=f"default {default}",
            )
        elif f.type in ("list", list) or f.name in ("dec_hidden", "disc_hidden"):
            group.add_argument(
                _flag(f.name), dest=dest, type=int, nargs="+",
                default=argparse.SUPPRESS, help="space-separated widths",
            )
        else:
            kind = {"int": int, "float": float, "str": str}.get(str(f.type).split(" ")[0], None)
            if kind is None:
                kind = type(default) if default is not None else int
            group.add_argument(_flag(f.name), dest=dest, type=kind, default=argparse.SUPPRESS,
                               help=f"default {default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvcoattn", description="Multi-view co-attention experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", type=Path, help="JSON config file; flags win over it")
        p.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
        if cmd in _NEEDS_DATA:
            p.add_argument("--data", type=Path, default=argparse.SUPPRESS, help="dataset directory")
        if cmd in _NEEDS_CHECKPOINT:
            p.add_argument("--checkpoint", type=Path, default=argparse.SUPPRESS)
        for section in _SECTIONS[cmd]:
            _add_dataclass_flags(p, section)
        if cmd == "evaluate":
            p.add_argument("--fcl", action="store_true", default=argparse.SUPPRESS,
                           help="also fit the concatenated-view MLP baseline")
        if cmd == "regularizers":
            p.add_argument("--variants", nargs="+", choices=sorted(REGULARIZER_VARIANTS),
                           default=argparse.SUPPRESS)
        if cmd == "sweep":
            p.add_argument("--param", choices=SWEEPABLE, default=argparse.SUPPRESS)
            p.add_argument("--values", nargs="+", default=argparse.SUPPRESS)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge the config file with explicit flags (flags win)."""
    cfg: dict = {}
    if args.config is not None:
        if not args.config.exists():
            raise UsageError(f"config file {args.config} not found")
        try:
            cfg = json.loads(args.config.read_text())
        except json.JSONDecodeError as err:
            raise UsageError(f"{args.config}:{err.lineno}: malformed JSON") from None
        if not isinstance(cfg, dict):
            raise UsageError(f"{args.config}: top level must be an object")
    for key, val in vars(args).items():
        if key in ("command", "config", "verbose"):
            continue
        if "." in key:
            section, name = key.split(".", 1)
            cfg.setdefault(section, {})[name] = val
        else:
            cfg[key] = val
    return cfg


def _section(cfg: dict, name: str, **fixed):
    raw = dict(cfg.get(name) or {})
    known = {f.name for f in dataclasses.fields(_CLASSES[name])}
    unknown = set(raw) - known
    if unknown:
        raise UsageError(f"unknown {name} keys: {sorted(unknown)}")
    raw.update(fixed)
    return _CLASSES[name](**raw)


def _path(cfg: dict, key: str) -> Path:
    if key not in cfg:
        raise UsageError(f"--{key} is required")
    p = Path(cfg[key])
    if not p.exists():
        raise UsageError(f"{key} path {p} does not exist")
    return p


def _out_dir(cfg: dict, command: str) -> Path:
    if "out" in cfg:
        return Path(cfg["out"])
    return default_output_root() / f"{command}-{time.strftime('%Y%m%d-%H%M%S')}"


def _write_manifest(out: Path, command: str, resolved: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    body = {"command": command, **resolved}
    (out / "manifest.json").write_text(json.dumps(body, indent=2, default=str) + "\n")


def _model_cfg(cfg: dict, data) -> ModelConfig:
    return _section(cfg, "model", segments=data.segments, n_classes=data.n_classes)


# ------------------------------------------------------------------ commands


def cmd_gen_data(cfg: dict) -> dict:
    spec = _section(cfg, "generator")
    out = _out_dir(cfg, "gen-data")
    ds = generate(spec)
    save_dataset(ds, out)  # manifest.json carries the resolved generator recipe
    return {"out": str(out), "n": ds.n, "segments": ds.segments}


def cmd_train(cfg: dict) -> dict:
    data = load_dataset(_path(cfg, "data"))
    tc = _section(cfg, "training")
    mc = _model_cfg(cfg, data)
    out = _out_dir(cfg, "train")
    _write_manifest(out, "train", {"data": str(cfg["data"]), "training": tc.to_dict(), "model": mc.to_dict()})
    try:
        model, history = train(tc, data, model_cfg=mc)
    except DivergenceError as err:
        if err.history is not None:
            err.history.to_csv(out / "history.csv")
        raise
    history.to_csv(out / "history.csv")
    save_checkpoint(model, out / "checkpoint.npz", {"training": tc.to_dict()})
    rep = evaluate(model, data)
    rep.write(out)
    export_predictions(model, data, out / "predictions.csv")
    return {"out": str(out), "accuracy": rep.accuracy, "macro_f1": rep.macro_f1}


def cmd_evaluate(cfg: dict) -> dict:
    data = load_dataset(_path(cfg, "data"))
    model, meta = load_checkpoint(_path(cfg, "checkpoint"))
    out = _out_dir(cfg, "evaluate")
    resolved = {"data": str(cfg["data"]), "checkpoint": str(cfg["checkpoint"]), "model": meta["model"]}
    fcl = bool(cfg.get("fcl", False))
    if fcl:
        resolved["training"] = _section(cfg, "training").to_dict()
    _write_manifest(out, "evaluate", resolved)
    rep = evaluate(model, data)
    rep.write(out)
    export_predictions(model, data, out / "predictions.csv")
    result = {"out": str(out), "accuracy": rep.accuracy, "macro_f1": rep.macro_f1}
    if fcl:
        base = fcl_baseline(data, _section(cfg, "training"))
        base.write(out, stem="fcl_metrics")
        result["fcl_accuracy"] = base.accuracy
    return result


def cmd_explain(cfg: dict) -> dict:
    data = load_dataset(_path(cfg, "data"))
    model, meta = load_checkpoint(_path(cfg, "checkpoint"))
    out = _out_dir(cfg, "explain")
    _write_manifest(out, "explain", {"data": str(cfg["data"]), "checkpoint": str(cfg["checkpoint"]),
                                     "model": meta["model"]})
    path = export_attention(model, data, out / "attention.csv")
    return {"out": str(out), "attention": str(path)}


def cmd_ablate(cfg: dict) -> dict:
    data = load_dataset(_path(cfg, "data"))
    tc, mc = _section(cfg, "training"), _model_cfg(cfg, data)
    out = _out_dir(cfg, "ablate")
    _write_manifest(out, "ablate", {"data": str(cfg["data"]), "training": tc.to_dict(), "model": mc.to_dict()})
    curves = run_ablation(tc, data, mc)
    curves.to_csv(out / "curves.csv")
    return {"out": str(out), **{k: curves.final(k) for k in curves.series}}


def cmd_regularizers(cfg: dict) -> dict:
    data = load_dataset(_path(cfg, "data"))
    tc, mc = _section(cfg, "training"), _model_cfg(cfg, data)
    variants = list(cfg.get("variants") or REGULARIZER_VARIANTS)
    bad = set(variants) - set(REGULARIZER_VARIANTS)
    if bad:
        raise UsageError(f"unknown regularizer variants {sorted(bad)}")
    out = _out_dir(cfg, "regularizers")
    _write_manifest(out, "regularizers", {"data": str(cfg["data"]), "training": tc.to_dict(),
                                          "model": mc.to_dict(), "variants": variants})
    curves = run_regularizer_suite(tc, data, mc, variants)
    curves.to_csv(out / "curves.csv")
    return {"out": str(out), **{k: curves.final(k) for k in curves.series}}


def cmd_sweep(cfg: dict) -> dict:
    data = load_dataset(_path(cfg, "data"))
    tc, mc = _section(cfg, "training"), _model_cfg(cfg, data)
    param = cfg.get("param")
    if param not in SWEEPABLE:
        raise UsageError(f"--param must be one of {SWEEPABLE}")
    values = cfg.get("values")
    if not values:
        raise UsageError("--values is required")
    try:
        values = [float(v) for v in values]
    except (TypeError, ValueError):
        raise UsageError(f"--values must be numbers, got {values}") from None
    out = _out_dir(cfg, "sweep")
    _write_manifest(out, "sweep", {"data": str(cfg["data"]), "training": tc.to_dict(), "model": mc.to_dict(),
                                   "param": param, "values": values})
    curves = sweep(param, values, tc, data, mc)
    curves.to_csv(out / "curves.csv")
    return {"out": str(out), "errors": curves.series[param]}


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "ablate": cmd_ablate,
    "regularizers": cmd_regularizers,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        cfg = resolve(args)
        result = _HANDLERS[args.command](cfg)
    except (UsageError, ConfigError, DataError, TypeError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (DivergenceError, RuntimeError, FloatingPointError) as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return 2
    print(json.dumps(result, default=_jsonable))
    return 0


def _jsonable(x):
    if isinstance(x, (np.integer, np.floating)):
        return x.item()
    return str(x)


if __name__ == "__main__":
    sys.exit(main())
