"""Shared bits for the experiment scripts."""

import argparse
import json
import time
from pathlib import Path

from mvcoattn.datagen import SyntheticSpec, default_output_root, generate


def base_parser(desc: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=desc)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--iterations", type=int, default=250)
    p.add_argument("--class-sep", type=float, default=0.35)
    p.add_argument("--out", type=Path, default=None)
    return p


def dataset(seed: int, class_sep: float, **kw):
    return generate(SyntheticSpec(seed=seed, class_sep=class_sep, **kw))


def out_dir(args, name: str) -> Path:
    out = args.out or default_output_root() / f"{name}-{time.strftime('%Y%m%d-%H%M%S')}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "args.json").write_text(json.dumps(vars(args), indent=2, default=str) + "\n")
    return out
