"""Reconstruction-regularizer comparison from a shared initialization.

Each checkpoint fits a fresh probe classifier on the frozen shared code.
"""

from _common import base_parser, dataset, out_dir

from mvcoattn.eval import REGULARIZER_VARIANTS, run_regularizer_suite
from mvcoattn.training import TrainingConfig


def main():
    p = base_parser(__doc__.splitlines()[0])
    p.add_argument("--eval-every", type=int, default=25)
    p.add_argument("--variants", nargs="+", default=list(REGULARIZER_VARIANTS),
                   choices=list(REGULARIZER_VARIANTS))
    p.add_argument("--threshold", type=float, default=0.10)
    args = p.parse_args()
    out = out_dir(args, "regularizers")
    for seed in args.seeds:
        cfg = TrainingConfig(seed=seed, iterations=args.iterations, eval_every=args.eval_every)
        curves = run_regularizer_suite(cfg, dataset(seed, args.class_sep), variants=args.variants)
        curves.to_csv(out / f"curves_seed{seed}.csv")
        parts = [f"{n} final {curves.final(n):.3f} hit@{curves.first_below(n, args.threshold)}"
                 for n in args.variants]
        print(f"seed {seed}: " + "; ".join(parts), flush=True)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
