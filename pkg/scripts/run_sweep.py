"""One-parameter sweep of final test error (t1, t2, t3, h, alpha or beta)."""

from _common import base_parser, dataset, out_dir

from mvcoattn.eval import SWEEPABLE, sweep
from mvcoattn.training import TrainingConfig


def main():
    p = base_parser(__doc__)
    p.add_argument("--param", choices=SWEEPABLE, required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    args = p.parse_args()
    out = out_dir(args, f"sweep-{args.param}")
    for seed in args.seeds:
        cfg = TrainingConfig(seed=seed, iterations=args.iterations)
        curves = sweep(args.param, args.values, cfg, dataset(seed, args.class_sep))
        curves.to_csv(out / f"curves_seed{seed}.csv")
        pts = ", ".join(f"{x:g}: {e:.4f}" for x, e in curves.series[args.param])
        print(f"seed {seed}: {pts}", flush=True)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
