"""Fusion ablation: shared code plus residuals vs the shared code tiled to equal width."""

from _common import base_parser, dataset, out_dir

from mvcoattn.eval import run_ablation
from mvcoattn.training import TrainingConfig


def main():
    p = base_parser(__doc__)
    p.add_argument("--eval-every", type=int, default=25)
    args = p.parse_args()
    out = out_dir(args, "ablation")
    wins = 0
    for seed in args.seeds:
        cfg = TrainingConfig(seed=seed, iterations=args.iterations, eval_every=args.eval_every)
        curves = run_ablation(cfg, dataset(seed, args.class_sep))
        curves.to_csv(out / f"curves_seed{seed}.csv")
        e1, e2 = curves.final("method1"), curves.final("method2")
        wins += e1 <= e2
        print(f"seed {seed}: residual fusion {e1:.4f}, tiled shared code {e2:.4f}", flush=True)
    print(f"residual fusion no worse in {wins}/{len(args.seeds)} seeds; wrote {out}")


if __name__ == "__main__":
    main()
