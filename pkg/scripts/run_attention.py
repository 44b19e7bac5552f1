"""Mean attention per segment on unshuffled views, where segment roles are known."""

import numpy as np
from _common import base_parser, dataset, out_dir

from mvcoattn.datagen import SyntheticSpec, segment_roles
from mvcoattn.eval import attention_weights, export_attention
from mvcoattn.training import TrainingConfig, train


def main():
    args = base_parser(__doc__).parse_args()
    out = out_dir(args, "attention")
    for seed in args.seeds:
        ds = dataset(seed, args.class_sep, shuffle=False)
        model, _ = train(TrainingConfig(seed=seed, iterations=args.iterations), ds)
        export_attention(model, ds, out / f"attention_seed{seed}.csv")
        roles = segment_roles(SyntheticSpec(seed=seed, class_sep=args.class_sep, shuffle=False))
        for i, (a, r) in enumerate(zip(attention_weights(model, ds), roles), start=1):
            mean = a.mean(axis=0)
            print(f"seed {seed} view {i}: informative {mean[r == 'informative'].mean():.4f} "
                  f"noise {mean[r == 'noise'].mean():.4f} | {np.round(mean, 3).tolist()}", flush=True)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
