"""Synthetic two-view data, segmentation into fixed-width segments, CSV persistence.

Random streams are derived from one integer seed with
``np.random.SeedSequence([seed, stream])``:

====== ===========================
stream use
====== ===========================
0      base features and labels
1      view 1 noise block / shuffle
2      view 2 noise block / shuffle
3      train/test split
====== ===========================
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .coattention import SegmentedView
from .numerics import sigmoid_map


class DataError(ValueError):
    pass


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


def class_centers(c: int, n_inf: int, sep: float, rng: np.random.Generator) -> np.ndarray:
    """±sep on every informative feature for two classes; simplex-like for more."""
    if c == 2:
        return np.stack([-sep * np.ones(n_inf), sep * np.ones(n_inf)])
    # regular simplex in R^c, randomly rotated into R^{n_inf} when it fits
    simplex = np.eye(c) - 1.0 / c
    simplex /= np.linalg.norm(simplex[0])
    if n_inf >= c:
        basis, _ = np.linalg.qr(rng.normal(size=(n_inf, c)))
        return sep * np.sqrt(n_inf) * simplex @ basis.T
    return sep * rng.normal(size=(c, n_inf))


def gen_base_classification(
    n: int,
    d: int,
    c: int = 2,
    informative_fraction: float = 0.2,
    seed: int = 0,
    class_sep: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Balanced Gaussian-cluster classification data.

    The first ``round(informative_fraction * d)`` columns carry class-dependent
    means; the rest are standard-normal noise. Returns ``(X, labels)``.
    """
    if c < 2:
        raise ValueError(f"need at least two classes, got c={c}")
    if n < 2 * c:
        raise ValueError(f"need n >= 2c samples, got n={n}, c={c}")
    if not 0 < informative_fraction <= 1:
        raise ValueError(f"informative_fraction must be in (0, 1], got {informative_fraction}")
    if d < 1:
        raise ValueError("d must be positive")
    rng = _rng(seed, 0)
    n_inf = max(1, int(round(informative_fraction * d)))
    labels = np.arange(n) % c
    rng.shuffle(labels)
    centers = class_centers(c, n_inf, class_sep, rng)
    X = rng.normal(size=(n, d))
    X[:, :n_inf] += centers[labels]
    return X, labels


@dataclass
class ViewRecipe:
    nonlinearity: str = "sigmoid"
    noise_mean: float = 0.0
    noise_std: float = 0.5
    shuffle_seed: int | None = 0

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError(f"noise std must be >= 0, got {self.noise_std}")
        if self.nonlinearity not in ("sigmoid", "tanh", "identity"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")


PAPER_RECIPES = (
    ViewRecipe("sigmoid", 0.0, 0.5, 1),
    ViewRecipe("tanh", 1.0, 0.7, 2),
)


def standardize(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


def _apply(name: str, X: np.ndarray) -> np.ndarray:
    if name == "sigmoid":
        return sigmoid_map(X).value
    if name == "tanh":
        return np.tanh(X)
    return X.copy()


def view_permutation(recipe: ViewRecipe, width: int) -> np.ndarray:
    if recipe.shuffle_seed is None:
        return np.arange(width)
    return np.random.default_rng(np.random.SeedSequence([recipe.shuffle_seed, 99])).permutation(
        width
    )


def make_view(X: np.ndarray, recipe: ViewRecipe, noise_dim: int, noise_seed) -> np.ndarray:
    if noise_dim < 0:
        raise ValueError(f"noise_dim must be >= 0, got {noise_dim}")
    rng = np.random.default_rng(noise_seed)
    body = _apply(recipe.nonlinearity, standardize(X))
    noise = rng.normal(recipe.noise_mean, recipe.noise_std, size=(X.shape[0], noise_dim))
    full = np.hstack([body, noise])
    return full[:, view_permutation(recipe, full.shape[1])]


def make_two_views(
    X: np.ndarray,
    recipe1: ViewRecipe = PAPER_RECIPES[0],
    recipe2: ViewRecipe = PAPER_RECIPES[1],
    noise_dim: int = 50,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Standardize, apply each view's nonlinearity, append a noise block, shuffle columns."""
    X1 = make_view(X, recipe1, noise_dim, np.random.SeedSequence([int(seed), 1]))
    X2 = make_view(X, recipe2, noise_dim, np.random.SeedSequence([int(seed), 2]))
    return X1, X2


# ------------------------------------------------------------------ segmentation


def segment(x: np.ndarray, k: int, d: int, view: int = 0) -> SegmentedView:
    """Split a feature row (or an ``(n, l)`` block) into ``k`` columns of width ``d``.

    Segment ``j`` holds entries ``j*d .. (j+1)*d - 1``; the tail is zero padded.
    """
    x = np.asarray(x, dtype=np.float64)
    l = x.shape[-1]
    if k * d < l:
        raise ValueError(f"k*d = {k * d} is smaller than the feature length {l}")
    pad = k * d - l
    padded = np.concatenate([x, np.zeros(x.shape[:-1] + (pad,))], axis=-1)
    seg = np.swapaxes(padded.reshape(x.shape[:-1] + (k, d)), -1, -2)
    return SegmentedView(np.ascontiguousarray(seg), view=view, pad_count=pad)


def unsegment(view: SegmentedView) -> np.ndarray:
    s = np.swapaxes(view.segments, -1, -2)
    flat = s.reshape(s.shape[:-2] + (-1,))
    return flat[..., : flat.shape[-1] - view.pad_count]


def segment_shape(l: int, d: int) -> tuple[int, int]:
    """(k, d) with the fewest width-``d`` segments covering ``l`` features."""
    return -(-l // d), d


# ---------------------------------------------------------------------- dataset


@dataclass
class MultiViewDataset:
    views: list
    labels: np.ndarray
    segments: list
    train_idx: np.ndarray
    test_idx: np.ndarray
    n_classes: int = 2
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.views = [np.asarray(v, dtype=np.float64) for v in self.views]
        self.labels = np.asarray(self.labels, dtype=int)
        self.segments = [tuple(int(a) for a in s) for s in self.segments]
        self.train_idx = np.asarray(self.train_idx, dtype=int)
        self.test_idx = np.asarray(self.test_idx, dtype=int)
        n = self.labels.shape[0]
        if n == 0:
            raise DataError("empty dataset")
        if len(self.views) < 2:
            raise DataError("need at least two views")
        for i, v in enumerate(self.views):
            if v.ndim != 2 or v.shape[0] != n:
                raise DataError(f"view {i + 1} has {v.shape[0]} rows, labels have {n}")
        if len(self.segments) != len(self.views):
            raise DataError("one segmentation per view required")
        for i, ((k, d), v) in enumerate(zip(self.segments, self.views)):
            if k * d < v.shape[1]:
                raise DataError(f"view {i + 1}: k*d={k * d} < width {v.shape[1]}")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise DataError("labels outside [0, n_classes)")

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def v(self) -> int:
        return len(self.views)

    def pad_counts(self) -> list[int]:
        return [k * d - v.shape[1] for (k, d), v in zip(self.segments, self.views)]

    def segmented(self, rows=None) -> list[np.ndarray]:
        """Per-view ``(B, d_i, k_i)`` arrays for ``rows`` (all rows when None)."""
        rows = slice(None) if rows is None else rows
        return [
            segment(v[rows], k, d, view=i).segments
            for i, ((k, d), v) in enumerate(zip(self.segments, self.views))
        ]


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = _rng(seed, 3).permutation(n)
    n_test = int(round(test_fraction * n))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


@dataclass
class SyntheticSpec:
    """Generation recipe; defaults are the 1/5-scaled synthetic setting."""

    n: int = 2000
    d: int = 100
    c: int = 2
    informative_fraction: float = 0.2
    class_sep: float = 1.0
    noise_dim: int = 10
    recipes: list = field(default_factory=lambda: [asdict(r) for r in PAPER_RECIPES])
    seg_width: int = 10
    test_fraction: float = 0.2
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        self.recipes = [r if isinstance(r, dict) else asdict(r) for r in self.recipes]


def generate(spec: SyntheticSpec) -> MultiViewDataset:
    X, y = gen_base_classification(
        spec.n, spec.d, spec.c, spec.informative_fraction, spec.seed, spec.class_sep
    )
    recipes = [ViewRecipe(**r) for r in spec.recipes]
    if not spec.shuffle:
        recipes = [replace(r, shuffle_seed=None) for r in recipes]
    views = [
        make_view(X, r, spec.noise_dim, np.random.SeedSequence([int(spec.seed), i + 1]))
        for i, r in enumerate(recipes)
    ]
    segs = [segment_shape(v.shape[1], spec.seg_width) for v in views]
    tr, te = split_indices(spec.n, spec.test_fraction, spec.seed)
    return MultiViewDataset(
        views, y, segs, tr, te, n_classes=spec.c, meta={"generator": asdict(spec)}
    )


def segment_roles(spec: SyntheticSpec) -> list[np.ndarray]:
    """Per view, label each segment "informative", "noise" or "padding".

    Only meaningful for unshuffled views, where columns keep their base order:
    informative base features first, then noise features, then the noise block.
    A segment is "informative" if it holds at least one informative column.
    """
    if spec.shuffle:
        raise ValueError("segment roles are only known for unshuffled views")
    n_inf = max(1, int(round(spec.informative_fraction * spec.d)))
    width = spec.d + spec.noise_dim
    k, d = segment_shape(width, spec.seg_width)
    col = np.arange(k * d).reshape(k, d)
    roles = np.where(
        (col < n_inf).any(axis=1), "informative", np.where((col < width).any(axis=1), "noise", "padding")
    )
    return [roles.copy() for _ in spec.recipes]


def paper_spec(seed: int = 0) -> SyntheticSpec:
    """Full-size synthetic setting: 10,000 x 500, 50-wide noise, 11 segments of 50."""
    return SyntheticSpec(n=10_000, d=500, noise_dim=50, seg_width=50, seed=seed)


# ------------------------------------------------------------------ persistence

MANIFEST = "manifest.json"


def save_dataset(ds: MultiViewDataset, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, v in enumerate(ds.views):
        p = out / f"view{i + 1}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"f{j}" for j in range(v.shape[1])])
            for row in v:
                w.writerow([repr(float(x)) for x in row])
        paths.append(p)
    p = out / "labels.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"])
        for y in ds.labels:
            w.writerow([int(y)])
    paths.append(p)
    manifest = {
        "n": ds.n,
        "n_views": ds.v,
        "n_classes": ds.n_classes,
        "segments": [list(s) for s in ds.segments],
        "train_idx": ds.train_idx.tolist(),
        "test_idx": ds.test_idx.tolist(),
        **ds.meta,
    }
    p = out / MANIFEST
    p.write_text(json.dumps(manifest, indent=2))
    paths.append(p)
    return paths


def _read_matrix(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def load_dataset(data_dir) -> MultiViewDataset:
    root = Path(data_dir)
    mpath = root / MANIFEST
    if not mpath.exists():
        raise DataError(f"{mpath} not found")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as err:
        raise DataError(f"{mpath}:{err.lineno}: malformed manifest") from None
    views = [_read_matrix(root / f"view{i + 1}.csv") for i in range(manifest["n_views"])]
    labels = _read_matrix(root / "labels.csv")
    if labels.shape[1] != 1 or np.any(labels != np.round(labels)):
        raise DataError(f"{root / 'labels.csv'}: expected one integer label per row")
    meta = {k: v for k, v in manifest.items() if k not in (
        "n", "n_views", "n_classes", "segments", "train_idx", "test_idx")}
    return MultiViewDataset(
        views,
        labels[:, 0].astype(int),
        manifest["segments"],
        manifest["train_idx"],
        manifest["test_idx"],
        n_classes=manifest["n_classes"],
        meta=meta,
    )


def default_output_root() -> Path:
    return Path(os.environ.get("MVCOATTN_OUTPUT_ROOT", "runs"))
