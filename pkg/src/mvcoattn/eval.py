"""Metrics, attention export, the FCL baseline and the comparison studies
(fusion ablation, reconstruction-regularizer suite, parameter sweeps).
"""

from __future__ import annotations

import copy
import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .classification import class_probs, cross_entropy, one_hot
from .datagen import MultiViewDataset
from .layers import MLP
from .model import ModelConfig, MultiViewModel
from .numerics import Tape, Tensor, no_tape
from .training import (
    BatchSampler,
    MomentumSGD,
    TrainingConfig,
    lr_schedule,
    predict,
    shared_codes,
    train,
)

# ---------------------------------------------------------------------- metrics


def _check(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=int)
    pred = np.asarray(pred, dtype=int)
    if truth.size == 0:
        raise ValueError("empty input")
    if truth.shape != pred.shape:
        raise ValueError(f"length mismatch: {truth.shape} vs {pred.shape}")
    return truth, pred


def accuracy(truth, pred) -> float:
    truth, pred = _check(truth, pred)
    return float(np.mean(truth == pred))


def confusion_matrix(truth, pred, n_classes: int | None = None) -> np.ndarray:
    truth, pred = _check(truth, pred)
    c = n_classes or int(max(truth.max(), pred.max()) + 1)
    cm = np.zeros((c, c), dtype=int)
    np.add.at(cm, (truth, pred), 1)
    return cm


@dataclass
class MetricReport:
    accuracy: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray
    absent: list = field(default_factory=list)

    def write(self, out_dir, stem: str = "metrics") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = [f"accuracy={self.accuracy!r}", f"macro_f1={self.macro_f1!r}"]
        for i, (p, r, f) in enumerate(zip(self.precision, self.recall, self.f1)):
            lines += [f"precision_{i}={p!r}", f"recall_{i}={r!r}", f"f1_{i}={f!r}"]
        (out / f"{stem}.txt").write_text("\n".join(lines) + "\n")
        with open(out / f"{stem}_confusion.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred"] + [str(i) for i in range(self.confusion.shape[0])])
            for i, row in enumerate(self.confusion):
                w.writerow([i] + row.tolist())


def metric_report(truth, pred, n_classes: int | None = None) -> MetricReport:
    cm = confusion_matrix(truth, pred, n_classes)
    tp = np.diag(cm).astype(float)
    col = cm.sum(axis=0).astype(float)
    row = cm.sum(axis=1).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(col > 0, tp / col, 0.0)
        rec = np.where(row > 0, tp / row, 0.0)
        f1 = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)
    absent = [i for i in range(cm.shape[0]) if row[i] == 0 and col[i] == 0]
    if absent:
        warnings.warn(f"classes {absent} absent from truth and predictions; their F1 counts as 0")
    return MetricReport(
        accuracy=float(tp.sum() / cm.sum()),
        macro_f1=float(f1.mean()),
        precision=prec,
        recall=rec,
        f1=f1,
        confusion=cm,
        absent=absent,
    )


def macro_f1(truth, pred, n_classes: int | None = None) -> float:
    return metric_report(truth, pred, n_classes).macro_f1


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


# ------------------------------------------------------------------ attention


def attention_weights(model: MultiViewModel, data: MultiViewDataset, rows=None) -> list[np.ndarray]:
    """Per-view ``(n, k_i)`` attention weights."""
    rows = data.test_idx if rows is None else np.asarray(rows)
    out = [[] for _ in range(data.v)]
    with no_tape():
        for start in range(0, rows.size, 512):
            enc = model.encode([Tensor(x) for x in data.segmented(rows[start : start + 512])])
            for i, a in enumerate(enc.attention):
                out[i].append(a.value[:, 0, :])
    return [np.concatenate(o, axis=0) for o in out]


def export_attention(model: MultiViewModel, data: MultiViewDataset, path, rows=None) -> Path:
    """CSV rows: sample_id, view, segment_index, weight, padded."""
    if not data.segments:
        raise ValueError("dataset lacks segmentation metadata")
    rows = data.test_idx if rows is None else np.asarray(rows)
    weights = attention_weights(model, data, rows)
    pads = data.pad_counts()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "view", "segment_index", "weight", "padded"])
        for i, (a, pad, (k, d)) in enumerate(zip(weights, pads, data.segments)):
            # segments touched by zero padding
            first_padded = k - (-(-pad // d)) if pad else k
            for r, sid in enumerate(rows):
                for j in range(k):
                    w.writerow([int(sid), i + 1, j, repr(float(a[r, j])), int(j >= first_padded)])
    return path


# ------------------------------------------------------------------- baselines


def fit_mlp_classifier(
    X_train: np.ndarray,
    y_train: np.ndarray,
    sizes: Sequence[int],
    n_classes: int,
    steps: int,
    batch_size: int = 64,
    lr0: float = 0.03,
    decay: float = 0.96,
    momentum: float = 0.9,
    seed: int = 0,
) -> MLP:
    """Momentum-SGD cross-entropy fit of a tanh MLP on flat features ``(n, p)``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5]))
    net = MLP([X_train.shape[1], *sizes, n_classes], rng, name="probe")
    opt = MomentumSGD(net.params, momentum)
    sampler = BatchSampler(X_train.shape[0], batch_size, seed)
    cfg = TrainingConfig(lr0=lr0, decay=decay)
    Y = one_hot(y_train, n_classes)
    for it in range(steps):
        epoch, rows = sampler.batch(it)
        with Tape() as tape:
            p = class_probs(Tensor(X_train[rows][:, :, None]), net)
            loss = cross_entropy(Y[rows], p)
        tape.backward(loss, net.params)
        opt.step(lr_schedule(epoch, cfg))
    return net


def mlp_predict(net: MLP, X: np.ndarray) -> np.ndarray:
    with no_tape():
        return class_probs(Tensor(X[:, :, None]), net).value


def concatenated(data: MultiViewDataset, rows) -> np.ndarray:
    return np.hstack([v[rows] for v in data.views])


def fcl_baseline(
    data: MultiViewDataset,
    cfg: TrainingConfig,
    hidden: Sequence[int] = (128, 64, 32),
) -> MetricReport:
    """Four-layer fully connected classifier on the concatenated raw views."""
    net = fit_mlp_classifier(
        concatenated(data, data.train_idx),
        data.labels[data.train_idx],
        hidden,
        data.n_classes,
        steps=cfg.iterations,
        batch_size=cfg.batch_size,
        lr0=cfg.lr0,
        decay=cfg.decay,
        momentum=cfg.momentum,
        seed=cfg.seed,
    )
    pred = mlp_predict(net, concatenated(data, data.test_idx)).argmax(axis=1)
    return metric_report(data.labels[data.test_idx], pred, data.n_classes)


def evaluate(model: MultiViewModel, data: MultiViewDataset, rows=None) -> MetricReport:
    rows = data.test_idx if rows is None else np.asarray(rows)
    pred = predict(model, data, rows).argmax(axis=1)
    return metric_report(data.labels[rows], pred, data.n_classes)


def export_predictions(model: MultiViewModel, data: MultiViewDataset, path, rows=None) -> Path:
    """CSV rows: sample_id, true_label, predicted_label, p_0 .. p_{c-1}."""
    rows = data.test_idx if rows is None else np.asarray(rows)
    probs = predict(model, data, rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "true_label", "predicted_label"] + [f"p_{j}" for j in range(probs.shape[1])])
        for sid, p in zip(rows, probs):
            w.writerow([int(sid), int(data.labels[sid]), int(p.argmax())] + [repr(float(x)) for x in p])
    return path


# ------------------------------------------------------------------- studies


@dataclass
class CurveSet:
    """Named series of (x, error) points; x is an iteration or a swept value."""

    series: dict = field(default_factory=dict)

    def add(self, name: str, x, err: float, increasing: bool = True) -> None:
        pts = self.series.setdefault(name, [])
        if increasing and pts and x <= pts[-1][0]:
            raise ValueError(f"series {name}: x must increase ({x} after {pts[-1][0]})")
        pts.append((x, float(err)))

    def final(self, name: str) -> float:
        return self.series[name][-1][1]

    def first_below(self, name: str, threshold: float):
        for x, e in self.series[name]:
            if e <= threshold:
                return x
        return None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["series", "iteration", "error"])
            for name, pts in self.series.items():
                for x, e in pts:
                    w.writerow([name, x, repr(e)])


def _error_callback(data: MultiViewDataset, curves: CurveSet, name: str):
    def cb(it, model):
        rep = evaluate(model, data)
        curves.add(name, it, 1.0 - rep.accuracy)
        return {"accuracy": rep.accuracy, "f1": rep.macro_f1}

    return cb


def run_ablation(
    cfg: TrainingConfig, data: MultiViewDataset, model_cfg: ModelConfig | None = None
) -> CurveSet:
    """Method 1 (shared ⊕ residuals) against Method 2 (shared code tiled to the same width)."""
    if data.test_idx.size == 0:
        raise ValueError("ablation needs a test split")
    base = model_cfg or ModelConfig(segments=data.segments, n_classes=data.n_classes)
    every = cfg.eval_every or max(1, cfg.iterations // 10)
    run_cfg = replace(cfg, eval_every=every)
    curves = CurveSet()
    for name, fusion in (("method1", "residual"), ("method2", "shared_copies")):
        mc = replace(base, fusion=fusion)
        model = MultiViewModel(mc, seed=cfg.seed)
        curves.add(name, 0, 1.0 - evaluate(model, data).accuracy)
        train(run_cfg, data, model=model, callback=_error_callback(data, curves, name))
    return curves


REGULARIZER_VARIANTS = {
    "reg1": dict(regularizer="self", use_classifier=False),
    "reg2": dict(regularizer="cross_only", use_classifier=False),
    "reg3": dict(regularizer="cross", use_classifier=False),
    "reg4": dict(regularizer="l1", use_classifier=False),
    "reg5": dict(regularizer="cross", use_classifier=True),
}


def probe_error(
    model: MultiViewModel, data: MultiViewDataset, steps: int = 200, seed: int = 0,
    hidden: int = 128,
) -> float:
    """Test error of a fresh two-layer classifier fit on frozen shared codes."""
    Z_tr = shared_codes(model, data, data.train_idx)
    Z_te = shared_codes(model, data, data.test_idx)
    # codes can drift to large offsets under the game; score them on a common scale
    mu, sd = Z_tr.mean(axis=0), Z_tr.std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    Z_tr, Z_te = (Z_tr - mu) / sd, (Z_te - mu) / sd
    net = fit_mlp_classifier(
        Z_tr, data.labels[data.train_idx], [hidden], data.n_classes, steps, seed=seed
    )
    pred = mlp_predict(net, Z_te).argmax(axis=1)
    return 1.0 - accuracy(data.labels[data.test_idx], pred)


def run_regularizer_suite(
    cfg: TrainingConfig,
    data: MultiViewDataset,
    model_cfg: ModelConfig | None = None,
    variants: Sequence[str] = tuple(REGULARIZER_VARIANTS),
    probe_steps: int = 200,
) -> CurveSet:
    """Five reconstruction regularizers from one shared initialization.

    Every checkpoint scores the shared code ``z_s`` with a freshly fit probe
    classifier, so the series differ only through the representation.
    """
    base = model_cfg or ModelConfig(segments=data.segments, n_classes=data.n_classes)
    every = cfg.eval_every or 500
    curves = CurveSet()
    for name in variants:
        run_cfg = replace(cfg, eval_every=every, **REGULARIZER_VARIANTS[name])
        model = MultiViewModel(base, seed=cfg.seed)
        curves.add(name, 0, probe_error(model, data, probe_steps, cfg.seed))

        def cb(it, m, name=name):
            curves.add(name, it, probe_error(m, data, probe_steps, cfg.seed))

        train(run_cfg, data, model=model, callback=cb)
    return curves


SWEEPABLE = ("t1", "t2", "t3", "h", "alpha", "beta")


def sweep(
    param: str,
    values: Sequence,
    cfg: TrainingConfig,
    data: MultiViewDataset,
    model_cfg: ModelConfig | None = None,
) -> CurveSet:
    """Final test error for each value of one hyperparameter."""
    if param not in SWEEPABLE:
        raise ValueError(f"cannot sweep {param!r}; choose from {SWEEPABLE}")
    base = model_cfg or ModelConfig(segments=data.segments, n_classes=data.n_classes)
    curves = CurveSet()
    for val in values:
        if param == "h":
            mc, tc = replace(base, h=int(val)), cfg
        else:
            cast = int if param.startswith("t") else float
            mc, tc = base, replace(cfg, **{param: cast(val)})
        model, _ = train(tc, data, model=MultiViewModel(copy.deepcopy(mc), seed=tc.seed))
        curves.add(param, val, 1.0 - evaluate(model, data).accuracy, increasing=False)
    return curves
