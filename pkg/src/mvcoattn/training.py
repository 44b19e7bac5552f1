"""Three-phase alternating optimisation: discriminator ascent, encoder/decoder
descent, classifier descent; momentum SGD with per-epoch learning-rate decay.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .adversarial import (
    adversarial_loss,
    centroid_adversarial_loss,
    non_saturating_encoder_loss,
)
from .classification import cross_entropy, one_hot, semisup_loss, squared_error
from .coattention import ConfigError
from .datagen import MultiViewDataset
from .model import ModelConfig, MultiViewModel
from .numerics import Param, Tape, Tensor, add, gather_rows, mul, no_tape, stop_gradient
from .reconstruction import (
    Reconstructions,
    centroid_recon_loss,
    cross_only_loss,
    cross_recon_loss,
    l1_code_distance,
    self_recon_loss,
)

log = logging.getLogger(__name__)

REGULARIZERS = ("cross", "self", "cross_only", "l1")


class DivergenceError(RuntimeError):
    def __init__(self, msg: str, history: "TrainHistory | None" = None):
        super().__init__(msg)
        self.history = history


@dataclass
class TrainingConfig:
    t1: int = 2
    t2: int = 2
    t3: int = 3
    alpha: float = 1.0
    beta: float = 1.0
    iterations: int = 250
    batch_size: int = 64
    lr0: float = 0.03
    decay: float = 0.96
    momentum: float = 0.9
    seed: int = 0
    non_saturating: bool = False
    squared_error_classifier: bool = False
    regularizer: str = "cross"
    recon_mean: bool = True
    use_classifier: bool = True
    labeled_fraction: float = 1.0
    consistency_weight: float = 1.0
    eval_every: int = 0

    def __post_init__(self):
        for name in ("t1", "t2", "t3"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if not 0 < self.decay <= 1:
            raise ConfigError("decay must be in (0, 1]")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if self.batch_size < 1 or self.iterations < 0:
            raise ConfigError("batch_size must be >= 1 and iterations >= 0")
        if self.regularizer not in REGULARIZERS:
            raise ConfigError(f"regularizer must be one of {REGULARIZERS}")
        if not 0 < self.labeled_fraction <= 1:
            raise ConfigError("labeled_fraction must be in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def lr_schedule(epoch: int, cfg: TrainingConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr0 * cfg.decay**epoch


class MomentumSGD:
    """Classical momentum: v <- mu v - lr g ; p <- p + v."""

    def __init__(self, params: list[Param], momentum: float = 0.9):
        self.params = params
        self.momentum = momentum
        self.buffers = [np.zeros_like(p.value) for p in params]

    def step(self, lr: float, ascend: bool = False) -> None:
        sign = 1.0 if ascend else -1.0
        for p, buf in zip(self.params, self.buffers):
            buf *= self.momentum
            buf += sign * lr * p.grad
            p.value = p.value + buf


@dataclass
class LossBreakdown:
    L0: float
    Lv: float
    Lc: float
    alpha: float = 1.0
    beta: float = 1.0

    @property
    def total(self) -> float:
        return self.L0 + self.alpha * self.Lv + self.beta * self.Lc


@dataclass
class HistoryRecord:
    iteration: int
    L0: float
    Lv: float
    Lc: float
    total: float
    lr: float
    accuracy: float = float("nan")
    f1: float = float("nan")


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def as_rows(self) -> list[tuple]:
        return [tuple(asdict(r).values()) for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "L0", "Lv", "Lc", "total", "lr", "accuracy", "f1"])
            for r in self.records:
                w.writerow([r.iteration] + [repr(float(x)) for x in asdict(r).values()][1:])


@dataclass
class Batch:
    xs: list
    Y: np.ndarray
    labeled: np.ndarray

    @property
    def size(self) -> int:
        return self.Y.shape[0]


class BatchSampler:
    """Epoch-wise reshuffled minibatches; order is a function of (seed, epoch)."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.seed = seed
        self.per_epoch = max(1, n // self.batch_size)

    def order(self, epoch: int) -> np.ndarray:
        return np.random.default_rng(np.random.SeedSequence([self.seed, 1, epoch])).permutation(
            self.n
        )

    def batch(self, iteration: int) -> tuple[int, np.ndarray]:
        epoch, j = divmod(iteration, self.per_epoch)
        perm = self.order(epoch)
        return epoch, perm[j * self.batch_size : (j + 1) * self.batch_size]


def labeled_mask(n: int, fraction: float, seed: int) -> np.ndarray:
    mask = np.zeros(n, bool)
    n_lab = max(1, int(round(fraction * n)))
    mask[np.random.default_rng(np.random.SeedSequence([seed, 2])).permutation(n)[:n_lab]] = True
    return mask


def make_batch(data: MultiViewDataset, rows: np.ndarray, mask: np.ndarray | None = None) -> Batch:
    labeled = np.ones(rows.size, bool) if mask is None else mask
    return Batch(data.segmented(rows), one_hot(data.labels[rows], data.n_classes), labeled)


# ------------------------------------------------------------------------ losses


def _finite(name: str, t: Tensor) -> None:
    v = float(t.value)
    if not math.isfinite(v):
        raise DivergenceError(f"non-finite {name}: {v}")


def game_loss(model: MultiViewModel, codes) -> Tensor:
    if model.cfg.v == 2:
        return adversarial_loss(codes[0], codes[1], model.D).value
    return centroid_adversarial_loss(codes, model.D)


def recon_loss(model: MultiViewModel, xs, fwd, cfg: TrainingConfig) -> Tensor:
    codes = fwd.codes
    if cfg.regularizer == "l1":
        return l1_code_distance(codes[0], codes[1])
    norm = cfg.recon_mean
    if model.cfg.v > 2:
        return centroid_recon_loss(xs, codes, model.decoders, norm)
    r = Reconstructions(fwd.recon)
    if cfg.regularizer == "self":
        return self_recon_loss(xs[0], xs[1], r, norm)
    if cfg.regularizer == "cross_only":
        return cross_only_loss(xs[0], xs[1], r, norm)
    return cross_recon_loss(xs[0], xs[1], r, model.gamma, norm)


def label_loss(model: MultiViewModel, probs, batch: Batch, cfg: TrainingConfig) -> Tensor:
    if model.cfg.semi_supervised:
        P1, P2 = probs
        return semisup_loss(P1, P2, batch.Y, batch.labeled, cfg.consistency_weight)
    mask = batch.labeled
    if not mask.any():
        raise ValueError("batch has no labeled rows")
    if not mask.all():
        probs = gather_rows(probs, np.flatnonzero(mask))
    Y = batch.Y[mask]
    return squared_error(Y, probs) if cfg.squared_error_classifier else cross_entropy(Y, probs)


def _probs_for_loss(model, fwd):
    return fwd.probs_views if model.cfg.semi_supervised else fwd.probs


def losses(model: MultiViewModel, batch: Batch, cfg: TrainingConfig) -> dict:
    """L0, Lv, Lc (as Tensors) and their weighted total on one batch."""
    xs = [Tensor(x) for x in batch.xs]
    fwd = model.forward(xs, with_classifier=cfg.use_classifier)
    L0 = game_loss(model, fwd.codes)
    Lv = recon_loss(model, xs, fwd, cfg)
    Lc = label_loss(model, _probs_for_loss(model, fwd), batch, cfg) if cfg.use_classifier else Tensor(0.0)
    total = add(add(L0, mul(Lv, cfg.alpha)), mul(Lc, cfg.beta))
    return {"L0": L0, "Lv": Lv, "Lc": Lc, "total": total}


def breakdown(model: MultiViewModel, batch: Batch, cfg: TrainingConfig) -> LossBreakdown:
    with no_tape():
        ls = losses(model, batch, cfg)
    return LossBreakdown(
        float(ls["L0"].value), float(ls["Lv"].value), float(ls["Lc"].value), cfg.alpha, cfg.beta
    )


# ------------------------------------------------------------------------ phases


class PhaseOptimizers:
    """Separate momentum buffers per phase."""

    def __init__(self, model: MultiViewModel, momentum: float):
        self.disc = MomentumSGD(model.disc_params, momentum)
        self.auto = MomentumSGD(model.autoencoder_params, momentum)
        self.clf = MomentumSGD(model.classifier_params, momentum)


def _backward(loss: Tensor, tape: Tape, params) -> None:
    tape.backward(loss, params)


def step_discriminator(batch: Batch, model: MultiViewModel, opt: MomentumSGD, lr: float, times: int = 1) -> float:
    """Ascend L0 in the discriminator parameters only."""
    with no_tape():
        codes = model.encode([Tensor(x) for x in batch.xs]).codes
    codes = [stop_gradient(z) for z in codes]
    value = float("nan")
    for _ in range(times):
        with Tape() as tape:
            L0 = game_loss(model, codes)
        _finite("L0 (discriminator phase)", L0)
        _backward(L0, tape, opt.params)
        opt.step(lr, ascend=True)
        value = float(L0.value)
    return value


def step_autoencoders(
    batch: Batch, model: MultiViewModel, opt: MomentumSGD, lr: float, cfg: TrainingConfig, times: int = 1
) -> float:
    """Descend the encoder-side objective in co-attention, encoder, decoder and gamma parameters."""
    value = float("nan")
    for _ in range(times):
        with Tape() as tape:
            xs = [Tensor(x) for x in batch.xs]
            fwd = model.forward(xs, with_classifier=cfg.use_classifier and cfg.beta != 0)
            if cfg.non_saturating:
                L0 = non_saturating_encoder_loss(fwd.codes, model.D)
            else:
                L0 = game_loss(model, fwd.codes)
            Lv = recon_loss(model, xs, fwd, cfg)
            total = add(L0, mul(Lv, cfg.alpha))
            if cfg.use_classifier and cfg.beta != 0:
                Lc = label_loss(model, _probs_for_loss(model, fwd), batch, cfg)
                _finite("Lc", Lc)
                total = add(total, mul(Lc, cfg.beta))
        _finite("L0", L0)
        _finite("Lv", Lv)
        _finite("total", total)
        _backward(total, tape, opt.params)
        opt.step(lr)
        value = float(total.value)
    return value


def step_classifier(batch: Batch, model: MultiViewModel, opt: MomentumSGD, lr: float, cfg: TrainingConfig, times: int = 1) -> float:
    """Descend the label loss in classifier parameters only."""
    if not model.cfg.semi_supervised and not batch.labeled.any():
        raise ValueError("classifier step needs labeled rows in the batch")
    with no_tape():
        fwd = model.forward([Tensor(x) for x in batch.xs], with_classifier=False)
    codes = [stop_gradient(z) for z in fwd.codes]
    res = [stop_gradient(s) for s in fwd.residuals]
    value = float("nan")
    for _ in range(times):
        with Tape() as tape:
            probs = model.predict_probs(codes, res)
            Lc = label_loss(model, probs, batch, cfg)
        _finite("Lc", Lc)
        _backward(Lc, tape, opt.params)
        opt.step(lr)
        value = float(Lc.value)
    return value


# ------------------------------------------------------------------------ driver


def iterations_for_epochs(n_train: int, batch_size: int, epochs: float) -> int:
    return int(round(epochs * max(1, n_train // min(batch_size, n_train))))


def train(
    cfg: TrainingConfig,
    data: MultiViewDataset,
    model_cfg: ModelConfig | None = None,
    model: MultiViewModel | None = None,
    callback: Callable[[int, MultiViewModel], dict | None] | None = None,
) -> tuple[MultiViewModel, TrainHistory]:
    """Run ``cfg.iterations`` outer iterations of the three-phase loop.

    ``callback(iteration, model)`` runs after every ``cfg.eval_every``
    iterations (and may return ``{"accuracy": .., "f1": ..}`` to log).
    """
    if len(np.unique(data.labels)) < 2:
        raise ValueError("training data needs at least two classes")
    if model is None:
        if model_cfg is None:
            model_cfg = ModelConfig(segments=data.segments, n_classes=data.n_classes)
        model = MultiViewModel(model_cfg, seed=cfg.seed)
    rows_all = data.train_idx
    mask_all = labeled_mask(rows_all.size, cfg.labeled_fraction, cfg.seed)
    if not model.cfg.semi_supervised and cfg.labeled_fraction < 1:
        rows_all = rows_all[mask_all]
        mask_all = np.ones(rows_all.size, bool)
    sampler = BatchSampler(rows_all.size, cfg.batch_size, cfg.seed)
    opts = PhaseOptimizers(model, cfg.momentum)
    history = TrainHistory()
    for it in range(cfg.iterations):
        epoch, pos = sampler.batch(it)
        batch = make_batch(data, rows_all[pos], mask_all[pos])
        lr = lr_schedule(epoch, cfg)
        try:
            step_discriminator(batch, model, opts.disc, lr, cfg.t1)
            step_autoencoders(batch, model, opts.auto, lr, cfg, cfg.t2)
            if cfg.use_classifier:
                step_classifier(batch, model, opts.clf, lr, cfg, cfg.t3)
            lb = breakdown(model, batch, cfg)
        except DivergenceError as err:
            err.history = history
            raise
        if not math.isfinite(lb.total):
            raise DivergenceError(f"non-finite total loss at iteration {it + 1}", history)
        rec = HistoryRecord(it + 1, lb.L0, lb.Lv, lb.Lc, lb.total, lr)
        if callback is not None and cfg.eval_every and (it + 1) % cfg.eval_every == 0:
            extra = callback(it + 1, model) or {}
            rec.accuracy = extra.get("accuracy", rec.accuracy)
            rec.f1 = extra.get("f1", rec.f1)
        history.records.append(rec)
        log.debug("iter %d L0=%.4f Lv=%.4f Lc=%.4f", it + 1, lb.L0, lb.Lv, lb.Lc)
    return model, history


def predict(model: MultiViewModel, data: MultiViewDataset, rows=None, batch_size: int = 512) -> np.ndarray:
    """Class probabilities ``(n, c)`` for ``rows`` (test split by default)."""
    rows = data.test_idx if rows is None else np.asarray(rows)
    out = []
    with no_tape():
        for start in range(0, rows.size, batch_size):
            xs = data.segmented(rows[start : start + batch_size])
            out.append(model.forward(xs).probs.value)
    return np.concatenate(out, axis=0)


def shared_codes(model: MultiViewModel, data: MultiViewDataset, rows, batch_size: int = 512) -> np.ndarray:
    """z_s = mean of the view codes, shape ``(n, h)``."""
    out = []
    with no_tape():
        for start in range(0, len(rows), batch_size):
            xs = data.segmented(rows[start : start + batch_size])
            codes = model.encode([Tensor(x) for x in xs]).codes
            out.append(np.mean([z.value[:, :, 0] for z in codes], axis=0))
    return np.concatenate(out, axis=0)
