"""Model assembly: encoder, discriminator, decoders, gamma and classifier heads."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .adversarial import Discriminator
from .classification import Classifier, centroid_fuse, class_probs, fuse, shared_copies
from .coattention import CoAttentionEncoder, ConfigError, EncoderOutput
from .numerics import Param, Tensor, concat, mul, reshape
from .reconstruction import Decoder, GammaSimplex, decode, residual, self_residual

FUSIONS = ("residual", "shared_copies")


@dataclass
class ModelConfig:
    """Network dimensions. ``segments[i] = (k_i, d_i)``."""

    segments: list = field(default_factory=lambda: [(11, 10), (11, 10)])
    n_classes: int = 2
    h: int = 20
    d3: int = 64
    q_hidden: int | None = None
    e_hidden: int = 64
    code_activation: str = "tanh"
    dec_hidden: list = field(default_factory=lambda: [64, 64])
    disc_hidden: list = field(default_factory=lambda: [64, 64])
    clf_hidden: int = 128
    share_encoders: bool = False
    fusion: str = "residual"
    residual_pass_through: bool = True
    semi_supervised: bool = False

    def __post_init__(self):
        self.segments = [tuple(int(v) for v in s) for s in self.segments]
        self.dec_hidden = list(self.dec_hidden)
        self.disc_hidden = list(self.disc_hidden)
        if len(self.segments) < 2:
            raise ConfigError("need at least two views")
        if any(k < 1 or d < 1 for k, d in self.segments):
            raise ConfigError(f"invalid segmentation {self.segments}")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")
        if self.h < 1 or self.d3 < 1:
            raise ConfigError("h and d3 must be positive")
        if self.fusion not in FUSIONS:
            raise ConfigError(f"fusion must be one of {FUSIONS}, got {self.fusion!r}")
        if self.semi_supervised and self.v != 2:
            raise ConfigError("semi-supervised heads are defined for two views")

    @property
    def v(self) -> int:
        return len(self.segments)

    @property
    def fused_width(self) -> int:
        return self.h + sum(k * d for k, d in self.segments)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["segments"] = [list(s) for s in self.segments]
        return d


@dataclass
class Forward:
    enc: EncoderOutput
    recon: dict  # (i, j) -> reconstruction of view i from code j
    residuals: list
    probs: Tensor | None = None
    probs_views: tuple | None = None

    @property
    def codes(self) -> list[Tensor]:
        return self.enc.codes


class MultiViewModel:
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        seg_dims = [d for _, d in cfg.segments]
        self.encoder = CoAttentionEncoder(
            seg_dims,
            cfg.h,
            cfg.d3,
            rng,
            cfg.q_hidden,
            cfg.e_hidden,
            cfg.share_encoders,
            cfg.code_activation,
        )
        self.D = Discriminator(cfg.h, rng, cfg.disc_hidden)
        self.decoders = [
            Decoder(cfg.h, d, k, rng, cfg.dec_hidden, name=f"F{i + 1}")
            for i, (k, d) in enumerate(cfg.segments)
        ]
        self.gamma = GammaSimplex()
        if cfg.semi_supervised:
            w = [cfg.h + k * d for k, d in cfg.segments]
            self.heads = [
                Classifier(w[i], cfg.n_classes, rng, cfg.clf_hidden, name=f"C{i + 1}")
                for i in range(2)
            ]
        else:
            self.heads = [Classifier(cfg.fused_width, cfg.n_classes, rng, cfg.clf_hidden)]

    # parameter groups, one per optimisation phase
    @property
    def disc_params(self) -> list[Param]:
        return self.D.params

    @property
    def autoencoder_params(self) -> list[Param]:
        out = list(self.encoder.params)
        for F in self.decoders:
            out += F.params
        return out + self.gamma.params

    @property
    def classifier_params(self) -> list[Param]:
        out = []
        for c in self.heads:
            out += c.params
        return out

    @property
    def params(self) -> list[Param]:
        return self.disc_params + self.autoencoder_params + self.classifier_params

    def named_params(self) -> dict[str, Param]:
        out = {}
        for p in self.params:
            if p.name in out and out[p.name] is not p:
                raise ConfigError(f"duplicate parameter name {p.name}")
            out[p.name] = p
        return out

    # forward pieces
    def encode(self, xs: Sequence) -> EncoderOutput:
        return self.encoder(xs)

    def reconstruct(self, codes: Sequence[Tensor], pairs=None) -> dict:
        v = self.cfg.v
        if pairs is None:
            pairs = [(i, j) for i in range(v) for j in range(v)] if v == 2 else [
                (i, i) for i in range(v)
            ]
        return {(i, j): decode(codes[j], self.decoders[i]) for i, j in pairs}

    def residuals(self, xs: Sequence, recon: dict) -> list[Tensor]:
        pt = self.cfg.residual_pass_through
        if self.cfg.v == 2:
            return [
                residual(xs[i], recon[(i, 0)], recon[(i, 1)], self.gamma, pass_through=pt)
                for i in range(2)
            ]
        return [self_residual(xs[i], recon[(i, i)], pass_through=pt) for i in range(self.cfg.v)]

    def fused(self, codes: Sequence[Tensor], residuals: Sequence[Tensor]) -> Tensor:
        if self.cfg.fusion == "shared_copies":
            return shared_copies(codes, self.cfg.fused_width)
        if self.cfg.v == 2:
            return fuse(codes[0], codes[1], residuals[0], residuals[1])
        return centroid_fuse(codes, residuals)

    def view_features(self, codes, residuals) -> list[Tensor]:
        """z_i ⊕ vec(s_i) per view (semi-supervised heads)."""
        out = []
        for z, s in zip(codes, residuals):
            flat = reshape(s, (s.shape[0], int(np.prod(s.shape[1:])), 1))
            out.append(concat([z, flat], axis=1))
        return out

    def predict_probs(self, codes, residuals) -> Tensor | tuple:
        if self.cfg.semi_supervised:
            feats = self.view_features(codes, residuals)
            return tuple(class_probs(f, c) for f, c in zip(feats, self.heads))
        return class_probs(self.fused(codes, residuals), self.heads[0])

    def forward(self, xs: Sequence, with_classifier: bool = True) -> Forward:
        xs = [x if isinstance(x, Tensor) else Tensor(x) for x in xs]
        enc = self.encode(xs)
        recon = self.reconstruct(enc.codes)
        res = self.residuals(xs, recon)
        out = Forward(enc, recon, res)
        if with_classifier:
            p = self.predict_probs(enc.codes, res)
            if isinstance(p, tuple):
                out.probs_views = p
                out.probs = mul(p[0] + p[1], 0.5)
            else:
                out.probs = p
        return out

    # persistence
    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.named_params().items()}

    def load_state_dict(self, state: dict) -> None:
        named = self.named_params()
        missing = set(named) - set(state)
        if missing:
            raise ConfigError(f"checkpoint lacks parameters {sorted(missing)}")
        for name, p in named.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ConfigError(f"{name}: checkpoint shape {arr.shape} != model {p.shape}")
            p.value = arr.copy()


# ------------------------------------------------------------------ checkpoints

_CONFIG_KEY = "__config__"


def save_checkpoint(model: MultiViewModel, path, extra: dict | None = None) -> Path:
    """One ``.npz`` holding every parameter plus the model config as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"model": model.cfg.to_dict(), **(extra or {})}
    arrays = model.state_dict()
    arrays[_CONFIG_KEY] = np.array(json.dumps(meta))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[MultiViewModel, dict]:
    with np.load(path, allow_pickle=False) as z:
        if _CONFIG_KEY not in z.files:
            raise ConfigError(f"{path}: not a model checkpoint")
        meta = json.loads(str(z[_CONFIG_KEY]))
        state = {k: z[k] for k in z.files if k != _CONFIG_KEY}
    model = MultiViewModel(ModelConfig(**meta["model"]))
    model.load_state_dict(state)
    return model, meta
