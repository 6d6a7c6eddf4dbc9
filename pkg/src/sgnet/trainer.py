"""Adam training loop with validation-Dice early stopping, and windowed inference."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor
from .data.volume import MaskVolume, Volume
from .data.windows import blend, extract, plan_windows
from .metrics import confusion, overlap_metrics
from .models import checkpoint
from .models.network import SegmentationNet
from .objective import hybrid_loss

log = logging.getLogger(__name__)


class NumericError(RuntimeError):
    pass


class MissingGradientError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 4
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    patch: tuple = (48, 48, 48)
    steps_per_epoch: int = 32
    fg_prob: float = 0.5
    window: tuple = (96, 96, 32)
    overlap: float = 0.25
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "patch", tuple(int(p) for p in self.patch))
        object.__setattr__(self, "window", tuple(int(p) for p in self.window))
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")
        for name in ("batch_size", "max_epochs", "patience", "steps_per_epoch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if not 0.0 <= self.fg_prob <= 1.0:
            raise ValueError("fg_prob must lie in [0, 1]")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, state: AdamState, config: TrainConfig) -> None:
    """One Adam update with L2 weight decay folded into the gradient."""
    params = [p for p in params if p.trainable]
    missing = [p.name for p in params if p.grad is None]
    if missing:
        raise MissingGradientError(f"no gradient for {missing[:5]}")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for i, p in enumerate(params):
        key = i
        g = p.grad + config.weight_decay * p.data
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p.data)
            state.v[key] = np.zeros_like(p.data)
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= config.lr * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)


# ------------------------------------------------------------------ sampling


def sample_patch(rng: np.random.Generator, image: np.ndarray, mask: np.ndarray, patch, fg_prob: float):
    dims = mask.shape
    if any(p > d for p, d in zip(patch, dims)):
        raise ValueError(f"training patch {patch} exceeds volume dims {dims}")
    hi = np.array(dims) - np.array(patch)
    if rng.random() < fg_prob and mask.any():
        fg = np.flatnonzero(mask)
        centre = np.array(np.unravel_index(fg[rng.integers(fg.size)], dims))
        origin = np.clip(centre - np.array(patch) // 2 + rng.integers(-4, 5, 3), 0, hi)
    else:
        origin = np.array([rng.integers(0, h + 1) for h in hi])
    sl = tuple(slice(o, o + p) for o, p in zip(origin, patch))
    return image[(slice(None),) + sl], mask[sl]


def sample_batch(rng, subjects, config: TrainConfig):
    xs, ys = [], []
    for _ in range(config.batch_size):
        vol, msk = subjects[rng.integers(len(subjects))]
        x, y = sample_patch(rng, vol.data, msk.data, config.patch, config.fg_prob)
        xs.append(x)
        ys.append(y[None].astype(np.float64))
    return np.stack(xs), np.stack(ys)


# ----------------------------------------------------------------- inference


def predict_logits(model: SegmentationNet, volume: Volume, window=(96, 96, 32), overlap: float = 0.25) -> np.ndarray:
    """Blended full-volume logits ``(out_channels, d, h, w)``.

    Volumes smaller than the window are zero-padded up to it and cropped back.
    """
    dims = volume.dims
    win = tuple(int(w) for w in window)
    padded = tuple(max(d, w) for d, w in zip(dims, win))
    data = volume.data
    if padded != dims:
        data = np.pad(data, [(0, 0)] + [(0, p - d) for p, d in zip(padded, dims)])
    plan = plan_windows(padded, win, overlap)
    was_training = model.training
    model.eval()
    try:
        with ad.no_grad():
            blocks = [model.forward(Tensor(patch[None])).data[0] for patch in extract(data, plan)]
    finally:
        model.set_training(was_training)
    logits = blend(blocks, plan, padded)
    return logits[(slice(None),) + tuple(slice(0, d) for d in dims)]


def binarize(logits: np.ndarray) -> np.ndarray:
    """Foreground where sigmoid(logit) > 0.5; an exact 0.5 stays background."""
    return (ad._sigmoid(logits) > 0.5).astype(np.uint8)


def predict(model: SegmentationNet, volume: Volume, window=(96, 96, 32), overlap: float = 0.25) -> MaskVolume:
    logits = predict_logits(model, volume, window, overlap)
    return MaskVolume(binarize(logits[0]), volume.spacing, volume.orientation)


# ------------------------------------------------------------------ training


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    dice_term: float
    ce_term: float
    val_dice: float


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_dice: float = float("-inf")
    stop_reason: str = ""

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "epoch", **asdict(e)}, sort_keys=True) for e in self.epochs]
        lines.append(json.dumps({
            "type": "summary", "best_epoch": self.best_epoch,
            "best_val_dice": self.best_val_dice, "stop_reason": self.stop_reason,
        }, sort_keys=True))
        return "\n".join(lines) + "\n"


def validation_dice(model, subjects, config: TrainConfig) -> float:
    scores = []
    for vol, msk in subjects:
        pred = predict(model, vol, config.window, config.overlap)
        scores.append(overlap_metrics(confusion(pred, msk))[0])
    return float(np.mean(scores))


def fit(model: SegmentationNet, train_set, val_set, config: TrainConfig, on_epoch=None):
    """Train until early stopping or ``max_epochs``.

    Returns ``(best_checkpoint_bytes, TrainLog)``; the model is left holding
    the best weights.
    """
    if not train_set or not val_set:
        raise ValueError("training and validation sets must be non-empty")
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    params = model.parameters()
    tlog = TrainLog()
    best_bytes = None
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        totals = np.zeros(3)
        for step in range(config.steps_per_epoch):
            x, y = sample_batch(rng, train_set, config)
            model.zero_grad()
            try:
                loss = hybrid_loss(model.forward(Tensor(x)), y)
                ad.backward(loss.total)
            except NonFiniteError as exc:
                raise NumericError(f"epoch {epoch} step {step}: {exc}") from exc
            if not np.isfinite(loss.total.data[0]):
                raise NumericError(f"epoch {epoch} step {step}: non-finite loss")
            adam_step(params, state, config)
            totals += (loss.total.data[0], loss.dice_term, loss.ce_term)
        totals /= config.steps_per_epoch
        val = validation_dice(model, val_set, config)
        rec = EpochRecord(epoch, float(totals[0]), float(totals[1]), float(totals[2]), val)
        tlog.epochs.append(rec)
        log.info("epoch %d loss %.4f val dice %.4f", epoch, rec.loss, val)
        if on_epoch is not None:
            on_epoch(rec)
        if val > tlog.best_val_dice:
            tlog.best_val_dice, tlog.best_epoch = val, epoch
            best_bytes = checkpoint.to_bytes(model, {"epoch": epoch, "val_dice": val})
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                tlog.stop_reason = "early_stop"
                break
    else:
        tlog.stop_reason = "max_epochs"
    best, _ = checkpoint.from_bytes(best_bytes)
    for (_, dst), (_, src) in zip(model.named_parameters(), best.named_parameters()):
        dst.data[...] = src.data
    for (_, dst), (_, src) in zip(model.named_buffers(), best.named_buffers()):
        dst[...] = src
    return best_bytes, tlog
