import numpy as np
import pytest

from sgnet import autodiff as ad
from sgnet.autodiff import Tensor
from sgnet.data import MaskVolume, Volume
from sgnet.metrics import confusion, overlap_metrics
from sgnet.models import ArchitectureSpec, build_model, checkpoint
from sgnet.objective import hybrid_loss
from sgnet.trainer import (
    AdamState,
    MissingGradientError,
    TrainConfig,
    adam_step,
    binarize,
    fit,
    predict,
    sample_batch,
    validation_dice,
)


def scalar_param(value):
    p = Tensor(np.array([value]), requires_grad=True)
    p.name = "theta"
    return p


def test_adam_first_step_exact():
    p = scalar_param(1.0)
    p.grad = np.array([1.0])
    adam_step([p], AdamState(), TrainConfig(lr=0.1, weight_decay=0.0))
    assert p.data[0] == 1.0 - 0.1 * 1.0 / (1.0 + 1e-8)


def test_adam_zero_gradient_stationary():
    p = scalar_param(0.7)
    p.grad = np.zeros(1)
    state = AdamState()
    for _ in range(3):
        adam_step([p], state, TrainConfig(lr=0.1, weight_decay=0.0))
    assert p.data[0] == 0.7 and state.t == 3


def test_adam_weight_decay_shrinks():
    p = scalar_param(0.7)
    p.grad = np.zeros(1)
    adam_step([p], AdamState(), TrainConfig(lr=0.01, weight_decay=1e-2))
    assert p.data[0] < 0.7


def test_adam_buffers_match_shapes():
    model = build_model(ArchitectureSpec(kind="unet", encoder_widths=(2, 4)), seed=0)
    model.zero_grad()
    state = AdamState()
    adam_step(model.parameters(), state, TrainConfig())
    for i, p in enumerate(model.parameters()):
        assert state.m[i].shape == p.shape == state.v[i].shape


def test_adam_missing_gradient():
    p = scalar_param(1.0)
    with pytest.raises(MissingGradientError, match="theta"):
        adam_step([p], AdamState(), TrainConfig())


@pytest.mark.parametrize(
    "kw",
    [dict(lr=-1.0), dict(batch_size=0), dict(patience=5, max_epochs=3), dict(fg_prob=1.5), dict(steps_per_epoch=0)],
)
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


# ---------------------------------------------------------------- inference


def constant_logit_model(value):
    model = build_model(ArchitectureSpec(kind="unet", encoder_widths=(2, 4)), seed=0)
    for p in model.parameters():
        p.data[...] = 0.0
    model._children["head"].bias.data[...] = value
    return model


@pytest.mark.parametrize("value,expected", [(-30.0, 0), (30.0, 1), (0.0, 0)])
def test_predict_saturation_and_tie(value, expected, rng):
    vol = Volume(rng.random((2, 10, 12, 8)), (1.0, 1.0, 1.0))
    mask = predict(constant_logit_model(value), vol, window=(8, 8, 8))
    assert mask.dims == vol.dims and np.all(mask.data == expected)


def test_binarize_boundary():
    assert binarize(np.array([-1e-12, 0.0, 1e-12])).tolist() == [0, 0, 1]


def test_predict_pads_small_volume(rng):
    vol = Volume(rng.random((2, 5, 6, 7)))
    assert predict(constant_logit_model(30.0), vol, window=(8, 8, 8)).dims == (5, 6, 7)


# ------------------------------------------------------------------ fitting


def toy_subjects(n, seed, dim=16):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        m = np.zeros((dim,) * 3, np.uint8)
        c = rng.integers(4, dim - 4, 3)
        m[c[0] - 2 : c[0] + 2, c[1] - 2 : c[1] + 2, c[2] - 2 : c[2] + 2] = 1
        img = np.stack([0.3 + 0.6 * m, 0.3 + 0.3 * m]) + 0.05 * rng.standard_normal((2,) + m.shape)
        out.append((Volume(img), MaskVolume(m)))
    return out


def toy_model(seed=0, **kw):
    kw.setdefault("bn_momentum", 0.1)
    return build_model(
        ArchitectureSpec(kind="sgnet", encoder_widths=(4, 8), sgm_groups=2, width_multiplier=1.0, **kw), seed=seed
    )


def toy_config(**kw):
    base = dict(lr=3e-3, batch_size=2, max_epochs=3, patience=3, patch=(8, 8, 8), steps_per_epoch=3, window=(16, 16, 16))
    base.update(kw)
    return TrainConfig(**base)


def test_frozen_model_stops_after_two_epochs():
    cfg = toy_config(lr=0.0, weight_decay=0.0, patience=1, max_epochs=5)
    _, log = fit(toy_model(bn_momentum=0.0), toy_subjects(2, 0), toy_subjects(1, 1), cfg)
    assert len(log.epochs) == 2 and log.stop_reason == "early_stop"
    assert log.epochs[0].val_dice == log.epochs[1].val_dice and log.best_epoch == 1


def test_fit_deterministic():
    runs = [fit(toy_model(), toy_subjects(3, 0), toy_subjects(2, 1), toy_config()) for _ in range(2)]
    (b1, l1), (b2, l2) = runs
    assert b1 == b2 and l1.to_jsonl() == l2.to_jsonl()


def test_fit_keeps_best_checkpoint():
    model = toy_model()
    val = toy_subjects(2, 1)
    cfg = toy_config(max_epochs=4, patience=4)
    blob, log = fit(model, toy_subjects(3, 0), val, cfg)
    assert log.best_val_dice == max(e.val_dice for e in log.epochs)
    assert log.best_val_dice == log.epochs[log.best_epoch - 1].val_dice
    assert log.stop_reason in ("early_stop", "max_epochs")
    best, meta = checkpoint.from_bytes(blob)
    assert meta["epoch"] == log.best_epoch
    assert validation_dice(best, val, cfg) == log.best_val_dice
    assert checkpoint.to_bytes(model, meta) == blob


def test_fit_rejects_empty_split():
    with pytest.raises(ValueError):
        fit(toy_model(), [], toy_subjects(1, 1), toy_config())


def test_validation_dice_matches_metrics():
    model = toy_model()
    val = toy_subjects(3, 4)
    cfg = toy_config()
    expected = np.mean([overlap_metrics(confusion(predict(model, v, cfg.window), m))[0] for v, m in val])
    assert validation_dice(model, val, cfg) == expected


def test_small_step_decreases_batch_loss():
    model = toy_model(seed=2)
    cfg = toy_config(lr=1e-5, weight_decay=0.0)
    x, y = sample_batch(np.random.default_rng(0), toy_subjects(2, 0), cfg)
    model.train()

    def batch_loss():
        with ad.no_grad():
            # train-mode BN uses batch statistics, so this is the loss being optimised
            return float(hybrid_loss(model.forward(Tensor(x)), y).total.data[0])

    before = batch_loss()
    model.zero_grad()
    ad.backward(hybrid_loss(model.forward(Tensor(x)), y).total)
    adam_step(model.parameters(), AdamState(), cfg)
    assert batch_loss() < before


def test_sample_batch_foreground_bias():
    subjects = toy_subjects(2, 0)
    rng = np.random.default_rng(0)
    _, y = sample_batch(rng, subjects, toy_config(fg_prob=1.0, batch_size=8))
    assert all(y[i].any() for i in range(8))
