"""A staged trainer at desk scale: declarative stage configs (loss kind,
schedule, sampling), seeded crop/flip/rotate augmentation, and a loop that
runs the taped forward/backward with Adam under cosine annealing."""

import configparser
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, InputError, UsageError
from .loss import DEFAULT_LAMBDA_TOTAL, LossConfig, config_from_scales
from .network import (
    NetworkParams,
    last_block_scales,
    network_forward,
    network_from_tensors,
    network_tensor_items,
)
from .tensor import Tensor

LOSS_KINDS = ("l1", "eg", "l2")


@dataclass(frozen=True)
class StageConfig:
    """One training stage. `crop` is the low-resolution patch side; the HR
    patch is crop * scale. Unset lambdas are derived from the trained filter
    scales at stage start (falling back to equal thirds of lambda_total)."""

    name: str
    loss: str
    steps: int
    lr0: float
    lr_min: float = 0.0
    batch: int = 8
    crop: int = 16
    patch: int = 8
    lambda_x: float = None
    lambda_y: float = None
    lambda_l: float = None
    lambda_total: float = DEFAULT_LAMBDA_TOTAL

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"stage {self.name!r}: unknown loss {self.loss!r}")
        if self.steps < 1:
            raise ConfigError(f"stage {self.name!r}: steps must be >= 1")
        if self.lr0 < 0 or self.lr_min < 0:
            raise ConfigError(f"stage {self.name!r}: learning rates must be >= 0")
        if self.batch < 1 or self.crop < 1 or self.patch < 2:
            raise ConfigError(f"stage {self.name!r}: batch/crop/patch out of range")


_STAGE_KEYS = {
    "loss": str,
    "steps": int,
    "lr0": float,
    "lr_min": float,
    "batch": int,
    "crop": int,
    "patch": int,
    "lambda_x": float,
    "lambda_y": float,
    "lambda_l": float,
    "lambda_total": float,
}


def parse_stages(text: str) -> list:
    """Stage list from INI text: one section per stage, keys from _STAGE_KEYS."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"bad stage config: {exc}") from exc
    stages = []
    for section in cp.sections():
        kwargs = {"name": section}
        for key, raw in cp.items(section):
            conv = _STAGE_KEYS.get(key)
            if conv is None:
                raise ConfigError(f"stage {section!r}: unknown key {key!r}")
            try:
                kwargs[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"stage {section!r}: bad value for {key!r}: {raw!r}") from exc
        for required in ("loss", "steps", "lr0"):
            if required not in kwargs:
                raise ConfigError(f"stage {section!r}: missing required key {required!r}")
        stages.append(StageConfig(**kwargs))
    if not stages:
        raise ConfigError("stage config defines no stages")
    return stages


def read_stage_file(path) -> list:
    try:
        with open(str(path), "r", encoding="utf-8") as fh:
            return parse_stages(fh.read())
    except OSError as exc:
        raise InputError(f"cannot read stage config {path}: {exc}") from exc


@dataclass(frozen=True)
class StepRecord:
    """One optimizer step for the loss curve."""

    stage: str
    step: int
    loss: float
    lr: float


def sample_batch(pairs, stage: StageConfig, scale: int, rng):
    """Random aligned LR/HR crops with horizontal-flip and 90-degree-rotation
    augmentation; all randomness comes from the supplied generator."""
    lr_crops, hr_crops = [], []
    c = stage.crop
    for _ in range(stage.batch):
        lr, hr = pairs[int(rng.integers(len(pairs)))]
        if lr.h < c or lr.w < c:
            raise InputError(f"crop {c} exceeds LR image {lr.h}x{lr.w}")
        y = int(rng.integers(lr.h - c + 1))
        x = int(rng.integers(lr.w - c + 1))
        lr_c = lr.data[:, :, y:y + c, x:x + c]
        hr_c = hr.data[:, :, y * scale:(y + c) * scale, x * scale:(x + c) * scale]
        if rng.random() < 0.5:
            lr_c, hr_c = lr_c[:, :, :, ::-1], hr_c[:, :, :, ::-1]
        k = int(rng.integers(4))
        if k:
            lr_c = np.rot90(lr_c, k, axes=(2, 3))
            hr_c = np.rot90(hr_c, k, axes=(2, 3))
        lr_crops.append(lr_c)
        hr_crops.append(hr_c)
    return (Tensor(np.ascontiguousarray(np.concatenate(lr_crops))),
            Tensor(np.ascontiguousarray(np.concatenate(hr_crops))))


def _stage_loss_config(stage: StageConfig, spec, mode, values) -> LossConfig:
    net = network_from_tensors(spec, mode, values.__getitem__)
    cfg = config_from_scales(last_block_scales(net), stage.lambda_total, stage.patch)
    return LossConfig(
        patch=stage.patch,
        lambda_x=cfg.lambda_x if stage.lambda_x is None else stage.lambda_x,
        lambda_y=cfg.lambda_y if stage.lambda_y is None else stage.lambda_y,
        lambda_l=cfg.lambda_l if stage.lambda_l is None else stage.lambda_l,
    )


def train_loop(params: NetworkParams, pairs, stages, rng):
    """Run the stage list over LR/HR pairs; returns (trained params, records).

    Works on either form: branched (normal training) or merged (post-merge
    fine-tuning). Each stage restarts the optimizer and its cosine schedule.
    """
    if not pairs:
        raise UsageError("training needs at least one LR/HR pair")
    if not stages:
        raise UsageError("training needs at least one stage")
    spec, mode = params.spec, params.mode
    values = {k: np.array(v, dtype=np.float32) for k, v in network_tensor_items(params)}
    records = []
    gstep = 0
    for stage in stages:
        eg_cfg = _stage_loss_config(stage, spec, mode, values) if stage.loss == "eg" else None
        state = ad.adam_init(values)
        for t in range(stage.steps):
            lr_batch, hr_batch = sample_batch(pairs, stage, spec.scale, rng)
            leaves = ad.lift(values)
            net = network_from_tensors(spec, mode, leaves.__getitem__)
            out = network_forward(ad.param(lr_batch.data), net, ops=ad)
            if stage.loss == "l1":
                root = ad.l1_loss(out, hr_batch.data)
            elif stage.loss == "l2":
                root = ad.l2_loss(out, hr_batch.data)
            else:
                root, _ = ad.eg_loss_graph(out, hr_batch.data, eg_cfg)
            ad.backward(root)
            lr_t = ad.cosine_lr(t, stage.steps, stage.lr0, stage.lr_min)
            values = ad.adam_step(values, ad.gradients(leaves), state, lr_t)
            records.append(StepRecord(stage.name, gstep, float(root.value), lr_t))
            gstep += 1
    return network_from_tensors(spec, mode, values.__getitem__), records
