"""Loss, optimization loop and training orchestration."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import numeric as nc
from .checkpoint import save_checkpoint
from .data import (
    NormStats,
    PackedDataset,
    assemble_dataset,
    compute_norm_stats,
    pack_dataset,
    split_clips,
)
from .errors import ConfigError, ContractError
from .model import (
    ModelConfig,
    ModelParams,
    OutputLayout,
    forward_batch,
    init_params,
    param_list,
    weight_tensors,
)
from .numeric import Tape, Tensor2
from .optim import AdamState, adam_step

LOSS_VARIANTS = ("mse", "mae", "ce-contact")


@dataclass
class TrainConfig:
    lambda_l1: float = 0.01
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    loss_variant: str = "mse"
    val_fraction: float = 0.1
    max_steps: int | None = None
    target_mse: float | None = None  # early stop once train MSE drops below
    eval_every: int = 100  # steps between train-MSE probes when early stopping
    lr_decay_step: int | None = None  # one-shot learning-rate decay point
    lr_decay: float = 0.1
    checkpoint_dir: str | None = None
    skeleton_hash: str = ""

    def validate(self) -> "TrainConfig":
        if self.lambda_l1 < 0:
            raise ConfigError("l1 weight must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ConfigError(f"loss variant must be one of {LOSS_VARIANTS}")
        return self


class TrainingDiverged(RuntimeError):
    pass


def data_term(yhat: Tensor2, targets: np.ndarray, variant: str, layout: OutputLayout) -> Tensor2:
    if variant == "mse":
        return nc.mean_all(nc.square(nc.sub(yhat, nc.constant(targets))))
    if variant == "mae":
        return nc.mean_all(nc.absval(nc.sub(yhat, nc.constant(targets))))
    if variant == "ce-contact":
        c0 = layout.contacts.start
        main = nc.mean_all(
            nc.square(nc.sub(nc.col_slice(yhat, 0, c0), nc.constant(targets[:, :c0])))
        )
        ce = nc.mean_all(
            nc.bce_with_logits(
                nc.col_slice(yhat, c0, layout.total), targets[:, c0:]
            )
        )
        return nc.add(main, ce)
    raise ConfigError(f"unknown loss variant {variant!r}")


def l1_term(params: ModelParams, lam: float) -> Tensor2 | None:
    """lambda times the mean absolute value of all projection weights."""
    if lam == 0.0:
        return None
    weights = weight_tensors(params)
    total = sum(w.data.size for w in weights)
    acc = None
    for w in weights:
        s = nc.sum_all(nc.absval(w))
        acc = s if acc is None else nc.add(acc, s)
    return nc.scale(acc, lam / total)


def compute_loss(
    yhat: Tensor2, targets: np.ndarray, params: ModelParams, tcfg: TrainConfig
) -> Tensor2:
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if yhat.shape != targets.shape:
        raise ContractError(f"prediction {yhat.shape} vs target {targets.shape}")
    layout = OutputLayout.for_config(params.config)
    loss = data_term(yhat, targets, tcfg.loss_variant, layout)
    reg = l1_term(params, tcfg.lambda_l1)
    return loss if reg is None else nc.add(loss, reg)


def dataset_mse(params: ModelParams, data: PackedDataset, batch_size: int = 256) -> float:
    """Inference-mode mean squared error over a packed dataset."""
    total, count = 0.0, 0
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        xs, traj, targets = data.batch(idx)
        yhat = forward_batch(xs, nc.constant(traj), params, mode="infer")
        total += float(((yhat.data - targets) ** 2).sum())
        count += targets.size
    return total / count


@dataclass
class EpochRecord:
    epoch: int
    steps: int
    train_loss: float
    train_mse: float
    val_mse: float | None


@dataclass
class FitResult:
    params: ModelParams
    trace: list
    steps: int
    reached_target_at: int | None
    best_val: float | None

    def trace_json(self) -> str:
        return json.dumps(
            [
                {
                    "epoch": r.epoch,
                    "steps": r.steps,
                    "train_loss": r.train_loss,
                    "train_mse": r.train_mse,
                    "val_mse": r.val_mse,
                }
                for r in self.trace
            ],
            sort_keys=True,
        )


def fit_packed(
    train_data: PackedDataset,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    stats: NormStats,
    val_data: PackedDataset | None = None,
    params: ModelParams | None = None,
    progress=None,
) -> FitResult:
    """Optimization loop over a pre-packed dataset.

    Single-threaded and fully deterministic: shuffling, init and dropout all
    derive from ``tcfg.seed``.
    """
    tcfg.validate()
    if params is None:
        params = init_params(mcfg, tcfg.seed)
    params.norm = stats
    plist = param_list(params)
    adam = AdamState(learning_rate=tcfg.learning_rate)
    shuffle_rng = np.random.default_rng(tcfg.seed + 1)
    drop_rng = np.random.default_rng(tcfg.seed + 2)
    n = len(train_data)
    trace: list[EpochRecord] = []
    steps = 0
    reached: int | None = None
    best_val: float | None = None
    ckpt_dir = Path(tcfg.checkpoint_dir) if tcfg.checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    stop = False

    for epoch in range(tcfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss, epoch_mse, batches = 0.0, 0.0, 0
        for start in range(0, n, tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            xs, traj, targets = train_data.batch(idx)
            with Tape() as tape:
                yhat = forward_batch(
                    xs, nc.constant(traj), params, mode="train", rng=drop_rng
                )
                loss = compute_loss(yhat, targets, params, tcfg)
            loss_val = loss.item()
            batch_mse = float(((yhat.data - targets) ** 2).mean())
            grads = tape.gradients(loss, plist)
            if not np.isfinite(loss_val):
                gmax = max((np.max(np.abs(g)) for g in grads), default=float("nan"))
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {batches} "
                    f"(step {steps}, max |grad| {gmax:.3e})"
                )
            adam_step(plist, grads, adam)
            steps += 1
            batches += 1
            if tcfg.lr_decay_step is not None and steps == tcfg.lr_decay_step:
                adam.learning_rate *= tcfg.lr_decay
            epoch_loss += loss_val
            epoch_mse += batch_mse
            if tcfg.target_mse is not None and steps % tcfg.eval_every == 0:
                cur = dataset_mse(params, train_data)
                if progress:
                    progress(f"step {steps}: train mse {cur:.6f}")
                if cur < tcfg.target_mse:
                    reached = steps
                    stop = True
                    break
            if tcfg.max_steps is not None and steps >= tcfg.max_steps:
                stop = True
                break
        val_mse = dataset_mse(params, val_data) if val_data is not None and len(val_data) else None
        rec = EpochRecord(
            epoch=epoch,
            steps=steps,
            train_loss=epoch_loss / max(batches, 1),
            train_mse=epoch_mse / max(batches, 1),
            val_mse=val_mse,
        )
        trace.append(rec)
        if progress:
            progress(
                f"epoch {epoch}: loss {rec.train_loss:.6f} mse {rec.train_mse:.6f}"
                + (f" val {val_mse:.6f}" if val_mse is not None else "")
            )
        if ckpt_dir:
            save_checkpoint(ckpt_dir / f"epoch{epoch:03d}.ckpt", params, tcfg.skeleton_hash)
            if val_mse is not None and (best_val is None or val_mse < best_val):
                best_val = val_mse
                save_checkpoint(ckpt_dir / "best.ckpt", params, tcfg.skeleton_hash)
        if stop:
            break
    return FitResult(params, trace, steps, reached, best_val)


def fit(clips: list, mcfg: ModelConfig, tcfg: TrainConfig, progress=None) -> FitResult:
    """End-to-end: split by clip, assemble windows, normalize, optimize."""
    tcfg.validate()
    train_clips, val_clips = split_clips(clips, tcfg.val_fraction, tcfg.seed)
    train_samples = assemble_dataset(train_clips, mcfg)
    if not train_samples:
        raise ConfigError("no training samples (clips too short for the window rule)")
    stats = compute_norm_stats(train_samples, mcfg)
    train_data = pack_dataset(train_samples, stats, mcfg)
    val_samples = assemble_dataset(val_clips, mcfg)
    val_data = pack_dataset(val_samples, stats, mcfg) if val_samples else None
    if not tcfg.skeleton_hash and clips:
        tcfg = replace(tcfg, skeleton_hash=clips[0].skeleton_hash)
    return fit_packed(train_data, mcfg, tcfg, stats, val_data, progress=progress)
