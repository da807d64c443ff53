"""Masked-patch pre-training: mask sampling, the masked reconstruction
objective, the optimizer loop with cosine decay and gradient clipping, and
head-only linear probing / full fine-tuning."""

import csv
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .data import fit_to_window
from .errors import (
    ConfigError,
    ContractError,
    ParseError,
    ShapeError,
    TrainingError,
)
from .model import (
    PatchMaskPlan,
    forecasting_head,
    model_forward,
    nonpadded_patches,
    patch_observed_indicator,
    revin_normalize,
)

# ------------------------------------------------------------------ config


@dataclass
class PretrainConfig:
    """Training recipe. epochs and total_steps are both budget caps: training
    stops at whichever is reached first; either may be None to disable it."""

    mask_ratio: float = 0.30
    batch_size: int = 64
    epochs: int = 2
    total_steps: int = 2000
    seed: int = 0
    schedule: nc.CosineSchedule = field(default_factory=nc.CosineSchedule)
    clip_norm: float = 5.0
    weight_decay: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.mask_ratio < 1.0:
            raise ConfigError(f"mask_ratio must be in (0, 1), got {self.mask_ratio}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs is None and self.total_steps is None:
            raise ConfigError("one of epochs / total_steps must be set")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.total_steps is not None and self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")


@dataclass
class TrainLog:
    """Per-step (step, lr, loss) trace plus a digest of the series consumed."""

    records: list
    audit_hash: str = ""
    consumed_names: tuple = ()

    def __post_init__(self):
        steps = [r[0] for r in self.records]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ContractError("train log steps must be strictly increasing")

    @property
    def initial_loss(self):
        return self.records[0][2] if self.records else None

    @property
    def final_loss(self):
        return self.records[-1][2] if self.records else None

    def save(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "lr", "loss"])
            for step, lr, loss in self.records:
                writer.writerow([step, repr(float(lr)), repr(float(loss))])
        return path

    @classmethod
    def load(cls, path):
        records = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["step", "lr", "loss"]:
                raise ParseError(f"{path}: expected header step,lr,loss")
            for row in reader:
                if not row:
                    continue
                records.append((int(row[0]), float(row[1]), float(row[2])))
        return cls(records=records)


def audit_digest(names):
    """Order-independent sha256 digest of a collection of series names."""
    joined = ",".join(sorted(set(names)))
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


# ------------------------------------------------------------------ masking & loss


def sample_patch_mask(n_patches, ratio, rng):
    """Mask exactly max(1, floor(ratio * N)) patches uniformly without
    replacement; returns the plan (1 = kept observed, 0 = masked)."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"mask ratio must be in (0, 1), got {ratio}")
    k = max(1, math.floor(ratio * n_patches))
    indicator = np.ones(n_patches, dtype=np.uint8)
    indicator[rng.choice(n_patches, size=k, replace=False)] = 0
    return PatchMaskPlan(indicator)


def masked_mse_loss(x_norm, x_hat, plan, observed=None):
    """Mean squared error pooled over timesteps of masked patches.

    A timestep contributes iff its patch is masked under `plan` and the
    timestep itself is real ground truth per `observed` (padded or missing
    steps never produce a target). Returns a scalar engine Tensor when x_hat
    is one (differentiable), else a float.
    """
    x = np.asarray(x_norm, dtype=np.float32)
    single = x.ndim == 1
    xs = x[None] if single else x
    plan_arr = plan.observed if isinstance(plan, PatchMaskPlan) else np.asarray(plan)
    plan_arr = plan_arr.reshape(1, -1) if plan_arr.ndim == 1 else plan_arr
    b, t = xs.shape
    n = plan_arr.shape[1]
    if plan_arr.shape[0] != b or t % n != 0:
        raise ShapeError(f"plan shape {plan_arr.shape} incompatible with values {xs.shape}")
    p = t // n
    if observed is None:
        obs = np.ones_like(xs, dtype=bool)
    else:
        obs = np.asarray(observed, dtype=bool)
        obs = obs[None] if obs.ndim == 1 else obs
    if obs.shape != xs.shape:
        raise ShapeError(f"observed shape {obs.shape} != values shape {xs.shape}")
    eligible = np.repeat(plan_arr == 0, p, axis=1) & obs
    count = int(eligible.sum())
    if count == 0:
        raise ContractError("masked loss needs at least one masked, real timestep")
    w = (eligible / count).astype(np.float32)
    if isinstance(x_hat, nc.Tensor):
        if x_hat.shape != xs.shape and not (single and x_hat.shape == (t,)):
            raise ShapeError(f"prediction shape {x_hat.shape} != values shape {x.shape}")
        pred = nc.reshape(x_hat, xs.shape) if x_hat.shape != xs.shape else x_hat
        diff = nc.sub(pred, nc.Tensor(xs))
        return nc.sum_(nc.mul(nc.mul(diff, diff), nc.Tensor(w)))
    pred = np.asarray(x_hat, dtype=np.float32).reshape(xs.shape)
    return float((np.square(pred - xs) * w).sum())


# ------------------------------------------------------------------ training loop


def _prepare_series(dataset, config):
    """Window, normalize, and patch-index every series once up front."""
    if not dataset:
        raise ContractError("empty training dataset")
    xs, obs, pobs, names = [], [], [], []
    for s in dataset:
        w = fit_to_window(s, config.seq_len)
        if int(nonpadded_patches(w.observed, config.patch_len).sum()) < 2:
            raise ContractError(
                f"training series {s.name!r} has fewer than 2 usable patches"
            )
        x_norm, _ = revin_normalize(w.values, w.observed, eps=config.revin_eps)
        xs.append(x_norm)
        obs.append(w.observed)
        pobs.append(patch_observed_indicator(w.observed, config.patch_len))
        names.append(s.name)
    return (
        np.stack(xs).astype(np.float32),
        np.stack(obs),
        np.stack(pobs).astype(np.uint8),
        names,
    )


def _planned_steps(cfg, n_series):
    steps_per_epoch = math.ceil(n_series / cfg.batch_size)
    by_epochs = None if cfg.epochs is None else cfg.epochs * steps_per_epoch
    candidates = [c for c in (by_epochs, cfg.total_steps) if c is not None]
    return min(candidates)


def pretrain(weights, dataset, cfg=None):
    """Run masked-patch pre-training; returns (weights, TrainLog).

    Each step: draw a fresh uniform patch mask per series, blend mask tokens,
    encode, reconstruct, take the masked MSE, clip the global gradient norm,
    and apply a decoupled-weight-decay Adam update on the cosine schedule.
    Every logged loss is measured before that step's update.
    """
    cfg = cfg or PretrainConfig()
    mcfg = weights.config
    xs, obs, pobs, names = _prepare_series(dataset, mcfg)
    n_series = len(names)
    n_patches = mcfg.n_patches
    planned = _planned_steps(cfg, n_series)
    sched = nc.CosineSchedule(
        cfg.schedule.lr_init, cfg.schedule.lr_final, max(1, planned - 1)
    )
    rng = np.random.default_rng(cfg.seed)
    opt = nc.AdamWState(weights.params, weight_decay=cfg.weight_decay)
    records = []
    consumed = set()
    step = 0
    while step < planned:
        order = rng.permutation(n_series)
        for lo in range(0, n_series, cfg.batch_size):
            if step >= planned:
                break
            idx = order[lo:lo + cfg.batch_size]
            xb, ob, po = xs[idx], obs[idx], pobs[idx]
            sampled = np.empty((len(idx), n_patches), dtype=np.uint8)
            for r in range(len(idx)):
                sampled[r] = sample_patch_mask(n_patches, cfg.mask_ratio, rng).observed
            input_plan = po & sampled
            lr = nc.cosine_lr(min(step, sched.total_steps), sched)
            nc.zero_grads(weights.params)
            with nc.Tape() as tape:
                _, recon = model_forward(weights, xb, input_plan)
                loss = masked_mse_loss(xb, recon, input_plan, ob)
                loss_val = float(loss.data)
                if not np.isfinite(loss_val):
                    raise TrainingError(f"non-finite loss at step {step}")
                nc.backward(loss, tape)
            grads = {
                name: p.grad for name, p in weights.params.items() if p.grad is not None
            }
            nc.clip_global_norm(grads, cfg.clip_norm)
            nc.adamw_step({name: weights.params[name] for name in grads}, grads, opt, lr)
            records.append((step, lr, loss_val))
            consumed.update(names[i] for i in idx)
            step += 1
    log = TrainLog(
        records=records,
        audit_hash=audit_digest(consumed),
        consumed_names=tuple(sorted(consumed)),
    )
    return weights, log


# ------------------------------------------------------------------ probing


HEAD_KINDS = ("reconstruction", "forecast")


def _prepare_forecast_pairs(weights, dataset):
    """Normalize (history, target) pairs with history-only statistics."""
    mcfg = weights.config
    horizon = weights.horizon
    xs, plans, targets = [], [], []
    for history, target in dataset:
        target = np.asarray(target, dtype=np.float32)
        if target.shape != (horizon,):
            raise ShapeError(
                f"forecast target shape {target.shape} != horizon ({horizon},)"
            )
        w = fit_to_window(history, mcfg.seq_len)
        x_norm, stats = revin_normalize(w.values, w.observed, eps=mcfg.revin_eps)
        xs.append(x_norm)
        plans.append(patch_observed_indicator(w.observed, mcfg.patch_len))
        targets.append((target - stats.mean[0]) / stats.std[0])
    return (
        np.stack(xs).astype(np.float32),
        np.stack(plans).astype(np.uint8),
        np.stack(targets).astype(np.float32),
    )


def evaluate_forecast_mse(weights, dataset):
    """Mean squared error of the forecasting head in normalized space."""
    xs, plans, targets = _prepare_forecast_pairs(weights, dataset)
    h, _ = model_forward(weights, xs, plans)
    fc = forecasting_head(h, weights)
    return float(np.mean(np.square(fc.data - targets)))


def linear_probe(weights, head_kind, dataset, epochs=1, cfg=None, freeze=True):
    """Train only the requested head on a task dataset (freeze=False trains
    everything — that is full fine-tuning, same loop).

    reconstruction: dataset is a list of Series trained with the masked
    objective. forecast: dataset is a list of (history Series, target vector)
    pairs trained with plain MSE in normalized space.
    """
    if head_kind not in HEAD_KINDS:
        raise ConfigError(f"unknown head kind {head_kind!r}; choose from {HEAD_KINDS}")
    if head_kind == "forecast" and weights.horizon is None:
        raise ConfigError("attach a forecasting head before probing it")
    if epochs == 0:
        return weights
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}")
    cfg = cfg or PretrainConfig()
    trainable = weights.parameters(head_only=head_kind) if freeze else dict(weights.params)
    mcfg = weights.config
    if head_kind == "reconstruction":
        xs, obs, pobs, _ = _prepare_series(dataset, mcfg)
    else:
        xs, pobs, targets = _prepare_forecast_pairs(weights, dataset)
        obs = None
    n_series = xs.shape[0]
    steps_per_epoch = math.ceil(n_series / cfg.batch_size)
    planned = epochs * steps_per_epoch
    sched = nc.CosineSchedule(
        cfg.schedule.lr_init, cfg.schedule.lr_final, max(1, planned - 1)
    )
    rng = np.random.default_rng(cfg.seed)
    opt = nc.AdamWState(trainable, weight_decay=cfg.weight_decay)
    step = 0
    for _ in range(epochs):
        order = rng.permutation(n_series)
        for lo in range(0, n_series, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            lr = nc.cosine_lr(min(step, sched.total_steps), sched)
            nc.zero_grads(weights.params)
            with nc.Tape() as tape:
                if head_kind == "reconstruction":
                    sampled = np.empty(
                        (len(idx), mcfg.n_patches), dtype=np.uint8
                    )
                    for r in range(len(idx)):
                        sampled[r] = sample_patch_mask(
                            mcfg.n_patches, cfg.mask_ratio, rng
                        ).observed
                    input_plan = pobs[idx] & sampled
                    _, recon = model_forward(weights, xs[idx], input_plan)
                    loss = masked_mse_loss(xs[idx], recon, input_plan, obs[idx])
                else:
                    h, _ = model_forward(weights, xs[idx], pobs[idx])
                    fc = forecasting_head(h, weights)
                    diff = nc.sub(fc, nc.Tensor(targets[idx]))
                    loss = nc.mean_(nc.mul(diff, diff))
                if not np.isfinite(float(loss.data)):
                    raise TrainingError(f"non-finite loss at probe step {step}")
                nc.backward(loss, tape)
            grads = {
                name: p.grad for name, p in trainable.items() if p.grad is not None
            }
            nc.clip_global_norm(grads, cfg.clip_norm)
            nc.adamw_step(
                {name: trainable[name] for name in grads}, grads, opt, lr
            )
            step += 1
    return weights
