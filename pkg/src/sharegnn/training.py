"""Losses, Adam, the training loop with early stopping, and metrics logging."""

from __future__ import annotations

import csv
import io
import logging
import re
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericFault
from .sharing import ParameterPool

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# losses


def cross_entropy(logits, target: int) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy of one logit vector and its gradient."""
    z = np.asarray(logits, dtype=np.float64).ravel()
    shift = z - z.max()
    lse = np.log(np.exp(shift).sum())
    grad = np.exp(shift - lse)
    loss = float(lse - shift[int(target)])
    grad[int(target)] -= 1.0
    return loss, grad


def mean_absolute_error(pred, target) -> tuple[float, np.ndarray]:
    """Mean |pred - target| over the output entries; subgradient with sign(0) = 0."""
    diff = np.asarray(pred, dtype=np.float64).ravel() - np.atleast_1d(np.asarray(target, dtype=np.float64)).ravel()
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


LOSSES = {"cross_entropy": cross_entropy, "mean_absolute_error": mean_absolute_error}


def loss_and_gradient(pred, target, kind: str) -> tuple[float, np.ndarray]:
    if kind not in LOSSES:
        raise ConfigError(f"unknown loss {kind!r}")
    return LOSSES[kind](pred, target)


def batch_loss(outputs: np.ndarray, targets: Sequence, kind: str) -> tuple[float, np.ndarray]:
    """Mean loss over a batch and the gradient of that mean w.r.t. ``outputs``."""
    grads = np.zeros_like(outputs)
    total = 0.0
    for i, t in enumerate(targets):
        loss, grads[i] = loss_and_gradient(outputs[i], t, kind)
        total += loss
    b = len(targets)
    return total / b, grads / b


# ---------------------------------------------------------------------------
# optimiser and schedules


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_pool(cls, pool: ParameterPool) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in pool.values.items()},
                   {k: np.zeros_like(a) for k, a in pool.values.items()})


def adam_step(pool: ParameterPool, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update of every block from ``pool.grads``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, param in pool.values.items():
        g = pool.grads[name]
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        param -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class PlateauSchedule:
    """Multiply the rate by ``factor`` after ``patience`` epochs without relative improvement."""

    def __init__(self, lr: float, factor: float = 0.5, patience: int = 5, min_lr: float = 1e-4,
                 threshold: float = 1e-4):
        self.lr = lr
        self.factor, self.patience, self.min_lr, self.threshold = factor, patience, min_lr, threshold
        self.best = np.inf
        self.bad = 0

    def update(self, metric: float) -> float:
        if metric < self.best * (1.0 - self.threshold):
            self.best = metric
            self.bad = 0
        else:
            self.bad += 1
            if self.bad > self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad = 0
        return self.lr


# ---------------------------------------------------------------------------
# configuration


@dataclass
class TrainCfg:
    loss: str = "cross_entropy"
    learning_rate: float = 0.01
    batch_size: int = 64
    max_epochs: int = 200
    early_stop_patience: int | None = 25
    lr_schedule: str = "none"
    seed: int = 0
    noise_std: float = 0.0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.early_stop_patience is not None and not 0 <= self.early_stop_patience <= self.max_epochs:
            raise ConfigError("early_stop_patience must lie in [0, max_epochs]")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        self.schedule()

    def schedule(self):
        """``None`` or ``(factor, patience, min_lr)``."""
        text = self.lr_schedule.replace(" ", "")
        if text == "none":
            return None
        m = re.fullmatch(r"plateau\(([^,]+),([^,]+),([^,]+)\)", text)
        if not m:
            raise ConfigError(f"bad lr_schedule {self.lr_schedule!r}; use none or plateau(factor,patience,min_lr)")
        return float(m.group(1)), int(m.group(2)), float(m.group(3))

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainCfg":
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(f"bad training config: {exc}") from exc

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    best_epoch: int
    best_values: dict[str, np.ndarray]
    rows: list[dict] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    stopped_early: bool = False

    def best_row(self) -> dict:
        return self.rows[self.best_epoch - 1]

    def metrics_csv(self) -> str:
        return format_metrics(self.rows)

    def timing_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,seconds\n")
        for i, s in enumerate(self.seconds, start=1):
            buf.write(f"{i},{s:.6f}\n")
        return buf.getvalue()


def format_metrics(rows: list[dict]) -> str:
    """CSV text of the per-epoch log; floats written with ``repr`` so reruns match byte for byte."""
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = list(rows[0])
    writer.writerow(cols)
    for r in rows:
        writer.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()


def evaluate(model, indices: Sequence[int], targets, loss: str, batch_size: int = 256) -> tuple[float, float]:
    """(mean loss, accuracy or MAE) over ``indices`` without noise."""
    indices = list(indices)
    if not indices:
        return float("nan"), float("nan")
    total = 0.0
    score = 0.0
    for lo in range(0, len(indices), batch_size):
        batch = indices[lo:lo + batch_size]
        out = model.forward(batch)
        for row, gi in zip(out, batch):
            l, _ = loss_and_gradient(row, targets[gi], loss)
            total += l
            if loss == "cross_entropy":
                score += float(int(np.argmax(row)) == int(targets[gi]))
            else:
                diff = row - np.atleast_1d(np.asarray(targets[gi], dtype=np.float64))
                score += float(np.abs(diff).mean())
    return total / len(indices), score / len(indices)


def train(model, targets, train_idx: Sequence[int], val_idx: Sequence[int] | None, cfg: TrainCfg,
          test_idx: Sequence[int] | None = None) -> TrainResult:
    """Mini-batch Adam with best-validation checkpointing and early stopping.

    Batches are drawn in a seeded shuffled order; the gradient of the batch
    mean loss drives one Adam step. The checkpoint follows the best
    validation score, with ties going to the later epoch; training stops
    once the score has been below that best for ``early_stop_patience``
    epochs. Without a validation set the final epoch is kept and no early
    stopping happens. The model's pool holds the
    best parameters on return.
    """
    pool = model.pool
    classification = cfg.loss == "cross_entropy"
    metric = "acc" if classification else "mae"
    order_rng = np.random.default_rng([cfg.seed, 0])
    noise_rng = np.random.default_rng([cfg.seed, 1])
    state = AdamState.for_pool(pool)
    sched = cfg.schedule()
    lr = cfg.learning_rate
    plateau = PlateauSchedule(lr, *sched) if sched else None
    train_idx = np.asarray(train_idx, dtype=np.int64)
    has_val = val_idx is not None and len(val_idx) > 0
    best_score, best_epoch, stale = None, 0, 0
    best_values = {k: v.copy() for k, v in pool.values.items()}
    rows, seconds = [], []
    stopped = False
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = order_rng.permutation(train_idx)
        for bi, lo in enumerate(range(0, order.size, cfg.batch_size)):
            batch = order[lo:lo + cfg.batch_size].tolist()
            pool.zero_grad()
            out = model.forward(batch, cfg.noise_std, noise_rng)
            loss, dout = batch_loss(out, [targets[i] for i in batch], cfg.loss)
            if not np.isfinite(loss):
                raise NumericFault(f"loss diverged at epoch {epoch}, batch {bi}")
            model.backward(dout)
            adam_step(pool, state, lr)
        row = {"epoch": epoch}
        row["train_loss"], row[f"train_{metric}"] = evaluate(model, train_idx.tolist(), targets, cfg.loss)
        if has_val:
            row["val_loss"], row[f"val_{metric}"] = evaluate(model, val_idx, targets, cfg.loss)
        if test_idx is not None and len(test_idx):
            row["test_loss"], row[f"test_{metric}"] = evaluate(model, test_idx, targets, cfg.loss)
        row["lr"] = float(lr)
        rows.append(row)
        seconds.append(time.perf_counter() - t0)
        if not np.isfinite(row["train_loss"]):
            raise NumericFault(f"non-finite training loss after epoch {epoch}")

        if has_val:
            score = row[f"val_{metric}"] if classification else -row["val_loss"]
        else:
            score = None
        # a tie with the best score so far counts as the new best and resets patience
        if score is None or best_score is None or score >= best_score:
            best_score, best_epoch, stale = score, epoch, 0
            best_values = {k: v.copy() for k, v in pool.values.items()}
        else:
            stale += 1
        if plateau is not None:
            lr = plateau.update(row["val_loss"] if has_val else row["train_loss"])
        patience = cfg.early_stop_patience
        if has_val and patience is not None and stale > 0 and stale >= patience:
            stopped = True
            break
    pool.load_values(best_values)
    return TrainResult(best_epoch, best_values, rows, seconds, stopped)
