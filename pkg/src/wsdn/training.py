"""Count-regression and presence-classification training.

One optimizer step per mini-batch of 64, Adadelta with its paper defaults,
on-the-fly augmentation, an unaugmented validation pass per epoch, and
early stopping on the best (strictly lowest) validation loss.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .checkpoint import make_checkpoint
from .data.augment import augment
from .engine import Adadelta, backward

TASKS = ("regression", "classification")

# p is clamped to this range inside the cross-entropy value; the gradient
# uses the exact sigmoid so optimization never sees the clamp
_P_MIN = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    task: str
    seed: int = 0
    batch_size: int = 64
    patience: int = 100
    max_epochs: int = 2000
    augmentation: bool = True
    init: str = "scaled"
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.init not in ("scaled", "paper"):
            raise ValueError(f"unknown init {self.init!r}")


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def loss(prediction, label, task):
    """Per-sample loss: squared error, or sigmoid + binary cross-entropy."""
    if task == "regression":
        if label < 0 or label != int(label):
            raise ValueError(f"regression labels are non-negative integers, got {label!r}")
        d = prediction - label
        return d * d
    if task == "classification":
        if label not in (0, 1):
            raise ValueError(f"classification labels are 0 or 1, got {label!r}")
        # -[y log p + (1-y) log(1-p)], with 1-p evaluated as sigmoid(-x) so
        # the label-0 branch is as exact as the label-1 branch
        p = _sigmoid(prediction if label == 1 else -prediction)
        return -math.log(min(max(p, _P_MIN), 1.0 - _P_MIN))
    raise ValueError(f"unknown task {task!r}")


def loss_gradient(prediction, label, task):
    """d loss / d prediction. For classification this is sigmoid(x) - y."""
    if task == "regression":
        return 2.0 * (prediction - label)
    if task == "classification":
        return _sigmoid(prediction) - label
    raise ValueError(f"unknown task {task!r}")


def _label(sample, task):
    return sample.count if task == "regression" else int(sample.presence)


def evaluate_loss(model, split, task):
    """Mean unaugmented loss over a split."""
    total = 0.0
    for s in split.samples:
        yhat = float(model.forward(s.image).output.values[0])
        total += loss(yhat, _label(s, task), task)
    return total / len(split.samples)


class EarlyStopper:
    """Strictly-lower-is-better patience counter."""

    def __init__(self, patience):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch, val_loss):
        """Record one epoch; returns True when this is a new best."""
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def exhausted(self):
        return self.stale >= self.patience


def train(model, train_split, val_split, config):
    """Optimize `model` in place; returns (best checkpoint, loss log).

    The log is a list of (epoch, train_loss, val_loss). The checkpoint holds
    the parameters from the best-validation epoch, while the model itself is
    left at the final epoch.

    Substreams: epoch shuffles come from (seed, 200, epoch) and batch b of
    an epoch augments from (seed, 300, epoch, b), samples in batch order.
    """
    if not train_split.samples or not val_split.samples:
        raise ValueError("training and validation splits must be non-empty")
    if train_split.target_digit != val_split.target_digit:
        raise ValueError("train and validation splits target different digits")

    optimizer = Adadelta(model.params, rho=config.rho, eps=config.eps, lr=config.lr)
    stopper = EarlyStopper(config.patience)
    n = len(train_split.samples)
    log = []
    best_tensors = None

    for epoch in range(1, config.max_epochs + 1):
        order = np.random.default_rng((config.seed, 200, epoch)).permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, config.batch_size)):
            batch = order[lo : lo + config.batch_size]
            aug_rng = np.random.default_rng((config.seed, 300, epoch, b))
            for i in batch:
                sample = train_split.samples[int(i)]
                image = augment(sample.image, aug_rng) if config.augmentation else sample.image
                fp = model.forward(image)
                yhat = float(fp.output.values[0])
                if not math.isfinite(yhat):
                    raise RuntimeError(
                        f"training diverged: non-finite prediction at epoch {epoch}, batch {b}"
                    )
                y = _label(sample, config.task)
                total += loss(yhat, y, config.task)
                backward(fp.output, loss_gradient(yhat, y, config.task) / len(batch))
            optimizer.step()
            optimizer.zero_grad()
        train_loss = total / n
        val_loss = evaluate_loss(model, val_split, config.task)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise RuntimeError(
                f"training diverged: epoch {epoch} losses train={train_loss} val={val_loss}"
            )
        log.append((epoch, train_loss, val_loss))
        if stopper.update(epoch, val_loss):
            best_tensors = {name: t.values.copy() for name, t in model.params.items()}
        if stopper.exhausted:
            break

    ckpt = make_checkpoint(
        model,
        task=config.task,
        digit=train_split.target_digit,
        seed=config.seed,
        init=config.init,
        epoch=stopper.best_epoch,
        val_loss=stopper.best,
        tensors=best_tensors,
    )
    return ckpt, log


def save_loss_log(log, path):
    """Write the per-epoch loss log as CSV with full-precision floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, train_loss, val_loss in log:
            writer.writerow([epoch, repr(float(train_loss)), repr(float(val_loss))])


def load_loss_log(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            (int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"])) for r in reader
        ]
