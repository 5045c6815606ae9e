"""Training loop: augmentation, mini-batch AdaDelta, early stopping."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..pianoroll import cut_windows
from .model import Architecture, ModelParams, forward, init_params, loss_and_grad
from .optim import OptimizerState, adadelta_step

__all__ = ["TrainConfig", "augment", "piece_windows", "train", "validation_loss"]

MELODY_SHIFTS = (-24, 12)


@dataclass
class TrainConfig:
    dropout_p: float = 0.3
    l1_coeff: float = 1e-5
    batch_size: int = 16
    patience: int = 20
    max_epochs: int = 500
    seed: int = 0
    lr: float = 1.0
    rho: float = 0.95
    eps: float = 1e-6
    val_fraction: float = 0.1
    augment: bool = True
    dtype: str = "float32"
    arch: Architecture = field(default_factory=Architecture)

    def __post_init__(self):
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 0 or self.l1_coeff < 0:
            raise ValueError("invalid batch_size, max_epochs or l1_coeff")
        if isinstance(self.arch, dict):
            self.arch = Architecture.from_dict(self.arch)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "arch" in d:
            d["arch"] = Architecture.from_dict(d["arch"])
        return cls(**d)


def _shift_rows(grid: np.ndarray, shift: int) -> np.ndarray:
    out = np.zeros_like(grid)
    if shift >= 0:
        out[shift:] = grid[:grid.shape[0] - shift]
    else:
        out[:shift] = grid[-shift:]
    return out


def augment(dataset: Sequence[tuple[np.ndarray, np.ndarray]], rng) -> list[tuple[np.ndarray, np.ndarray]]:
    """Add ``n // 2`` copies of random pieces with the melody moved -24 or +12 rows.

    Accompaniment pixels stay in place; melody pixels leaving the 128 rows are dropped.
    """
    pieces = [(np.asarray(x), np.asarray(y)) for x, y in dataset]
    n_extra = len(pieces) // 2
    if n_extra == 0:
        return pieces
    chosen = rng.choice(len(pieces), size=n_extra, replace=False)
    shifts = rng.choice(MELODY_SHIFTS, size=n_extra)
    out = list(pieces)
    for idx, shift in zip(chosen, shifts):
        x, y = pieces[idx]
        melody = y != 0
        accomp = (x != 0) & ~melody
        moved = _shift_rows(melody, int(shift))
        out.append(((accomp | moved).astype(x.dtype), moved.astype(y.dtype)))
    return out


def piece_windows(pieces) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for x, y in pieces:
        xs += [w.data for w in cut_windows(np.asarray(x))]
        ys += [w.data for w in cut_windows(np.asarray(y))]
    return np.stack(xs).astype(np.float64), np.stack(ys).astype(np.float64)


def validation_loss(params: ModelParams, xs: np.ndarray, ys: np.ndarray, batch: int = 32) -> float:
    """Eval-mode pixel MSE over a stack of windows."""
    total = 0.0
    for i in range(0, len(xs), batch):
        out = forward(params, xs[i:i + batch], "eval")
        total += float(np.sum((out - ys[i:i + batch]) ** 2))
    return total / ys.size


def _split(n: int, fraction: float, rng) -> tuple[list[int], list[int]]:
    n_val = min(max(1, int(round(n * fraction))), n - 1)
    order = rng.permutation(n)
    return sorted(order[n_val:].tolist()), sorted(order[:n_val].tolist())


def train(dataset: Sequence[tuple[np.ndarray, np.ndarray]], config: TrainConfig = TrainConfig(),
          initial: ModelParams | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> tuple[ModelParams, list[dict]]:
    """Fit the network to ``(input_roll, melody_roll)`` piece pairs.

    Pieces are split into training and validation sets; only training pieces
    are augmented. After every epoch the eval-mode validation MSE is recorded
    and the parameters of the best epoch are kept. Training stops after
    ``patience`` epochs without improvement or at ``max_epochs``.
    """
    if len(dataset) < 2:
        raise ValueError("training needs at least 2 pieces (train + validation)")
    rng = np.random.default_rng(config.seed)
    dtype = np.dtype(config.dtype)
    train_idx, val_idx = _split(len(dataset), config.val_fraction, rng)
    train_pieces = [dataset[i] for i in train_idx]
    if config.augment:
        train_pieces = augment(train_pieces, rng)
    xs, ys = piece_windows(train_pieces)
    vx, vy = piece_windows([dataset[i] for i in val_idx])

    if initial is not None:
        params = initial.copy()
    else:
        # start the output at the melody-pixel base rate instead of 0.5
        rate = float(np.clip(ys.mean(), 1e-4, 0.5))
        params = init_params(config.arch, rng, head_bias=np.log(rate / (1 - rate)))
    params = params.astype(dtype)
    history: list[dict] = []
    if config.max_epochs == 0:
        return params, history

    opt = OptimizerState.fresh(params.weights, config.rho, config.eps, config.lr)
    best, best_loss, stale = params.copy(), validation_loss(params, vx, vy), 0
    t0 = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(xs))
        losses = []
        for i in range(0, len(order), config.batch_size):
            sel = order[i:i + config.batch_size]
            loss, grads, buffers = loss_and_grad(
                params, xs[sel], ys[sel], config.l1_coeff, config.dropout_p, rng,
                update_buffers=True)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            weights, opt = adadelta_step(opt, params.weights, grads)
            params = ModelParams(params.arch, weights, buffers)
            losses.append(loss * len(sel))
        val = validation_loss(params, vx, vy)
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite validation loss at epoch {epoch}")
        record = {"epoch": epoch, "train_loss": float(sum(losses) / len(xs)),
                  "val_loss": val, "elapsed_s": time.perf_counter() - t0}
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if val < best_loss:
            best, best_loss, stale = params.copy(), val, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, history
