"""Mini-batch training with early stopping on dev MSE.

The loop is deliberately plain: shuffle, forward, MSE on targets clamped
to [0, 1], Adam step. After each epoch the dev set is scored in eval
mode; training stops when dev MSE has not improved for ``patience``
epochs (or at ``max_epochs``) and the best-dev parameters are restored.

Shuffling is keyed on (seed, epoch), so a rerun with the same config
reproduces the exact batch order and therefore the exact parameters.
"""

from __future__ import annotations

import io
import math
import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import evaluation, nn
from .corpus import Corpus
from .encoders import EncodedStreams, FeaturePipeline
from .model import EwerModel, stack_streams


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 50
    lr: float = 1e-3
    dropout: float = 0.2
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


@dataclass
class Dataset:
    """Pre-encoded utterances ready for batching."""

    ids: list[str]
    items: list[EncodedStreams]
    durations: np.ndarray
    targets: np.ndarray | None  # clamped to [0, 1] when present

    def __len__(self) -> int:
        return len(self.items)


def build_dataset(pipeline: FeaturePipeline, corpus: Corpus,
                  streams: Sequence[str], require_targets: bool = True) -> Dataset:
    """Encode every utterance of ``corpus`` for the given streams.

    Raises ValueError when ``require_targets`` and an utterance has no
    ``wer_target``.
    """
    ids = []
    items = []
    durations = []
    targets = []
    have_targets = True
    for utt in corpus:
        if utt.wer_target is None:
            if require_targets:
                raise ValueError(f"utterance {utt.id} has no wer_target")
            have_targets = False
        ids.append(utt.id)
        items.append(pipeline.encode(utt, streams=streams))
        durations.append(utt.duration_s)
        targets.append(utt.wer_target if utt.wer_target is not None else math.nan)
    target_arr = None
    if have_targets and ids:
        target_arr = np.clip(np.asarray(targets, dtype=np.float64), 0.0, 1.0)
    return Dataset(ids=ids, items=items,
                   durations=np.asarray(durations, dtype=np.float64),
                   targets=target_arr)


def make_batches(items, batch_size: int, seed: int = 0, epoch: int = 0,
                 mode: str = "shuffle") -> list[np.ndarray]:
    """Index batches over a dataset; the final partial batch is kept.

    ``items`` is a length or anything with len(). Shuffle order depends
    only on (seed, epoch), so epochs differ but reruns are identical.
    """
    n = items if isinstance(items, int) else len(items)
    if n < 1:
        raise ValueError("cannot batch an empty dataset")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if mode == "sequential":
        order = np.arange(n)
    elif mode == "shuffle":
        rng = np.random.default_rng(np.random.SeedSequence([seed & (2**63 - 1), epoch]))
        order = rng.permutation(n)
    else:
        raise ValueError(f"unknown batch mode {mode!r}")
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def predict_dataset(model: EwerModel, data: Dataset, batch_size: int = 32) -> np.ndarray:
    """Eval-mode predictions for a whole dataset, original order."""
    preds = []
    for idx in make_batches(len(data), batch_size, mode="sequential"):
        batch = stack_streams([data.items[i] for i in idx], model.cfg, dtype=model.dtype)
        preds.append(model.forward(batch, train=False)[:, 0])
    return np.concatenate(preds).astype(np.float64)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_mse: float
    dev_mse: float
    dev_pearson: float  # NaN when dev predictions are constant
    dev_rmse: float


HISTORY_CSV_HEADER = "epoch,train_mse,dev_mse,dev_pearson,dev_rmse"


def history_to_csv(history: Sequence[EpochStats]) -> str:
    out = io.StringIO()
    out.write(HISTORY_CSV_HEADER + "\n")
    for row in history:
        out.write(f"{row.epoch},{row.train_mse:.10g},{row.dev_mse:.10g},"
                  f"{row.dev_pearson:.10g},{row.dev_rmse:.10g}\n")
    return out.getvalue()


def fit(model: EwerModel, train_data: Dataset, dev_data: Dataset,
        cfg: TrainConfig, verbose: bool = False) -> list[EpochStats]:
    """Train in place; returns the per-epoch history.

    The model ends up with the parameters of the best-dev-MSE epoch,
    never worse than any epoch observed.
    """
    if len(train_data) == 0:
        raise ValueError("training set is empty")
    if len(dev_data) == 0:
        raise ValueError("dev set is empty")
    if train_data.targets is None or dev_data.targets is None:
        raise ValueError("training requires wer_target on every utterance")

    tensors = model.tensors()
    opt = nn.Adam(tensors, lr=cfg.lr)
    dev_targets = dev_data.targets
    best_dev = math.inf
    best_state = [t.data.copy() for t in tensors]
    bad_epochs = 0
    history: list[EpochStats] = []

    for epoch in range(1, cfg.max_epochs + 1):
        sq_sum = 0.0
        for idx in make_batches(len(train_data), cfg.batch_size,
                                seed=cfg.seed, epoch=epoch, mode="shuffle"):
            batch = stack_streams([train_data.items[i] for i in idx],
                                  model.cfg, dtype=model.dtype)
            target = train_data.targets[idx].astype(model.dtype)[:, None]
            opt.zero_grad()
            pred = model.forward(batch, train=True)
            loss, dpred = nn.mse_loss(pred, target)
            model.backward(dpred)
            opt.step()
            sq_sum += loss * len(idx)
        train_mse = sq_sum / len(train_data)

        dev_pred = predict_dataset(model, dev_data, cfg.batch_size)
        dev_mse = float(np.mean((dev_pred - dev_targets) ** 2))
        try:
            dev_pearson = evaluation.pearson(dev_pred, dev_targets)
        except ValueError:
            dev_pearson = math.nan
        dev_rmse = evaluation.rmse(dev_pred, dev_targets)
        history.append(EpochStats(epoch, train_mse, dev_mse, dev_pearson, dev_rmse))
        if verbose:
            print(f"epoch {epoch:3d}  train_mse {train_mse:.6f}  dev_mse {dev_mse:.6f}  "
                  f"dev_pearson {dev_pearson:.4f}", file=sys.stderr)

        if dev_mse < best_dev:
            best_dev = dev_mse
            best_state = [t.data.copy() for t in tensors]
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break

    for t, saved in zip(tensors, best_state):
        t.data[...] = saved
    return history
