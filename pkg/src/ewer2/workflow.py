"""End-to-end orchestration: train a system, persist it, run ablations.

A trained system is persisted as a bundle directory:

    model.ckpt         binary checkpoint (nn module format)
    model.json         stream config, layer dims, seed, decoder stats
    lexical.vocab      token -> index map fitted on the training split
    phonotactic.vocab  phone -> index map
    history.csv        per-epoch training record

Loading a bundle rebuilds the exact architecture and restores the saved
parameters, so predictions match the in-memory model bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation, nn, scorer
from .corpus import Corpus
from .encoders import ALL_STREAMS, DecoderStats, FeaturePipeline
from .evaluation import EvalReport, WerEstimate
from .model import EwerModel, ModelDims, StreamConfig, build_model, system_config
from .trainer import (Dataset, EpochStats, TrainConfig, build_dataset, fit,
                      history_to_csv, predict_dataset)

# predictions are nudged into the open interval so float32 sigmoid
# saturation cannot produce an exact 0.0 or 1.0 estimate
_PRED_EPS = 1e-7


@dataclass
class TrainedSystem:
    system: str
    model: EwerModel
    pipeline: FeaturePipeline
    history: list[EpochStats]


def _dims_for(cfg: TrainConfig, dims: ModelDims | None) -> ModelDims:
    base = dims if dims is not None else ModelDims()
    return dataclasses.replace(base, dropout=cfg.dropout)


def train_system(system: str, train_corpus: Corpus, dev_corpus: Corpus,
                 cfg: TrainConfig, dims: ModelDims | None = None,
                 verbose: bool = False) -> TrainedSystem:
    """Fit encoders on the training split and train one named system."""
    stream_cfg = system_config(system)
    pipeline = FeaturePipeline().fit(train_corpus)
    model = build_model(stream_cfg, pipeline.vocab_sizes(), seed=cfg.seed,
                        dims=_dims_for(cfg, dims))
    train_data = build_dataset(pipeline, train_corpus, stream_cfg.streams)
    dev_data = build_dataset(pipeline, dev_corpus, stream_cfg.streams)
    history = fit(model, train_data, dev_data, cfg, verbose=verbose)
    return TrainedSystem(system.strip().upper(), model, pipeline, history)


def save_bundle(ts: TrainedSystem, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nn.save_checkpoint(directory / "model.ckpt", ts.model.state())
    ts.pipeline.save(directory)
    dims = dataclasses.asdict(ts.model.dims)
    dims["text_kernels"] = list(dims["text_kernels"])
    sidecar = {
        "system": ts.system,
        "streams": list(ts.model.cfg.streams),
        "dims": dims,
        "decoder_stats": {
            "mean": ts.pipeline.decoder_stats.mean.tolist(),
            "std": ts.pipeline.decoder_stats.std.tolist(),
        },
        "vocab_files": {"lexical": "lexical.vocab", "phonotactic": "phonotactic.vocab"},
    }
    (directory / "model.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (directory / "history.csv").write_text(history_to_csv(ts.history), encoding="utf-8")


def load_bundle(directory) -> TrainedSystem:
    """Rebuild a trained system from a bundle directory.

    The returned history is empty; it lives in history.csv for human
    consumption and is not needed for inference.
    """
    directory = Path(directory)
    sidecar_path = directory / "model.json"
    if not sidecar_path.exists():
        raise FileNotFoundError(f"{sidecar_path}: not a model bundle (model.json missing)")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    stats = DecoderStats(mean=np.asarray(sidecar["decoder_stats"]["mean"], dtype=np.float64),
                         std=np.asarray(sidecar["decoder_stats"]["std"], dtype=np.float64))
    pipeline = FeaturePipeline.load(directory, decoder_stats=stats)
    dims_dict = dict(sidecar["dims"])
    dims_dict["text_kernels"] = tuple(dims_dict["text_kernels"])
    dims = ModelDims(**dims_dict)
    model = build_model(StreamConfig(tuple(sidecar["streams"])),
                        pipeline.vocab_sizes(), seed=0, dims=dims)
    model.load_state(nn.load_checkpoint(directory / "model.ckpt"))
    return TrainedSystem(sidecar["system"], model, pipeline, history=[])


def _estimates_from(preds: np.ndarray, corpus: Corpus) -> list[WerEstimate]:
    """Pair clipped predictions with utterances and their reference WER.

    The reference comes from scoring ref against hyp when a reference
    transcript exists, falling back to a stored wer_target.
    """
    preds = np.clip(preds, _PRED_EPS, 1.0 - _PRED_EPS)
    estimates = []
    for utt, pred in zip(corpus, preds):
        if utt.ref_words is not None:
            reference = scorer.wer_utterance(utt.ref_words, utt.hyp_words)
        else:
            reference = utt.wer_target
        estimates.append(WerEstimate(utt.id, float(pred), utt.duration_s, reference))
    return estimates


def predict_corpus(ts: TrainedSystem, corpus: Corpus,
                   batch_size: int = 32) -> list[WerEstimate]:
    """Per-utterance WER estimates, with reference WER attached when known."""
    data = build_dataset(ts.pipeline, corpus, ts.model.cfg.streams,
                         require_targets=False)
    return _estimates_from(predict_dataset(ts.model, data, batch_size), corpus)


def evaluate_trained(ts: TrainedSystem, test_corpus: Corpus,
                     batch_size: int = 32) -> tuple[EvalReport, list[WerEstimate]]:
    """Predict on a reference-bearing corpus and compute the full report."""
    estimates = predict_corpus(ts, test_corpus, batch_size)
    report = evaluation.evaluate_system(ts.system, estimates, test_corpus)
    return report, estimates


def run_ablation(train_corpus: Corpus, dev_corpus: Corpus, test_corpus: Corpus,
                 cfg: TrainConfig, dims: ModelDims | None = None,
                 systems: Sequence[str] = tuple("ABCDEF"),
                 verbose: bool = False) -> list[tuple[TrainedSystem, EvalReport]]:
    """Train and evaluate each named system on shared encodings.

    The feature pipeline and the per-corpus encodings are computed once
    (all streams) and reused, so the audio is only processed one time.
    """
    pipeline = FeaturePipeline().fit(train_corpus)
    full_train = build_dataset(pipeline, train_corpus, ALL_STREAMS)
    full_dev = build_dataset(pipeline, dev_corpus, ALL_STREAMS)
    full_test = build_dataset(pipeline, test_corpus, ALL_STREAMS, require_targets=False)
    results = []
    for name in systems:
        stream_cfg = system_config(name)
        model = build_model(stream_cfg, pipeline.vocab_sizes(), seed=cfg.seed,
                            dims=_dims_for(cfg, dims))
        history = fit(model, full_train, full_dev, cfg, verbose=verbose)
        ts = TrainedSystem(name.strip().upper(), model, pipeline, history)
        preds = predict_dataset(model, full_test, cfg.batch_size)
        estimates = _estimates_from(preds, test_corpus)
        report = evaluation.evaluate_system(ts.system, estimates, test_corpus)
        results.append((ts, report))
    return results
