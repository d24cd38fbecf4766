"""Reference-free per-utterance WER estimation toolkit.

Scores hypothesis quality without transcripts by regressing word error
rate from four input streams: decoder statistics, MFCC acoustics, the
hypothesis word sequence, and a phone sequence. Includes a reference
scorer, an MFCC front-end, a small numpy training stack, and a CLI.
"""

from .corpus import Corpus, SynthConfig, Utterance, generate_synthetic_corpus, load_manifest, save_manifest
from .evaluation import EvalReport, WerEstimate, cumulative_curve, overall_wer, pearson, rmse
from .model import EwerModel, ModelDims, StreamConfig, build_model, predict_wer, system_config
from .scorer import AlignmentCounts, align, corpus_wer, wer_utterance
from .trainer import TrainConfig, fit
from .workflow import TrainedSystem, load_bundle, run_ablation, save_bundle, train_system

__version__ = "0.1.0"

__all__ = [
    "AlignmentCounts",
    "Corpus",
    "EvalReport",
    "EwerModel",
    "ModelDims",
    "StreamConfig",
    "SynthConfig",
    "TrainConfig",
    "TrainedSystem",
    "Utterance",
    "WerEstimate",
    "align",
    "build_model",
    "corpus_wer",
    "cumulative_curve",
    "fit",
    "generate_synthetic_corpus",
    "load_bundle",
    "load_manifest",
    "overall_wer",
    "pearson",
    "predict_wer",
    "rmse",
    "run_ablation",
    "save_bundle",
    "save_manifest",
    "system_config",
    "train_system",
    "wer_utterance",
    "__version__",
]
