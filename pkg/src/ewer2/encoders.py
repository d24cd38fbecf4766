"""Token and decoder-feature encoders.

Words and phonemes become fixed-length integer vectors (index 0 is
padding, index 1 unknown); decoder features are z-scored with statistics
fitted on the training split. ``FeaturePipeline`` bundles the fitted
vocabularies and statistics and produces the per-utterance
``EncodedStreams`` consumed by the model.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dsp
from .corpus import Corpus, Utterance

PAD_INDEX = 0
UNK_INDEX = 1
LEXICAL_LEN = 100
PHONOTACTIC_LEN = 200
STD_FLOOR = 1e-8

__all__ = [
    "PAD_INDEX",
    "UNK_INDEX",
    "LEXICAL_LEN",
    "PHONOTACTIC_LEN",
    "Vocab",
    "DecoderStats",
    "EncodedStreams",
    "FeaturePipeline",
    "build_vocab",
    "encode_tokens",
]


class Vocab:
    """Immutable token-to-index map with reserved pad/unk slots."""

    def __init__(self, token_to_index: dict[str, int]):
        for token, index in token_to_index.items():
            if index < 2:
                raise ValueError(f"index {index} for {token!r} collides with pad/unk")
        self._map = dict(token_to_index)

    def __len__(self) -> int:
        # pad and unk count towards the embedding table size
        return len(self._map) + 2

    def __contains__(self, token: str) -> bool:
        return token in self._map

    def index(self, token: str) -> int:
        return self._map.get(token, UNK_INDEX)

    def items(self):
        return self._map.items()

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._map == other._map

    def save(self, path) -> None:
        """Write as token<TAB>index lines, sorted by index."""
        with open(path, "w", encoding="utf-8") as fh:
            for token, index in sorted(self._map.items(), key=lambda kv: kv[1]):
                fh.write(f"{token}\t{index}\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        mapping: dict[str, int] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                token, _, index = line.rpartition("\t")
                mapping[token] = int(index)
        return cls(mapping)


def build_vocab(corpus: Corpus, which: str) -> Vocab:
    """Build a vocabulary over hypothesis words or phonemes.

    Tokens are ranked by (frequency desc, token asc) and indexed from 2,
    which makes the mapping a pure function of the corpus.
    """
    if which not in ("lexical", "phonotactic"):
        raise ValueError(f"which must be 'lexical' or 'phonotactic', got {which!r}")
    if len(corpus) == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts: dict[str, int] = {}
    for utt in corpus:
        tokens = utt.hyp_words if which == "lexical" else utt.phonemes
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab({tok: i + 2 for i, (tok, _) in enumerate(ranked)})


def encode_tokens(tokens: Sequence[str], vocab: Vocab, max_len: int) -> np.ndarray:
    """Map tokens to indices, keeping the first ``max_len`` and zero-padding."""
    out = np.zeros(max_len, dtype=np.int64)
    for i, tok in enumerate(tokens[:max_len]):
        out[i] = vocab.index(tok)
    return out


@dataclass(frozen=True)
class DecoderStats:
    """Per-dimension mean/std of decoder features on the training split."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, corpus: Corpus) -> "DecoderStats":
        if len(corpus) == 0:
            raise ValueError("cannot fit decoder statistics on an empty corpus")
        feats = np.array([utt.decoder_feats for utt in corpus], dtype=np.float64)
        return cls(mean=feats.mean(axis=0), std=feats.std(axis=0))

    def normalize(self, feats: Sequence[float]) -> np.ndarray:
        x = np.asarray(feats, dtype=np.float64)
        if x.shape != (4,):
            raise ValueError(f"decoder_feats must have 4 entries, got shape {x.shape}")
        return (x - self.mean) / np.maximum(self.std, STD_FLOOR)


@dataclass
class EncodedStreams:
    """Model-ready streams for one utterance; unused streams stay None."""

    lexical: np.ndarray | None = None       # (100,) int
    phonotactic: np.ndarray | None = None   # (200,) int
    decoder: np.ndarray | None = None       # (4,) float, z-scored
    acoustic: np.ndarray | None = None      # (T, 13) float


ALL_STREAMS = ("decoder", "acoustic", "lexical", "phonotactic")


class FeaturePipeline:
    """Fitted encoders for every stream.

    Fit on the training corpus only, then reuse for dev/test encoding.
    ``streams`` limits the work done per utterance (skipping audio reads
    and MFCC extraction when the acoustic stream is not wanted).
    """

    def __init__(
        self,
        lexical_vocab: Vocab | None = None,
        phonotactic_vocab: Vocab | None = None,
        decoder_stats: DecoderStats | None = None,
    ):
        self.lexical_vocab = lexical_vocab
        self.phonotactic_vocab = phonotactic_vocab
        self.decoder_stats = decoder_stats

    def fit(self, train: Corpus) -> "FeaturePipeline":
        self.lexical_vocab = build_vocab(train, "lexical")
        self.phonotactic_vocab = build_vocab(train, "phonotactic")
        self.decoder_stats = DecoderStats.fit(train)
        return self

    def vocab_sizes(self) -> dict[str, int]:
        self._require_fitted()
        return {
            "lexical": len(self.lexical_vocab),
            "phonotactic": len(self.phonotactic_vocab),
        }

    def _require_fitted(self) -> None:
        if self.lexical_vocab is None or self.phonotactic_vocab is None or self.decoder_stats is None:
            raise ValueError("feature pipeline is not fitted; call fit() on the training corpus")

    def encode(
        self,
        utt: Utterance,
        streams: Sequence[str] = ALL_STREAMS,
        acoustic: np.ndarray | None = None,
    ) -> EncodedStreams:
        """Encode one utterance.

        ``acoustic`` may carry a precomputed (T, 13) MFCC matrix;
        otherwise the WAV referenced by the utterance is read and
        processed when the acoustic stream is requested.
        """
        self._require_fitted()
        out = EncodedStreams()
        if "lexical" in streams:
            out.lexical = encode_tokens(utt.hyp_words, self.lexical_vocab, LEXICAL_LEN)
        if "phonotactic" in streams:
            out.phonotactic = encode_tokens(utt.phonemes, self.phonotactic_vocab, PHONOTACTIC_LEN)
        if "decoder" in streams:
            out.decoder = self.decoder_stats.normalize(utt.decoder_feats)
        if "acoustic" in streams:
            if acoustic is None:
                acoustic = dsp.compute_mfcc(dsp.load_wav(utt.audio_path))
            out.acoustic = acoustic
        return out

    def save(self, directory) -> None:
        self._require_fitted()
        directory = Path(directory)
        self.lexical_vocab.save(directory / "lexical.vocab")
        self.phonotactic_vocab.save(directory / "phonotactic.vocab")

    @classmethod
    def load(cls, directory, decoder_stats: DecoderStats) -> "FeaturePipeline":
        directory = Path(directory)
        return cls(
            lexical_vocab=Vocab.load(directory / "lexical.vocab"),
            phonotactic_vocab=Vocab.load(directory / "phonotactic.vocab"),
            decoder_stats=decoder_stats,
        )
