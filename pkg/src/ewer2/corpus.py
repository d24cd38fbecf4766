"""Corpus data model, manifest I/O, splits, and a synthetic generator.

A corpus is an ordered list of utterances. Manifests are UTF-8 JSON
lines, one utterance per line, with a fixed field order so that
save -> load -> save is byte-identical:

    {"id": ..., "audio": ..., "duration_s": ..., "hyp": ...,
     "phonemes": ..., "decoder_feats": [...], "ref": ..., "wer_target": ...}

``hyp``, ``phonemes`` and ``ref`` are space-joined token strings;
``ref`` and ``wer_target`` are omitted when absent.

The synthetic generator stands in for real broadcast corpora: it draws
reference sentences from a toy syllabic vocabulary, corrupts them at a
per-utterance error level, derives phoneme strings through a fixed
word-to-phone lexicon, renders each phone as a short tone so the audio
carries the content, and simulates decoder statistics. Everything is
driven by one seeded generator, so equal (config, seed) reproduces the
corpus bit for bit, audio files included.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import dsp, scorer

__all__ = [
    "ManifestError",
    "Utterance",
    "Corpus",
    "SynthConfig",
    "load_manifest",
    "save_manifest",
    "generate_synthetic_corpus",
    "split_corpus",
    "PHONES",
    "word_phones",
]


class ManifestError(ValueError):
    """A manifest line failed to parse or validate."""


@dataclass
class Utterance:
    """One audio segment with its recognizer outputs and metadata.

    ``decoder_feats`` holds exactly four values: total frame count,
    average log-likelihood, total acoustic-model likelihood and total
    language-model likelihood. ``ref_words`` and ``wer_target`` are only
    present when a reference transcript exists; ``wer_target`` is stored
    clamped to [0, 1].
    """

    id: str
    audio_path: str
    duration_s: float
    hyp_words: list[str]
    phonemes: list[str]
    decoder_feats: list[float]
    ref_words: list[str] | None = None
    wer_target: float | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("utterance id must be non-empty")
        if not self.duration_s > 0:
            raise ValueError(f"{self.id}: duration_s must be positive, got {self.duration_s}")
        if len(self.decoder_feats) != 4:
            raise ValueError(f"{self.id}: decoder_feats must have 4 entries")
        if self.wer_target is not None and not 0.0 <= self.wer_target <= 1.0:
            raise ValueError(f"{self.id}: wer_target must lie in [0, 1], got {self.wer_target}")


@dataclass
class Corpus:
    """Named, ordered collection of utterances with unique ids.

    The name is a label (train/dev/test) and does not take part in
    equality; two corpora are equal when their utterance lists are.
    """

    name: str = field(compare=False)
    utterances: list[Utterance]

    def __post_init__(self) -> None:
        seen = set()
        for utt in self.utterances:
            if utt.id in seen:
                raise ValueError(f"duplicate utterance id {utt.id!r}")
            seen.add(utt.id)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self.utterances)


_MANIFEST_REQUIRED = ("id", "audio", "duration_s", "hyp", "phonemes", "decoder_feats")


def _tokens(value: str, what: str, context: str) -> list[str]:
    if not isinstance(value, str):
        raise ManifestError(f"{context}: field {what!r} must be a string")
    return value.split()


def load_manifest(path) -> Corpus:
    """Read a manifest file into a Corpus, preserving line order.

    Raises:
        ManifestError: malformed JSON, missing or ill-typed fields, or a
            duplicate id; the message names the offending line.
    """
    path = Path(path)
    utterances: list[Utterance] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            context = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{context}: malformed manifest line ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise ManifestError(f"{context}: expected a JSON object")
            for key in _MANIFEST_REQUIRED:
                if key not in record:
                    raise ManifestError(f"{context}: missing required field {key!r}")
            feats = record["decoder_feats"]
            if not isinstance(feats, list) or len(feats) != 4:
                raise ManifestError(f"{context}: decoder_feats must have 4 entries")
            try:
                utt = Utterance(
                    id=str(record["id"]),
                    audio_path=str(record["audio"]),
                    duration_s=float(record["duration_s"]),
                    hyp_words=_tokens(record["hyp"], "hyp", context),
                    phonemes=_tokens(record["phonemes"], "phonemes", context),
                    decoder_feats=[float(x) for x in feats],
                    ref_words=(
                        _tokens(record["ref"], "ref", context) if "ref" in record else None
                    ),
                    wer_target=(
                        float(record["wer_target"]) if "wer_target" in record else None
                    ),
                )
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ManifestError):
                    raise
                raise ManifestError(f"{context}: {exc}") from exc
            if utt.id in seen:
                raise ManifestError(f"{context}: duplicate utterance id {utt.id!r}")
            seen.add(utt.id)
            utterances.append(utt)
    return Corpus(name=path.stem, utterances=utterances)


def _join(tokens: Sequence[str], what: str, utt_id: str) -> str:
    for tok in tokens:
        if not tok or any(ch.isspace() for ch in tok):
            raise ValueError(f"{utt_id}: {what} token {tok!r} is empty or contains whitespace")
    return " ".join(tokens)


def manifest_line(utt: Utterance) -> str:
    """Canonical single-line JSON encoding of one utterance."""
    record: dict = {
        "id": utt.id,
        "audio": utt.audio_path,
        "duration_s": utt.duration_s,
        "hyp": _join(utt.hyp_words, "hyp", utt.id),
        "phonemes": _join(utt.phonemes, "phonemes", utt.id),
        "decoder_feats": [float(x) for x in utt.decoder_feats],
    }
    if utt.ref_words is not None:
        record["ref"] = _join(utt.ref_words, "ref", utt.id)
    if utt.wer_target is not None:
        record["wer_target"] = float(utt.wer_target)
    return json.dumps(record, ensure_ascii=False)


def save_manifest(corpus: Corpus, path) -> None:
    """Write a corpus as a JSON-lines manifest in input order."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for utt in corpus:
            fh.write(manifest_line(utt) + "\n")


# --------------------------------------------------------------------
# Synthetic corpus generation
# --------------------------------------------------------------------

_CONSONANTS = "bdfgklmnprst"
_VOWELS = "aeiou"
_SYLLABLES = [c + v for c in _CONSONANTS for v in _VOWELS]

# Each letter is a phone; every phone gets its own tone frequency so the
# rendered audio carries the phoneme content.
PHONES = list(_CONSONANTS) + list(_VOWELS)
_PHONE_INDEX = {p: i for i, p in enumerate(PHONES)}
PHONE_FREQS_HZ = [300.0 + 150.0 * i for i in range(len(PHONES))]

PHONE_DURATION_S = 0.08
_PHONE_SAMPLES = int(PHONE_DURATION_S * dsp.SAMPLE_RATE)
_TONE_AMP = 0.3
_NOISE_AMP = 0.01


def _word_for_index(i: int) -> str:
    return _SYLLABLES[i % len(_SYLLABLES)] + _SYLLABLES[(i // len(_SYLLABLES)) % len(_SYLLABLES)]


def toy_vocabulary(size: int) -> list[str]:
    """The first ``size`` words of the fixed two-syllable toy vocabulary."""
    return [_word_for_index(i) for i in range(size)]


def word_phones(word: str) -> list[str]:
    """Fixed word-to-phone lexicon: one phone per letter."""
    return list(word)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic corpus generator.

    Per-utterance error levels are drawn uniformly from
    [error_low, error_high]; each reference word is then corrupted with
    that probability (substitution-heavy, the usual recognizer error
    profile). Phone noise is applied independently per phone: words the
    recognizer got wrong sit in exactly the audio regions a phone
    recognizer also struggles with, so their phones garble at the high
    phone_noise_hot rate, while correct words degrade only at the mild
    ambient rate phone_noise_base + phone_noise_scale * level.
    """

    n_utterances: int
    audio_dir: str
    vocab_size: int = 50
    min_words: int = 2
    max_words: int = 20
    error_low: float = 0.0
    error_high: float = 0.8
    phone_noise_base: float = 0.02
    phone_noise_scale: float = 0.1
    phone_noise_hot: float = 0.7
    name: str = "synthetic"

    def validate(self) -> None:
        if self.n_utterances < 0:
            raise ValueError(f"n_utterances must be >= 0, got {self.n_utterances}")
        if not 2 <= self.vocab_size <= len(_SYLLABLES) ** 2:
            raise ValueError(
                f"vocab_size must lie in [2, {len(_SYLLABLES) ** 2}], got {self.vocab_size}"
            )
        if not 1 <= self.min_words <= self.max_words:
            raise ValueError(
                f"invalid length range [{self.min_words}, {self.max_words}]"
            )
        if not 0.0 <= self.error_low <= self.error_high <= 1.0:
            raise ValueError(
                f"invalid error level range [{self.error_low}, {self.error_high}]"
            )
        max_phone_noise = self.phone_noise_base + self.phone_noise_scale * self.error_high
        if not 0.0 <= max_phone_noise <= 1.0:
            raise ValueError("phone noise rate must stay within [0, 1]")
        if not 0.0 <= self.phone_noise_hot <= 1.0:
            raise ValueError(
                f"phone_noise_hot must lie in [0, 1], got {self.phone_noise_hot}"
            )


def _render_audio(phonemes: Sequence[str], rng: np.random.Generator) -> np.ndarray:
    """One tone+noise segment per phone; a lone noise segment if empty."""
    n_segments = max(1, len(phonemes))
    t = np.arange(_PHONE_SAMPLES) / dsp.SAMPLE_RATE
    signal = rng.standard_normal(n_segments * _PHONE_SAMPLES) * _NOISE_AMP
    for k, phone in enumerate(phonemes):
        freq = PHONE_FREQS_HZ[_PHONE_INDEX[phone]]
        start = k * _PHONE_SAMPLES
        signal[start : start + _PHONE_SAMPLES] += _TONE_AMP * np.sin(2.0 * np.pi * freq * t)
    return signal


# Corruption type mix. Substitutions dominate, as they do in real
# recognizer output; the rest splits evenly between deletions and
# insertions.
_P_SUBSTITUTE = 0.7
_P_DELETE = 0.15


def _corrupt(ref_idx: list[int], level: float, vocab_size: int,
             rng: np.random.Generator) -> tuple[list[int], list[bool]]:
    """Corrupt a reference word sequence at the given error level.

    Returns (hyp_idx, corrupted) where corrupted[i] marks hypothesis
    word i as a corruption artifact (a substitution product or an
    inserted word). Deletions leave no hypothesis word behind.
    """
    hyp_idx: list[int] = []
    corrupted: list[bool] = []
    for idx in ref_idx:
        if rng.random() >= level:
            hyp_idx.append(idx)
            corrupted.append(False)
            continue
        u = rng.random()
        if u < _P_SUBSTITUTE:  # substitution with a different word
            new = int(rng.integers(vocab_size - 1))
            hyp_idx.append(new + 1 if new >= idx else new)
            corrupted.append(True)
        elif u < _P_SUBSTITUTE + _P_DELETE:  # deletion
            continue
        else:  # insertion after the kept word
            hyp_idx.append(idx)
            corrupted.append(False)
            hyp_idx.append(int(rng.integers(vocab_size)))
            corrupted.append(True)
    return hyp_idx, corrupted


def generate_synthetic_corpus(cfg: SynthConfig, seed: int) -> Corpus:
    """Generate a seeded synthetic corpus and write its audio files.

    Every utterance carries a reference, so ``wer_target`` is always
    present (the utterance WER clamped to [0, 1]). Decoder features are
    simulated: frame count at a 10 ms shift, an average log-likelihood
    negatively correlated with the injected error level, and AM/LM
    totals scaled from it.
    """
    cfg.validate()
    audio_dir = Path(cfg.audio_dir)
    audio_dir.mkdir(parents=True, exist_ok=True)
    vocab = toy_vocabulary(cfg.vocab_size)
    zipf = 1.0 / np.arange(1, cfg.vocab_size + 1)
    zipf /= zipf.sum()
    rng = np.random.default_rng(seed)

    utterances: list[Utterance] = []
    for i in range(cfg.n_utterances):
        utt_id = f"{cfg.name}-{i:06d}"
        level = float(rng.uniform(cfg.error_low, cfg.error_high))
        n_words = int(rng.integers(cfg.min_words, cfg.max_words + 1))
        ref_idx = [int(j) for j in rng.choice(cfg.vocab_size, size=n_words, p=zipf)]
        hyp_idx, corrupted = _corrupt(ref_idx, level, cfg.vocab_size, rng)
        ref_words = [vocab[j] for j in ref_idx]
        hyp_words = [vocab[j] for j in hyp_idx]

        ambient_noise = cfg.phone_noise_base + cfg.phone_noise_scale * level
        phonemes: list[str] = []
        for word, is_artifact in zip(hyp_words, corrupted):
            phone_noise = cfg.phone_noise_hot if is_artifact else ambient_noise
            for phone in word_phones(word):
                if rng.random() < phone_noise:
                    alt = int(rng.integers(len(PHONES) - 1))
                    orig = _PHONE_INDEX[phone]
                    phone = PHONES[alt + 1 if alt >= orig else alt]
                phonemes.append(phone)

        signal = _render_audio(phonemes, rng)
        audio_path = audio_dir / f"{utt_id}.wav"
        dsp.save_wav(audio_path, signal)
        duration_s = len(signal) / dsp.SAMPLE_RATE

        frames = float(round(duration_s * 100))
        avg_ll = -1.5 - 2.5 * level + 0.2 * rng.standard_normal()
        am_total = 0.6 * avg_ll * frames + rng.standard_normal()
        lm_total = 0.4 * avg_ll * frames + rng.standard_normal()

        raw_wer = scorer.wer_utterance(ref_words, hyp_words)
        utterances.append(
            Utterance(
                id=utt_id,
                audio_path=str(audio_path),
                duration_s=duration_s,
                hyp_words=hyp_words,
                phonemes=phonemes,
                decoder_feats=[frames, avg_ll, am_total, lm_total],
                ref_words=ref_words,
                wer_target=min(1.0, max(0.0, raw_wer)),
            )
        )
    return Corpus(name=cfg.name, utterances=utterances)


def split_corpus(corpus: Corpus, fractions: Sequence[float], seed: int) -> list[Corpus]:
    """Partition a corpus into disjoint subsets with the given fractions.

    Utterances are shuffled deterministically under ``seed``, then
    assigned by cumulative-floor boundaries so the subset sizes are a
    deterministic function of the fractions. Each subset preserves the
    original manifest order.
    """
    if len(fractions) == 0:
        raise ValueError("need at least one split fraction")
    if any(f <= 0 for f in fractions):
        raise ValueError(f"split fractions must be positive, got {list(fractions)}")
    if abs(math.fsum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {math.fsum(fractions)}")

    n = len(corpus)
    order = np.random.default_rng(seed).permutation(n)
    boundaries = [int(math.floor(c * n)) for c in np.cumsum(fractions)]
    boundaries[-1] = n
    parts: list[Corpus] = []
    start = 0
    for k, stop in enumerate(boundaries):
        picked = sorted(order[start:stop])
        parts.append(
            Corpus(
                name=f"{corpus.name}-{k}",
                utterances=[replace(corpus.utterances[j]) for j in picked],
            )
        )
        start = stop
    return parts
