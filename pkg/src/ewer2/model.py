"""Stream subnetworks and the fused per-utterance WER regressor.

Four input streams feed a shared fusion head:

* decoder  — 4 summary features -> dense 64 relu -> dense 32 relu
* acoustic — MFCC (13, T) -> four conv1d layers -> global max pool -> 500
* lexical  — hypothesis word ids -> embedding -> parallel text convs -> 1536
* phonotactic — phone ids, same text-CNN shape -> 1536

Enabled stream outputs are concatenated (fixed canonical order) and passed
through dense 32 relu -> dense 1 sigmoid, so predictions live in (0, 1).
Any subset of streams can be enabled; the six named ablation systems are
exposed through :func:`system_config`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import dsp, nn
from .encoders import ALL_STREAMS, EncodedStreams

# acoustic conv stack: (kernel, stride) per layer, all relu, 500 filters each
ACOUSTIC_CONV_PLAN = ((5, 1), (7, 2), (1, 2), (1, 1))

DECODER_FEATURE_DIM = 4


@dataclass(frozen=True)
class StreamConfig:
    """Which input streams the model consumes (at least one)."""

    streams: tuple[str, ...]

    def __post_init__(self):
        unknown = [s for s in self.streams if s not in ALL_STREAMS]
        if unknown:
            raise ValueError(f"unknown streams {unknown}; valid names: {list(ALL_STREAMS)}")
        if len(set(self.streams)) != len(self.streams):
            raise ValueError(f"duplicate stream names in {self.streams}")
        if not self.streams:
            raise ValueError("at least one stream must be enabled")
        canonical = tuple(s for s in ALL_STREAMS if s in self.streams)
        object.__setattr__(self, "streams", canonical)

    def enabled(self, name: str) -> bool:
        return name in self.streams


# Ablation systems: which streams each named system uses.
SYSTEMS: dict[str, tuple[str, ...]] = {
    "A": ("decoder", "acoustic", "lexical"),
    "B": ("decoder", "acoustic", "lexical", "phonotactic"),
    "C": ("acoustic", "lexical"),
    "D": ("acoustic", "lexical", "phonotactic"),
    "E": ("acoustic",),
    "F": ("acoustic", "phonotactic"),
}


def system_config(name: str) -> StreamConfig:
    """StreamConfig for one of the named ablation systems A-F."""
    key = name.strip().upper()
    if key not in SYSTEMS:
        raise ValueError(f"unknown system {name!r}; choose one of {sorted(SYSTEMS)}")
    return StreamConfig(SYSTEMS[key])


@dataclass(frozen=True)
class ModelDims:
    """Layer widths. Defaults are the full-size regressor; ``tiny`` is for tests."""

    decoder_hidden: int = 64
    decoder_out: int = 32
    conv_filters: int = 500
    embed_dim: int = 256
    text_filters: int = 512
    text_kernels: tuple[int, ...] = (3, 4, 5)
    fusion_hidden: int = 32
    dropout: float = 0.2

    @classmethod
    def tiny(cls) -> "ModelDims":
        return cls(decoder_hidden=8, decoder_out=4, conv_filters=6,
                   embed_dim=8, text_filters=4, fusion_hidden=8)

    def stream_width(self, name: str) -> int:
        if name == "decoder":
            return self.decoder_out
        if name == "acoustic":
            return self.conv_filters
        if name in ("lexical", "phonotactic"):
            return self.text_filters * len(self.text_kernels)
        raise ValueError(f"unknown stream {name!r}")


class _TextCNN(nn.Layer):
    """Embedding -> parallel conv1d branches -> global max pool -> concat."""

    def __init__(self, n_vocab: int, dims: ModelDims, *, rng, dtype):
        self.embed = nn.Embedding(n_vocab, dims.embed_dim, rng=rng, dtype=dtype)
        self.branches = [
            (nn.Conv1d(dims.embed_dim, dims.text_filters, k, 1, "relu", rng=rng, dtype=dtype),
             nn.GlobalMaxPool())
            for k in dims.text_kernels
        ]

    def params(self):
        out = [("embed.table", self.embed.table)]
        for i, (conv, _) in enumerate(self.branches):
            out.append((f"conv{i}.W", conv.W))
            out.append((f"conv{i}.b", conv.b))
        return out

    def forward(self, ids, train: bool = False):
        emb = self.embed.forward(ids, train=train)
        x = np.ascontiguousarray(emb.transpose(0, 2, 1))  # (B, E, L)
        pooled = [pool.forward(conv.forward(x, train=train), train=train)
                  for conv, pool in self.branches]
        return np.concatenate(pooled, axis=1)

    def backward(self, dy):
        width = self.branches[0][0].c_out
        dx = None
        for i, (conv, pool) in enumerate(self.branches):
            d = conv.backward(pool.backward(dy[:, i * width:(i + 1) * width]))
            dx = d if dx is None else dx + d
        self.embed.backward(dx.transpose(0, 2, 1))
        return None


class EwerModel:
    """Fused multi-stream WER regressor.

    Only the enabled streams own parameters; the fusion head's input
    width is the sum of the enabled stream output widths. Initialization
    and dropout draw from separate child generators of ``seed``, so the
    same (config, dims, seed) triple always yields identical parameters.
    """

    def __init__(self, cfg: StreamConfig, vocab_sizes: Mapping[str, int] | None = None,
                 seed: int = 0, dims: ModelDims | None = None, dtype=np.float32):
        self.cfg = cfg
        self.dims = dims if dims is not None else ModelDims()
        self.dtype = dtype
        init_ss, drop_ss = np.random.SeedSequence(seed).spawn(2)
        init_rng = np.random.default_rng(init_ss)
        self._dropout_rng = np.random.default_rng(drop_ss)
        d = self.dims

        self.streams: dict[str, nn.Layer] = {}
        if cfg.enabled("decoder"):
            self.streams["decoder"] = nn.Chain([
                nn.Dense(DECODER_FEATURE_DIM, d.decoder_hidden, "relu", rng=init_rng, dtype=dtype),
                nn.Dropout(d.dropout, rng=self._dropout_rng),
                nn.Dense(d.decoder_hidden, d.decoder_out, "relu", rng=init_rng, dtype=dtype),
                nn.Dropout(d.dropout, rng=self._dropout_rng),
            ])
        if cfg.enabled("acoustic"):
            layers: list[nn.Layer] = []
            c_in = dsp.N_MFCC
            for kernel, stride in ACOUSTIC_CONV_PLAN:
                layers.append(nn.Conv1d(c_in, d.conv_filters, kernel, stride, "relu",
                                        rng=init_rng, dtype=dtype))
                c_in = d.conv_filters
            layers.append(nn.GlobalMaxPool())
            self.streams["acoustic"] = nn.Chain(layers)
        for name in ("lexical", "phonotactic"):
            if not cfg.enabled(name):
                continue
            if vocab_sizes is None or name not in vocab_sizes:
                raise ValueError(f"vocab size required for enabled stream {name!r}")
            if vocab_sizes[name] < 2:
                raise ValueError(f"{name} vocab size must be >= 2, got {vocab_sizes[name]}")
            self.streams[name] = _TextCNN(vocab_sizes[name], d, rng=init_rng, dtype=dtype)

        self.fusion = nn.Chain([
            nn.Dense(self.fusion_input_width, d.fusion_hidden, "relu", rng=init_rng, dtype=dtype),
            nn.Dropout(d.dropout, rng=self._dropout_rng),
            nn.Dense(d.fusion_hidden, 1, "sigmoid", rng=init_rng, dtype=dtype),
        ])
        self._stream_widths: list[int] | None = None

    @property
    def fusion_input_width(self) -> int:
        return sum(self.dims.stream_width(s) for s in self.cfg.streams)

    def forward(self, batch: Mapping[str, np.ndarray], train: bool = False) -> np.ndarray:
        """Run all enabled streams plus fusion; returns (B, 1) predictions."""
        outs = []
        widths = []
        for name in self.cfg.streams:
            if name not in batch:
                raise ValueError(f"batch is missing enabled stream {name!r}")
            y = self.streams[name].forward(batch[name], train=train)
            outs.append(y)
            widths.append(y.shape[1])
        self._stream_widths = widths
        fused = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)
        return self.fusion.forward(fused, train=train)

    def backward(self, dpred: np.ndarray) -> None:
        if self._stream_widths is None:
            raise RuntimeError("backward called before forward")
        dfused = self.fusion.backward(dpred)
        offset = 0
        for name, width in zip(self.cfg.streams, self._stream_widths):
            self.streams[name].backward(dfused[:, offset:offset + width])
            offset += width

    def params(self) -> list[tuple[str, nn.Tensor]]:
        out: list[tuple[str, nn.Tensor]] = []
        for name in self.cfg.streams:
            out.extend((f"{name}.{p}", t) for p, t in self.streams[name].params())
        out.extend((f"fusion.{p}", t) for p, t in self.fusion.params())
        return out

    def tensors(self) -> list[nn.Tensor]:
        return [t for _, t in self.params()]

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors())

    def state(self) -> list[tuple[str, np.ndarray]]:
        return [(name, t.data) for name, t in self.params()]

    def load_state(self, records: Sequence[tuple[str, np.ndarray]]) -> None:
        got = dict(records)
        have = dict(self.params())
        if set(got) != set(have):
            missing = sorted(set(have) - set(got))
            extra = sorted(set(got) - set(have))
            raise ValueError(f"parameter name mismatch: missing {missing}, unexpected {extra}")
        for name, tensor in have.items():
            arr = got[name]
            if tuple(arr.shape) != tensor.shape:
                raise ValueError(f"shape mismatch for {name}: file {arr.shape}, model {tensor.shape}")
            tensor.data[...] = arr


def build_model(cfg: StreamConfig, vocab_sizes: Mapping[str, int] | None = None,
                seed: int = 0, dims: ModelDims | None = None, dtype=np.float32) -> EwerModel:
    """Construct a seeded regressor for the given stream subset."""
    return EwerModel(cfg, vocab_sizes=vocab_sizes, seed=seed, dims=dims, dtype=dtype)


def stack_streams(items: Sequence[EncodedStreams], cfg: StreamConfig,
                  dtype=np.float32) -> dict[str, np.ndarray]:
    """Assemble per-utterance encodings into batch arrays.

    Acoustic matrices are zero-padded on the time axis to the batch
    maximum and transposed to (B, 13, T); token id streams stack to
    (B, L) int arrays; decoder features to (B, 4) floats. Raises if an
    enabled stream is absent from any item; extra streams are ignored.
    """
    if not items:
        raise ValueError("cannot stack an empty batch")
    batch: dict[str, np.ndarray] = {}
    for name in cfg.streams:
        values = []
        for item in items:
            v = getattr(item, name)
            if v is None:
                raise ValueError(f"encoded utterance is missing enabled stream {name!r}")
            values.append(v)
        if name == "acoustic":
            t_max = max(v.shape[0] for v in values)
            arr = np.zeros((len(values), dsp.N_MFCC, t_max), dtype=dtype)
            for i, v in enumerate(values):
                arr[i, :, : v.shape[0]] = v.T
            batch[name] = arr
        elif name == "decoder":
            batch[name] = np.stack(values).astype(dtype)
        else:
            batch[name] = np.stack(values)
    return batch


def predict_wer(model: EwerModel, items: Sequence[EncodedStreams]) -> np.ndarray:
    """Per-utterance WER estimates in (0, 1) for a batch, dropout disabled."""
    batch = stack_streams(items, model.cfg, dtype=model.dtype)
    return model.forward(batch, train=False)[:, 0]
