"""Estimator evaluation: correlation, RMSE, overall WER, cumulative curve.

Per-sentence quality is summarized by the sample Pearson correlation and
RMSE between predicted and (clamped) reference WER. Corpus-level quality
uses the duration-weighted overall WER sum(w_i * d_i) / sum(d_i); the
word-count-weighted aggregate from the scorer is reported alongside it
because the two weightings genuinely differ.

Everything here is a pure function over immutable inputs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import scorer
from .corpus import Corpus


@dataclass(frozen=True)
class WerEstimate:
    """One utterance's predicted WER with its duration weight."""

    utt_id: str
    predicted: float
    duration_s: float
    reference_wer: float | None = None

    def __post_init__(self):
        if not 0.0 < self.predicted < 1.0:
            raise ValueError(f"predicted WER must lie in (0, 1), got {self.predicted}")
        if self.duration_s <= 0:
            raise ValueError(f"duration must be positive, got {self.duration_s}")


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient.

    Raises ValueError when either input is constant (the correlation is
    undefined) or the lengths differ / are below 2.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 1 or ya.ndim != 1 or xa.shape != ya.shape:
        raise ValueError(f"pearson needs two equal-length vectors, got {xa.shape} and {ya.shape}")
    if xa.size < 2:
        raise ValueError("pearson needs at least two points")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    sx = np.sqrt(np.sum(xc * xc))
    sy = np.sqrt(np.sum(yc * yc))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("undefined correlation: constant input")
    r = float(np.sum(xc * yc) / (sx * sy))
    return max(-1.0, min(1.0, r))


def rmse(pred: Sequence[float], target: Sequence[float]) -> float:
    pa = np.asarray(pred, dtype=np.float64)
    ta = np.asarray(target, dtype=np.float64)
    if pa.shape != ta.shape or pa.ndim != 1:
        raise ValueError(f"rmse needs two equal-length vectors, got {pa.shape} and {ta.shape}")
    if pa.size == 0:
        raise ValueError("rmse of empty vectors is undefined")
    return float(np.sqrt(np.mean((pa - ta) ** 2)))


def overall_wer(estimates: Sequence[WerEstimate]) -> float:
    """Duration-weighted mean of per-utterance WER estimates."""
    if not estimates:
        raise ValueError("overall WER of an empty estimate list is undefined")
    num = 0.0
    den = 0.0
    for e in estimates:
        num += e.predicted * e.duration_s
        den += e.duration_s
    return num / den


def cumulative_curve(estimates: Sequence[WerEstimate]) -> list[tuple[float, float]]:
    """Running overall WER as utterances accumulate.

    Point k is (elapsed hours, overall WER of the first k estimates);
    the accumulation order matches :func:`overall_wer` exactly, so the
    final point equals the whole-set overall WER bit for bit.
    """
    if not estimates:
        raise ValueError("cumulative curve of an empty estimate list is undefined")
    num = 0.0
    den = 0.0
    points = []
    for e in estimates:
        num += e.predicted * e.duration_s
        den += e.duration_s
        points.append((den / 3600.0, num / den))
    return points


@dataclass(frozen=True)
class EvalReport:
    """Per-sentence and corpus-level quality of one estimator run."""

    system: str
    n_utterances: int
    pearson_r: float
    rmse: float
    estimated_overall_wer: float
    true_overall_wer: float
    corpus_wer: float

    def to_text(self) -> str:
        lines = [
            f"system {self.system}: {self.n_utterances} utterances",
            f"  per-sentence pearson  {self.pearson_r:8.4f}",
            f"  per-sentence rmse     {self.rmse:8.4f}",
            f"  estimated overall WER {self.estimated_overall_wer:8.4f}",
            f"  true overall WER      {self.true_overall_wer:8.4f}  (duration-weighted)",
            f"  corpus WER            {self.corpus_wer:8.4f}  (word-count-weighted)",
        ]
        return "\n".join(lines)


REPORT_CSV_HEADER = "system,pearson,rmse,overall_wer"


def reports_to_csv(reports: Sequence[EvalReport]) -> str:
    """Table-shaped CSV, one row per system: pearson, RMSE, overall WER."""
    out = io.StringIO()
    out.write(REPORT_CSV_HEADER + "\n")
    for r in reports:
        out.write(f"{r.system},{r.pearson_r:.6f},{r.rmse:.6f},{r.estimated_overall_wer:.6f}\n")
    return out.getvalue()


def evaluate_predictions(system: str, estimates: Sequence[WerEstimate]) -> EvalReport:
    """Score predictions against per-estimate reference WERs.

    Every estimate must carry ``reference_wer``; per-sentence metrics
    use the reference clamped to [0, 1] (the estimator's output space).
    """
    if not estimates:
        raise ValueError("cannot evaluate an empty estimate list")
    missing = [e.utt_id for e in estimates if e.reference_wer is None]
    if missing:
        raise ValueError(f"estimates without reference WER: {missing[:5]}")
    pred = [e.predicted for e in estimates]
    true_clamped = [min(1.0, max(0.0, e.reference_wer)) for e in estimates]
    # same left-to-right fold as overall_wer, applied to the true values
    num = 0.0
    den = 0.0
    for e, t in zip(estimates, true_clamped):
        num += t * e.duration_s
        den += e.duration_s
    # corpus_wer (word-count weighting) needs the raw token pairs and is
    # filled in by evaluate_system; prediction-only callers get NaN there.
    return EvalReport(
        system=system,
        n_utterances=len(estimates),
        pearson_r=pearson(pred, true_clamped),
        rmse=rmse(pred, true_clamped),
        estimated_overall_wer=overall_wer(estimates),
        true_overall_wer=num / den,
        corpus_wer=float("nan"),
    )


def evaluate_system(system: str, estimates: Sequence[WerEstimate],
                    corpus_with_refs: Corpus) -> EvalReport:
    """Full report: prediction quality plus reference corpus WER.

    ``corpus_with_refs`` supplies the token-level alignments for the
    word-count-weighted corpus WER; every utterance needs a reference.
    """
    base = evaluate_predictions(system, estimates)
    pairs = []
    for utt in corpus_with_refs:
        if utt.ref_words is None:
            raise ValueError(f"utterance {utt.id} has no reference transcript")
        pairs.append((utt.ref_words, utt.hyp_words))
    return EvalReport(
        system=base.system,
        n_utterances=base.n_utterances,
        pearson_r=base.pearson_r,
        rmse=base.rmse,
        estimated_overall_wer=base.estimated_overall_wer,
        true_overall_wer=base.true_overall_wer,
        corpus_wer=scorer.corpus_wer(pairs),
    )


CURVE_CSV_HEADER = "x_hours,wer"


def curve_to_csv(points: Sequence[tuple[float, float]]) -> str:
    out = io.StringIO()
    out.write(CURVE_CSV_HEADER + "\n")
    for x, w in points:
        out.write(f"{x:.9f},{w:.9f}\n")
    return out.getvalue()


def curve_to_svg(points: Sequence[tuple[float, float]],
                 title: str = "Cumulative WER") -> str:
    """Small self-contained SVG line plot of a cumulative-WER curve."""
    if not points:
        raise ValueError("cannot plot an empty curve")
    width, height = 640, 400
    left, right, top, bottom = 60, 20, 30, 40
    xs = [p[0] for p in points]
    ws = [p[1] for p in points]
    x_max = max(xs) or 1.0
    w_lo, w_hi = min(ws), max(ws)
    if w_hi - w_lo < 1e-9:
        w_lo, w_hi = w_lo - 0.05, w_hi + 0.05
    span_x = width - left - right
    span_y = height - top - bottom

    def sx(x: float) -> float:
        return left + span_x * (x / x_max)

    def sy(w: float) -> float:
        return top + span_y * (1.0 - (w - w_lo) / (w_hi - w_lo))

    path = " ".join(f"{sx(x):.2f},{sy(w):.2f}" for x, w in points)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle" font-size="12">elapsed hours</text>',
        f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.0f})">cumulative WER</text>',
        f'<text x="{left - 6}" y="{sy(w_hi):.0f}" text-anchor="end" font-size="10">{w_hi:.3f}</text>',
        f'<text x="{left - 6}" y="{sy(w_lo):.0f}" text-anchor="end" font-size="10">{w_lo:.3f}</text>',
        f'<text x="{sx(x_max):.0f}" y="{height - bottom + 14:.0f}" text-anchor="end" font-size="10">{x_max:.2f}</text>',
        f'<polyline points="{path}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>',
        "</svg>",
    ]
    return "\n".join(parts)
