"""Reference-based WER scoring.

Aligns a hypothesis word sequence against a reference with a standard
Levenshtein dynamic program (unit costs for insertion, deletion and
substitution) and reports the error counts that word error rate is
built from.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "AlignmentCounts",
    "align",
    "wer_utterance",
    "corpus_wer",
    "sentence_error_rate",
]


@dataclass(frozen=True)
class AlignmentCounts:
    """Insertion/deletion/substitution counts for one ref/hyp pair.

    ``n_ref`` is the reference length; ``errors`` is the minimum edit
    distance under unit costs.
    """

    insertions: int
    deletions: int
    substitutions: int
    n_ref: int

    def __post_init__(self) -> None:
        if min(self.insertions, self.deletions, self.substitutions, self.n_ref) < 0:
            raise ValueError("alignment counts must be non-negative")
        if self.deletions > self.n_ref or self.substitutions > self.n_ref:
            raise ValueError("deletions and substitutions cannot exceed reference length")

    @property
    def errors(self) -> int:
        return self.insertions + self.deletions + self.substitutions


def align(ref: Sequence[str], hyp: Sequence[str]) -> AlignmentCounts:
    """Align ``hyp`` against ``ref`` and count edit operations.

    Tokens compare by exact string equality. When several tracebacks are
    optimal the split is made deterministic by preferring, in order:
    match, substitution, deletion, insertion. Empty sequences are valid.
    """
    n, m = len(ref), len(hyp)
    # cost[i][j]: minimum edits aligning ref[:i] with hyp[:j]
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    cost[0] = list(range(m + 1))
    for i in range(1, n + 1):
        row = cost[i]
        prev = cost[i - 1]
        ref_tok = ref[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (0 if ref_tok == hyp[j - 1] else 1)
            row[j] = min(diag, prev[j] + 1, row[j - 1] + 1)

    ins = dels = subs = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = cost[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and here == cost[i - 1][j - 1]:
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and here == cost[i - 1][j - 1] + 1:
            subs += 1
            i -= 1
            j -= 1
        elif i > 0 and here == cost[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return AlignmentCounts(insertions=ins, deletions=dels, substitutions=subs, n_ref=n)


def wer_utterance(ref: Sequence[str], hyp: Sequence[str]) -> float:
    """Word error rate for one utterance, as an unclamped fraction.

    Insertions can push the value above 1. Raises for an empty
    reference, where WER is undefined.
    """
    if len(ref) == 0:
        raise ValueError("undefined WER for empty reference")
    counts = align(ref, hyp)
    return counts.errors / counts.n_ref


def corpus_wer(pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> float:
    """Corpus-level WER: total errors over total reference words.

    This is NOT the mean of per-utterance WERs; short utterances weigh
    less than long ones.
    """
    if len(pairs) == 0:
        raise ValueError("corpus WER undefined for an empty pair list")
    total_err = 0
    total_n = 0
    for ref, hyp in pairs:
        if len(ref) == 0:
            raise ValueError("undefined WER for empty reference")
        counts = align(ref, hyp)
        total_err += counts.errors
        total_n += counts.n_ref
    return total_err / total_n


def sentence_error_rate(pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> float:
    """Fraction of utterances with at least one word error."""
    if len(pairs) == 0:
        raise ValueError("sentence error rate undefined for an empty pair list")
    wrong = sum(1 for ref, hyp in pairs if align(ref, hyp).errors > 0)
    return wrong / len(pairs)
