"""Corpus-level BLEU-4 and ROUGE-L (F1), whitespace tokenized, scaled to 0-100."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

BLEU_EPSILON = 1e-9


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _as_refs(references) -> list[list[str]]:
    if isinstance(references, str):
        return [references]
    return list(references)


def _check(candidates, references):
    if not candidates:
        raise ValueError("empty candidate set")
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates but {len(references)} reference sets")


def bleu4(candidates: Sequence[str], references: Sequence[Sequence[str] | str]) -> float:
    """Corpus BLEU-4 with clipped counts and closest-reference brevity penalty.

    An empty precision bucket (no matches, or no candidate n-grams of that
    order) contributes ``BLEU_EPSILON`` as its precision.
    """
    _check(candidates, references)
    matches = [0] * 4
    totals = [0] * 4
    cand_len = ref_len = 0
    for cand, refs in zip(candidates, references):
        c = cand.split()
        rs = [r.split() for r in _as_refs(refs)]
        cand_len += len(c)
        ref_len += min((abs(len(r) - len(c)), len(r)) for r in rs)[1]
        for n in range(1, 5):
            counts = _ngrams(c, n)
            max_ref: Counter = Counter()
            for r in rs:
                max_ref |= _ngrams(r, n)
            matches[n - 1] += sum(min(k, max_ref[g]) for g, k in counts.items())
            totals[n - 1] += sum(counts.values())
    if cand_len == 0:
        return 0.0
    log_p = 0.0
    for m, t in zip(matches, totals):
        p = m / t if m > 0 else BLEU_EPSILON / max(t, 1)
        log_p += math.log(p) / 4
    bp = 1.0 if cand_len > ref_len else math.exp(1 - ref_len / cand_len)
    return 100.0 * bp * math.exp(log_p)


def lcs_length(a: Sequence, b: Sequence) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_example(candidate: str, references) -> float:
    """Best LCS-based F1 (beta = 1) over the references, in [0, 1]."""
    c = candidate.split()
    best = 0.0
    for ref in _as_refs(references):
        r = ref.split()
        lcs = lcs_length(c, r)
        if lcs == 0:
            continue
        p, rec = lcs / len(c), lcs / len(r)
        best = max(best, 2 * p * rec / (p + rec))
    return best


def rouge_l(candidates: Sequence[str], references: Sequence[Sequence[str] | str]) -> float:
    _check(candidates, references)
    return 100.0 * sum(rouge_l_example(c, r) for c, r in zip(candidates, references)) / len(candidates)


@dataclass
class ScoreReport:
    bleu4: float
    rougeL: float
    per_example: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"bleu4": self.bleu4, "rougeL": self.rougeL, "per_example": self.per_example}


def evaluate(candidates: Sequence[str], references: Sequence[Sequence[str] | str],
             ids: Sequence | None = None) -> ScoreReport:
    _check(candidates, references)
    ids = list(range(len(candidates))) if ids is None else list(ids)
    per = [{"id": i, "bleu4": bleu4([c], [r]), "rougeL": 100.0 * rouge_l_example(c, r)}
           for i, c, r in zip(ids, candidates, references)]
    return ScoreReport(bleu4(candidates, references), rouge_l(candidates, references), per)
