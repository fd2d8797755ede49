"""TREC-style evaluation, comparison statistics, and query-set analyses.

Conventions follow the usual trec_eval behavior: MAP and recall binarize at
grade >= 1, NDCG uses linear graded gain with a 1/log2(rank+1) discount,
and queries without any judged-relevant document are excluded from means.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from scipy.stats import t as _student_t

from .runs import RankedList, qid_sort_key

MAX_GRADE = 4
DEFAULT_METRICS = ("map", "ndcg@3", "ndcg@1", "recall@1000")
DEFAULT_TIE_EPSILON = 1e-4


class Qrels:
    """Graded relevance judgments: (qid, doc_id) -> grade in 0..4.

    Unjudged pairs implicitly have grade 0.
    """

    def __init__(self, grades: Mapping[str, Mapping[str, int]] | None = None):
        self._grades: dict[str, dict[str, int]] = {
            qid: dict(docs) for qid, docs in (grades or {}).items()
        }

    def grade(self, qid: str, doc_id: str) -> int:
        return self._grades.get(qid, {}).get(doc_id, 0)

    def judged_qids(self) -> list[str]:
        return sorted(self._grades, key=qid_sort_key)

    def doc_grades(self, qid: str) -> dict[str, int]:
        return dict(self._grades.get(qid, {}))

    def relevant_docs(self, qid: str, threshold: int = 1) -> set[str]:
        return {d for d, g in self._grades.get(qid, {}).items() if g >= threshold}

    def grade_histogram(self) -> dict[int, int]:
        counts = Counter(g for docs in self._grades.values() for g in docs.values())
        return {g: counts.get(g, 0) for g in range(MAX_GRADE + 1)}

    def __len__(self) -> int:
        return sum(len(docs) for docs in self._grades.values())


def load_qrels(path: str | Path) -> Qrels:
    """Parse ``qid 0 doc_id grade`` rows; grades outside 0..4 are errors."""
    path = Path(path)
    grades: dict[str, dict[str, int]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns, found {len(parts)}")
            qid, _iter, doc_id, grade_s = parts
            try:
                grade = int(grade_s)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad grade: {exc}") from exc
            if not 0 <= grade <= MAX_GRADE:
                raise ValueError(f"{path}:{lineno}: grade {grade} outside 0..{MAX_GRADE}")
            docs = grades.setdefault(qid, {})
            if doc_id in docs:
                raise ValueError(f"{path}:{lineno}: duplicate judgment for ({qid}, {doc_id})")
            docs[doc_id] = grade
    return Qrels(grades)


# -- per-query metrics ------------------------------------------------------


def average_precision(
    ranked: RankedList, qrels: Qrels, depth: int = 1000, rel_threshold: int = 1
) -> float:
    """Sum of precision at each relevant hit within ``depth``, divided by the
    total number of relevant docs. 0.0 when nothing relevant is judged."""
    relevant = qrels.relevant_docs(ranked.qid, rel_threshold)
    if not relevant:
        return 0.0
    hits = 0
    total = 0.0
    for e in ranked.entries[:depth]:
        if e.doc_id in relevant:
            hits += 1
            total += hits / e.rank
    return total / len(relevant)


def ndcg_at_k(ranked: RankedList, qrels: Qrels, k: int) -> float:
    """DCG@k with gain = grade and discount 1/log2(rank+1), normalized by the
    ideal DCG from the judgments; 0.0 if no judged doc has a positive grade."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    grades = qrels.doc_grades(ranked.qid)
    ideal = sorted(grades.values(), reverse=True)[:k]
    idcg = 0.0
    for i, g in enumerate(ideal, start=1):
        idcg += g / math.log2(i + 1)
    if idcg == 0.0:
        return 0.0
    dcg = 0.0
    for e in ranked.entries[:k]:
        g = grades.get(e.doc_id, 0)
        if g:
            dcg += g / math.log2(e.rank + 1)
    return dcg / idcg


def recall_at_k(
    ranked: RankedList, qrels: Qrels, k: int = 1000, rel_threshold: int = 1
) -> float:
    relevant = qrels.relevant_docs(ranked.qid, rel_threshold)
    if not relevant:
        return 0.0
    found = sum(1 for e in ranked.entries[:k] if e.doc_id in relevant)
    return found / len(relevant)


# -- run-level evaluation ----------------------------------------------------


@dataclass
class MetricReport:
    """Per-query and mean values for a set of metrics over one run."""

    metrics: tuple[str, ...]
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)  # metric -> qid -> value
    qids: list[str] = field(default_factory=list)

    @property
    def means(self) -> dict[str, float]:
        return {
            m: (sum(self.per_query[m][q] for q in self.qids) / len(self.qids) if self.qids else 0.0)
            for m in self.metrics
        }

    def format_table(self, label: str = "run") -> str:
        means = self.means
        width = max(len(label), 12)
        lines = [f"{label:<{width}}  " + "  ".join(f"{m:>12}" for m in self.metrics)]
        lines.append(
            f"{'all':<{width}}  " + "  ".join(f"{means[m]:>12.4f}" for m in self.metrics)
        )
        return "\n".join(lines)

    def csv_rows(self, run_name: str) -> list[str]:
        rows = []
        for qid in self.qids:
            vals = ",".join(f"{self.per_query[m][qid]:.6f}" for m in self.metrics)
            rows.append(f"{run_name},{qid},{vals}")
        means = self.means
        rows.append(f"{run_name},all," + ",".join(f"{means[m]:.6f}" for m in self.metrics))
        return rows


def parse_metric(name: str) -> tuple[str, int | None]:
    """Split names like ``ndcg@3`` / ``recall@1000`` / ``map``."""
    name = name.strip().lower()
    if name == "map":
        return "map", None
    if "@" in name:
        base, _, k_s = name.partition("@")
        if base in ("ndcg", "recall") and k_s.isdigit() and int(k_s) >= 1:
            return base, int(k_s)
    raise ValueError(f"unknown metric {name!r} (expected map, ndcg@k or recall@k)")


def _metric_value(name: str, ranked: RankedList, qrels: Qrels, depth: int) -> float:
    base, k = parse_metric(name)
    if base == "map":
        return average_precision(ranked, qrels, depth=depth)
    if base == "ndcg":
        return ndcg_at_k(ranked, qrels, k)
    return recall_at_k(ranked, qrels, k)


def evaluate_run(
    run: Mapping[str, RankedList],
    qrels: Qrels,
    metrics: Sequence[str] = DEFAULT_METRICS,
    depth: int = 1000,
) -> MetricReport:
    """Evaluate the qids present in the run that have at least one judged
    relevant doc (trec_eval convention); no such qid is an error.

    Empty lists count as absent: run files cannot represent them, so this
    keeps in-memory and round-tripped runs equivalent.
    """
    for m in metrics:
        parse_metric(m)
    qids = [
        qid
        for qid in sorted(run, key=qid_sort_key)
        if run[qid].entries and qrels.relevant_docs(qid)
    ]
    if not qids:
        raise ValueError("no judged queries: run and qrels share no qid with relevant docs")
    report = MetricReport(metrics=tuple(metrics), qids=qids)
    for m in metrics:
        report.per_query[m] = {qid: _metric_value(m, run[qid], qrels, depth) for qid in qids}
    return report


# -- comparison statistics ---------------------------------------------------


def win_tie_loss(
    a: Mapping[str, float], b: Mapping[str, float], tie_epsilon: float = DEFAULT_TIE_EPSILON
) -> tuple[int, int, int]:
    """Count qids where a beats / ties / trails b; |diff| < epsilon is a tie.

    Compared over the qid intersection, which must be non-empty.
    """
    shared = sorted(set(a) & set(b), key=qid_sort_key)
    if not shared:
        raise ValueError("win_tie_loss: no shared qids to compare")
    win = tie = loss = 0
    for qid in shared:
        diff = a[qid] - b[qid]
        if abs(diff) < tie_epsilon:
            tie += 1
        elif diff > 0:
            win += 1
        else:
            loss += 1
    return win, tie, loss


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided paired t-test on aligned per-query values.

    Returns (t, p). The p-value comes from the Student-t survival function
    (regularized incomplete beta), exact to machine precision. Zero-variance
    differences are defined as (t, p) = (0.0, 1.0).
    """
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ValueError("paired_t_test needs at least 2 pairs")
    diffs = [x - y for x, y in zip(a, b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        return 0.0, 1.0
    t_stat = mean / math.sqrt(var / n)
    p = 2.0 * float(_student_t.sf(abs(t_stat), n - 1))
    return t_stat, p


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    """|A ∩ B| / |A ∪ B|; two empty sets count as identical (1.0)."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


# -- corpus BLEU --------------------------------------------------------------


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(
    hypotheses: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    max_order: int = 4,
) -> float:
    """Corpus-level BLEU in [0, 100]: uniform n-gram weights up to
    ``max_order``, clipped precision, brevity penalty, no smoothing (any
    empty n-gram precision gives 0)."""
    if len(hypotheses) != len(references):
        raise ValueError(
            f"hypotheses/references differ in length: {len(hypotheses)} vs {len(references)}"
        )
    if not hypotheses:
        raise ValueError("corpus_bleu needs at least one sentence pair")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            hyp_counts = _ngram_counts(hyp, n)
            if not hyp_counts:
                continue
            ref_counts = _ngram_counts(ref, n)
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(min(c, ref_counts.get(g, 0)) for g, c in hyp_counts.items())
    if hyp_len == 0 or any(t == 0 or m == 0 for m, t in zip(matches, totals)):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_order
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision)
