"""Reciprocal rank fusion and the two fusion pipeline shapes.

RRF scores a passage by sum over input lists of 1/(k + rank); passages
absent from a list contribute nothing for it. Late fusion combines the
final reranked lists of each query variant; early fusion combines the
first-stage lists and reranks the fused list with one designated variant's
scores, so the expensive reranker runs once.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .runs import RankedList, qid_sort_key

DEFAULT_FUSION_DEPTH = 1000

RerankScores = Mapping[tuple[str, str], float]


@dataclass(frozen=True)
class RrfParams:
    k: float = 60.0

    def __post_init__(self) -> None:
        if not self.k > 0:
            raise ValueError(f"rrf k must be > 0, got {self.k}")


def rrf_fuse(
    lists: Sequence[RankedList],
    params: RrfParams | None = None,
    depth: int = DEFAULT_FUSION_DEPTH,
) -> RankedList:
    """Fuse lists for one qid; ties break by ascending doc_id, output is
    truncated to ``depth``."""
    if not lists:
        raise ValueError("rrf_fuse needs at least one ranked list")
    params = params or RrfParams()
    qid = lists[0].qid
    for rl in lists[1:]:
        if rl.qid != qid:
            raise ValueError(f"cannot fuse lists with mismatched qids {qid!r} and {rl.qid!r}")
    scores: dict[str, float] = {}
    for rl in lists:
        for e in rl.entries:
            scores[e.doc_id] = scores.get(e.doc_id, 0.0) + 1.0 / (params.k + e.rank)
    return RankedList.from_scores(qid, scores.items()).truncated(depth)


def load_rerank_scores(path: str | Path) -> dict[tuple[str, str], float]:
    """Read ``qid<TAB>doc_id<TAB>score`` rows; one score per (qid, doc) pair."""
    path = Path(path)
    scores: dict[tuple[str, str], float] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected qid<TAB>doc_id<TAB>score")
            key = (parts[0], parts[1])
            if key in scores:
                raise ValueError(f"{path}:{lineno}: duplicate score for {key}")
            try:
                scores[key] = float(parts[2])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad score: {exc}") from exc
    return scores


def rerank(ranked: RankedList, scores: RerankScores) -> RankedList:
    """Reorder a list by external scores, keeping membership identical.

    Every (qid, doc) pair must be covered; missing pairs are an error so a
    partial score file cannot silently drop or misplace candidates.
    """
    missing = [e.doc_id for e in ranked.entries if (ranked.qid, e.doc_id) not in scores]
    if missing:
        shown = ", ".join(repr(d) for d in missing[:5])
        more = f" (+{len(missing) - 5} more)" if len(missing) > 5 else ""
        raise ValueError(
            f"rerank scores missing for qid {ranked.qid!r}: first missing pair "
            f"({ranked.qid!r}, {missing[0]!r}); all missing: {shown}{more}"
        )
    rescored = [(e.doc_id, scores[(ranked.qid, e.doc_id)]) for e in ranked.entries]
    return RankedList.from_scores(ranked.qid, rescored)


def late_fusion(
    reranked_lists: Sequence[RankedList],
    params: RrfParams | None = None,
    depth: int = DEFAULT_FUSION_DEPTH,
) -> RankedList:
    """Fuse the final (already reranked) lists of each query variant."""
    return rrf_fuse(reranked_lists, params, depth)


def early_fusion(
    first_stage_lists: Sequence[RankedList],
    rerank_scores: RerankScores,
    params: RrfParams | None = None,
    depth: int = DEFAULT_FUSION_DEPTH,
) -> RankedList:
    """Fuse first-stage lists, then rerank the fused list with the
    designated variant's scores."""
    return rerank(rrf_fuse(first_stage_lists, params, depth), rerank_scores)


def fuse_runs(
    runs: Sequence[Mapping[str, RankedList]],
    params: RrfParams | None = None,
    depth: int = DEFAULT_FUSION_DEPTH,
) -> dict[str, RankedList]:
    """Apply rrf_fuse per qid across whole runs; qids missing from some runs
    are fused over the lists that do have them."""
    if not runs:
        raise ValueError("fuse_runs needs at least one run")
    qids = sorted({qid for run in runs for qid in run}, key=qid_sort_key)
    return {
        qid: rrf_fuse([run[qid] for run in runs if qid in run], params, depth) for qid in qids
    }


def rerank_run(run: Mapping[str, RankedList], scores: RerankScores) -> dict[str, RankedList]:
    return {qid: rerank(rl, scores) for qid, rl in run.items()}
