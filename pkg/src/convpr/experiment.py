"""Experiment orchestration: corpus → index → reformulate → retrieve →
fuse → evaluate, driven by a declarative YAML config.

Outputs are deterministic for a given config + data: rewrites and run
files, a per-query metrics CSV, and a summary table. The config hash is
logged and written next to the outputs; the index, keyword-extractor
scores, and first-stage runs are cached on disk under ``output_dir/cache``
keyed by hashes of the config pieces they depend on, so a re-run or a grid
sweep does not repeat work.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml

from .corpus import Session, load_passages, load_sessions
from .cqr import (
    CONCAT_DEFAULT_WINDOW,
    HqeParams,
    PosAnnotations,
    ReformulatedQuery,
    concat_rewrite,
    hqe_rewrite,
    load_external_rewrites,
    raw_query,
    write_rewrites,
)
from .evaluation import DEFAULT_METRICS, MetricReport, Qrels, evaluate_run, load_qrels, parse_metric
from .fusion import RrfParams, fuse_runs, load_rerank_scores, rerank_run
from .index import Bm25Params, InvertedIndex, Searcher, build_index
from .runs import RankedList, read_run, write_run
from .tokenization import TokenizerConfig

logger = logging.getLogger("convpr")

METHOD_TYPES = ("raw", "concat", "concat-pos", "hqe", "hqe-pos", "external")
FUSION_MODES = ("early", "late", "none")
FUSED_RUN_NAME = "fusion"


@dataclass(frozen=True)
class MethodSpec:
    name: str
    type: str
    m_window: int = CONCAT_DEFAULT_WINDOW
    hqe: HqeParams = field(default_factory=HqeParams)
    rewrites: Path | None = None
    pos_annotations: Path | None = None
    rerank_scores: Path | None = None

    @property
    def uses_pos(self) -> bool:
        return self.type.endswith("-pos")

    @property
    def needs_index(self) -> bool:
        return self.type in ("hqe", "hqe-pos")


@dataclass(frozen=True)
class FusionSpec:
    mode: str
    methods: tuple[str, ...]
    rerank_with: str | None = None
    rerank_scores: Path | None = None


@dataclass
class ExperimentConfig:
    corpus: Path
    corpus_format: str
    topics: Path
    qrels: Path
    output_dir: Path
    methods: list[MethodSpec]
    fusion: FusionSpec | None = None
    depth: int = 1000
    metrics: tuple[str, ...] = DEFAULT_METRICS
    bm25: Bm25Params = field(default_factory=Bm25Params)
    rrf: RrfParams = field(default_factory=RrfParams)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    raw: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        """Hash of everything that determines the outputs; the destination
        directory is deliberately excluded."""
        payload = {k: v for k, v in self.raw.items() if k != "output_dir"}
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True, ensure_ascii=True).encode()
        ).hexdigest()


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def _as_path(base: Path, value, key: str) -> Path:
    _require(isinstance(value, str) and value, f"config: {key} must be a non-empty path string")
    p = Path(value)
    return p if p.is_absolute() else base / p


def _existing(path: Path, key: str) -> Path:
    _require(path.exists(), f"config: {key} does not exist: {path}")
    return path


def _build(cls, mapping: Mapping, what: str):
    _require(isinstance(mapping, Mapping), f"config: {what} must be a mapping")
    try:
        return cls(**mapping)
    except TypeError as exc:
        raise ValueError(f"config: bad {what}: {exc}") from None


def _method_from_dict(base: Path, raw: Mapping, idx: int) -> MethodSpec:
    _require(isinstance(raw, Mapping), f"config: methods[{idx}] must be a mapping")
    _require("name" in raw and "type" in raw, f"config: methods[{idx}] needs 'name' and 'type'")
    name, mtype = str(raw["name"]), str(raw["type"])
    _require(
        mtype in METHOD_TYPES,
        f"config: methods[{idx}] ({name}): unknown type {mtype!r}, expected one of {METHOD_TYPES}",
    )
    hqe = _build(HqeParams, raw["hqe"], f"methods[{idx}].hqe") if "hqe" in raw else HqeParams()
    rewrites = pos = scores = None
    if mtype == "external":
        _require("rewrites" in raw, f"config: methods[{idx}] ({name}): external needs 'rewrites'")
        rewrites = _existing(_as_path(base, raw["rewrites"], f"methods[{idx}].rewrites"), "rewrites")
    if "pos_annotations" in raw:
        pos = _existing(
            _as_path(base, raw["pos_annotations"], f"methods[{idx}].pos_annotations"),
            "pos_annotations",
        )
    if "rerank_scores" in raw:
        scores = _existing(
            _as_path(base, raw["rerank_scores"], f"methods[{idx}].rerank_scores"), "rerank_scores"
        )
    return MethodSpec(
        name=name,
        type=mtype,
        m_window=int(raw.get("m_window", CONCAT_DEFAULT_WINDOW)),
        hqe=hqe,
        rewrites=rewrites,
        pos_annotations=pos,
        rerank_scores=scores,
    )


def load_config(path: str | Path, overrides: Mapping[str, object] | None = None) -> ExperimentConfig:
    """Parse and validate an experiment config; all validation happens here,
    before any real work starts. ``overrides`` maps dotted keys (e.g.
    ``bm25.k1``) onto replacement values."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    _require(isinstance(raw, dict), f"{path}: config must be a mapping")
    for dotted, value in (overrides or {}).items():
        node = raw
        keys = dotted.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            _require(isinstance(node, dict), f"config override {dotted!r}: {key} is not a mapping")
        node[keys[-1]] = value

    base = path.parent
    for key in ("corpus", "topics", "qrels", "output_dir", "methods"):
        _require(key in raw, f"config: missing required key {key!r}")

    corpus_format = str(raw.get("corpus_format", "tsv"))
    _require(corpus_format in ("tsv", "jsonl"), f"config: corpus_format must be tsv or jsonl")

    corpus = _existing(_as_path(base, raw["corpus"], "corpus"), "corpus")
    topics = _existing(_as_path(base, raw["topics"], "topics"), "topics")
    qrels = _existing(_as_path(base, raw["qrels"], "qrels"), "qrels")

    _require(isinstance(raw["methods"], list), "config: methods must be a list of mappings")
    for key in ("bm25", "rrf", "tokenizer"):
        _require(isinstance(raw.get(key, {}), dict), f"config: {key} must be a mapping")
    methods = [_method_from_dict(base, m, i) for i, m in enumerate(raw["methods"])]
    _require(len(methods) > 0, "config: methods must not be empty")
    names = [m.name for m in methods]
    _require(len(set(names)) == len(names), f"config: duplicate method names in {names}")
    _require(
        FUSED_RUN_NAME not in names, f"config: method name {FUSED_RUN_NAME!r} is reserved"
    )

    fusion = None
    if "fusion" in raw and raw["fusion"]:
        fraw = raw["fusion"]
        mode = str(fraw.get("mode", "early"))
        _require(mode in FUSION_MODES, f"config: fusion.mode must be one of {FUSION_MODES}")
        if mode != "none":
            fmethods = tuple(str(m) for m in fraw.get("methods", ()))
            _require(len(fmethods) >= 2, "config: fusion.methods needs at least two methods")
            by_name = {m.name: m for m in methods}
            for fm in fmethods:
                _require(fm in by_name, f"config: fusion references unknown method {fm!r}")
            rerank_with = fraw.get("rerank_with")
            scores = None
            if "rerank_scores" in fraw:
                scores = _existing(
                    _as_path(base, fraw["rerank_scores"], "fusion.rerank_scores"), "rerank_scores"
                )
            if mode == "early":
                _require(
                    scores is not None
                    or (rerank_with in by_name and by_name[rerank_with].rerank_scores is not None),
                    "config: early fusion needs fusion.rerank_scores or a rerank_with method "
                    "that has rerank_scores",
                )
            else:
                for fm in fmethods:
                    _require(
                        by_name[fm].rerank_scores is not None,
                        f"config: late fusion requires rerank_scores on method {fm!r}",
                    )
            fusion = FusionSpec(
                mode=mode,
                methods=fmethods,
                rerank_with=str(rerank_with) if rerank_with else None,
                rerank_scores=scores,
            )

    metrics = tuple(str(m) for m in raw.get("metrics", DEFAULT_METRICS))
    for m in metrics:
        parse_metric(m)

    config = ExperimentConfig(
        corpus=corpus,
        corpus_format=corpus_format,
        topics=topics,
        qrels=qrels,
        output_dir=_as_path(base, raw["output_dir"], "output_dir"),
        methods=methods,
        fusion=fusion,
        depth=int(raw.get("depth", 1000)),
        metrics=metrics,
        bm25=_build(Bm25Params, raw.get("bm25", {}), "bm25"),
        rrf=_build(RrfParams, raw.get("rrf", {}), "rrf"),
        tokenizer=TokenizerConfig.from_dict(raw.get("tokenizer", {})),
        raw=raw,
    )
    _require(config.depth >= 1, "config: depth must be >= 1")
    return config


# -- caching ------------------------------------------------------------------


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _index_key(config: ExperimentConfig) -> str:
    payload = json.dumps(
        {
            "corpus": _file_digest(config.corpus),
            "format": config.corpus_format,
            "tokenizer": config.tokenizer.to_dict(),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _ensure_index(config: ExperimentConfig, cache_dir: Path) -> InvertedIndex:
    key = _index_key(config)
    index_dir = cache_dir / f"index-{key}"
    if (index_dir / "meta.json").exists():
        logger.info("loading cached index %s", index_dir)
        return InvertedIndex.load(index_dir)
    index = build_index(load_passages(config.corpus, config.corpus_format), config.tokenizer)
    logger.info("built index: %d docs, %d terms", index.doc_count, index.vocab_size)
    index.save(index_dir)
    return index


def _ke_cache_path(cache_dir: Path, config: ExperimentConfig) -> Path:
    key = hashlib.sha256(
        json.dumps(
            {"index": _index_key(config), "k1": config.bm25.k1, "b": config.bm25.b},
            sort_keys=True,
        ).encode()
    ).hexdigest()[:16]
    return cache_dir / f"ke-{key}.json"


def _load_ke_cache(searcher: Searcher, path: Path) -> None:
    if not path.exists():
        return
    with path.open("r", encoding="utf-8") as fh:
        stored = json.load(fh)
    ids = searcher.index._term_ids
    for term, score in stored.items():
        tid = ids.get(term)
        if tid is not None:
            searcher._term_max[tid] = float(score)


def _save_ke_cache(searcher: Searcher, path: Path) -> None:
    terms = searcher.index.terms
    payload = {terms[tid]: score for tid, score in searcher._term_max.items()}
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


# -- reformulation and retrieval ----------------------------------------------


def _pos_for(method: MethodSpec) -> PosAnnotations | None:
    if not method.uses_pos:
        return None
    if method.pos_annotations is not None:
        return PosAnnotations.load(method.pos_annotations)
    logger.warning(
        "method %s: no pos_annotations file; using the trivial all-NOUN tagger", method.name
    )
    return PosAnnotations.trivial()


def reformulate_method(
    method: MethodSpec,
    sessions: Sequence[Session],
    searcher: Searcher | None,
    tokenizer: TokenizerConfig,
    hqe_override: HqeParams | None = None,
    m_window_override: int | None = None,
) -> list[ReformulatedQuery]:
    """Produce one rewrite per turn, session by session."""
    pos = _pos_for(method)
    out: list[ReformulatedQuery] = []
    external = load_external_rewrites(method.rewrites, tokenizer) if method.type == "external" else None
    hqe_params = hqe_override or method.hqe
    m_window = method.m_window if m_window_override is None else m_window_override
    for session in sessions:
        for i in range(1, len(session.utterances) + 1):
            prefix = session.utterances[:i]
            current = prefix[-1]
            if method.type == "raw":
                out.append(raw_query(current, tokenizer))
            elif method.type in ("concat", "concat-pos"):
                out.append(concat_rewrite(prefix, m_window, pos, tokenizer))
            elif method.type in ("hqe", "hqe-pos"):
                assert searcher is not None
                out.append(hqe_rewrite(searcher, prefix, hqe_params, pos))
            else:
                if current.qid not in external:
                    raise ValueError(
                        f"method {method.name}: no external rewrite for qid {current.qid!r}"
                    )
                out.append(external[current.qid])
    return out


def retrieve_all(
    searcher: Searcher, queries: Iterable[ReformulatedQuery], depth: int
) -> dict[str, RankedList]:
    return {q.qid: searcher.search(list(q.tokens), k=depth, qid=q.qid) for q in queries}


# -- the experiment -------------------------------------------------------------


@dataclass
class ExperimentResult:
    config_hash: str
    reports: dict[str, MetricReport]
    run_files: dict[str, Path]
    metrics_csv: Path
    metrics_txt: Path


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    out_dir = config.output_dir
    cache_dir = out_dir / "cache"
    runs_dir = out_dir / "runs"
    rewrites_dir = out_dir / "rewrites"
    for d in (cache_dir, runs_dir, rewrites_dir):
        d.mkdir(parents=True, exist_ok=True)

    chash = config.config_hash()
    logger.info("config hash %s", chash)
    (out_dir / "config_hash.txt").write_text(chash + "\n", encoding="utf-8")

    sessions = load_sessions(config.topics)
    qrels = load_qrels(config.qrels)
    index = _ensure_index(config, cache_dir)
    searcher = Searcher(index, config.bm25)
    ke_path = _ke_cache_path(cache_dir, config)
    _load_ke_cache(searcher, ke_path)

    method_runs: dict[str, dict[str, RankedList]] = {}
    final_runs: dict[str, dict[str, RankedList]] = {}
    run_files: dict[str, Path] = {}

    def emit(name: str, run: dict[str, RankedList]) -> None:
        path = runs_dir / f"{name}.run"
        write_run(path, run, tag=name)
        run_files[name] = path

    for method in config.methods:
        run_key = hashlib.sha256(
            json.dumps(
                {
                    "index": _index_key(config),
                    "bm25": [config.bm25.k1, config.bm25.b],
                    "depth": config.depth,
                    "method": {
                        "type": method.type,
                        "m_window": method.m_window,
                        "hqe": [method.hqe.r_topic, method.hqe.r_sub, method.hqe.eta, method.hqe.m_window],
                        "rewrites": _file_digest(method.rewrites) if method.rewrites else None,
                        "pos": _file_digest(method.pos_annotations) if method.pos_annotations else None,
                    },
                },
                sort_keys=True,
            ).encode()
        ).hexdigest()[:16]
        cached_run = cache_dir / f"run-{run_key}.run"

        queries = reformulate_method(method, sessions, searcher, config.tokenizer)
        write_rewrites(rewrites_dir / f"{method.name}.tsv", queries)

        if cached_run.exists():
            logger.info("method %s: using cached first-stage run", method.name)
            run = read_run(cached_run)
        else:
            run = retrieve_all(searcher, queries, config.depth)
            write_run(cached_run, run, tag=method.name)
        method_runs[method.name] = run
        emit(method.name, run)
        final_runs[method.name] = run

        if method.rerank_scores is not None:
            scores = load_rerank_scores(method.rerank_scores)
            reranked = rerank_run(run, scores)
            emit(f"{method.name}+rerank", reranked)
            final_runs[f"{method.name}+rerank"] = reranked

    _save_ke_cache(searcher, ke_path)

    if config.fusion is not None and config.fusion.mode != "none":
        spec = config.fusion
        if spec.mode == "early":
            fused = fuse_runs([method_runs[m] for m in spec.methods], config.rrf, config.depth)
            scores_path = spec.rerank_scores
            if scores_path is None:
                by_name = {m.name: m for m in config.methods}
                scores_path = by_name[spec.rerank_with].rerank_scores
            fused = rerank_run(fused, load_rerank_scores(scores_path))
        else:
            fused = fuse_runs(
                [final_runs[f"{m}+rerank"] for m in spec.methods], config.rrf, config.depth
            )
        emit(FUSED_RUN_NAME, fused)
        final_runs[FUSED_RUN_NAME] = fused

    reports = {
        name: evaluate_run(run, qrels, config.metrics, config.depth)
        for name, run in final_runs.items()
    }

    metrics_csv = out_dir / "metrics.csv"
    with metrics_csv.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("run,qid," + ",".join(config.metrics) + "\n")
        for name, report in reports.items():
            for row in report.csv_rows(name):
                fh.write(row + "\n")

    metrics_txt = out_dir / "metrics.txt"
    width = max(max((len(n) for n in reports), default=4), 4)
    with metrics_txt.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{'run':<{width}}  " + "  ".join(f"{m:>12}" for m in config.metrics) + "\n")
        for name, report in reports.items():
            means = report.means
            fh.write(
                f"{name:<{width}}  "
                + "  ".join(f"{means[m]:>12.4f}" for m in config.metrics)
                + "\n"
            )

    logger.info("experiment outputs in %s", out_dir)
    return ExperimentResult(
        config_hash=chash,
        reports=reports,
        run_files=run_files,
        metrics_csv=metrics_csv,
        metrics_txt=metrics_txt,
    )


# -- grid search -----------------------------------------------------------------


_HQE_GRID_KEYS = ("r_topic", "r_sub", "eta", "m_window")


def grid_search(
    config: ExperimentConfig,
    method_name: str,
    grid: Mapping[str, Sequence[float]],
    depth: int | None = None,
) -> list[dict]:
    """Cartesian sweep over expansion hyperparameters for one method.

    Returns one row per combination with first-stage R@depth and MAP,
    sorted by parameter values. The index and keyword-extractor scores are
    computed once and shared across the sweep.
    """
    by_name = {m.name: m for m in config.methods}
    _require(method_name in by_name, f"grid: unknown method {method_name!r}")
    method = by_name[method_name]
    if method.type in ("hqe", "hqe-pos"):
        allowed = _HQE_GRID_KEYS
    elif method.type in ("concat", "concat-pos"):
        allowed = ("m_window",)
    else:
        raise ValueError(f"grid: method {method_name!r} of type {method.type!r} has no grid parameters")
    for key in grid:
        _require(key in allowed, f"grid: parameter {key!r} not tunable for {method.type} (allowed: {allowed})")
    _require(len(grid) > 0, "grid: no parameters given")

    depth = depth or config.depth
    cache_dir = config.output_dir / "cache"
    cache_dir.mkdir(parents=True, exist_ok=True)
    sessions = load_sessions(config.topics)
    qrels = load_qrels(config.qrels)
    index = _ensure_index(config, cache_dir)
    searcher = Searcher(index, config.bm25)
    ke_path = _ke_cache_path(cache_dir, config)
    _load_ke_cache(searcher, ke_path)

    keys = sorted(grid)
    rows: list[dict] = []
    for values in product(*(grid[k] for k in keys)):
        point = dict(zip(keys, values))
        if method.type in ("hqe", "hqe-pos"):
            hqe_kwargs = {
                "r_topic": method.hqe.r_topic,
                "r_sub": method.hqe.r_sub,
                "eta": method.hqe.eta,
                "m_window": method.hqe.m_window,
            }
            hqe_kwargs.update(point)
            hqe_kwargs["m_window"] = int(hqe_kwargs["m_window"])
            queries = reformulate_method(
                method, sessions, searcher, config.tokenizer, hqe_override=HqeParams(**hqe_kwargs)
            )
        else:
            queries = reformulate_method(
                method, sessions, searcher, config.tokenizer, m_window_override=int(point["m_window"])
            )
        run = retrieve_all(searcher, queries, depth)
        report = evaluate_run(run, qrels, (f"recall@{depth}", "map"), depth)
        means = report.means
        rows.append({**point, "recall": means[f"recall@{depth}"], "map": means["map"]})
    _save_ke_cache(searcher, ke_path)
    rows.sort(key=lambda r: tuple(r[k] for k in keys))
    return rows
