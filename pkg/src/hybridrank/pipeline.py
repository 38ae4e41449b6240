"""Two-phase hybrid ranking: assess users under the RS, hand the weak ones to an LLM.

Stage order: ingest -> split -> train -> assess/classify -> instruct -> complete
-> parse -> merge -> evaluate -> report. Trained models and assessments are
cached under ``<output_dir>/cache`` keyed by a hash of the config sections
they depend on, so changing a threshold does not retrain the model.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import RunConfig
from .data import Dataset, SplitDataset, filter_min_interactions, parse_item_catalog, parse_ratings, split_per_user
from .evaluation import (
    Thresholds,
    UserAssessment,
    assess_users,
    build_all_pools,
    mean_pool_auc,
    mean_sparsity_threshold,
    ndcg_at_k,
    ranking_auc,
    UndefinedAUC,
)
from .llm import (
    Instruction,
    LlmClient,
    LlmEndpoint,
    MockLlm,
    ParseFailure,
    build_instruction,
    dispatch,
    mock_complete,
    parse_ranked_response,
)
from .models import GRIDS, HyperParams, TrainedRanker, load_ranker, train_ranker

logger = logging.getLogger(__name__)

SOURCES = ("rs", "llm", "rs_fallback")
ASSESSMENT_COLUMNS = ["user_id", "n_train", "n_test", "sparsity_index", "auc_rs", "inactive", "weak"]
WEAK_COUNT_COLUMNS = ["model", "llm_kind", "weak_before", "weak_after", "reduction_pct"]
USER_COLUMNS = [
    "user_id",
    "n_train",
    "n_test",
    "sparsity_index",
    "auc_rs",
    "auc_cand_rs",
    "auc_llm",
    "auc_cand_final",
    "ndcg10_rs",
    "ndcg10_final",
    "inactive",
    "weak",
    "weak_after",
    "source",
]


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {message}")


@dataclass
class RankedList:
    user_id: str
    items: list[int]
    source: str = "rs"

    def __post_init__(self) -> None:
        if len(set(self.items)) != len(self.items):
            raise ValueError(f"ranked list for user {self.user_id} has duplicates")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")


def candidate_auc(items: Sequence[int], relevant: set[int]) -> float | None:
    try:
        return ranking_auc(list(items), relevant)
    except UndefinedAUC:
        return None


def merge_rankings(
    rs_list: RankedList, llm_list: RankedList, labels: set[int] | None, mode: str = "evaluation"
) -> RankedList:
    """Pick the served list for a weak user.

    ``evaluation`` keeps whichever list has the higher candidate-set AUC
    under ``labels`` (the relevant items), RS on ties or when AUC is
    undefined. ``deployment`` always serves the LLM list.
    """
    if sorted(rs_list.items) != sorted(llm_list.items):
        raise ValueError(f"candidate sets differ for user {rs_list.user_id}")
    if mode == "deployment":
        return RankedList(llm_list.user_id, list(llm_list.items), "llm")
    if mode != "evaluation":
        raise ValueError(f"unknown merge mode {mode!r}")
    rs_auc = candidate_auc(rs_list.items, labels or set())
    llm_auc = candidate_auc(llm_list.items, labels or set())
    if rs_auc is not None and llm_auc is not None and llm_auc > rs_auc:
        return RankedList(llm_list.user_id, list(llm_list.items), "llm")
    return RankedList(rs_list.user_id, list(rs_list.items), "rs")


def cost_report(n_weak: int, n_users: int, per_query_seconds: float) -> dict:
    """LLM time for the weak users only versus for every user."""
    if not 0 <= n_weak <= n_users:
        raise ValueError("need 0 <= n_weak <= n_users")
    if per_query_seconds <= 0:
        raise ValueError("per_query_seconds must be positive")
    total = n_weak * per_query_seconds
    all_users = n_users * per_query_seconds
    return {
        "n_queries": n_weak,
        "per_query_seconds": per_query_seconds,
        "total_seconds": total,
        "all_users_seconds": all_users,
        "savings_pct": 1.0 - total / all_users if all_users else 0.0,
    }


def weak_count_after(weak_assessments: Sequence[UserAssessment], auc_llm: dict[str, float], t_p: float) -> int:
    """Weak users the LLM did not lift above t_p (inclusive)."""
    return sum(1 for a in weak_assessments if auc_llm[a.user_id] <= t_p)


# ---------------------------------------------------------------- stages


@dataclass
class Prepared:
    """Everything phase one produces."""

    config: RunConfig
    dataset: Dataset
    catalog: dict[str, str]
    split: SplitDataset
    thresholds: Thresholds
    t_s: float
    model: TrainedRanker
    assessments: list[UserAssessment]
    grid_results: list[dict] = field(default_factory=list)


def _stage(name: str):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, f"{type(exc).__name__}: {exc}") from exc

        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner

    return wrap


@_stage("ingest")
def ingest(cfg: RunConfig) -> tuple[Dataset, dict[str, str]]:
    ds_cfg = cfg.dataset
    with open(ds_cfg.path, "rb") as fh:
        dataset = parse_ratings(fh, ds_cfg.format)
    catalog: dict[str, str] = {}
    if ds_cfg.items_path:
        with open(ds_cfg.items_path, "rb") as fh:
            catalog = parse_item_catalog(fh, ds_cfg.format)
    dataset.with_catalog(catalog)
    if ds_cfg.min_interactions:
        dataset = filter_min_interactions(dataset, ds_cfg.min_interactions)
    logger.info("ingest summary %s", json.dumps(dataset.summary.to_dict(), sort_keys=True))
    return dataset, catalog


@_stage("split")
def make_split(cfg: RunConfig, dataset: Dataset) -> SplitDataset:
    return split_per_user(dataset, cfg.split.ratios, cfg.split.seed)


def resolve_thresholds(cfg: RunConfig, dataset: Dataset) -> tuple[Thresholds, float]:
    th = cfg.thresholds
    cutoff = th.relevance_cutoff
    if cutoff is None:
        cutoff = 7.0 if dataset.rating_scale[1] > 5 else 4.0
    t_s = th.t_s if th.t_s_mode == "fixed" else mean_sparsity_threshold(dataset)
    return Thresholds(th.t_p, t_s, cutoff, th.n_sampled_negatives), t_s


def _cache_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir) / "cache"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _grid_points(kind: str) -> list[dict]:
    grid = GRIDS[kind]
    keys = sorted(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


@_stage("train")
def fit_model(cfg: RunConfig, split: SplitDataset, thresholds: Thresholds) -> tuple[TrainedRanker, list[dict]]:
    """Train (or load from cache) the configured ranker, grid-searching if asked."""
    # validation pools feed early stopping / grid selection, so their inputs are part of the key
    key = cfg.digest("dataset", "split", "model") + (
        f"-s{cfg.seeds.train}-v{cfg.seeds.negatives}-n{thresholds.n_sampled_negatives}-c{thresholds.relevance_cutoff:g}"
    )
    path = _cache_dir(cfg) / f"model-{cfg.model.kind}-{key}.npz"
    grid_path = path.with_suffix(".grid.json")
    if path.exists():
        logger.info("cache hit: model %s", path.name)
        grid = json.loads(grid_path.read_text()) if grid_path.exists() else []
        return load_ranker(path), grid

    base = HyperParams.from_dict(cfg.model.hyperparameters.model_dump())
    needs_validation = cfg.model.grid or cfg.model.kind in ("bpr", "ncf")
    metric = None
    if needs_validation:
        pools = build_all_pools(split, thresholds, cfg.seeds.negatives, part="validation")
        metric = mean_pool_auc(pools)

    grid_results: list[dict] = []
    if cfg.model.grid:
        best, best_auc = None, -math.inf
        for point in _grid_points(cfg.model.kind):
            hp = HyperParams.from_dict({**base.to_dict(), **point})
            model = train_ranker(cfg.model.kind, split.train, hp, cfg.seeds.train, metric)
            auc = metric(model)
            grid_results.append({**point, "validation_auc": auc})
            logger.info("grid %s -> validation AUC %.5f", point, auc)
            if auc > best_auc:
                best, best_auc = model, auc
        model = best
    else:
        model = train_ranker(cfg.model.kind, split.train, base, cfg.seeds.train, metric)
    model.save(path)
    if grid_results:
        grid_path.write_text(json.dumps(grid_results, indent=2, sort_keys=True))
    logger.info("trained %s; cached as %s", cfg.model.kind, path.name)
    return model, grid_results


@_stage("assess")
def assess(cfg: RunConfig, split: SplitDataset, model: TrainedRanker, thresholds: Thresholds, t_s: float) -> list[UserAssessment]:
    key = cfg.digest("dataset", "split", "model", "thresholds") + f"-s{cfg.seeds.train}-n{cfg.seeds.negatives}"
    path = _cache_dir(cfg) / f"assessment-{key}.json"
    if path.exists():
        logger.info("cache hit: assessment %s", path.name)
        return [UserAssessment(**row) for row in json.loads(path.read_text())]
    rows = assess_users(split, model.score_users, thresholds, cfg.seeds.negatives, t_s)
    path.write_text(json.dumps([a.to_dict() for a in rows]))
    return rows


def prepare(cfg: RunConfig) -> Prepared:
    """Phase one: ingest, split, train, assess and classify every user."""
    dataset, catalog = ingest(cfg)
    split = make_split(cfg, dataset)
    thresholds, t_s = resolve_thresholds(cfg, dataset)
    model, grid = fit_model(cfg, split, thresholds)
    assessments = assess(cfg, split, model, thresholds, t_s)
    return Prepared(cfg, dataset, catalog, split, thresholds, t_s, model, assessments, grid)


# ---------------------------------------------------------------- phase two


def candidate_items(prep: Prepared, user: int, scores: np.ndarray | None = None) -> list[int]:
    """Items to rank for one user: held-out test items, or the RS top-n unseen items."""
    split = prep.split
    if prep.config.llm.candidate_source == "test":
        return [int(i) for i in split.test.items[split.test.rows_by_user()[user]]]
    seen = split.train.items[split.train.rows_by_user()[user]]
    if scores is None:
        scores = prep.model.score_users(np.array([user]))[0]
    masked = scores.astype(np.float64).copy()
    masked[seen] = -np.inf
    order = np.lexsort((np.arange(masked.size), -masked))
    return [int(i) for i in order[: prep.config.llm.top_n]]


def relevant_items(prep: Prepared, user: int) -> set[int]:
    test = prep.split.test
    rows = test.rows_by_user()[user]
    return {int(i) for i, r in zip(test.items[rows], test.ratings[rows]) if r >= prep.thresholds.relevance_cutoff}


def truth_ratings(prep: Prepared, user: int) -> dict[int, float]:
    """Held-out ratings for the oracle mocks; unrated candidates count as 0."""
    test = prep.split.test
    rows = test.rows_by_user()[user]
    return {int(i): float(r) for i, r in zip(test.items[rows], test.ratings[rows])}


def item_noun(cfg: RunConfig) -> tuple[str, str]:
    return ("books", "book") if cfg.dataset.format == "bookcrossing" else ("movies", "movie")


def rank_with_scores(items: Sequence[int], scores: np.ndarray) -> list[int]:
    """Same order as :func:`models.rank_candidates`, from a precomputed score row."""
    arr = np.asarray(items, dtype=np.int64)
    order = np.lexsort((arr, -scores[arr]))
    return [int(i) for i in arr[order]]


def instructions_for(prep: Prepared, users: Sequence[int]) -> dict[int, Instruction]:
    """Instructions keyed by user index; users with no candidates are left out."""
    out = {}
    for u in users:
        cands = candidate_items(prep, u)
        if not cands:
            logger.warning("user %s has nothing to rank; serving the RS list", prep.split.full.decode_user(u))
            continue
        out[u] = build_instruction(
            prep.split,
            prep.catalog,
            u,
            prep.config.llm.history_cap,
            prep.config.seeds.shuffle,
            candidate_items=cands,
            item_noun=item_noun(prep.config),
        )
    return out


def write_prompts(out_dir: Path, instructions: dict[int, Instruction]) -> int:
    pdir = out_dir / "prompts"
    pdir.mkdir(parents=True, exist_ok=True)
    for inst in instructions.values():
        (pdir / f"user_{inst.user_id}.txt").write_text(inst.rendered_text, encoding="utf-8")
    return len(instructions)


@dataclass
class HybridReport:
    rows: list[dict]
    aggregates: dict
    weak_before: int
    weak_after: int
    reduction_pct: float | None
    cost: dict
    counts: dict
    config: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _mean(values: Sequence[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def aggregate(rows: Sequence[dict]) -> dict:
    """Base and hybrid means recomputed from per-user rows.

    Undefined values are skipped; NDCG means only cover users with at least
    one relevant candidate.
    """
    weak = [r for r in rows if r["weak"]]
    scored = [r for r in rows if r["has_relevant"]]
    weak_scored = [r for r in weak if r["has_relevant"]]
    return {
        "base": {
            "auc": _mean([r["auc_rs"] for r in rows]),
            "auc_weak": _mean([r["auc_rs"] for r in weak]),
            "auc_candidate": _mean([r["auc_cand_rs"] for r in rows]),
            "auc_candidate_weak": _mean([r["auc_cand_rs"] for r in weak]),
            "ndcg10": _mean([r["ndcg10_rs"] for r in scored]),
            "ndcg10_weak": _mean([r["ndcg10_rs"] for r in weak_scored]),
        },
        "hybrid": {
            "auc_candidate": _mean([r["auc_cand_final"] for r in rows]),
            "auc_candidate_weak": _mean([r["auc_cand_final"] for r in weak]),
            "ndcg10": _mean([r["ndcg10_final"] for r in scored]),
            "ndcg10_weak": _mean([r["ndcg10_final"] for r in weak_scored]),
        },
    }


def _mock_for(cfg: RunConfig) -> MockLlm:
    m = cfg.llm.mock
    return MockLlm(m.kind, m.p, m.n_fake, cfg.seeds.shuffle)


def llm_label(cfg: RunConfig) -> str:
    if cfg.llm.mode == "mock":
        return "mock:" + _mock_for(cfg).label
    return cfg.llm.endpoint.model_name


def obtain_responses(
    prep: Prepared, instructions: dict[int, Instruction], client: LlmClient | None = None
) -> dict[int, str | Exception]:
    cfg = prep.config
    if cfg.llm.mode == "mock":
        mock = _mock_for(cfg)
        out: dict[int, str | Exception] = {}
        for u, inst in instructions.items():
            try:
                out[u] = mock_complete(mock, inst, truth_ratings(prep, u))
            except Exception as exc:  # noqa: BLE001
                out[u] = exc
        return out
    ep = cfg.llm.endpoint
    endpoint = LlmEndpoint(
        ep.base_url, ep.model_name, ep.temperature, ep.timeout, ep.max_concurrency, ep.max_attempts, ep.backoff_base
    )
    own = client is None
    client = client or LlmClient(endpoint)
    try:
        return dispatch(((u, inst.rendered_text) for u, inst in instructions.items()), client.complete, endpoint.max_concurrency)
    finally:
        if own:
            client.close()


@_stage("hybrid")
def hybrid_phase(prep: Prepared, out_dir: Path, client: LlmClient | None = None) -> HybridReport:
    cfg = prep.config
    split = prep.split
    weak_users = [a.user_index for a in prep.assessments if a.weak]
    instructions = instructions_for(prep, weak_users)
    if cfg.llm.dump_prompts:
        write_prompts(out_dir, instructions)
    responses = obtain_responses(prep, instructions, client)

    rdir = out_dir / "responses"
    rdir.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    auc_llm_effective: dict[str, float] = {}
    n_parse_failures = n_llm_errors = n_dropped_lines = 0

    for start in range(0, split.n_users, 256):
        batch = np.arange(start, min(start + 256, split.n_users))
        score_block = prep.model.score_users(batch)
        for row_idx, u in enumerate(batch):
            u = int(u)
            a = prep.assessments[u]
            cands = candidate_items(prep, u, score_block[row_idx])
            rel = relevant_items(prep, u)
            labels = {i: 1.0 for i in rel}
            rs = RankedList(a.user_id, rank_with_scores(cands, score_block[row_idx]), "rs") if cands else RankedList(a.user_id, [], "rs")
            final = rs
            auc_llm = None
            if a.weak and u not in instructions:
                final = RankedList(a.user_id, list(rs.items), "rs_fallback")
                auc_llm_effective[a.user_id] = a.auc
            elif a.weak:
                inst = instructions[u]
                resp = responses[u]
                titles = inst.title_to_item()
                if isinstance(resp, Exception):
                    n_llm_errors += 1
                    logger.warning("llm call failed for user %s: %s", a.user_id, resp)
                    (rdir / f"user_{a.user_id}.txt").write_text(f"ERROR: {resp}\n", encoding="utf-8")
                    final = RankedList(a.user_id, list(rs.items), "rs_fallback")
                else:
                    (rdir / f"user_{a.user_id}.txt").write_text(resp, encoding="utf-8")
                    by_item = {i: t for t, i in titles.items()}
                    try:
                        parsed = parse_ranked_response(resp, inst.candidates, [by_item[i] for i in rs.items])
                    except ParseFailure:
                        n_parse_failures += 1
                        final = RankedList(a.user_id, list(rs.items), "rs_fallback")
                    else:
                        n_dropped_lines += len(parsed.dropped_lines)
                        llm = RankedList(a.user_id, [titles[t] for t in parsed.order], "llm")
                        auc_llm = candidate_auc(llm.items, rel)
                        final = merge_rankings(rs, llm, rel, cfg.merge_mode)
                # unmeasurable LLM outcome keeps the RS assessment
                auc_llm_effective[a.user_id] = auc_llm if auc_llm is not None else a.auc
            has_rel = bool(rel) and bool(cands)
            rows.append(
                {
                    "user_id": a.user_id,
                    "n_train": a.n_train,
                    "n_test": a.n_test,
                    "sparsity_index": a.sparsity_index,
                    "auc_rs": a.auc,
                    "auc_cand_rs": candidate_auc(rs.items, rel),
                    "auc_llm": auc_llm,
                    "auc_cand_final": candidate_auc(final.items, rel),
                    "ndcg10_rs": ndcg_at_k(rs.items, labels, 10) if cands else None,
                    "ndcg10_final": ndcg_at_k(final.items, labels, 10) if cands else None,
                    "inactive": a.inactive,
                    "weak": a.weak,
                    "weak_after": a.weak and auc_llm_effective[a.user_id] <= prep.thresholds.t_p,
                    "source": final.source,
                    "has_relevant": has_rel,
                    "ranked_items": [split.full.decode_item(i) for i in final.items],
                }
            )

    weak_assessments = [a for a in prep.assessments if a.weak]
    weak_before = len(weak_assessments)
    weak_after = weak_count_after(weak_assessments, auc_llm_effective, prep.thresholds.t_p)
    report = HybridReport(
        rows=rows,
        aggregates=aggregate(rows),
        weak_before=weak_before,
        weak_after=weak_after,
        reduction_pct=(1.0 - weak_after / weak_before) if weak_before else None,
        cost=cost_report(weak_before, split.n_users, cfg.llm.query_seconds),
        counts={
            "users": split.n_users,
            "items": split.n_items,
            "interactions": prep.dataset.n_interactions,
            "inactive": sum(a.inactive for a in prep.assessments),
            "unassessable": sum(a.auc is None for a in prep.assessments),
            "llm_errors": n_llm_errors,
            "parse_failures": n_parse_failures,
            "out_of_list_lines_dropped": n_dropped_lines,
            "served_by_llm": sum(r["source"] == "llm" for r in rows),
        },
        config=config_echo(prep),
    )
    if client is not None and client.records:
        report.cost["measured_seconds"] = sum(r.latency_seconds for r in client.records)
    return report


def config_echo(prep: Prepared) -> dict:
    cfg = prep.config
    return {
        "dataset_format": cfg.dataset.format,
        "model": cfg.model.kind,
        "hyperparameters": prep.model.hyperparameters.to_dict(),
        "grid_search": cfg.model.grid,
        "grid_results": prep.grid_results,
        "thresholds": {
            "t_p": prep.thresholds.t_p,
            "t_s": prep.t_s,
            "t_s_mode": cfg.thresholds.t_s_mode,
            "relevance_cutoff": prep.thresholds.relevance_cutoff,
            "n_sampled_negatives": prep.thresholds.n_sampled_negatives,
            "inactive_rule": "sparsity_index < t_s",
        },
        "seeds": {"split": cfg.split.seed, **cfg.seeds.model_dump()},
        "split_ratios": list(cfg.split.ratios),
        "llm": llm_label(cfg),
        "llm_temperature": cfg.llm.endpoint.temperature if cfg.llm.endpoint else None,
        "merge_mode": cfg.merge_mode,
        "candidate_source": cfg.llm.candidate_source,
        "history_cap": cfg.llm.history_cap,
    }


# ---------------------------------------------------------------- artifacts


def _csv_text(columns: list[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return buf.getvalue()


def assessment_rows(assessments: Sequence[UserAssessment]) -> list[dict]:
    return [
        {
            "user_id": a.user_id,
            "n_train": a.n_train,
            "n_test": a.n_test,
            "sparsity_index": repr(a.sparsity_index),
            "auc_rs": None if a.auc is None else repr(a.auc),
            "inactive": int(a.inactive),
            "weak": int(a.weak),
        }
        for a in assessments
    ]


def write_assessment(out_dir: Path, assessments: Sequence[UserAssessment]) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "assessment.csv"
    path.write_text(_csv_text(ASSESSMENT_COLUMNS, assessment_rows(assessments)), encoding="utf-8")
    (out_dir / "weak_users.txt").write_text(
        "".join(f"{a.user_id}\n" for a in assessments if a.weak), encoding="utf-8"
    )
    return path


def read_assessment(out_dir: Path) -> list[dict]:
    path = out_dir / "assessment.csv"
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def weak_count_row(report: HybridReport) -> dict:
    return {
        "model": report.config["model"],
        "llm_kind": report.config["llm"],
        "weak_before": report.weak_before,
        "weak_after": report.weak_after,
        "reduction_pct": "" if report.reduction_pct is None else repr(report.reduction_pct),
    }


def write_report(out_dir: Path, report: HybridReport) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "users.csv").write_text(_csv_text(USER_COLUMNS, report.rows), encoding="utf-8")
    (out_dir / "weak_counts.csv").write_text(_csv_text(WEAK_COUNT_COLUMNS, [weak_count_row(report)]), encoding="utf-8")


def run_hybrid(cfg: RunConfig, client: LlmClient | None = None, figures: bool | None = None) -> HybridReport:
    """Algorithm end to end; writes every artifact into ``cfg.output_dir``."""
    out_dir = Path(cfg.output_dir)
    prep = prepare(cfg)
    write_assessment(out_dir, prep.assessments)
    report = hybrid_phase(prep, out_dir, client)
    write_report(out_dir, report)
    if cfg.figures if figures is None else figures:
        from .plots import render_report_figures

        render_report_figures(out_dir, report)
    return report
