"""``hybridrank`` command line.

    hybridrank assess  --config run.json    # phase one only, no LLM calls
    hybridrank prompts --config run.json    # write prompts/user_<id>.txt for weak users
    hybridrank run     --config run.json    # both phases, full report
    hybridrank schema                       # JSON schema of the config file

Exit codes: 0 success, 1 stage failure, 2 config error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, json_schema, load_config

EXIT_OK, EXIT_STAGE, EXIT_CONFIG = 0, 1, 2

logger = logging.getLogger("hybridrank")


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    updates = {}
    if args.output_dir:
        updates["output_dir"] = str(args.output_dir)
    if args.seed is not None:
        updates["split"] = cfg.split.model_copy(update={"seed": args.seed})
        updates["seeds"] = cfg.seeds.model_copy(update={"train": args.seed, "shuffle": args.seed, "negatives": args.seed})
    if args.no_figures:
        updates["figures"] = False
    return cfg.model_copy(update=updates)


def _fmt(value) -> str:
    return "-" if value is None else repr(value)


def aggregate_block(report) -> str:
    """Plain-text table of the report aggregates; numbers are repr() of the JSON values."""
    base, hyb = report.aggregates["base"], report.aggregates["hybrid"]
    cfg = report.config
    rows = [
        ("AUC", base["auc"], None),
        ("AUC (weak users)", base["auc_weak"], None),
        ("AUC candidate-set", base["auc_candidate"], hyb["auc_candidate"]),
        ("AUC candidate-set (weak users)", base["auc_candidate_weak"], hyb["auc_candidate_weak"]),
        ("NDCG@10", base["ndcg10"], hyb["ndcg10"]),
        ("NDCG@10 (weak users)", base["ndcg10_weak"], hyb["ndcg10_weak"]),
    ]
    lines = [
        f"model={cfg['model']} llm={cfg['llm']} merge={cfg['merge_mode']} t_p={cfg['thresholds']['t_p']!r} t_s={cfg['thresholds']['t_s']!r}",
        f"{'metric':<32}{'base':<24}{'hybrid':<24}",
    ]
    lines += [f"{name:<32}{_fmt(b):<24}{_fmt(h):<24}" for name, b, h in rows]
    cost = report.cost
    lines += [
        f"weak_before={report.weak_before} weak_after={report.weak_after} reduction_pct={_fmt(report.reduction_pct)}",
        f"n_queries={cost['n_queries']} per_query_seconds={cost['per_query_seconds']!r} "
        f"total_seconds={cost['total_seconds']!r} all_users_seconds={cost['all_users_seconds']!r} "
        f"savings_pct={cost['savings_pct']!r}",
    ]
    return "\n".join(lines)


def cmd_run(args) -> int:
    from .pipeline import run_hybrid

    cfg = _load(args)
    report = run_hybrid(cfg)
    print(aggregate_block(report))
    print(f"artifacts written to {cfg.output_dir}")
    return EXIT_OK


def cmd_assess(args) -> int:
    from .pipeline import assessment_rows, prepare, write_assessment

    cfg = _load(args)
    prep = prepare(cfg)
    out_dir = Path(cfg.output_dir)
    path = write_assessment(out_dir, prep.assessments)
    if cfg.figures:
        from .plots import render_assessment_figure

        render_assessment_figure(
            out_dir, assessment_rows(prep.assessments), prep.thresholds.t_p, prep.t_s, f"{cfg.model.kind} / {cfg.dataset.format}"
        )
    n_weak = sum(a.weak for a in prep.assessments)
    print(f"users={len(prep.assessments)} inactive={sum(a.inactive for a in prep.assessments)} "
          f"unassessable={sum(a.auc is None for a in prep.assessments)} weak={n_weak}")
    print(f"assessment written to {path}")
    return EXIT_OK


def cmd_prompts(args) -> int:
    from .pipeline import instructions_for, prepare, read_assessment, write_prompts

    cfg = _load(args)
    out_dir = Path(cfg.output_dir)
    if not (out_dir / "assessment.csv").exists():
        print(f"error: no assessment in {out_dir}; run `hybridrank assess` first", file=sys.stderr)
        return EXIT_STAGE
    weak_ids = {row["user_id"] for row in read_assessment(out_dir) if row["weak"] == "1"}
    prep = prepare(cfg)
    users = [u for u in range(prep.split.n_users) if prep.split.full.decode_user(u) in weak_ids]
    count = write_prompts(out_dir, instructions_for(prep, users))
    print(f"wrote {count} prompt files to {out_dir / 'prompts'}")
    return EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(json_schema(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridrank", description="Hybrid RS + LLM ranking experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in [
        ("run", cmd_run, "train, assess, prompt weak users, merge and report"),
        ("assess", cmd_assess, "phase one only: per-user AUC, density and weak flags"),
        ("prompts", cmd_prompts, "write ranking prompts for the weak users of a prior assessment"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--output-dir", type=Path)
        p.add_argument("--seed", type=int, help="override every seed")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
        p.set_defaults(func=fn)
    p = sub.add_parser("schema", help="print the config JSON schema")
    p.set_defaults(func=cmd_schema)
    return parser


def main(argv: list[str] | None = None) -> int:
    from .pipeline import StageError

    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
