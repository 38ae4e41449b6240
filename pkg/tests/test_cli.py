import csv
import json

import pytest

from hybridrank.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, aggregate_block, main
from hybridrank.config import ConfigError, json_schema, load_config, parse_config

from conftest import write_config

BASE = {"dataset": {"path": "u.data", "format": "ml100k"}, "model": {"kind": "bpr"}}


class TestConfig:
    def test_defaults(self):
        cfg = parse_config(BASE)
        assert cfg.thresholds.t_p == 0.5 and cfg.thresholds.t_s_mode == "auto"
        assert cfg.merge_mode == "evaluation" and cfg.llm.query_seconds == 8.0
        assert cfg.split.ratios == (0.8, 0.1, 0.1)

    @pytest.mark.parametrize(
        "patch, field",
        [
            ({"thresholds": {"t_p": 1.5}}, "thresholds.t_p"),
            ({"thresholds": {"t_s_mode": "fixed"}}, "thresholds"),
            ({"split": {"ratios": [0.5, 0.5, 0.5]}}, "split.ratios"),
            ({"model": {"kind": "svd"}}, "model.kind"),
            ({"llm": {"mode": "endpoint"}}, "llm"),
            ({"llm": {"endpoint": {"base_url": "x", "model_name": "m", "temperature": -1}}}, "llm.endpoint.temperature"),
            ({"surprise": 1}, "surprise"),
        ],
    )
    def test_invalid_values_name_the_field(self, patch, field):
        with pytest.raises(ConfigError) as info:
            parse_config({**BASE, **patch})
        assert str(info.value).startswith(field)

    def test_relative_paths_resolve_against_config(self, tmp_path):
        (tmp_path / "run.json").write_text(json.dumps(BASE))
        cfg = load_config(tmp_path / "run.json")
        assert cfg.dataset.path == str(tmp_path / "u.data")

    def test_open_profile_latency(self):
        assert parse_config({**BASE, "llm": {"latency_profile": "open"}}).llm.query_seconds == 11.0

    def test_digest_ignores_unrelated_sections(self):
        a = parse_config(BASE)
        b = parse_config({**BASE, "thresholds": {"t_p": 0.3}})
        assert a.digest("model") == b.digest("model") and a.digest() != b.digest()

    def test_schema_lists_sections(self):
        assert {"dataset", "model", "thresholds", "llm"} <= set(json_schema()["properties"])


class TestCliErrors:
    def test_bad_threshold_exits_2(self, tmp_path, capsys):
        path = write_config(tmp_path, thresholds={"t_p": 1.5})
        assert main(["run", "--config", str(path)]) == EXIT_CONFIG
        assert "thresholds.t_p" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["assess", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG

    def test_missing_dataset_exits_1(self, tmp_path, capsys):
        path = write_config(tmp_path, dataset={"path": str(tmp_path / "missing.data"), "format": "ml100k"})
        assert main(["run", "--config", str(path)]) == EXIT_STAGE
        assert "ingest" in capsys.readouterr().err

    def test_prompts_without_assessment(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["prompts", "--config", str(path)]) == EXIT_STAGE
        assert "hybridrank assess" in capsys.readouterr().err

    def test_schema_command(self, capsys):
        assert main(["schema"]) == EXIT_OK
        assert "properties" in json.loads(capsys.readouterr().out)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestCliOnMl100k:
    def test_assess_writes_one_row_per_user(self, ml100k, tmp_path, caplog):
        path = write_config(tmp_path)
        assert main(["assess", "--config", str(path)]) == EXIT_OK
        rows = read_csv(tmp_path / "out" / "assessment.csv")
        assert len(rows) == 943
        weak_ids = (tmp_path / "out" / "weak_users.txt").read_text().split()
        assert weak_ids == [r["user_id"] for r in rows if r["weak"] == "1"]

        caplog.clear()
        caplog.set_level("INFO")
        assert main(["assess", "--config", str(path)]) == EXIT_OK
        assert "cache hit: model" in caplog.text
        assert "trained itemknn" not in caplog.text

    def test_zero_t_p_means_no_weak_users(self, ml100k, tmp_path):
        path = write_config(tmp_path, thresholds={"t_p": 0.0})
        assert main(["assess", "--config", str(path)]) == EXIT_OK
        rows = read_csv(tmp_path / "out" / "assessment.csv")
        assert all(r["weak"] == "0" or float(r["auc_rs"]) == 0.0 for r in rows)

        assert main(["prompts", "--config", str(path)]) == EXIT_OK
        n_weak = sum(r["weak"] == "1" for r in rows)
        assert len(list((tmp_path / "out" / "prompts").glob("*.txt"))) == n_weak

    def test_prompt_files_match_weak_users_and_rerun(self, ml100k, tmp_path):
        path = write_config(tmp_path)
        assert main(["assess", "--config", str(path)]) == EXIT_OK
        assert main(["prompts", "--config", str(path)]) == EXIT_OK
        out = tmp_path / "out"
        weak_ids = (out / "weak_users.txt").read_text().split()
        files = sorted(p.name for p in (out / "prompts").iterdir())
        assert files == sorted(f"user_{u}.txt" for u in weak_ids)
        first = {p.name: p.read_bytes() for p in (out / "prompts").iterdir()}
        assert main(["prompts", "--config", str(path)]) == EXIT_OK
        assert {p.name: p.read_bytes() for p in (out / "prompts").iterdir()} == first

    def test_run_stdout_matches_report(self, ml100k, tmp_path, capsys):
        path = write_config(tmp_path, figures=True)
        assert main(["run", "--config", str(path)]) == EXIT_OK
        out = tmp_path / "out"
        for name in ("report.json", "assessment.csv", "users.csv", "weak_counts.csv",
                     "auc_vs_sparsity.png", "weak_counts.png"):
            assert (out / name).exists(), name
        report = json.loads((out / "report.json").read_text())
        stdout = capsys.readouterr().out
        for section in ("base", "hybrid"):
            for value in report["aggregates"][section].values():
                assert repr(value) in stdout
        assert f"weak_before={report['weak_before']} weak_after={report['weak_after']}" in stdout
        assert f"total_seconds={report['cost']['total_seconds']!r}" in stdout

    def test_seed_override_changes_split(self, ml100k, tmp_path):
        path = write_config(tmp_path)
        assert main(["assess", "--config", str(path), "--seed", "3", "--output-dir", str(tmp_path / "s3")]) == EXIT_OK
        assert main(["assess", "--config", str(path), "--output-dir", str(tmp_path / "s0")]) == EXIT_OK
        a = (tmp_path / "s3" / "assessment.csv").read_text()
        b = (tmp_path / "s0" / "assessment.csv").read_text()
        assert a != b


def test_aggregate_block_prints_missing_as_dash():
    class R:
        aggregates = {"base": dict.fromkeys(["auc", "auc_weak", "auc_candidate", "auc_candidate_weak", "ndcg10",
                                             "ndcg10_weak"]),
                      "hybrid": dict.fromkeys(["auc_candidate", "auc_candidate_weak", "ndcg10", "ndcg10_weak"])}
        config = {"model": "bpr", "llm": "mock:echo", "merge_mode": "evaluation", "thresholds": {"t_p": 0.5, "t_s": 0.1}}
        weak_before, weak_after, reduction_pct = 0, 0, None
        cost = {"n_queries": 0, "per_query_seconds": 8.0, "total_seconds": 0.0, "all_users_seconds": 80.0,
                "savings_pct": 1.0}

    text = aggregate_block(R())
    assert "reduction_pct=-" in text and "savings_pct=1.0" in text
