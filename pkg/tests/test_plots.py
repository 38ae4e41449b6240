from hybridrank.plots import auc_vs_sparsity, weak_count_bars

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def test_scatter_skips_undefined_auc(tmp_path):
    rows = [
        {"auc_rs": "0.2", "sparsity_index": "0.01", "weak": "1"},
        {"auc_rs": 0.8, "sparsity_index": 0.3, "weak": False},
        {"auc_rs": "", "sparsity_index": "0.02", "weak": "0"},
        {"auc_rs": None, "sparsity_index": "0.02", "weak": "0"},
    ]
    path = auc_vs_sparsity(rows, tmp_path / "s.png", t_p=0.5, t_s=0.06, title="itemknn / ml100k")
    assert path.read_bytes().startswith(PNG_MAGIC)


def test_weak_count_bars(tmp_path):
    rows = [
        {"model": "itemknn", "llm_kind": "mock:oracle", "weak_before": 126, "weak_after": 0},
        {"model": "bpr", "llm_kind": "chat-model", "weak_before": "40", "weak_after": "6"},
    ]
    assert weak_count_bars(rows, tmp_path / "w.png").read_bytes().startswith(PNG_MAGIC)
