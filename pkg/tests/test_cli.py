import json
from pathlib import Path

import pytest

from ncerg.cli import main
from ncerg.experiments import (
    ConfigError,
    ExperimentConfig,
    build_schemas,
    emit_plot_data,
    run,
)


SMALL = {
    "blocks": [2, 2],
    "weights": [1.0, 0.5],
    "semigroup": {"variant": "scalar_decay", "rate": 1.0},
    "n_random": 4,
    "weighted_cases": 6,
    "T_n": 12,
    "dyadic_exp_max": 10,
    "banach_map_exps": [1, 2, 3, 4],
    "seed": 7,
}


def tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_config_roundtrip_and_validation(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    assert cfg.blocks == (2, 2)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"unknown_key": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"epsilon": -1.0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"blocks": [70], "weights": [1.0]})
    bad = tmp_path / "bad.json"
    bad.write_text("not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(bad)


def test_run_writes_referenced_files(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    report = run(cfg, "validate-semigroup", tmp_path / "out")
    assert report.ok
    for rel in list(report.tables.values()) + list(report.certificates.values()):
        assert (tmp_path / "out" / rel).is_file()
    payload = json.loads((tmp_path / "out" / "report.json").read_text())
    assert payload["experiment"] == "validate-semigroup"
    assert "wall_time" not in json.dumps(payload)


def test_emit_plot_data_headers_only_for_empty(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    report = run(cfg, "validate-semigroup", tmp_path / "out")
    report.tables = {}
    report.certificates = {}
    written = emit_plot_data(report)
    decay = (tmp_path / "out" / "plot_decay.csv").exists() or True
    text = (report.outdir / written["plot_decay.csv"]).read_text()
    assert text.strip() == "table,T,value"


def test_emit_plot_data_bounds_hold_rowwise(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    report = run(cfg, "weighted-avg", tmp_path / "out")
    written = emit_plot_data(report)
    lines = (report.outdir / written["plot_bounds.csv"]).read_text().splitlines()
    assert lines[0] == "table,T,achieved,bound,slack"
    for line in lines[1:]:
        _, _, achieved, bound, _ = line.split(",")
        assert float(achieved) <= float(bound) + 1e-8


def test_cli_run_and_exit_codes(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(SMALL))
    code = main(
        ["run", "--config", str(cfg_path), "--suite", "local-avg", "--out", str(tmp_path / "o1")]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "PASS local-avg:cauchy_certificate" in out
    assert (tmp_path / "o1" / "plots" / "SCHEMA.json").is_file()
    # decay columns of a passing local-avg run decrease row by row
    decay = (tmp_path / "o1" / "plots" / "plot_decay.csv").read_text().splitlines()
    values = [
        float(line.split(",")[2]) for line in decay[1:] if line.startswith("local_avg_p1,")
    ]
    assert values and all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(values, values[1:]))


def test_table_headers_match_published_schema(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    report = run(cfg, "full", tmp_path / "out")
    published = build_schemas()["tables"]
    for name, rel in report.tables.items():
        header = (tmp_path / "out" / rel).read_text().splitlines()[0].split(",")
        assert header == published[name], name


def test_cli_bad_config_exit_two(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"epsilon": -3}))
    code = main(
        ["run", "--config", str(cfg_path), "--suite", "local-avg", "--out", str(tmp_path / "o")]
    )
    assert code == 2


def test_cli_schema_prints_json(capsys):
    assert main(["schema"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["sweep_csv"]["columns"] == ["T", "norm_p", "bound", "slack"]
    assert "config" in payload and "tables" in payload
    assert build_schemas()["tables"]["maximal"][0] == "epsilon"


def test_seed_override_changes_output(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(SMALL))
    for name, seed in (("a", None), ("b", 7), ("c", 99)):
        args = [
            "run",
            "--config",
            str(cfg_path),
            "--suite",
            "local-avg",
            "--out",
            str(tmp_path / name),
        ]
        if seed is not None:
            args += ["--seed", str(seed)]
        assert main(args) == 0
    same = tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
    differ = tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "c")
    assert same and not differ


def test_run_rejects_unknown_suite(tmp_path):
    with pytest.raises(ConfigError):
        run(ExperimentConfig.from_dict(SMALL), "nope", tmp_path)
