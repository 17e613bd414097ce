import json

import pytest

from eflfg.cli import SUMMARY_COLUMNS, main
from eflfg.config import ExperimentConfig, config_from_dict, parse_config, serialize_config
from eflfg.errors import ConfigError
from eflfg.zoo import load_catalog

SYN = {"synthetic": {"feature_count": 2, "sample_count": 300, "noise": 0.05, "family": "sine"}}
TINY_ZOO = [
    {"family": "gaussian-kernel", "hyperparameter": 1.0},
    {"family": "polynomial-kernel", "hyperparameter": 2},
    {"family": "mlp", "layers": [4], "epochs": 20},
]


def write_config(tmp_path, **overrides):
    raw = {"dataset": SYN, "zoo": TINY_ZOO, "rounds": 25, "clients": 10, "pretrain_fraction": 0.3}
    raw.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    return path


def test_defaults():
    cfg = config_from_dict({"dataset": SYN})
    assert cfg.budget == 3.0 and cfg.clients == 100 and cfg.zoo == "paper"
    assert len(cfg.model_specs()) == 22
    assert cfg.algorithms == ("efl-fg", "fedboost-surrogate")


def test_rate_token():
    cfg = config_from_dict({"dataset": SYN, "rounds": 400})
    assert cfg.rates() == pytest.approx((0.05, 0.05))
    cfg = config_from_dict({"dataset": SYN, "rounds": 400, "eta": 0.2})
    assert cfg.rates()[0] == 0.2


@pytest.mark.parametrize("raw, key", [
    ({"budget": 0.1}, "budget"),
    ({"budget": "3"}, "budget"),
    ({"bogus": 1}, "bogus"),
    ({"rounds": 1.5}, "rounds"),
    ({"eta": "fast"}, "eta"),
    ({"xi": 1.0}, "xi"),
    ({"algorithms": ["efl-fg", "magic"]}, "algorithms"),
    ({"seeds": [-1]}, "seeds"),
    ({"zoo": [{"family": "rbf"}]}, "zoo[0]"),
    ({"oracle": 1}, "oracle"),
])
def test_invalid_configs(raw, key):
    with pytest.raises(ConfigError, match=key.replace("[", r"\[").replace("]", r"\]")):
        config_from_dict({"dataset": SYN, **raw})


def test_dataset_validation():
    with pytest.raises(ConfigError, match="dataset"):
        config_from_dict({})
    with pytest.raises(ConfigError, match="exactly one"):
        config_from_dict({"dataset": {"csv": "a.csv", "target": 0, **SYN}})
    with pytest.raises(ConfigError, match="target"):
        config_from_dict({"dataset": {"csv": "a.csv"}})


def test_round_trip(tmp_path):
    cfg = config_from_dict({"dataset": SYN, "zoo": TINY_ZOO, "seeds": [1, 2], "eta": 0.1, "alpha": True})
    path = tmp_path / "c.json"
    path.write_text(serialize_config(cfg))
    again = parse_config(path)
    assert isinstance(again, ExperimentConfig)
    assert again == cfg


def test_parse_errors(tmp_path):
    with pytest.raises(ConfigError, match="no such"):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config(bad)


def read_csv(path):
    import csv
    with open(path) as f:
        return list(csv.DictReader(f))


def test_run_grid_and_rerun(tmp_path):
    cfg = write_config(tmp_path, seeds=[0, 1, 2], graph_dump=True, budget=1.5)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", "--config", str(cfg), "--out", str(out1), "--quiet"]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(out2), "--quiet"]) == 0
    traces = sorted(p.name for p in out1.glob("trace_*.csv"))
    assert len(traces) == 6
    summary = read_csv(out1 / "summary.csv")
    assert len(summary) == 6 and list(summary[0]) == SUMMARY_COLUMNS
    assert {(r["algorithm"], r["seed"]) for r in summary} == {
        (a, str(s)) for a in ("efl-fg", "fedboost-surrogate") for s in (0, 1, 2)
    }
    for r in summary:
        if r["algorithm"] == "efl-fg":
            assert float(r["budget_violation_pct"]) == 0.0
    for name in traces + ["summary.csv", "mse_curve.csv"]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
    assert len(read_csv(out1 / "mse_curve.csv")) == 6 * 25
    graphs = (out1 / "graphs_efl-fg_seed0.txt").read_text()
    assert graphs.startswith("# round 1\n") and "D:" in graphs
    assert len(read_csv(out1 / "timing.csv")) == 6
    assert not list(out1.glob("*.partial"))


def test_seed_override(tmp_path):
    cfg = write_config(tmp_path, seeds=[0, 1], algorithms=["full-ensemble"])
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed-override", "7", "--quiet"]) == 0
    assert [p.name for p in (tmp_path / "o").glob("trace_*.csv")] == ["trace_full-ensemble_seed7.csv"]


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, budget=0.1, output_dir=str(tmp_path / "never"))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "budget" in capsys.readouterr().err
    assert not (tmp_path / "never").exists()
    assert main(["validate", "--config", str(tmp_path / "absent.json")]) == 2


def test_runtime_error_exit_code(tmp_path):
    # bandwidth cannot carry even one client loss report
    cfg = write_config(tmp_path, b_t=1.0)
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) == 3
    assert (out / "summary.csv.partial").exists()
    assert not list(out.glob("trace_*.csv"))


def test_validate_and_zoo(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["validate", "--config", str(cfg)]) == 0
    assert "ok" in capsys.readouterr().out
    dump = tmp_path / "zoo.json"
    assert main(["zoo", "--config", str(cfg), "--dump", str(dump), "--quiet"]) == 0
    catalog = load_catalog(dump)
    assert catalog.size == 3 and max(catalog.costs) == 1.0
