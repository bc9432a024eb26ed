import csv
import math

import numpy as np
import pytest

from cann import bench
from cann.bench import CSV_COLUMNS, config_from_dict, format_table, parse_number, run_experiment
from cann.grid import ConfigurationError

TINY = {
    "name": "tiny", "problem": "heat2d", "train_variant": "sin", "test_variants": ["cos"],
    "meshes": ["pi/4", "pi/8"], "dt": {"rule": "multiplier", "values": [1]}, "stencil": "edge",
    "hidden": [4], "train": {"max_iters": 300, "log_every": 50}, "T": "pi/2", "seeds": [0, 1],
}


def tiny(**kw):
    doc = dict(TINY)
    doc.update(kw)
    return config_from_dict(doc)


@pytest.mark.parametrize("text,value", [("pi/16", math.pi / 16), ("1/16", 0.0625), (0.5, 0.5),
                                        ("2*pi/8", math.pi / 4), ("1e-3", 1e-3), (3, 3.0), ("-pi", -math.pi)])
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text", ["pie/2", "__import__('os')", "1/0", "", True])
def test_parse_number_rejects(text):
    with pytest.raises(ConfigurationError):
        parse_number(text)


@pytest.mark.parametrize("change", [
    {"colour": "red"}, {"problem": "heat9d"}, {"test_variants": ["tan"]}, {"meshes": ["0.3"]},
    {"T": "1.0"}, {"dt": {"rule": "multiplier", "values": [0.3]}}, {"stencil": "star"},
    {"target_mode": "magic"}, {"train": {"learning": 1}}, {"train": {"tolerance": -1}},
    {"dt": {"rule": "sometimes", "values": [1]}}, {"seeds": []}, {"hidden": [0]},
])
def test_bad_configs(change):
    with pytest.raises(ConfigurationError):
        tiny(**change)


def test_exact_targets_rejected_without_exact_solution(tmp_path):
    cfg = tiny(problem="ns_vorticity2d", train_variant="2cosy_sinx", test_variants=["2cosx_siny"],
               target_mode="exact", T="pi/4", meshes=["pi/4"], seeds=[0])
    with pytest.raises(ConfigurationError):
        run_experiment(cfg, tmp_path)


def test_defaults_come_from_problem_catalog():
    cfg = config_from_dict({"problem": "pme2d", "meshes": ["1/4"]})
    assert (cfg.train_variant, cfg.test_variants, cfg.stencil, cfg.hidden) == ("c15", ("c11",), "edge", (6,))
    assert cfg.T == 1.0 and cfg.seeds == (0, 1, 2)


def test_config_hash_tracks_semantic_fields():
    h = tiny().config_hash()
    assert tiny(name="other", output="elsewhere").config_hash() == h
    assert tiny(meshes=["pi/4", "2*pi/16"]).config_hash() == h
    assert tiny(seeds=[0, 2]).config_hash() != h
    assert tiny(train={"max_iters": 301, "log_every": 50}).config_hash() != h
    assert tiny(T="pi").config_hash() != h
    assert tiny(target_mode="exact").config_hash() != h


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_experiment_outputs(tmp_path):
    rec = run_experiment(tiny(), tmp_path)
    assert rec.exit_code == 0 and not rec.failures
    rows = read_csv(tmp_path / "results.csv")
    assert tuple(rows[0].keys()) == CSV_COLUMNS
    assert len(rows) == 2
    allr = read_csv(tmp_path / "all_runs.csv")
    assert len(allr) == 4
    for r in rows:
        same = [a for a in allr if a["dx"] == r["dx"]]
        assert float(r["l2"]) == min(float(a["l2"]) for a in same)
        assert r["seed"] in {a["seed"] for a in same}
    assert rows[0]["order_l2"] == ""
    o = math.log(float(rows[0]["l2"]) / float(rows[1]["l2"])) / math.log(2)
    assert float(rows[1]["order_l2"]) == pytest.approx(o, rel=1e-12)
    assert len(list((tmp_path / "histories").glob("*.csv"))) == 4
    assert len(list((tmp_path / "checkpoints").glob("*.json"))) == 4
    assert (tmp_path / "record.json").exists()
    table = (tmp_path / "table.txt").read_text()
    assert f"{float(rows[0]['l2']):.4e}" in table


def test_zero_step_config_measures_initial_discrepancy(tmp_path):
    rec = run_experiment(tiny(T=0, meshes=["pi/4"], seeds=[0]), tmp_path)
    assert rec.best[0].l2 == 0.0
    rec = run_experiment(tiny(problem="ns_vorticity2d", train_variant="2cosy_sinx", test_variants=["2cosx_siny"],
                              T=0, meshes=["pi/4"], seeds=[0]), tmp_path / "ns")
    assert rec.best[0].l2 == 0.0


def test_split_regime_reports_heldout(tmp_path):
    cfg = tiny(problem="nonlinear2d", train_variant="quadratic", test_variants=["quadratic"], meshes=["1/4"],
               T=1, train={"split": "random", "max_iters": 200}, seeds=[0])
    rec = run_experiment(cfg, tmp_path)
    variants = [r.variant for r in rec.best]
    assert variants == ["quadratic", "heldout"]
    held = rec.best[1]
    assert held.T == pytest.approx(0.25) and np.isfinite(held.l2)


def test_divergence_marks_failed_and_continues(tmp_path):
    cfg = tiny(train={"optimizer": "sgd", "lr": 1e8, "max_iters": 50, "log_every": 1, "max_restarts": 1})
    rec = run_experiment(cfg, tmp_path)
    assert rec.exit_code == bench.EXIT_DIVERGED
    assert len(rec.runs) == 4 and all(r.status == "diverged" for r in rec.runs)
    assert rec.best == []
    assert len(read_csv(tmp_path / "all_runs.csv")) == 4


def test_blow_up_marks_failed(tmp_path, monkeypatch):
    from cann.evolve import BlowUpError

    def explode(params, field, plan):
        raise BlowUpError(3, (0, 0), float("inf"))
    monkeypatch.setattr(bench, "march", explode)
    rec = run_experiment(tiny(meshes=["pi/4"], seeds=[0]), tmp_path)
    assert rec.exit_code == bench.EXIT_BLOWUP
    assert rec.runs[0].status == "blowup"


def test_format_table_five_digits():
    cfg = tiny()
    r = bench.SeedRun("cos", math.pi / 4, math.pi / 4, math.pi, 1, l2=3.28719e-4, linf=1.0e-3,
                      mesh_label="pi/4", order_l2=2.0, order_linf=None)
    text = format_table(cfg, [r])
    assert "3.2872e-04" in text and "1.0000e-03" in text and "2.00" in text
