import json
import time
from pathlib import Path

import numpy as np
import pytest

from wavespread.cli import main
from wavespread.io import read_sample
from wavespread.population import load_population

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def popfile(tmp_path):
    path = tmp_path / "pop.csv"
    assert main(["gen", "--kind", "csr", "--n-points", "155", "--fixed-count", "--field", "copper",
                 "--field", "cadmium", "--seed", "3", "--output", str(path)]) == 0
    return path


def test_sample_measure_estimate(tmp_path, popfile, capsys):
    out = tmp_path / "s.csv"
    rc = main(["sample", "--input", str(popfile), "--output", str(out), "--design", "wave",
               "--n", "30", "--pi-mode", "prop:copper", "--seed", "1"])
    assert rc == 0
    pop = load_population(popfile)
    assert pop.N == 155
    assert read_sample(out, pop).sum() == 30
    meta = json.loads(Path(f"{out}.json").read_text())
    assert {"seed", "design", "metric", "runtime_s"} <= set(meta)
    capsys.readouterr()

    assert main(["measure", "--input", str(popfile), "--sample", str(out),
                 "--pi-mode", "prop:copper"]) == 0
    m = json.loads(capsys.readouterr().out)
    assert -1 <= m["I_B"] <= 1 and -1 <= m["I_B1"] <= 1 and m["B"] >= 0

    assert main(["estimate", "--input", str(popfile), "--sample", str(out),
                 "--pi-mode", "prop:copper", "--y", "cadmium"]) == 0
    e = json.loads(capsys.readouterr().out)
    assert set(e["variance_estimates"]) <= {"haj", "sb", "lm2", "lm3", "lm4"}
    assert e["ht"] > 0


def test_srswor_full_population(tmp_path, popfile):
    out = tmp_path / "s.csv"
    assert main(["sample", "--input", str(popfile), "--output", str(out), "--design", "srswor",
                 "--n", "155", "--seed", "0"]) == 0
    assert read_sample(out, load_population(popfile)).sum() == 155


@pytest.mark.parametrize("design", ["wave", "lpm1", "srswor"])
def test_same_seed_same_file(tmp_path, popfile, design):
    outs = [tmp_path / f"{i}.csv" for i in range(2)]
    for out in outs:
        main(["sample", "--input", str(popfile), "--output", str(out), "--design", design,
              "--n", "12", "--seed", "42"])
    assert outs[0].read_bytes() == outs[1].read_bytes()


def test_grid_metrics_and_dump(tmp_path):
    pop = tmp_path / "g.csv"
    assert main(["gen", "--kind", "grid", "--grid", "6x6", "--output", str(pop)]) == 0
    dump = tmp_path / "W.txt"
    assert main(["sample", "--input", str(pop), "--output", str(tmp_path / "s.csv"), "--n", "4",
                 "--metric", "shifted-tore", "--grid", "6x6", "--seed", "3",
                 "--dump-strata", str(dump)]) == 0
    lines = dump.read_text().splitlines()
    rows = {}
    for line in lines:
        r, _, v = line.split()
        rows[r] = rows.get(r, 0.0) + float(v)
    assert len(rows) == 36
    assert all(abs(s - 1) < 1e-12 for s in rows.values())
    meta = json.loads((tmp_path / "s.csv.json").read_text())
    assert len(meta["metric"]["shift"]) == 2


def test_invalid_design_exit_code(popfile, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sample", "--input", str(popfile), "--design", "grts", "--n", "3"])
    assert exc.value.code == 2
    assert "wave, srswor, lpm1" in capsys.readouterr().err


def test_invalid_sim_design_exit_code(tmp_path):
    cfg = json.loads((CONFIGS / "smoke.json").read_text())
    cfg["designs"] = ["grts"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(path), "--output", str(tmp_path / "r.json")]) == 2


def test_config_and_io_errors(tmp_path, popfile):
    assert main(["sample", "--input", str(tmp_path / "missing.csv"), "--n", "3"]) == 4
    assert main(["sample", "--input", str(popfile), "--n", "3", "--pi-mode", "prop:nickel"]) == 2
    assert main(["sample", "--input", str(popfile), "--n", "500"]) == 2
    assert main(["sample", "--input", str(popfile), "--pi-mode", "prop:copper"]) == 2


def test_numerical_failure_exit_code(popfile):
    assert main(["sample", "--input", str(popfile), "--n", "30", "--max-steps", "1",
                 "--seed", "0"]) == 3


def test_simulate_smoke(tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "r.json"
    assert main(["simulate", "--config", str(CONFIGS / "smoke.json"), "--output", str(out)]) == 0
    assert time.perf_counter() - t0 < 10
    rep = json.loads(out.read_text())
    assert rep["schema_version"] == 1
    assert (tmp_path / "r.csv").exists()


def test_simulate_table_preset_structure(tmp_path):
    out = tmp_path / "t.json"
    assert main(["simulate", "--config", str(CONFIGS / "table1_csr.json"), "--reps", "2",
                 "--output", str(out), "--jobs", "1"]) == 0
    cells = json.loads(out.read_text())["cells"]
    assert {(c["design"], c["n"]) for c in cells} == {
        (d, n) for d in ("wave", "lpm1", "srswor") for n in (16, 32, 48)
    }


def test_simulate_is_seeded(tmp_path):
    for name in ("a", "b"):
        main(["simulate", "--config", str(CONFIGS / "smoke.json"), "--reps", "3", "--seed", "9",
              "--output", str(tmp_path / f"{name}.json")])
    a = json.loads((tmp_path / "a.json").read_text())
    b = json.loads((tmp_path / "b.json").read_text())
    assert a["cells"] == b["cells"]


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_presets_parse(name):
    from wavespread.sim import SimConfig

    cfg = SimConfig.from_json(CONFIGS / name)
    assert cfg.reps >= 1
    if cfg.population.kind != "file":
        assert cfg.population.build().N > 0
