import json

import numpy as np
import pytest

from commonatoms.cam_gibbs import PosteriorChain
from commonatoms.cli import main


def _sim(tmp_path, *extra, name="s"):
    out = tmp_path / name
    args = ["simulate", "--seed", "5", "--n1", "20", "--p", "5", "--delta", "3",
            "--iters", "120", "--burn-in", "40", "--thin", "2", "--out", str(out), *extra]
    assert main(args) == 0
    return out / "study.ini"


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_simulate_writes_study(tmp_path):
    ini = _sim(tmp_path)
    d = ini.parent
    assert (d / "trial.csv").exists() and (d / "rwd.csv").exists()
    assert json.loads((d / "truth.json").read_text())["delta"] == 3.0
    assert "outcome = continuous" in ini.read_text()


def test_fit_default_chain_draws(tmp_path):
    ini = _sim(tmp_path)
    text = ini.read_text().split("[chain]")[0]
    ini.write_text(text)
    assert main(["fit", str(ini)]) == 0
    ch = PosteriorChain.from_jsonl(ini.parent / "results" / "chain.jsonl")
    assert len(ch) == 1000


def test_fit_byte_identical(tmp_path):
    ini = _sim(tmp_path)
    assert main(["fit", str(ini), "--out", str(tmp_path / "a")]) == 0
    assert main(["fit", str(ini), "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "chain.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "chain.jsonl").read_bytes()
    assert main(["fit", str(ini), "--seed", "6", "--out", str(tmp_path / "c")]) == 0
    assert a != (tmp_path / "c" / "chain.jsonl").read_bytes()
    diag = json.loads((tmp_path / "a" / "chain_diagnostics.json").read_text())
    assert "config_hash" in diag and diag["seed"] == 5


def test_missing_data_file(tmp_path, capsys):
    ini = _sim(tmp_path)
    (ini.parent / "rwd.csv").unlink()
    assert main(["fit", str(ini)]) == 2
    e = _err(capsys)
    assert e["stage"] == "fit" and "rwd.csv" in e["path"]


def test_missing_config(tmp_path, capsys):
    assert main(["fit", str(tmp_path / "none.ini")]) == 2
    assert "none.ini" in _err(capsys)["message"]


def test_bad_config(tmp_path, capsys):
    ini = tmp_path / "x.ini"
    ini.write_text("[study]\ntreatment = t.csv\n")
    assert main(["fit", str(ini)]) == 2
    assert _err(capsys)["error"] == "ConfigError"


def test_stage_commands_in_order(tmp_path, capsys):
    ini = _sim(tmp_path)
    out = ini.parent / "results"
    assert main(["weights", str(ini)]) == 2  # no chain yet
    assert "chain_cov.jsonl" in _err(capsys)["path"]
    for cmd in (["fit", str(ini), "--covariates-only"], ["weights", str(ini)],
                ["resample", str(ini)], ["validate", str(ini)], ["fit", str(ini)],
                ["effect", str(ini)], ["gof", str(ini), "--draws", "5"]):
        assert main(cmd) == 0, cmd
    eff = json.loads((out / "effect.json").read_text())
    assert set(eff) >= {"CA-PPMx", "IS-LM", "config_hash", "seed"}
    w = np.loadtxt(out / "weights.csv", delimiter=",", skiprows=1, usecols=3)
    assert w.sum() == pytest.approx(1.0)
    assert (out / "gof_qq.csv").exists() and (out / "oof_scores.csv").exists()
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    prov = json.loads(capsys.readouterr().out)
    assert prov["consistent"] is True and len(prov["config_hashes"]) == 1


def test_pipeline_survival(tmp_path, capsys):
    ini = _sim(tmp_path, "--scenario", "GBM", "--hypothesis", "H1")
    assert main(["pipeline", str(ini)]) == 0
    rep = json.loads((ini.parent / "results" / "report.json").read_text())
    assert 0 <= rep["effect"]["CA-PPMx"]["prob_hr_below"] <= 1
    assert 0 <= rep["effect"]["IS-KM"]["p_value"] <= 1
    assert rep["equivalence"]["verdict"] in ("pass", "fail")
    assert (ini.parent / "results" / "hr_curve.csv").exists()
    assert (ini.parent / "results" / "km_control.csv").exists()


def test_pipeline_reproducible(tmp_path):
    ini = _sim(tmp_path)
    main(["pipeline", str(ini), "--out", str(tmp_path / "r1")])
    main(["pipeline", str(ini), "--out", str(tmp_path / "r2")])
    for f in ("synthetic_control.csv", "effect.json", "equivalence.json", "report.json"):
        assert (tmp_path / "r1" / f).read_bytes().replace(b"r1", b"") == \
            (tmp_path / "r2" / f).read_bytes().replace(b"r2", b""), f


def test_pipeline_stage_failure(tmp_path, capsys):
    ini = _sim(tmp_path)
    (ini.parent / "trial.csv").write_text("garbage\n1,2\n")
    assert main(["pipeline", str(ini)]) == 2
    assert _err(capsys)["stage"] == "fit_covariates"


def test_power_small_cell(tmp_path, capsys):
    out = tmp_path / "pw"
    rc = main(["power", "--seed", "3", "--n1", "20", "--p", "5", "--replicates", "40",
               "--methods", "IS-LM", "--iters", "60", "--burn-in", "20", "--out", str(out)])
    assert rc == 0
    rows = (out / "power.csv").read_text().splitlines()
    assert rows[0].startswith("scenario,n1,p,delta,method") and len(rows) == 2
    assert float(rows[1].split(",")[6]) > 0.5


def test_power_too_few_replicates_skips(tmp_path):
    out = tmp_path / "pw"
    assert main(["power", "--seed", "3", "--n1", "20", "--p", "5", "--replicates", "5",
                 "--methods", "IS-LM", "--iters", "30", "--burn-in", "10",
                 "--out", str(out)]) == 0
    meta = json.loads((out / "power.json").read_text())
    assert "skipped" in meta["cells"][0]


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
