import pytest

from commonatoms.config import ConfigError, load_config, parse_schema

BASE = """[study]
treatment = trial.csv
rwd = a.csv, b.csv
schema = age:0, sex:2, stage:3
outcome = survival
outcome_columns = time, status
seed = 11
"""


def _write(tmp_path, text):
    p = tmp_path / "study.ini"
    p.write_text(text)
    return p


def test_parse_schema():
    s = parse_schema("age:0, sex:2,\nstage:3")
    assert s.to_spec() == [("age", 0), ("sex", 2), ("stage", 3)]
    for bad in ("age", "age:x", ""):
        with pytest.raises(ConfigError):
            parse_schema(bad)


def test_full_file(tmp_path):
    p = _write(tmp_path, BASE + "[chain]\nk = 8\niters = 300\nburn_in = 100\nthin = 2\n"
               "[response]\na0 = 5\n[thresholds]\nauc = 0.7\nhr_target = 0.5\nt_star = 30\n"
               "[classifier]\nkind = extra_trees\nn_trees = 20\n")
    cfg = load_config(p)
    assert cfg.treatment == tmp_path / "trial.csv"
    assert cfg.rwd == [tmp_path / "a.csv", tmp_path / "b.csv"]
    assert cfg.chain.k == 8 and cfg.chain.n_draws == 100 and cfg.chain.seed == 11
    assert cfg.chain.response.a0 == 5.0
    assert cfg.auc_threshold == 0.7 and cfg.classifier.threshold == 0.7
    assert cfg.classifier.kind == "extra_trees" and cfg.classifier.n_trees == 20
    assert (cfg.hr_target, cfg.t_star) == (0.5, 30.0)
    assert cfg.outcome_columns == ("time", "status")
    assert cfg.output == tmp_path / "results"
    assert cfg.rao_blackwell is False
    assert load_config(_write(tmp_path, BASE + "rao_blackwell = yes\n")).rao_blackwell is True


def test_overrides_and_hash(tmp_path):
    p = _write(tmp_path, BASE)
    a, b = load_config(p), load_config(p, seed=12, output=str(tmp_path / "o"))
    assert b.seed == 12 and b.chain.seed == 12 and b.output == tmp_path / "o"
    assert a.hash != b.hash and a.hash == load_config(p).hash


@pytest.mark.parametrize("text, msg", [
    (BASE.replace("seed = 11\n", ""), "seed"),
    (BASE.replace("treatment = trial.csv\n", ""), "treatment"),
    (BASE + "[chain]\nfoo = 1\n", "unknown key"),
    (BASE + "[chain]\nk = many\n", "wrong type"),
    (BASE + "[chain]\nk = 1\n", "k must be"),
    (BASE.replace("survival", "binary"), "outcome"),
    ("[other]\nx = 1\n", "study"),
])
def test_errors(tmp_path, text, msg):
    with pytest.raises(ConfigError, match=msg):
        load_config(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.ini"):
        load_config(tmp_path / "nope.ini")


def test_missing_data_file(tmp_path):
    cfg = load_config(_write(tmp_path, BASE))
    with pytest.raises(FileNotFoundError, match="trial.csv"):
        cfg.load_study()
