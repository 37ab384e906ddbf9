import csv
from pathlib import Path

import pytest

from quantci.binormal import BinormalParams
from quantci.cli import emit_roc, emit_table, main, render_text_table, statistic_labels
from quantci.config import ConfigParseError, RunManifest, parse_config, parse_config_text, serialize_manifest
from quantci.simulation import ScenarioConfig, SummaryRow

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
[manifest]
output_dir = out
formats = csv

[tiny]
nu = 2.5
p = 0.5
q = 0.2
n = 40
m_plus = inf
m_minus = inf
n_sim = 2
R = 19
methods = ACC50, APCC, ML
"""


def _rows():
    return [SummaryRow("ACC50", 19.814, 4.1, 0.0, 8.43, 91.0, 0.0),
            SummaryRow("predACC50", 20.0, 4.5, 0.0, 12.0, float("nan"), 1.0, kind="prediction")]


def test_parse_small_manifest():
    man = parse_config_text(SMALL)
    assert man.output_dir == "out" and man.formats == ("csv",)
    sc = man.scenarios[0]
    assert sc.name == "tiny" and sc.infinite and sc.methods == ("ACC50", "APCC", "ML")
    assert (sc.n, sc.R, sc.n_sim, sc.seed) == (40, 19, 2, 17)


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.ini")), ids=lambda p: p.name)
def test_shipped_configs_round_trip(path):
    man = parse_config(path)
    assert man.scenarios
    assert parse_config_text(serialize_manifest(man)) == man


def test_finite_round_trip_has_no_p():
    man = RunManifest((ScenarioConfig(nu=1.0, q=0.2, n=50, m_plus=33, m_minus=67, name="f"),))
    text = serialize_manifest(man)
    assert "\np =" not in text
    assert parse_config_text(text) == man


@pytest.mark.parametrize("text,fragment", [
    ("[a]\nnu = 1\nq = 0.2\n", "missing required key(s) ['n', 'p']"),
    ("[a]\nnu = 1\nq = 0.2\nn = 10\np = 0.5\ncolour = red\n", "line 6: unknown key 'colour'"),
    ("[a]\nnu = 1\nq = 0.2\nn = ten\np = 0.5\n", "line 4: bad value for 'n'"),
    ("[a]\nnu = 1\nq = 1.5\nn = 10\np = 0.5\n", "line 3: q: must be in (0, 1)"),
    ("[a]\nnu = 1\nq = 0.2\nn = 10\np = 0.5\neab_oracle = maybe\n", "bad value for 'eab_oracle'"),
    ("[manifest]\nformats = pdf\n", "unknown format"),
    ("[a]\nnu = 1\n[a]\nnu = 2\n", "already exists"),
])
def test_parse_errors_name_key_and_line(text, fragment):
    with pytest.raises(ConfigParseError) as info:
        parse_config_text(text, source="x.ini")
    assert fragment in str(info.value)
    assert "x.ini" in str(info.value)


def test_parse_missing_file(tmp_path):
    with pytest.raises(ConfigParseError):
        parse_config(tmp_path / "absent.ini")


def test_statistic_labels():
    rows = _rows()
    assert statistic_labels(rows[:1])[0] == "Av prev"
    assert statistic_labels(rows[1:])[0] == "Av freq"
    assert statistic_labels(rows)[0] == "Av prev or freq"
    assert statistic_labels(rows)[1:] == ("Av abs dev", "Perc fail est", "Av int length", "Coverage",
                                          "Perc 0 or 1")


def test_emit_csv_and_raw(tmp_path):
    paths = emit_table(_rows(), str(tmp_path / "t.csv"))
    assert [Path(p).name for p in paths] == ["t.csv", "t.raw.csv"]
    table = list(csv.reader(open(paths[0])))
    assert table[0] == ["statistic", "ACC50", "predACC50"]
    assert table[1] == ["Av prev or freq", "19.81", "20.00"]
    assert table[5] == ["Coverage", "91.00", "NA"]
    raw = list(csv.reader(open(paths[1])))
    assert raw[1][1] == "19.814"


def test_emit_text_and_errors(tmp_path):
    path = emit_table(_rows(), str(tmp_path / "t.txt"), "text", title="demo")[0]
    body = Path(path).read_text()
    assert body.startswith("demo\n") and "Coverage" in body
    assert render_text_table(_rows()).count("\n") == 8
    with pytest.raises(ValueError):
        emit_table([], str(tmp_path / "e.csv"))
    with pytest.raises(ValueError):
        emit_table(_rows(), str(tmp_path / "e.x"), "xml")
    with pytest.raises(OSError):
        emit_table(_rows(), str(tmp_path / "missing" / "t.csv"))


def test_emit_roc(tmp_path):
    path = emit_roc(BinormalParams(0, 2.5, 1), 11, str(tmp_path / "roc.csv"))
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["fpr", "tpr"] and len(rows) == 12
    with pytest.raises(ValueError):
        emit_roc(BinormalParams(0, 2.5, 1), 1, str(tmp_path / "x.csv"))


def test_cli_simulate(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(SMALL)
    out = tmp_path / "res"
    assert main(["simulate", str(cfg), "--out", str(out), "--runs", "3", "--seed", "5"]) == 0
    assert (out / "tiny.csv").exists() and (out / "tiny.raw.csv").exists()
    assert not (out / "tiny.txt").exists()
    assert "MLinf" in capsys.readouterr().out


def test_cli_simulate_is_deterministic(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(SMALL)
    main(["simulate", str(cfg), "--out", str(tmp_path / "a")])
    main(["simulate", str(cfg), "--out", str(tmp_path / "b"), "--workers", "2"])
    assert (tmp_path / "a" / "tiny.raw.csv").read_bytes() == (tmp_path / "b" / "tiny.raw.csv").read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[a]\nnu = 1\n")
    assert main(["simulate", str(bad)]) == 1
    assert "config error" in capsys.readouterr().err
    cfg = tmp_path / "c.ini"
    cfg.write_text(SMALL)
    assert main(["simulate", str(cfg), "--runs", "0", "--out", str(tmp_path / "never")]) == 1
    assert not (tmp_path / "never").exists()
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", str(cfg), "--out", str(blocker)]) == 2


def test_cli_roc(tmp_path, capsys):
    assert main(["roc", "--nu", "2.5", "1", "--grid-size", "20", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "roc_nu2.5.csv").exists() and (tmp_path / "roc_nu1.csv").exists()
