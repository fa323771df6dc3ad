import csv
import json
import os
import subprocess
import sys

import pytest

from expdb import __version__
from expdb.cli import elc_bench, main


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(tmp_path, *argv, out="out"):
    target = str(tmp_path / out)
    return main([*argv, "--out", target]), target


def read_manifest(out):
    with open(os.path.join(out, "manifest.json")) as fh:
        return json.load(fh)


def test_verify_theorem_default(tmp_path):
    cfg = write(tmp_path, "[experiment]\nscenario = theorem-verify\nseeds = 0\n[theorem]\ninstances = 10000\n")
    code, out = run(tmp_path, "verify-theorem", "--config", cfg)
    assert code == 0
    rows = list(csv.DictReader(open(os.path.join(out, "theorem_report.csv"))))
    assert len(rows) == 10_001
    assert all(r["ok"] == "1" for r in rows)
    m = read_manifest(out)
    assert m["command"] == "verify-theorem" and m["seeds"] == [0]
    assert m["files"] == ["theorem_report.csv"]
    assert m["version"] == f"v{__version__}" and len(m["config_sha256"]) == 64


def test_eedl_default_has_four_retrain_windows(tmp_path):
    cfg = write(tmp_path, "[experiment]\nscenario = eedl-cardinality\nseeds = 0\n")
    code, out = run(tmp_path, "eedl", "--config", cfg)
    assert code == 0
    hist = list(csv.DictReader(open(os.path.join(out, "seed_0", "retrain_history.csv"))))
    assert [int(h["window"]) for h in hist] == [0, 1, 2, 3, 4]
    recs = list(csv.DictReader(open(os.path.join(out, "seed_0", "online_records.csv"))))
    assert len(recs) == 2000


@pytest.mark.parametrize(
    "text, field",
    [
        ("[experiment]\nscenario = eedl-cardinality\n", "experiment.seeds"),
        ("[experiment]\nseeds = a b\n", "experiment.seeds"),
        ("[experiment]\nseeds = 0\ncolour = red\n", "experiment.colour"),
        ("[experiment]\nseeds = 0\n[bogus]\nx = 1\n", "bogus"),
        ("[experiment]\nseeds = 0\nscenario = fly\n", "experiment.scenario"),
        ("[experiment]\nseeds = 0\n[eedl]\ninterval = often\n", "eedl.interval"),
        ("[experiment]\nseeds = 0\n[eedl]\ninterval = 0\n", "eedl"),
        ("[experiment]\nseeds = 0\n[data]\ntemplate_file = missing.txt\n", "data.template_file"),
        ("no section header\n", "--config"),
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, text, field):
    code, _ = run(tmp_path, "eedl", "--config", write(tmp_path, text))
    assert code == 2
    assert f"config error: {field}:" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    code, _ = run(tmp_path, "eedl", "--config", str(tmp_path / "nope.ini"))
    assert code == 2 and "--config" in capsys.readouterr().err


def test_eerl_settings_errors(tmp_path, capsys):
    cfg = write(tmp_path, "[experiment]\nseeds = 0\n[eerl]\nsettings = 0.2-0\n")
    assert run(tmp_path, "eerl", "--config", cfg)[0] == 2
    cfg = write(tmp_path, "[experiment]\nseeds = 0\n[eerl]\nsettings = 0.7:0.7\n")
    assert run(tmp_path, "eerl", "--config", cfg)[0] == 2


def test_runtime_failure_exit_1(tmp_path, capsys):
    (tmp_path / "t.txt").write_text("age <=\n")
    cfg = write(tmp_path, "[experiment]\nseeds = 0\n[data]\ntemplate_file = t.txt\n")
    code, _ = run(tmp_path, "gen-data", "--config", cfg)
    assert code == 1 and capsys.readouterr().err.startswith("error:")


def test_gen_data_and_label(tmp_path):
    cfg = write(tmp_path, "[experiment]\nseeds = 1 2\n[data]\nrows = 500\n[eedl]\npretrain_size = 50\n")
    code, out = run(tmp_path, "gen-data", "--config", cfg)
    assert code == 0
    assert sorted(os.listdir(out)) == [
        "census_1.csv", "census_2.csv", "census_templates_1.txt", "census_templates_2.txt", "manifest.json",
    ]
    code, out = run(tmp_path, "label", "--config", cfg, out="lab")
    assert code == 0
    rows = list(csv.DictReader(open(os.path.join(out, "training_set_1.csv"))))
    assert len(rows) == 50 and {r["provenance"] for r in rows} == {"rule"}


def test_seed_override(tmp_path):
    cfg = write(tmp_path, "[experiment]\nseeds = 1 2\n[data]\nrows = 100\n")
    code, out = run(tmp_path, "gen-data", "--config", cfg, "--seed", "7")
    assert code == 0 and read_manifest(out)["seeds"] == [7]
    assert os.path.exists(os.path.join(out, "census_7.csv"))
    assert run(tmp_path, "gen-data", "--config", cfg, "--seed", "-1")[0] == 2


def test_defaults_without_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["verify-theorem"]) == 0
    assert sorted(os.listdir(tmp_path)) == ["out"]
    assert read_manifest(tmp_path / "out")["seeds"] == [0]


EERL_INI = """
[experiment]
scenario = eerl-index
seeds = 0 1
[eerl]
settings = 0.2:0, 0:0.2
iterations = 120
final_window = 50
"""


def test_eerl_outputs_and_determinism(tmp_path):
    cfg = write(tmp_path, EERL_INI)
    code_a, a = run(tmp_path, "eerl", "--config", cfg, out="a")
    code_b, b = run(tmp_path, "eerl", "--config", cfg, out="b")
    assert code_a == code_b == 0
    files = read_manifest(a)["files"]
    assert files == [
        "eerl_summary.csv", "rl_history_0.2_0_0.csv", "rl_history_0.2_0_1.csv",
        "rl_history_0_0.2_0.csv", "rl_history_0_0.2_1.csv",
    ]
    for f in files:
        assert open(os.path.join(a, f), "rb").read() == open(os.path.join(b, f), "rb").read()
    assert open(os.path.join(a, "manifest.json")).read() == open(os.path.join(b, "manifest.json")).read()
    rows = list(csv.DictReader(open(os.path.join(a, "rl_history_0.2_0_0.csv"))))
    assert len(rows) == 120 and list(rows[0]) == ["iter", "source", "action", "reward", "q_cost"]


def test_report(tmp_path):
    cfg = write(tmp_path, EERL_INI)
    _, out = run(tmp_path, "eerl", "--config", cfg)
    assert run(tmp_path, "verify-theorem")[0] == 0
    assert run(tmp_path, "report", "--config", cfg)[0] == 0
    text = open(os.path.join(out, "report.txt")).read()
    assert "eerl alpha=0.2 beta=0 seed=0" in text and "theorem: 10001 instances, 0 violations" in text
    assert os.path.exists(os.path.join(out, "plot_figures.py"))


def test_elc_bench_single_query(tmp_path):
    res = elc_bench(2000, 1, 0)
    assert len(res["labels"]) == 1 and res["ratio"] > 0
    cfg = write(tmp_path, "[experiment]\nseeds = 0\n[bench]\nrows = 2000\nqueries = 30\n")
    code, a = run(tmp_path, "elc-bench", "--config", cfg, out="a")
    code_b, b = run(tmp_path, "elc-bench", "--config", cfg, out="b")
    assert code == code_b == 0
    labels = "elc_labels_0.csv"
    assert open(os.path.join(a, labels), "rb").read() == open(os.path.join(b, labels), "rb").read()
    timing = json.load(open(os.path.join(a, "elc_bench_timing.json")))
    assert timing[0]["queries"] == 30 and timing[0]["ratio"] > 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "expdb", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
