import json
import subprocess
import sys

import pytest

from pmuguard.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def chain(tmp_path):
    """generate -> attack -> detect -> classify -> retrieve on a short scenario."""
    common = ["--preset", "scenario1", "--cycles", 6, "--seed", 4]
    p = tmp_path
    assert run("generate", *common, "--output", p / "clean.csv") == 0
    assert run("attack", *common, "--input", p / "clean.csv", "--model", p / "clean.model.json",
               "--output", p / "attacked.csv") == 0
    assert run("detect", *common, "--input", p / "attacked.csv", "--output", p / "detections.jsonl") == 0
    assert run("classify", "--input", p / "detections.jsonl", "--labels", p / "attacked.labels.csv",
               "--output", p / "classes.csv") == 0
    assert run("retrieve", "--input", p / "attacked.csv", "--states", p / "detections.states.json") == 0
    return p, common


def test_chain_outputs(chain):
    p, _ = chain
    events = [json.loads(x) for x in (p / "detections.jsonl").read_text().splitlines()]
    assert events and set(events[0]) == {"t", "channel", "d_t", "delta", "pattern"}
    log = (p / "classes.csv").read_text().splitlines()
    assert log[0] == "t,channel,label,upsilon,new_class" and len(log) == len(events) + 1
    assert (p / "attacked.retrieved.csv").exists()
    assert (p / "classes.ensemble.json").exists()


def test_chain_matches_run_save_dir(chain, tmp_path_factory):
    p, common = chain
    d = tmp_path_factory.mktemp("run")
    assert run("run", *common, "--save-dir", d, "--output", d / "report.json") == 0
    for name in ("clean.csv", "attacked.csv", "attacked.labels.csv", "detections.jsonl",
                 "detections.states.json", "attacked.retrieved.csv"):
        assert (d / name).read_bytes() == (p / name).read_bytes(), name


def test_detect_on_clean_input_has_no_events(chain):
    p, common = chain
    assert run("detect", *common, "--input", p / "clean.csv", "--output", p / "clean.jsonl") == 0
    assert (p / "clean.jsonl").read_text() == ""


def test_run_report_and_csv(tmp_path, capsys):
    rc = run("run", "--preset", "scenario2", "--cycles", 6, "--output", tmp_path / "r.json",
             "--csv", tmp_path / "r.csv")
    assert rc == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["config_echo"]["scenario"]["name"] == "scenario2"
    assert (tmp_path / "r.csv").read_text().startswith("metric,scenario,sigma,seed,value")
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("run scenario2")


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "scenario3", "scenario": {"seed": 9, "cycles": 6},
                               "pipeline": {"tau": 12}}))
    monkeypatch.setenv("PMUGUARD_CONFIG", str(cfg))
    assert run("run", "--seed", 2, "--output", tmp_path / "r.json") == 0
    echo = json.loads((tmp_path / "r.json").read_text())["config_echo"]
    assert echo["scenario"]["name"] == "scenario3"
    assert echo["scenario"]["seed"] == 2
    assert echo["pipeline"]["tau"] == 12


def test_sweep_count(tmp_path):
    rc = run("sweep", "--cycles", 6, "--sigmas", "0,0.1", "--seeds", 2, "--presets",
             "scenario1,scenario4", "--jobs", 1, "--output", tmp_path / "s.json")
    assert rc == 0
    reps = json.loads((tmp_path / "s.json").read_text())
    assert len(reps) == 8
    keys = {(r["config_echo"]["scenario"]["name"], r["config_echo"]["scenario"]["seed"],
             r["config_echo"]["scenario"]["noise_sigma"]) for r in reps}
    assert len(keys) == 8


@pytest.mark.parametrize("argv,code", [
    (["run", "--sigma", "0.5"], 2),
    (["run", "--omega", "3"], 2),
    (["run", "--preset", "nope"], 2),
    (["sweep", "--sigmas", "0,x"], 2),
    (["detect", "--input", "/nonexistent/x.csv"], 3),
])
def test_exit_codes(argv, code):
    assert main(argv) == code


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--strategy", "9"])
    assert exc.value.code == 2


def test_bad_config_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"pipeline": {"bogus": 1}}))
    assert main(["run", "--config", str(bad)]) == 2


def test_malformed_stream_exit_3(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("t,channel,re,im\n0,a,nan,0\n")
    assert main(["detect", "--input", str(f)]) == 3


def fake_report(sigma=0.0, **over):
    from pmuguard.evaluation import MetricsReport
    det = {"false_alarms_clean_prefix": 0, "recall_intrusion": 0.95, "precision_safe": 0.97}
    det.update({k: v for k, v in over.items() if k in det})
    return MetricsReport(det, {}, {"max_channel_ratio": over.get("ratio", 0.05)},
                         over.get("runtime", 1.0), {"scenario": {"noise_sigma": sigma}})


def test_acceptance_floors():
    from pmuguard.cli import acceptance_failures
    assert acceptance_failures(fake_report()) == []
    assert len(acceptance_failures(fake_report(false_alarms_clean_prefix=2))) == 1
    assert len(acceptance_failures(fake_report(recall_intrusion=0.5))) == 1
    assert len(acceptance_failures(fake_report(ratio=0.15))) == 1
    assert acceptance_failures(fake_report(0.05, ratio=0.15)) == []
    assert acceptance_failures(fake_report(0.2, ratio=0.9)) == []
    assert len(acceptance_failures(fake_report(runtime=6.0))) == 1


def test_check_exit_code_follows_floors(tmp_path):
    from pmuguard.cli import acceptance_failures
    from pmuguard.evaluation import MetricsReport
    rc = run("run", "--cycles", 6, "--sigma", 0.25, "--check", "--output", tmp_path / "r.json")
    rep = MetricsReport(**json.loads((tmp_path / "r.json").read_text()))
    assert rc == (1 if acceptance_failures(rep) else 0)


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "pmuguard.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
