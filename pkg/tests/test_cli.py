import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from userfair.cli import main, run_cli
from userfair.fairmetrics import FAIRNESS_MEASURES, FairnessReport


def invoke(*args, env=None):
    runner = CliRunner()
    return runner.invoke(main, list(args), auto_envvar_prefix="USERFAIR", env=env, catch_exceptions=False)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert invoke("--quiet", "fixture", str(d / "raw.tsv")).exit_code == 0
    r = invoke("--quiet", "prep", "--input", str(d / "raw.tsv"), "--rating-col", "rating", "--ts-col", "timestamp",
               "--rating-threshold", "3", "--out", str(d / "split"))
    assert r.exit_code == 0, r.output
    r = invoke("--quiet", "recommend", "--train", str(d / "split/train.tsv"), "--out", str(d / "run.tsv"))
    assert r.exit_code == 0, r.output
    return d


def test_eval_happy_path(pipeline):
    d = pipeline
    r = invoke("--quiet", "eval", "--run", str(d / "run.tsv"), "--test", str(d / "split/test.tsv"), "--train", str(d / "split/train.tsv"))
    assert r.exit_code == 0
    rep = FairnessReport.from_json(r.stdout)
    assert list(rep.entries) == list(FAIRNESS_MEASURES) and rep.k == 10 and rep.epsilon == 0.05


def test_eval_missing_test_is_usage_error(pipeline):
    r = invoke("eval", "--run", str(pipeline / "run.tsv"), "--train", str(pipeline / "split/train.tsv"))
    assert r.exit_code == 2 and "--test" in r.output


def test_missing_file_is_runtime_error(pipeline):
    r = invoke("eval", "--run", str(pipeline / "nope.tsv"), "--test", str(pipeline / "split/test.tsv"), "--train", str(pipeline / "split/train.tsv"))
    assert r.exit_code == 1 and "not found" in r.output


def test_bad_data_is_runtime_error(tmp_path):
    (tmp_path / "raw.tsv").write_text("user\titem\tts\nu1\ti1\tabc\n")
    r = invoke("prep", "--input", str(tmp_path / "raw.tsv"), "--ts-col", "ts", "--out", str(tmp_path / "o"))
    assert r.exit_code == 1 and "row 2" in r.output


def test_conflicting_flags(tmp_path, pipeline):
    r = invoke("sweep-relevance", "--train", str(pipeline / "split/train.tsv"))
    assert r.exit_code == 2
    r = invoke("prep", "--input", str(pipeline / "raw.tsv"), "--out", str(tmp_path / "o"))
    assert r.exit_code == 2 and "--ts-col" in r.output
    assert invoke("eval", "--bogus").exit_code == 2


def test_sweep_relevance_byte_identical():
    args = ["--quiet", "sweep-relevance", "--seed", "7", "--users", "120", "--items", "400"]
    a, b = invoke(*args), invoke("--threads", "4", *args[1:])
    assert a.exit_code == 0 and a.stdout == b.stdout
    assert a.stdout.startswith("x,label,HR,")
    assert invoke(*args[:3], "8", *args[4:]).stdout != a.stdout


def test_trace_files_written(tmp_path):
    r = invoke("--quiet", "extreme", "--users", "60", "--items", "300", "--step", "0.5", "--out-dir", str(tmp_path))
    assert r.exit_code == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert len(files) == 2 and files[0].startswith("extreme_case_most_fair_seed0_")
    assert (tmp_path / files[0]).read_text() == r.stdout


def test_sweep_similarity_with_run(pipeline):
    d = pipeline
    r = invoke("--quiet", "sweep-similarity", "--run", str(d / "run.tsv"), "--train", str(d / "split/train.tsv"),
               "--test", str(d / "split/test.tsv"), "--lambdas", "1,5", "--no-normal")
    assert r.exit_code == 0
    assert [line.split(",")[1] for line in r.stdout.splitlines()[1:]] == ["weibull=5", "weibull=1"]
    assert invoke("sweep-similarity", "--lambdas", "1,-2").exit_code == 2


def test_config_file_and_precedence(tmp_path, pipeline):
    d = pipeline
    cfg = tmp_path / "c.yaml"
    cfg.write_text("threads: 2\neval:\n  k: 5\n  format: csv\n  rating-threshold-typo: 1\n")
    base = ["eval", "--run", str(d / "run.tsv"), "--test", str(d / "split/test.tsv"), "--train", str(d / "split/train.tsv")]
    assert invoke("--config", str(cfg), *base).exit_code == 2
    cfg.write_text("threads: 2\neval:\n  k: 5\n  format: csv\n")
    r = invoke("--quiet", "--config", str(cfg), *base)
    assert r.exit_code == 0 and r.stdout.startswith("run,dataset,HR")
    r = invoke("--quiet", "--config", str(cfg), *base, "--format", "json")
    assert json.loads(r.stdout)["k"] == 5
    (tmp_path / "c.json").write_text(json.dumps({"eval": {"k": 3}}))
    r = invoke("--quiet", "--config", str(tmp_path / "c.json"), *base, "--k", "7")
    assert json.loads(r.stdout)["k"] == 7


def test_env_override(pipeline):
    d = pipeline
    r = invoke("--quiet", "eval", "--run", str(d / "run.tsv"), "--test", str(d / "split/test.tsv"),
               "--train", str(d / "split/train.tsv"), env={"USERFAIR_EVAL_EPSILON": "0.2"})
    assert json.loads(r.stdout)["epsilon"] == 0.2


def test_agree(tmp_path, pipeline):
    d = pipeline
    paths = []
    for flavor in ("user", "item"):
        invoke("--quiet", "recommend", "--train", str(d / "split/train.tsv"), "--flavor", flavor, "--out", str(tmp_path / f"{flavor}.tsv"))
        r = invoke("--quiet", "eval", "--run", str(tmp_path / f"{flavor}.tsv"), "--test", str(d / "split/test.tsv"),
                   "--train", str(d / "split/train.tsv"), "--out", str(tmp_path / f"{flavor}.json"))
        assert r.exit_code == 0
        paths.append(str(tmp_path / f"{flavor}.json"))
    r = invoke("agree", *paths)
    assert r.exit_code == 0 and r.stdout.splitlines()[0] == "measure_a,measure_b,tau_b"
    assert invoke("agree", paths[0]).exit_code == 2


def test_help_lists_defaults():
    texts = {cmd: invoke(cmd, "--help").stdout for cmd in ("eval", "prep", "sweep-similarity", "recommend", "extreme")}
    assert "default: 10" in texts["eval"] and "default: 0.05" in texts["eval"]
    assert "6:2:2" in texts["prep"]
    assert "0.5,1,2,5,10,50" in texts["sweep-similarity"]
    assert "default: 50" in texts["recommend"]
    assert "default: 2.0" in texts["extreme"]
    top = invoke("--help").stdout
    assert "Exit codes" in top and "2  usage error" in top


def test_bench_command():
    r = invoke("--quiet", "bench", "--users", "60", "--repeats", "1", "--measures", "PUF-Prec-Jacc,SD-P")
    assert r.exit_code == 0 and [line.split(",")[0] for line in r.stdout.splitlines()] == ["measure", "PUF-Prec-Jacc", "SD-P"]
    assert invoke("bench", "--measures", "XYZ").exit_code == 2


def test_run_cli_status():
    assert run_cli(["--help"]) == 0
    assert run_cli(["eval"]) == 2


def test_console_script_exit_codes(tmp_path):
    cmd = [sys.executable, "-m", "userfair.cli"]
    ok = subprocess.run(cmd + ["--quiet", "synth", "--users", "5", "--items", "30"], capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stdout.startswith("user\titem\trating\ttimestamp")
    usage = subprocess.run(cmd + ["eval"], capture_output=True, text=True)
    assert usage.returncode == 2 and usage.stdout == ""
    runtime = subprocess.run(cmd + ["recommend", "--train", str(tmp_path / "x.tsv")], capture_output=True, text=True)
    assert runtime.returncode == 1 and "not found" in runtime.stderr and runtime.stdout == ""
