"""Command-line interface: outputs, reproducibility and the exit-code contract."""

import json

import pytest
from click.testing import CliRunner

from netident.cli import main
from netident.graphs import Graph
from netident.models import neural_network

LTI2 = "n=2\nagent *: lti a=1\nctrl * *: lti b=1\n"
LTI3 = "n=3\nagent *: lti a=1\nctrl * *: lti b=1\n"
PATH3 = Graph(3, ((1, 2), (2, 3)))
TRIANGLE = Graph(3, ((1, 2), (1, 3), (2, 3)))
COMMANDS = ["gen-w", "solve-ss", "simulate", "build-table", "detect", "reconstruct-lti",
            "epsilon", "pipeline", "scenario"]


@pytest.fixture
def work(tmp_path):
    (tmp_path / "lti2.model").write_text(LTI2)
    (tmp_path / "lti3.model").write_text(LTI3)
    (tmp_path / "neural3.model").write_text(neural_network([0.6, 0.8, 0.9]).config_text())
    return tmp_path


def run(args, cwd, env=None):
    runner = CliRunner()
    return runner.invoke(main, ["--out-dir", str(cwd), *args], env=env, catch_exceptions=False)


def key(g):
    return "key:" + g.key_string()


class TestGenW:
    def test_radix_pair(self, work):
        r = run(["gen-w", "--mode", "radix", "--model", str(work / "lti2.model")], work)
        assert r.exit_code == 0, r.stderr
        rec = json.loads((work / "w.json").read_text())
        assert rec["w"] == ["1", "16"]
        prov = rec["provenance"]
        assert (prov["M"], prov["N"], prov["D"]) == (16, 2, 3)
        assert rec["meta"]["tool"].startswith("netident")

    def test_gaussian_byte_identical(self, work):
        a = run(["gen-w", "-n", "4", "--seed", "7", "-o", str(work / "a.json")], work)
        b = run(["gen-w", "-n", "4", "--seed", "7", "-o", str(work / "b.json")], work)
        assert a.exit_code == b.exit_code == 0
        assert (work / "a.json").read_bytes() == (work / "b.json").read_bytes()
        rec = json.loads((work / "a.json").read_text())
        assert rec["meta"]["seed"] == 7 and len(rec["meta"]["config_hash"]) == 16

    def test_epsilon_positive(self, work):
        model = str(work / "neural3.model")
        assert run(["gen-w", "--model", model, "--seed", "3"], work).exit_code == 0
        r = run(["epsilon", "--model", model, "--w", str(work / "w.json")], work)
        assert r.exit_code == 0
        assert float(json.loads(r.stdout)["epsilon"]) > 0

    def test_needs_model_or_n(self, work):
        r = run(["gen-w"], work)
        assert r.exit_code == 1
        assert json.loads(r.stderr.strip().splitlines()[-1])["error"] == "usage"


class TestPipeline:
    def test_radix_path(self, work):
        r = run(["pipeline", "--model", str(work / "lti3.model"), "--hidden", key(PATH3),
                 "--method", "radix"], work)
        assert r.exit_code == 0, r.stderr
        rec = json.loads((work / "reconstruction.json").read_text())
        assert rec["correct"] is True

    def test_neural_triangle(self, work):
        r = run(["pipeline", "--model", str(work / "neural3.model"), "--hidden", key(TRIANGLE),
                 "--seed", "2"], work)
        assert r.exit_code == 0, r.stderr
        rec = json.loads((work / "detection.json").read_text())
        assert rec["confident"] is True
        assert rec["graph"] == TRIANGLE.key_string()

    def test_simulated_measurement(self, work):
        r = run(["pipeline", "--model", str(work / "neural3.model"), "--hidden", key(PATH3),
                 "--seed", "2", "--measure", "simulate"], work)
        assert r.exit_code == 0, r.stderr
        assert (work / "trajectory.csv").exists()
        assert json.loads((work / "detection.json").read_text())["graph"] == PATH3.key_string()

    def test_corrupted_measurement(self, work):
        r = run(["pipeline", "--model", str(work / "neural3.model"), "--hidden", key(TRIANGLE),
                 "--seed", "2", "--perturb", "5"], work)
        assert r.exit_code == 2
        assert json.loads(r.stderr.strip().splitlines()[-1])["error"] == "ambiguous"

    def test_reruns_identical(self, work):
        outs = []
        for sub in ("a", "b"):
            d = work / sub
            d.mkdir()
            r = run(["pipeline", "--model", str(work / "neural3.model"), "--hidden",
                     key(TRIANGLE), "--seed", "2"], d)
            assert r.exit_code == 0
            outs.append([(d / f).read_bytes() for f in
                         ("w.json", "y.json", "table.csv", "detection.json")])
        assert outs[0] == outs[1]


class TestExitCodes:
    def test_decode_failure(self, work):
        run(["gen-w", "--mode", "radix", "--model", str(work / "lti2.model")], work)
        (work / "y.txt").write_text("0.123 0.456\n")
        r = run(["reconstruct-lti", "--model", str(work / "lti2.model"),
                 "--w", str(work / "w.json"), "--y", str(work / "y.txt")], work)
        assert r.exit_code == 3
        assert json.loads(r.stderr.strip().splitlines()[-1])["error"] == "decode"

    def test_reconstruct_success(self, work):
        model = str(work / "lti2.model")
        run(["gen-w", "--mode", "radix", "--model", model], work)
        # hidden edge: y = -(A + L)^{-1} w = -(2/3 + 16/3, 1/3 + 32/3)
        (work / "y.txt").write_text("-6 -11\n")
        r = run(["reconstruct-lti", "--model", model, "--w", str(work / "w.json"),
                 "--y", str(work / "y.txt")], work)
        assert r.exit_code == 0, r.stderr
        assert json.loads(r.stdout)["graph"] == Graph(2, ((1, 2),)).key_string()

    def test_detect_ambiguous_and_confident(self, work):
        model = str(work / "lti2.model")
        (work / "w.txt").write_text("1 -1\n")
        assert run(["build-table", "--model", model, "--w", str(work / "w.txt")],
                   work).exit_code == 0
        (work / "y.txt").write_text("-1/3 1/3\n")
        r = run(["detect", "--table", str(work / "table.csv"), "--y", str(work / "y.txt")], work)
        assert r.exit_code == 0 and json.loads(r.stdout)["confident"] is True
        (work / "y.txt").write_text("5 5\n")
        r = run(["detect", "--table", str(work / "table.csv"), "--y", str(work / "y.txt")], work)
        assert r.exit_code == 2

    def test_stale_table(self, work):
        (work / "w.txt").write_text("1 -1 0.5\n")
        run(["build-table", "--model", str(work / "lti3.model"), "--w", str(work / "w.txt")],
            work)
        (work / "y.txt").write_text("0 0 0\n")
        r = run(["detect", "--table", str(work / "table.csv"), "--y", str(work / "y.txt"),
                 "--model", str(work / "neural3.model")], work)
        assert r.exit_code == 1

    def test_bad_model(self, work):
        (work / "bad.model").write_text("n=2\nagent *: quantum\n")
        r = run(["gen-w", "--model", str(work / "bad.model")], work)
        assert r.exit_code == 1
        json.loads(r.stderr.strip().splitlines()[-1])

    def test_non_separating_w(self, work):
        (work / "w.txt").write_text("0 0 0\n")
        r = run(["build-table", "--model", str(work / "lti3.model"), "--w", str(work / "w.txt")],
                work)
        assert r.exit_code == 1

    def test_graph_size_mismatch(self, work):
        r = run(["pipeline", "--model", str(work / "lti2.model"), "--hidden", key(PATH3)], work)
        assert r.exit_code == 1


class TestOutputs:
    def test_solve_ss_exact(self, work):
        (work / "w.txt").write_text("1 -1\n")
        r = run(["solve-ss", "--model", str(work / "lti2.model"), "--w", str(work / "w.txt"),
                 "--graph", "key:1"], work)
        assert r.exit_code == 0, r.stderr
        rows = [l for l in (work / "steady_state.csv").read_text().splitlines()
                if not l.startswith("#")]
        assert rows[-1].split(",")[1:3] == ["-1/3", "1/3"]

    def test_simulate_csv(self, work):
        (work / "w.txt").write_text("1 -1\n")
        r = run(["simulate", "--model", str(work / "lti2.model"), "--w", str(work / "w.txt"),
                 "--graph", "key:1", "--t-end", "1", "--converge"], work)
        assert r.exit_code == 0, r.stderr
        text = (work / "trajectory.csv").read_text().splitlines()
        assert text[0].startswith("# tool:")
        header = next(l for l in text if not l.startswith("#"))
        assert header == "t,y1,y2,x1,x2"
        assert json.loads(r.stdout)["converged"] is True

    def test_env_overrides(self, work, tmp_path_factory):
        other = tmp_path_factory.mktemp("envout")
        runner = CliRunner()
        r = runner.invoke(main, ["gen-w", "-n", "3"],
                          env={"NETIDENT_OUT_DIR": str(other), "NETIDENT_JOBS": "2"})
        assert r.exit_code == 0
        assert (other / "w.json").exists()
        r = runner.invoke(main, ["gen-w", "-n", "3"], env={"NETIDENT_JOBS": "0"})
        assert r.exit_code != 0

    def test_scenario_config(self, work):
        (work / "w.txt").write_text("0.3 -0.5 0.2\n")
        (work / "s.cfg").write_text("model=neural3.model\nw=w.txt\nt_end=30\n"
                                    f"t=0 graph={key(TRIANGLE)}\nt=15 graph={key(PATH3)}\n")
        r = run(["scenario", str(work / "s.cfg")], work)
        assert r.exit_code == 0, r.stderr
        rec = json.loads((work / "scenario.json").read_text())
        assert len(rec["segments"]) == 2
        assert (work / "outputs.csv").exists()

    def test_scenario_needs_input(self, work):
        assert run(["scenario"], work).exit_code == 1


@pytest.mark.parametrize("cmd", COMMANDS)
def test_help(cmd):
    r = CliRunner().invoke(main, [cmd, "--help"])
    assert r.exit_code == 0 and "--help" in r.output


def test_version():
    r = CliRunner().invoke(main, ["--version"])
    assert r.exit_code == 0 and "0.1.0" in r.output
