"""Command-line parsing, dispatch, exit codes and metadata."""

import json
import subprocess
import sys

import numpy as np
import pytest

from dpscreen import cli
from dpscreen import screen as scr
from dpscreen.dpm import ChainError, McmcSettings, ctbf_marginal_config
from dpscreen.mixmod import EnsembleConfig

QUICK = ["--n-burn", "10", "--n-save", "10", "--thin", "1", "--workers", "1"]


def _csv(path, cols):
    names = list(cols)
    rows = zip(*(cols[k] for k in names))
    path.write_text(",".join(names) + "\n" + "\n".join(
        ",".join(repr(float(v)) for v in r) for r in rows) + "\n")
    return str(path)


@pytest.fixture
def pair_csv(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(30)
    return _csv(tmp_path / "pair.csv", {"x": x, "y": x + rng.random(30)})


class TestParse:
    def test_no_arguments(self, capsys):
        assert cli.main([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_screen_plan(self):
        _, plan = cli.parse_args(["screen", "--input", "data.csv",
                                  "--methods", "ctbf", "--seed", "7"])
        assert plan.methods == ("ctbf",) and plan.seed == 7

    def test_eta_range(self, capsys):
        assert cli.main(["screen", "--input", "d.csv", "--methods", "mixmod",
                         "--eta", "0"]) == 2
        assert "grid interval must be in (0,1)" in capsys.readouterr().err

    @pytest.mark.parametrize("argv,flag", [
        (["--k", "0"], "--k"),
        (["--n-save", "-1"], "--n-save"),
        (["--seed", "x"], "--seed"),
        (["--methods", "ctbf,bogus"], "--methods"),
        (["--bogus"], "--bogus"),
    ])
    def test_bad_value_names_flag(self, capsys, argv, flag):
        assert cli.main(["screen", "--input", "d.csv"] + argv) == 2
        assert flag in capsys.readouterr().err

    def test_inconsistent_flags(self, capsys):
        assert cli.main(["simulate", "--methods", "mi", "--a0", "2"]) == 2
        assert "--a0 requires method mixmod" in capsys.readouterr().err
        assert cli.main(["screen", "--input", "d", "--a", "3"]) == 2
        assert "--alpha-rule total" in capsys.readouterr().err

    def test_defaults_single_source(self):
        d = cli.DEFAULTS
        prior = ctbf_marginal_config()
        assert d["c0"] == prior.c == 10
        assert d["alpha"] == 0.5 and d["alpha_rule"] == "constant"
        assert (d["a0"], d["b0"], d["eta"]) == (
            EnsembleConfig().a0, EnsembleConfig().b0, EnsembleConfig().eta)
        assert d["k"] == 20 and d["c1_prior"] == (1.0, 1.0)
        m = McmcSettings()
        assert (d["n_burn"], d["n_save"], d["thin"]) == (
            m.n_burn, m.n_save, m.thin)

    def test_help_shows_defaults(self, capsys):
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args(["screen", "--help"])
        out = " ".join(capsys.readouterr().out.split())
        d = cli.DEFAULTS
        for text in ("(default: %g)" % d["c0"], "(default: %g)" % d["alpha"],
                     "(default: %g)" % d["eta"], "(default: %d)" % d["k"],
                     "(default: %d)" % d["n_burn"],
                     "(default: %g %g)" % d["c1_prior"]):
            assert text in out

    def test_seed_from_environment(self, monkeypatch):
        monkeypatch.setenv(cli.SEED_ENV, "31")
        _, plan = cli.parse_args(["screen", "--input", "d.csv"])
        assert plan.seed == 31
        _, plan = cli.parse_args(["screen", "--input", "d.csv", "--seed", "2"])
        assert plan.seed == 2

    def test_overrides_reach_plan(self):
        _, plan = cli.parse_args([
            "screen", "--input", "d", "--methods", "ctbf,mixmod",
            "--c0", "3", "--alpha-rule", "total", "--a", "4",
            "--c1-prior", "1", "10", "--a0", "2", "--b0", "3"])
        assert plan.ctbf_prior.c == 3
        assert plan.ctbf.rule == "total" and plan.ctbf.a == 4
        assert all(c.c_prior == (1.0, 10.0) for c in plan.mixmod_priors)
        assert (plan.ensemble.a0, plan.ensemble.b0) == (2, 3)


class TestScreen:
    def test_one_pair(self, pair_csv, tmp_path, capsys):
        out = str(tmp_path / "res.tsv")
        code = cli.main(["screen", "--input", pair_csv, "--output", out]
                        + QUICK)
        assert code == 0
        lines = open(out).read().splitlines()
        assert len(lines) == 2
        printed = capsys.readouterr().out.split()
        assert printed == [out, out + ".meta.json"]
        meta = json.load(open(out + ".meta.json"))
        assert meta["seed"] == 0 and meta["workers"] == 1
        assert meta["plan"]["methods"] == ["ctbf", "mi"]
        assert meta["version"] and meta["wall_clock_seconds"] >= 0

    def test_byte_identical(self, pair_csv, tmp_path):
        outs = []
        for i in range(2):
            out = tmp_path / ("r%d.tsv" % i)
            assert cli.main(["screen", "--input", pair_csv, "--output",
                             str(out), "--seed", "5"] + QUICK) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_json_output(self, pair_csv, tmp_path):
        out = tmp_path / "r.json"
        assert cli.main(["screen", "--input", pair_csv, "--output", str(out)]
                        + QUICK) == 0
        assert len(json.loads(out.read_text())["results"]) == 1

    def test_missing_input(self, tmp_path, capsys):
        assert cli.main(["screen", "--input", str(tmp_path / "none.csv"),
                         "--output", str(tmp_path / "o.tsv")]) == 2
        assert "error" in capsys.readouterr().err

    def test_partial_failure(self, tmp_path, monkeypatch):
        rng = np.random.default_rng(1)
        path = _csv(tmp_path / "three.csv",
                    {k: rng.standard_normal(20) for k in "abc"})
        real = scr.run_chain

        def failing(data, *a, **k):
            # the second variable's chain fails, so both of its pairs do
            failing.n += 1
            if failing.n == 2:
                raise ChainError("forced")
            return real(data, *a, **k)
        failing.n = 0
        monkeypatch.setattr(scr, "run_chain", failing)
        out = str(tmp_path / "o.tsv")
        assert cli.main(["screen", "--input", path, "--output", out,
                         "--methods", "ctbf"] + QUICK) == 1
        meta = json.load(open(out + ".meta.json"))
        assert meta["n_failed"] == 2

    def test_console_script(self, pair_csv, tmp_path):
        out = str(tmp_path / "r.tsv")
        proc = subprocess.run([sys.executable, "-m", "dpscreen.cli", "screen",
                               "--input", pair_csv, "--output", out,
                               "--methods", "mi"], capture_output=True,
                              text=True)
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.split()[0] == out


class TestSimulate:
    def test_ci_preset(self, tmp_path):
        d = tmp_path / "sim"
        code = cli.main(["simulate", "--preset", "ci", "--methods", "mi",
                         "--output-dir", str(d), "--workers", "1"])
        assert code == 0
        rows = (d / "summary.tsv").read_text().splitlines()
        assert len(rows) == 1 + 20
        scores = (d / "scores_mi.tsv").read_text().splitlines()
        assert len(scores) == 1 + 20 * 2 * 4
        meta = json.load(open(d / "meta.json"))
        assert meta["preset"] == "ci" and meta["n_failed_replications"] == 0

    def test_unknown_scenario(self, tmp_path, capsys):
        assert cli.main(["simulate", "--scenarios", "cubic", "--methods",
                         "mi", "--output-dir", str(tmp_path)]) == 2
        assert "unknown scenario" in capsys.readouterr().err

    def test_sensitivity(self, tmp_path):
        d = tmp_path / "sens"
        code = cli.main(["sensitivity", "--sweep", "alpha-c0", "--preset",
                         "ci", "--scenarios", "normal", "--replications", "2",
                         "--n", "20", "--alpha-values", "0.5",
                         "--c0-values", "1,10", "--output-dir", str(d)]
                        + QUICK)
        assert code == 0
        rows = (d / "summary.tsv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 5
        assert rows[1].split("\t")[-1] == "alpha=0.5,c0=1.0"
