"""Command-line interface: the synth -> train -> classify -> eval chain,
exit codes, flag plumbing, and byte determinism of outputs."""

import json
import os
from pathlib import Path

import numpy as np
import pytest

from nodescan import io
from nodescan.classify import classify_node
from nodescan.cli import main
from nodescan.config import CONFIG_KEYS, make_config
from nodescan.preprocess import preprocess_node
from nodescan.types import METASTATIC, NORMAL


def _run_pipeline(base: Path, seed=3, nodes=6):
    """Drive the four commands end to end under one directory."""
    data = base / "data"
    rc = main(["synth", "--out-dir", str(data), "--seed", str(seed),
               "--nodes", str(nodes), "--met-fraction", "0.5",
               "--sites-per-class", "10", "--spectra-per-site", "6"])
    assert rc == 0
    model = base / "model.json"
    rc = main(["train", "--training", str(data / "training.csv"),
               "--nonnodal", str(data / "nonnodal.csv"),
               "--out", str(model), "--k-ext", "10"])
    assert rc == 0
    results = base / "results"
    node_files = sorted((data / "nodes").glob("*.csv"))
    rc = main(["classify", "--model", str(model), "--out-dir", str(results),
               "--ppm"] + [str(f) for f in node_files])
    assert rc == 0
    report = base / "report.json"
    roc = base / "roc.csv"
    rc = main(["eval", "--results", str(results),
               "--truth", str(data / "truth.csv"),
               "--out", str(report), "--roc", str(roc)])
    assert rc == 0
    return {"data": data, "model": model, "results": results,
            "report": report, "roc": roc}


@pytest.fixture(scope="session")
def cli_ws(tmp_path_factory):
    os.environ.pop("NODESCAN_CONFIG", None)
    return _run_pipeline(tmp_path_factory.mktemp("cli"))


class TestPipelineArtifacts:
    def test_synth_layout(self, cli_ws):
        data = cli_ws["data"]
        assert (data / "training.csv").is_file()
        assert (data / "nonnodal.csv").is_file()
        assert len(list((data / "nodes").glob("*.csv"))) == 6
        assert len(list((data / "truth").glob("*.csv"))) == 6
        truths = io.read_truth_manifest(data / "truth.csv")
        assert len(truths) == 6
        assert sum(v == METASTATIC for v in truths.values()) == 3

    def test_model_readable(self, cli_ws):
        model = io.read_model(cli_ws["model"])
        assert model.k_ext == 10
        assert model.k_int == 1
        assert len(model.grid) == 86       # 400..800 nm crop of the 103-point axis

    def test_classify_outputs(self, cli_ws):
        jsons = sorted(cli_ws["results"].glob("*.json"))
        ppms = sorted(cli_ws["results"].glob("*.ppm"))
        assert len(jsons) == len(ppms) == 6
        for f in jsons:
            res = io.read_result(f)
            assert res.verdict in (NORMAL, METASTATIC)
            assert res.labels.size == 400
        for f in ppms:
            assert f.read_bytes().startswith(b"P3\n20 20\n255\n")

    def test_eval_report(self, cli_ws):
        report = json.loads(cli_ws["report"].read_text())
        for key in ("sensitivity", "specificity", "auc", "tp", "fp", "tn",
                    "fn", "ppv_at_prevalence", "prevalence", "n_nodes"):
            assert key in report
        assert report["n_nodes"] == 6
        assert report["sensitivity"] >= 2 / 3
        assert report["specificity"] >= 2 / 3
        pts = np.loadtxt(cli_ws["roc"], delimiter=",", skiprows=1)
        np.testing.assert_array_equal(pts[0], [0.0, 0.0])
        np.testing.assert_array_equal(pts[-1], [1.0, 1.0])

    def test_eval_prints_summary(self, cli_ws, capsys):
        rc = main(["eval", "--results", str(cli_ws["results"]),
                   "--truth", str(cli_ws["data"] / "truth.csv")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "nodes: 6" in out and "sens:" in out and "auc:" in out


class TestLibraryParity:
    def test_results_match_library_call(self, cli_ws):
        model = io.read_model(cli_ws["model"])
        node_file = sorted((cli_ws["data"] / "nodes").glob("*.csv"))[0]
        node = preprocess_node(io.read_node(node_file), model.preprocess)
        expect = classify_node(node, model, make_config())
        got = io.read_result(cli_ws["results"] / f"{node.node_id}.json")
        np.testing.assert_array_equal(got.labels, expect.labels)
        np.testing.assert_allclose(got.met_posterior, expect.met_posterior,
                                   atol=1e-12)
        assert got.verdict == expect.verdict

    def test_beta_flag_reaches_smoothing(self, cli_ws, tmp_path):
        model = io.read_model(cli_ws["model"])
        node_file = sorted((cli_ws["data"] / "nodes").glob("*.csv"))[0]
        rc = main(["classify", "--model", str(cli_ws["model"]),
                   "--out-dir", str(tmp_path), "--beta", "0", str(node_file)])
        assert rc == 0
        node = preprocess_node(io.read_node(node_file), model.preprocess)
        expect = classify_node(node, model, make_config(overrides={"beta": 0.0}))
        got = io.read_result(tmp_path / f"{node.node_id}.json")
        np.testing.assert_array_equal(got.labels, expect.labels)

    def test_stage1_only_flag(self, cli_ws, tmp_path):
        model = io.read_model(cli_ws["model"])
        node_file = sorted((cli_ws["data"] / "nodes").glob("*.csv"))[0]
        rc = main(["classify", "--model", str(cli_ws["model"]),
                   "--out-dir", str(tmp_path), "--stage1-only", str(node_file)])
        assert rc == 0
        node = preprocess_node(io.read_node(node_file), model.preprocess)
        expect = classify_node(node, model, make_config(), stage1_only=True)
        got = io.read_result(tmp_path / f"{node.node_id}.json")
        np.testing.assert_array_equal(got.labels, expect.labels)


class TestTrainOptions:
    def test_select_k_ext(self, cli_ws, tmp_path, capsys):
        out = tmp_path / "model.json"
        rc = main(["train", "--training", str(cli_ws["data"] / "training.csv"),
                   "--nonnodal", str(cli_ws["data"] / "nonnodal.csv"),
                   "--out", str(out), "--select-k-ext", "5,10"])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "selected k_ext" in printed
        assert io.read_model(out).k_ext in (5, 10)

    def test_k_diag_flag_stored(self, cli_ws, tmp_path):
        out = tmp_path / "model.json"
        rc = main(["train", "--training", str(cli_ws["data"] / "training.csv"),
                   "--nonnodal", str(cli_ws["data"] / "nonnodal.csv"),
                   "--out", str(out), "--k-ext", "10",
                   "--k-diag-metastatic", "4,1.5"])
        assert rc == 0
        model = io.read_model(out)
        np.testing.assert_array_equal(model.k_diags[METASTATIC], [4.0, 1.5])


class TestExitCodes:
    def test_missing_node_file_is_input_error(self, cli_ws, tmp_path, capsys):
        rc = main(["classify", "--model", str(cli_ws["model"]),
                   "--out-dir", str(tmp_path), str(tmp_path / "nope.csv")])
        assert rc == 1
        assert "failed" in capsys.readouterr().err

    def test_bad_config_key_is_input_error(self, cli_ws, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"betta": 1}))
        rc = main(["eval", "--results", str(cli_ws["results"]),
                   "--truth", str(cli_ws["data"] / "truth.csv"),
                   "--config", str(bad)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_numerical_failure_exits_two(self, cli_ws, tmp_path, capsys):
        """A negative-definite fixed background prior poisons the scale
        updates; the cholesky refusal must surface as exit code 2."""
        poison = tmp_path / "poison.json"
        poison.write_text(json.dumps({
            "priors.nonnodal": {"mean": [0.0, 0.0],
                                "cov": [[-1e12, 0.0], [0.0, -1e12]]},
        }))
        model = tmp_path / "model.json"
        rc = main(["train", "--training", str(cli_ws["data"] / "training.csv"),
                   "--out", str(model), "--config", str(poison),
                   "--k-ext", "10"])
        assert rc == 0
        node_file = sorted((cli_ws["data"] / "nodes").glob("*.csv"))[0]
        with pytest.warns(RuntimeWarning):
            rc = main(["classify", "--model", str(model),
                       "--out-dir", str(tmp_path / "res"), str(node_file)])
        assert rc == 2
        assert "not positive definite" in capsys.readouterr().err

    def test_eval_incomplete_manifest(self, cli_ws, tmp_path, capsys):
        manifest = tmp_path / "truth.csv"
        full = io.read_truth_manifest(cli_ws["data"] / "truth.csv")
        keep = dict(list(full.items())[:-1])
        io.write_truth_manifest(keep, manifest)
        rc = main(["eval", "--results", str(cli_ws["results"]),
                   "--truth", str(manifest)])
        assert rc == 1
        assert "no entry" in capsys.readouterr().err


class TestHelp:
    def test_classify_help_lists_every_config_key(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["classify", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for key in CONFIG_KEYS:
            assert "--" + key.replace("_", "-") in text
        assert "(default: 15.0)" in text      # beta's tuned value

    def test_top_level_help_names_commands(self, capsys):
        with pytest.raises(SystemExit):
            main(["--help"])
        text = capsys.readouterr().out
        for cmd in ("train", "classify", "eval", "synth", "sweep"):
            assert cmd in text


class TestSweep:
    def test_grid_csv(self, cli_ws, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        rc = main(["sweep", "--model", str(cli_ws["model"]),
                   "--nodes-dir", str(cli_ws["data"] / "nodes"),
                   "--truth", str(cli_ws["data"] / "truth.csv"),
                   "--out", str(out), "--betas", "0,15", "--nus", "4"])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "beta,nu,sensitivity,specificity,auc"
        assert len(lines) == 3
        grid = np.loadtxt(out, delimiter=",", skiprows=1)
        np.testing.assert_array_equal(grid[:, 0], [0.0, 15.0])
        np.testing.assert_array_equal(grid[:, 1], [4.0, 4.0])
        assert np.all((grid[:, 2:] >= 0) & (grid[:, 2:] <= 1))
        printed = capsys.readouterr().out
        assert "beta = 0 nu = 4:" in printed
        assert "beta = 15 nu = 4:" in printed


class TestDeterminism:
    def test_same_seed_same_bytes(self, tmp_path):
        a = _run_pipeline(tmp_path / "a", seed=9, nodes=2)
        b = _run_pipeline(tmp_path / "b", seed=9, nodes=2)
        assert a["model"].read_bytes() == b["model"].read_bytes()
        for fa in sorted(a["results"].iterdir()):
            fb = b["results"] / fa.name
            assert fa.read_bytes() == fb.read_bytes()
        assert a["report"].read_bytes() == b["report"].read_bytes()
        assert a["roc"].read_bytes() == b["roc"].read_bytes()
