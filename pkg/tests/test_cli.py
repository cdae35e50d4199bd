import json
import subprocess
import sys

import numpy as np
import pytest

from oscgroup import fixtures, io
from oscgroup.cli import (
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_NONCONVERGENCE,
    EXIT_OK,
    RunConfig,
    main,
    resolve_config,
)
from oscgroup.errors import ConfigError
from oscgroup.pipelines import label_accuracy


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture
def small_image(tmp_path):
    img, truth = fixtures.three_level(0, size=24, sigma=10.0)
    path = io.write_pgm(tmp_path / "img.pgm", img)
    return path, truth


# -- exit codes -------------------------------------------------------------

@pytest.mark.parametrize("argv", [[], ["bogus"], ["cluster", "--dt", "-1"], ["cluster", "--mode", "fixed"],
                                  ["segment", "--tiles", "2by2"], ["fixtures", "nope"]])
def test_bad_arguments_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG


def test_missing_or_empty_input_exit_2(tmp_path):
    assert run("cluster", tmp_path / "none.csv", "--out", tmp_path) == EXIT_CONFIG
    (tmp_path / "p.csv").write_text("# oscgroup points v1\nx,y\n")
    assert run("cluster", tmp_path / "p.csv", "--out", tmp_path) == EXIT_CONFIG


def test_sixteen_bit_pgm_exit_2(tmp_path, capsys):
    (tmp_path / "a.pgm").write_bytes(b"P5\n2 1\n65535\n" + b"\x00\x01\x00\x02")
    assert run("segment", tmp_path / "a.pgm", "--out", tmp_path) == EXIT_CONFIG
    assert "8-bit" in capsys.readouterr().err


def test_malformed_grid_exit_2(tmp_path):
    (tmp_path / "g.txt").write_text("0 90 45\n10 20\n")
    assert run("contour", tmp_path / "g.txt", "--out", tmp_path) == EXIT_CONFIG


def test_indivisible_tiles_exit_2(tmp_path):
    io.write_pgm(tmp_path / "a.pgm", np.zeros((5, 4)))
    assert run("segment", tmp_path / "a.pgm", "--tiles", "2x2", "--out", tmp_path) == EXIT_CONFIG


def test_divergence_exit_3(tmp_path, capsys):
    assert run("simulate", "--pair", 5, "--dt", 1.5, "--periods", 2, "--out", tmp_path) == EXIT_DIVERGENCE
    assert "diverged" in capsys.readouterr().err


def test_strict_nonconvergence_exit_4(tmp_path, capsys):
    img, _ = fixtures.three_level(0, size=24, sigma=40.0)
    path = io.write_pgm(tmp_path / "n.pgm", img)
    args = ["segment", path, "--feedback", "--k", 3, "--max-periods", 1, "--out", tmp_path]
    assert run(*args, "--strict") == EXIT_NONCONVERGENCE
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "not-converged"
    assert "still changing" in capsys.readouterr().err


# -- tasks ------------------------------------------------------------------

def test_cluster_two_blobs(tmp_path):
    assert run("fixtures", "two-blobs", "--out", tmp_path / "fx") == EXIT_OK
    out = tmp_path / "run"
    assert run("cluster", tmp_path / "fx" / "points.csv", "--beta", 3, "--out", out) == EXIT_OK
    labels = io.read_labels(out / "labels.csv")
    truth = io.read_labels(tmp_path / "fx" / "truth.csv")
    assert len(set(labels.tolist())) == 2
    assert label_accuracy(labels, truth) == 1.0
    assert not (out / "traces.csv").exists()
    lines = (out / "coincidence.csv").read_text().splitlines()
    assert lines[:2] == ["# oscgroup coincidence v1", "t,count"] and len(lines) > 2


def test_cluster_emit_traces(tmp_path):
    pts, _ = fixtures.two_blobs(0, n_per_blob=5)
    io.write_points(tmp_path / "p.csv", pts)
    assert run("cluster", tmp_path / "p.csv", "--emit-traces", "--periods", 2, "--out", tmp_path) == EXIT_OK
    _, v = io.read_traces(tmp_path / "traces.csv")
    assert v.shape[1] == 10


def test_contour_vertical(tmp_path):
    assert run("fixtures", "contour-vertical", "--out", tmp_path / "fx") == EXIT_OK
    assert run("contour", tmp_path / "fx" / "grid.txt", "--out", tmp_path / "run") == EXIT_OK
    truth = set(io.read_cells(tmp_path / "fx" / "truth.csv")[0])
    found = io.read_cells(tmp_path / "run" / "contours.csv")
    assert max(len(truth & set(c)) for c in found) >= 9
    assert io.read_pgm(tmp_path / "run" / "overlay.pgm").shape == (160, 160)


def test_segment_accuracy_and_single_tile(tmp_path, small_image):
    path, truth = small_image
    assert run("segment", path, "--beta", 10, "--out", tmp_path / "a") == EXIT_OK
    assert run("segment", path, "--beta", 10, "--tiles", "1x1", "--out", tmp_path / "b") == EXIT_OK
    labels = io.read_label_map(tmp_path / "a" / "labels.csv")
    assert label_accuracy(labels, truth) >= 0.99
    assert (tmp_path / "a" / "labels.csv").read_bytes() == (tmp_path / "b" / "labels.csv").read_bytes()


def test_simulate_pair_traces(tmp_path):
    assert run("simulate", "--pair", 20, "--periods", 1, "--out", tmp_path) == EXIT_OK
    times, v = io.read_traces(tmp_path / "traces.csv")
    assert v.shape == (len(times), 2)


def test_check_stability_pair_and_nodes(tmp_path):
    assert run("check-stability", "--pair", 16, "--out", tmp_path / "p") == EXIT_OK
    rep = io.parse_kv((tmp_path / "p" / "stability.txt").read_text(), "stability-report")
    assert rep["satisfied"] is True and rep["metric_satisfied"] is True
    assert rep["margin"] > 0 and rep["metric_bound"] == 15.0

    assert run("check-stability", "--nodes", 2, "--out", tmp_path / "n") == EXIT_OK
    rep = io.parse_kv((tmp_path / "n" / "stability.txt").read_text(), "stability-report")
    assert rep["satisfied"] is False and rep["margin"] < 0

    io.write_edges(tmp_path / "e.csv", 3, [(0, 1, 20.0), (1, 2, 20.0)])
    assert run("check-stability", tmp_path / "e.csv", "--out", tmp_path / "e") == EXIT_OK
    assert run("check-stability", "--out", tmp_path / "x") == EXIT_CONFIG


# -- fixtures ---------------------------------------------------------------

def test_fixture_output_is_byte_reproducible(tmp_path):
    for d in ("a", "b"):
        assert run("fixtures", "uniform-plus-cluster", "--seed", 7, "--out", tmp_path / d) == EXIT_OK
    for name in ("points.csv", "truth.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_three_level_fixture_statistics(tmp_path):
    assert run("fixtures", "three-level", "--seed", 3, "--out", tmp_path) == EXIT_OK
    img = io.read_gray_text(tmp_path / "image.txt")
    truth = io.read_label_map(tmp_path / "truth.csv")
    assert img.shape == truth.shape == (64, 64)
    assert fixtures.region_means_within(img, truth, fixtures.LEVELS3, 10.0)
    assert io.read_pgm(tmp_path / "image.pgm").max() <= 255


@pytest.mark.parametrize("name", ["random-grid", "contour-crossing", "contour-curved", "two-level"])
def test_other_fixtures_write(tmp_path, name):
    assert run("fixtures", name, "--out", tmp_path) == EXIT_OK
    assert (tmp_path / "truth.csv").exists()


# -- configuration and reproducibility -------------------------------------

def test_config_round_trip_reproduces_run(tmp_path):
    pts, _ = fixtures.two_blobs(4, n_per_blob=10)
    io.write_points(tmp_path / "p.csv", pts)
    assert run("cluster", tmp_path / "p.csv", "--seed", 9, "--periods", 6, "--out", tmp_path / "a") == EXIT_OK
    cfg = RunConfig.from_json((tmp_path / "a" / "config.json").read_text())
    assert cfg.seed == 9 and cfg.periods == 6
    assert run("cluster", "--config", tmp_path / "a" / "config.json", "--out", tmp_path / "b") == EXIT_OK
    assert (tmp_path / "a" / "labels.csv").read_bytes() == (tmp_path / "b" / "labels.csv").read_bytes()
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 9
    assert str(tmp_path / "p.csv") in manifest["inputs"]


def test_flags_override_config(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"seed": 3, "periods": 4.0}))
    cfg = resolve_config(["cluster", "--config", str(tmp_path / "c.json"), "--seed", "5"])
    assert cfg.seed == 5 and cfg.periods == 4.0


def test_run_config_json_round_trip():
    cfg = RunConfig(task="segment", tiles=(2, 4), beta_t=12.5, feedback=False, k=3)
    assert RunConfig.from_json(cfg.to_json()) == cfg


def test_unknown_config_key_exit_2(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"bogus": 1}))
    assert run("cluster", "--config", tmp_path / "c.json", "--out", tmp_path) == EXIT_CONFIG
    (tmp_path / "d.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        resolve_config(["cluster", "--config", str(tmp_path / "d.json")])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "oscgroup.cli", "check-stability", "--pair", "2",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == EXIT_OK
    assert "not satisfied" in proc.stdout
