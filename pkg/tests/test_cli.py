import csv

import numpy as np
import pytest

from chsolve.cli import (
    BadValue,
    MissingRequired,
    UnknownKey,
    export_field,
    main,
    parse_config,
    read_field_csv,
    read_stats,
    run_experiment,
    summarize,
)
from chsolve.fem import P2Space, interpolate
from chsolve.mesh import build_hierarchy
from chsolve.spectral import read_report_csv


def test_table_one_style_flags():
    cfg = parse_config(
        "--preset cosine --eps 0.05 --tau 3.125e-5 --levels 6 --final-time 0.04".split(), environ={}
    )
    assert (cfg.preset, cfg.eps, cfg.tau, cfg.levels, cfg.final_time) == ("cosine", 0.05, 3.125e-5, 6, 0.04)
    assert cfg.steps == 1280 and cfg.mode == "simulate"


def test_empty_args_missing_preset():
    with pytest.raises(MissingRequired):
        parse_config([], environ={})


def test_eps_above_one_rejected():
    with pytest.raises(BadValue):
        parse_config(["--eps", "1.5"], environ={})
    with pytest.raises(BadValue):
        parse_config(["--preset", "cosine", "--eps", "1.5"], environ={})


@pytest.mark.parametrize(
    "args",
    [["--preset", "nope"], ["--preset", "cosine", "--levels", "x"], ["--preset", "cosine", "--mode", "z"],
     ["--preset", "cosine", "--tau", "0.3", "--final-time", "1"]],
)
def test_bad_values(args):
    with pytest.raises(BadValue):
        parse_config(args, environ={})


def test_unknown_flag():
    with pytest.raises(UnknownKey):
        parse_config(["--preset", "cosine", "--bogus", "1"], environ={})


def test_config_file_and_precedence(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment\npreset = oval\neps = 0.03   # trailing\nfinal-time = 0.01\ntau = 0.001\n\n")
    cfg = parse_config(["--config", str(f), "--tau", "0.002"], environ={})
    assert (cfg.preset, cfg.eps, cfg.tau, cfg.final_time) == ("oval", 0.03, 0.002, 0.01)
    f.write_text("preset = oval\ncolour = red\n")
    with pytest.raises(UnknownKey):
        parse_config(["--config", str(f)], environ={})
    f.write_text("preset = oval\neps = small\n")
    with pytest.raises(BadValue) as info:
        parse_config(["--config", str(f)], environ={})
    assert "small" in str(info.value)
    f.write_text("preset oval\n")
    with pytest.raises(BadValue):
        parse_config(["--config", str(f)], environ={})


def test_output_dir_environment(tmp_path):
    env = {"CHSOLVE_OUTPUT_DIR": str(tmp_path / "env")}
    assert parse_config(["--preset", "cosine"], environ=env).output_dir == str(tmp_path / "env")
    cfg = parse_config(["--preset", "cosine", "--output-dir", "x"], environ=env)
    assert cfg.output_dir == "x"


def test_main_reports_config_errors(capsys):
    assert main([]) == 2
    assert "MissingRequired" in capsys.readouterr().err


# ---------------------------------------------------------------- export


def test_export_counts_and_constant(tmp_path):
    s = P2Space(build_hierarchy(2).finest)
    path = export_field(s, np.ones(s.n_dof), tmp_path / "f.vtk")
    text = path.read_text().splitlines()
    assert "POINTS 41 double" in text
    assert "CELLS 64 256" in text
    k = text.index("LOOKUP_TABLE default")
    assert [float(v) for v in text[k + 1:]] == [1.0] * 41


def test_export_subtriangles_cover_the_square(tmp_path):
    s = P2Space(build_hierarchy(3).finest)
    path = export_field(s, np.zeros(s.n_dof), tmp_path / "f.vtk")
    lines = path.read_text().splitlines()
    i = next(k for k, l in enumerate(lines) if l.startswith("CELLS"))
    cells = np.array([[int(t) for t in l.split()[1:]] for l in lines[i + 1:i + 1 + 4 * s.mesh.n_triangles]])
    p = s.nodes[cells]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    assert np.all(area > 0) and abs(area.sum() - 1) <= 1e-14


def test_csv_round_trip(tmp_path, rng):
    s = P2Space(build_hierarchy(3).finest)
    v = rng.standard_normal(s.n_dof) * 1e3
    export_field(s, v, tmp_path / "f.csv")
    xy, vals = read_field_csv(tmp_path / "f.csv")
    assert np.abs(vals - v).max() <= 1e-12
    np.testing.assert_array_equal(xy, s.nodes)


# ---------------------------------------------------------------- runs


def _run(tmp_path, *extra):
    cfg = parse_config(["--output-dir", str(tmp_path), *extra], environ={})
    return run_experiment(cfg)


def test_constant_preset_run(tmp_path):
    assert _run(tmp_path, "--preset", "constant:1", "--levels", "2", "--n-steps", "4") == 0
    rows = read_stats(tmp_path / "stats.csv")
    assert len(rows) == 5
    for r in rows:
        assert abs(float(r["energy"])) <= 1e-12
        assert float(r["mass"]) == pytest.approx(1.0, abs=1e-14)
        assert int(r["newton_its"]) <= 1
    assert (tmp_path / "field_0.vtk").exists() and (tmp_path / "field_4.csv").exists()


def test_stats_and_summary_consistent_and_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["--preset", "cosine", "--levels", "3", "--n-steps", "5", "--snapshot-steps", "2"]
    assert _run(a, *args) == 0 and _run(b, *args) == 0
    ra, rb = read_stats(a / "stats.csv"), read_stats(b / "stats.csv")
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_s"} for r in rows]
    assert strip(ra) == strip(rb)
    assert list(ra[0]) == ["step", "t", "newton_its", "minres_its", "energy", "modified_energy",
                           "mass", "wall_s", "minres_max"]
    summary = dict(
        line.split(" = ") for line in (a / "summary.txt").read_text().splitlines()
    )
    again = summarize(ra)
    assert float(summary["avg_minres_its"]) == again["avg_minres_its"]
    assert int(summary["max_minres_its"]) == again["max_minres_its"]
    assert float(summary["avg_wall_s"]) == again["avg_wall_s"]
    assert summary["status"] == "complete"
    assert sorted(p.name for p in a.glob("field_*")) == ["field_2.csv", "field_2.vtk"]


def test_failed_run_keeps_partial_outputs(tmp_path):
    code = _run(tmp_path, "--preset", "cosine", "--levels", "3", "--n-steps", "3", "--minres-maxit", "2")
    assert code == 1
    rows = read_stats(tmp_path / "stats.csv")
    assert len(rows) == 1  # the initial state only
    assert "aborted" in (tmp_path / "summary.txt").read_text()


def test_certify_spectrum_mode(tmp_path):
    code = _run(tmp_path, "--mode", "certify-spectrum", "--spectral-levels", "0,1",
                "--tau-grid", "1,0.01", "--eps-grid", "0.1,0.001")
    assert code == 0
    rows = read_report_csv(tmp_path / "spectral_report.csv")
    assert len(rows) == 8 and all(r["passed"] for r in rows)


def test_convergence_study_mode(tmp_path):
    code = _run(tmp_path, "--mode", "convergence-study", "--preset", "oval", "--eps", "0.03",
                "--study-levels", "2,3", "--reference-level", "4", "--final-time", "0.0875",
                "--init", "ritz")
    assert code == 0
    with open(tmp_path / "convergence.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["level"]) for r in rows] == [2, 3]
    assert float(rows[0]["h1_error"]) > float(rows[1]["h1_error"]) > 0


def test_cross_preset_snapshots(tmp_path):
    assert _run(tmp_path, "--preset", "cross", "--levels", "3", "--eps", "0.01",
                "--n-steps", "10", "--snapshot-steps", "0,10") == 0
    xy, vals = read_field_csv(tmp_path / "field_0.csv")
    inside = (xy[:, 0] >= 0.4) & (xy[:, 0] <= 0.6) & (xy[:, 1] >= 0.3) & (xy[:, 1] <= 0.7)
    assert np.all(vals[inside] == 1.0) and np.all(np.isin(vals, [-1.0, 1.0]))
    s = P2Space(build_hierarchy(4).finest)
    np.testing.assert_allclose(vals, interpolate(s, lambda x, y: np.where(
        ((x >= .3) & (x <= .7) & (y >= .4) & (y <= .6)) | ((x >= .4) & (x <= .6) & (y >= .3) & (y <= .7)), 1.0, -1.0)))
