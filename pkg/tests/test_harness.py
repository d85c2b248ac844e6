import json
import math

import numpy as np
import pytest

from wflow import analytic
from wflow.functionals import RieszKernel, mmd_squared
from wflow.harness.cli import main
from wflow.harness.config import ConfigError, load_config, parse_config, preset_names, preset_path
from wflow.harness.experiment import (
    MetricRow,
    compare_to_analytic,
    read_metrics,
    read_trace_dir,
    run_experiment,
    write_metrics,
)
from wflow.harness.images import PgmError, read_pgm, sample_image_target, write_pgm
from wflow.harness.svg import auto_bounds, emit_svg
from wflow.measures import ParticleCloud, RandomSource, write_points


def base_doc(**changes):
    doc = {
        "scheme": "particle",
        "functional": {"kind": "interaction", "r": 1},
        "d": 2,
        "n": 20,
        "init": {"kind": "uniform_square", "center": [0, 0], "radius": 1e-9},
        "tau": 0.05,
        "horizon": 0.6,
        "reference": "analytic",
    }
    doc.update(changes)
    return doc


def preset_doc(name):
    return json.loads(preset_path(name).read_text())


# configuration


def test_every_preset_parses():
    names = preset_names()
    assert {"interaction_1_2", "line_mmd", "barycenter", "branching", "image_target"} <= set(names)
    for name in names:
        cfg = load_config(name)
        assert cfg.horizon > 0 and cfg.n >= 1


def test_schema_problems_are_aggregated():
    doc = base_doc(scheme="sideways", d=0, extra=1)
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    text = "\n".join(info.value.problems)
    assert len(info.value.problems) == 3
    assert "sideways" in text and "extra" in text


def test_semantic_problems_are_aggregated():
    doc = base_doc(
        functional={"kind": "mmd", "r": 2.5, "target": {"kind": "points", "path": "missing.csv"}},
        init={"kind": "dirac", "center": [0, 0]},
        horizon=-1,
    )
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    problems = info.value.problems
    assert any("(0, 2)" in p for p in problems)
    assert any("missing.csv" in p for p in problems)
    assert any("pairwise distinct" in p for p in problems)
    assert any("horizon" in p for p in problems)


def test_particle_scheme_rejects_dirac_start():
    with pytest.raises(ConfigError, match="pairwise distinct"):
        parse_config(base_doc(init={"kind": "dirac", "center": [0, 0]}))


def test_neural_scheme_needs_train_section():
    with pytest.raises(ConfigError, match="train"):
        parse_config(base_doc(scheme="backward"))


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="no config file or preset"):
        load_config(tmp_path / "nothing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(bad)


def test_relative_target_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "data").mkdir()
    write_points(tmp_path / "data" / "target.csv", np.array([[0.0, 1.0], [1.0, 0.0]]))
    doc = base_doc(functional={"kind": "mmd", "target": {"kind": "points", "path": "data/target.csv"}}, reference="target")
    (tmp_path / "cfg.json").write_text(json.dumps(doc))
    cfg = load_config(tmp_path / "cfg.json")
    f = cfg.build_functional(RandomSource(0))
    assert f.target.shape == (2, 2)


# running experiments


def test_forward_preset_writes_thirteen_snapshots(tmp_path):
    doc = preset_doc("interaction_1_2")
    doc.update(n=40, train={"iterations": 5, "hidden": [8]}, svg=False)
    result = run_experiment(parse_config(doc, output=tmp_path))
    steps = sorted(p.name for p in tmp_path.glob("step_*.csv"))
    assert len(steps) == 13 and "step_12.csv" in steps
    rows = read_metrics(tmp_path / "metrics.csv")
    assert [r["t"] for r in rows] == result.trace.times
    assert list(rows[0]) == ["t", "functional", "mmd_to_reference", "w2_radial_to_reference"]


def test_rerun_gives_identical_bytes(tmp_path):
    doc = base_doc(svg=True)
    files = []
    for run in ("a", "b"):
        result = run_experiment(parse_config(doc, output=tmp_path / run, seed=4))
        files.append({p.name: p.read_bytes() for p in result.files})
    assert files[0] == files[1]
    assert "step_12.svg" in files[0]


def test_rerun_removes_stale_snapshots(tmp_path):
    run_experiment(parse_config(base_doc(), output=tmp_path))
    run_experiment(parse_config(base_doc(horizon=0.1), output=tmp_path))
    assert sorted(p.name for p in tmp_path.glob("step_*")) == ["step_0.csv", "step_1.csv", "step_2.csv"]


def test_read_trace_dir_orders_numerically(tmp_path):
    for k in (10, 2, 0, 1):
        write_points(tmp_path / f"step_{k}.csv", np.full((3, 2), float(k)), t=0.1 * k)
    assert [round(t, 10) for t, _ in read_trace_dir(tmp_path)] == [0.0, 0.1, 0.2, 1.0]
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValueError, match="no step"):
        read_trace_dir(tmp_path / "empty")


def test_metrics_round_trip(tmp_path):
    rows = [MetricRow(0.0, 0.5, None, -1.0), MetricRow(0.1, 0.25, 0.125, -2.0)]
    write_metrics(tmp_path / "m.csv", rows)
    back = read_metrics(tmp_path / "m.csv")
    assert back[0] == {"t": 0.0, "functional": -1.0, "mmd_to_reference": 0.5, "w2_radial_to_reference": None}
    assert back[1]["w2_radial_to_reference"] == 0.125


# comparing against the exact flow


def test_compare_identical_samples_gives_zero():
    snaps = [(t, analytic.sample_flow(2, 1.0, t, 300, RandomSource(7))) for t in (0.0, 0.3, 0.6)]
    rows = compare_to_analytic(snaps, 2, 1.0, seed=7)
    assert all(r.mmd_to_reference <= 1e-7 and r.w2_radial_to_reference == 0.0 for r in rows)


def test_compare_independent_samples_hits_monte_carlo_floor():
    snaps = [(0.6, analytic.sample_flow(2, 1.0, 0.6, 10_000, RandomSource(8)))]
    assert compare_to_analytic(snaps, 2, 1.0, seed=9)[0].mmd_to_reference <= 0.02


def test_compare_dirac_trace_matches_brute_force():
    n = 400
    ref = analytic.sample_flow(2, 1.0, 0.6, n, RandomSource(3)).points
    dist = np.linalg.norm(ref[:, None] - ref[None], axis=-1)
    brute = -dist.sum() / (2 * n * n) + np.linalg.norm(ref, axis=1).mean()
    rows = compare_to_analytic([(0.6, np.zeros((n, 2)))], 2, 1.0, seed=3)
    assert rows[0].mmd_to_reference == pytest.approx(math.sqrt(brute), rel=1e-12)
    assert brute == pytest.approx(mmd_squared(RieszKernel(1.0), np.zeros((1, 2)), ref), rel=1e-12)


def test_compare_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        compare_to_analytic([(0.1, np.zeros((3, 3)))], 2, 1.0)


# images


def test_pgm_round_trip(tmp_path):
    image = np.arange(12).reshape(3, 4) * 20
    write_pgm(tmp_path / "a.pgm", image)
    back, maxval = read_pgm(tmp_path / "a.pgm")
    assert maxval == 255 and np.array_equal(back, image)
    wide = np.array([[0, 1000], [65535, 7]])
    write_pgm(tmp_path / "b.pgm", wide, maxval=65535)
    assert np.array_equal(read_pgm(tmp_path / "b.pgm")[0], wide)


def test_pgm_header_with_comment(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    assert read_pgm(tmp_path / "c.pgm")[0].tolist() == [[0, 255]]


def test_pgm_errors_report_byte_offsets(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"P2\n2 2\n255\n")
    with pytest.raises(PgmError, match="byte 0"):
        read_pgm(path)
    path.write_bytes(b"P5\n2 x\n255\n")
    with pytest.raises(PgmError) as info:
        read_pgm(path)
    assert info.value.offset == 5
    path.write_bytes(b"P5\n2 2\n255\n\x00\x00\x00")
    with pytest.raises(PgmError, match="truncated") as info:
        read_pgm(path)
    assert info.value.offset == 14


def test_image_sampling(tmp_path):
    write_pgm(tmp_path / "black.pgm", np.zeros((16, 16)))
    pts = sample_image_target(tmp_path / "black.pgm", 20_000, RandomSource(0)).points
    assert np.abs(pts).max() <= 1.0
    assert np.allclose(pts.var(axis=0), 1 / 3, atol=0.01)
    half = np.full((8, 10), 255)
    half[:, :5] = 0
    write_pgm(tmp_path / "half.pgm", half)
    assert np.all(sample_image_target(tmp_path / "half.pgm", 2000, RandomSource(1)).points[:, 0] < 0)
    write_pgm(tmp_path / "white.pgm", np.full((4, 4), 255))
    with pytest.raises(ValueError, match="zero total mass"):
        sample_image_target(tmp_path / "white.pgm", 10, RandomSource(2))


def test_image_sampling_is_deterministic():
    path = preset_path("image_target").parent / "smiley.pgm"
    a = sample_image_target(path, 500, RandomSource(3)).points
    b = sample_image_target(path, 500, RandomSource(3)).points
    assert np.array_equal(a, b)


# svg


def test_svg_output(tmp_path):
    cloud = ParticleCloud([[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]])
    assert auto_bounds(cloud) == pytest.approx((-1.1, 1.1, -0.1, 2.1))
    emit_svg(cloud, path=tmp_path / "a.svg")
    emit_svg(cloud, path=tmp_path / "b.svg")
    text = (tmp_path / "a.svg").read_text()
    assert text.count("<circle") == 3
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    with pytest.raises(ValueError):
        emit_svg(np.zeros((3, 3)), path=tmp_path / "c.svg")


# command line


def test_cli_presets(capsys):
    assert main(["presets"]) == 0
    assert "line_mmd" in capsys.readouterr().out.split()


def test_cli_argument_and_config_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(base_doc(init={"kind": "dirac", "center": [0, 0]})))
    assert main(["run", str(bad)]) == 2
    assert "pairwise distinct" in capsys.readouterr().err


def test_cli_runtime_error_exit_code(tmp_path, capsys):
    doc = base_doc(
        scheme="forward",
        functional={"kind": "interaction", "r": 0.5},
        init={"kind": "dirac", "center": [0, 0]},
        train={"iterations": 2, "hidden": [4]},
        reference="none",
    )
    path = tmp_path / "sub.json"
    path.write_text(json.dumps(doc))
    assert main(["run", str(path), "--out", str(tmp_path / "out"), "--quiet"]) == 1
    assert "t=0" in capsys.readouterr().err


def test_cli_run_analytic_and_compare(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(base_doc()))
    assert main(["--seed", "3", "run", str(cfg), "--out", str(tmp_path / "run"), "--quiet"]) == 0
    assert (tmp_path / "run" / "step_12.csv").is_file()
    assert main(["analytic", "--d", "2", "--r", "1", "--tau", "0.05", "--steps", "12", "--samples", "50", "--out", str(tmp_path / "exact")]) == 0
    curves = (tmp_path / "exact" / "scale_curves.csv").read_text().splitlines()
    assert curves[0] == "t,limit_scale,scheme_scale" and len(curves) == 242
    times = (tmp_path / "exact" / "proximal_times.csv").read_text().splitlines()
    last = times[-1].split(",")
    assert last[0] == "12" and float(last[1]) == pytest.approx(0.6, abs=1e-15)
    out = tmp_path / "cmp.csv"
    assert main(["--seed", "0", "compare", "--trace-dir", str(tmp_path / "exact"), "--d", "2", "--out", str(out)]) == 0
    # the square root turns cancellation roundoff near 1e-16 into about 1e-8
    assert all(row["mmd_to_reference"] <= 1e-7 and row["w2_radial_to_reference"] == 0.0 for row in read_metrics(out))
    assert main(["compare", "--trace-dir", str(tmp_path / "nowhere"), "--d", "2", "--out", str(out)]) == 2
    capsys.readouterr()


def test_cli_checks(capsys):
    assert main(["gradcheck"]) == 0
    assert capsys.readouterr().out.strip().endswith("PASS")
    assert main(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out
