import json

import numpy as np
import pytest

from conftest import square_mesh
from ritzlab.cli import main
from ritzlab.config import ConfigError, ExperimentConfig, load_config
from ritzlab.experiments import interior_sample_points, run_green, run_pointwise, run_stability
from ritzlab.fem import AnalyticFunction, FeSpace
from ritzlab.fields import PiecewiseField
from ritzlab.maximal import maximal_value
from ritzlab.mesh import read_mesh
from ritzlab.ritz import ritz_project

SMALL = {
    "degree": [1],
    "levels": [1, 2],
    "corpus": ["sine", "sing06"],
    "stability_corpus": ["sine"],
    "spaces": [{"space": "lp", "p": 2}, {"space": "lp", "p": 4}, {"space": "orlicz", "phi": "exp"}],
    "sample_points": {"count": 12, "seed": 3},
    "green": {"levels": [1, 2], "n_z": 4, "n_convolution": 3, "n_local": 2, "K_sweep": [4, 8]},
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def test_config_defaults_and_roundtrip(tmp_path):
    cfg = load_config(write(tmp_path, SMALL))
    assert cfg.levels == (1, 2) and cfg.green.K == 4.0
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again.digest() == cfg.digest()
    other = dict(SMALL, output_dir="elsewhere")
    assert ExperimentConfig.from_dict(other).digest() == cfg.digest()


@pytest.mark.parametrize(
    "bad",
    [
        {"levels": [3, 2]},
        {"levels": []},
        {"degree": 3},
        {"corpus": ["nope"]},
        {"green": {"gamma": 0.6, "alpha": 0.5}},
        {"green": {"K": 2}},
        {"spaces": [{"space": "sobolev"}]},
        {"domain": "circle"},
        {"colour": "blue"},
    ],
)
def test_config_rejects(bad, tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, bad))


def test_unknown_corpus_lists_names(tmp_path):
    with pytest.raises(ConfigError, match="bubble"):
        load_config(write(tmp_path, {"corpus": ["nope"]}))


def test_sample_points_are_interior_on_every_level():
    fine = square_mesh(4)
    zs = interior_sample_points(fine, 50, 0)
    for L in range(5):
        _, b = fine.mesh_at_level(L).locate(zs)
        assert b.min() > 1e-4


def test_pointwise_ratio_bounded_for_discrete_data():
    mesh = square_mesh(1)
    s = FeSpace(mesh, 1)
    vh = s.from_interior(np.random.default_rng(0).standard_normal(len(s.interior_dofs)))
    u = AnalyticFunction.from_fe(vh)
    rh = ritz_project(s, u, 1e-13)
    f = PiecewiseField.from_fe_gradient(vh)
    for z in interior_sample_points(square_mesh(3), 10, 1):
        ratio = np.linalg.norm(rh.evaluate(z[None])[1][0]) / maximal_value(f, z)
        assert ratio <= 1 + 1e-6


def test_run_pointwise_report():
    rep = run_pointwise(ExperimentConfig.from_dict(SMALL))
    assert len(rep.rows) == 4
    assert all(r["skipped"] == 0 and r["max"] > 0 for r in rep.rows)
    text = rep.to_csv()
    lines = text.splitlines()
    assert lines[0].startswith("# experiment: pointwise")
    header = [l for l in lines if not l.startswith("#")][0]
    assert header.split(",")[:3] == ["level", "h", "degree"]
    row = [l for l in lines if not l.startswith("#")][1].split(",")
    assert len(row[6].replace(".", "").lstrip("0")) <= 12


def test_run_stability_l2_contraction():
    rep = run_stability(ExperimentConfig.from_dict(SMALL))
    l2 = rep.column("ratio", space="L2")
    assert len(l2) == 2 and np.all(l2 <= 1 + 1e-6)
    assert {r["space"] for r in rep.rows} == {"L2", "L4", "Orlicz[exp]"}


def test_run_green_test_mode_is_zero():
    cfg = ExperimentConfig.from_dict(dict(SMALL, green=dict(SMALL["green"], fine_offset=0)))
    rep = run_green(cfg)
    assert np.all(rep.column("Gh") == 0.0)


def test_run_green_columns():
    rep = run_green(ExperimentConfig.from_dict(SMALL))
    assert {"Gh", "Gh_K4", "Gh_K8", "Gh_plane", "grad_g_scaling", "convolution_worst", "local_error_worst"} <= set(rep.columns)
    assert np.all(rep.column("Gh") > 0)
    assert np.all(rep.column("Gh") == rep.column("Gh_K4"))


def test_cli_mesh(tmp_path):
    out = tmp_path / "mesh.txt"
    assert main(["mesh", "--polygon", "square", "--levels", "2", "--out", str(out)]) == 0
    assert read_mesh(out).n_triangles == square_mesh(2).n_triangles


def test_cli_bad_config_exit_2(tmp_path, capsys):
    assert main(["pointwise", "--config", str(write(tmp_path, {"levels": [2, 1]}))]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["pointwise", "--config", str(tmp_path / "missing.json")]) == 2


def test_cli_runs_and_is_deterministic(tmp_path):
    cfg = write(tmp_path, SMALL)
    codes = [main(["all", "--config", str(cfg), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    assert codes[0] == codes[1] and codes[0] in (0, 1)
    for name in ("pointwise", "stability", "green"):
        a = (tmp_path / "a" / f"{name}.csv").read_bytes()
        assert a == (tmp_path / "b" / f"{name}.csv").read_bytes()


def test_cli_reports_violations(tmp_path, capsys):
    # a single coarse level pair with osc is far from asymptotic
    cfg = write(tmp_path, dict(SMALL, corpus=["osc"], levels=[0, 1]))
    code = main(["pointwise", "--config", str(cfg), "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert (code == 1) == ("violation" in err)
