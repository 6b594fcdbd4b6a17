"""Acceptance suite: one test per criterion, each recording a pass/fail line.

Run with ``pytest tests/test_acceptance.py``; the lines appear in the
"acceptance criteria" summary section.  Takes several minutes.
"""
import subprocess
import sys

import numpy as np
import pytest

from conftest import record
from ritzlab.config import ExperimentConfig
from ritzlab.corpus import CORPUS_NAMES, get_function
from ritzlab.experiments import interior_sample_points, run_green, run_pointwise, run_stability
from ritzlab.fem import AnalyticFunction, FeSpace
from ritzlab.fields import PiecewiseField
from ritzlab.green import build_delta, compute_Gh, green_sample_points, moment_residual
from ritzlab.maximal import maximal_oracle, maximal_value
from ritzlab.mesh import named_polygon, refine_to_level
from ritzlab.norms import (
    NORM_QUAD_DEGREE,
    affine_exponent,
    bmo_seminorm,
    exp_phi,
    lorentz_norm,
    lp_norm,
    muckenhoupt_estimate,
    orlicz_norm,
    power_phi,
    power_weight,
    unit_weight,
    varexp_norm,
)
from ritzlab.ritz import (
    SpdFactor,
    assemble_rhs_gradform,
    assemble_stiffness,
    energy_error,
    grad_l2_norm,
    ritz_project,
)

pytestmark = pytest.mark.slow

LEVELS = (2, 3, 4, 5)
TOP = refine_to_level(named_polygon("square"), 6)


def mesh(level):
    return TOP.mesh_at_level(level)


def _fmt(xs):
    return "[" + ", ".join(f"{x:.4g}" for x in xs) + "]"


# ---------------------------------------------------------------- criterion 1


def test_criterion_1_projection_exactness():
    rng = np.random.default_rng(2024)
    worst_id = worst_contract = worst_gal = worst_pyth = 0.0
    for k in (1, 2):
        for L in LEVELS:
            s = FeSpace(mesh(L), k)
            A = assemble_stiffness(s)
            lu = SpdFactor(A)
            for _ in range(10):
                vh = s.from_interior(rng.standard_normal(len(s.interior_dofs)))
                rh = ritz_project(s, AnalyticFunction.from_fe(vh), solver=lu)
                worst_id = max(worst_id, np.max(np.abs(rh.coefficients - vh.coefficients)))
            for name in CORPUS_NAMES:
                u = get_function(name)
                q = NORM_QUAD_DEGREE
                rh = ritz_project(s, u, 1e-12, quad_degree=q, A=A)
                b = assemble_rhs_gradform(s, u, q)
                worst_gal = max(worst_gal, np.linalg.norm(A @ rh.interior_values - b) / np.linalg.norm(b))
                nu, nr, ne = grad_l2_norm(u, s, q), grad_l2_norm(rh), energy_error(rh, u, q)
                worst_contract = max(worst_contract, nr / nu - 1)
                worst_pyth = max(worst_pyth, abs(nr**2 + ne**2 - nu**2) / nu**2)
    ok = worst_id <= 1e-10 and worst_contract <= 1e-8 and worst_gal <= 1e-8 and worst_pyth <= 1e-6
    record(
        "criterion 1 (projection exactness)",
        ok,
        f"identity {worst_id:.2e}, contraction excess {worst_contract:.2e}, "
        f"Galerkin residual {worst_gal:.2e}, Pythagoras {worst_pyth:.2e}",
    )
    assert worst_id <= 1e-10
    assert worst_contract <= 1e-8
    assert worst_gal <= 1e-8
    assert worst_pyth <= 1e-6


# ---------------------------------------------------------------- criterion 2


def test_criterion_2_convergence_rates():
    slopes = {}
    for k, (lo, hi) in ((1, (0.9, 1.1)), (2, (1.9, 2.1))):
        for name in ("bubble", "sine"):
            u = get_function(name)
            hs, errs = [], []
            for L in LEVELS:
                s = FeSpace(mesh(L), k)
                hs.append(s.mesh.mesh_size_h)
                errs.append(energy_error(ritz_project(s, u, 1e-12), u))
            slopes[(k, name)] = (np.polyfit(np.log(hs), np.log(errs), 1)[0], lo, hi)
    ok = all(lo <= s <= hi for s, lo, hi in slopes.values())
    record("criterion 2 (convergence slopes)", ok, ", ".join(f"k={k} {n}: {s:.3f}" for (k, n), (s, _, _) in slopes.items()))
    assert ok


# ---------------------------------------------------------------- criterion 3


def test_criterion_3_maximal_oracle():
    m = mesh(5)
    zs = interior_sample_points(m, 10, seed=11)
    worst = 0.0
    for name in CORPUS_NAMES:
        f = PiecewiseField.from_analytic_gradient(get_function(name), m)
        for z in zs:
            a, b = maximal_value(f, z), maximal_oracle(f, z)
            worst = max(worst, abs(a / b - 1))
    f = PiecewiseField.from_analytic_gradient(get_function("sine"), m)
    g = PiecewiseField.from_analytic_gradient(get_function("sing06"), m)
    sub = hom = True
    for z in zs[:5]:
        mf, mg = maximal_value(f, z), maximal_value(g, z)
        sub &= maximal_value(f + g, z) <= (mf + mg) * (1 + 5e-3)
        hom &= abs(maximal_value(f * 3.7, z) - 3.7 * mf) <= 1e-9 * mf
    ok = worst <= 0.02 and sub and hom
    record("criterion 3 (maximal oracle)", ok, f"worst relative gap {worst:.2%} over 50 pairs, sublinear {sub}, homogeneous {hom}")
    assert worst <= 0.02 and sub and hom


# ---------------------------------------------------------------- criterion 4


def test_criterion_4_pointwise_probe():
    cfg = ExperimentConfig.from_dict({"degree": [1, 2], "levels": list(LEVELS), "sample_points": {"count": 200, "seed": 0}})
    rep = run_pointwise(cfg)
    summary = []
    for name in CORPUS_NAMES:
        for k in (1, 2):
            summary.append(f"{name} k={k} {_fmt(rep.column('max', corpus=name, degree=k))}")
    ok = not rep.violations
    record("criterion 4 (pointwise ratio)", ok, "; ".join(summary) + ("" if ok else " | " + "; ".join(rep.violations)))
    assert ok, rep.violations


# ---------------------------------------------------------------- criterion 5


def test_criterion_5_norm_cross_checks():
    m = mesh(3)
    smooth = PiecewiseField.from_callable(lambda p: np.sin(3 * p[..., 0]) + p[..., 1] ** 2, m)
    one = PiecewiseField.from_callable(lambda p: np.ones(p.shape[:-1]), m)
    ind = PiecewiseField.from_callable(lambda p: 2.0 * (p[..., 1] < p[..., 0]), m)
    half = PiecewiseField.from_callable(lambda p: (p[..., 0] < 0.5).astype(float), m)
    checks = {
        "Lorentz q=p": max(abs(lorentz_norm(smooth, p, p) / lp_norm(smooth, p) - 1) for p in (1.5, 2, 4)) <= 5e-3,
        "Lorentz indicator": max(abs(lorentz_norm(ind, p, q) / (2 * 0.5 ** (1 / p)) - 1) for p, q in ((2, 2), (2, 4), (3, 1.5)))
        <= 5e-3,
        "Orlicz t^p": max(abs(orlicz_norm(smooth, power_phi(p)) / lp_norm(smooth, p) - 1) for p in (1.5, 3, 6)) <= 1e-6,
        "Orlicz exp": abs(orlicz_norm(one, exp_phi()) * np.log(2) - 1) <= 1e-6,
        "varexp constant": abs(varexp_norm(smooth, affine_exponent(3.0)) / lp_norm(smooth, 3.0) - 1) <= 1e-6,
        "BMO constant": bmo_seminorm(one * 5.0) <= 1e-10,
        "BMO half square": 0.45 <= bmo_seminorm(half) <= 0.55,
        "Muckenhoupt one": abs(muckenhoupt_estimate(unit_weight(), 2.0) - 1.0) <= 1e-12,
    }
    bad = [muckenhoupt_estimate(power_weight(-3.0), 2.0, L) for L in (4, 6, 8)]
    checks["Muckenhoupt |x|^-3 diverges"] = bad[2] > 2 * bad[1] > 4 * bad[0]
    ok = all(checks.values())
    record("criterion 5 (norm cross-checks)", ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok, checks


# ---------------------------------------------------------------- criterion 6


def test_criterion_6_stability_probes():
    cfg = ExperimentConfig.from_dict({"degree": [1, 2], "levels": list(LEVELS), "stability_corpus": ["sing06", "sine"]})
    rep = run_stability(cfg)
    ratios = np.array([r["ratio"] for r in rep.rows])
    ok = not rep.violations and np.all(np.isfinite(ratios))
    record(
        "criterion 6 (norm stability)",
        ok,
        f"{len(rep.rows)} ratios in [{ratios.min():.4g}, {ratios.max():.4g}]" + ("" if ok else " | " + "; ".join(rep.violations)),
    )
    assert ok, rep.violations


# ---------------------------------------------------------------- criterion 7

GREEN_LEVELS = (2, 3, 4)


@pytest.fixture(scope="module")
def green_report():
    cfg = ExperimentConfig.from_dict(
        {
            "degree": [1],
            "levels": list(LEVELS),
            "green": {"K": 4, "gamma": 0.25, "alpha": 0.5, "k0": 4, "fine_offset": 2, "levels": list(GREEN_LEVELS), "K_sweep": [4]},
        }
    )
    return run_green(cfg)


def test_criterion_7a_delta_moments():
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in (1, 2):
        for L in GREEN_LEVELS:
            m = mesh(L)
            for z in interior_sample_points(m, 20, seed=int(rng.integers(1 << 30))):
                worst = max(worst, moment_residual(build_delta(m, k, z)))
    record("criterion 7a (delta moments)", worst <= 1e-10, f"worst residual {worst:.2e}")
    assert worst <= 1e-10


def test_criterion_7b_green_gradient_scaling(green_report):
    s = green_report.column("grad_g_scaling")
    ok = s.max() <= 3 * s.min()
    record("criterion 7b (grad g_z h^2 within factor 3)", ok, _fmt(s))
    assert ok


def test_criterion_7c_convolution_flat(green_report):
    c = green_report.column("convolution_worst")
    ok = bool(np.all(np.abs(c / c[0] - 1) <= 0.1))
    record("criterion 7c (convolution ratio flat to 10%)", ok, _fmt(c))
    assert ok


def test_criterion_7d_gh_zero_in_test_mode():
    vals = []
    for k in (1, 2):
        s = FeSpace(mesh(3), k)
        vals.append(compute_Gh(s, s, sample_zs=green_sample_points(s.mesh)))
    ok = all(v == 0.0 for v in vals)
    record("criterion 7d (G_h = 0 when working = fine)", ok, _fmt(vals))
    assert ok


def test_criterion_7e_local_error_uniform(green_report):
    c = green_report.column("local_error_worst")
    ok = bool(np.all(c[1:] <= 1.2 * c[0]))
    record("criterion 7e (local error constant, k0 = 4)", ok, _fmt(c))
    assert ok


def test_criterion_7f_gh_bounded(green_report):
    g = green_report.column("Gh")
    plane = green_report.column("Gh_plane")
    ok = bool(g.max() <= 2 * g[0] and g.min() >= g[0] / 2)
    record(
        "criterion 7f (G_h within factor 2, levels 2-4)",
        ok,
        f"G_h {_fmt(g)}; with whole-plane weight normalization {_fmt(plane)}",
    )
    assert ok


# ---------------------------------------------------------------- criterion 8


def test_criterion_8_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        '{"degree": [1, 2], "levels": [2, 3], "sample_points": {"count": 40, "seed": 5},'
        ' "green": {"levels": [2, 3], "n_z": 20, "n_convolution": 10, "n_local": 4}}'
    )
    outs = []
    for run in ("a", "b"):
        proc = subprocess.run(
            [sys.executable, "-m", "ritzlab.cli", "all", "--config", str(cfg), "--out", str(tmp_path / run)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode in (0, 1), proc.stderr
        outs.append({n: (tmp_path / run / f"{n}.csv").read_bytes() for n in ("pointwise", "stability", "green")})
    same = outs[0] == outs[1]
    record("criterion 8 (bit-identical reruns)", same, "pointwise, stability, green CSVs compared byte for byte")
    assert same
