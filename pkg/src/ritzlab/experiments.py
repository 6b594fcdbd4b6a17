"""Batch experiments: pointwise ratios, norm stability and Green diagnostics.

Each runner returns an :class:`ExperimentReport` whose rows are written as
CSV.  Every runner also checks its probes (trend-flatness bounds) and
records violations; the CLI turns those into exit codes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .corpus import get_function
from .fem import FeSpace
from .fields import PiecewiseField
from .green import (
    convolution_check,
    green_sample_points,
    green_sweep,
    local_error_check,
    make_phi_weight,
)
from .maximal import RadiusGrid, maximal_value
from .mesh import Triangulation, refine_to_level
from .norms import NORM_QUAD_DEGREE, halton_in_domain
from .ritz import SolverError, ritz_project

__all__ = [
    "ExperimentReport",
    "interior_sample_points",
    "run_pointwise",
    "run_stability",
    "run_green",
    "run_all",
    "M_FLOOR",
]

log = logging.getLogger(__name__)

M_FLOOR = 1e-14
SIG_DIGITS = 12


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), f".{SIG_DIGITS}g")
    return str(v).replace(",", ";")


@dataclass
class ExperimentReport:
    name: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    def add(self, **row):
        missing = set(self.columns) - set(row)
        for c in missing:
            row[c] = np.nan if c != "error" else ""
        self.rows.append(row)

    def column(self, name: str, **where) -> np.ndarray:
        rows = [r for r in self.rows if all(r.get(k) == v for k, v in where.items())]
        return np.array([r[name] for r in rows])

    def to_csv(self) -> str:
        lines = [f"# {k}: {v}" for k, v in self.metadata.items()]
        lines.append(",".join(self.columns))
        lines += [",".join(_fmt(r[c]) for c in self.columns) for r in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{self.name}.csv"
        path.write_text(self.to_csv())
        return path


def _report(name: str, config: ExperimentConfig, columns: list[str]) -> ExperimentReport:
    meta = {"experiment": name, "ritzlab": __version__, "config_sha256": config.digest()}
    return ExperimentReport(name, columns, metadata=meta)


def interior_sample_points(mesh: Triangulation, n: int, seed: int = 0, pull: float = 0.02) -> np.ndarray:
    """Quasi-random points pulled slightly toward their element's centroid.

    Edges of coarser nested meshes are edges of ``mesh``, so the points are
    element-interior on every level of the hierarchy.
    """
    pts = halton_in_domain(mesh, n, seed)
    elems, bary = mesh.locate(pts)
    bary = (1.0 - pull) * bary + pull / 3.0
    return mesh.to_physical(elems, bary)


def _hierarchy(config: ExperimentConfig, top: int) -> Triangulation:
    return refine_to_level(config.polygon(), top)


class _MaximalCache:
    """``M[grad u](z)`` on one fixed radius grid, shared by every level."""

    def __init__(self, finest: Triangulation, zs: np.ndarray):
        self.mesh = finest
        self.zs = zs
        self.grid = RadiusGrid.for_mesh(finest.mesh_size_h, finest.diameter)
        self._values: dict[str, np.ndarray] = {}

    def __call__(self, name: str, n: int | None = None) -> np.ndarray:
        n = len(self.zs) if n is None else n
        have = self._values.get(name, np.empty(0))
        if len(have) < n:
            f = PiecewiseField.from_analytic_gradient(get_function(name), self.mesh)
            extra = [maximal_value(f, z, self.grid) for z in self.zs[len(have) : n]]
            have = np.r_[have, extra]
            self._values[name] = have
        return have[:n]


def _variation_probe(report, series: dict, tol: float, what: str, cap: float | None = None):
    """Successive relative change below ``tol`` and, optionally, at most
    ``cap`` times the first value."""
    for key, vals in series.items():
        vals = np.asarray(vals, dtype=float)
        for i in range(1, len(vals)):
            a, b = vals[i - 1], vals[i]
            if not (np.isfinite(a) and np.isfinite(b)):
                report.violations.append(f"{what} {key}: non-finite value at step {i}")
                continue
            if a > 0 and abs(b / a - 1.0) >= tol:
                report.violations.append(f"{what} {key}: changes by {abs(b / a - 1):.1%} at step {i} (bound {tol:.0%})")
        if cap is not None and len(vals) and vals[0] > 0 and np.max(vals) > cap * vals[0]:
            report.violations.append(f"{what} {key}: exceeds {cap:g}x its first value")


# --------------------------------------------------------------------------
# pointwise ratios


POINTWISE_COLUMNS = ["level", "h", "degree", "corpus", "n_samples", "skipped", "max", "mean", "q50", "q90", "q99", "error"]


def run_pointwise(config: ExperimentConfig, cache: _MaximalCache | None = None) -> ExperimentReport:
    """Ratios ``|grad R_h u(z)| / M[grad u](z)`` per level, degree and corpus entry."""
    rep = _report("pointwise", config, POINTWISE_COLUMNS)
    finest = _hierarchy(config, max(config.levels))
    if cache is None:
        cache = _MaximalCache(finest, interior_sample_points(finest, config.sample_count, config.sample_seed))
    zs = cache.zs[: config.sample_count]
    series = {}
    for name in config.corpus:
        u = get_function(name)
        M = cache(name, len(zs))
        ok = M >= M_FLOOR
        for k in config.degrees:
            for L in config.levels:
                mesh = finest.mesh_at_level(L)
                base = dict(level=L, h=mesh.mesh_size_h, degree=k, corpus=name, n_samples=len(zs), skipped=int(np.sum(~ok)))
                try:
                    rh = ritz_project(FeSpace(mesh, k), u, config.rel_tol, quad_degree=NORM_QUAD_DEGREE)
                except SolverError as e:
                    rep.add(**base, error=str(e))
                    rep.violations.append(f"pointwise {name} k={k} level {L}: {e}")
                    continue
                _, g = rh.evaluate(zs[ok])
                r = np.linalg.norm(g, axis=1) / M[ok]
                q = np.quantile(r, [0.5, 0.9, 0.99]) if len(r) else [np.nan] * 3
                rep.add(**base, max=r.max(initial=0.0), mean=r.mean() if len(r) else np.nan, q50=q[0], q90=q[1], q99=q[2])
                series.setdefault(f"{name} k={k}", []).append(r.max(initial=0.0))
                log.info("pointwise %s k=%d level %d: max ratio %.4g", name, k, L, r.max(initial=0.0))
    _variation_probe(rep, series, 0.2, "pointwise max ratio", cap=3.0)
    return rep


# --------------------------------------------------------------------------
# norm stability


STABILITY_COLUMNS = ["level", "h", "degree", "corpus", "space", "norm_Rhu", "norm_u", "ratio", "error"]


def run_stability(config: ExperimentConfig) -> ExperimentReport:
    """``||grad R_h u||_X / ||grad u||_X`` for every configured space X."""
    rep = _report("stability", config, STABILITY_COLUMNS)
    finest = _hierarchy(config, max(config.levels))
    specs = config.space_specs()
    series = {}
    for name in config.stability_corpus:
        u = get_function(name)
        for k in config.degrees:
            for L in config.levels:
                mesh = finest.mesh_at_level(L)
                base = dict(level=L, h=mesh.mesh_size_h, degree=k, corpus=name)
                try:
                    rh = ritz_project(FeSpace(mesh, k), u, config.rel_tol, quad_degree=NORM_QUAD_DEGREE)
                except SolverError as e:
                    rep.add(**base, space="*", error=str(e))
                    rep.violations.append(f"stability {name} k={k} level {L}: {e}")
                    continue
                fr = PiecewiseField.from_fe_gradient(rh)
                fu = PiecewiseField.from_analytic_gradient(u, mesh)
                for spec in specs:
                    a, b = spec.norm(fr), spec.norm(fu)
                    ratio = a / b if b > 0 else np.nan
                    rep.add(**base, space=spec.label, norm_Rhu=a, norm_u=b, ratio=ratio)
                    series.setdefault(f"{name} k={k} {spec.label}", []).append(ratio)
                    if spec.label == "L2" and ratio > 1 + 1e-6:
                        rep.violations.append(f"stability {name} k={k} level {L}: L2 ratio {ratio:.12g} exceeds 1")
                log.info("stability %s k=%d level %d done", name, k, L)
    _variation_probe(rep, series, 0.2, "stability ratio")
    return rep


# --------------------------------------------------------------------------
# Green diagnostics


def _green_columns(config: ExperimentConfig) -> list[str]:
    sweep = [f"Gh_K{K:g}" for K in config.green.K_sweep]
    return (
        ["level", "h", "degree", "fine_level", "n_z", "Gh"]
        + sweep
        + ["Gh_plane", "grad_g_scaling", "convolution_worst", "local_error_worst", "error"]
    )


def _local_error_worst(config, mesh, k, zs, names) -> float:
    g = config.green
    h = mesh.mesh_size_h
    space = FeSpace(mesh, k)
    n_z = max(1, g.n_local // 2)
    worst = 0.0
    for name in names:
        u = get_function(name)
        rh = ritz_project(space, u, config.rel_tol, quad_degree=NORM_QUAD_DEGREE)
        for z in zs[:n_z]:
            for d in (g.k0 * h, 2.0 * g.k0 * h):
                worst = max(worst, local_error_check(space, u, z, d, g.k0, ritz=rh).ratio)
    return worst


def run_green(config: ExperimentConfig, cache: _MaximalCache | None = None) -> ExperimentReport:
    """G_h with its K sweep, ``||grad g_z||_inf h^2``, and the worst
    convolution and local-error ratios, per working level."""
    g = config.green
    rep = _report("green", config, _green_columns(config))
    top = max(max(g.levels) + g.fine_offset, max(config.levels))
    finest = _hierarchy(config, top)
    names = g.corpus or config.corpus
    if cache is None:
        data_mesh = finest.mesh_at_level(max(config.levels))
        cache = _MaximalCache(data_mesh, interior_sample_points(data_mesh, config.sample_count, config.sample_seed))
    n_conv = min(g.n_convolution, len(cache.zs))
    zs = cache.zs
    series = {}
    for k in config.degrees:
        for L in g.levels:
            mesh = finest.mesh_at_level(L)
            fine_mesh = finest.mesh_at_level(L + g.fine_offset)
            h = mesh.mesh_size_h
            base = dict(level=L, h=h, degree=k, fine_level=L + g.fine_offset)
            wspace = FeSpace(mesh, k)
            fspace = wspace if fine_mesh is mesh else FeSpace(fine_mesh, k)
            try:
                probe = green_sweep(
                    wspace, fspace, g.K, g.gamma, green_sample_points(mesh, g.n_z), alpha=g.alpha, rel_tol=config.rel_tol, extra_K=g.K_sweep
                )
            except SolverError as e:
                rep.add(**base, error=str(e))
                rep.violations.append(f"green k={k} level {L}: {e}")
                continue
            conv = 0.0
            for name in names:
                f = PiecewiseField.from_analytic_gradient(get_function(name), mesh)
                M = cache(name, n_conv)
                for z, m in zip(zs[:n_conv], M):
                    if m < M_FLOOR:
                        continue
                    w = make_phi_weight(mesh, h, z, g.K, g.gamma, g.alpha)
                    conv = max(conv, convolution_check(f, w, maximal=m))
            local = _local_error_worst(config, mesh, k, zs, names)
            row = dict(
                base,
                n_z=len(probe.zs),
                Gh=probe.value,
                Gh_plane=probe.value_for(g.K, plane=True),
                grad_g_scaling=probe.grad_scaling,
                convolution_worst=conv,
                local_error_worst=local,
            )
            for K in g.K_sweep:
                row[f"Gh_K{K:g}"] = probe.value_for(K)
            rep.add(**row)
            log.info("green k=%d level %d: Gh %.4g", k, L, probe.value)
            s = series.setdefault(k, {"Gh": [], "grad": [], "conv": [], "local": [], "sweep": []})
            s["Gh"].append(probe.value)
            s["grad"].append(probe.grad_scaling)
            s["conv"].append(conv)
            s["local"].append(local)
            s["sweep"].append([probe.value_for(K) for K in g.K_sweep])
    _green_probes(rep, series, g)
    return rep


def _green_probes(rep: ExperimentReport, series: dict, g) -> None:
    v = rep.violations
    for k, s in series.items():
        Gh = np.array(s["Gh"])
        if len(Gh) and Gh[0] > 0 and (Gh.max() > 2 * Gh[0] or Gh.min() < Gh[0] / 2):
            v.append(f"green k={k}: Gh leaves a factor 2 of its first-level value ({', '.join(f'{x:.4g}' for x in Gh)})")
        grad = np.array(s["grad"])
        if len(grad) and grad.min() > 0 and grad.max() > 3 * grad.min():
            v.append(f"green k={k}: grad g scaling varies by more than a factor 3")
        conv = np.array(s["conv"])
        if len(conv) and conv[0] > 0 and np.any(np.abs(conv / conv[0] - 1) > 0.1):
            v.append(f"green k={k}: convolution worst ratio moves more than 10% ({', '.join(f'{x:.4g}' for x in conv)})")
        loc = np.array(s["local"])
        if len(loc) and np.any(loc[1:] > 1.2 * loc[0]):
            v.append(f"green k={k}: local error ratio exceeds 1.2x its first-level constant ({', '.join(f'{x:.4g}' for x in loc)})")
        Ks = list(g.K_sweep)
        if g.K in Ks:
            i0 = Ks.index(g.K)
            for row in s["sweep"]:
                for K, val in zip(Ks, row):
                    if K > g.K and val > 1.2 * row[i0]:
                        v.append(f"green k={k}: Gh(K={K:g}) = {val:.4g} exceeds 1.2 Gh(K={g.K:g}) = {row[i0]:.4g}")


def run_all(config: ExperimentConfig) -> list[ExperimentReport]:
    finest = _hierarchy(config, max(config.levels))
    cache = _MaximalCache(finest, interior_sample_points(finest, config.sample_count, config.sample_seed))
    return [run_pointwise(config, cache), run_stability(config), run_green(config, cache)]
