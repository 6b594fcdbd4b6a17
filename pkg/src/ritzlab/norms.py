"""Function-space norms of piecewise fields.

Every integral norm works on the discrete measure produced by an
element-by-element quadrature rule: values ``|f|`` at quadrature points
with masses ``weight * omega``.  Rearrangement-invariant quantities
(distribution function, Lorentz norms) are then exact for that measure.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .fields import PiecewiseField
from .quadrature import gauss_legendre01

__all__ = [
    "Weight",
    "OrliczFunction",
    "VariableExponent",
    "unit_weight",
    "power_weight",
    "power_phi",
    "exp_phi",
    "tlog_phi",
    "linear_phi",
    "affine_exponent",
    "halton_in_domain",
    "lp_norm",
    "distribution_function",
    "lorentz_norm",
    "orlicz_norm",
    "bmo_seminorm",
    "varexp_norm",
    "muckenhoupt_estimate",
    "nabla2_check",
    "simonenko_indices",
    "SpaceSpec",
    "Lp",
    "WeightedLp",
    "Lorentz",
    "Orlicz",
    "Bmo",
    "VarExp",
    "parse_space",
]

NORM_QUAD_DEGREE = 12


# --------------------------------------------------------------------------
# weights, N-functions and exponents


@dataclass(frozen=True)
class Weight:
    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    claimed_class: float | None = None
    singular_points: tuple = ()

    def __call__(self, p) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(p, dtype=float)), dtype=float)


def unit_weight() -> Weight:
    return Weight("one", lambda p: np.ones(p.shape[:-1]))


def power_weight(beta: float, center=(0.5, 0.5), claimed_class: float | None = None) -> Weight:
    """``|x - center|**beta``; in 2D this lies in A_p iff -2 < beta < 2(p-1)."""
    c = np.asarray(center, dtype=float)

    def w(p):
        r = np.linalg.norm(p - c, axis=-1)
        with np.errstate(divide="ignore"):
            return r**beta

    return Weight(f"power({beta:g})", w, claimed_class, (tuple(c),))


@dataclass(frozen=True)
class OrliczFunction:
    """An N-function with an optional overflow-safe logarithm."""

    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    claimed_nabla2_constant: float | None = None
    log_evaluator: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, t):
        return self.evaluator(np.asarray(t, dtype=float))

    def log(self, t):
        t = np.asarray(t, dtype=float)
        if self.log_evaluator is not None:
            return self.log_evaluator(t)
        with np.errstate(over="ignore", divide="ignore"):
            return np.log(self.evaluator(t))


def power_phi(p: float) -> OrliczFunction:
    a = 2.0 ** (1.0 / (p - 1.0)) if p > 1 else None
    return OrliczFunction(f"t^{p:g}", lambda t: t**p, a, lambda t: p * np.log(t))


def _log_expm1(t):
    t = np.asarray(t, dtype=float)
    big = t > 30.0
    with np.errstate(divide="ignore"):
        small = np.log(np.expm1(np.where(big, 1.0, t)))
    return np.where(big, t + np.log1p(-np.exp(-np.where(big, t, 30.0))), small)


def exp_phi() -> OrliczFunction:
    def phi(t):
        with np.errstate(over="ignore"):
            return np.expm1(t)

    return OrliczFunction("exp", phi, None, _log_expm1)


def tlog_phi() -> OrliczFunction:
    return OrliczFunction(
        "t2log",
        lambda t: t**2 * np.log(np.e + t),
        None,
        lambda t: 2 * np.log(t) + np.log(np.log(np.e + t)),
    )


def linear_phi() -> OrliczFunction:
    """``t``; not an N-function, kept as a negative example for the checkers."""
    return OrliczFunction("t", lambda t: t, None, np.log)


@dataclass(frozen=True)
class VariableExponent:
    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    p_minus: float = field(default=np.nan)

    def __call__(self, p):
        return np.asarray(self.evaluator(np.asarray(p, dtype=float)), dtype=float)


def affine_exponent(p0: float, px: float = 0.0, py: float = 0.0, domain=None) -> VariableExponent:
    """``p(x, y) = p0 + px*x + py*y``; ``p_minus`` sampled on ``domain`` vertices."""
    ev = lambda p: p0 + px * p[..., 0] + py * p[..., 1]
    pm = float(np.min(ev(np.asarray(domain.vertices)))) if domain is not None else np.nan
    return VariableExponent(f"{p0:g}+{px:g}x+{py:g}y", ev, pm)


# --------------------------------------------------------------------------
# discrete measure


def _measure(f: PiecewiseField, weight: Weight | None = None, quad_degree: int = NORM_QUAD_DEGREE):
    pts, w, vals = f.quadrature(quad_degree)
    mag = np.sqrt(np.einsum("eqc,eqc->eq", vals, vals))
    if weight is not None:
        w = w * weight(pts)
    return pts.reshape(-1, 2), mag.ravel(), w.ravel()


def lp_norm(f: PiecewiseField, p: float, weight: Weight | None = None, quad_degree: int = NORM_QUAD_DEGREE) -> float:
    """``(int |f|^p omega)^(1/p)``; ``p = inf`` gives the max over quadrature points."""
    if p < 1:
        raise ValueError("p must be at least 1")
    _, v, m = _measure(f, weight, quad_degree)
    if np.isinf(p):
        return float(v.max(initial=0.0))
    vmax = v.max(initial=0.0)
    if vmax == 0.0:
        return 0.0
    return float(vmax * np.sum(m * (v / vmax) ** p) ** (1.0 / p))


def distribution_function(f: PiecewiseField, t, weight: Weight | None = None, quad_degree: int = NORM_QUAD_DEGREE):
    """``mu({|f| > t})`` for scalar or array ``t``."""
    _, v, m = _measure(f, weight, quad_degree)
    order = np.argsort(v)
    vs, cm = v[order], np.cumsum(m[order][::-1])[::-1]
    idx = np.searchsorted(vs, np.asarray(t, dtype=float), side="right")
    out = np.where(idx < len(vs), cm[np.minimum(idx, len(vs) - 1)], 0.0)
    return float(out) if np.ndim(out) == 0 else out


def lorentz_norm(
    f: PiecewiseField, p: float, q: float, weight: Weight | None = None, quad_degree: int = NORM_QUAD_DEGREE
) -> float:
    """Lorentz (quasi-)norm with the ``q t^q mu^(q/p) dt/t`` normalization.

    The distribution function of the discrete measure is piecewise constant
    between consecutive sorted values, so the t-integral is summed exactly.
    """
    if p < 1 or q < 1:
        raise ValueError("need p >= 1 and q >= 1")
    _, v, m = _measure(f, weight, quad_degree)
    order = np.argsort(v)[::-1]
    vs = v[order]
    cm = np.cumsum(m[order])  # mu(t) for t just below vs[j]
    if len(vs) == 0 or vs[0] == 0.0:
        return 0.0
    scale = vs[0]
    vs = vs / scale
    if np.isinf(q):
        return float(scale * np.max(vs * cm ** (1.0 / p)))
    nxt = np.r_[vs[1:], 0.0]
    total = np.sum(cm ** (q / p) * (vs**q - nxt**q))
    return float(scale * total ** (1.0 / q))


def _luxemburg(modular, lam0: float, rtol: float) -> float:
    """Smallest ``lam`` with ``modular(lam) <= 1`` for a decreasing modular."""
    lo = hi = lam0
    while modular(lo) <= 1.0:
        lo /= 2.0
    while modular(hi) > 1.0:
        hi *= 2.0
    while hi / lo - 1.0 > rtol:
        mid = np.sqrt(lo * hi)
        if modular(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return float(hi)


def orlicz_norm(f: PiecewiseField, phi: OrliczFunction, rtol: float = 1e-12, quad_degree: int = NORM_QUAD_DEGREE) -> float:
    """Luxemburg norm by bisection on the modular ``int phi(|f|/lam)``."""
    _, v, m = _measure(f, None, quad_degree)
    if not np.any(v > 0):
        return 0.0
    keep = v > 0
    v, m = v[keep], m[keep]

    def modular(lam):
        with np.errstate(over="ignore"):
            return float(np.sum(m * phi(v / lam)))

    return _luxemburg(modular, float(np.sum(m * v) + v.max()), rtol)


def varexp_norm(
    f: PiecewiseField,
    exponent: VariableExponent,
    weight: Weight | None = None,
    rtol: float = 1e-12,
    quad_degree: int = NORM_QUAD_DEGREE,
) -> float:
    """Luxemburg norm of the modular ``int |f omega / lam|^p(x) dx``."""
    pts, v, m = _measure(f, None, quad_degree)
    px = exponent(pts)
    if np.any(px < 1):
        raise ValueError("variable exponent must be at least 1")
    if weight is not None:
        v = v * weight(pts)
    keep = v > 0
    if not np.any(keep):
        return 0.0
    v, m, px = v[keep], m[keep], px[keep]

    def modular(lam):
        with np.errstate(over="ignore"):
            return float(np.sum(m * (v / lam) ** px))

    return _luxemburg(modular, float(np.sum(m * v) + v.max()), rtol)


# --------------------------------------------------------------------------
# BMO


def halton_in_domain(mesh, n: int, seed: int) -> np.ndarray:
    lo, hi = mesh.bounding_box
    sampler = qmc.Halton(d=2, scramble=True, seed=seed)
    out = []
    count = 0
    while count < n:
        p = lo + (hi - lo) * sampler.random(max(2 * n, 16))
        p = p[mesh.contains(p, tol=-1e-12)]
        out.append(p)
        count += len(p)
    return np.concatenate(out)[:n]


def bmo_seminorm(
    f: PiecewiseField,
    n_centers: int = 64,
    n_radii: int = 12,
    n_theta: int = 32,
    n_rho: int = 8,
    seed: int = 0,
    r_range: tuple[float, float] | None = None,
) -> float:
    """Sampled sup of the normalized mean oscillation over balls clipped to the domain.

    Points of the polar rule that fall outside the domain are dropped and
    the average is taken over the measure of the clipped ball.
    """
    if n_centers < 1 or n_radii < 1:
        raise ValueError("need at least one center and one radius")
    diam = f.mesh.diameter
    r_lo, r_hi = r_range if r_range is not None else (diam / 64.0, diam)
    radii = np.geomspace(r_lo, r_hi, n_radii)
    centers = halton_in_domain(f.mesh, n_centers, seed)
    x, w = gauss_legendre01(n_rho)
    t = 2.0 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    dirs = np.column_stack([np.cos(t), np.sin(t)])
    rho = radii[:, None] * x[None, :]  # (R, n_rho)
    mass = (radii[:, None] * w[None, :] * rho)[:, :, None] * np.ones(n_theta)  # (R, n_rho, n_theta)
    best = 0.0
    for z in centers:
        pts = z + rho[:, :, None, None] * dirs[None, None, :, :]
        inside = f.mesh.contains(pts)
        vals = f.evaluate(pts)  # (R, n_rho, n_theta, c)
        m = np.where(inside, mass, 0.0)
        tot = m.sum(axis=(1, 2))
        ok = tot > 0
        mean = np.einsum("rij,rijc->rc", m, vals) / np.where(ok, tot, 1.0)[:, None]
        dev = np.sqrt(np.sum((vals - mean[:, None, None, :]) ** 2, axis=-1))
        osc = np.einsum("rij,rij->r", m, dev) / np.where(ok, tot, 1.0)
        best = max(best, float(np.max(np.where(ok, osc, 0.0))))
    return best


# --------------------------------------------------------------------------
# Muckenhoupt constants


_MUCK_GAUSS = 8


def _square_rule():
    x, w = gauss_legendre01(_MUCK_GAUSS)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), np.outer(w, w).ravel()


def _square_integrals(fn, corners, side, rule):
    """Tensor Gauss integrals of ``fn`` over squares with lower-left ``corners``."""
    q, w = rule
    pts = corners[:, None, :] + side * q[None, :, :]
    vals = fn(pts)
    return side**2 * (vals @ w), vals


def _adaptive_square(fn, corner, side, sing, min_cell, rule):
    """Integral and sampled sup over a square, split toward singular points."""
    near = np.all((sing >= corner - 1e-14) & (sing <= corner + side + 1e-14), axis=1) if len(sing) else np.array([False])
    if side <= min_cell or not np.any(near):
        integ, vals = _square_integrals(fn, corner[None], side, rule)
        return float(integ[0]), float(vals.max())
    half = side / 2.0
    total, sup = 0.0, 0.0
    for dx in (0.0, half):
        for dy in (0.0, half):
            i, s = _adaptive_square(fn, corner + np.array([dx, dy]), half, sing, min_cell, rule)
            total += i
            sup = max(sup, s)
    return total, sup


def muckenhoupt_estimate(weight: Weight, p: float, max_level: int = 6, bbox=None) -> float:
    """Sampled A_p characteristic over dyadic and singularity-centered squares.

    Squares holding a singular point are integrated on a quadtree refined
    down to cells of side ``2**-(max_level + 2)`` times the box size, so the
    estimate keeps growing with ``max_level`` when the weight is not in A_p.
    Non-finite averages give ``inf``.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    lo, hi = (np.zeros(2), np.ones(2)) if bbox is None else (np.asarray(bbox[0], float), np.asarray(bbox[1], float))
    L = float(np.max(hi - lo))
    sing = np.asarray(weight.singular_points, dtype=float).reshape(-1, 2)
    min_cell = L * 2.0 ** -(max_level + 2)
    rule = _square_rule()

    if p == 1:
        dual = lambda x: 1.0 / weight(x)
    else:
        dual = lambda x: weight(x) ** (-1.0 / (p - 1.0))

    def constant(corners, side):
        out = np.empty(len(corners))
        has = np.zeros(len(corners), dtype=bool)
        if len(sing):
            for s in sing:
                has |= np.all((corners <= s + 1e-14) & (s <= corners + side + 1e-14), axis=1)
        with np.errstate(all="ignore"):
            if np.any(~has):
                iw, _ = _square_integrals(weight, corners[~has], side, rule)
                idual, vdual = _square_integrals(dual, corners[~has], side, rule)
                out[~has] = _combine(iw, idual, vdual.max(axis=1), side)
            for i in np.flatnonzero(has):
                iw, _ = _adaptive_square(weight, corners[i], side, sing, min_cell, rule)
                idual, sdual = _adaptive_square(dual, corners[i], side, sing, min_cell, rule)
                out[i] = _combine(np.array([iw]), np.array([idual]), np.array([sdual]), side)[0]
        return out

    def _combine(iw, idual, sdual, side):
        aw = iw / side**2
        if p == 1:
            c = aw * sdual
        else:
            c = aw * (idual / side**2) ** (p - 1.0)
        return np.where(np.isfinite(c), c, np.inf)

    best = 0.0
    for level in range(max_level + 1):
        n = 2**level
        side = L / n
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        corners = lo + side * np.column_stack([i.ravel(), j.ravel()])
        best = max(best, float(np.max(constant(corners, side))))
        for s in sing:
            best = max(best, float(constant((s - side / 2.0)[None], side)[0]))
    return best


# --------------------------------------------------------------------------
# N-function checks


def _safe_grid(values_ok: np.ndarray, t: np.ndarray, what: str) -> np.ndarray:
    if not np.all(values_ok):
        kept = t[values_ok]
        warnings.warn(
            f"{what}: overflow on part of the t-grid, shrunk to [{kept.min():.3g}, {kept.max():.3g}]",
            RuntimeWarning,
            stacklevel=3,
        )
    return values_ok


def nabla2_check(phi: OrliczFunction, a: float, t_grid=None) -> tuple[bool, float]:
    """Check ``2a phi(t) <= phi(a t)`` on a log-spaced grid.

    Returns the verdict and the worst ratio ``2a phi(t) / phi(a t)``.
    """
    if a <= 1:
        raise ValueError("a must exceed 1")
    t = np.logspace(-6, 6, 1201) if t_grid is None else np.asarray(t_grid, dtype=float)
    with np.errstate(over="ignore"):
        lhs = np.log(2.0 * a) + phi.log(t)
        rhs = phi.log(a * t)
    ok = _safe_grid(np.isfinite(lhs) & np.isfinite(rhs), t, "nabla2_check")
    log_ratio = lhs[ok] - rhs[ok]
    worst = float(np.exp(np.max(log_ratio)))
    return bool(np.all(log_ratio <= np.log1p(1e-12))), worst


def simonenko_indices(phi: OrliczFunction, lambdas=(1e-4, 1e4), t_grid=None) -> tuple[float, float]:
    """Estimates ``log h(lam) / log lam`` at a small and a large ``lam``,
    with ``h(lam) = sup_t phi(lam t) / phi(t)`` over ``t_grid``."""
    t = np.logspace(-6, 6, 1201) if t_grid is None else np.asarray(t_grid, dtype=float)
    out = []
    for lam in lambdas:
        with np.errstate(over="ignore", divide="ignore"):
            lr = phi.log(lam * t) - phi.log(t)
        ok = _safe_grid(np.isfinite(lr), t, "simonenko_indices")
        out.append(float(np.max(lr[ok]) / np.log(lam)))
    return out[0], out[1]


# --------------------------------------------------------------------------
# space descriptors


class SpaceSpec:
    """Base class; subclasses implement :meth:`norm` and carry a short label."""

    label: str

    def norm(self, f: PiecewiseField) -> float:  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class Lp(SpaceSpec):
    p: float

    @property
    def label(self):
        return f"L{self.p:g}"

    def norm(self, f):
        return lp_norm(f, self.p)


@dataclass(frozen=True)
class WeightedLp(SpaceSpec):
    p: float
    weight: Weight

    def __post_init__(self):
        if not (1 < self.p < np.inf):
            raise ValueError("weighted Lp needs p in (1, inf)")

    @property
    def label(self):
        return f"L{self.p:g}[{self.weight.name}]"

    def norm(self, f):
        return lp_norm(f, self.p, self.weight)


@dataclass(frozen=True)
class Lorentz(SpaceSpec):
    p: float
    q: float
    weight: Weight | None = None

    def __post_init__(self):
        ok = (1 < self.p < np.inf and 1 < self.q) or (self.p == 1 and np.isinf(self.q))
        if not ok:
            raise ValueError(f"Lorentz exponents ({self.p}, {self.q}) outside p in (1,inf), q in (1,inf] or p=1, q=inf")

    @property
    def label(self):
        w = f"[{self.weight.name}]" if self.weight is not None else ""
        return f"L({self.p:g},{self.q:g}){w}"

    def norm(self, f):
        return lorentz_norm(f, self.p, self.q, self.weight)


@dataclass(frozen=True)
class Orlicz(SpaceSpec):
    phi: OrliczFunction

    @property
    def label(self):
        return f"Orlicz[{self.phi.name}]"

    def norm(self, f):
        return orlicz_norm(f, self.phi)


@dataclass(frozen=True)
class Bmo(SpaceSpec):
    n_centers: int = 64
    n_radii: int = 12
    seed: int = 0

    @property
    def label(self):
        return "BMO"

    def norm(self, f):
        return bmo_seminorm(f, self.n_centers, self.n_radii, seed=self.seed)


@dataclass(frozen=True)
class VarExp(SpaceSpec):
    exponent: VariableExponent
    weight: Weight | None = None

    @property
    def label(self):
        w = f"[{self.weight.name}]" if self.weight is not None else ""
        return f"Lp(x)[{self.exponent.name}]{w}"

    def norm(self, f):
        return varexp_norm(f, self.exponent, self.weight)


def _parse_weight(d: dict) -> Weight | None:
    kind = d.get("weight")
    if kind is None or kind == "one":
        return None
    if kind == "power":
        return power_weight(float(d.get("beta", 1.0)), d.get("center", (0.5, 0.5)))
    raise ValueError(f"unknown weight {kind!r}; valid: one, power")


def _parse_phi(d: dict) -> OrliczFunction:
    kind = d.get("phi")
    if kind == "exp":
        return exp_phi()
    if kind == "power":
        return power_phi(float(d["p"]))
    if kind == "tlog":
        return tlog_phi()
    raise ValueError(f"unknown Orlicz function {kind!r}; valid: exp, power, tlog")


def _q(value) -> float:
    return np.inf if value in ("inf", None) else float(value)


def parse_space(d: dict) -> SpaceSpec:
    """Build a :class:`SpaceSpec` from its JSON form, e.g. ``{"space": "lorentz", "p": 2, "q": 4}``."""
    kind = d.get("space")
    if kind == "lp":
        return Lp(_q(d["p"]))
    if kind == "wlp":
        w = _parse_weight(d)
        return WeightedLp(float(d["p"]), w if w is not None else unit_weight())
    if kind == "lorentz":
        return Lorentz(float(d["p"]), _q(d["q"]), _parse_weight(d))
    if kind == "orlicz":
        return Orlicz(_parse_phi(d))
    if kind == "bmo":
        return Bmo(int(d.get("n_centers", 64)), int(d.get("n_radii", 12)), int(d.get("seed", 0)))
    if kind == "varexp":
        ex = affine_exponent(float(d.get("p0", 2.0)), float(d.get("px", 0.0)), float(d.get("py", 0.0)))
        return VarExp(ex, _parse_weight(d))
    raise ValueError(f"unknown space {kind!r}; valid: lp, wlp, lorentz, orlicz, bmo, varexp")
