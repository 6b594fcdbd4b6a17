"""Experiment configuration read from JSON."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import get_function
from .mesh import ConvexPolygon, named_polygon
from .norms import SpaceSpec, parse_space

__all__ = ["ConfigError", "GreenSettings", "ExperimentConfig", "load_config", "DEFAULT_SPACES"]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


DEFAULT_SPACES = [
    {"space": "lp", "p": 4 / 3},
    {"space": "lp", "p": 2},
    {"space": "lp", "p": 4},
    {"space": "lp", "p": 8},
    {"space": "lorentz", "p": 2, "q": 4},
    {"space": "lorentz", "p": 4, "q": 1.5},
    {"space": "orlicz", "phi": "power", "p": 3},
    {"space": "orlicz", "phi": "exp"},
    {"space": "bmo"},
    {"space": "wlp", "p": 2, "weight": "power", "beta": 1.0, "center": [0.5, 0.5]},
    {"space": "lorentz", "p": 2, "q": 4, "weight": "power", "beta": 1.0, "center": [0.5, 0.5]},
    {"space": "varexp", "p0": 2, "px": 1, "py": 0},
]


@dataclass(frozen=True)
class GreenSettings:
    K: float = 4.0
    gamma: float = 0.25
    alpha: float = 0.5
    k0: float = 4.0
    fine_offset: int = 2
    levels: tuple[int, ...] = (2, 3, 4)
    K_sweep: tuple[float, ...] = (4.0, 8.0)
    n_z: int = 200
    n_convolution: int = 50
    n_local: int = 20
    corpus: tuple[str, ...] = ()

    def __post_init__(self):
        if self.K <= 2:
            raise ConfigError("green.K must exceed 2")
        if not (0 < self.gamma < self.alpha <= 1):
            raise ConfigError("need 0 < green.gamma < green.alpha <= 1")
        if self.fine_offset < 0:
            raise ConfigError("green.fine_offset must be nonnegative")
        if self.k0 <= 0:
            raise ConfigError("green.k0 must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    domain: str | tuple = "square"
    degrees: tuple[int, ...] = (1,)
    levels: tuple[int, ...] = (2, 3, 4, 5)
    corpus: tuple[str, ...] = ("bubble", "sine", "sing06", "sing02", "osc")
    spaces: tuple[dict, ...] = tuple(DEFAULT_SPACES)
    sample_count: int = 200
    sample_seed: int = 0
    green: GreenSettings = field(default_factory=GreenSettings)
    rel_tol: float = 1e-10
    output_dir: str = "results"
    stability_corpus: tuple[str, ...] = ("sing06", "sine")

    def __post_init__(self):
        if not self.levels or list(self.levels) != sorted(set(self.levels)):
            raise ConfigError("levels must be nonempty and strictly ascending")
        if any(k not in (1, 2) for k in self.degrees) or not self.degrees:
            raise ConfigError("degree must be 1, 2 or a list of them")
        for name in self.corpus + self.stability_corpus + self.green.corpus:
            try:
                get_function(name)
            except KeyError as e:
                raise ConfigError(e.args[0]) from None
        if self.sample_count < 1:
            raise ConfigError("sample_points.count must be positive")
        self.polygon()
        self.space_specs()

    def polygon(self) -> ConvexPolygon:
        try:
            if isinstance(self.domain, str):
                return named_polygon(self.domain)
            return ConvexPolygon(self.domain)
        except (KeyError, ValueError) as e:
            raise ConfigError(f"bad domain: {e}") from None

    def space_specs(self) -> list[SpaceSpec]:
        try:
            return [parse_space(d) for d in self.spaces]
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"bad space entry: {e}") from None

    def to_dict(self) -> dict:
        g = self.green
        return {
            "domain": self.domain if isinstance(self.domain, str) else [list(v) for v in self.domain],
            "degree": list(self.degrees),
            "levels": list(self.levels),
            "corpus": list(self.corpus),
            "stability_corpus": list(self.stability_corpus),
            "spaces": [dict(s) for s in self.spaces],
            "sample_points": {"count": self.sample_count, "seed": self.sample_seed},
            "green": {
                "K": g.K,
                "gamma": g.gamma,
                "alpha": g.alpha,
                "k0": g.k0,
                "fine_offset": g.fine_offset,
                "levels": list(g.levels),
                "K_sweep": list(g.K_sweep),
                "n_z": g.n_z,
                "n_convolution": g.n_convolution,
                "n_local": g.n_local,
                "corpus": list(g.corpus),
            },
            "solver": {"rel_tol": self.rel_tol},
            "output_dir": self.output_dir,
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (output_dir excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {"domain", "degree", "levels", "corpus", "stability_corpus", "spaces", "sample_points", "green", "solver", "output_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        if "domain" in d:
            dom = d["domain"]
            kw["domain"] = dom if isinstance(dom, str) else tuple(tuple(map(float, v)) for v in dom)
        if "degree" in d:
            deg = d["degree"]
            kw["degrees"] = tuple(int(k) for k in (deg if isinstance(deg, list) else [deg]))
        if "levels" in d:
            kw["levels"] = tuple(int(v) for v in d["levels"])
        if "corpus" in d:
            kw["corpus"] = tuple(d["corpus"])
        if "stability_corpus" in d:
            kw["stability_corpus"] = tuple(d["stability_corpus"])
        if "spaces" in d:
            kw["spaces"] = tuple(dict(s) for s in d["spaces"])
        if "sample_points" in d:
            sp = d["sample_points"]
            kw["sample_count"] = int(sp.get("count", 200))
            kw["sample_seed"] = int(sp.get("seed", 0))
        if "green" in d:
            g = dict(d["green"])
            for key in ("levels", "K_sweep", "corpus"):
                if key in g:
                    g[key] = tuple(g[key])
            try:
                kw["green"] = GreenSettings(**g)
            except TypeError as e:
                raise ConfigError(f"bad green settings: {e}") from None
        if "solver" in d:
            kw["rel_tol"] = float(d["solver"].get("rel_tol", 1e-10))
        if "output_dir" in d:
            kw["output_dir"] = str(d["output_dir"])
        return cls(**kw)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(data)
