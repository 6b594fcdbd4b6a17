"""Test functions on the unit square, all vanishing on its boundary."""
from __future__ import annotations

import numpy as np

from .fem import AnalyticFunction

__all__ = ["corpus_registry", "get_function", "CORPUS_NAMES"]


def _bubble(p):
    x, y = p[..., 0], p[..., 1]
    return x * (1 - x) * y * (1 - y)


def _bubble_grad(p):
    x, y = p[..., 0], p[..., 1]
    return np.stack([(1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y)], axis=-1)


def _sine(p):
    return np.sin(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1])


def _sine_grad(p):
    x, y = np.pi * p[..., 0], np.pi * p[..., 1]
    return np.pi * np.stack([np.cos(x) * np.sin(y), np.sin(x) * np.cos(y)], axis=-1)


def _singular(center, a):
    c = np.asarray(center, dtype=float)

    def value(p):
        r = np.linalg.norm(p - c, axis=-1)
        return r**a * _bubble(p)

    def gradient(p):
        d = p - c
        r = np.linalg.norm(d, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        radial = np.where(r > 0, a * safe ** (a - 2), 0.0)[..., None] * d * _bubble(p)[..., None]
        return radial + (r**a)[..., None] * _bubble_grad(p)

    return value, gradient


def _osc(p):
    x, y = p[..., 0], p[..., 1]
    return np.sin(8 * np.pi * x) * np.sin(8 * np.pi * y) * _bubble(p)


def _osc_grad(p):
    x, y = p[..., 0], p[..., 1]
    s = np.sin(8 * np.pi * x) * np.sin(8 * np.pi * y)
    ds = 8 * np.pi * np.stack(
        [np.cos(8 * np.pi * x) * np.sin(8 * np.pi * y), np.sin(8 * np.pi * x) * np.cos(8 * np.pi * y)], axis=-1
    )
    return ds * _bubble(p)[..., None] + s[..., None] * _bubble_grad(p)


def corpus_registry() -> list[AnalyticFunction]:
    """The five registered functions, in a fixed order."""
    s06 = _singular((0.5, 0.5), 0.6)
    s02 = _singular((0.3, 0.7), 0.2)
    return [
        AnalyticFunction("bubble", _bubble, _bubble_grad),
        AnalyticFunction("sine", _sine, _sine_grad),
        AnalyticFunction("sing06", *s06),
        AnalyticFunction("sing02", *s02),
        AnalyticFunction("osc", _osc, _osc_grad),
    ]


CORPUS_NAMES = tuple(f.name for f in corpus_registry())


def get_function(name: str) -> AnalyticFunction:
    for f in corpus_registry():
        if f.name == name:
            return f
    raise KeyError(f"unknown corpus function {name!r}; valid names: {', '.join(CORPUS_NAMES)}")
