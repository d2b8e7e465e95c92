"""Initial conditions for the unit-square experiments.

Smooth presets are written as sympy expressions so that the gradient,
Laplacian and gradient of the Laplacian (needed by the Ritz initialization)
come from exact differentiation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import sympy

X, Y = sympy.symbols("x y", real=True)


@dataclass(frozen=True)
class InitialCondition:
    name: str
    value: Callable
    grad: Optional[Callable] = None
    laplacian: Optional[Callable] = None
    grad_laplacian: Optional[Callable] = None

    @property
    def smooth(self) -> bool:
        return self.grad is not None


def _vectorize(expr):
    f = sympy.lambdify((X, Y), expr, "numpy")

    def call(x, y):
        return np.broadcast_to(np.asarray(f(x, y), dtype=float), np.broadcast(x, y).shape)

    return call


def _vectorize_pair(exprs):
    fx, fy = (_vectorize(e) for e in exprs)
    return lambda x, y: (fx(x, y), fy(x, y))


def from_expression(name: str, expr) -> InitialCondition:
    grad = [sympy.diff(expr, X), sympy.diff(expr, Y)]
    lap = sympy.diff(expr, X, 2) + sympy.diff(expr, Y, 2)
    grad_lap = [sympy.diff(lap, X), sympy.diff(lap, Y)]
    return InitialCondition(
        name, _vectorize(expr), _vectorize_pair(grad), _vectorize(lap), _vectorize_pair(grad_lap)
    )


def cosine() -> InitialCondition:
    """``0.5 (1 - cos 4 pi x)(1 - cos 2 pi y) - 1``."""
    pi = sympy.pi
    expr = sympy.Rational(1, 2) * (1 - sympy.cos(4 * pi * X)) * (1 - sympy.cos(2 * pi * Y)) - 1
    return from_expression("cosine", expr)


def oval(eps: float) -> InitialCondition:
    """Elongated droplet ``-1.01 tanh(g / (2 sqrt(eps)))``.

    ``g = (x - 0.5)^2 / 0.075 + (y - 0.5)^2 / 0.05 - 1``.
    """
    half = sympy.Rational(1, 2)
    g = (X - half) ** 2 / sympy.Float(0.075) + (Y - half) ** 2 / sympy.Float(0.05) - 1
    expr = sympy.Float(-1.01) * sympy.tanh(g / (2 * sympy.sqrt(sympy.Float(eps))))
    return from_expression("oval", expr)


CROSS_LINES = (0.3, 0.4, 0.6, 0.7)


def _in_cross(x, y):
    lo, a, b, hi = CROSS_LINES
    horizontal = (x >= lo) & (x <= hi) & (y >= a) & (y <= b)
    vertical = (x >= a) & (x <= b) & (y >= lo) & (y <= hi)
    return horizontal | vertical


def cross() -> InitialCondition:
    """+1 inside the plus-shaped cross (boundary included), -1 outside."""

    def value(x, y):
        return np.where(_in_cross(np.asarray(x), np.asarray(y)), 1.0, -1.0)

    return InitialCondition("cross", value)


def constant(c: float) -> InitialCondition:
    return from_expression(f"constant:{c}", sympy.Float(c))


def get_preset(name: str, eps: float) -> InitialCondition:
    """Look up ``cosine``, ``oval``, ``cross`` or ``constant:<value>``."""
    key = name.strip().lower()
    if key == "cosine":
        return cosine()
    if key == "oval":
        return oval(eps)
    if key == "cross":
        return cross()
    if key.startswith("constant:"):
        try:
            value = float(key.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad constant preset {name!r}") from None
        return constant(value)
    raise ValueError(f"unknown preset {name!r}")
