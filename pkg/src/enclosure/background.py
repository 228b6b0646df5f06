"""Smooth background conductivity gamma0 = 1 + (compactly supported bump)."""
from __future__ import annotations

import ast
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy

from .errors import ConfigError

_ALLOWED_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Constant, ast.Load,
                  ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)
_ALLOWED_NAMES = {"x", "y", "exp"}
_X, _Y = sympy.symbols("x y", real=True)


def _check_expression(text: str) -> None:
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse background expression {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(f"background expression uses unsupported syntax {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in _ALLOWED_NAMES:
            raise ConfigError(f"background expression uses unknown name {node.id!r}")
        if isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name) and node.func.id == "exp") or len(node.args) != 1 or node.keywords:
                raise ConfigError("only exp(<expr>) calls are allowed in background expressions")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError("only numeric constants are allowed in background expressions")


@dataclass(frozen=True)
class Background:
    """gamma0(x, y): the expression inside `box`, exactly 1 outside.

    `expression` None means gamma0 == 1. The expression must equal 1 (to the
    intended smoothness) on the edge of the box; this is checked numerically.
    """

    expression: str | None = None
    box: tuple[float, float, float, float] | None = None  # x_min, x_max, y_min, y_max

    def __post_init__(self):
        if self.expression is None:
            return
        _check_expression(self.expression)
        if self.box is None:
            raise ConfigError("a non-constant background needs a support box")
        x0, x1, y0, y1 = self.box
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("background support box has nonpositive extent")
        # edge continuity check
        t = np.linspace(0.0, 1.0, 33)
        ex = np.concatenate([x0 + (x1 - x0) * t, x0 + (x1 - x0) * t, np.full(33, x0), np.full(33, x1)])
        ey = np.concatenate([np.full(33, y0), np.full(33, y1), y0 + (y1 - y0) * t, y0 + (y1 - y0) * t])
        g = self._inside_fn(ex, ey)
        if np.max(np.abs(g - 1.0)) > 1e-8:
            raise ConfigError("background expression must equal 1 on the edge of its support box")

    @property
    def is_constant(self) -> bool:
        return self.expression is None

    @cached_property
    def _sym(self):
        return sympy.sympify(self.expression, locals={"x": _X, "y": _Y, "exp": sympy.exp})

    @cached_property
    def _inside_fn(self):
        return sympy.lambdify((_X, _Y), self._sym, modules="numpy")

    @cached_property
    def _b_fn(self):
        s = sympy.sqrt(self._sym)
        b = (sympy.diff(s, _X, 2) + sympy.diff(s, _Y, 2)) / s
        return sympy.lambdify((_X, _Y), b, modules="numpy")

    def _in_box(self, x, y):
        x0, x1, y0, y1 = self.box
        return (x > x0) & (x < x1) & (y > y0) & (y < y1)

    def _piecewise(self, fn, x, y, outside):
        x, y = np.broadcast_arrays(np.asarray(x), np.asarray(y))
        dtype = np.result_type(x.dtype, np.float64)
        out = np.full(x.shape, outside, dtype=dtype)
        m = self._in_box(x, y)
        if np.any(m):
            out[m] = np.broadcast_to(fn(x[m], y[m]), x[m].shape)
        return out

    def gamma0(self, x, y) -> np.ndarray:
        if self.is_constant:
            x, y = np.broadcast_arrays(np.asarray(x), np.asarray(y))
            return np.ones(x.shape, dtype=np.result_type(x.dtype, np.float64))
        g = self._piecewise(self._inside_fn, x, y, 1.0)
        if not np.all(g > 0):
            raise ConfigError("background conductivity must be positive everywhere")
        return g

    def potential(self, x, y) -> np.ndarray:
        """b = Laplacian(sqrt(gamma0)) / sqrt(gamma0), zero outside the box."""
        if self.is_constant:
            return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return self._piecewise(self._b_fn, x, y, 0.0)

    def inside_margin(self, bounds, margin: float) -> bool:
        """True when the support box lies inside `bounds` with the given margin."""
        if self.is_constant:
            return True
        x0, x1, y0, y1 = self.box
        X0, X1, Y0, Y1 = bounds
        return x0 >= X0 + margin and x1 <= X1 - margin and y0 >= Y0 + margin and y1 <= Y1 - margin


def bump_background(center=(-0.4, 0.4), half_width: float = 0.4, amplitude: float = 0.5,
                    width2: float = 0.05) -> Background:
    """1 + amplitude * exp(-|x-c|^2/width2) * (1-X^2)^3 (1-Y^2)^3 on a square box."""
    cx, cy = center
    hw = half_width
    X = f"((x - ({cx!r}))/{hw!r})"
    Y = f"((y - ({cy!r}))/{hw!r})"
    expr = (f"1 + {amplitude!r}*exp(-((x - ({cx!r}))**2 + (y - ({cy!r}))**2)/{width2!r})"
            f"*(1 - {X}**2)**3*(1 - {Y}**2)**3")
    return Background(expr, (cx - hw, cx + hw, cy - hw, cy + hw))
