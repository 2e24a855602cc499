"""Closed-form scalar profiles of the density, e.g. ``"0.1 / rho"``.

Expressions are parsed with :mod:`ast` and only arithmetic, numeric
literals, the variable ``rho``, the constants ``pi`` and ``e`` and a fixed
set of numpy functions are admitted.  Nothing is passed to ``eval``.
"""

from __future__ import annotations

import ast
import math
import operator

import numpy as np

from .errors import ConfigurationError

_FUNCTIONS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "minimum": np.minimum,
    "maximum": np.maximum,
}
_CONSTANTS = {"pi": math.pi, "e": math.e}
_BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def _build(node, text):
    if isinstance(node, ast.Expression):
        return _build(node.body, text)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda rho: value
    if isinstance(node, ast.Name):
        if node.id == "rho":
            return lambda rho: rho
        if node.id in _CONSTANTS:
            value = _CONSTANTS[node.id]
            return lambda rho: value
        raise ConfigurationError(f"unknown name {node.id!r} in expression {text!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
        op = _BINARY[type(node.op)]
        left, right = _build(node.left, text), _build(node.right, text)
        return lambda rho: op(left(rho), right(rho))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op = _UNARY[type(node.op)]
        inner = _build(node.operand, text)
        return lambda rho: op(inner(rho))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        fn = _FUNCTIONS.get(node.func.id)
        if fn is None:
            raise ConfigurationError(f"unknown function {node.func.id!r} in expression {text!r}")
        args = [_build(a, text) for a in node.args]
        return lambda rho: fn(*(a(rho) for a in args))
    raise ConfigurationError(f"unsupported syntax {type(node).__name__} in expression {text!r}")


class Profile:
    """A vectorized function of ρ built from a number, a string or a callable."""

    def __init__(self, source):
        self.source = source
        if callable(source):
            self._fn = source
        elif isinstance(source, (int, float)) and not isinstance(source, bool):
            value = float(source)
            self._fn = lambda rho: value
        elif isinstance(source, str):
            try:
                tree = ast.parse(source.strip(), mode="eval")
            except SyntaxError as exc:
                raise ConfigurationError(f"cannot parse expression {source!r}: {exc.msg}") from None
            self._fn = _build(tree, source)
        else:
            raise ConfigurationError(f"profile must be a number or an expression, got {source!r}")

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(self._fn(rho), dtype=float), rho.shape)
        return out.copy()

    def check(self, rho_values) -> None:
        """Raise ConfigurationError unless finite on the given densities."""
        values = self(rho_values)
        if not np.all(np.isfinite(values)):
            raise ConfigurationError(f"profile {self.source!r} is not finite on the density range")

    def __repr__(self):
        return f"Profile({self.source!r})"
